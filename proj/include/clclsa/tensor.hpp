#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace clclsa {

/// Dense row-major matrix of doubles. Every quantity in the model is 2-D:
/// vectors are 1×n or n×1 and scalars are 1×1.
class Tensor {
public:
    Tensor() = default;
    Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);
    Tensor(std::size_t rows, std::size_t cols, std::vector<double> values);

    static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor scalar(double value) { return Tensor(1, 1, value); }
    static Tensor identity(std::size_t n);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    /// Value of a 1×1 tensor.
    double item() const;

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    bool same_shape(const Tensor& other) const noexcept {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }
    std::string shape_str() const;
    bool all_finite() const noexcept;

    void fill(double value);

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Kernels. Shape errors name both operands.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_tn(const Tensor& a, const Tensor& b); ///< aᵀ·b
Tensor matmul_nt(const Tensor& a, const Tensor& b); ///< a·bᵀ
Tensor transpose(const Tensor& a);
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows);
Tensor select_cols(const Tensor& a, std::size_t first, std::size_t count);
Tensor concat_cols(std::span<const Tensor> parts);
double sum(const Tensor& a);
double max_abs(const Tensor& a);

void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

} // namespace clclsa
