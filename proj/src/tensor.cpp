#include "clclsa/tensor.hpp"

#include "clclsa/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace clclsa {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

ConstMap as_eigen(const Tensor& t) {
    return ConstMap(t.values().data(), static_cast<Eigen::Index>(t.rows()),
                    static_cast<Eigen::Index>(t.cols()));
}

MutMap as_eigen(Tensor& t) {
    return MutMap(t.values().data(), static_cast<Eigen::Index>(t.rows()),
                  static_cast<Eigen::Index>(t.cols()));
}

[[noreturn]] void shape_mismatch(const char* op, const Tensor& a, const Tensor& b) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + a.shape_str() + " and " +
                     b.shape_str());
}

} // namespace

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
    if (data_.size() != rows * cols) {
        throw ShapeError("Tensor: " + std::to_string(data_.size()) + " values do not fill " +
                         std::to_string(rows) + "x" + std::to_string(cols));
    }
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> values;
    values.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw ShapeError("Tensor::from_rows: ragged rows");
        values.insert(values.end(), row.begin(), row.end());
    }
    return Tensor(r, c, std::move(values));
}

Tensor Tensor::identity(std::size_t n) {
    Tensor t(n, n);
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
}

double Tensor::item() const {
    if (rows_ != 1 || cols_ != 1) throw ShapeError("Tensor::item on " + shape_str());
    return data_[0];
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << '[' << rows_ << 'x' << cols_ << ']';
    return os.str();
}

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b)) shape_mismatch(what, a, b);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) shape_mismatch("matmul", a, b);
    Tensor out(a.rows(), b.cols());
    if (out.empty()) return out;
    if (a.cols() == 0) return out;
    as_eigen(out).noalias() = as_eigen(a) * as_eigen(b);
    return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows()) shape_mismatch("matmul_tn", a, b);
    Tensor out(a.cols(), b.cols());
    if (out.empty() || a.rows() == 0) return out;
    as_eigen(out).noalias() = as_eigen(a).transpose() * as_eigen(b);
    return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.cols()) shape_mismatch("matmul_nt", a, b);
    Tensor out(a.rows(), b.rows());
    if (out.empty() || a.cols() == 0) return out;
    as_eigen(out).noalias() = as_eigen(a) * as_eigen(b).transpose();
    return out;
}

Tensor transpose(const Tensor& a) {
    Tensor out(a.cols(), a.rows());
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < a.cols(); ++c) out(c, r) = a(r, c);
    return out;
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows) {
    Tensor out(rows.size(), a.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= a.rows()) {
            throw ShapeError("gather_rows: row " + std::to_string(rows[i]) + " out of range for " +
                             a.shape_str());
        }
        std::copy_n(a.row(rows[i]).begin(), a.cols(), out.row(i).begin());
    }
    return out;
}

Tensor select_cols(const Tensor& a, std::size_t first, std::size_t count) {
    if (first + count > a.cols()) {
        throw ShapeError("select_cols: columns [" + std::to_string(first) + ", " +
                         std::to_string(first + count) + ") out of range for " + a.shape_str());
    }
    Tensor out(a.rows(), count);
    for (std::size_t r = 0; r < a.rows(); ++r)
        std::copy_n(a.row(r).begin() + static_cast<std::ptrdiff_t>(first), count,
                    out.row(r).begin());
    return out;
}

Tensor concat_cols(std::span<const Tensor> parts) {
    if (parts.empty()) return {};
    const std::size_t n = parts.front().rows();
    std::size_t width = 0;
    for (const auto& p : parts) {
        if (p.rows() != n) shape_mismatch("concat_cols", parts.front(), p);
        width += p.cols();
    }
    Tensor out(n, width);
    for (std::size_t r = 0; r < n; ++r) {
        auto dst = out.row(r).begin();
        for (const auto& p : parts) dst = std::copy(p.row(r).begin(), p.row(r).end(), dst);
    }
    return out;
}

double sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.values()) s += v;
    return s;
}

double max_abs(const Tensor& a) {
    double m = 0.0;
    for (double v : a.values()) m = std::max(m, std::abs(v));
    return m;
}

} // namespace clclsa
