#pragma once

#include "clclsa/autodiff.hpp"
#include "clclsa/tensor.hpp"

#include <cstdint>
#include <vector>

namespace clclsa {

struct AdamOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with bias correction. Moment buffers mirror the ParameterSet layout.
class Adam {
public:
    explicit Adam(const ParameterSet& params, AdamOptions options = {});

    /// One update of every parameter. Throws InvalidArgument for lr <= 0 and
    /// ShapeError when a gradient does not match its parameter.
    void step(ParameterSet& params, const std::vector<Tensor>& grads, double lr);

    std::uint64_t steps() const noexcept { return t_; }
    const AdamOptions& options() const noexcept { return options_; }
    const std::vector<Tensor>& first_moment() const noexcept { return m_; }
    const std::vector<Tensor>& second_moment() const noexcept { return v_; }

private:
    AdamOptions options_;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
    std::uint64_t t_ = 0;
};

} // namespace clclsa
