#include "clclsa/autodiff.hpp"

#include "clclsa/errors.hpp"

#include <algorithm>
#include <cmath>

namespace clclsa {

// ---------------------------------------------------------------------------
// ParameterSet

std::size_t ParameterSet::add(std::string name, Tensor value) {
    if (lookup_.contains(name)) throw InvalidArgument("duplicate parameter name: " + name);
    const std::size_t idx = values_.size();
    lookup_.emplace(name, idx);
    names_.push_back(std::move(name));
    values_.push_back(std::move(value));
    return idx;
}

std::optional<std::size_t> ParameterSet::find(std::string_view name) const {
    auto it = lookup_.find(name);
    if (it == lookup_.end()) return std::nullopt;
    return it->second;
}

std::size_t ParameterSet::index(std::string_view name) const {
    auto idx = find(name);
    if (!idx) throw InvalidArgument("unknown parameter: " + std::string(name));
    return *idx;
}

std::vector<Tensor> ParameterSet::zeros_like() const {
    std::vector<Tensor> out;
    out.reserve(values_.size());
    for (const auto& v : values_) out.emplace_back(v.rows(), v.cols());
    return out;
}

std::size_t ParameterSet::scalar_count() const {
    std::size_t n = 0;
    for (const auto& v : values_) n += v.size();
    return n;
}

// ---------------------------------------------------------------------------
// Graph

Var Graph::constant(Tensor value) {
    Node n;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

Var Graph::parameter(const ParameterSet& params, std::size_t index) {
    const auto key = std::make_pair(&params, index);
    if (auto it = param_nodes_.find(key); it != param_nodes_.end()) return Var{it->second};
    Node n;
    n.value = params.value(index);
    n.requires_grad = true;
    n.owner = &params;
    n.param_index = index;
    nodes_.push_back(std::move(n));
    param_nodes_.emplace(key, nodes_.size() - 1);
    return Var{nodes_.size() - 1};
}

Tensor Graph::grad(Var v) const {
    const Node& n = nodes_.at(v.id);
    if (n.has_grad) return n.grad;
    return Tensor(n.value.rows(), n.value.cols());
}

Var Graph::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
    return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                  std::move(fn));
}

Var Graph::record(Tensor value, std::span<const Var> inputs, BackwardFn fn) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = std::any_of(inputs.begin(), inputs.end(),
                                  [&](Var v) { return nodes_.at(v.id).requires_grad; });
    if (n.requires_grad) n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

Tensor& Graph::grad_buffer(Var target) {
    Node& n = nodes_.at(target.id);
    if (!n.has_grad) {
        n.grad = Tensor(n.value.rows(), n.value.cols());
        n.has_grad = true;
    }
    return n.grad;
}

void Graph::accumulate(Var target, const Tensor& g) {
    Node& n = nodes_.at(target.id);
    if (!n.requires_grad) return;
    require_same_shape(n.value, g, "gradient accumulation");
    if (!n.has_grad) {
        n.grad = g;
        n.has_grad = true;
        return;
    }
    auto dst = n.grad.values();
    auto src = g.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void Graph::backward(Var loss) {
    Node& root = nodes_.at(loss.id);
    if (root.value.rows() != 1 || root.value.cols() != 1) {
        throw ContractError("backward: loss must be a 1x1 scalar, got " + root.value.shape_str());
    }
    for (auto& n : nodes_) {
        n.has_grad = false;
        n.grad = Tensor();
    }
    root.grad = Tensor::scalar(1.0);
    root.has_grad = true;
    for (std::size_t id = loss.id + 1; id-- > 0;) {
        Node& n = nodes_[id];
        if (n.has_grad && n.backward) n.backward(*this, id);
    }
}

std::vector<Tensor> Graph::parameter_gradients(const ParameterSet& params) const {
    auto grads = params.zeros_like();
    for (const auto& [key, id] : param_nodes_) {
        if (key.first != &params) continue;
        const Node& n = nodes_[id];
        if (n.has_grad) grads[key.second] = n.grad;
    }
    return grads;
}

// ---------------------------------------------------------------------------
// Value kernels

Tensor sigmoid(const Tensor& x) {
    Tensor y(x.rows(), x.cols());
    auto in = x.values();
    auto out = y.values();
    for (std::size_t i = 0; i < in.size(); ++i) {
        // Branch keeps exp() from overflowing for large |x|.
        const double v = in[i];
        if (v >= 0) {
            out[i] = 1.0 / (1.0 + std::exp(-v));
        } else {
            const double e = std::exp(v);
            out[i] = e / (1.0 + e);
        }
    }
    return y;
}

Tensor relu(const Tensor& x) {
    Tensor y(x.rows(), x.cols());
    auto in = x.values();
    auto out = y.values();
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
    return y;
}

Tensor softmax_rows(const Tensor& x) {
    if (x.cols() == 0) throw ShapeError("softmax_rows: zero columns");
    Tensor y(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        auto in = x.row(r);
        auto out = y.row(r);
        const double mx = *std::max_element(in.begin(), in.end());
        double z = 0.0;
        for (std::size_t c = 0; c < in.size(); ++c) {
            out[c] = std::exp(in[c] - mx);
            z += out[c];
        }
        for (double& v : out) v /= z;
    }
    return y;
}

Tensor init_weight(std::size_t fan_in, std::size_t fan_out, RngStream& rng) {
    const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor w(fan_in, fan_out);
    for (double& v : w.values()) v = rng.uniform(-s, s);
    return w;
}

Tensor init_bias(std::size_t width) { return Tensor(1, width); }

// ---------------------------------------------------------------------------
// Primitives

Var matmul(Graph& g, Var a, Var b) {
    return g.record(matmul(g.value(a), g.value(b)), {a, b}, [a, b](Graph& gr, std::size_t self) {
        const Tensor& up = gr.upstream(self);
        if (gr.requires_grad(a)) gr.accumulate(a, matmul_nt(up, gr.value(b)));
        if (gr.requires_grad(b)) gr.accumulate(b, matmul_tn(gr.value(a), up));
    });
}

Var affine(Graph& g, Var x, Var w, Var bias) {
    const Tensor& xv = g.value(x);
    const Tensor& wv = g.value(w);
    const Tensor& bv = g.value(bias);
    if (xv.cols() != wv.rows()) {
        throw ShapeError("affine: input " + xv.shape_str() + " does not match weight " +
                         wv.shape_str());
    }
    if (bv.rows() != 1 || bv.cols() != wv.cols()) {
        throw ShapeError("affine: bias " + bv.shape_str() + " does not match weight " +
                         wv.shape_str());
    }
    Tensor out = matmul(xv, wv);
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) row[c] += bv[c];
    }
    return g.record(std::move(out), {x, w, bias}, [x, w, bias](Graph& gr, std::size_t self) {
        const Tensor& up = gr.upstream(self);
        if (gr.requires_grad(x)) gr.accumulate(x, matmul_nt(up, gr.value(w)));
        if (gr.requires_grad(w)) gr.accumulate(w, matmul_tn(gr.value(x), up));
        if (gr.requires_grad(bias)) {
            Tensor db(1, up.cols());
            for (std::size_t r = 0; r < up.rows(); ++r)
                for (std::size_t c = 0; c < up.cols(); ++c) db[c] += up(r, c);
            gr.accumulate(bias, db);
        }
    });
}

Var add(Graph& g, Var a, Var b) {
    const Tensor& av = g.value(a);
    const Tensor& bv = g.value(b);
    require_same_shape(av, bv, "add");
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    return g.record(std::move(out), {a, b}, [a, b](Graph& gr, std::size_t self) {
        gr.accumulate(a, gr.upstream(self));
        gr.accumulate(b, gr.upstream(self));
    });
}

Var sub(Graph& g, Var a, Var b) {
    const Tensor& av = g.value(a);
    const Tensor& bv = g.value(b);
    require_same_shape(av, bv, "sub");
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    return g.record(std::move(out), {a, b}, [a, b](Graph& gr, std::size_t self) {
        gr.accumulate(a, gr.upstream(self));
        if (gr.requires_grad(b)) {
            Tensor neg = gr.upstream(self);
            for (double& v : neg.values()) v = -v;
            gr.accumulate(b, neg);
        }
    });
}

Var mul(Graph& g, Var a, Var b) {
    const Tensor& av = g.value(a);
    const Tensor& bv = g.value(b);
    require_same_shape(av, bv, "mul");
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    return g.record(std::move(out), {a, b}, [a, b](Graph& gr, std::size_t self) {
        const Tensor& up = gr.upstream(self);
        if (gr.requires_grad(a)) {
            Tensor da = up;
            const Tensor& bv2 = gr.value(b);
            for (std::size_t i = 0; i < da.size(); ++i) da[i] *= bv2[i];
            gr.accumulate(a, da);
        }
        if (gr.requires_grad(b)) {
            Tensor db = up;
            const Tensor& av2 = gr.value(a);
            for (std::size_t i = 0; i < db.size(); ++i) db[i] *= av2[i];
            gr.accumulate(b, db);
        }
    });
}

Var scale(Graph& g, Var a, double factor) {
    Tensor out = g.value(a);
    for (double& v : out.values()) v *= factor;
    return g.record(std::move(out), {a}, [a, factor](Graph& gr, std::size_t self) {
        Tensor da = gr.upstream(self);
        for (double& v : da.values()) v *= factor;
        gr.accumulate(a, da);
    });
}

Var square(Graph& g, Var a) {
    Tensor out = g.value(a);
    for (double& v : out.values()) v *= v;
    return g.record(std::move(out), {a}, [a](Graph& gr, std::size_t self) {
        Tensor da = gr.upstream(self);
        const Tensor& av = gr.value(a);
        for (std::size_t i = 0; i < da.size(); ++i) da[i] *= 2.0 * av[i];
        gr.accumulate(a, da);
    });
}

Var sigmoid(Graph& g, Var x) {
    return g.record(sigmoid(g.value(x)), {x}, [x](Graph& gr, std::size_t self) {
        Tensor dx = gr.upstream(self);
        const Tensor& y = gr.value(Var{self});
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= y[i] * (1.0 - y[i]);
        gr.accumulate(x, dx);
    });
}

Var relu(Graph& g, Var x) {
    return g.record(relu(g.value(x)), {x}, [x](Graph& gr, std::size_t self) {
        Tensor dx = gr.upstream(self);
        const Tensor& xv = gr.value(x);
        for (std::size_t i = 0; i < dx.size(); ++i)
            if (!(xv[i] > 0.0)) dx[i] = 0.0;
        gr.accumulate(x, dx);
    });
}

Var softmax_rows(Graph& g, Var x) {
    return g.record(softmax_rows(g.value(x)), {x}, [x](Graph& gr, std::size_t self) {
        const Tensor& up = gr.upstream(self);
        const Tensor& y = gr.value(Var{self});
        Tensor dx(y.rows(), y.cols());
        for (std::size_t r = 0; r < y.rows(); ++r) {
            double dot = 0.0;
            for (std::size_t c = 0; c < y.cols(); ++c) dot += up(r, c) * y(r, c);
            for (std::size_t c = 0; c < y.cols(); ++c) dx(r, c) = y(r, c) * (up(r, c) - dot);
        }
        gr.accumulate(x, dx);
    });
}

Var dropout(Graph& g, Var x, double p, RngStream& rng) {
    if (!(p >= 0.0 && p < 1.0)) {
        throw InvalidArgument("dropout: probability must be in [0, 1), got " + std::to_string(p));
    }
    if (!g.training() || p == 0.0) return x;
    const Tensor& xv = g.value(x);
    const double keep_scale = 1.0 / (1.0 - p);
    Tensor mask(xv.rows(), xv.cols());
    for (double& m : mask.values()) m = rng.uniform() < p ? 0.0 : keep_scale;
    Tensor out = xv;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
    return g.record(std::move(out), {x}, [x, mask = std::move(mask)](Graph& gr, std::size_t self) {
        Tensor dx = gr.upstream(self);
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= mask[i];
        gr.accumulate(x, dx);
    });
}

BatchNormState::BatchNormState(std::size_t width, double momentum_, double eps_)
    : running_mean(1, width, 0.0), running_var(1, width, 1.0), momentum(momentum_), eps(eps_) {}

Var batch_norm(Graph& g, Var x, Var gamma, Var beta, BatchNormState& state) {
    return batch_norm(g, x, gamma, beta, state, g.training());
}

Var batch_norm(Graph& g, Var x, Var gamma, Var beta, BatchNormState& state,
               bool batch_statistics) {
    const Tensor& xv = g.value(x);
    const std::size_t n = xv.rows();
    const std::size_t d = xv.cols();
    if (g.value(gamma).cols() != d || g.value(beta).cols() != d ||
        state.running_mean.cols() != d) {
        throw ShapeError("batch_norm: input " + xv.shape_str() + " does not match gamma " +
                         g.value(gamma).shape_str());
    }

    Tensor mean(1, d);
    Tensor inv_std(1, d);
    if (batch_statistics) {
        if (n < 2) {
            throw ContractError("batch_norm: training needs a batch of at least 2 rows, got " +
                                std::to_string(n));
        }
        Tensor var(1, d);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < d; ++c) mean[c] += xv(r, c);
        for (std::size_t c = 0; c < d; ++c) mean[c] /= static_cast<double>(n);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < d; ++c) {
                const double dev = xv(r, c) - mean[c];
                var[c] += dev * dev;
            }
        for (std::size_t c = 0; c < d; ++c) {
            var[c] /= static_cast<double>(n);
            inv_std[c] = 1.0 / std::sqrt(var[c] + state.eps);
            if (!g.training()) continue;
            state.running_mean[c] =
                (1.0 - state.momentum) * state.running_mean[c] + state.momentum * mean[c];
            state.running_var[c] =
                (1.0 - state.momentum) * state.running_var[c] + state.momentum * var[c];
        }
    } else {
        mean = state.running_mean;
        for (std::size_t c = 0; c < d; ++c)
            inv_std[c] = 1.0 / std::sqrt(state.running_var[c] + state.eps);
    }

    Tensor normalized(n, d);
    Tensor out(n, d);
    const Tensor& gv = g.value(gamma);
    const Tensor& bv = g.value(beta);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) {
            normalized(r, c) = (xv(r, c) - mean[c]) * inv_std[c];
            out(r, c) = gv[c] * normalized(r, c) + bv[c];
        }

    const bool batch_stats = batch_statistics;
    return g.record(std::move(out), {x, gamma, beta},
                    [x, gamma, beta, batch_stats, normalized = std::move(normalized),
                     inv_std = std::move(inv_std)](Graph& gr, std::size_t self) {
        const Tensor& up = gr.upstream(self);
        const std::size_t rows = up.rows();
        const std::size_t cols = up.cols();
        Tensor dgamma(1, cols);
        Tensor dbeta(1, cols);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) {
                dgamma[c] += up(r, c) * normalized(r, c);
                dbeta[c] += up(r, c);
            }
        if (gr.requires_grad(x)) {
            const Tensor& gv2 = gr.value(gamma);
            Tensor dx(rows, cols);
            if (batch_stats) {
                const double inv_n = 1.0 / static_cast<double>(rows);
                for (std::size_t c = 0; c < cols; ++c) {
                    // dxhat = up * gamma; sums below use that form.
                    const double sum_dxhat = dbeta[c] * gv2[c];
                    const double sum_dxhat_xhat = dgamma[c] * gv2[c];
                    for (std::size_t r = 0; r < rows; ++r) {
                        const double dxhat = up(r, c) * gv2[c];
                        dx(r, c) = inv_n * inv_std[c] *
                                   (static_cast<double>(rows) * dxhat - sum_dxhat -
                                    normalized(r, c) * sum_dxhat_xhat);
                    }
                }
            } else {
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t c = 0; c < cols; ++c)
                        dx(r, c) = up(r, c) * gv2[c] * inv_std[c];
            }
            gr.accumulate(x, dx);
        }
        gr.accumulate(gamma, dgamma);
        gr.accumulate(beta, dbeta);
    });
}

Var scale_rows(Graph& g, Var x, Var s) {
    const Tensor& xv = g.value(x);
    const Tensor& sv = g.value(s);
    if (sv.cols() != 1 || sv.rows() != xv.rows()) {
        throw ShapeError("scale_rows: scale " + sv.shape_str() + " does not match input " +
                         xv.shape_str());
    }
    Tensor out = xv;
    for (std::size_t r = 0; r < out.rows(); ++r)
        for (double& v : out.row(r)) v *= sv[r];
    return g.record(std::move(out), {x, s}, [x, s](Graph& gr, std::size_t self) {
        const Tensor& up = gr.upstream(self);
        const Tensor& xv2 = gr.value(x);
        const Tensor& sv2 = gr.value(s);
        if (gr.requires_grad(x)) {
            Tensor dx = up;
            for (std::size_t r = 0; r < dx.rows(); ++r)
                for (double& v : dx.row(r)) v *= sv2[r];
            gr.accumulate(x, dx);
        }
        if (gr.requires_grad(s)) {
            Tensor ds(sv2.rows(), 1);
            for (std::size_t r = 0; r < up.rows(); ++r)
                for (std::size_t c = 0; c < up.cols(); ++c) ds[r] += up(r, c) * xv2(r, c);
            gr.accumulate(s, ds);
        }
    });
}

Var concat_cols(Graph& g, std::span<const Var> parts) {
    std::vector<Tensor> values;
    values.reserve(parts.size());
    for (Var v : parts) values.push_back(g.value(v));
    std::vector<Var> inputs(parts.begin(), parts.end());
    return g.record(concat_cols(values), parts, [inputs](Graph& gr, std::size_t self) {
        const Tensor& up = gr.upstream(self);
        std::size_t offset = 0;
        for (Var v : inputs) {
            const std::size_t w = gr.value(v).cols();
            if (gr.requires_grad(v)) gr.accumulate(v, select_cols(up, offset, w));
            offset += w;
        }
    });
}

Var gather_rows(Graph& g, Var x, std::span<const std::size_t> rows) {
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    Tensor out = gather_rows(g.value(x), idx);
    return g.record(std::move(out), {x}, [x, idx = std::move(idx)](Graph& gr, std::size_t self) {
        const Tensor& up = gr.upstream(self);
        Tensor& dx = gr.grad_buffer(x);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            auto dst = dx.row(idx[i]);
            auto src = up.row(i);
            for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
        }
    });
}

Var assemble_rows(Graph& g, std::size_t rows, std::size_t cols,
                  std::span<const RowSource> sources) {
    Tensor out(rows, cols);
    std::vector<Var> inputs;
    for (const auto& src : sources) {
        const Tensor& sv = g.value(src.source);
        if (sv.cols() != cols) {
            throw ShapeError("assemble_rows: source " + sv.shape_str() + " has wrong width for " +
                             out.shape_str());
        }
        for (const auto& route : src.routes) {
            if (route.src_row >= sv.rows() || route.dst_row >= rows) {
                throw ShapeError("assemble_rows: route out of range");
            }
            auto dst = out.row(route.dst_row);
            auto s = sv.row(route.src_row);
            for (std::size_t c = 0; c < cols; ++c) dst[c] += route.weight * s[c];
        }
        inputs.push_back(src.source);
    }
    std::vector<RowSource> captured(sources.begin(), sources.end());
    return g.record(std::move(out), inputs, [captured = std::move(captured)](Graph& gr,
                                                                          std::size_t self) {
        const Tensor& up = gr.upstream(self);
        for (const auto& src : captured) {
            if (!gr.requires_grad(src.source)) continue;
            Tensor& ds = gr.grad_buffer(src.source);
            for (const auto& route : src.routes) {
                auto dst = ds.row(route.src_row);
                auto u = up.row(route.dst_row);
                for (std::size_t c = 0; c < u.size(); ++c) dst[c] += route.weight * u[c];
            }
        }
    });
}

Var sum(Graph& g, Var x) {
    return g.record(Tensor::scalar(sum(g.value(x))), {x}, [x](Graph& gr, std::size_t self) {
        const double up = gr.upstream(self).item();
        const Tensor& xv = gr.value(x);
        gr.accumulate(x, Tensor(xv.rows(), xv.cols(), up));
    });
}

Var log_pick(Graph& g, Var probs, std::span<const int> labels, double floor) {
    const Tensor& pv = g.value(probs);
    if (labels.size() != pv.rows()) {
        throw ShapeError("log_pick: " + std::to_string(labels.size()) + " labels for " +
                         pv.shape_str());
    }
    std::vector<int> lab(labels.begin(), labels.end());
    Tensor out(pv.rows(), 1);
    for (std::size_t r = 0; r < pv.rows(); ++r) {
        if (lab[r] < 0 || static_cast<std::size_t>(lab[r]) >= pv.cols()) {
            throw InvalidArgument("log_pick: label " + std::to_string(lab[r]) +
                                  " out of range for " + std::to_string(pv.cols()) + " classes");
        }
        out[r] = std::log(std::max(pv(r, static_cast<std::size_t>(lab[r])), floor));
    }
    return g.record(std::move(out), {probs},
                    [probs, floor, lab = std::move(lab)](Graph& gr, std::size_t self) {
        const Tensor& up = gr.upstream(self);
        const Tensor& pv2 = gr.value(probs);
        Tensor& dp = gr.grad_buffer(probs);
        for (std::size_t r = 0; r < lab.size(); ++r) {
            const double p = pv2(r, static_cast<std::size_t>(lab[r]));
            if (p > floor) dp(r, static_cast<std::size_t>(lab[r])) += up[r] / p;
        }
    });
}

Var weighted_sum(Graph& g, std::span<const Var> terms, std::span<const double> coefficients) {
    if (terms.size() != coefficients.size() || terms.empty()) {
        throw InvalidArgument("weighted_sum: terms and coefficients must be nonempty and aligned");
    }
    double total = 0.0;
    for (std::size_t t = 0; t < terms.size(); ++t) total += coefficients[t] * g.value(terms[t]).item();
    std::vector<Var> ins(terms.begin(), terms.end());
    std::vector<double> coef(coefficients.begin(), coefficients.end());
    return g.record(Tensor::scalar(total), terms,
                    [ins, coef = std::move(coef)](Graph& gr, std::size_t self) {
        const double up = gr.upstream(self).item();
        for (std::size_t t = 0; t < ins.size(); ++t) gr.accumulate(ins[t], Tensor::scalar(coef[t] * up));
    });
}

} // namespace clclsa
