#include "clclsa/losses.hpp"

#include "clclsa/errors.hpp"

#include <algorithm>
#include <cmath>

namespace clclsa {

namespace {

// Total mass of the average outer product of a and b, Σ_j (Σ a_j)(Σ b_j) / N.
// Symmetric in (a, b), so swapping the arguments gives a bit-identical value.
double outer_mass(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.rows(); ++j) {
        double ra = 0.0, rb = 0.0;
        for (double v : a.row(j)) ra += v;
        for (double v : b.row(j)) rb += v;
        s += ra * rb;
    }
    return s / static_cast<double>(a.rows());
}

double xlogx_grad(double x) {
    return std::log(std::max(x, kLogFloor)) + (x > kLogFloor ? 1.0 : 0.0);
}

// Average outer product of the rows of a and b, renormalised to unit mass.
Tensor outer_mean(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows()) {
        throw ShapeError("joint_distribution: " + a.shape_str() + " and " + b.shape_str() +
                         " have different subject counts");
    }
    if (a.rows() == 0) throw InvalidArgument("joint_distribution: empty batch");
    Tensor p(a.cols(), b.cols());
    for (std::size_t j = 0; j < a.rows(); ++j) {
        auto ra = a.row(j);
        auto rb = b.row(j);
        for (std::size_t d = 0; d < ra.size(); ++d)
            for (std::size_t e = 0; e < rb.size(); ++e) p(d, e) += ra[d] * rb[e];
    }
    const double inv_n = 1.0 / static_cast<double>(a.rows());
    for (double& v : p.values()) v *= inv_n;
    const double mass = outer_mass(a, b);
    for (double& v : p.values()) v /= mass;
    return p;
}

struct Marginals {
    std::vector<double> row;
    std::vector<double> col;
};

Marginals marginals(const Tensor& p) {
    Marginals m{std::vector<double>(p.rows(), 0.0), std::vector<double>(p.cols(), 0.0)};
    for (std::size_t d = 0; d < p.rows(); ++d)
        for (std::size_t e = 0; e < p.cols(); ++e) m.row[d] += p(d, e);
    for (std::size_t e = 0; e < p.cols(); ++e)
        for (std::size_t d = 0; d < p.rows(); ++d) m.col[e] += p(d, e);
    return m;
}

void check_distribution(const Tensor& p) {
    for (double v : p.values()) {
        if (!(v >= 0.0)) {
            throw InvalidArgument("contrastive loss: joint distribution has a negative or NaN entry");
        }
    }
    const double mass = sum(p);
    if (std::abs(mass - 1.0) > 1e-9) {
        throw InvalidArgument("contrastive loss: joint distribution sums to " +
                              std::to_string(mass));
    }
}

} // namespace

void LossWeights::validate() const {
    for (double v : {lambda_al, lambda_co, lambda_cl, alpha}) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
            throw InvalidArgument("loss weights and alpha must be finite and non-negative");
        }
    }
}

LossBreakdown total_loss(double l_clf, double l_al, double l_co, double l_cl,
                         const LossWeights& weights) {
    const std::array<std::pair<const char*, double>, 4> parts{
        {{"l_clf", l_clf}, {"l_al", l_al}, {"l_co", l_co}, {"l_cl", l_cl}}};
    for (const auto& [name, value] : parts) {
        if (!std::isfinite(value)) {
            throw NumericError(std::string("non-finite loss term ") + name + " = " +
                               std::to_string(value));
        }
    }
    LossBreakdown b{l_clf, l_al, l_co, l_cl, 0.0};
    b.total = l_clf + weights.lambda_al * l_al + weights.lambda_co * l_co +
              weights.lambda_cl * l_cl;
    return b;
}

// ---------------------------------------------------------------------------

Tensor joint_distribution(const Tensor& zi, const Tensor& zk) {
    if (zi.rows() == 0 || zk.rows() == 0) throw InvalidArgument("joint_distribution: empty batch");
    return outer_mean(softmax_rows(zi), softmax_rows(zk));
}

Var joint_distribution(Graph& g, Var zi, Var zk) {
    if (g.value(zi).rows() == 0) throw InvalidArgument("joint_distribution: empty batch");
    Var a = softmax_rows(g, zi);
    Var b = softmax_rows(g, zk);
    Tensor p = outer_mean(g.value(a), g.value(b));
    return g.record(std::move(p), {a, b}, [a, b](Graph& gr, std::size_t self) {
        const Tensor& up = gr.upstream(self);
        const Tensor& pv = gr.value(Var{self});
        const Tensor& av = gr.value(a);
        const Tensor& bv = gr.value(b);
        // p = q / mass(q) with q = AᵀB / N and mass(q) = 1 up to rounding.
        const double mass = outer_mass(av, bv);
        double dot = 0.0;
        for (std::size_t i = 0; i < up.size(); ++i) dot += up[i] * pv[i];
        Tensor dq(up.rows(), up.cols());
        const double scale_q = 1.0 / (mass * static_cast<double>(av.rows()));
        for (std::size_t i = 0; i < up.size(); ++i) dq[i] = (up[i] - dot) * scale_q;
        if (gr.requires_grad(a)) gr.accumulate(a, matmul_nt(bv, dq));
        if (gr.requires_grad(b)) gr.accumulate(b, matmul(av, dq));
    });
}

double loss_contrastive_pair(const Tensor& p, double alpha) {
    check_distribution(p);
    const Marginals m = marginals(p);
    const double k = alpha + 1.0;
    auto term = [&](std::size_t d, std::size_t e) {
        const double v = p(d, e);
        const double log_marg = std::log(std::max(m.row[d], kLogFloor)) +
                                std::log(std::max(m.col[e], kLogFloor));
        return v * (std::log(std::max(v, kLogFloor)) - k * log_marg);
    };
    double s = 0.0;
    if (p.rows() == p.cols()) {
        for (std::size_t d = 0; d < p.rows(); ++d) s += term(d, d);
        for (std::size_t d = 0; d < p.rows(); ++d)
            for (std::size_t e = d + 1; e < p.cols(); ++e) s += term(d, e) + term(e, d);
    } else {
        for (std::size_t d = 0; d < p.rows(); ++d)
            for (std::size_t e = 0; e < p.cols(); ++e) s += term(d, e);
    }
    return -s;
}

Var loss_contrastive_pair(Graph& g, Var p, double alpha) {
    const double value = loss_contrastive_pair(g.value(p), alpha);
    return g.record(Tensor::scalar(value), {p}, [p, alpha](Graph& gr, std::size_t self) {
        const double up = gr.upstream(self).item();
        const Tensor& pv = gr.value(p);
        const Marginals m = marginals(pv);
        const double k = alpha + 1.0;
        Tensor dp(pv.rows(), pv.cols());
        for (std::size_t d = 0; d < pv.rows(); ++d)
            for (std::size_t e = 0; e < pv.cols(); ++e) {
                dp(d, e) = -up * (xlogx_grad(pv(d, e)) -
                                  k * (xlogx_grad(m.row[d]) + xlogx_grad(m.col[e])));
            }
        gr.accumulate(p, dp);
    });
}

Var loss_contrastive(Graph& g, std::span<const Var> latents, const ObservationMask& mask,
                     double alpha) {
    const std::size_t m = latents.size();
    std::vector<Var> terms;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t k = 0; k < m; ++k) {
            if (i == k) continue;
            const auto rows = mask.jointly_observed(i, k);
            if (rows.size() < 2) continue;
            Var p = joint_distribution(g, gather_rows(g, latents[i], rows),
                                       gather_rows(g, latents[k], rows));
            terms.push_back(loss_contrastive_pair(g, p, alpha));
        }
    }
    if (terms.empty()) return g.constant(Tensor::scalar(0.0));
    const std::vector<double> ones(terms.size(), 1.0);
    return weighted_sum(g, terms, ones);
}

// ---------------------------------------------------------------------------

double loss_classification(const Tensor& probs, std::span<const int> labels,
                           Reduction reduction) {
    Graph g(Mode::Eval);
    return g.value(loss_classification(g, g.constant(probs), labels, reduction)).item();
}

Var loss_classification(Graph& g, Var probs, std::span<const int> labels, Reduction reduction) {
    const std::size_t n = g.value(probs).rows();
    if (n == 0) return g.constant(Tensor::scalar(0.0));
    Var logp = sum(g, log_pick(g, probs, labels, kLogFloor));
    const double factor = reduction == Reduction::Mean ? -1.0 / static_cast<double>(n) : -1.0;
    const std::array<Var, 1> t{logp};
    const std::array<double, 1> c{factor};
    return weighted_sum(g, t, c);
}

std::vector<Tensor> aux_confidence(const Graph& g, const BatchForward& fwd) {
    std::vector<Tensor> out;
    for (const auto& v : fwd.views) {
        const Tensor& probs = g.value(v.aux_probs);
        Tensor confidence(probs.rows(), 1);
        for (std::size_t r = 0; r < probs.rows(); ++r) {
            auto row = probs.row(r);
            confidence[r] = *std::max_element(row.begin(), row.end());
        }
        out.push_back(std::move(confidence));
    }
    return out;
}

Var loss_auxiliary(Graph& g, const BatchForward& fwd, std::span<const int> labels,
                   Reduction reduction, std::span<const Tensor> confidence) {
    if (!confidence.empty() && confidence.size() != fwd.views.size()) {
        throw ShapeError("loss_auxiliary: one confidence column per view expected");
    }
    const std::vector<Tensor> targets =
        confidence.empty() ? aux_confidence(g, fwd)
                           : std::vector<Tensor>(confidence.begin(), confidence.end());
    std::vector<Var> terms;
    std::vector<double> coefs;
    for (std::size_t i = 0; i < fwd.views.size(); ++i) {
        const auto& rows = fwd.completion.observed[i];
        if (rows.empty()) continue;
        const ViewForward& v = fwd.views[i];
        if (targets[i].rows() != rows.size()) {
            throw ShapeError("loss_auxiliary: confidence for view " + std::to_string(i) +
                             " has " + targets[i].shape_str() + " rows");
        }
        std::vector<int> view_labels(rows.size());
        for (std::size_t r = 0; r < rows.size(); ++r) view_labels[r] = labels[rows[r]];
        Var gap = square(g, sub(g, v.view_attention, g.constant(targets[i])));
        const double w = reduction == Reduction::Mean ? 1.0 / static_cast<double>(rows.size()) : 1.0;
        terms.push_back(sum(g, gap));
        coefs.push_back(w);
        terms.push_back(sum(g, log_pick(g, v.aux_probs, view_labels, kLogFloor)));
        coefs.push_back(-w);
    }
    if (terms.empty()) return g.constant(Tensor::scalar(0.0));
    return weighted_sum(g, terms, coefs);
}

Var loss_cross_omics(Graph& g, const Completion& completion, const ObservationMask& mask,
                     Reduction reduction) {
    const std::size_t m = completion.latents.size();
    const std::size_t n = mask.subjects();

    struct PairTerm {
        Var prediction; // rows in observed[k] order
        Var target;     // N×D
        std::vector<std::size_t> subjects;
        std::vector<std::size_t> pred_rows;
        double weight;
    };
    std::vector<PairTerm> pairs;
    std::vector<Var> inputs;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t k = 0; k < m; ++k) {
            if (i == k) continue;
            const auto subjects = mask.jointly_observed(i, k);
            if (subjects.empty()) continue;
            const Var pred = completion.cross[i][k];
            if (!pred.valid()) {
                throw ContractError("loss_cross_omics: missing prediction h_" + std::to_string(i) +
                                    std::to_string(k));
            }
            PairTerm t{pred, completion.latents[i], subjects, {}, 1.0};
            for (std::size_t j : subjects) t.pred_rows.push_back(completion.position[k][j]);
            if (reduction == Reduction::Mean) {
                const auto width = static_cast<double>(g.value(pred).cols());
                t.weight = 1.0 / (static_cast<double>(subjects.size()) * width);
            }
            inputs.push_back(pred);
            inputs.push_back(t.target);
            pairs.push_back(std::move(t));
        }
    }
    if (pairs.empty()) return g.constant(Tensor::scalar(0.0));

    auto sq_dist = [&g](const PairTerm& t, std::size_t s) {
        auto pr = g.value(t.prediction).row(t.pred_rows[s]);
        auto tr = g.value(t.target).row(t.subjects[s]);
        double acc = 0.0;
        for (std::size_t c = 0; c < pr.size(); ++c) {
            const double diff = pr[c] - tr[c];
            acc += diff * diff;
        }
        return acc;
    };

    double total = 0.0;
    if (reduction == Reduction::Sum) {
        std::vector<double> per_subject(n, 0.0);
        for (const auto& t : pairs)
            for (std::size_t s = 0; s < t.subjects.size(); ++s) per_subject[t.subjects[s]] += sq_dist(t, s);
        for (double v : per_subject) total += v;
    } else {
        for (const auto& t : pairs) {
            double pair_sum = 0.0;
            for (std::size_t s = 0; s < t.subjects.size(); ++s) pair_sum += sq_dist(t, s);
            total += t.weight * pair_sum;
        }
    }

    return g.record(Tensor::scalar(total), inputs,
                    [pairs = std::move(pairs)](Graph& gr, std::size_t self) {
        const double up = gr.upstream(self).item();
        for (const auto& t : pairs) {
            const bool grad_pred = gr.requires_grad(t.prediction);
            const bool grad_target = gr.requires_grad(t.target);
            if (!grad_pred && !grad_target) continue;
            const Tensor& pv = gr.value(t.prediction);
            const Tensor& tv = gr.value(t.target);
            Tensor dpred(pv.rows(), pv.cols());
            Tensor dtarget(tv.rows(), tv.cols());
            for (std::size_t s = 0; s < t.subjects.size(); ++s) {
                auto pr = pv.row(t.pred_rows[s]);
                auto tr = tv.row(t.subjects[s]);
                auto dp = dpred.row(t.pred_rows[s]);
                auto dt = dtarget.row(t.subjects[s]);
                for (std::size_t c = 0; c < pr.size(); ++c) {
                    const double gval = 2.0 * t.weight * up * (pr[c] - tr[c]);
                    dp[c] += gval;
                    dt[c] -= gval;
                }
            }
            if (grad_pred) gr.accumulate(t.prediction, dpred);
            if (grad_target) gr.accumulate(t.target, dtarget);
        }
    });
}

} // namespace clclsa
