#pragma once

#include "clclsa/autodiff.hpp"
#include "clclsa/data.hpp"
#include "clclsa/model.hpp"
#include "clclsa/rng.hpp"
#include "clclsa/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <string>

namespace testing {

using namespace clclsa;

inline Tensor random_tensor(std::size_t r, std::size_t c, RngStream& rng, double scale = 1.0) {
    Tensor t(r, c);
    for (double& v : t.values()) v = scale * rng.normal();
    return t;
}

/// |a - n| / max(|a|, |n|, floor)
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Central difference of f at every entry of x (x is restored afterwards).
inline Tensor numeric_gradient(Tensor& x, const std::function<double()>& f, double h = 1e-5) {
    Tensor out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = x[i];
        x[i] = saved + h;
        const double up = f();
        x[i] = saved - h;
        const double down = f();
        x[i] = saved;
        out[i] = (up - down) / (2.0 * h);
    }
    return out;
}

inline double max_relative_error(const Tensor& analytic, const Tensor& numeric, double floor = 1e-6) {
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i)
        worst = std::max(worst, relative_error(analytic[i], numeric[i], floor));
    return worst;
}

/// M=3, |V_i|=6, D=4, C=3, small autoencoder, dropout off.
inline ModelConfig tiny_config(std::size_t views = 3, std::size_t classes = 3) {
    ModelConfig cfg;
    cfg.input_dims.assign(views, 6);
    cfg.embed_dims.assign(views, 4);
    cfg.num_classes = classes;
    cfg.ae_hidden = {5, 3};
    cfg.dropout_p = 0.0;
    return cfg;
}

/// N=5 subjects; 0 and 1 complete, the rest each miss one or two views, and
/// every view stays observed on at least two subjects.
inline ObservationMask mixed_mask() {
    ObservationMask m(5, 3, true);
    m.set(2, 2, false);
    m.set(3, 0, false);
    m.set(4, 1, false);
    m.set(4, 2, false);
    return m;
}

inline std::vector<Tensor> random_views(const ModelConfig& cfg, std::size_t n, RngStream& rng) {
    std::vector<Tensor> views;
    for (std::size_t d : cfg.input_dims) views.push_back(random_tensor(n, d, rng));
    return views;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("clclsa_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace testing

namespace testing {

/// 24 subjects over three 6-feature views, half of them incomplete.
inline clclsa::MultiOmicsDataset tiny_dataset(double eta = 0.5, std::uint64_t seed = 1) {
    clclsa::SyntheticSpec spec;
    spec.n = 24;
    spec.dims = {6, 6, 6};
    spec.num_classes = 3;
    spec.seed = seed;
    return clclsa::apply_missingness(clclsa::synth_generate(spec),
                                     clclsa::MissingnessSpec{eta, seed, {}, "missing"});
}

inline bool same_parameters(const clclsa::Model& a, const clclsa::Model& b) {
    if (a.params().size() != b.params().size()) return false;
    for (std::size_t i = 0; i < a.params().size(); ++i)
        if (!(a.params().value(i) == b.params().value(i))) return false;
    return true;
}

} // namespace testing
