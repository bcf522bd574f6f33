#include "clclsa/model.hpp"

#include "clclsa/errors.hpp"

#include <algorithm>
#include <cmath>

namespace clclsa {

namespace {

struct PresetRow {
    const char* name;
    std::array<std::size_t, 3> inputs;
    std::size_t embed;
    std::size_t classes;
};

// mRNA expression, DNA methylation, miRNA expression.
constexpr std::array<PresetRow, 4> kPresets{{
    {"rosmap", {200, 200, 200}, 300, 2},
    {"lgg", {2000, 2000, 548}, 200, 2},
    {"brca", {1000, 1000, 503}, 200, 5},
    {"kipan", {2000, 2000, 445}, 200, 3},
}};

DenseLayer add_dense(ParameterSet& params, const std::string& prefix, std::size_t in,
                     std::size_t out, const RngStream& init) {
    RngStream rng = init.derive(prefix);
    DenseLayer layer;
    layer.weight = params.add(prefix + ".W", init_weight(in, out, rng));
    layer.bias = params.add(prefix + ".b", init_bias(out));
    return layer;
}

NormLayer add_norm(ParameterSet& params, const std::string& prefix, std::size_t width) {
    NormLayer layer;
    layer.gamma = params.add(prefix + ".gamma", Tensor(1, width, 1.0));
    layer.beta = params.add(prefix + ".beta", Tensor(1, width, 0.0));
    return layer;
}

Var dense(Graph& g, const Model& model, const DenseLayer& layer, Var x) {
    return affine(g, x, g.parameter(model.params(), layer.weight),
                  g.parameter(model.params(), layer.bias));
}

Var norm(Graph& g, const Model& model, const NormLayer& layer, BatchNormState& state, Var x) {
    // A single-row batch has no batch statistics; fall back to running stats.
    const bool batch_stats = g.training() && g.value(x).rows() >= 2;
    return batch_norm(g, x, g.parameter(model.params(), layer.gamma),
                      g.parameter(model.params(), layer.beta), state, batch_stats);
}

} // namespace

void ModelConfig::validate() const {
    const std::size_t m = input_dims.size();
    if (m < 2) throw InvalidArgument("model needs at least 2 views, got " + std::to_string(m));
    if (embed_dims.size() != m) {
        throw InvalidArgument("embed_dims has " + std::to_string(embed_dims.size()) +
                              " entries for " + std::to_string(m) + " views");
    }
    for (std::size_t i = 0; i < m; ++i) {
        if (input_dims[i] == 0 || embed_dims[i] == 0) {
            throw InvalidArgument("view " + std::to_string(i) + " has a zero dimension");
        }
        if (embed_dims[i] != embed_dims[0]) {
            throw InvalidArgument("all views must share one latent dimension");
        }
    }
    if (num_classes < 1) throw InvalidArgument("num_classes must be at least 1");
    if (ae_hidden[0] == 0 || ae_hidden[1] == 0) {
        throw InvalidArgument("autoencoder hidden widths must be positive");
    }
    if (!(dropout_p >= 0.0 && dropout_p < 1.0)) {
        throw InvalidArgument("dropout_p must be in [0, 1)");
    }
    if (!(bn_momentum > 0.0 && bn_momentum <= 1.0) || !(bn_eps > 0.0)) {
        throw InvalidArgument("batch-norm momentum must be in (0, 1] and eps positive");
    }
    if (!view_names.empty() && view_names.size() != m) {
        throw InvalidArgument("view_names must be empty or name every view");
    }
}

ModelConfig preset_config(std::string_view name) {
    for (const auto& p : kPresets) {
        if (name != p.name) continue;
        ModelConfig cfg;
        cfg.input_dims.assign(p.inputs.begin(), p.inputs.end());
        cfg.embed_dims.assign(3, p.embed);
        cfg.num_classes = p.classes;
        cfg.ae_hidden = {64, 32};
        cfg.dropout_p = 0.5;
        cfg.view_names = {"mRNA", "methylation", "miRNA"};
        return cfg;
    }
    throw InvalidArgument("unknown preset: " + std::string(name));
}

std::vector<std::string> preset_names() {
    std::vector<std::string> out;
    for (const auto& p : kPresets) out.emplace_back(p.name);
    return out;
}

ModelConfig desk_config(std::vector<std::size_t> input_dims, std::size_t num_classes) {
    ModelConfig cfg;
    cfg.embed_dims.assign(input_dims.size(), 32);
    cfg.input_dims = std::move(input_dims);
    cfg.num_classes = num_classes;
    cfg.ae_hidden = {32, 16};
    cfg.dropout_p = 0.5;
    return cfg;
}

Model::Model(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
    config_.validate();
    const RngStream init(seed, "init");
    const std::size_t m = config_.num_views();
    const std::size_t d = config_.latent_dim();
    const auto [h1, h2] = config_.ae_hidden;
    for (std::size_t i = 0; i < m; ++i) {
        const std::string p = "view" + std::to_string(i);
        const std::size_t in = config_.input_dims[i];
        ViewLayers v;
        v.feature_attention = add_dense(params_, p + ".fatt", in, in, init);
        v.embed = add_dense(params_, p + ".emb", in, d, init);
        v.view_attention = add_dense(params_, p + ".matt", d, 1, init);
        v.aux_classifier = add_dense(params_, p + ".aux", d, config_.num_classes, init);
        v.enc_in = add_dense(params_, p + ".enc.in", d, h1, init);
        v.enc_norm = add_norm(params_, p + ".enc.bn", h1);
        v.enc_out = add_dense(params_, p + ".enc.out", h1, h2, init);
        v.dec_in = add_dense(params_, p + ".dec.in", h2, h1, init);
        v.dec_norm = add_norm(params_, p + ".dec.bn", h1);
        v.dec_out = add_dense(params_, p + ".dec.out", h1, d, init);
        views_.push_back(v);
        enc_bn_.emplace_back(h1, config_.bn_momentum, config_.bn_eps);
        dec_bn_.emplace_back(h1, config_.bn_momentum, config_.bn_eps);
    }
    classifier_ = add_dense(params_, "clf", m * d, config_.num_classes, init);
}

// ---------------------------------------------------------------------------

ViewForward forward_view(Graph& g, Model& model, std::size_t view, Var x,
                         RngStream* dropout_rng) {
    const auto& cfg = model.config();
    if (view >= cfg.num_views()) throw InvalidArgument("view index out of range");
    if (g.value(x).cols() != cfg.input_dims[view]) {
        throw ShapeError("view " + std::to_string(view) + ": input " + g.value(x).shape_str() +
                         " does not have " + std::to_string(cfg.input_dims[view]) + " features");
    }
    const ViewLayers& layers = model.view(view);
    ViewForward out;
    out.feature_attention = sigmoid(g, dense(g, model, layers.feature_attention, x));
    Var gated = mul(g, x, out.feature_attention);
    Var embedded = relu(g, dense(g, model, layers.embed, gated));
    if (g.training() && cfg.dropout_p > 0.0) {
        if (dropout_rng == nullptr) throw ContractError("forward_view: dropout needs an RngStream");
        embedded = dropout(g, embedded, cfg.dropout_p, *dropout_rng);
    }
    out.embedding = embedded;
    out.view_attention = sigmoid(g, dense(g, model, layers.view_attention, embedded));
    out.latent = scale_rows(g, embedded, out.view_attention);
    out.aux_probs = softmax_rows(g, dense(g, model, layers.aux_classifier, out.latent));
    return out;
}

Var fuse(Graph& g, std::span<const Var> latents) {
    if (latents.empty()) throw InvalidArgument("fuse: no views");
    return concat_cols(g, latents);
}

Var encode(Graph& g, Model& model, std::size_t view, Var latent) {
    const ViewLayers& l = model.view(view);
    Var h = dense(g, model, l.enc_in, latent);
    h = relu(g, norm(g, model, l.enc_norm, model.encoder_norm_state(view), h));
    return relu(g, dense(g, model, l.enc_out, h));
}

Var decode(Graph& g, Model& model, std::size_t view, Var code) {
    const ViewLayers& l = model.view(view);
    Var h = dense(g, model, l.dec_in, code);
    h = relu(g, norm(g, model, l.dec_norm, model.decoder_norm_state(view), h));
    return dense(g, model, l.dec_out, h);
}

Var cross_predict(Graph& g, Model& model, Var latent, std::size_t source, std::size_t target) {
    if (source == target) {
        throw InvalidArgument("cross_predict: source and target are both view " +
                              std::to_string(source));
    }
    return decode(g, model, target, encode(g, model, source, latent));
}

Completion complete_latents(Graph& g, Model& model, std::span<const Var> observed_latents,
                            const ObservationMask& mask, bool pair_losses) {
    const std::size_t m = model.num_views();
    const std::size_t n = mask.subjects();
    const std::size_t d = model.config().latent_dim();
    if (observed_latents.size() != m || mask.views() != m) {
        throw ShapeError("complete_latents: view count mismatch");
    }
    for (std::size_t j = 0; j < n; ++j) {
        if (mask.observed_count(j) == 0) {
            throw InvalidArgument("subject " + std::to_string(j) + " has no observed view");
        }
    }

    Completion c;
    c.observed.resize(m);
    c.position.assign(m, std::vector<std::size_t>(n, Var::npos));
    for (std::size_t i = 0; i < m; ++i) {
        c.observed[i] = mask.observed_subjects(i);
        for (std::size_t r = 0; r < c.observed[i].size(); ++r) c.position[i][c.observed[i][r]] = r;
        if (g.value(observed_latents[i]).rows() != c.observed[i].size()) {
            throw ShapeError("complete_latents: view " + std::to_string(i) + " latent has " +
                             std::to_string(g.value(observed_latents[i]).rows()) +
                             " rows for " + std::to_string(c.observed[i].size()) +
                             " observed subjects");
        }
    }

    // Which (target, source) translations this batch needs.
    const bool cross_fill = model.config().completion == CompletionMode::CrossView;
    std::vector<std::vector<char>> need(m, std::vector<char>(m, 0));
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t k = 0; k < m; ++k) {
                if (i == k || !mask.observed(j, k)) continue;
                if ((!mask.observed(j, i) && cross_fill) || (mask.observed(j, i) && pair_losses)) {
                    need[i][k] = 1;
                }
            }
        }
    }

    c.codes.assign(m, Var{});
    c.cross.assign(m, std::vector<Var>(m, Var{}));
    for (std::size_t k = 0; k < m; ++k) {
        bool used = false;
        for (std::size_t i = 0; i < m; ++i) used = used || need[i][k];
        if (!used) continue;
        c.codes[k] = encode(g, model, k, observed_latents[k]);
        for (std::size_t i = 0; i < m; ++i) {
            if (need[i][k]) c.cross[i][k] = decode(g, model, i, c.codes[k]);
        }
    }

    c.latents.resize(m);
    c.provenance.assign(m, std::vector<Provenance>(n, Provenance::Observed));
    for (std::size_t i = 0; i < m; ++i) {
        std::vector<RowSource> sources;
        RowSource own{observed_latents[i], {}};
        for (std::size_t r = 0; r < c.observed[i].size(); ++r) {
            own.routes.push_back({r, c.observed[i][r], 1.0});
        }
        sources.push_back(std::move(own));
        for (std::size_t j = 0; j < n; ++j) {
            if (!mask.observed(j, i)) c.provenance[i][j] = Provenance::Completed;
        }
        if (cross_fill) {
            for (std::size_t k = 0; k < m; ++k) {
                if (k == i || !c.cross[i][k].valid()) continue;
                RowSource src{c.cross[i][k], {}};
                for (std::size_t j = 0; j < n; ++j) {
                    if (mask.observed(j, i) || !mask.observed(j, k)) continue;
                    const double w = 1.0 / static_cast<double>(mask.observed_count(j));
                    src.routes.push_back({c.position[k][j], j, w});
                }
                if (!src.routes.empty()) sources.push_back(std::move(src));
            }
        }
        c.latents[i] = assemble_rows(g, n, d, sources);
    }
    return c;
}

BatchForward forward_batch(Graph& g, Model& model, std::span<const Tensor> views,
                           const ObservationMask& mask, const ForwardOptions& options) {
    const std::size_t m = model.num_views();
    if (views.size() != m || mask.views() != m) {
        throw ShapeError("forward_batch: expected " + std::to_string(m) + " views, got " +
                         std::to_string(views.size()));
    }
    BatchForward out;
    std::vector<Var> observed_latents;
    for (std::size_t i = 0; i < m; ++i) {
        if (views[i].rows() != mask.subjects()) {
            throw ShapeError("forward_batch: view " + std::to_string(i) + " has " +
                             std::to_string(views[i].rows()) + " rows, mask has " +
                             std::to_string(mask.subjects()));
        }
        const auto rows = mask.observed_subjects(i);
        Var x = g.constant(gather_rows(views[i], rows));
        out.views.push_back(forward_view(g, model, i, x, options.dropout_rng));
        observed_latents.push_back(out.views.back().latent);
    }
    out.completion = complete_latents(g, model, observed_latents, mask, options.pair_losses);
    out.fused = fuse(g, out.completion.latents);
    out.probs = softmax_rows(g, dense(g, model, model.classifier(), out.fused));
    return out;
}

ForwardCache snapshot(const Graph& g, const BatchForward& fwd) {
    ForwardCache c;
    c.observed = fwd.completion.observed;
    c.provenance = fwd.completion.provenance;
    for (std::size_t i = 0; i < fwd.views.size(); ++i) {
        const auto& v = fwd.views[i];
        c.feature_attention.push_back(g.value(v.feature_attention));
        c.embedding.push_back(g.value(v.embedding));
        c.view_attention.push_back(g.value(v.view_attention));
        c.aux_probs.push_back(g.value(v.aux_probs));
        c.latent.push_back(g.value(fwd.completion.latents[i]));
    }
    c.fused = g.value(fwd.fused);
    c.probs = g.value(fwd.probs);
    return c;
}

std::vector<Tensor> complete_missing(Model& model,
                                     const std::vector<std::optional<Tensor>>& latents) {
    const std::size_t m = model.num_views();
    if (latents.size() != m) throw ShapeError("complete_missing: view count mismatch");
    Graph g(Mode::Eval);
    ObservationMask mask(1, m, false);
    std::vector<Var> observed;
    const std::size_t d = model.config().latent_dim();
    for (std::size_t i = 0; i < m; ++i) {
        if (latents[i]) {
            if (latents[i]->rows() != 1 || latents[i]->cols() != d) {
                throw ShapeError("complete_missing: latent " + latents[i]->shape_str() +
                                 " is not 1x" + std::to_string(d));
            }
            mask.set(0, i, true);
            observed.push_back(g.constant(*latents[i]));
        } else {
            observed.push_back(g.constant(Tensor(0, d)));
        }
    }
    Completion c = complete_latents(g, model, observed, mask, false);
    std::vector<Tensor> out;
    for (Var v : c.latents) out.push_back(g.value(v));
    return out;
}

std::vector<int> argmax_rows(const Tensor& probs) {
    std::vector<int> out(probs.rows());
    for (std::size_t r = 0; r < probs.rows(); ++r) {
        auto row = probs.row(r);
        out[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    return out;
}

Prediction predict(Model& model, std::span<const Tensor> views, const ObservationMask& mask) {
    Graph g(Mode::Eval);
    BatchForward fwd = forward_batch(g, model, views, mask, ForwardOptions{});
    Prediction p;
    p.probs = g.value(fwd.probs);
    p.labels = argmax_rows(p.probs);
    return p;
}

std::vector<double> latent_variance(const Graph& g, const BatchForward& fwd) {
    std::vector<double> out;
    for (const auto& v : fwd.views) {
        const Tensor& z = g.value(v.latent);
        if (z.rows() < 2) {
            out.push_back(0.0);
            continue;
        }
        double total = 0.0;
        for (std::size_t c = 0; c < z.cols(); ++c) {
            double mean = 0.0;
            for (std::size_t r = 0; r < z.rows(); ++r) mean += z(r, c);
            mean /= static_cast<double>(z.rows());
            double var = 0.0;
            for (std::size_t r = 0; r < z.rows(); ++r) var += (z(r, c) - mean) * (z(r, c) - mean);
            total += var / static_cast<double>(z.rows());
        }
        out.push_back(total / static_cast<double>(z.cols()));
    }
    return out;
}

} // namespace clclsa
