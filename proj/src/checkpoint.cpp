#include "clclsa/checkpoint.hpp"

#include "clclsa/errors.hpp"

#include <fstream>

namespace clclsa {

using nlohmann::json;

namespace {

json tensor_json(const Tensor& t) {
    return json{{"rows", t.rows()}, {"cols", t.cols()},
                {"values", std::vector<double>(t.values().begin(), t.values().end())}};
}

Tensor tensor_from(const json& j) {
    return Tensor(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                  j.at("values").get<std::vector<double>>());
}

const char* completion_name(CompletionMode m) {
    return m == CompletionMode::CrossView ? "cross_view" : "zero_fill";
}

} // namespace

void to_json(json& j, const ModelConfig& cfg) {
    j = json{{"input_dims", cfg.input_dims},
             {"embed_dims", cfg.embed_dims},
             {"num_classes", cfg.num_classes},
             {"ae_hidden", cfg.ae_hidden},
             {"dropout_p", cfg.dropout_p},
             {"bn_momentum", cfg.bn_momentum},
             {"bn_eps", cfg.bn_eps},
             {"completion", completion_name(cfg.completion)},
             {"view_names", cfg.view_names}};
}

void from_json(const json& j, ModelConfig& cfg) {
    ModelConfig d;
    cfg.input_dims = j.value("input_dims", d.input_dims);
    cfg.embed_dims = j.value("embed_dims", d.embed_dims);
    cfg.num_classes = j.value("num_classes", d.num_classes);
    cfg.ae_hidden = j.value("ae_hidden", d.ae_hidden);
    cfg.dropout_p = j.value("dropout_p", d.dropout_p);
    cfg.bn_momentum = j.value("bn_momentum", d.bn_momentum);
    cfg.bn_eps = j.value("bn_eps", d.bn_eps);
    cfg.view_names = j.value("view_names", d.view_names);
    const std::string completion = j.value("completion", std::string("cross_view"));
    if (completion == "cross_view") {
        cfg.completion = CompletionMode::CrossView;
    } else if (completion == "zero_fill") {
        cfg.completion = CompletionMode::ZeroFill;
    } else {
        throw InvalidArgument("unknown completion mode: " + completion);
    }
}

json checkpoint_json(const Model& model) {
    json j;
    j["format"] = "clclsa-checkpoint";
    j["version"] = 1;
    j["config"] = model.config();
    json params = json::array();
    const ParameterSet& ps = model.params();
    for (std::size_t i = 0; i < ps.size(); ++i) {
        json p = tensor_json(ps.value(i));
        p["name"] = ps.name(i);
        params.push_back(std::move(p));
    }
    j["parameters"] = std::move(params);
    json norms = json::array();
    for (std::size_t i = 0; i < model.num_views(); ++i) {
        for (const auto& [tag, state] :
             {std::pair{"enc", &model.encoder_norm_state(i)}, std::pair{"dec", &model.decoder_norm_state(i)}}) {
            norms.push_back({{"name", "view" + std::to_string(i) + "." + tag + ".bn"},
                             {"running_mean", tensor_json(state->running_mean)},
                             {"running_var", tensor_json(state->running_var)}});
        }
    }
    j["batch_norm"] = std::move(norms);
    return j;
}

Model model_from_checkpoint(const json& j) {
    if (j.value("format", std::string()) != "clclsa-checkpoint") {
        throw ParseError("not a clclsa checkpoint");
    }
    Model model(j.at("config").get<ModelConfig>(), 0);
    ParameterSet& ps = model.params();
    std::size_t seen = 0;
    for (const auto& p : j.at("parameters")) {
        const std::size_t idx = ps.index(p.at("name").get<std::string>());
        Tensor t = tensor_from(p);
        if (!t.same_shape(ps.value(idx))) {
            throw ShapeError("checkpoint parameter " + ps.name(idx) + " has shape " + t.shape_str() +
                             ", model expects " + ps.value(idx).shape_str());
        }
        ps.value(idx) = std::move(t);
        ++seen;
    }
    if (seen != ps.size()) {
        throw ParseError("checkpoint has " + std::to_string(seen) + " parameters, model has " +
                         std::to_string(ps.size()));
    }
    for (const auto& n : j.at("batch_norm")) {
        const std::string name = n.at("name").get<std::string>();
        // name is view<i>.<enc|dec>.bn
        const auto dot = name.find('.');
        const std::size_t view = std::stoul(name.substr(4, dot - 4));
        BatchNormState& state = name.compare(dot + 1, 3, "enc") == 0
                                    ? model.encoder_norm_state(view)
                                    : model.decoder_norm_state(view);
        state.running_mean = tensor_from(n.at("running_mean"));
        state.running_var = tensor_from(n.at("running_var"));
    }
    return model;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp);
        if (!out) throw IoError("cannot write " + tmp.string());
        out << checkpoint_json(model).dump() << '\n';
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

Model load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    return model_from_checkpoint(j);
}

} // namespace clclsa
