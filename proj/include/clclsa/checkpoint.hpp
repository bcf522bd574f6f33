#pragma once

#include "clclsa/model.hpp"

#include <json.hpp>

#include <filesystem>

namespace clclsa {

void to_json(nlohmann::json& j, const ModelConfig& cfg);
void from_json(const nlohmann::json& j, ModelConfig& cfg);

/// Config, every named parameter (shape + row-major values) and the
/// batch-norm running statistics. Doubles are written in shortest
/// round-trip form, so load(save(m)) is value-exact.
nlohmann::json checkpoint_json(const Model& model);
Model model_from_checkpoint(const nlohmann::json& j);

void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

} // namespace clclsa
