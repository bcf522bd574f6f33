#pragma once

#include <json.hpp>

#include <string>
#include <vector>

namespace clclsa::cli {

inline constexpr const char* kVersion = "0.1.0";

/// Exit codes of dispatch.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitFailure = 2;

/// Default configuration sections used by a subcommand, before any config
/// file or flag is applied. Throws std::out_of_range for unknown commands.
nlohmann::json default_config(const std::string& command);

/// Overlays `patch` onto `base` leaf by leaf. Keys absent from `base` are
/// rejected with InvalidArgument naming the dotted path; sections of `patch`
/// that `base` does not use at top level are ignored.
void overlay_config(nlohmann::json& base, const nlohmann::json& patch);

/// Sets one dotted leaf from its command-line text, converting it to the
/// type of the current value. Lists accept "a,b,c" or JSON.
void set_dotted(nlohmann::json& config, const std::string& dotted, const std::string& text);

/// Dotted names of every leaf in `config`, in document order.
std::vector<std::string> leaf_paths(const nlohmann::json& config);

/// Runs one command line (argv[0] is the program name).
int dispatch(int argc, const char* const* argv);

} // namespace clclsa::cli
