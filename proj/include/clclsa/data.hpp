#pragma once

#include "clclsa/mask.hpp"
#include "clclsa/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace clclsa {

/// M feature matrices over the same N subjects plus mask and labels.
/// Cells of unobserved views stay in storage but are never read.
struct MultiOmicsDataset {
    std::vector<Tensor> views;
    ObservationMask mask;
    std::vector<int> labels;
    std::size_t num_classes = 0;
    std::vector<std::string> view_names;
    std::vector<std::vector<std::string>> feature_names;
    std::string provenance;

    std::size_t num_subjects() const noexcept { return labels.size(); }
    std::size_t num_views() const noexcept { return views.size(); }
    std::vector<std::size_t> input_dims() const;
    /// Fraction of subjects missing at least one view.
    double missing_rate() const;

    /// Throws ShapeError/InvalidArgument when shapes, labels or mask are
    /// inconsistent or a subject has no observed view.
    void validate() const;

    MultiOmicsDataset select_subjects(const std::vector<std::size_t>& rows) const;
    MultiOmicsDataset select_views(const std::vector<std::size_t>& views) const;
};

struct LoadOptions {
    /// Class count; inferred as max(label) + 1 when absent.
    std::optional<std::size_t> num_classes;
    /// Per-feature min-max scaling to [0, 1]; constant columns become 0.
    bool min_max_scale = false;
    /// N rows × M columns of 0/1, no header.
    std::optional<std::filesystem::path> mask_file;
};

MultiOmicsDataset load_dataset(const std::vector<std::filesystem::path>& view_files,
                               const std::filesystem::path& label_file,
                               const LoadOptions& options = {});

/// Reads a directory written by write_dataset (manifest.json + files).
MultiOmicsDataset load_dataset_dir(const std::filesystem::path& dir);

/// Writes view_<i>.csv (17 significant digits), labels.txt, mask.csv and
/// manifest.json. `extra` is merged into the manifest (seeds, η, ...).
void write_dataset(const MultiOmicsDataset& ds, const std::filesystem::path& dir,
                   const std::string& extra_manifest_json = "{}");

void min_max_scale(Tensor& x);

// ---------------------------------------------------------------------------

/// Rule for choosing which views an incomplete subject loses.
struct MissingPolicy {
    enum class Kind {
        Uniform,  ///< retained count uniform on {1..M-1}, then a uniform subset
        DropView, ///< always drop `view`
    };
    Kind kind = Kind::Uniform;
    std::size_t view = 0;

    static MissingPolicy parse(const std::string& text); ///< "uniform" or "drop:<i>"
    std::string to_string() const;
};

struct MissingnessSpec {
    double eta = 0.0;
    std::uint64_t seed = 0;
    MissingPolicy policy;
    std::string stream = "missing"; ///< RngStream label
};

/// Marks round(η·N) subjects incomplete. Requires a fully observed input.
MultiOmicsDataset apply_missingness(const MultiOmicsDataset& ds, const MissingnessSpec& spec);

struct SyntheticSpec {
    std::size_t n = 400;
    std::vector<std::size_t> dims{20, 20, 20};
    std::size_t num_classes = 3;
    std::size_t signal_dim = 3;
    double snr = 5.0;
    double separation = 4.0;
    /// Optional per-view multiplier on the class-mean part of the signal.
    std::vector<double> view_signal;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Shared latent u = class mean + N(0, I); view i = u·A_i + N(0, 1/SNR²).
MultiOmicsDataset synth_generate(const SyntheticSpec& spec);

struct SplitSpec {
    double train_fraction = 0.7;
    std::uint64_t seed = 0;
    bool stratified = true;
};

/// Seeded partition into (train, test). Stratified splits allot
/// round(fraction·N) training subjects across classes by largest remainder.
std::pair<MultiOmicsDataset, MultiOmicsDataset> split(const MultiOmicsDataset& ds,
                                                      const SplitSpec& spec);

/// Row indices of the split without building datasets.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>>
split_indices(const std::vector<int>& labels, std::size_t num_classes, const SplitSpec& spec);

/// FNV-1a digest of a file's bytes, hex.
std::string file_digest(const std::filesystem::path& path);

} // namespace clclsa
