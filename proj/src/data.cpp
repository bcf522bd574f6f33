#include "clclsa/data.hpp"

#include "clclsa/errors.hpp"
#include "clclsa/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace clclsa {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) cells.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

std::string where(const fs::path& file, std::size_t line) {
    return file.string() + ":" + std::to_string(line);
}

double parse_double(const std::string& cell, const fs::path& file, std::size_t line) {
    double v = 0.0;
    const char* end = cell.data() + cell.size();
    auto [ptr, ec] = std::from_chars(cell.data(), end, v);
    if (ec != std::errc() || ptr != end || cell.empty() || !std::isfinite(v)) {
        throw ParseError(where(file, line) + ": non-numeric cell '" + cell + "'");
    }
    return v;
}

long long parse_int(const std::string& cell, const fs::path& file, std::size_t line) {
    long long v = 0;
    const char* end = cell.data() + cell.size();
    auto [ptr, ec] = std::from_chars(cell.data(), end, v);
    if (ec != std::errc() || ptr != end || cell.empty()) {
        throw ParseError(where(file, line) + ": expected an integer, got '" + cell + "'");
    }
    return v;
}

std::ifstream open_input(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw IoError("cannot open " + file.string());
    return in;
}

struct ViewFile {
    std::vector<std::string> header;
    Tensor values;
};

ViewFile read_view_csv(const fs::path& file) {
    auto in = open_input(file);
    std::string line;
    std::size_t line_no = 0;
    ViewFile out;
    while (std::getline(in, line)) {
        ++line_no;
        if (!trim(line).empty()) break;
    }
    if (trim(line).empty()) throw ParseError(file.string() + ": empty file");
    out.header = split_csv_line(line);
    const std::size_t width = out.header.size();
    std::vector<double> values;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != width) {
            throw ParseError(where(file, line_no) + ": " + std::to_string(cells.size()) +
                             " cells, header has " + std::to_string(width));
        }
        for (const auto& c : cells) values.push_back(parse_double(c, file, line_no));
        ++rows;
    }
    out.values = Tensor(rows, width, std::move(values));
    return out;
}

std::vector<long long> read_labels(const fs::path& file) {
    auto in = open_input(file);
    std::string line;
    std::size_t line_no = 0;
    std::vector<long long> labels;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty()) continue;
        labels.push_back(parse_int(t, file, line_no));
    }
    return labels;
}

ObservationMask read_mask(const fs::path& file, std::size_t n, std::size_t m) {
    auto in = open_input(file);
    std::string line;
    std::size_t line_no = 0;
    ObservationMask mask(n, m, true);
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != m) {
            throw ParseError(where(file, line_no) + ": mask row has " +
                             std::to_string(cells.size()) + " columns for " + std::to_string(m) +
                             " views");
        }
        if (row >= n) throw ParseError(where(file, line_no) + ": more mask rows than subjects");
        for (std::size_t i = 0; i < m; ++i) {
            const long long v = parse_int(cells[i], file, line_no);
            if (v != 0 && v != 1) throw ParseError(where(file, line_no) + ": mask entries must be 0 or 1");
            mask.set(row, i, v == 1);
        }
        ++row;
    }
    if (row != n) {
        throw ParseError(file.string() + ": " + std::to_string(row) + " mask rows for " +
                         std::to_string(n) + " subjects");
    }
    return mask;
}

void write_text_atomic(const fs::path& path, const std::string& content) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw IoError("cannot write " + tmp.string());
        out << content;
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

// ---------------------------------------------------------------------------

std::vector<std::size_t> MultiOmicsDataset::input_dims() const {
    std::vector<std::size_t> dims;
    for (const auto& v : views) dims.push_back(v.cols());
    return dims;
}

double MultiOmicsDataset::missing_rate() const {
    if (num_subjects() == 0) return 0.0;
    return static_cast<double>(mask.incomplete_count()) / static_cast<double>(num_subjects());
}

void MultiOmicsDataset::validate() const {
    const std::size_t n = labels.size();
    if (views.empty()) throw InvalidArgument("dataset has no views");
    for (std::size_t i = 0; i < views.size(); ++i) {
        if (views[i].rows() != n) {
            throw ShapeError("view " + std::to_string(i) + " has " +
                             std::to_string(views[i].rows()) + " rows for " + std::to_string(n) +
                             " labels");
        }
    }
    if (mask.subjects() != n || mask.views() != views.size()) {
        throw ShapeError("mask shape does not match the dataset");
    }
    for (std::size_t j = 0; j < n; ++j) {
        if (labels[j] < 0 || static_cast<std::size_t>(labels[j]) >= num_classes) {
            throw InvalidArgument("label " + std::to_string(labels[j]) + " of subject " +
                                  std::to_string(j) + " is outside [0, " +
                                  std::to_string(num_classes) + ")");
        }
        if (mask.observed_count(j) == 0) {
            throw InvalidArgument("subject " + std::to_string(j) + " has no observed view");
        }
    }
    if (!view_names.empty() && view_names.size() != views.size()) {
        throw InvalidArgument("view_names must name every view");
    }
}

MultiOmicsDataset MultiOmicsDataset::select_subjects(const std::vector<std::size_t>& rows) const {
    MultiOmicsDataset out;
    for (const auto& v : views) out.views.push_back(gather_rows(v, rows));
    out.mask = mask.select_rows(rows);
    for (std::size_t r : rows) out.labels.push_back(labels.at(r));
    out.num_classes = num_classes;
    out.view_names = view_names;
    out.feature_names = feature_names;
    out.provenance = provenance;
    return out;
}

MultiOmicsDataset MultiOmicsDataset::select_views(const std::vector<std::size_t>& idx) const {
    MultiOmicsDataset out;
    for (std::size_t i : idx) {
        if (i >= views.size()) throw InvalidArgument("view index " + std::to_string(i) + " out of range");
        out.views.push_back(views[i]);
        if (!view_names.empty()) out.view_names.push_back(view_names[i]);
        if (!feature_names.empty()) out.feature_names.push_back(feature_names[i]);
    }
    out.mask = mask.select_views(idx);
    out.labels = labels;
    out.num_classes = num_classes;
    out.provenance = provenance;
    return out;
}

void min_max_scale(Tensor& x) {
    for (std::size_t c = 0; c < x.cols(); ++c) {
        double lo = INFINITY;
        double hi = -INFINITY;
        for (std::size_t r = 0; r < x.rows(); ++r) {
            lo = std::min(lo, x(r, c));
            hi = std::max(hi, x(r, c));
        }
        const double range = hi - lo;
        for (std::size_t r = 0; r < x.rows(); ++r) x(r, c) = range > 0.0 ? (x(r, c) - lo) / range : 0.0;
    }
}

MultiOmicsDataset load_dataset(const std::vector<fs::path>& view_files, const fs::path& label_file,
                               const LoadOptions& options) {
    if (view_files.empty()) throw InvalidArgument("load_dataset: no view files");
    MultiOmicsDataset ds;
    for (const auto& f : view_files) {
        ViewFile vf = read_view_csv(f);
        if (options.min_max_scale) min_max_scale(vf.values);
        ds.views.push_back(std::move(vf.values));
        ds.feature_names.push_back(std::move(vf.header));
        ds.view_names.push_back(f.stem().string());
    }
    const auto raw = read_labels(label_file);
    const std::size_t n = raw.size();
    for (std::size_t i = 0; i < ds.views.size(); ++i) {
        if (ds.views[i].rows() != n) {
            throw ParseError(view_files[i].string() + ": " + std::to_string(ds.views[i].rows()) +
                             " subjects, " + label_file.string() + " has " + std::to_string(n));
        }
    }
    long long max_label = -1;
    for (std::size_t j = 0; j < n; ++j) {
        if (raw[j] < 0) {
            throw ParseError(label_file.string() + ": negative label on subject " + std::to_string(j));
        }
        max_label = std::max(max_label, raw[j]);
    }
    ds.num_classes = options.num_classes.value_or(static_cast<std::size_t>(max_label + 1));
    for (std::size_t j = 0; j < n; ++j) {
        if (static_cast<std::size_t>(raw[j]) >= ds.num_classes) {
            throw ParseError(label_file.string() + ": label " + std::to_string(raw[j]) +
                             " of subject " + std::to_string(j) + " is outside [0, " +
                             std::to_string(ds.num_classes) + ")");
        }
        ds.labels.push_back(static_cast<int>(raw[j]));
    }
    ds.mask = options.mask_file ? read_mask(*options.mask_file, n, ds.views.size())
                                : ObservationMask(n, ds.views.size(), true);
    ds.provenance = "loaded from " + label_file.parent_path().string();
    ds.validate();
    return ds;
}

MultiOmicsDataset load_dataset_dir(const fs::path& dir) {
    auto in = open_input(dir / "manifest.json");
    json manifest;
    try {
        in >> manifest;
    } catch (const json::exception& e) {
        throw ParseError((dir / "manifest.json").string() + ": " + e.what());
    }
    std::vector<fs::path> files;
    std::vector<std::string> names;
    for (const auto& v : manifest.at("views")) {
        files.push_back(dir / v.at("file").get<std::string>());
        names.push_back(v.at("name").get<std::string>());
    }
    LoadOptions opts;
    opts.num_classes = manifest.at("num_classes").get<std::size_t>();
    if (manifest.contains("mask")) opts.mask_file = dir / manifest.at("mask").get<std::string>();
    MultiOmicsDataset ds = load_dataset(files, dir / manifest.at("labels").get<std::string>(), opts);
    ds.view_names = std::move(names);
    ds.provenance = manifest.value("provenance", ds.provenance);
    return ds;
}

void write_dataset(const MultiOmicsDataset& ds, const fs::path& dir,
                   const std::string& extra_manifest_json) {
    ds.validate();
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

    json manifest;
    manifest["format"] = "clclsa-dataset";
    manifest["version"] = 1;
    manifest["subjects"] = ds.num_subjects();
    manifest["num_classes"] = ds.num_classes;
    manifest["missing_rate"] = ds.missing_rate();
    manifest["incomplete_subjects"] = ds.mask.incomplete_count();
    manifest["provenance"] = ds.provenance;
    manifest["views"] = json::array();
    for (std::size_t i = 0; i < ds.num_views(); ++i) {
        const Tensor& v = ds.views[i];
        const std::string file = "view_" + std::to_string(i) + ".csv";
        std::ostringstream os;
        for (std::size_t c = 0; c < v.cols(); ++c) {
            if (c) os << ',';
            if (i < ds.feature_names.size() && c < ds.feature_names[i].size()) {
                os << ds.feature_names[i][c];
            } else {
                os << "f" << c;
            }
        }
        os << '\n';
        for (std::size_t r = 0; r < v.rows(); ++r) {
            for (std::size_t c = 0; c < v.cols(); ++c) {
                if (c) os << ',';
                os << format_double(v(r, c));
            }
            os << '\n';
        }
        write_text_atomic(dir / file, os.str());
        const std::string name =
            i < ds.view_names.size() ? ds.view_names[i] : "view" + std::to_string(i);
        manifest["views"].push_back({{"name", name}, {"file", file}, {"features", v.cols()}});
    }
    {
        std::ostringstream os;
        for (int y : ds.labels) os << y << '\n';
        write_text_atomic(dir / "labels.txt", os.str());
        manifest["labels"] = "labels.txt";
    }
    {
        std::ostringstream os;
        for (std::size_t j = 0; j < ds.num_subjects(); ++j) {
            for (std::size_t i = 0; i < ds.num_views(); ++i) {
                if (i) os << ',';
                os << (ds.mask.observed(j, i) ? 1 : 0);
            }
            os << '\n';
        }
        write_text_atomic(dir / "mask.csv", os.str());
        manifest["mask"] = "mask.csv";
    }
    json extra = json::parse(extra_manifest_json);
    if (!extra.is_object()) throw InvalidArgument("extra manifest fields must be a JSON object");
    manifest.update(extra);
    write_text_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

// ---------------------------------------------------------------------------

MissingPolicy MissingPolicy::parse(const std::string& text) {
    if (text == "uniform") return {};
    if (text.rfind("drop:", 0) == 0) {
        MissingPolicy p;
        p.kind = Kind::DropView;
        const std::string num = text.substr(5);
        std::size_t v = 0;
        auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), v);
        if (ec != std::errc() || ptr != num.data() + num.size() || num.empty()) {
            throw InvalidArgument("bad missing policy: " + text);
        }
        p.view = v;
        return p;
    }
    throw InvalidArgument("unknown missing policy: " + text + " (expected uniform or drop:<view>)");
}

std::string MissingPolicy::to_string() const {
    return kind == Kind::Uniform ? "uniform" : "drop:" + std::to_string(view);
}

MultiOmicsDataset apply_missingness(const MultiOmicsDataset& ds, const MissingnessSpec& spec) {
    if (!ds.mask.all_complete()) {
        throw ContractError("apply_missingness: dataset already has missing views");
    }
    if (!(spec.eta >= 0.0 && spec.eta <= 1.0)) {
        throw InvalidArgument("missing rate must be in [0, 1], got " + std::to_string(spec.eta));
    }
    const std::size_t n = ds.num_subjects();
    const std::size_t m = ds.num_views();
    if (m < 2 && spec.eta > 0.0) throw InvalidArgument("apply_missingness: needs at least 2 views");
    if (spec.policy.kind == MissingPolicy::Kind::DropView && spec.policy.view >= m) {
        throw InvalidArgument("missing policy drops view " + std::to_string(spec.policy.view) +
                              " of " + std::to_string(m));
    }

    const auto target = static_cast<std::size_t>(std::llround(spec.eta * static_cast<double>(n)));
    RngStream pick(spec.seed, spec.stream + "/subjects");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    pick.shuffle(order);
    std::vector<std::size_t> chosen(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(target));
    std::sort(chosen.begin(), chosen.end());

    MultiOmicsDataset out = ds;
    RngStream views_rng(spec.seed, spec.stream + "/views");
    for (std::size_t j : chosen) {
        if (spec.policy.kind == MissingPolicy::Kind::DropView) {
            out.mask.set(j, spec.policy.view, false);
            continue;
        }
        const std::size_t keep = 1 + views_rng.below(m - 1);
        std::vector<std::size_t> idx(m);
        std::iota(idx.begin(), idx.end(), 0);
        views_rng.shuffle(idx);
        for (std::size_t t = keep; t < m; ++t) out.mask.set(j, idx[t], false);
    }
    return out;
}

void SyntheticSpec::validate() const {
    if (n == 0 || dims.empty() || num_classes == 0 || signal_dim == 0) {
        throw InvalidArgument("synthetic spec: counts must be at least 1");
    }
    for (std::size_t d : dims)
        if (d == 0) throw InvalidArgument("synthetic spec: view dimensions must be at least 1");
    if (!(snr > 0.0)) throw InvalidArgument("synthetic spec: SNR must be positive");
    if (!(separation >= 0.0)) throw InvalidArgument("synthetic spec: separation must be >= 0");
    if (!view_signal.empty() && view_signal.size() != dims.size()) {
        throw InvalidArgument("synthetic spec: view_signal needs one entry per view");
    }
}

MultiOmicsDataset synth_generate(const SyntheticSpec& spec) {
    spec.validate();
    const std::size_t m = spec.dims.size();
    const std::size_t s = spec.signal_dim;
    RngStream mean_rng(spec.seed, "synth/class-means");
    Tensor means(spec.num_classes, s);
    for (double& v : means.values()) v = spec.separation * mean_rng.normal();

    MultiOmicsDataset ds;
    ds.num_classes = spec.num_classes;
    ds.labels.resize(spec.n);
    for (std::size_t j = 0; j < spec.n; ++j) ds.labels[j] = static_cast<int>(j % spec.num_classes);

    RngStream latent_rng(spec.seed, "synth/latent");
    Tensor class_part(spec.n, s);
    Tensor noise_part(spec.n, s);
    for (std::size_t j = 0; j < spec.n; ++j)
        for (std::size_t c = 0; c < s; ++c) {
            class_part(j, c) = means(static_cast<std::size_t>(ds.labels[j]), c);
            noise_part(j, c) = latent_rng.normal();
        }

    const double load_scale = 1.0 / std::sqrt(static_cast<double>(s));
    for (std::size_t i = 0; i < m; ++i) {
        RngStream map_rng(spec.seed, "synth/map" + std::to_string(i));
        Tensor loading(s, spec.dims[i]);
        for (double& v : loading.values()) v = load_scale * map_rng.normal();
        const double w = spec.view_signal.empty() ? 1.0 : spec.view_signal[i];
        Tensor latent(spec.n, s);
        for (std::size_t k = 0; k < latent.size(); ++k) latent[k] = w * class_part[k] + noise_part[k];
        Tensor x = matmul(latent, loading);
        RngStream noise_rng(spec.seed, "synth/noise" + std::to_string(i));
        for (double& v : x.values()) v += noise_rng.normal() / spec.snr;
        ds.views.push_back(std::move(x));
        ds.view_names.push_back("view" + std::to_string(i));
        std::vector<std::string> names;
        for (std::size_t f = 0; f < spec.dims[i]; ++f) names.push_back("v" + std::to_string(i) + "_f" + std::to_string(f));
        ds.feature_names.push_back(std::move(names));
    }
    ds.mask = ObservationMask(spec.n, m, true);
    std::ostringstream prov;
    prov << "synthetic n=" << spec.n << " classes=" << spec.num_classes << " snr=" << spec.snr
         << " separation=" << spec.separation << " seed=" << spec.seed;
    ds.provenance = prov.str();
    return ds;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>>
split_indices(const std::vector<int>& labels, std::size_t num_classes, const SplitSpec& spec) {
    if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
        throw InvalidArgument("train fraction must be in (0, 1)");
    }
    const std::size_t n = labels.size();
    const auto n_train =
        static_cast<std::size_t>(std::llround(spec.train_fraction * static_cast<double>(n)));
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;

    if (!spec.stratified) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        RngStream rng(spec.seed, "split");
        rng.shuffle(order);
        train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
        test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    } else {
        std::vector<std::vector<std::size_t>> members(num_classes);
        for (std::size_t j = 0; j < n; ++j) members.at(static_cast<std::size_t>(labels[j])).push_back(j);
        std::vector<std::size_t> quota(num_classes, 0);
        std::vector<double> remainder(num_classes, -1.0);
        std::size_t allotted = 0;
        for (std::size_t c = 0; c < num_classes; ++c) {
            if (members[c].empty()) continue;
            if (members[c].size() < 2) {
                throw InvalidArgument("stratified split: class " + std::to_string(c) +
                                      " has fewer than 2 subjects");
            }
            const double exact = spec.train_fraction * static_cast<double>(members[c].size());
            quota[c] = static_cast<std::size_t>(std::floor(exact));
            remainder[c] = exact - static_cast<double>(quota[c]);
            allotted += quota[c];
        }
        std::vector<std::size_t> by_remainder(num_classes);
        std::iota(by_remainder.begin(), by_remainder.end(), 0);
        std::stable_sort(by_remainder.begin(), by_remainder.end(),
                         [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
        for (std::size_t c : by_remainder) {
            if (allotted >= n_train) break;
            if (members[c].empty() || quota[c] >= members[c].size()) continue;
            ++quota[c];
            ++allotted;
        }
        for (std::size_t c = 0; c < num_classes; ++c) {
            RngStream rng(spec.seed, "split/class" + std::to_string(c));
            rng.shuffle(members[c]);
            for (std::size_t t = 0; t < members[c].size(); ++t)
                (t < quota[c] ? train : test).push_back(members[c][t]);
        }
    }
    if (train.empty() || test.empty()) {
        throw InvalidArgument("split leaves an empty side; N=" + std::to_string(n));
    }
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
    return {train, test};
}

std::pair<MultiOmicsDataset, MultiOmicsDataset> split(const MultiOmicsDataset& ds,
                                                      const SplitSpec& spec) {
    auto [train, test] = split_indices(ds.labels, ds.num_classes, spec);
    return {ds.select_subjects(train), ds.select_subjects(test)};
}

std::string file_digest(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    std::ostringstream hex;
    hex << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(os.str());
    return "fnv1a64:" + hex.str();
}

} // namespace clclsa
