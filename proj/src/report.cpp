#include "clclsa/report.hpp"

#include "clclsa/errors.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

namespace clclsa {

using nlohmann::json;

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells(1);
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cells.back() += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cells.back() += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            cells.emplace_back();
        } else {
            cells.back() += c;
        }
    }
    return cells;
}

double parse_num(const std::string& s, std::size_t line) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ParseError("report line " + std::to_string(line) + ": not a number: '" + s + "'");
    }
}

std::optional<double> parse_opt(const std::string& s, std::size_t line) {
    if (s.empty()) return std::nullopt;
    return parse_num(s, line);
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> opt_from(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
}

} // namespace

ReportFormat parse_report_format(const std::string& text) {
    if (text == "csv") return ReportFormat::Csv;
    if (text == "json") return ReportFormat::Json;
    throw InvalidArgument("unknown report format: " + text);
}

std::string report_csv(const std::vector<TrialRow>& rows) {
    std::ostringstream os;
    os << kReportHeader << '\n';
    for (const auto& r : rows) {
        os << quote(r.dataset) << ',' << quote(r.variant) << ',' << num(r.eta) << ',';
        if (r.seed) os << *r.seed;
        os << ',' << num(r.weights.lambda_al) << ',' << num(r.weights.lambda_co) << ','
           << num(r.weights.lambda_cl) << ',' << num(r.weights.alpha) << ',';
        if (r.metrics) {
            const auto& m = *r.metrics;
            os << num(m.acc) << ',' << (m.f1 ? num(*m.f1) : "") << ','
               << (m.auc ? num(*m.auc) : "") << ',' << num(m.weighted_f1) << ','
               << num(m.macro_f1);
        } else {
            os << ",,,,";
        }
        os << ',' << quote(r.status) << '\n';
    }
    return os.str();
}

std::vector<TrialRow> parse_report_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line) || line != kReportHeader) {
        throw ParseError("report: missing or unexpected header");
    }
    std::vector<TrialRow> rows;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto c = split_csv_line(line);
        if (c.size() != 14) {
            throw ParseError("report line " + std::to_string(lineno) + ": expected 14 cells, got " +
                             std::to_string(c.size()));
        }
        TrialRow r;
        r.dataset = c[0];
        r.variant = c[1];
        r.eta = parse_num(c[2], lineno);
        if (!c[3].empty()) r.seed = std::stoull(c[3]);
        r.weights.lambda_al = parse_num(c[4], lineno);
        r.weights.lambda_co = parse_num(c[5], lineno);
        r.weights.lambda_cl = parse_num(c[6], lineno);
        r.weights.alpha = parse_num(c[7], lineno);
        if (!c[8].empty()) {
            MetricValues m;
            m.acc = parse_num(c[8], lineno);
            m.f1 = parse_opt(c[9], lineno);
            m.auc = parse_opt(c[10], lineno);
            m.weighted_f1 = parse_num(c[11], lineno);
            m.macro_f1 = parse_num(c[12], lineno);
            r.metrics = m;
        }
        r.status = c[13];
        rows.push_back(std::move(r));
    }
    return rows;
}

std::string report_json(const std::vector<TrialRow>& rows) {
    json arr = json::array();
    for (const auto& r : rows) {
        json j{{"dataset", r.dataset},
               {"variant", r.variant},
               {"eta", r.eta},
               {"seed", r.seed ? json(*r.seed) : json(nullptr)},
               {"lambda_al", r.weights.lambda_al},
               {"lambda_co", r.weights.lambda_co},
               {"lambda_cl", r.weights.lambda_cl},
               {"alpha", r.weights.alpha},
               {"acc", r.metrics ? json(r.metrics->acc) : json(nullptr)},
               {"f1", r.metrics ? opt_json(r.metrics->f1) : json(nullptr)},
               {"auc", r.metrics ? opt_json(r.metrics->auc) : json(nullptr)},
               {"weighted_f1", r.metrics ? json(r.metrics->weighted_f1) : json(nullptr)},
               {"macro_f1", r.metrics ? json(r.metrics->macro_f1) : json(nullptr)},
               {"status", r.status}};
        if (!r.message.empty()) j["message"] = r.message;
        arr.push_back(std::move(j));
    }
    return json{{"rows", arr}}.dump(2) + "\n";
}

std::vector<TrialRow> parse_report_json(const std::string& text) {
    std::vector<TrialRow> rows;
    try {
        const json doc = json::parse(text);
        for (const auto& j : doc.at("rows")) {
            TrialRow r;
            r.dataset = j.at("dataset").get<std::string>();
            r.variant = j.at("variant").get<std::string>();
            r.eta = j.at("eta").get<double>();
            if (!j.at("seed").is_null()) r.seed = j.at("seed").get<std::uint64_t>();
            r.weights.lambda_al = j.at("lambda_al").get<double>();
            r.weights.lambda_co = j.at("lambda_co").get<double>();
            r.weights.lambda_cl = j.at("lambda_cl").get<double>();
            r.weights.alpha = j.at("alpha").get<double>();
            if (!j.at("acc").is_null()) {
                MetricValues m;
                m.acc = j.at("acc").get<double>();
                m.f1 = opt_from(j, "f1");
                m.auc = opt_from(j, "auc");
                m.weighted_f1 = j.at("weighted_f1").get<double>();
                m.macro_f1 = j.at("macro_f1").get<double>();
                r.metrics = m;
            }
            r.status = j.at("status").get<std::string>();
            r.message = j.value("message", std::string());
            rows.push_back(std::move(r));
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("report json: ") + e.what());
    }
    return rows;
}

void emit_report(const std::vector<TrialRow>& rows, const std::filesystem::path& path,
                 ReportFormat format) {
    const std::string text = format == ReportFormat::Csv ? report_csv(rows) : report_json(rows);
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw IoError("cannot write report to " + path.string());
        out << text;
        if (!out) throw IoError("write failed for " + path.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move report into place at " + path.string() + ": " + ec.message());
}

} // namespace clclsa
