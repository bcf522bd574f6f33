#pragma once

#include "clclsa/experiments.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace clclsa {

enum class ReportFormat { Csv, Json };

ReportFormat parse_report_format(const std::string& text);

/// dataset,variant,eta,seed,lambda_al,lambda_co,lambda_cl,alpha,acc,f1,auc,weighted_f1,macro_f1,status
inline constexpr const char* kReportHeader =
    "dataset,variant,eta,seed,lambda_al,lambda_co,lambda_cl,alpha,acc,f1,auc,weighted_f1,macro_f1,status";

std::string report_csv(const std::vector<TrialRow>& rows);
std::string report_json(const std::vector<TrialRow>& rows);
std::vector<TrialRow> parse_report_csv(const std::string& text);
std::vector<TrialRow> parse_report_json(const std::string& text);

/// Writes the table atomically. Throws IoError when the path is unwritable.
void emit_report(const std::vector<TrialRow>& rows, const std::filesystem::path& path,
                 ReportFormat format);

} // namespace clclsa
