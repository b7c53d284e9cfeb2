#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "t3d/metrics/metrics.hpp"

namespace t3d::metrics {

inline constexpr const char* kCsvHeader = "id,iou,dice,hausdorff_vox,hausdorff_mm,volume_pred_ml,volume_gt_ml,volume_error";

/// One row per case; undefined Hausdorff distances are written as empty fields.
std::string to_csv(const MetricsReport& report);

nlohmann::json to_json(const AggregateMetrics& aggregate);

/// Mean metrics of several labelled reports arranged as a metric-by-method table
/// (IoU / Dice / Hausdorff rows) and a volume-error table.
nlohmann::json comparison_tables(const std::vector<std::pair<std::string, MetricsReport>>& reports);

/// Writes <dir>/<label>.csv for every report and <dir>/summary.json with the comparison tables.
void write_report_dir(const std::filesystem::path& dir, const std::vector<std::pair<std::string, MetricsReport>>& reports);

std::string format_number(double v);

}  // namespace t3d::metrics
