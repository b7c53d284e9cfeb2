#include "t3d/metrics/report.hpp"

#include <charconv>

#include "t3d/voxel/io.hpp"

namespace t3d::metrics {

std::string format_number(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

std::string to_csv(const MetricsReport& report) {
  std::string out = std::string(kCsvHeader) + "\n";
  for (const auto& r : report.per_case) {
    out += r.id + "," + format_number(r.iou) + "," + format_number(r.dice) + ",";
    if (r.hausdorff) out += format_number(r.hausdorff->voxels) + "," + format_number(r.hausdorff->mm);
    else out += ",";
    out += "," + format_number(r.volume_pred_ml) + "," + format_number(r.volume_gt_ml) + "," +
           format_number(r.volume_error) + "\n";
  }
  return out;
}

nlohmann::json to_json(const AggregateMetrics& a) {
  return {{"cases", a.cases},
          {"iou", a.iou},
          {"dice", a.dice},
          {"hausdorff_vox", a.hausdorff_voxels},
          {"hausdorff_mm", a.hausdorff_mm},
          {"hausdorff_undefined_cases", a.hausdorff_undefined},
          {"volume_error", a.volume_error}};
}

nlohmann::json comparison_tables(const std::vector<std::pair<std::string, MetricsReport>>& reports) {
  nlohmann::json methods = nlohmann::json::array();
  nlohmann::json shape = {{"IoU", nlohmann::json::object()},
                          {"Dice", nlohmann::json::object()},
                          {"Hausdorff", nlohmann::json::object()},
                          {"Hausdorff (mm)", nlohmann::json::object()}};
  nlohmann::json volume = {{"Volume Error (V_f)", nlohmann::json::object()}};
  nlohmann::json aggregates = nlohmann::json::object();
  for (const auto& [label, report] : reports) {
    const auto& a = report.aggregate;
    methods.push_back(label);
    shape["IoU"][label] = a.iou;
    shape["Dice"][label] = a.dice;
    shape["Hausdorff"][label] = a.hausdorff_voxels;
    shape["Hausdorff (mm)"][label] = a.hausdorff_mm;
    volume["Volume Error (V_f)"][label] = a.volume_error;
    aggregates[label] = to_json(a);
  }
  return {{"methods", methods},
          {"shape_reconstruction", shape},
          {"volume_prediction", volume},
          {"aggregates", aggregates}};
}

void write_report_dir(const std::filesystem::path& dir, const std::vector<std::pair<std::string, MetricsReport>>& reports) {
  std::filesystem::create_directories(dir);
  for (const auto& [label, report] : reports) voxel::write_file(dir / (label + ".csv"), to_csv(report));
  voxel::write_file(dir / "summary.json", comparison_tables(reports).dump(2) + "\n");
}

}  // namespace t3d::metrics
