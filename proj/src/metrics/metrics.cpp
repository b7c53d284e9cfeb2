#include "t3d/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "t3d/error.hpp"

namespace t3d::metrics {

namespace {

struct Counts {
  long long a = 0;
  long long b = 0;
  long long both = 0;
};

Counts count(const VoxelGrid& a, const VoxelGrid& b) {
  if (a.dim() != b.dim()) throw DimensionMismatch("metric operands have different dimensions");
  if (!a.is_binary() || !b.is_binary()) throw InvalidArgument("overlap metrics require binary grids");
  Counts c;
  auto va = a.values();
  auto vb = b.values();
  for (std::size_t i = 0; i < va.size(); ++i) {
    const bool ia = va[i] != 0.0f;
    const bool ib = vb[i] != 0.0f;
    c.a += ia;
    c.b += ib;
    c.both += ia && ib;
  }
  return c;
}

// Directed max-min distance with early termination: once a point has a neighbour closer than the
// running maximum it cannot raise the maximum. Returns squared distance.
template <typename Dist>
double directed_max(const std::vector<std::array<int, 3>>& from, const std::vector<std::array<int, 3>>& to,
                    Dist dist2) {
  double cmax = 0.0;
  for (const auto& p : from) {
    double cmin = std::numeric_limits<double>::infinity();
    for (const auto& q : to) {
      const double d = dist2(p, q);
      if (d < cmax) {
        cmin = d;
        break;
      }
      cmin = std::min(cmin, d);
    }
    cmax = std::max(cmax, cmin);
  }
  return cmax;
}

template <typename Dist>
std::vector<double> directed_all(const std::vector<std::array<int, 3>>& from, const std::vector<std::array<int, 3>>& to,
                                 Dist dist2) {
  std::vector<double> out;
  out.reserve(from.size());
  for (const auto& p : from) {
    double cmin = std::numeric_limits<double>::infinity();
    for (const auto& q : to) {
      cmin = std::min(cmin, dist2(p, q));
      if (cmin == 0.0) break;
    }
    out.push_back(cmin);
  }
  return out;
}

double nearest_rank_95(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(v.size())));
  return v[std::max<std::size_t>(rank, 1) - 1];
}

}  // namespace

double iou(const VoxelGrid& a, const VoxelGrid& b) {
  const auto c = count(a, b);
  const long long uni = c.a + c.b - c.both;
  if (uni == 0) return 1.0;
  return static_cast<double>(c.both) / static_cast<double>(uni);
}

double dice(const VoxelGrid& a, const VoxelGrid& b) {
  const auto c = count(a, b);
  if (c.a + c.b == 0) return 1.0;
  return 2.0 * static_cast<double>(c.both) / static_cast<double>(c.a + c.b);
}

std::vector<std::array<int, 3>> surface_voxels(const VoxelGrid& grid) {
  if (!grid.is_binary()) throw InvalidArgument("surface extraction requires a binary grid");
  const int d = grid.dim();
  constexpr int kNeighbour[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  std::vector<std::array<int, 3>> out;
  for (int z = 0; z < d; ++z) {
    for (int y = 0; y < d; ++y) {
      for (int x = 0; x < d; ++x) {
        if (grid.at(x, y, z) == 0.0f) continue;
        for (const auto& n : kNeighbour) {
          const int nx = x + n[0], ny = y + n[1], nz = z + n[2];
          if (!grid.in_bounds(nx, ny, nz) || grid.at(nx, ny, nz) == 0.0f) {
            out.push_back({x, y, z});
            break;
          }
        }
      }
    }
  }
  return out;
}

HausdorffDistance hausdorff(const VoxelGrid& a, const VoxelGrid& b, HausdorffMode mode) {
  if (a.dim() != b.dim()) throw DimensionMismatch("hausdorff operands have different dimensions");
  if (!(a.spacing() == b.spacing())) throw DimensionMismatch("hausdorff operands have different spacing");
  const auto sa = surface_voxels(a);
  const auto sb = surface_voxels(b);
  if (sa.empty() || sb.empty()) throw UndefinedMetric("hausdorff distance is undefined for an empty grid");

  const auto sp = a.spacing();
  auto vox2 = [](const std::array<int, 3>& p, const std::array<int, 3>& q) {
    const long long dx = p[0] - q[0], dy = p[1] - q[1], dz = p[2] - q[2];
    return static_cast<double>(dx * dx + dy * dy + dz * dz);
  };
  auto mm2 = [sp](const std::array<int, 3>& p, const std::array<int, 3>& q) {
    const double dx = (p[0] - q[0]) * sp.x, dy = (p[1] - q[1]) * sp.y, dz = (p[2] - q[2]) * sp.z;
    return dx * dx + dy * dy + dz * dz;
  };

  if (mode == HausdorffMode::max) {
    return {std::sqrt(std::max(directed_max(sa, sb, vox2), directed_max(sb, sa, vox2))),
            std::sqrt(std::max(directed_max(sa, sb, mm2), directed_max(sb, sa, mm2)))};
  }
  return {std::sqrt(std::max(nearest_rank_95(directed_all(sa, sb, vox2)), nearest_rank_95(directed_all(sb, sa, vox2)))),
          std::sqrt(std::max(nearest_rank_95(directed_all(sa, sb, mm2)), nearest_rank_95(directed_all(sb, sa, mm2))))};
}

double volume_error(double v_pred, double v_gt) {
  if (!(v_gt > 0.0)) throw InvalidArgument("volume_error requires a positive ground-truth volume");
  return std::abs(v_pred - v_gt) / v_gt;
}

CaseMetrics evaluate_case(const std::string& id, const VoxelGrid& prediction, const VoxelGrid& truth,
                          HausdorffMode mode) {
  CaseMetrics row;
  row.id = id;
  row.iou = iou(prediction, truth);
  row.dice = dice(prediction, truth);
  try {
    row.hausdorff = hausdorff(prediction, truth, mode);
  } catch (const UndefinedMetric&) {
    row.hausdorff.reset();
  }
  row.volume_pred_ml = voxel::voxel_volume(prediction).milliliters;
  row.volume_gt_ml = voxel::voxel_volume(truth).milliliters;
  row.volume_error = volume_error(row.volume_pred_ml, row.volume_gt_ml);
  return row;
}

AggregateMetrics aggregate(const std::vector<CaseMetrics>& rows) {
  AggregateMetrics agg;
  agg.cases = rows.size();
  std::size_t defined = 0;
  for (const auto& r : rows) {
    agg.iou += r.iou;
    agg.dice += r.dice;
    agg.volume_error += r.volume_error;
    if (r.hausdorff) {
      agg.hausdorff_voxels += r.hausdorff->voxels;
      agg.hausdorff_mm += r.hausdorff->mm;
      ++defined;
    }
  }
  if (!rows.empty()) {
    const auto n = static_cast<double>(rows.size());
    agg.iou /= n;
    agg.dice /= n;
    agg.volume_error /= n;
  }
  if (defined > 0) {
    agg.hausdorff_voxels /= static_cast<double>(defined);
    agg.hausdorff_mm /= static_cast<double>(defined);
  }
  agg.hausdorff_undefined = rows.size() - defined;
  return agg;
}

MetricsReport evaluate_dataset(const std::vector<LabeledGrid>& predictions, const std::vector<LabeledGrid>& ground_truths,
                               HausdorffMode mode) {
  std::map<std::string, const VoxelGrid*> truth_by_id;
  for (const auto& g : ground_truths) {
    if (!truth_by_id.emplace(g.id, &g.grid).second) throw InvalidArgument("duplicate ground-truth id '" + g.id + "'");
  }
  std::map<std::string, const VoxelGrid*> pred_by_id;
  for (const auto& p : predictions) {
    if (!pred_by_id.emplace(p.id, &p.grid).second) throw InvalidArgument("duplicate prediction id '" + p.id + "'");
  }
  if (pred_by_id.size() != truth_by_id.size()) throw InvalidArgument("prediction and ground-truth id sets differ");

  MetricsReport report;
  for (const auto& [id, pred] : pred_by_id) {
    auto it = truth_by_id.find(id);
    if (it == truth_by_id.end()) throw InvalidArgument("no ground truth for prediction id '" + id + "'");
    report.per_case.push_back(evaluate_case(id, *pred, *it->second, mode));
  }
  report.aggregate = aggregate(report.per_case);
  return report;
}

}  // namespace t3d::metrics
