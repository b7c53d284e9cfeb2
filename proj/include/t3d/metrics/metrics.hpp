#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "t3d/voxel/grid.hpp"

namespace t3d::metrics {

using voxel::VoxelGrid;

/// |a & b| / |a | b|; 1 when both grids are empty.
double iou(const VoxelGrid& a, const VoxelGrid& b);

/// 2|a & b| / (|a| + |b|); 1 when both grids are empty.
double dice(const VoxelGrid& a, const VoxelGrid& b);

enum class HausdorffMode {
  max,           ///< exact symmetric Hausdorff distance (default)
  percentile95,  ///< max of the two directed 95th-percentile distances; not the default
};

struct HausdorffDistance {
  double voxels = 0.0;  ///< in voxel-index units
  double mm = 0.0;      ///< with each axis scaled by the grid spacing
};

/// Set voxels with at least one unset 6-neighbour; the grid border counts as unset.
std::vector<std::array<int, 3>> surface_voxels(const VoxelGrid& grid);

/// Symmetric Hausdorff distance between the surface-voxel centre sets of two binary grids.
/// Throws UndefinedMetric when either grid is empty.
HausdorffDistance hausdorff(const VoxelGrid& a, const VoxelGrid& b, HausdorffMode mode = HausdorffMode::max);

/// |v_pred - v_gt| / v_gt. Requires v_gt > 0.
double volume_error(double v_pred, double v_gt);

struct CaseMetrics {
  std::string id;
  double iou = 0.0;
  double dice = 0.0;
  /// Empty when one of the grids has no voxels.
  std::optional<HausdorffDistance> hausdorff;
  double volume_pred_ml = 0.0;
  double volume_gt_ml = 0.0;
  double volume_error = 0.0;
};

struct AggregateMetrics {
  std::size_t cases = 0;
  double iou = 0.0;
  double dice = 0.0;
  double hausdorff_voxels = 0.0;
  double hausdorff_mm = 0.0;
  std::size_t hausdorff_undefined = 0;
  double volume_error = 0.0;
};

struct MetricsReport {
  std::vector<CaseMetrics> per_case;  ///< sorted by id
  AggregateMetrics aggregate;         ///< unweighted means
};

struct LabeledGrid {
  std::string id;
  VoxelGrid grid;
};

CaseMetrics evaluate_case(const std::string& id, const VoxelGrid& prediction, const VoxelGrid& truth,
                          HausdorffMode mode = HausdorffMode::max);

/// Per-case metrics and their means. Both lists must carry the same ids (any order); throws
/// InvalidArgument on mismatch. Predictions and ground truths must be binary.
MetricsReport evaluate_dataset(const std::vector<LabeledGrid>& predictions, const std::vector<LabeledGrid>& ground_truths,
                               HausdorffMode mode = HausdorffMode::max);

/// Recomputes the means of a list of case rows.
AggregateMetrics aggregate(const std::vector<CaseMetrics>& rows);

}  // namespace t3d::metrics
