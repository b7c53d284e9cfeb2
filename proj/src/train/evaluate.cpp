#include "t3d/train/evaluate.hpp"

#include "t3d/metrics/report.hpp"
#include "t3d/train/trainer.hpp"

namespace t3d::train {

namespace {

void check_inputs(const model::ModelConfig& c, bool has_topogram, bool has_mask) {
  const auto name = std::string(model::to_string(c.variant));
  if (model::reads_topogram(c.variant) && !has_topogram) throw VariantMismatch(name + " model requires a topogram");
  if (model::reads_mask(c.variant) && !has_mask) throw VariantMismatch(name + " model requires a mask");
  if (!model::reads_mask(c.variant) && has_mask) throw VariantMismatch(name + " model does not accept a mask");
}

}  // namespace

voxel::VoxelGrid predict(const model::ReconstructionModel<float>& m, const voxel::Topogram* topogram, const voxel::Mask2D* mask,
                         voxel::Spacing spacing) {
  const auto& c = m.config();
  check_inputs(c, topogram != nullptr, mask != nullptr);
  model::Batch<float> b;
  if (model::reads_topogram(c.variant)) {
    if (topogram->dim() != c.dims.topogram) {
      throw DimensionMismatch("topogram is " + std::to_string(topogram->dim()) + " pixels, model expects " +
                              std::to_string(c.dims.topogram));
    }
    b.topograms = model::image_batch<float>(1, c.dims.topogram);
    model::set_example<float>(b.topograms, 0, topogram->values());
  }
  if (model::reads_mask(c.variant)) {
    if (mask->width() != c.dims.mask || mask->height() != c.dims.mask) {
      throw DimensionMismatch("mask is " + std::to_string(mask->width()) + "x" + std::to_string(mask->height()) +
                              ", model expects " + std::to_string(c.dims.mask));
    }
    b.masks = model::image_batch<float>(1, c.dims.mask);
    model::set_example<float>(b.masks, 0, mask->values());
  }
  return model::probability_grid(m.predict(b), 0, spacing);
}

std::vector<metrics::LabeledGrid> predict_cases(const model::ReconstructionModel<float>& m, const DataSource& source,
                                                const std::vector<std::string>& ids, int batch_size) {
  const auto& c = m.config();
  if (batch_size <= 0) throw InvalidArgument("batch size must be positive");
  const Fields fields{true, model::reads_topogram(c.variant), model::reads_mask(c.variant)};
  std::vector<metrics::LabeledGrid> out;
  for (std::size_t begin = 0; begin < ids.size(); begin += batch_size) {
    const std::size_t end = std::min(ids.size(), begin + batch_size);
    const int n = static_cast<int>(end - begin);
    model::Batch<float> b;
    if (fields.topogram) b.topograms = model::image_batch<float>(n, c.dims.topogram);
    if (fields.mask) b.masks = model::image_batch<float>(n, c.dims.mask);
    std::vector<voxel::Spacing> spacing;
    for (int i = 0; i < n; ++i) {
      const auto rec = source.load(ids[begin + i], fields);
      spacing.push_back(rec.shape->spacing());
      if (fields.topogram) {
        if (rec.topogram->dim() != c.dims.topogram) throw DimensionMismatch("topogram size of '" + rec.id + "' does not match the model");
        model::set_example<float>(b.topograms, i, rec.topogram->values());
      }
      if (fields.mask) {
        if (rec.mask->width() != c.dims.mask) throw DimensionMismatch("mask size of '" + rec.id + "' does not match the model");
        model::set_example<float>(b.masks, i, rec.mask->values());
      }
    }
    const auto pred = m.predict(b);
    for (int i = 0; i < n; ++i) out.push_back({ids[begin + i], model::probability_grid(pred, i, spacing[i])});
  }
  return out;
}

metrics::MetricsReport evaluate(const model::ReconstructionModel<float>& m, const DataSource& source,
                                const std::vector<std::string>& ids, double threshold) {
  std::vector<metrics::LabeledGrid> preds, truths;
  for (auto& p : predict_cases(m, source, ids)) preds.push_back({p.id, voxel::binarize(p.grid, threshold)});
  for (const auto& id : ids) truths.push_back({id, *source.load(id, Fields{true, false, false}).shape});
  return metrics::evaluate_dataset(preds, truths);
}

AblationResult run_ablation(const std::vector<AblationRun>& runs, const DatasetSplit& split, const DataSource& source,
                            const std::function<void(const std::string&)>& progress) {
  split.validate();
  AblationResult result;
  for (const auto& run : runs) {
    if (progress) progress("training " + run.label);
    const auto trained = train(run.config, split, source);
    const auto m = model::restore_model(trained.checkpoint);
    if (progress) progress("evaluating " + run.label);
    result.reports.emplace_back(run.label, evaluate(m, source, split.test_ids));
  }
  result.tables = metrics::comparison_tables(result.reports);
  return result;
}

}  // namespace t3d::train
