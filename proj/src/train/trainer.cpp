#include "t3d/train/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "t3d/metrics/metrics.hpp"
#include "t3d/random.hpp"
#include "t3d/voxel/projection.hpp"

namespace t3d::train {

namespace {

struct CachedExample {
  std::string id;
  std::vector<float> shape;
  std::vector<float> topogram;
  std::vector<float> mask;
  voxel::Spacing spacing;
};

nlohmann::json terms_json(const model::LossComponents& t) {
  return {{"rec_shape", t.rec_shape}, {"kl", t.kl}, {"rec_observation", t.rec_observation}, {"mask", t.mask}};
}

nlohmann::json resumable_part(nlohmann::json j) {
  j.erase("epochs");
  j.erase("checkpoint_every");
  return j;
}

std::vector<CachedExample> load_training_set(const TrainingConfig& c, const std::vector<std::string>& ids,
                                             const DataSource& source, bool need_masks) {
  const bool need_topograms = model::reads_topogram(c.variant);
  std::vector<CachedExample> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    if (!source.contains(id)) throw InvalidArgument("training case '" + id + "' is missing from the data source");
    auto rec = source.load(id, Fields{true, need_topograms, false});
    if (!rec.shape || rec.shape->dim() != c.dims.grid) throw DimensionMismatch("case '" + id + "' does not match grid_dim");
    CachedExample ex;
    ex.id = id;
    ex.spacing = rec.shape->spacing();
    ex.shape.assign(rec.shape->values().begin(), rec.shape->values().end());
    if (need_topograms) {
      if (!rec.topogram || rec.topogram->dim() != c.dims.topogram) {
        throw DimensionMismatch("topogram of case '" + id + "' does not match topo_dim");
      }
      ex.topogram.assign(rec.topogram->values().begin(), rec.topogram->values().end());
    }
    if (need_masks) {
      const auto k = voxel::project_orthographic(*rec.shape, c.axis);
      ex.mask.assign(k.values().begin(), k.values().end());
    }
    out.push_back(std::move(ex));
  }
  return out;
}

model::Batch<float> assemble(const TrainingConfig& c, const std::vector<CachedExample>& cache, const std::vector<int>& order,
                             std::size_t begin, std::size_t end) {
  const int n = static_cast<int>(end - begin);
  model::Batch<float> b;
  b.shapes = model::volume_batch<float>(n, c.dims.grid);
  const bool topo = !cache[order[begin]].topogram.empty();
  const bool mask = !cache[order[begin]].mask.empty();
  if (topo) b.topograms = model::image_batch<float>(n, c.dims.topogram);
  if (mask) b.masks = model::image_batch<float>(n, c.dims.mask);
  for (int i = 0; i < n; ++i) {
    const auto& ex = cache[order[begin + i]];
    model::set_example<float>(b.shapes, i, ex.shape);
    if (topo) model::set_example<float>(b.topograms, i, ex.topogram);
    if (mask) model::set_example<float>(b.masks, i, ex.mask);
  }
  return b;
}

void calibrate(model::ReconstructionModel<float>& m, const TrainingConfig& c, const std::vector<CachedExample>& cache) {
  std::vector<int> order(cache.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t bs = static_cast<std::size_t>(c.batch_size);
  const std::size_t chunks = (cache.size() + bs - 1) / bs;
  m.calibrate_batchnorm(chunks, [&](std::size_t k) {
    return assemble(c, cache, order, k * bs, std::min(cache.size(), (k + 1) * bs));
  });
}

nlohmann::json training_snapshot(const model::ReconstructionModel<float>& m, const TrainingConfig& c,
                                 const std::vector<CachedExample>& cache) {
  std::vector<int> order(cache.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t bs = static_cast<std::size_t>(c.batch_size);
  double iou = 0.0;
  for (std::size_t k = 0; k < cache.size(); k += bs) {
    const auto batch = assemble(c, cache, order, k, std::min(cache.size(), k + bs));
    const auto pred = m.predict(batch);
    for (int i = 0; i < batch.size(); ++i) {
      const voxel::Spacing unit{};
      const auto p = voxel::binarize(model::probability_grid(pred, i, unit), 0.5);
      const voxel::VoxelGrid gt(c.dims.grid, unit, voxel::Occupancy::binary, cache[order[k + i]].shape);
      iou += metrics::iou(p, gt);
    }
  }
  return {{"train_iou", iou / static_cast<double>(cache.size())}};
}

model::Checkpoint make_checkpoint(const model::ReconstructionModel<float>& m, const model::Adam& adam, const TrainingConfig& c,
                                  int epoch, std::int64_t step, const std::vector<EpochRecord>& epochs,
                                  const voxel::Spacing& spacing) {
  auto ckpt = model::snapshot(m, &adam);
  ckpt.training = to_json(c);
  ckpt.seed = c.seed;
  ckpt.epoch = epoch;
  ckpt.step = step;
  if (!epochs.empty()) {
    const auto& last = epochs.back();
    ckpt.summary = {{"epoch", last.epoch}, {"loss", last.mean_total}, {"terms", terms_json(last.mean)}};
  }
  ckpt.summary["spacing_mm"] = {spacing.x, spacing.y, spacing.z};
  return ckpt;
}

}  // namespace

TrainingDiverged::TrainingDiverged(std::string term, int epoch, std::int64_t step)
    : Error("non-finite loss term '" + term + "' at epoch " + std::to_string(epoch) + ", step " + std::to_string(step)),
      term_(std::move(term)) {}

nlohmann::json to_json(const StepRecord& r) {
  return {{"type", "step"},        {"epoch", r.epoch},   {"step", r.step},          {"batch_size", r.batch_size},
          {"terms", terms_json(r.terms)}, {"total", r.total}, {"wall_ms", r.wall_ms}};
}

nlohmann::json to_json(const EpochRecord& r) {
  nlohmann::json j = {{"type", "epoch"},  {"epoch", r.epoch},      {"steps", r.steps},
                      {"terms", terms_json(r.mean)}, {"total", r.mean_total}, {"wall_ms", r.wall_ms}};
  if (r.snapshot) j["snapshot"] = *r.snapshot;
  return j;
}

TrainingResult train(const TrainingConfig& config, const DatasetSplit& split, const DataSource& source,
                     const TrainOptions& options) {
  using clock = std::chrono::steady_clock;
  config.validate();
  if (split.train_ids.empty()) throw InvalidArgument("split has no training cases");

  model::ReconstructionModel<float> m(config.model_config());
  model::Adam adam({config.learning_rate});
  int start_epoch = 0;
  std::int64_t step = 0;
  if (options.resume) {
    const auto& r = *options.resume;
    if (!(r.model == config.model_config())) throw InvalidArgument("resume checkpoint describes a different model");
    if (resumable_part(r.training) != resumable_part(to_json(config))) {
      throw InvalidArgument("resume checkpoint was trained with a different configuration");
    }
    model::load_parameters(m, r);
    adam = model::restore_optimizer(r, {config.learning_rate});
    start_epoch = r.epoch;
    step = r.step;
  } else {
    m.initialize(config.effective_init_seed());
  }

  const bool mask_loss = config.alphas.alpha4 > 0.0;
  const auto cache = load_training_set(config, split.train_ids, source, mask_loss || model::reads_mask(config.variant));

  std::ofstream log;
  if (!options.log_path.empty()) {
    log.open(options.log_path, options.resume ? std::ios::app : std::ios::trunc);
    if (!log) throw IoError("cannot open training log " + options.log_path.string());
  }
  auto emit = [&log](const nlohmann::json& j) {
    if (log.is_open()) log << j.dump() << '\n';
  };

  TrainingResult result;
  const std::size_t n = cache.size();
  const std::size_t bs = static_cast<std::size_t>(config.batch_size);
  const int latent = config.dims.latent;
  std::vector<float> noise;
  for (int epoch = start_epoch; epoch < config.epochs; ++epoch) {
    const auto epoch_start = clock::now();
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(derive_seed(config.effective_shuffle_seed(), {static_cast<std::uint64_t>(epoch)}));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochRecord er;
    er.epoch = epoch + 1;
    double weighted = 0.0;
    for (std::size_t begin = 0, b = 0; begin < n; begin += bs, ++b) {
      const auto step_start = clock::now();
      const std::size_t end = std::min(n, begin + bs);
      const auto batch = assemble(config, cache, order, begin, end);
      noise.resize((end - begin) * latent);
      std::mt19937_64 noise_rng(derive_seed(config.effective_noise_seed(), {static_cast<std::uint64_t>(epoch), b}));
      std::normal_distribution<float> normal;
      for (auto& v : noise) v = normal(noise_rng);

      m.zero_grad();
      const auto out = m.train_step(batch, config.alphas, noise);
      const std::pair<const char*, double> terms[] = {{"rec_shape", out.terms.rec_shape},
                                                      {"kl", out.terms.kl},
                                                      {"rec_observation", out.terms.rec_observation},
                                                      {"mask", out.terms.mask}};
      for (const auto& [name, value] : terms) {
        if (!std::isfinite(value)) throw TrainingDiverged(name, epoch + 1, step + 1);
      }
      if (!std::isfinite(out.total)) throw TrainingDiverged("total", epoch + 1, step + 1);
      adam.step(m.parameters());
      ++step;

      StepRecord sr{epoch + 1, step, static_cast<int>(end - begin), out.terms, out.total,
                    std::chrono::duration<double, std::milli>(clock::now() - step_start).count()};
      emit(to_json(sr));
      const double w = static_cast<double>(end - begin);
      er.mean.rec_shape += w * out.terms.rec_shape;
      er.mean.kl += w * out.terms.kl;
      er.mean.rec_observation += w * out.terms.rec_observation;
      er.mean.mask += w * out.terms.mask;
      weighted += w * out.total;
      ++er.steps;
      result.log.steps.push_back(sr);
    }
    er.mean.rec_shape /= n;
    er.mean.kl /= n;
    er.mean.rec_observation /= n;
    er.mean.mask /= n;
    er.mean_total = weighted / n;

    const bool last = epoch + 1 == config.epochs;
    const bool do_snapshot = options.snapshot_every > 0 && ((epoch + 1) % options.snapshot_every == 0 || last);
    const bool do_checkpoint = !options.checkpoint_path.empty() && config.checkpoint_every > 0 &&
                               (epoch + 1) % config.checkpoint_every == 0 && !last;
    if (do_snapshot || do_checkpoint) calibrate(m, config, cache);
    if (do_snapshot) er.snapshot = training_snapshot(m, config, cache);
    er.wall_ms = std::chrono::duration<double, std::milli>(clock::now() - epoch_start).count();
    emit(to_json(er));
    result.log.epochs.push_back(er);
    if (do_checkpoint) {
      model::save_checkpoint(options.checkpoint_path, make_checkpoint(m, adam, config, epoch + 1, step, result.log.epochs, cache.front().spacing));
    }
    if (options.on_epoch) options.on_epoch(er);
  }

  calibrate(m, config, cache);
  result.checkpoint = make_checkpoint(m, adam, config, std::max(config.epochs, start_epoch), step, result.log.epochs, cache.front().spacing);
  if (options.resume && result.log.epochs.empty()) {
    result.checkpoint.summary = options.resume->summary;
    result.checkpoint.summary["spacing_mm"] = {cache.front().spacing.x, cache.front().spacing.y, cache.front().spacing.z};
  }
  if (!options.checkpoint_path.empty()) model::save_checkpoint(options.checkpoint_path, result.checkpoint);
  return result;
}

}  // namespace t3d::train
