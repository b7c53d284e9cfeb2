#include "t3d/model/reconstruction_model.hpp"

#include <cmath>
#include <string>

#include "t3d/random.hpp"
#include "t3d/voxel/projection.hpp"

namespace t3d::model {

std::string_view to_string(Variant variant) {
  switch (variant) {
    case Variant::topogram_only: return "topogram-only";
    case Variant::topogram_mask: return "topogram+mask";
    case Variant::mask_only: return "mask-only";
    case Variant::no_shape_encoder: return "no-shape-encoder";
  }
  return "topogram-only";
}

Variant variant_from_string(std::string_view text) {
  for (Variant v : {Variant::topogram_only, Variant::topogram_mask, Variant::mask_only, Variant::no_shape_encoder}) {
    if (text == to_string(v)) return v;
  }
  throw InvalidArgument("unknown model variant '" + std::string(text) + "'");
}

bool reads_topogram(Variant v) { return v != Variant::mask_only; }
bool reads_mask(Variant v) { return v == Variant::topogram_mask || v == Variant::mask_only; }
bool has_shape_encoder(Variant v) { return v != Variant::no_shape_encoder; }

LossWeights default_weights(Variant v) {
  LossWeights w;
  switch (v) {
    case Variant::topogram_only: w.alpha4 = 0.0; break;
    case Variant::topogram_mask:
    case Variant::mask_only: break;
    case Variant::no_shape_encoder:
      w.alpha1 = 0.0;
      w.alpha2 = 0.0;
      w.alpha4 = 0.0;
      break;
  }
  return w;
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"variant", to_string(c.variant)}, {"dims", to_json(c.dims)}, {"axis", voxel::to_string(c.axis)}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.variant = variant_from_string(j.at("variant").get<std::string>());
  c.dims = model_dims_from_json(j.at("dims"));
  c.axis = voxel::axis_from_string(j.at("axis").get<std::string>());
  return c;
}

std::vector<NetworkSpec> network_specs(const ModelConfig& c) {
  c.dims.validate();
  std::vector<NetworkSpec> out;
  if (has_shape_encoder(c.variant)) out.push_back(shape_encoder_spec(c.dims));
  out.push_back(shape_decoder_spec(c.dims));
  if (reads_topogram(c.variant)) out.push_back(topogram_encoder_spec(c.dims));
  if (reads_mask(c.variant)) out.push_back(mask_branch_spec(c.dims));
  if (c.variant == Variant::topogram_mask) out.push_back(combiner_spec(c.dims));
  return out;
}

template <typename T>
int Batch<T>::size() const {
  if (!shapes.data.empty()) return shapes.batch();
  if (!topograms.data.empty()) return topograms.batch();
  return masks.data.empty() ? 0 : masks.batch();
}

voxel::VoxelGrid probability_grid(const Tensor<float>& decoded, int n, voxel::Spacing spacing) {
  auto ex = decoded.example(n);
  return voxel::VoxelGrid(decoded.shape[4], spacing, voxel::Occupancy::probability, std::vector<float>(ex.begin(), ex.end()));
}

template <typename T>
ReconstructionModel<T>::ReconstructionModel(ModelConfig config)
    : config_(config), decoder_(shape_decoder_spec((config.dims.validate(), config.dims))) {
  const auto& d = config_.dims;
  if (has_shape_encoder(config_.variant)) shape_encoder_.emplace(shape_encoder_spec(d));
  if (reads_topogram(config_.variant)) topogram_branch_.emplace(topogram_encoder_spec(d));
  if (reads_mask(config_.variant)) mask_branch_.emplace(mask_branch_spec(d));
  if (config_.variant == Variant::topogram_mask) combiner_.emplace(combiner_spec(d));
}

template <typename T>
std::vector<const Network<T>*> ReconstructionModel<T>::networks() const {
  std::vector<const Network<T>*> out;
  if (shape_encoder_) out.push_back(&*shape_encoder_);
  out.push_back(&decoder_);
  if (topogram_branch_) out.push_back(&*topogram_branch_);
  if (mask_branch_) out.push_back(&*mask_branch_);
  if (combiner_) out.push_back(&*combiner_);
  return out;
}

template <typename T>
void ReconstructionModel<T>::initialize(std::uint64_t seed) {
  if (shape_encoder_) shape_encoder_->initialize(derive_seed(seed, {1}));
  decoder_.initialize(derive_seed(seed, {2}));
  if (topogram_branch_) topogram_branch_->initialize(derive_seed(seed, {3}));
  if (mask_branch_) mask_branch_->initialize(derive_seed(seed, {4}));
  if (combiner_) combiner_->initialize(derive_seed(seed, {5}));
}

template <typename T>
void ReconstructionModel<T>::check_batch(const Batch<T>& batch, bool need_shapes, bool need_masks) const {
  const int n = batch.size();
  if (n <= 0) throw InvalidArgument("empty batch");
  auto check = [n](const Tensor<T>& t, const char* what) {
    if (t.batch() != n) throw DimensionMismatch(std::string(what) + " batch size differs from the rest of the batch");
  };
  if (need_shapes) check(batch.shapes, "shape");
  if (reads_topogram(config_.variant)) check(batch.topograms, "topogram");
  if (reads_mask(config_.variant) || need_masks) check(batch.masks, "mask");
}

template <typename T>
Tensor<T> ReconstructionModel<T>::observation_forward(const Batch<T>& batch, Mode mode, ObservationTape* tape) const {
  switch (config_.variant) {
    case Variant::topogram_only:
    case Variant::no_shape_encoder:
      return topogram_branch_->forward(batch.topograms, mode, tape ? &tape->topogram : nullptr);
    case Variant::mask_only:
      return mask_branch_->forward(batch.masks, mode, tape ? &tape->mask : nullptr);
    case Variant::topogram_mask: break;
  }
  const Tensor<T> v1 = topogram_branch_->forward(batch.topograms, mode, tape ? &tape->topogram : nullptr);
  const Tensor<T> v2 = mask_branch_->forward(batch.masks, mode, tape ? &tape->mask : nullptr);
  const int n = v1.batch();
  const int l = config_.dims.latent;
  Tensor<T> joined(n, 2 * l, 1, 1, 1);
  for (int i = 0; i < n; ++i) {
    auto dst = joined.example(i);
    auto a = v1.example(i);
    auto b = v2.example(i);
    std::copy(a.begin(), a.end(), dst.begin());
    std::copy(b.begin(), b.end(), dst.begin() + l);
  }
  return combiner_->forward(joined, mode, tape ? &tape->combiner : nullptr);
}

template <typename T>
void ReconstructionModel<T>::observation_backward(const ObservationTape& tape, const Tensor<T>& grad) {
  switch (config_.variant) {
    case Variant::topogram_only:
    case Variant::no_shape_encoder:
      topogram_branch_->backward(tape.topogram, grad, Network<T>::GradAt::output, false);
      return;
    case Variant::mask_only:
      mask_branch_->backward(tape.mask, grad, Network<T>::GradAt::output, false);
      return;
    case Variant::topogram_mask: break;
  }
  const Tensor<T> dj = combiner_->backward(tape.combiner, grad, Network<T>::GradAt::output, true);
  const int n = dj.batch();
  const int l = config_.dims.latent;
  Tensor<T> d1(n, l, 1, 1, 1), d2(n, l, 1, 1, 1);
  for (int i = 0; i < n; ++i) {
    auto src = dj.example(i);
    std::copy(src.begin(), src.begin() + l, d1.example(i).begin());
    std::copy(src.begin() + l, src.end(), d2.example(i).begin());
  }
  topogram_branch_->backward(tape.topogram, d1, Network<T>::GradAt::output, false);
  mask_branch_->backward(tape.mask, d2, Network<T>::GradAt::output, false);
}

template <typename T>
StepOutput<T> ReconstructionModel<T>::train_step(const Batch<T>& batch, const LossWeights& w, std::span<const T> noise,
                                                  Mode mode, std::vector<bool>* relu_pattern) {
  if (relu_pattern) relu_pattern->clear();
  auto record = [relu_pattern](const Network<T>& net, const typename Network<T>::Tape& tape) {
    if (!relu_pattern) return;
    for (std::size_t i = 0; i < tape.layers.size(); ++i) {
      const bool relu = i < net.spec().layers.size() ? net.spec().layers[i].activation == Activation::relu
                                                     : net.spec().dense->activation == Activation::relu;
      if (!relu) continue;
      for (const T v : tape.layers[i].output.data) relu_pattern->push_back(v > T(0));
    }
  };
  const bool use_mask_loss = w.alpha4 > 0.0;
  check_batch(batch, true, use_mask_loss);
  const int n = batch.size();
  const int l = config_.dims.latent;
  const int dim = config_.dims.grid;
  const double voxels = static_cast<double>(batch.shapes.per_example());
  const double norm = 1.0 / (static_cast<double>(n) * voxels);
  StepOutput<T> out;

  if (shape_encoder_) {
    if (noise.size() != static_cast<std::size_t>(n) * l) throw DimensionMismatch("noise must hold batch x latent samples");
    typename Network<T>::Tape qt;
    const Tensor<T> raw = shape_encoder_->forward(batch.shapes, mode, &qt);
    Tensor<T> z(n, l, 1, 1, 1);
    std::vector<T> sigma(static_cast<std::size_t>(n) * l);
    double kl = 0.0;
    for (int i = 0; i < n; ++i) {
      auto r = raw.example(i);
      for (int d = 0; d < l; ++d) {
        const T mu = r[d];
        const T lv = std::clamp(r[l + d], static_cast<T>(-kLogVarLimit), static_cast<T>(kLogVarLimit));
        const T s = std::exp(lv / T(2));
        sigma[static_cast<std::size_t>(i) * l + d] = s;
        z.example(i)[d] = mu + s * noise[static_cast<std::size_t>(i) * l + d];
        kl += -0.5 * (1.0 + lv - static_cast<double>(mu) * mu - std::exp(static_cast<double>(lv)));
      }
    }
    out.terms.kl = kl / n;

    typename Network<T>::Tape pt;
    const Tensor<T> recon = decoder_.forward(z, mode, &pt);
    record(*shape_encoder_, qt);
    record(decoder_, pt);
    out.terms.rec_shape = bce_sum<T>(batch.shapes.data, recon.data) * norm;

    Tensor<T> g(recon.shape[0], recon.shape[1], recon.shape[2], recon.shape[3], recon.shape[4]);
    const T scale = static_cast<T>(w.alpha1 * norm);
    for (std::size_t j = 0; j < g.data.size(); ++j) g.data[j] = scale * (recon.data[j] - batch.shapes.data[j]);
    const Tensor<T> dz = decoder_.backward(pt, g, Network<T>::GradAt::pre_activation, true);

    Tensor<T> draw(n, 2 * l, 1, 1, 1);
    const T kl_scale = static_cast<T>(w.alpha2 / n);
    for (int i = 0; i < n; ++i) {
      auto r = raw.example(i);
      auto dr = draw.example(i);
      auto dzi = dz.example(i);
      for (int d = 0; d < l; ++d) {
        const std::size_t k = static_cast<std::size_t>(i) * l + d;
        const T mu = r[d];
        dr[d] = dzi[d] + kl_scale * mu;
        const T lv_raw = r[l + d];
        if (lv_raw >= static_cast<T>(-kLogVarLimit) && lv_raw <= static_cast<T>(kLogVarLimit)) {
          const T s = sigma[k];
          dr[l + d] = dzi[d] * noise[k] * s / T(2) - kl_scale * (T(1) - s * s) / T(2);
        }
      }
    }
    shape_encoder_->backward(qt, draw, Network<T>::GradAt::output, false);
  }

  ObservationTape ot;
  const Tensor<T> zbar = observation_forward(batch, mode, &ot);
  typename Network<T>::Tape pt;
  const Tensor<T> recon = decoder_.forward(zbar, mode, &pt);
  if (topogram_branch_) record(*topogram_branch_, ot.topogram);
  if (mask_branch_) record(*mask_branch_, ot.mask);
  if (combiner_) record(*combiner_, ot.combiner);
  record(decoder_, pt);
  out.terms.rec_observation = bce_sum<T>(batch.shapes.data, recon.data) * norm;

  Tensor<T> g(recon.shape[0], recon.shape[1], recon.shape[2], recon.shape[3], recon.shape[4]);
  const T scale = static_cast<T>(w.alpha3 * norm);
  for (std::size_t j = 0; j < g.data.size(); ++j) g.data[j] = scale * (recon.data[j] - batch.shapes.data[j]);

  if (use_mask_loss) {
    const std::size_t pixels = static_cast<std::size_t>(dim) * dim;
    std::vector<T> proj(pixels), dproj(pixels), dprob(recon.per_example());
    double mask_sum = 0.0;
    for (int i = 0; i < n; ++i) {
      auto probs = recon.example(i);
      auto target = batch.masks.example(i);
      if (target.size() != pixels) throw DimensionMismatch("mask resolution must equal the grid resolution");
      voxel::soft_project<T>(probs, dim, config_.axis, proj);
      mask_sum += bce_sum<T>(target, proj);
      bce_sum_gradient<T>(target, proj, w.alpha4 / n, dproj);
      std::fill(dprob.begin(), dprob.end(), T(0));
      voxel::soft_project_backward<T>(probs, dim, config_.axis, dproj, dprob);
      auto gi = g.example(i);
      for (std::size_t j = 0; j < dprob.size(); ++j) gi[j] += dprob[j] * probs[j] * (T(1) - probs[j]);
    }
    out.terms.mask = mask_sum / n;
  }

  const Tensor<T> dzbar = decoder_.backward(pt, g, Network<T>::GradAt::pre_activation, true);
  observation_backward(ot, dzbar);

  out.total = combined_loss(out.terms, w);
  return out;
}

template <typename T>
std::vector<GaussianPosterior> ReconstructionModel<T>::encode_shape(const Tensor<T>& shapes) const {
  if (!shape_encoder_) throw InvalidArgument("variant " + std::string(to_string(config_.variant)) + " has no shape encoder");
  const Tensor<T> raw = shape_encoder_->forward(shapes, Mode::eval);
  const int l = config_.dims.latent;
  std::vector<GaussianPosterior> out;
  for (int i = 0; i < raw.batch(); ++i) {
    auto r = raw.example(i);
    out.push_back(make_posterior(std::vector<double>(r.begin(), r.begin() + l), std::vector<double>(r.begin() + l, r.end())));
  }
  return out;
}

template <typename T>
Tensor<T> ReconstructionModel<T>::encode_observation(const Batch<T>& batch) const {
  check_batch(batch, false, false);
  return observation_forward(batch, Mode::eval, nullptr);
}

template <typename T>
Tensor<T> ReconstructionModel<T>::decode(const Tensor<T>& latent) const {
  return decoder_.forward(latent, Mode::eval);
}

template <typename T>
LossComponents ReconstructionModel<T>::evaluate_losses(const Batch<T>& batch, const LossWeights& w) const {
  check_batch(batch, true, w.alpha4 > 0.0);
  const int n = batch.size();
  const int l = config_.dims.latent;
  const int dim = config_.dims.grid;
  const double norm = 1.0 / (static_cast<double>(n) * static_cast<double>(batch.shapes.per_example()));
  LossComponents terms;
  if (shape_encoder_) {
    const auto posts = encode_shape(batch.shapes);
    terms.kl = kl_loss(posts);
    Tensor<T> z(n, l, 1, 1, 1);
    for (int i = 0; i < n; ++i) {
      for (int d = 0; d < l; ++d) z.example(i)[d] = static_cast<T>(posts[i].mu[d]);
    }
    terms.rec_shape = bce_sum<T>(batch.shapes.data, decode(z).data) * norm;
  }
  const Tensor<T> recon = predict(batch);
  terms.rec_observation = bce_sum<T>(batch.shapes.data, recon.data) * norm;
  if (w.alpha4 > 0.0) {
    std::vector<T> proj(static_cast<std::size_t>(dim) * dim);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      voxel::soft_project<T>(recon.example(i), dim, config_.axis, proj);
      sum += bce_sum<T>(batch.masks.example(i), proj);
    }
    terms.mask = sum / n;
  }
  return terms;
}

template <typename T>
void ReconstructionModel<T>::zero_grad() {
  if (shape_encoder_) shape_encoder_->zero_grad();
  decoder_.zero_grad();
  if (topogram_branch_) topogram_branch_->zero_grad();
  if (mask_branch_) mask_branch_->zero_grad();
  if (combiner_) combiner_->zero_grad();
}

template <typename T>
std::vector<ParamView<T>> ReconstructionModel<T>::parameters() {
  std::vector<ParamView<T>> out;
  auto add = [&out](Network<T>& net, const char* prefix) {
    auto p = net.parameters(prefix);
    out.insert(out.end(), p.begin(), p.end());
  };
  if (shape_encoder_) add(*shape_encoder_, "shape_encoder");
  add(decoder_, "decoder");
  if (topogram_branch_) add(*topogram_branch_, "topogram_branch");
  if (mask_branch_) add(*mask_branch_, "mask_branch");
  if (combiner_) add(*combiner_, "combiner");
  return out;
}

template <typename T>
std::vector<ParamView<const T>> ReconstructionModel<T>::parameters() const {
  auto views = const_cast<ReconstructionModel*>(this)->parameters();
  std::vector<ParamView<const T>> out;
  for (auto& v : views) out.push_back({v.name, v.shape, v.value, v.grad});
  return out;
}

template <typename T>
std::size_t ReconstructionModel<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto* net : networks()) n += net->parameter_count();
  return n;
}

template <typename T>
void ReconstructionModel<T>::calibrate_batchnorm(std::size_t chunks, const std::function<Batch<T>(std::size_t)>& batch_for_chunk) {
  if (shape_encoder_) {
    shape_encoder_->calibrate_batchnorm(chunks, [&](std::size_t c) { return batch_for_chunk(c).shapes; });
  }
  if (topogram_branch_) {
    topogram_branch_->calibrate_batchnorm(chunks, [&](std::size_t c) { return batch_for_chunk(c).topograms; });
  }
  if (mask_branch_) {
    mask_branch_->calibrate_batchnorm(chunks, [&](std::size_t c) { return batch_for_chunk(c).masks; });
  }
  decoder_.calibrate_batchnorm(chunks, [&](std::size_t c) { return encode_observation(batch_for_chunk(c)); });
}

template struct Batch<float>;
template struct Batch<double>;
template class ReconstructionModel<float>;
template class ReconstructionModel<double>;

}  // namespace t3d::model
