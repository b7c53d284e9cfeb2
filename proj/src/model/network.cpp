#include "t3d/model/network.hpp"

#include <cmath>
#include <random>

#include <Eigen/Core>

namespace t3d::model {

namespace {

constexpr double kBatchNormEpsilon = 1e-5;

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using MapM = Eigen::Map<Mat<T>>;
template <typename T>
using MapCM = Eigen::Map<const Mat<T>>;

// Geometry of a strided convolution between an "image" of extent `img` (the larger side) and a
// column space of extent `cols` (one column per kernel placement). Rank-2 data uses depth 1.
struct ConvGeometry {
  int rank;
  int img;
  int cols;
  int k;
  int s;
  int p;

  int kd() const { return rank == 3 ? k : 1; }
  int img_d() const { return rank == 3 ? img : 1; }
  int cols_d() const { return rank == 3 ? cols : 1; }
  int s_d() const { return rank == 3 ? s : 1; }
  int p_d() const { return rank == 3 ? p : 0; }
  std::size_t taps() const { return static_cast<std::size_t>(kd()) * k * k; }
  std::size_t positions() const { return static_cast<std::size_t>(cols_d()) * cols * cols; }
  std::size_t image_voxels() const { return static_cast<std::size_t>(img_d()) * img * img; }
};

// col is (positions x channels*taps), column-major.
template <typename T>
void im2col(const T* image, int channels, const ConvGeometry& g, T* col) {
  const std::size_t P = g.positions();
  const std::size_t plane = static_cast<std::size_t>(g.img) * g.img;
  std::size_t row = 0;
  for (int c = 0; c < channels; ++c) {
    const T* img_c = image + c * g.image_voxels();
    for (int kz = 0; kz < g.kd(); ++kz) {
      for (int ky = 0; ky < g.k; ++ky) {
        for (int kx = 0; kx < g.k; ++kx, ++row) {
          T* dst = col + row * P;
          for (int oz = 0; oz < g.cols_d(); ++oz) {
            const int iz = oz * g.s_d() - g.p_d() + kz;
            const bool z_ok = iz >= 0 && iz < g.img_d();
            for (int oy = 0; oy < g.cols; ++oy) {
              const int iy = oy * g.s - g.p + ky;
              T* out = dst + (static_cast<std::size_t>(oz) * g.cols + oy) * g.cols;
              if (!z_ok || iy < 0 || iy >= g.img) {
                std::fill(out, out + g.cols, T(0));
                continue;
              }
              const T* src = img_c + iz * plane + static_cast<std::size_t>(iy) * g.img;
              for (int ox = 0; ox < g.cols; ++ox) {
                const int ix = ox * g.s - g.p + kx;
                out[ox] = (ix >= 0 && ix < g.img) ? src[ix] : T(0);
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, int channels, const ConvGeometry& g, T* image) {
  const std::size_t P = g.positions();
  const std::size_t plane = static_cast<std::size_t>(g.img) * g.img;
  std::size_t row = 0;
  for (int c = 0; c < channels; ++c) {
    T* img_c = image + c * g.image_voxels();
    for (int kz = 0; kz < g.kd(); ++kz) {
      for (int ky = 0; ky < g.k; ++ky) {
        for (int kx = 0; kx < g.k; ++kx, ++row) {
          const T* src = col + row * P;
          for (int oz = 0; oz < g.cols_d(); ++oz) {
            const int iz = oz * g.s_d() - g.p_d() + kz;
            if (iz < 0 || iz >= g.img_d()) continue;
            for (int oy = 0; oy < g.cols; ++oy) {
              const int iy = oy * g.s - g.p + ky;
              if (iy < 0 || iy >= g.img) continue;
              const T* in = src + (static_cast<std::size_t>(oz) * g.cols + oy) * g.cols;
              T* dst = img_c + iz * plane + static_cast<std::size_t>(iy) * g.img;
              for (int ox = 0; ox < g.cols; ++ox) {
                const int ix = ox * g.s - g.p + kx;
                if (ix >= 0 && ix < g.img) dst[ix] += in[ox];
              }
            }
          }
        }
      }
    }
  }
}

int ipow(int base, int e) {
  int r = 1;
  for (int i = 0; i < e; ++i) r *= base;
  return r;
}

}  // namespace

template <typename T>
Network<T>::Network(NetworkSpec spec) : spec_(std::move(spec)) {
  const auto chain = spec_.spatial_chain();
  const int rank = spec_.rank;
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    Layer layer;
    layer.conv = spec_.layers[i];
    layer.in_size = chain[i];
    layer.out_size = chain[i + 1];
    const std::size_t taps = static_cast<std::size_t>(ipow(layer.conv.kernel, rank));
    const std::size_t wsize = static_cast<std::size_t>(layer.conv.in_channels) * layer.conv.out_channels * taps;
    layer.weight.assign(wsize, T(0));
    layer.d_weight.assign(wsize, T(0));
    const std::size_t c = static_cast<std::size_t>(layer.conv.out_channels);
    if (layer.conv.norm == Norm::batch_norm) {
      layer.gamma.assign(c, T(1));
      layer.beta.assign(c, T(0));
      layer.d_gamma.assign(c, T(0));
      layer.d_beta.assign(c, T(0));
      layer.running_mean.assign(c, T(0));
      layer.running_var.assign(c, T(1));
    } else {
      layer.bias.assign(c, T(0));
      layer.d_bias.assign(c, T(0));
    }
    layers_.push_back(std::move(layer));
  }
  if (spec_.dense) {
    Layer layer;
    layer.is_dense = true;
    layer.conv.in_channels = spec_.dense->in_features;
    layer.conv.out_channels = spec_.dense->out_features;
    layer.conv.activation = spec_.dense->activation;
    const std::size_t wsize = static_cast<std::size_t>(spec_.dense->in_features) * spec_.dense->out_features;
    layer.weight.assign(wsize, T(0));
    layer.d_weight.assign(wsize, T(0));
    layer.bias.assign(spec_.dense->out_features, T(0));
    layer.d_bias.assign(spec_.dense->out_features, T(0));
    layers_.push_back(std::move(layer));
  }
}

template <typename T>
void Network<T>::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& layer : layers_) {
    double fan_in;
    if (layer.is_dense) {
      fan_in = layer.conv.in_channels;
    } else {
      const double taps = ipow(layer.conv.kernel, spec_.rank);
      fan_in = layer.conv.in_channels * taps;
      if (layer.conv.transposed) fan_in /= ipow(layer.conv.stride, spec_.rank);
    }
    const double gain = layer.conv.activation == Activation::relu ? std::sqrt(2.0) : 1.0;
    const double bound = gain * std::sqrt(3.0 / std::max(fan_in, 1.0));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& w : layer.weight) w = static_cast<T>(dist(rng));
    std::fill(layer.bias.begin(), layer.bias.end(), T(0));
    std::fill(layer.gamma.begin(), layer.gamma.end(), T(1));
    std::fill(layer.beta.begin(), layer.beta.end(), T(0));
    std::fill(layer.running_mean.begin(), layer.running_mean.end(), T(0));
    std::fill(layer.running_var.begin(), layer.running_var.end(), T(1));
  }
}

template <typename T>
void Network<T>::check_input(const Tensor<T>& input) const {
  const int s = spec_.input_size;
  const bool ok = input.shape[1] == spec_.input_channels && input.shape[3] == s && input.shape[4] == s &&
                  input.shape[2] == (spec_.rank == 3 ? s : 1) && input.shape[0] > 0;
  if (!ok) {
    throw DimensionMismatch(std::string(to_string(spec_.role)) + ": input tensor shape does not match the network spec");
  }
}

template <typename T>
Tensor<T> Network<T>::forward_layer(const Layer& layer, const Tensor<T>& x, Mode mode, LayerTape* tape,
                                    bool stop_before_norm) const {
  const int n = x.batch();
  const int rank = spec_.rank;
  const int cin = layer.conv.in_channels;
  const int cout = layer.conv.out_channels;
  Tensor<T> z;

  if (layer.is_dense) {
    z = Tensor<T>(n, cout, 1, 1, 1);
    MapCM<T> w(layer.weight.data(), cin, cout);
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> b(layer.bias.data(), cout);
    for (int i = 0; i < n; ++i) {
      Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> xi(x.example(i).data(), cin);
      Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> zi(z.example(i).data(), cout);
      zi.noalias() = w.transpose() * xi;
      zi += b;
    }
  } else {
    const int os = layer.out_size;
    z = Tensor<T>(n, cout, rank == 3 ? os : 1, os, os);
    if (!layer.conv.transposed) {
      const ConvGeometry g{rank, layer.in_size, os, layer.conv.kernel, layer.conv.stride, layer.conv.padding};
      const std::size_t P = g.positions();
      const std::size_t ck = static_cast<std::size_t>(cin) * g.taps();
      std::vector<T> col(P * ck);
      MapCM<T> w(layer.weight.data(), static_cast<Eigen::Index>(ck), cout);
      for (int i = 0; i < n; ++i) {
        im2col(x.example(i).data(), cin, g, col.data());
        MapCM<T> colm(col.data(), static_cast<Eigen::Index>(P), static_cast<Eigen::Index>(ck));
        MapM<T> zi(z.example(i).data(), static_cast<Eigen::Index>(P), cout);
        zi.noalias() = colm * w;
      }
    } else {
      const ConvGeometry g{rank, os, layer.in_size, layer.conv.kernel, layer.conv.stride, layer.conv.padding};
      const std::size_t P = g.positions();
      const std::size_t ck = static_cast<std::size_t>(cout) * g.taps();
      std::vector<T> col(P * ck);
      MapCM<T> w(layer.weight.data(), static_cast<Eigen::Index>(ck), cin);
      for (int i = 0; i < n; ++i) {
        MapCM<T> xi(x.example(i).data(), static_cast<Eigen::Index>(P), cin);
        MapM<T> colm(col.data(), static_cast<Eigen::Index>(P), static_cast<Eigen::Index>(ck));
        colm.noalias() = xi * w.transpose();
        col2im(col.data(), cout, g, z.example(i).data());
      }
    }
    if (!layer.bias.empty()) {
      const std::size_t sp = z.spatial();
      for (int i = 0; i < n; ++i) {
        T* zi = z.example(i).data();
        for (int c = 0; c < cout; ++c) {
          const T b = layer.bias[c];
          for (std::size_t j = 0; j < sp; ++j) zi[c * sp + j] += b;
        }
      }
    }
  }

  if (stop_before_norm) return z;

  const std::size_t sp = z.spatial();
  if (layer.conv.norm == Norm::batch_norm) {
    std::vector<T> inv_std(cout);
    Tensor<T> xhat;
    if (tape) xhat = Tensor<T>(z.shape[0], z.shape[1], z.shape[2], z.shape[3], z.shape[4]);
    for (int c = 0; c < cout; ++c) {
      double mean, var;
      if (mode == Mode::train) {
        double sum = 0.0;
        for (int i = 0; i < n; ++i) {
          const T* zc = z.example(i).data() + c * sp;
          for (std::size_t j = 0; j < sp; ++j) sum += zc[j];
        }
        const double m = static_cast<double>(n) * static_cast<double>(sp);
        mean = sum / m;
        double sq = 0.0;
        for (int i = 0; i < n; ++i) {
          const T* zc = z.example(i).data() + c * sp;
          for (std::size_t j = 0; j < sp; ++j) {
            const double d = zc[j] - mean;
            sq += d * d;
          }
        }
        var = sq / m;
      } else {
        mean = layer.running_mean[c];
        var = layer.running_var[c];
      }
      const T istd = static_cast<T>(1.0 / std::sqrt(var + kBatchNormEpsilon));
      const T tmean = static_cast<T>(mean);
      inv_std[c] = istd;
      const T g = layer.gamma[c];
      const T b = layer.beta[c];
      for (int i = 0; i < n; ++i) {
        T* zc = z.example(i).data() + c * sp;
        T* xc = tape ? xhat.example(i).data() + c * sp : nullptr;
        for (std::size_t j = 0; j < sp; ++j) {
          const T xh = (zc[j] - tmean) * istd;
          if (xc) xc[j] = xh;
          zc[j] = g * xh + b;
        }
      }
    }
    if (tape) {
      tape->normalized = std::move(xhat);
      tape->inv_std = std::move(inv_std);
    }
  }

  switch (layer.conv.activation) {
    case Activation::relu:
      for (auto& v : z.data) v = v > T(0) ? v : T(0);
      break;
    case Activation::sigmoid:
      for (auto& v : z.data) v = T(1) / (T(1) + std::exp(-v));
      break;
    case Activation::none:
      break;
  }
  if (tape) tape->output = z;
  return z;
}

template <typename T>
Tensor<T> Network<T>::forward(const Tensor<T>& input, Mode mode, Tape* tape) const {
  check_input(input);
  if (tape) {
    tape->layers.assign(layers_.size(), LayerTape{});
    tape->mode = mode;
    tape->layers[0].input = input;
  }
  const Tensor<T>* current = &input;
  Tensor<T> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Tensor<T> next = forward_layer(layers_[i], *current, mode, tape ? &tape->layers[i] : nullptr, false);
    out = std::move(next);
    current = tape ? &tape->layers[i].output : &out;
  }
  return out;
}

template <typename T>
Tensor<T> Network<T>::backward(const Tape& tape, const Tensor<T>& grad, GradAt where, bool need_input_grad) {
  if (tape.layers.size() != layers_.size()) throw Error("backward called with a tape from a different network");
  Tensor<T> g = grad;
  const int rank = spec_.rank;
  for (std::size_t li = layers_.size(); li-- > 0;) {
    Layer& layer = layers_[li];
    const LayerTape& lt = tape.layers[li];
    const Tensor<T>& x = li == 0 ? tape.layers[0].input : tape.layers[li - 1].output;
    const int n = x.batch();
    const int cin = layer.conv.in_channels;
    const int cout = layer.conv.out_channels;
    if (g.shape != lt.output.shape) throw DimensionMismatch("gradient shape does not match layer output");
    const std::size_t sp = g.spatial();

    // Through the activation (skipped when the caller already supplies the pre-activation gradient).
    if (!(li + 1 == layers_.size() && where == GradAt::pre_activation)) {
      if (layer.conv.activation == Activation::relu) {
        for (std::size_t j = 0; j < g.data.size(); ++j) {
          if (!(lt.output.data[j] > T(0))) g.data[j] = T(0);
        }
      } else if (layer.conv.activation == Activation::sigmoid) {
        for (std::size_t j = 0; j < g.data.size(); ++j) {
          const T a = lt.output.data[j];
          g.data[j] *= a * (T(1) - a);
        }
      }
    }

    // Through batch-norm: g becomes the gradient w.r.t. the conv output.
    if (layer.conv.norm == Norm::batch_norm) {
      const double m = static_cast<double>(n) * static_cast<double>(sp);
      for (int c = 0; c < cout; ++c) {
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (int i = 0; i < n; ++i) {
          const T* gc = g.example(i).data() + c * sp;
          const T* xc = lt.normalized.example(i).data() + c * sp;
          for (std::size_t j = 0; j < sp; ++j) {
            sum_dy += gc[j];
            sum_dy_xhat += static_cast<double>(gc[j]) * xc[j];
          }
        }
        layer.d_gamma[c] += static_cast<T>(sum_dy_xhat);
        layer.d_beta[c] += static_cast<T>(sum_dy);
        const T scale = layer.gamma[c] * lt.inv_std[c];
        if (tape.mode == Mode::train) {
          const T mean_dy = static_cast<T>(sum_dy / m);
          const T mean_dy_xhat = static_cast<T>(sum_dy_xhat / m);
          for (int i = 0; i < n; ++i) {
            T* gc = g.example(i).data() + c * sp;
            const T* xc = lt.normalized.example(i).data() + c * sp;
            for (std::size_t j = 0; j < sp; ++j) gc[j] = scale * (gc[j] - mean_dy - xc[j] * mean_dy_xhat);
          }
        } else {
          for (int i = 0; i < n; ++i) {
            T* gc = g.example(i).data() + c * sp;
            for (std::size_t j = 0; j < sp; ++j) gc[j] *= scale;
          }
        }
      }
    }

    if (!layer.bias.empty()) {
      for (int i = 0; i < n; ++i) {
        const T* gi = g.example(i).data();
        for (int c = 0; c < cout; ++c) {
          T acc = T(0);
          for (std::size_t j = 0; j < sp; ++j) acc += gi[c * sp + j];
          layer.d_bias[c] += acc;
        }
      }
    }

    const bool want_dx = li > 0 || need_input_grad;
    Tensor<T> dx;
    if (want_dx) dx = Tensor<T>(x.shape[0], x.shape[1], x.shape[2], x.shape[3], x.shape[4]);

    if (layer.is_dense) {
      MapM<T> dw(layer.d_weight.data(), cin, cout);
      MapCM<T> w(layer.weight.data(), cin, cout);
      for (int i = 0; i < n; ++i) {
        Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> xi(x.example(i).data(), cin);
        Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> gi(g.example(i).data(), cout);
        dw.noalias() += xi * gi.transpose();
        if (want_dx) {
          Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> dxi(dx.example(i).data(), cin);
          dxi.noalias() = w * gi;
        }
      }
    } else if (!layer.conv.transposed) {
      const ConvGeometry geo{rank, layer.in_size, layer.out_size, layer.conv.kernel, layer.conv.stride, layer.conv.padding};
      const std::size_t P = geo.positions();
      const std::size_t ck = static_cast<std::size_t>(cin) * geo.taps();
      std::vector<T> col(P * ck);
      MapM<T> dw(layer.d_weight.data(), static_cast<Eigen::Index>(ck), cout);
      MapCM<T> w(layer.weight.data(), static_cast<Eigen::Index>(ck), cout);
      for (int i = 0; i < n; ++i) {
        im2col(x.example(i).data(), cin, geo, col.data());
        MapM<T> colm(col.data(), static_cast<Eigen::Index>(P), static_cast<Eigen::Index>(ck));
        MapCM<T> gi(g.example(i).data(), static_cast<Eigen::Index>(P), cout);
        dw.noalias() += colm.transpose() * gi;
        if (want_dx) {
          colm.noalias() = gi * w.transpose();
          col2im(col.data(), cin, geo, dx.example(i).data());
        }
      }
    } else {
      const ConvGeometry geo{rank, layer.out_size, layer.in_size, layer.conv.kernel, layer.conv.stride, layer.conv.padding};
      const std::size_t P = geo.positions();
      const std::size_t ck = static_cast<std::size_t>(cout) * geo.taps();
      std::vector<T> col(P * ck);
      MapM<T> dw(layer.d_weight.data(), static_cast<Eigen::Index>(ck), cin);
      MapCM<T> w(layer.weight.data(), static_cast<Eigen::Index>(ck), cin);
      for (int i = 0; i < n; ++i) {
        im2col(g.example(i).data(), cout, geo, col.data());
        MapCM<T> colm(col.data(), static_cast<Eigen::Index>(P), static_cast<Eigen::Index>(ck));
        MapCM<T> xi(x.example(i).data(), static_cast<Eigen::Index>(P), cin);
        dw.noalias() += colm.transpose() * xi;
        if (want_dx) {
          MapM<T> dxi(dx.example(i).data(), static_cast<Eigen::Index>(P), cin);
          dxi.noalias() = colm * w;
        }
      }
    }
    g = std::move(dx);
  }
  return g;
}

template <typename T>
void Network<T>::zero_grad() {
  for (auto& l : layers_) {
    std::fill(l.d_weight.begin(), l.d_weight.end(), T(0));
    std::fill(l.d_bias.begin(), l.d_bias.end(), T(0));
    std::fill(l.d_gamma.begin(), l.d_gamma.end(), T(0));
    std::fill(l.d_beta.begin(), l.d_beta.end(), T(0));
  }
}

template <typename T>
std::vector<ParamView<T>> Network<T>::parameters(const std::string& prefix) {
  std::vector<ParamView<T>> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    auto& l = layers_[i];
    const std::string base = prefix + ".layer" + std::to_string(i) + ".";
    std::vector<int> wshape;
    if (l.is_dense) {
      wshape = {l.conv.out_channels, l.conv.in_channels};
    } else {
      const int k = l.conv.kernel;
      wshape = l.conv.transposed ? std::vector<int>{l.conv.in_channels, l.conv.out_channels} : std::vector<int>{l.conv.out_channels, l.conv.in_channels};
      for (int r = 0; r < spec_.rank; ++r) wshape.push_back(k);
    }
    out.push_back({base + "weight", wshape, l.weight, l.d_weight});
    const std::vector<int> cshape{l.conv.out_channels};
    if (!l.bias.empty()) out.push_back({base + "bias", cshape, l.bias, l.d_bias});
    if (!l.gamma.empty()) {
      out.push_back({base + "bn_gamma", cshape, l.gamma, l.d_gamma});
      out.push_back({base + "bn_beta", cshape, l.beta, l.d_beta});
      out.push_back({base + "bn_mean", cshape, l.running_mean, {}});
      out.push_back({base + "bn_var", cshape, l.running_var, {}});
    }
  }
  return out;
}

template <typename T>
std::vector<ParamView<const T>> Network<T>::parameters(const std::string& prefix) const {
  auto views = const_cast<Network*>(this)->parameters(prefix);
  std::vector<ParamView<const T>> out;
  out.reserve(views.size());
  for (auto& v : views) out.push_back({v.name, v.shape, v.value, v.grad});
  return out;
}

template <typename T>
std::size_t Network<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& v : parameters("")) {
    if (v.trainable()) n += v.value.size();
  }
  return n;
}

template <typename T>
void Network<T>::calibrate_batchnorm(std::size_t chunks, const std::function<Tensor<T>(std::size_t)>& input_for_chunk) {
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    Layer& layer = layers_[li];
    if (layer.conv.norm != Norm::batch_norm) continue;
    const int cout = layer.conv.out_channels;
    std::vector<double> sum(cout, 0.0), sumsq(cout, 0.0);
    double count = 0.0;
    for (std::size_t chunk = 0; chunk < chunks; ++chunk) {
      Tensor<T> x = input_for_chunk(chunk);
      check_input(x);
      for (std::size_t j = 0; j < li; ++j) x = forward_layer(layers_[j], x, Mode::eval, nullptr, false);
      const Tensor<T> z = forward_layer(layer, x, Mode::eval, nullptr, true);
      const std::size_t sp = z.spatial();
      for (int i = 0; i < z.batch(); ++i) {
        for (int c = 0; c < cout; ++c) {
          const T* zc = z.example(i).data() + c * sp;
          for (std::size_t j = 0; j < sp; ++j) {
            sum[c] += zc[j];
            sumsq[c] += static_cast<double>(zc[j]) * zc[j];
          }
        }
      }
      count += static_cast<double>(z.batch()) * static_cast<double>(sp);
    }
    if (count == 0.0) return;
    for (int c = 0; c < cout; ++c) {
      const double mean = sum[c] / count;
      layer.running_mean[c] = static_cast<T>(mean);
      layer.running_var[c] = static_cast<T>(std::max(sumsq[c] / count - mean * mean, 0.0));
    }
  }
}

template class Network<float>;
template class Network<double>;

}  // namespace t3d::model
