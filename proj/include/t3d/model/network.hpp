#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "t3d/model/spec.hpp"
#include "t3d/model/tensor.hpp"

namespace t3d::model {

enum class Mode {
  train,  ///< batch-norm uses batch statistics
  eval,   ///< batch-norm uses stored population statistics
};

/// Named view of one parameter array and its gradient buffer. `grad` is empty for buffers that are
/// not optimised (batch-norm population statistics).
template <typename T>
struct ParamView {
  std::string name;
  std::vector<int> shape;
  std::span<T> value;
  std::span<T> grad;
  bool trainable() const { return !grad.empty(); }
};

template <typename T>
class Network {
 public:
  struct LayerTape {
    Tensor<T> input;
    Tensor<T> normalized;  ///< x-hat of batch-norm (train mode only)
    std::vector<T> inv_std;
    Tensor<T> output;  ///< post-activation
  };
  struct Tape {
    std::vector<LayerTape> layers;
    Mode mode = Mode::train;
  };

  /// Where the incoming gradient of `backward` is taken.
  enum class GradAt { output, pre_activation };

  explicit Network(NetworkSpec spec);

  const NetworkSpec& spec() const { return spec_; }

  /// Deterministic initialisation from a seed: uniform fan-in scaled weights, zero biases, unit BN scale.
  void initialize(std::uint64_t seed);

  /// `input` must be (N, input_channels, S, S, S) for rank 3 or (N, input_channels, 1, S, S) for rank 2.
  /// Pass a tape to record what backward needs.
  Tensor<T> forward(const Tensor<T>& input, Mode mode, Tape* tape = nullptr) const;

  /// Accumulates parameter gradients; returns the gradient with respect to the input (empty when
  /// `need_input_grad` is false).
  Tensor<T> backward(const Tape& tape, const Tensor<T>& grad, GradAt where = GradAt::output, bool need_input_grad = true);

  void zero_grad();
  std::vector<ParamView<T>> parameters(const std::string& prefix);
  std::vector<ParamView<const T>> parameters(const std::string& prefix) const;

  /// Replaces each batch-norm layer's stored statistics by the population mean and (biased) variance of its
  /// input over all chunks, processing layers in order so later layers see calibrated earlier layers.
  void calibrate_batchnorm(std::size_t chunks, const std::function<Tensor<T>(std::size_t)>& input_for_chunk);

  std::size_t parameter_count() const;

 private:
  struct Layer {
    ConvLayerSpec conv;
    bool is_dense = false;
    int in_size = 1;
    int out_size = 1;
    std::vector<T> weight, bias, gamma, beta, running_mean, running_var;
    std::vector<T> d_weight, d_bias, d_gamma, d_beta;
  };

  Tensor<T> forward_layer(const Layer& layer, const Tensor<T>& x, Mode mode, LayerTape* tape, bool stop_before_norm) const;
  void check_input(const Tensor<T>& input) const;

  NetworkSpec spec_;
  std::vector<Layer> layers_;
};

extern template class Network<float>;
extern template class Network<double>;

}  // namespace t3d::model
