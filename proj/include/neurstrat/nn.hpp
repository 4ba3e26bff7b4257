#pragma once

// Dense tanh networks with batched reverse-mode gradients and Adam.
//
// Weights are stored input-major: for layer l, w(l)[k * n_out + j] is the
// coefficient from input unit k to output unit j. That is the layout the
// affine kernel consumes directly and the one the weight gradient is
// accumulated in. Serialization writes the conventional [out][in] order.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace neurstrat::nn {

class Mlp;

// Per-layer arrays congruent with an Mlp's parameters.
struct GradientSet {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;

  static GradientSet zeros_like(const Mlp& mlp);
  void set_zero();
  std::size_t size() const;
};

// Activations of one batched forward pass, kept for the backward pass.
// layers[0] is the input, layers[l] the output of layer l.
struct ForwardTape {
  std::size_t rows = 0;
  std::vector<std::vector<double>> layers;

  std::span<const double> output() const { return layers.back(); }
};

class Mlp {
 public:
  // Zero network with the given architecture.
  explicit Mlp(std::vector<std::size_t> layer_dims);
  // Weights in conventional [out][in] row-major order, one array per layer.
  Mlp(std::vector<std::size_t> layer_dims, const std::vector<std::vector<double>>& weights_row_major,
      std::vector<std::vector<double>> biases);

  const std::vector<std::size_t>& layer_dims() const { return dims_; }
  std::size_t input_dim() const { return dims_.front(); }
  std::size_t output_dim() const { return dims_.back(); }
  std::size_t num_layers() const { return dims_.size() - 1; }
  std::size_t parameter_count() const;

  // Coefficient from input unit `in` to output unit `out` of `layer`.
  double weight(std::size_t layer, std::size_t out, std::size_t in) const;
  void set_weight(std::size_t layer, std::size_t out, std::size_t in, double value);
  double bias(std::size_t layer, std::size_t out) const { return b_[layer][out]; }
  void set_bias(std::size_t layer, std::size_t out, double value) { b_[layer][out] = value; }

  std::span<const double> weights_input_major(std::size_t layer) const { return wt_[layer]; }
  std::span<double> weights_input_major(std::size_t layer) { return wt_[layer]; }
  std::span<const double> biases(std::size_t layer) const { return b_[layer]; }
  std::span<double> biases(std::size_t layer) { return b_[layer]; }

  // [out][in] row-major copy of one layer's weights.
  std::vector<double> weights_row_major(std::size_t layer) const;

  // All parameters, layer by layer, weights (input-major) then biases.
  std::vector<double> flatten() const;

  std::vector<double> forward(std::span<const double> x) const;
  double forward_scalar(std::span<const double> x) const;
  // x: rows x input_dim, out: rows x output_dim.
  void forward_batch(std::span<const double> x, std::size_t rows, std::span<double> out) const;
  void forward_tape(std::span<const double> x, std::size_t rows, ForwardTape& tape) const;

  // Reverse pass for the scalar sum_b <out_b, upstream_b>. Parameter
  // gradients are added into `grads`; the input cotangent is written to
  // `input_grad` when it is non-empty (rows x input_dim).
  void backward_tape(const ForwardTape& tape, std::span<const double> upstream, GradientSet& grads,
                     std::span<double> input_grad) const;

  bool operator==(const Mlp& other) const = default;

 private:
  std::vector<std::size_t> dims_;
  std::vector<std::vector<double>> wt_;
  std::vector<std::vector<double>> b_;
};

// Glorot-uniform weights, zero biases.
Mlp mlp_init(const std::vector<std::size_t>& layer_dims, std::uint64_t seed);

// Gradient of sum_b <mlp(x_b), upstream_b> with respect to the parameters.
GradientSet mlp_backward(const Mlp& mlp, std::span<const double> x_batch, std::size_t rows,
                         std::span<const double> upstream);

struct AdamState {
  GradientSet first_moment;
  GradientSet second_moment;
  std::uint64_t step_count = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_model(const Mlp& mlp, double learning_rate = 1e-3);
};

// In-place bias-corrected Adam update. Throws Numeric with the parameter path
// if any gradient entry is nonfinite (nothing is modified in that case).
void adam_update(Mlp& mlp, const GradientSet& grads, AdamState& state);

std::pair<Mlp, AdamState> adam_step(Mlp mlp, const GradientSet& grads, AdamState state);

}  // namespace neurstrat::nn
