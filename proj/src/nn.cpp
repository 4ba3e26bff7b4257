#include "neurstrat/nn.hpp"

#include <cmath>
#include <sstream>

#include "neurstrat/error.hpp"
#include "neurstrat/kernels.hpp"
#include "neurstrat/rng.hpp"

namespace neurstrat::nn {
namespace {

void validate_dims(const std::vector<std::size_t>& dims) {
  if (dims.size() < 2) {
    throw Error(ErrorKind::InvalidArchitecture, "need at least input and output dimensions");
  }
  for (std::size_t d : dims) {
    if (d == 0) throw Error(ErrorKind::InvalidArchitecture, "layer dimensions must be positive");
  }
}

void apply_tanh(std::span<double> v) { kernels::active().tanh(v.data(), v.size()); }

}  // namespace

GradientSet GradientSet::zeros_like(const Mlp& mlp) {
  GradientSet g;
  const auto& dims = mlp.layer_dims();
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    g.weights.emplace_back(dims[l] * dims[l + 1], 0.0);
    g.biases.emplace_back(dims[l + 1], 0.0);
  }
  return g;
}

void GradientSet::set_zero() {
  for (auto& w : weights) std::fill(w.begin(), w.end(), 0.0);
  for (auto& b : biases) std::fill(b.begin(), b.end(), 0.0);
}

std::size_t GradientSet::size() const {
  std::size_t n = 0;
  for (const auto& w : weights) n += w.size();
  for (const auto& b : biases) n += b.size();
  return n;
}

Mlp::Mlp(std::vector<std::size_t> layer_dims) : dims_(std::move(layer_dims)) {
  validate_dims(dims_);
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
    wt_.emplace_back(dims_[l] * dims_[l + 1], 0.0);
    b_.emplace_back(dims_[l + 1], 0.0);
  }
}

Mlp::Mlp(std::vector<std::size_t> layer_dims,
         const std::vector<std::vector<double>>& weights_row_major,
         std::vector<std::vector<double>> biases)
    : Mlp(std::move(layer_dims)) {
  if (weights_row_major.size() != num_layers() || biases.size() != num_layers()) {
    throw Error(ErrorKind::Shape, "layer count does not match the architecture");
  }
  for (std::size_t l = 0; l < num_layers(); ++l) {
    const std::size_t n_in = dims_[l];
    const std::size_t n_out = dims_[l + 1];
    if (weights_row_major[l].size() != n_in * n_out || biases[l].size() != n_out) {
      std::ostringstream os;
      os << "layer " << l << " expects " << n_out << "x" << n_in << " weights and " << n_out
         << " biases";
      throw Error(ErrorKind::Shape, os.str());
    }
    for (std::size_t j = 0; j < n_out; ++j) {
      for (std::size_t k = 0; k < n_in; ++k) wt_[l][k * n_out + j] = weights_row_major[l][j * n_in + k];
    }
  }
  b_ = std::move(biases);
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < num_layers(); ++l) n += wt_[l].size() + b_[l].size();
  return n;
}

double Mlp::weight(std::size_t layer, std::size_t out, std::size_t in) const {
  return wt_[layer][in * dims_[layer + 1] + out];
}

void Mlp::set_weight(std::size_t layer, std::size_t out, std::size_t in, double value) {
  wt_[layer][in * dims_[layer + 1] + out] = value;
}

std::vector<double> Mlp::weights_row_major(std::size_t layer) const {
  const std::size_t n_in = dims_[layer];
  const std::size_t n_out = dims_[layer + 1];
  std::vector<double> w(n_in * n_out);
  for (std::size_t j = 0; j < n_out; ++j) {
    for (std::size_t k = 0; k < n_in; ++k) w[j * n_in + k] = wt_[layer][k * n_out + j];
  }
  return w;
}

std::vector<double> Mlp::flatten() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (std::size_t l = 0; l < num_layers(); ++l) {
    flat.insert(flat.end(), wt_[l].begin(), wt_[l].end());
    flat.insert(flat.end(), b_[l].begin(), b_[l].end());
  }
  return flat;
}

std::vector<double> Mlp::forward(std::span<const double> x) const {
  std::vector<double> out(output_dim());
  forward_batch(x, 1, out);
  return out;
}

double Mlp::forward_scalar(std::span<const double> x) const {
  if (output_dim() != 1) throw Error(ErrorKind::Shape, "forward_scalar needs a scalar output");
  double out = 0.0;
  forward_batch(x, 1, std::span<double>(&out, 1));
  return out;
}

void Mlp::forward_batch(std::span<const double> x, std::size_t rows, std::span<double> out) const {
  if (x.size() != rows * input_dim()) {
    std::ostringstream os;
    os << "input has " << x.size() << " values, expected " << rows << "x" << input_dim();
    throw Error(ErrorKind::Shape, os.str());
  }
  if (out.size() != rows * output_dim()) throw Error(ErrorKind::Shape, "output buffer size mismatch");
  const auto& k = kernels::active();
  std::vector<double> cur(x.begin(), x.end());
  std::vector<double> next;
  for (std::size_t l = 0; l < num_layers(); ++l) {
    const bool last = l + 1 == num_layers();
    double* dst = nullptr;
    if (last) {
      dst = out.data();
    } else {
      next.resize(rows * dims_[l + 1]);
      dst = next.data();
    }
    k.affine(cur.data(), wt_[l].data(), b_[l].data(), dst, rows, dims_[l], dims_[l + 1]);
    if (!last) {
      apply_tanh(next);
      cur.swap(next);
    }
  }
}

void Mlp::forward_tape(std::span<const double> x, std::size_t rows, ForwardTape& tape) const {
  if (x.size() != rows * input_dim()) throw Error(ErrorKind::Shape, "input batch size mismatch");
  const auto& k = kernels::active();
  tape.rows = rows;
  tape.layers.resize(num_layers() + 1);
  tape.layers[0].assign(x.begin(), x.end());
  for (std::size_t l = 0; l < num_layers(); ++l) {
    auto& dst = tape.layers[l + 1];
    dst.resize(rows * dims_[l + 1]);
    k.affine(tape.layers[l].data(), wt_[l].data(), b_[l].data(), dst.data(), rows, dims_[l],
             dims_[l + 1]);
    if (l + 1 < num_layers()) apply_tanh(dst);
  }
}

void Mlp::backward_tape(const ForwardTape& tape, std::span<const double> upstream,
                        GradientSet& grads, std::span<double> input_grad) const {
  const std::size_t rows = tape.rows;
  if (upstream.size() != rows * output_dim()) throw Error(ErrorKind::Shape, "upstream size mismatch");
  if (!input_grad.empty() && input_grad.size() != rows * input_dim()) {
    throw Error(ErrorKind::Shape, "input gradient buffer size mismatch");
  }
  const auto& k = kernels::active();
  std::vector<double> delta(upstream.begin(), upstream.end());
  std::vector<double> prev;
  std::vector<double> w_rm;
  std::vector<double> zero_bias;
  for (std::size_t l = num_layers(); l-- > 0;) {
    const std::size_t n_in = dims_[l];
    const std::size_t n_out = dims_[l + 1];
    if (l + 1 < num_layers()) k.tanh_grad(tape.layers[l + 1].data(), delta.data(), delta.size());
    k.outer_acc(tape.layers[l].data(), delta.data(), grads.weights[l].data(), rows, n_in, n_out);
    k.column_sum(delta.data(), grads.biases[l].data(), rows, n_out);
    if (l == 0 && input_grad.empty()) break;
    w_rm = weights_row_major(l);
    zero_bias.assign(n_in, 0.0);
    double* dst = nullptr;
    if (l == 0) {
      dst = input_grad.data();
    } else {
      prev.resize(rows * n_in);
      dst = prev.data();
    }
    k.affine(delta.data(), w_rm.data(), zero_bias.data(), dst, rows, n_out, n_in);
    if (l > 0) delta.swap(prev);
  }
}

Mlp mlp_init(const std::vector<std::size_t>& layer_dims, std::uint64_t seed) {
  Mlp mlp(layer_dims);
  Rng rng(seed);
  for (std::size_t l = 0; l < mlp.num_layers(); ++l) {
    const double limit = std::sqrt(6.0 / static_cast<double>(layer_dims[l] + layer_dims[l + 1]));
    for (double& w : mlp.weights_input_major(l)) w = rng.uniform(-limit, limit);
  }
  return mlp;
}

GradientSet mlp_backward(const Mlp& mlp, std::span<const double> x_batch, std::size_t rows,
                         std::span<const double> upstream) {
  if (rows == 0) throw Error(ErrorKind::Shape, "empty batch");
  ForwardTape tape;
  mlp.forward_tape(x_batch, rows, tape);
  GradientSet grads = GradientSet::zeros_like(mlp);
  mlp.backward_tape(tape, upstream, grads, {});
  return grads;
}

AdamState AdamState::for_model(const Mlp& mlp, double learning_rate) {
  AdamState s;
  s.first_moment = GradientSet::zeros_like(mlp);
  s.second_moment = GradientSet::zeros_like(mlp);
  s.learning_rate = learning_rate;
  return s;
}

void adam_update(Mlp& mlp, const GradientSet& grads, AdamState& state) {
  if (grads.weights.size() != mlp.num_layers() || state.first_moment.weights.size() != mlp.num_layers()) {
    throw Error(ErrorKind::Shape, "gradient/optimizer state not congruent with network");
  }
  for (std::size_t l = 0; l < mlp.num_layers(); ++l) {
    for (std::size_t i = 0; i < grads.weights[l].size(); ++i) {
      if (!std::isfinite(grads.weights[l][i])) {
        const std::size_t n_out = mlp.layer_dims()[l + 1];
        std::ostringstream os;
        os << "nonfinite gradient at layer " << l << " weight[" << i % n_out << "," << i / n_out << "]";
        throw Error(ErrorKind::Numeric, os.str());
      }
    }
    for (std::size_t j = 0; j < grads.biases[l].size(); ++j) {
      if (!std::isfinite(grads.biases[l][j])) {
        std::ostringstream os;
        os << "nonfinite gradient at layer " << l << " bias[" << j << "]";
        throw Error(ErrorKind::Numeric, os.str());
      }
    }
  }

  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  auto update = [&](std::span<double> theta, const std::vector<double>& g, std::vector<double>& m,
                    std::vector<double>& v) {
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      theta[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  };
  for (std::size_t l = 0; l < mlp.num_layers(); ++l) {
    update(mlp.weights_input_major(l), grads.weights[l], state.first_moment.weights[l],
           state.second_moment.weights[l]);
    update(mlp.biases(l), grads.biases[l], state.first_moment.biases[l], state.second_moment.biases[l]);
  }
}

std::pair<Mlp, AdamState> adam_step(Mlp mlp, const GradientSet& grads, AdamState state) {
  adam_update(mlp, grads, state);
  return {std::move(mlp), std::move(state)};
}

}  // namespace neurstrat::nn
