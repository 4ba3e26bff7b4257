#pragma once

// Benchmark functions with their input measures and known means.

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "neurstrat/distributions.hpp"

namespace neurstrat {

enum class Fidelity { High, Low };

struct Model {
  using EvalFn = std::function<double(std::span<const double>)>;
  using GradFn = std::function<void(std::span<const double>, std::span<double>)>;
  using BatchFn = std::function<void(std::span<const double>, std::size_t, std::span<double>)>;

  std::string name;
  std::size_t dim = 0;
  EvalFn eval;
  GradFn gradient;  // empty when no analytic gradient is known
  std::optional<double> exact_mean;
  Fidelity fidelity = Fidelity::High;
  double cost_ratio = 1.0;
  BatchFn eval_batch;  // optional row-major fast path, same values as eval

  double operator()(std::span<const double> x) const;
  bool has_gradient() const { return static_cast<bool>(gradient); }
};

// Checked evaluation: dimension and finiteness of the result.
double eval_model(const Model& model, std::span<const double> x);
// Evaluates `rows` row-major points; uses eval_batch when present.
void eval_model_rows(const Model& model, std::span<const double> x, std::size_t rows, std::span<double> out);
std::optional<double> exact_mean(const Model& model);

struct Benchmark {
  Model model;
  ProductDistribution dist;
};

// Registry names: q0, q0_lf, linear, ishigami, hartmann, borehole,
// gfunction, sinsum (dim required, defaults to 10).
Benchmark make_benchmark(std::string_view name, std::size_t dim = 0);
std::vector<std::string> benchmark_names();

// Low-fidelity cost ratio used with q0_lf.
inline constexpr double kLowFidelityCostRatio = 0.01;

}  // namespace neurstrat
