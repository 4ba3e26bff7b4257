#include "neurstrat/models.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "neurstrat/error.hpp"

namespace neurstrat {
namespace {

constexpr double pi = std::numbers::pi;

double q0(std::span<const double> x) {
  return std::exp(0.7 * x[0] + 0.3 * x[1]) + 0.15 * std::sin(2.0 * pi * x[0]);
}

void q0_grad(std::span<const double> x, std::span<double> g) {
  const double e = std::exp(0.7 * x[0] + 0.3 * x[1]);
  g[0] = 0.7 * e + 0.3 * pi * std::cos(2.0 * pi * x[0]);
  g[1] = 0.3 * e;
}

double q0_lf(std::span<const double> x) {
  return std::exp(0.01 * x[0] + 0.99 * x[1]) + 0.15 * std::sin(3.0 * pi * x[1]);
}

void q0_lf_grad(std::span<const double> x, std::span<double> g) {
  const double e = std::exp(0.01 * x[0] + 0.99 * x[1]);
  g[0] = 0.01 * e;
  g[1] = 0.99 * e + 0.45 * pi * std::cos(3.0 * pi * x[1]);
}

double ishigami_variant(std::span<const double> x) {
  const double s1 = std::sin(pi * x[0]);
  const double s2 = std::sin(pi * x[1]);
  return s1 + 7.0 * s2 * s2 + 0.1 * pi * std::pow(x[2], 4) * s1;
}

double hartmann(std::span<const double> x) {
  if (x[0] <= 0.0 || x[2] <= 0.0 || x[3] == 0.0) {
    throw Error(ErrorKind::Domain, "hartmann needs x1 > 0, x3 > 0, x4 != 0");
  }
  const double t = x[3] / std::sqrt(x[2] * x[0]);
  double bracket = 0.0;
  if (std::abs(t) < 1e-3) {
    // 1 - t coth t, series about 0
    const double t2 = t * t;
    bracket = -t2 * (1.0 / 3.0 - t2 * (1.0 / 45.0 - t2 * 2.0 / 945.0));
  } else {
    bracket = 1.0 - t / std::tanh(t);
  }
  return -(x[1] * x[2] / (x[3] * x[3])) * bracket;
}

double borehole(std::span<const double> x) {
  if (x[0] <= 0.0 || x[1] <= 0.0) throw Error(ErrorKind::Domain, "borehole needs x1 > 0, x2 > 0");
  const double log_ratio = std::log(x[1] / x[0]);
  if (log_ratio == 0.0) throw Error(ErrorKind::Domain, "borehole needs x2 != x1");
  const double denom =
      log_ratio * (1.0 + x[2] / x[4] + 2.0 * x[6] * x[2] / (log_ratio * x[0] * x[0] * x[7]));
  return 2.0 * pi * x[2] * (x[3] - x[5]) / denom;
}

double g_function(std::span<const double> x) {
  double p = 1.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double k = static_cast<double>(i + 1);
    p *= (2.0 * std::abs(x[i]) + k) / (1.0 + k);
  }
  return p;
}

double sin_sum(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return std::sin(s);
}

void sin_sum_grad(std::span<const double> x, std::span<double> g) {
  double s = 0.0;
  for (double v : x) s += v;
  const double c = std::cos(s);
  for (double& gi : g) gi = c;
}

}  // namespace

double Model::operator()(std::span<const double> x) const { return eval(x); }

double eval_model(const Model& model, std::span<const double> x) {
  if (x.size() != model.dim) {
    std::ostringstream os;
    os << model.name << " expects " << model.dim << " inputs, got " << x.size();
    throw Error(ErrorKind::Shape, os.str());
  }
  const double y = model.eval(x);
  if (!std::isfinite(y)) throw Error(ErrorKind::Domain, model.name + " returned a nonfinite value");
  return y;
}

void eval_model_rows(const Model& model, std::span<const double> x, std::size_t rows, std::span<double> out) {
  if (x.size() != rows * model.dim || out.size() != rows) {
    throw Error(ErrorKind::Shape, model.name + ": batch shape mismatch");
  }
  if (!model.eval_batch) {
    for (std::size_t i = 0; i < rows; ++i) {
      try {
        out[i] = eval_model(model, x.subspan(i * model.dim, model.dim));
      } catch (const Error& e) {
        throw Error(e.kind(), model.name + " failed at sample " + std::to_string(i) + ": " + e.what());
      }
    }
    return;
  }
  model.eval_batch(x, rows, out);
  for (std::size_t i = 0; i < rows; ++i) {
    if (!std::isfinite(out[i])) {
      throw Error(ErrorKind::Domain, model.name + " returned a nonfinite value at sample " + std::to_string(i));
    }
  }
}

std::optional<double> exact_mean(const Model& model) { return model.exact_mean; }

Benchmark make_benchmark(std::string_view name, std::size_t dim) {
  if (name == "q0") {
    Model m{"q0", 2, q0, q0_grad, {}, Fidelity::High, 1.0, {}};
    m.exact_mean = 25.0 / 21.0 * (std::exp(-1.0) - std::exp(-0.4) - std::exp(0.4) + std::exp(1.0));
    return {m, ProductDistribution::uniform_cube(2, -1.0, 1.0)};
  }
  if (name == "q0_lf") {
    Model m{"q0_lf", 2, q0_lf, q0_lf_grad, {}, Fidelity::Low, kLowFidelityCostRatio, {}};
    return {m, ProductDistribution::uniform_cube(2, -1.0, 1.0)};
  }
  if (name == "linear") {
    Model m{"linear", 2, [](std::span<const double> x) { return x[0] + x[1]; },
            [](std::span<const double>, std::span<double> g) { g[0] = g[1] = 1.0; }, 0.0,
            Fidelity::High, 1.0, {}};
    return {m, ProductDistribution::uniform_cube(2, -1.0, 1.0)};
  }
  if (name == "ishigami") {
    Model m{"ishigami", 3, ishigami_variant, {}, {}, Fidelity::High, 1.0, {}};
    return {m, ProductDistribution::uniform_cube(3, -1.0, 1.0)};
  }
  if (name == "hartmann") {
    Model m{"hartmann", 4, hartmann, {}, {}, Fidelity::High, 1.0, {}};
    return {m, ProductDistribution({Component::log_uniform(0.05, 0.2), Component::log_uniform(0.5, 3.0),
                                    Component::log_uniform(0.5, 3.0), Component::log_uniform(0.1, 1.0)})};
  }
  if (name == "borehole") {
    Model m{"borehole", 8, borehole, {}, {}, Fidelity::High, 1.0, {}};
    return {m, ProductDistribution({Component::normal(0.10, 0.0161812), Component::log_normal(7.71, 1.0056),
                                    Component::uniform(63070, 115600), Component::uniform(990, 1110),
                                    Component::uniform(63.1, 116), Component::uniform(700, 820),
                                    Component::uniform(1120, 1680), Component::uniform(9855, 12045)})};
  }
  if (name == "gfunction") {
    Model m{"gfunction", 10, g_function, {}, {}, Fidelity::High, 1.0, {}};
    return {m, ProductDistribution::uniform_cube(10, -1.0, 1.0)};
  }
  if (name == "sinsum") {
    const std::size_t d = dim == 0 ? 10 : dim;
    Model m{"sinsum", d, sin_sum, sin_sum_grad, 0.0, Fidelity::High, 1.0, {}};
    return {m, ProductDistribution::uniform_cube(d, -1.0, 1.0)};
  }
  throw Error(ErrorKind::Config, "unknown model '" + std::string(name) + "'");
}

std::vector<std::string> benchmark_names() {
  return {"q0", "q0_lf", "linear", "ishigami", "hartmann", "borehole", "gfunction", "sinsum"};
}

}  // namespace neurstrat
