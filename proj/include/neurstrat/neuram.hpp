#pragma once

// Neural active manifold: encoder (d -> 1), decoder (1 -> d) and a 1-D
// surrogate trained jointly, plus the latent CDF that maps the encoder
// output to [0, 1].

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "neurstrat/distributions.hpp"
#include "neurstrat/models.hpp"
#include "neurstrat/nn.hpp"
#include "neurstrat/rng.hpp"

namespace neurstrat {

struct Dataset {
  std::size_t dim = 0;
  std::vector<double> inputs;   // rows x dim
  std::vector<double> outputs;  // rows

  std::size_t rows() const { return outputs.size(); }
  std::span<const double> row(std::size_t i) const { return {inputs.data() + i * dim, dim}; }
  void validate() const;
};

// Evaluates `model` on `rows` draws from `dist`.
Dataset make_dataset(const Model& model, const ProductDistribution& dist, std::size_t rows, Rng& rng);

// Componentwise normalized = (raw - offset) / scale.
struct AffineNormalizer {
  std::vector<double> offset;
  std::vector<double> scale;

  static AffineNormalizer identity(std::size_t dim);
  // Maps each component's normalization range onto [-1, 1].
  static AffineNormalizer for_distribution(const ProductDistribution& dist);
  // Standardizes by sample mean and standard deviation (scale 1 when constant).
  static AffineNormalizer standardize(std::span<const double> values);

  std::size_t dim() const { return offset.size(); }
  void apply(std::span<const double> raw, std::span<double> out) const;
  void invert(std::span<const double> normalized, std::span<double> out) const;
  // Batched, rows x dim.
  void apply_rows(std::span<const double> raw, std::span<double> out) const;
  bool operator==(const AffineNormalizer&) const = default;
};

struct TrainReport {
  double final_loss = 0.0;
  std::vector<double> loss_history;
  std::size_t epochs = 0;
  std::size_t dataset_size = 0;
  std::uint64_t seed = 0;
  bool operator==(const TrainReport&) const = default;
};

struct TrainConfig {
  std::size_t epochs = 10000;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  std::vector<std::size_t> hidden = {8, 8};
};

class NeurAmModel {
 public:
  NeurAmModel(nn::Mlp encoder, nn::Mlp decoder, nn::Mlp surrogate, AffineNormalizer input_normalizer,
              AffineNormalizer output_normalizer, TrainReport report = {});

  std::size_t dim() const { return input_norm_.dim(); }
  const nn::Mlp& encoder() const { return encoder_; }
  const nn::Mlp& decoder() const { return decoder_; }
  const nn::Mlp& surrogate() const { return surrogate_; }
  const AffineNormalizer& input_normalizer() const { return input_norm_; }
  const AffineNormalizer& output_normalizer() const { return output_norm_; }
  const TrainReport& training_report() const { return report_; }

  // Latent coordinate of a raw input.
  double encode(std::span<const double> x) const;
  // rows x dim raw inputs -> rows latents.
  void encode_batch(std::span<const double> x, std::size_t rows, std::span<double> z) const;
  // Raw-space point on the manifold for a latent value.
  std::vector<double> decode(double z) const;
  // Denormalized S(z).
  double surrogate_latent(double z) const;
  void surrogate_latent_batch(std::span<const double> z, std::span<double> out) const;
  // S(E(x)), denormalized.
  double surrogate_eval(std::span<const double> x) const;

  bool operator==(const NeurAmModel&) const = default;

 private:
  nn::Mlp encoder_;
  nn::Mlp decoder_;
  nn::Mlp surrogate_;
  AffineNormalizer input_norm_;
  AffineNormalizer output_norm_;
  TrainReport report_;
};

struct LossTerms {
  double projected = 0.0;    // mean (q - S(E(D(E(x)))))^2
  double direct = 0.0;       // mean (q - S(E(x)))^2
  double fixed_point = 0.0;  // mean |D(E(x)) - D(E(D(E(x))))|^2
  double total() const { return projected + direct + fixed_point; }
};

// Batch-mean loss terms in normalized coordinates.
LossTerms neuram_loss_terms(const NeurAmModel& model, const Dataset& data);
double neuram_loss(const NeurAmModel& model, const Dataset& data);

// Full-batch Adam on the three-term loss. `dist` fixes the input normalizer.
NeurAmModel train_neuram(const Dataset& data, const ProductDistribution& dist, const TrainConfig& config);

// ---------------------------------------------------------------------------
// Latent CDFs

class LatentCdf {
 public:
  virtual ~LatentCdf() = default;
  virtual double eval(double t) const = 0;
  virtual double inverse(double u) const = 0;
};

// Piecewise-linear CDF through (t_(k), (k - 1/2) / K) on the sorted latent
// sample; 0 below the minimum, 1 above the maximum.
class EmpiricalCdf final : public LatentCdf {
 public:
  // Sorts the input; throws DegenerateLatent if the sample range is < 1e-12.
  explicit EmpiricalCdf(std::vector<double> latents);

  double eval(double t) const override;
  double inverse(double u) const override;

  const std::vector<double>& sorted_latents() const { return sorted_; }
  std::size_t size() const { return sorted_.size(); }
  bool operator==(const EmpiricalCdf& other) const { return sorted_ == other.sorted_; }

 private:
  std::vector<double> sorted_;
};

// Closed-form CDF of the triangular distribution T(a, c, b).
class TriangularCdf final : public LatentCdf {
 public:
  TriangularCdf(double a, double mode, double b);
  double eval(double t) const override;
  double inverse(double u) const override;

 private:
  double a_;
  double c_;
  double b_;
};

inline double cdf_eval(const LatentCdf& cdf, double t) { return cdf.eval(t); }
inline double cdf_inverse(const LatentCdf& cdf, double u) { return cdf.inverse(u); }

// K encoder evaluations on draws from `dist`; no model evaluations.
EmpiricalCdf build_cdf(const NeurAmModel& model, const ProductDistribution& dist, std::size_t samples,
                       std::uint64_t seed);

// ---------------------------------------------------------------------------
// Maps from the input domain to [0, 1]

class QuantileMap {
 public:
  virtual ~QuantileMap() = default;
  virtual std::size_t dim() const = 0;
  // rows x dim inputs -> rows values in [0, 1].
  virtual void quantiles(std::span<const double> x, std::size_t rows, std::span<double> u) const = 0;
  double quantile(std::span<const double> x) const;
};

// u = F(E(x)) with access to the surrogate and the manifold curve.
class NeuramMap final : public QuantileMap {
 public:
  NeuramMap(std::shared_ptr<const NeurAmModel> model, std::shared_ptr<const LatentCdf> cdf);

  std::size_t dim() const override { return model_->dim(); }
  void quantiles(std::span<const double> x, std::size_t rows, std::span<double> u) const override;
  // Quantiles and surrogate values from one encoder pass.
  void quantiles_and_surrogate(std::span<const double> x, std::size_t rows, std::span<double> u,
                               std::span<double> s) const;

  double surrogate(std::span<const double> x) const { return model_->surrogate_eval(x); }
  // Surrogate as a function of the quantile: S(F^-1(u)).
  double surrogate_at_quantile(double u) const;
  // D(F^-1(u)) in raw coordinates.
  std::vector<double> manifold_point(double u) const;

  const NeurAmModel& model() const { return *model_; }
  const LatentCdf& cdf() const { return *cdf_; }

 private:
  std::shared_ptr<const NeurAmModel> model_;
  std::shared_ptr<const LatentCdf> cdf_;
};

// LF evaluated at the LF-manifold point sharing x's HF latent quantile.
double reparameterize_lf(const NeuramMap& hf, const NeuramMap& lf, const Model& lf_raw,
                         std::span<const double> x);
Model make_reparameterized_model(std::shared_ptr<const NeuramMap> hf, std::shared_ptr<const NeuramMap> lf,
                                 Model lf_raw);

// ---------------------------------------------------------------------------

// Exact triple for Q(x) = x1 + x2 on U([-1, 1]^2): E(x) = x1 + x2,
// D(z) = (z/2, z/2), S(z) = z, with the triangular latent CDF T(-2, 0, 2).
struct AnalyticLinearNeuram {
  std::shared_ptr<const NeurAmModel> model;
  std::shared_ptr<const TriangularCdf> cdf;

  NeuramMap map() const { return NeuramMap(model, cdf); }
};

AnalyticLinearNeuram analytic_linear_neuram();

}  // namespace neurstrat
