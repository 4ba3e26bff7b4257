#include "neurstrat/neuram.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "neurstrat/error.hpp"

namespace neurstrat {

void Dataset::validate() const {
  if (dim == 0) throw Error(ErrorKind::Shape, "dataset has zero input dimension");
  if (inputs.size() != outputs.size() * dim) {
    std::ostringstream msg;
    msg << "dataset inputs hold " << inputs.size() << " values, expected " << outputs.size() << " x " << dim;
    throw Error(ErrorKind::Shape, msg.str());
  }
  for (std::size_t i = 0; i < rows(); ++i) {
    bool ok = std::isfinite(outputs[i]);
    for (std::size_t k = 0; k < dim && ok; ++k) ok = std::isfinite(inputs[i * dim + k]);
    if (!ok) throw Error(ErrorKind::Numeric, "nonfinite value in dataset row " + std::to_string(i));
  }
}

Dataset make_dataset(const Model& model, const ProductDistribution& dist, std::size_t rows, Rng& rng) {
  if (model.dim != dist.dim()) throw Error(ErrorKind::Shape, "model and distribution dimensions differ");
  Dataset data;
  data.dim = dist.dim();
  data.inputs = dist.sample_batch(rng, rows);
  data.outputs.resize(rows);
  for (std::size_t i = 0; i < rows; ++i) data.outputs[i] = eval_model(model, data.row(i));
  return data;
}

// ---------------------------------------------------------------------------

AffineNormalizer AffineNormalizer::identity(std::size_t dim) {
  return {std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0)};
}

AffineNormalizer AffineNormalizer::for_distribution(const ProductDistribution& dist) {
  AffineNormalizer n;
  for (const auto& c : dist.components()) {
    auto [lo, hi] = c.normalization_range();
    n.offset.push_back(0.5 * (lo + hi));
    n.scale.push_back(0.5 * (hi - lo));
  }
  return n;
}

AffineNormalizer AffineNormalizer::standardize(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorKind::Shape, "cannot standardize an empty sample");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  double sd = std::sqrt(ss / static_cast<double>(values.size()));
  if (!(sd > 0.0)) sd = 1.0;
  return {{mean}, {sd}};
}

void AffineNormalizer::apply(std::span<const double> raw, std::span<double> out) const {
  for (std::size_t k = 0; k < dim(); ++k) out[k] = (raw[k] - offset[k]) / scale[k];
}

void AffineNormalizer::invert(std::span<const double> normalized, std::span<double> out) const {
  for (std::size_t k = 0; k < dim(); ++k) out[k] = offset[k] + scale[k] * normalized[k];
}

void AffineNormalizer::apply_rows(std::span<const double> raw, std::span<double> out) const {
  const std::size_t d = dim();
  const std::size_t rows = raw.size() / d;
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t k = 0; k < d; ++k) out[i * d + k] = (raw[i * d + k] - offset[k]) / scale[k];
}

// ---------------------------------------------------------------------------

NeurAmModel::NeurAmModel(nn::Mlp encoder, nn::Mlp decoder, nn::Mlp surrogate, AffineNormalizer input_normalizer,
                         AffineNormalizer output_normalizer, TrainReport report)
    : encoder_(std::move(encoder)),
      decoder_(std::move(decoder)),
      surrogate_(std::move(surrogate)),
      input_norm_(std::move(input_normalizer)),
      output_norm_(std::move(output_normalizer)),
      report_(std::move(report)) {
  const std::size_t d = input_norm_.dim();
  if (d == 0 || input_norm_.scale.size() != d) throw Error(ErrorKind::InvalidArchitecture, "bad input normalizer");
  if (output_norm_.dim() != 1 || output_norm_.scale.size() != 1)
    throw Error(ErrorKind::InvalidArchitecture, "output normalizer must be one-dimensional");
  if (encoder_.input_dim() != d || encoder_.output_dim() != 1)
    throw Error(ErrorKind::InvalidArchitecture, "encoder must map R^d to R");
  if (decoder_.input_dim() != 1 || decoder_.output_dim() != d)
    throw Error(ErrorKind::InvalidArchitecture, "decoder must map R to R^d");
  if (surrogate_.input_dim() != 1 || surrogate_.output_dim() != 1)
    throw Error(ErrorKind::InvalidArchitecture, "surrogate must map R to R");
}

double NeurAmModel::encode(std::span<const double> x) const {
  if (x.size() != dim()) throw Error(ErrorKind::Shape, "encode: input dimension mismatch");
  std::vector<double> xn(dim());
  input_norm_.apply(x, xn);
  return encoder_.forward_scalar(xn);
}

void NeurAmModel::encode_batch(std::span<const double> x, std::size_t rows, std::span<double> z) const {
  if (x.size() != rows * dim() || z.size() != rows) throw Error(ErrorKind::Shape, "encode_batch: size mismatch");
  std::vector<double> xn(x.size());
  input_norm_.apply_rows(x, xn);
  encoder_.forward_batch(xn, rows, z);
}

std::vector<double> NeurAmModel::decode(double z) const {
  std::vector<double> xn = decoder_.forward(std::span<const double>(&z, 1));
  std::vector<double> x(dim());
  input_norm_.invert(xn, x);
  return x;
}

double NeurAmModel::surrogate_latent(double z) const {
  return output_norm_.offset[0] + output_norm_.scale[0] * surrogate_.forward_scalar(std::span<const double>(&z, 1));
}

void NeurAmModel::surrogate_latent_batch(std::span<const double> z, std::span<double> out) const {
  surrogate_.forward_batch(z, z.size(), out);
  for (double& v : out) v = output_norm_.offset[0] + output_norm_.scale[0] * v;
}

double NeurAmModel::surrogate_eval(std::span<const double> x) const { return surrogate_latent(encode(x)); }

// ---------------------------------------------------------------------------

namespace {

// The six tapes of one evaluation of the composite loss.
struct LossPass {
  nn::ForwardTape e1, s1, d1, e2, s2, d2;
  LossTerms terms;

  void run(const nn::Mlp& enc, const nn::Mlp& dec, const nn::Mlp& sur, std::span<const double> xn,
           std::span<const double> yn, std::size_t rows) {
    enc.forward_tape(xn, rows, e1);
    sur.forward_tape(e1.output(), rows, s1);
    dec.forward_tape(e1.output(), rows, d1);
    enc.forward_tape(d1.output(), rows, e2);
    sur.forward_tape(e2.output(), rows, s2);
    dec.forward_tape(e2.output(), rows, d2);

    const auto y1 = s1.output();
    const auto y2 = s2.output();
    const auto xt = d1.output();
    const auto xtt = d2.output();
    double a = 0.0, b = 0.0, c = 0.0;
    for (std::size_t i = 0; i < rows; ++i) {
      a += (yn[i] - y2[i]) * (yn[i] - y2[i]);
      b += (yn[i] - y1[i]) * (yn[i] - y1[i]);
    }
    for (std::size_t i = 0; i < xt.size(); ++i) c += (xt[i] - xtt[i]) * (xt[i] - xtt[i]);
    const double inv = 1.0 / static_cast<double>(rows);
    terms = {a * inv, b * inv, c * inv};
  }
};

struct NormalizedData {
  std::vector<double> x;
  std::vector<double> y;
};

NormalizedData normalize(const NeurAmModel& m, const Dataset& data) {
  if (data.dim != m.dim()) throw Error(ErrorKind::Shape, "dataset dimension does not match model");
  NormalizedData n{std::vector<double>(data.inputs.size()), std::vector<double>(data.rows())};
  m.input_normalizer().apply_rows(data.inputs, n.x);
  m.output_normalizer().apply_rows(data.outputs, n.y);
  return n;
}

}  // namespace

LossTerms neuram_loss_terms(const NeurAmModel& model, const Dataset& data) {
  data.validate();
  if (data.rows() == 0) throw Error(ErrorKind::Shape, "empty dataset");
  auto n = normalize(model, data);
  LossPass pass;
  pass.run(model.encoder(), model.decoder(), model.surrogate(), n.x, n.y, data.rows());
  return pass.terms;
}

double neuram_loss(const NeurAmModel& model, const Dataset& data) { return neuram_loss_terms(model, data).total(); }

NeurAmModel train_neuram(const Dataset& data, const ProductDistribution& dist, const TrainConfig& config) {
  data.validate();
  const std::size_t rows = data.rows();
  const std::size_t d = data.dim;
  if (rows == 0) throw Error(ErrorKind::Shape, "empty training set");
  if (dist.dim() != d) throw Error(ErrorKind::Shape, "distribution dimension does not match dataset");
  if (!(config.learning_rate > 0.0)) throw Error(ErrorKind::InvalidArgument, "learning rate must be positive");
  for (std::size_t h : config.hidden)
    if (h == 0) throw Error(ErrorKind::InvalidArchitecture, "hidden layer of width zero");

  auto dims = [&](std::size_t in, std::size_t out) {
    std::vector<std::size_t> v{in};
    v.insert(v.end(), config.hidden.begin(), config.hidden.end());
    v.push_back(out);
    return v;
  };

  NeurAmModel model(nn::mlp_init(dims(d, 1), derive_seed(config.seed, "encoder")),
                    nn::mlp_init(dims(1, d), derive_seed(config.seed, "decoder")),
                    nn::mlp_init(dims(1, 1), derive_seed(config.seed, "surrogate")),
                    AffineNormalizer::for_distribution(dist), AffineNormalizer::standardize(data.outputs));
  nn::Mlp enc = model.encoder();
  nn::Mlp dec = model.decoder();
  nn::Mlp sur = model.surrogate();
  const auto n = normalize(model, data);

  nn::AdamState enc_state = nn::AdamState::for_model(enc, config.learning_rate);
  nn::AdamState dec_state = nn::AdamState::for_model(dec, config.learning_rate);
  nn::AdamState sur_state = nn::AdamState::for_model(sur, config.learning_rate);
  auto g_enc = nn::GradientSet::zeros_like(enc);
  auto g_dec = nn::GradientSet::zeros_like(dec);
  auto g_sur = nn::GradientSet::zeros_like(sur);

  const double inv = 1.0 / static_cast<double>(rows);
  std::vector<double> up_y1(rows), up_y2(rows), up_xtt(rows * d);
  std::vector<double> dz2(rows), dz2_b(rows), dz1(rows), dz1_b(rows), dxt(rows * d);

  TrainReport report;
  report.epochs = config.epochs;
  report.dataset_size = rows;
  report.seed = config.seed;
  report.loss_history.reserve(config.epochs);

  LossPass pass;
  // The composite is re-run on the live networks each epoch; the tapes from
  // the end of epoch e seed the gradient of epoch e + 1.
  pass.run(enc, dec, sur, n.x, n.y, rows);
  if (!std::isfinite(pass.terms.total())) throw Error(ErrorKind::Numeric, "nonfinite initial loss");

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto y1 = pass.s1.output();
    const auto y2 = pass.s2.output();
    const auto xt = pass.d1.output();
    const auto xtt = pass.d2.output();
    for (std::size_t i = 0; i < rows; ++i) {
      up_y2[i] = -2.0 * inv * (n.y[i] - y2[i]);
      up_y1[i] = -2.0 * inv * (n.y[i] - y1[i]);
    }
    for (std::size_t i = 0; i < rows * d; ++i) up_xtt[i] = -2.0 * inv * (xt[i] - xtt[i]);

    g_enc.set_zero();
    g_dec.set_zero();
    g_sur.set_zero();

    sur.backward_tape(pass.s2, up_y2, g_sur, dz2);
    dec.backward_tape(pass.d2, up_xtt, g_dec, dz2_b);
    for (std::size_t i = 0; i < rows; ++i) dz2[i] += dz2_b[i];
    enc.backward_tape(pass.e2, dz2, g_enc, dxt);
    for (std::size_t i = 0; i < rows * d; ++i) dxt[i] -= up_xtt[i];
    dec.backward_tape(pass.d1, dxt, g_dec, dz1);
    sur.backward_tape(pass.s1, up_y1, g_sur, dz1_b);
    for (std::size_t i = 0; i < rows; ++i) dz1[i] += dz1_b[i];
    enc.backward_tape(pass.e1, dz1, g_enc, {});

    try {
      nn::adam_update(enc, g_enc, enc_state);
      nn::adam_update(dec, g_dec, dec_state);
      nn::adam_update(sur, g_sur, sur_state);
    } catch (const Error& e) {
      throw Error(ErrorKind::Numeric, "training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
    }

    pass.run(enc, dec, sur, n.x, n.y, rows);
    const double loss = pass.terms.total();
    if (!std::isfinite(loss))
      throw Error(ErrorKind::Numeric, "nonfinite loss at epoch " + std::to_string(epoch));
    report.loss_history.push_back(loss);
  }
  report.final_loss = report.loss_history.empty() ? pass.terms.total() : report.loss_history.back();

  return NeurAmModel(std::move(enc), std::move(dec), std::move(sur), model.input_normalizer(),
                     model.output_normalizer(), std::move(report));
}

// ---------------------------------------------------------------------------

EmpiricalCdf::EmpiricalCdf(std::vector<double> latents) : sorted_(std::move(latents)) {
  if (sorted_.empty()) throw Error(ErrorKind::InvalidArgument, "empirical CDF needs at least one latent");
  for (double t : sorted_)
    if (!std::isfinite(t)) throw Error(ErrorKind::Numeric, "nonfinite latent value");
  std::sort(sorted_.begin(), sorted_.end());
  if (sorted_.back() - sorted_.front() < 1e-12) {
    std::ostringstream msg;
    msg << "latent sample spans [" << sorted_.front() << ", " << sorted_.back() << "]";
    throw Error(ErrorKind::DegenerateLatent, msg.str());
  }
}

double EmpiricalCdf::eval(double t) const {
  if (std::isnan(t)) throw Error(ErrorKind::InvalidArgument, "cdf_eval of NaN");
  const std::size_t k = sorted_.size();
  const double kd = static_cast<double>(k);
  if (t < sorted_.front()) return 0.0;
  if (t > sorted_.back()) return 1.0;
  const auto i = static_cast<std::size_t>(std::upper_bound(sorted_.begin(), sorted_.end(), t) - sorted_.begin());
  if (i == k) return (kd - 0.5) / kd;
  const double lo = sorted_[i - 1];
  const double hi = sorted_[i];
  const double frac = (t - lo) / (hi - lo);
  return (static_cast<double>(i) - 0.5 + frac) / kd;
}

double EmpiricalCdf::inverse(double u) const {
  if (!(u >= 0.0 && u <= 1.0)) throw Error(ErrorKind::InvalidArgument, "cdf_inverse argument outside [0, 1]");
  const std::size_t k = sorted_.size();
  const double p = u * static_cast<double>(k) - 0.5;
  if (p <= 0.0) return sorted_.front();
  if (p >= static_cast<double>(k - 1)) return sorted_.back();
  const auto i = static_cast<std::size_t>(p);
  const double frac = p - static_cast<double>(i);
  return sorted_[i] + frac * (sorted_[i + 1] - sorted_[i]);
}

TriangularCdf::TriangularCdf(double a, double mode, double b) : a_(a), c_(mode), b_(b) {
  if (!(a < b && a <= mode && mode <= b)) throw Error(ErrorKind::InvalidArgument, "triangular needs a <= c <= b, a < b");
}

double TriangularCdf::eval(double t) const {
  if (std::isnan(t)) throw Error(ErrorKind::InvalidArgument, "cdf_eval of NaN");
  if (t <= a_) return 0.0;
  if (t >= b_) return 1.0;
  const double w = b_ - a_;
  if (t <= c_) return (t - a_) * (t - a_) / (w * (c_ - a_));
  return 1.0 - (b_ - t) * (b_ - t) / (w * (b_ - c_));
}

double TriangularCdf::inverse(double u) const {
  if (!(u >= 0.0 && u <= 1.0)) throw Error(ErrorKind::InvalidArgument, "cdf_inverse argument outside [0, 1]");
  const double w = b_ - a_;
  if (u <= (c_ - a_) / w) return a_ + std::sqrt(u * w * (c_ - a_));
  return b_ - std::sqrt((1.0 - u) * w * (b_ - c_));
}

EmpiricalCdf build_cdf(const NeurAmModel& model, const ProductDistribution& dist, std::size_t samples,
                       std::uint64_t seed) {
  if (samples == 0) throw Error(ErrorKind::InvalidArgument, "build_cdf needs at least one sample");
  if (dist.dim() != model.dim()) throw Error(ErrorKind::Shape, "distribution dimension does not match model");
  Rng rng(seed);
  std::vector<double> latents(samples);
  constexpr std::size_t chunk = 4096;
  for (std::size_t start = 0; start < samples; start += chunk) {
    const std::size_t rows = std::min(chunk, samples - start);
    auto x = dist.sample_batch(rng, rows);
    model.encode_batch(x, rows, std::span<double>(latents.data() + start, rows));
  }
  return EmpiricalCdf(std::move(latents));
}

// ---------------------------------------------------------------------------

double QuantileMap::quantile(std::span<const double> x) const {
  double u = 0.0;
  quantiles(x, 1, std::span<double>(&u, 1));
  return u;
}

NeuramMap::NeuramMap(std::shared_ptr<const NeurAmModel> model, std::shared_ptr<const LatentCdf> cdf)
    : model_(std::move(model)), cdf_(std::move(cdf)) {
  if (!model_ || !cdf_) throw Error(ErrorKind::InvalidArgument, "NeuramMap needs a model and a CDF");
}

void NeuramMap::quantiles(std::span<const double> x, std::size_t rows, std::span<double> u) const {
  model_->encode_batch(x, rows, u);
  for (double& v : u) v = cdf_->eval(v);
}

void NeuramMap::quantiles_and_surrogate(std::span<const double> x, std::size_t rows, std::span<double> u,
                                        std::span<double> s) const {
  model_->encode_batch(x, rows, u);
  model_->surrogate_latent_batch(u, s);
  for (double& v : u) v = cdf_->eval(v);
}

double NeuramMap::surrogate_at_quantile(double u) const { return model_->surrogate_latent(cdf_->inverse(u)); }

std::vector<double> NeuramMap::manifold_point(double u) const { return model_->decode(cdf_->inverse(u)); }

double reparameterize_lf(const NeuramMap& hf, const NeuramMap& lf, const Model& lf_raw, std::span<const double> x) {
  if (hf.dim() != lf.dim() || lf_raw.dim != lf.dim()) throw Error(ErrorKind::Shape, "reparameterization dimensions differ");
  const double u = hf.quantile(x);
  return eval_model(lf_raw, lf.manifold_point(u));
}

Model make_reparameterized_model(std::shared_ptr<const NeuramMap> hf, std::shared_ptr<const NeuramMap> lf,
                                 Model lf_raw) {
  if (!hf || !lf) throw Error(ErrorKind::InvalidArgument, "reparameterization needs both maps");
  Model m;
  m.name = lf_raw.name + "_reparam";
  m.dim = hf->dim();
  m.fidelity = Fidelity::Low;
  m.cost_ratio = lf_raw.cost_ratio;
  m.eval = [hf, lf, raw = lf_raw](std::span<const double> x) { return reparameterize_lf(*hf, *lf, raw, x); };
  m.eval_batch = [hf, lf, raw = std::move(lf_raw)](std::span<const double> x, std::size_t rows, std::span<double> out) {
    const std::size_t d = hf->dim();
    std::vector<double> z(rows);
    hf->quantiles(x, rows, z);
    for (double& v : z) v = lf->cdf().inverse(v);
    std::vector<double> xn(rows * d), xr(d);
    lf->model().decoder().forward_batch(z, rows, xn);
    const AffineNormalizer& norm = lf->model().input_normalizer();
    for (std::size_t i = 0; i < rows; ++i) {
      norm.invert(std::span<const double>(xn.data() + i * d, d), xr);
      out[i] = raw.eval(xr);
    }
  };
  return m;
}

AnalyticLinearNeuram analytic_linear_neuram() {
  nn::Mlp enc({2, 1}, {{1.0, 1.0}}, {{0.0}});
  nn::Mlp dec({1, 2}, {{0.5, 0.5}}, {{0.0, 0.0}});
  nn::Mlp sur({1, 1}, {{1.0}}, {{0.0}});
  AnalyticLinearNeuram a;
  a.model = std::make_shared<const NeurAmModel>(std::move(enc), std::move(dec), std::move(sur),
                                                AffineNormalizer::identity(2), AffineNormalizer::identity(1));
  a.cdf = std::make_shared<const TriangularCdf>(-2.0, 0.0, 2.0);
  return a;
}

}  // namespace neurstrat
