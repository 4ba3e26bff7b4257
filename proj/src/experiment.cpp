#include "neurstrat/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "neurstrat/baselines.hpp"
#include "neurstrat/math.hpp"
#include "neurstrat/error.hpp"

namespace neurstrat {

// ---------------------------------------------------------------------------
// Configuration

std::string EstimatorSpec::label() const {
  if (!stratified()) return kind;
  return kind + (allocation == AllocationKind::Optimal ? "(1)" : "(2)");
}

namespace {

const std::set<std::string> kEstimatorKinds{"mc", "lhs-mc", "smc", "as-smc", "mfmc", "smfmc"};

[[noreturn]] void config_error(const std::string& what) { throw Error(ErrorKind::Config, what); }

template <typename T>
T field(const io::json& j, const std::string& key) {
  try {
    return j.at(key).get<T>();
  } catch (const io::json::exception& e) {
    config_error("key '" + key + "': " + e.what());
  }
}

std::size_t positive(const io::json& j, const std::string& key) {
  const auto& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() <= 0) config_error("key '" + key + "' must be a positive integer");
  return v.get<std::size_t>();
}

}  // namespace

EstimatorSpec parse_estimator(const io::json& j) {
  EstimatorSpec spec;
  std::string allocation;
  if (j.is_string()) {
    const auto text = j.get<std::string>();
    const auto colon = text.find(':');
    spec.kind = text.substr(0, colon);
    if (colon != std::string::npos) allocation = text.substr(colon + 1);
  } else if (j.is_object()) {
    for (const auto& [key, value] : j.items())
      if (key != "kind" && key != "allocation") config_error("unknown estimator key '" + key + "'");
    spec.kind = field<std::string>(j, "kind");
    if (j.contains("allocation")) allocation = field<std::string>(j, "allocation");
  } else {
    config_error("estimator entries must be strings or objects");
  }
  if (!kEstimatorKinds.count(spec.kind)) config_error("unknown estimator '" + spec.kind + "'");
  if (!allocation.empty()) {
    if (!spec.stratified()) config_error("estimator '" + spec.kind + "' takes no allocation");
    try {
      spec.allocation = parse_allocation_kind(allocation);
    } catch (const Error& e) {
      config_error(e.what());
    }
  }
  return spec;
}

ExperimentConfig parse_config(const io::json& j) {
  if (!j.is_object()) config_error("config must be a JSON object");
  static const std::set<std::string> known{
      "name", "model", "dim", "lf_model", "cost_ratio", "reparameterize", "M", "epochs", "learning_rate", "hidden", "K",
      "bundle", "lf_bundle", "S", "stratification", "stratification_file", "split_rule", "heuristic_allocation",
      "n_cheap", "N", "repetitions", "estimators", "seed", "threads", "as_samples", "fd_step", "sweep"};
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) config_error("unknown config key '" + key + "'");

  ExperimentConfig c;
  if (!j.contains("model")) config_error("config needs a 'model'");
  c.model = field<std::string>(j, "model");
  if (j.contains("name")) c.name = field<std::string>(j, "name");
  if (j.contains("dim")) c.dim = positive(j, "dim");
  if (j.contains("lf_model")) c.lf_model = field<std::string>(j, "lf_model");
  if (j.contains("cost_ratio")) c.cost_ratio = field<double>(j, "cost_ratio");
  if (j.contains("reparameterize")) c.reparameterize = field<bool>(j, "reparameterize");
  if (j.contains("M")) c.M = positive(j, "M");
  if (j.contains("epochs")) c.epochs = field<std::size_t>(j, "epochs");
  if (j.contains("learning_rate")) c.learning_rate = field<double>(j, "learning_rate");
  if (j.contains("hidden")) c.hidden = field<std::vector<std::size_t>>(j, "hidden");
  if (j.contains("K")) c.K = positive(j, "K");
  if (j.contains("bundle")) c.bundle = field<std::string>(j, "bundle");
  if (j.contains("lf_bundle")) c.lf_bundle = field<std::string>(j, "lf_bundle");
  if (j.contains("S")) c.S = positive(j, "S");
  if (j.contains("stratification")) c.stratification = field<std::string>(j, "stratification");
  if (j.contains("stratification_file")) c.stratification_file = field<std::string>(j, "stratification_file");
  try {
    if (j.contains("split_rule")) c.split_rule = parse_split_rule(field<std::string>(j, "split_rule"));
    if (j.contains("heuristic_allocation"))
      c.heuristic_allocation = parse_allocation_kind(field<std::string>(j, "heuristic_allocation"));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Config) throw;
    config_error(e.what());
  }
  if (j.contains("n_cheap")) c.n_cheap = positive(j, "n_cheap");
  if (j.contains("N")) c.N = positive(j, "N");
  if (j.contains("repetitions")) c.repetitions = positive(j, "repetitions");
  if (j.contains("estimators")) {
    if (!j.at("estimators").is_array()) config_error("'estimators' must be a list");
    for (const auto& e : j.at("estimators")) c.estimators.push_back(parse_estimator(e));
  }
  if (j.contains("seed")) c.seed = field<std::uint64_t>(j, "seed");
  if (j.contains("threads")) c.threads = field<std::size_t>(j, "threads");
  if (j.contains("as_samples")) c.as_samples = positive(j, "as_samples");
  if (j.contains("fd_step")) c.fd_step = field<double>(j, "fd_step");
  if (j.contains("sweep")) {
    const auto& s = j.at("sweep");
    if (!s.is_object()) config_error("'sweep' must be an object");
    for (const auto& [key, value] : s.items())
      if (key != "parameter" && key != "values") config_error("unknown sweep key '" + key + "'");
    c.sweep_parameter = field<std::string>(s, "parameter");
    if (c.sweep_parameter != "N" && c.sweep_parameter != "S") config_error("sweep parameter must be 'N' or 'S'");
    c.sweep_values = field<std::vector<std::size_t>>(s, "values");
    if (c.sweep_values.empty()) config_error("sweep needs at least one value");
    for (std::size_t v : c.sweep_values)
      if (v == 0) config_error("sweep values must be positive");
  }

  if (c.estimators.empty()) c.estimators = {parse_estimator("mc"), parse_estimator("smc:optimal")};
  if (c.stratification != "uniform" && c.stratification != "heuristic" && c.stratification != "file")
    config_error("stratification must be uniform, heuristic or file");
  if (c.stratification == "file" && !c.stratification_file) config_error("stratification 'file' needs stratification_file");
  if (!(c.cost_ratio > 0.0 && c.cost_ratio <= 1.0)) config_error("cost_ratio must lie in (0, 1]");
  if (!(c.learning_rate > 0.0)) config_error("learning_rate must be positive");
  if (!(c.fd_step > 0.0)) config_error("fd_step must be positive");
  for (std::size_t h : c.hidden)
    if (h == 0) config_error("hidden layer widths must be positive");
  const bool mf = std::any_of(c.estimators.begin(), c.estimators.end(), [](const auto& e) { return e.multifidelity(); });
  if (mf && !c.lf_model) config_error("multifidelity estimators need 'lf_model'");
  try {
    const auto hf = make_benchmark(c.model, c.dim);
    if (c.lf_model && make_benchmark(*c.lf_model, c.dim).model.dim != hf.model.dim)
      config_error("lf_model dimension differs from model");
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Config) throw;
    config_error(e.what());
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  try {
    return parse_config(io::read_json(path));
  } catch (const Error& e) {
    throw Error(ErrorKind::Config, path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Repetitions

RepeatSummary repeat_harness(const EstimatorClosure& estimator, std::size_t repetitions, std::uint64_t master_seed,
                             std::string_view label, std::optional<double> exact, std::size_t threads) {
  if (repetitions == 0) throw Error(ErrorKind::InvalidArgument, "need at least one repetition");
  RepeatSummary s;
  s.label = std::string(label);
  s.results.resize(repetitions);
  const auto start = std::chrono::steady_clock::now();

  std::atomic<std::size_t> next{0};
  std::mutex failure_mutex;
  std::exception_ptr failure;
  std::size_t failed_at = repetitions;
  auto worker = [&] {
    for (std::size_t r; (r = next.fetch_add(1)) < repetitions;) {
      const std::uint64_t seed = derive_seed(master_seed, label, r);
      try {
        Rng rng(seed);
        s.results[r] = estimator(rng, r);
        s.results[r].seed = seed;
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (r < failed_at) {
          failed_at = r;
          failure = std::current_exception();
        }
        next.store(repetitions);
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(threads, repetitions));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) {
    const std::uint64_t seed = derive_seed(master_seed, label, failed_at);
    try {
      std::rethrow_exception(failure);
    } catch (const Error& e) {
      throw Error(e.kind(), std::string(label) + " repetition " + std::to_string(failed_at) + " (seed " +
                                std::to_string(seed) + "): " + e.what());
    }
  }

  const double R = static_cast<double>(repetitions);
  for (const auto& r : s.results) {
    s.mean += r.estimate;
    s.mean_hf_evals += static_cast<double>(r.hf_evals);
    s.mean_lf_evals += static_cast<double>(r.lf_evals);
    s.mean_cost += r.hf_equivalent_cost();
  }
  s.mean /= R;
  s.mean_hf_evals /= R;
  s.mean_lf_evals /= R;
  s.mean_cost /= R;
  if (repetitions > 1) {
    double v = 0.0;
    for (const auto& r : s.results) v += (r.estimate - s.mean) * (r.estimate - s.mean);
    s.variance = v / R;
  }
  if (exact) {
    s.bias = s.mean - *exact;
    double m = 0.0;
    for (const auto& r : s.results) m += (r.estimate - *exact) * (r.estimate - *exact);
    s.mse = m / R;
  }
  s.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return s;
}

// ---------------------------------------------------------------------------
// Reports

void assign_mc_ratios(std::vector<ReportRow>& rows) {
  for (auto& row : rows) {
    row.ratio_to_mc.reset();
    const auto mc = std::find_if(rows.begin(), rows.end(), [&](const ReportRow& r) { return r.estimator == "mc" && r.N == row.N; });
    if (mc == rows.end()) continue;
    if (row.mse && mc->mse && *mc->mse > 0.0) row.ratio_to_mc = *row.mse / *mc->mse;
    else if (row.variance && mc->variance && *mc->variance > 0.0) row.ratio_to_mc = *row.variance / *mc->variance;
  }
}

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::string num(const std::optional<double>& v) { return v ? num(*v) : std::string(); }

}  // namespace

std::string report_csv(const std::vector<ReportRow>& rows) {
  std::ostringstream out;
  out << "label,estimator,allocation,N,S,repetitions,mean,variance,mse,ratio_to_mc,mean_hf_evals,mean_lf_evals,"
         "mean_cost\n";
  for (const auto& r : rows) {
    out << r.label << ',' << r.estimator << ',' << r.allocation << ',' << r.N << ',' << r.S << ',' << r.repetitions << ','
        << num(r.mean) << ',' << num(r.variance) << ',' << num(r.mse) << ',' << num(r.ratio_to_mc) << ','
        << num(r.mean_hf_evals) << ',' << num(r.mean_lf_evals) << ',' << num(r.mean_cost) << '\n';
  }
  return out.str();
}

std::string timing_csv(const std::vector<ReportRow>& rows) {
  std::ostringstream out;
  out << "label,N,S,wall_seconds\n";
  for (const auto& r : rows) out << r.label << ',' << r.N << ',' << r.S << ',' << num(r.wall_seconds) << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------
// Pipeline

namespace {

std::string seed_text(std::uint64_t seed) { return std::to_string(seed); }

template <typename F>
auto stage(const std::string& name, std::uint64_t seed, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(e.kind(), "stage '" + name + "' (seed " + seed_text(seed) + "): " + e.what());
  }
}

class Pipeline {
 public:
  explicit Pipeline(const ExperimentConfig& c)
      : c_(c), hf_(make_benchmark(c.model, c.dim)) {
    if (c.lf_model) lf_ = make_benchmark(*c.lf_model, c.dim).model;
    if (lf_) lf_->cost_ratio = c.cost_ratio;
  }

  const ExperimentConfig& config() const { return c_; }
  const Benchmark& hf() const { return hf_; }
  const TrainingSummary& training() const { return training_; }

  bool needs_neuram(const std::vector<EstimatorSpec>& specs) const {
    for (const auto& e : specs) {
      if (e.kind == "smc" || e.kind == "smfmc") return true;
      if (e.kind == "as-smc" && e.allocation == AllocationKind::Optimal) return true;
      if (e.kind == "mfmc" && c_.reparameterize) return true;
    }
    return false;
  }

  const NeuramMap& hf_map() {
    if (!hf_map_) {
      if (c_.bundle) {
        auto b = stage("load-bundle", c_.seed, [&] { return io::load_bundle(*c_.bundle); });
        hf_map_ = std::make_shared<NeuramMap>(std::make_shared<const NeurAmModel>(std::move(b.model)),
                                              std::make_shared<const EmpiricalCdf>(std::move(b.cdf)));
      } else {
        const auto& data = training_data();
        const std::uint64_t seed = derive_seed(c_.seed, "train-hf");
        auto model = stage("train-hf", seed, [&] { return train_neuram(data, hf_.dist, train_config(seed)); });
        auto shared = std::make_shared<const NeurAmModel>(std::move(model));
        const std::uint64_t cdf_seed = derive_seed(c_.seed, "cdf-hf");
        auto cdf = stage("cdf-hf", cdf_seed, [&] { return build_cdf(*shared, hf_.dist, c_.K, cdf_seed); });
        hf_map_ = std::make_shared<NeuramMap>(shared, std::make_shared<const EmpiricalCdf>(std::move(cdf)));
      }
      training_.hf_final_loss = hf_map_->model().training_report().final_loss;
    }
    return *hf_map_;
  }

  std::shared_ptr<const NeuramMap> hf_map_ptr() {
    hf_map();
    return hf_map_;
  }

  const Dataset& training_data() {
    if (!data_) {
      Rng rng(derive_seed(c_.seed, "train-data"));
      data_ = stage("train-data", c_.seed, [&] { return make_dataset(hf_.model, hf_.dist, c_.M, rng); });
      training_.hf_training_evals = c_.M;
    }
    return *data_;
  }

  // LF model used by the estimators: reparameterized through the shared
  // latent space, or the raw LF model.
  const Model& lf_model() {
    if (!lf_) throw Error(ErrorKind::Config, "no low-fidelity model configured");
    if (!c_.reparameterize) return *lf_;
    if (!lf_used_) {
      std::shared_ptr<const NeuramMap> lf_map;
      if (c_.lf_bundle) {
        auto b = stage("load-lf-bundle", c_.seed, [&] { return io::load_bundle(*c_.lf_bundle); });
        lf_map = std::make_shared<NeuramMap>(std::make_shared<const NeurAmModel>(std::move(b.model)),
                                             std::make_shared<const EmpiricalCdf>(std::move(b.cdf)));
      } else {
        Dataset lf_data = training_data();
        for (std::size_t i = 0; i < lf_data.rows(); ++i) lf_data.outputs[i] = eval_model(*lf_, lf_data.row(i));
        training_.lf_training_evals += lf_data.rows();
        const std::uint64_t seed = derive_seed(c_.seed, "train-lf");
        auto model = stage("train-lf", seed, [&] { return train_neuram(lf_data, hf_.dist, train_config(seed)); });
        auto shared = std::make_shared<const NeurAmModel>(std::move(model));
        const std::uint64_t cdf_seed = derive_seed(c_.seed, "cdf-lf");
        auto cdf = stage("cdf-lf", cdf_seed, [&] { return build_cdf(*shared, hf_.dist, c_.K, cdf_seed); });
        lf_map = std::make_shared<NeuramMap>(shared, std::make_shared<const EmpiricalCdf>(std::move(cdf)));
      }
      training_.lf_final_loss = lf_map->model().training_report().final_loss;
      lf_used_ = make_reparameterized_model(hf_map_ptr(), lf_map, *lf_);
    }
    return *lf_used_;
  }

  // HF values at the training inputs paired with the LF model used by the
  // estimators; quantiles through the HF map when one exists.
  const MfPilot& pilot() {
    if (!pilot_) {
      const Model& lf = lf_model();
      const auto& data = training_data();
      MfPilot p;
      p.hf = data.outputs;
      p.lf.resize(data.rows());
      p.quantiles.assign(data.rows(), 0.5);
      for (std::size_t i = 0; i < data.rows(); ++i) p.lf[i] = eval_model(lf, data.row(i));
      training_.lf_training_evals += data.rows();
      if (c_.reparameterize || needs_neuram(c_.estimators)) hf_map().quantiles(data.inputs, data.rows(), p.quantiles);
      pilot_ = std::move(p);
    }
    return *pilot_;
  }

  Stratification strat_for(std::size_t S) {
    if (auto it = strata_.find(S); it != strata_.end()) return it->second;
    Stratification strat;
    if (c_.stratification == "file") {
      strat = stage("load-stratification", c_.seed, [&] { return io::load_stratification(*c_.stratification_file).strat; });
    } else if (c_.stratification == "heuristic") {
      const std::uint64_t seed = derive_seed(c_.seed, "heuristic", S);
      strat = stage("heuristic", seed, [&] {
        Rng rng(seed);
        LatentProfile profile(hf_map(), c_.n_cheap, rng);
        HeuristicOptions opt;
        opt.target_strata = S;
        opt.allocation = c_.heuristic_allocation;
        opt.split = c_.split_rule;
        opt.cost_ratio = c_.cost_ratio;
        if (lf_ && std::any_of(c_.estimators.begin(), c_.estimators.end(), [](const auto& e) { return e.kind == "smfmc"; }))
          opt.pilot = &pilot();
        return heuristic_refine(profile, opt).strat;
      });
    } else {
      strat = uniform_breakpoints(S);
    }
    strata_.emplace(S, strat);
    return strat;
  }

  const StratumStats& stats_for(const Stratification& strat, bool with_pilot) {
    const auto key = std::make_pair(strat.breakpoints, with_pilot);
    if (auto it = stats_.find(key); it != stats_.end()) return it->second;
    const std::uint64_t seed = derive_seed(c_.seed, "stats", strat.size());
    auto stats = stage("stats", seed, [&] {
      Rng rng(seed);
      auto s = stratum_stats_surrogate(hf_map(), hf_.dist, strat, c_.n_cheap, rng);
      if (with_pilot) attach_pilot(s, strat, pilot());
      return s;
    });
    return stats_.emplace(key, std::move(stats)).first->second;
  }

  const AsMap& as_map() {
    if (!as_map_) {
      const std::uint64_t seed = derive_seed(c_.seed, "as-direction");
      auto dir = stage("as-direction", seed, [&] {
        Rng rng(seed);
        return as_direction(hf_.model, GaussianMap(hf_.dist), c_.as_samples, c_.fd_step, rng);
      });
      as_map_ = std::make_shared<AsMap>(std::move(dir), GaussianMap(hf_.dist));
    }
    return *as_map_;
  }

  // Surrogate moments on active-subspace strata.
  const StratumStats& as_stats_for(const Stratification& strat) {
    if (auto it = as_stats_.find(strat.breakpoints); it != as_stats_.end()) return it->second;
    const std::uint64_t seed = derive_seed(c_.seed, "as-stats", strat.size());
    auto stats = stage("as-stats", seed, [&] {
      Rng rng(seed);
      std::vector<std::size_t> counts(strat.size());
      for (std::size_t s = 0; s < strat.size(); ++s)
        counts[s] = std::max<std::size_t>(2, static_cast<std::size_t>(std::llround(static_cast<double>(c_.n_cheap) * strat.width(s))));
      const auto draws = fill_strata(hf_.dist, as_map(), strat, counts, rng);
      StratumStats st;
      st.widths = strat.widths();
      st.counts = counts;
      for (std::size_t s = 0; s < strat.size(); ++s) {
        std::vector<double> z(counts[s]), q(counts[s]);
        hf_map().model().encode_batch(draws.inputs[s], counts[s], z);
        hf_map().model().surrogate_latent_batch(z, q);
        const auto m = sample_moments(q);
        st.means.push_back(m.mean);
        st.variances.push_back(m.variance);
      }
      return st;
    });
    return as_stats_.emplace(strat.breakpoints, std::move(stats)).first->second;
  }

  // Closure for one estimator at budget N with S strata; `strata_used`
  // receives the stratum count for stratified estimators.
  EstimatorClosure closure(const EstimatorSpec& spec, std::size_t N, std::size_t S, std::size_t& strata_used) {
    strata_used = 0;
    const Model& hf = hf_.model;
    const ProductDistribution& dist = hf_.dist;
    if (spec.kind == "mc") return [&hf, &dist, N](Rng& rng, std::size_t) { return mc_estimate(hf, dist, N, rng); };
    if (spec.kind == "lhs-mc") return [&hf, &dist, N](Rng& rng, std::size_t) { return lhs_mc_estimate(hf, dist, N, rng); };

    if (spec.kind == "mfmc") {
      const Model& lf = lf_model();
      const auto pooled = pilot_moments(pilot(), 0.0, 1.0);
      const double rho = std::clamp(pooled.rho(), -1.0 + 1e-9, 1.0 - 1e-9);
      if (!(pooled.var_lf > 0.0)) throw Error(ErrorKind::DegenerateLowFidelity, "pilot LF variance is zero");
      const MfBudget budget = mfmc_allocation(rho, c_.cost_ratio, static_cast<double>(N));
      const double alpha = pooled.alpha();
      return [&hf, &lf, &dist, budget, alpha](Rng& rng, std::size_t) {
        return mfmc_estimate(hf, lf, dist, budget, AlphaSource::fixed(alpha), rng);
      };
    }

    const Stratification strat = strat_for(S);
    strata_used = strat.size();
    if (spec.kind == "smc") {
      const Allocation alloc = spec.allocation == AllocationKind::Optimal
                                   ? optimal_allocation_smc(strat, stats_for(strat, false), N)
                                   : proportional_allocation(strat, N);
      auto map = hf_map_ptr();
      return [&hf, &dist, map, strat, alloc](Rng& rng, std::size_t) {
        auto r = smc_estimate(hf, dist, *map, strat, alloc, rng);
        return r;
      };
    }
    if (spec.kind == "as-smc") {
      const Allocation alloc = spec.allocation == AllocationKind::Optimal
                                   ? optimal_allocation_smc(strat, as_stats_for(strat), N)
                                   : proportional_allocation(strat, N);
      const AsMap& map = as_map();
      return [&hf, &dist, &map, strat, alloc](Rng& rng, std::size_t) {
        auto r = smc_estimate(hf, dist, map, strat, alloc, rng);
        r.estimator = "as-smc";
        return r;
      };
    }
    // smfmc
    const Model& lf = lf_model();
    const StratumStats& stats = stats_for(strat, true);
    const auto budgets = smfmc_allocation(strat, stats, c_.cost_ratio, static_cast<double>(N), spec.allocation);
    const std::vector<double> alphas = stats.alpha;
    auto map = hf_map_ptr();
    return [&hf, &lf, &dist, map, strat, budgets, alphas](Rng& rng, std::size_t) {
      return smfmc_estimate(hf, lf, dist, *map, strat, budgets, alphas, rng);
    };
  }

  io::json describe() {
    io::json j;
    j["model"] = hf_.model.name;
    j["dim"] = hf_.model.dim;
    j["seed"] = c_.seed;
    io::json t;
    t["hf_training_evals"] = training_.hf_training_evals;
    t["lf_training_evals"] = training_.lf_training_evals;
    if (training_.hf_final_loss) t["hf_final_loss"] = *training_.hf_final_loss;
    if (training_.lf_final_loss) t["lf_final_loss"] = *training_.lf_final_loss;
    j["training"] = t;
    io::json strata = io::json::array();
    for (const auto& [S, strat] : strata_) {
      io::json s;
      s["S"] = S;
      s["breakpoints"] = strat.breakpoints;
      strata.push_back(s);
    }
    j["stratifications"] = strata;
    io::json stats = io::json::array();
    for (const auto& [key, st] : stats_) {
      io::json s = {{"widths", st.widths}, {"means", st.means}, {"variances", st.variances}, {"counts", st.counts}};
      if (st.has_multifidelity()) {
        s["rho"] = st.rho;
        s["alpha"] = st.alpha;
      }
      stats.push_back(s);
    }
    j["stratum_stats"] = stats;
    if (pilot_) {
      const auto pm = pilot_moments(*pilot_, 0.0, 1.0);
      j["pilot"] = {{"size", pm.n}, {"rho", pm.rho()}, {"alpha", pm.alpha()}};
    }
    if (as_map_) j["as_direction"] = io::as_direction_to_json(as_map_->direction());
    return j;
  }

  std::optional<double> exact() const { return hf_.model.exact_mean; }

 private:
  TrainConfig train_config(std::uint64_t seed) const {
    TrainConfig t;
    t.epochs = c_.epochs;
    t.learning_rate = c_.learning_rate;
    t.seed = seed;
    t.hidden = c_.hidden;
    return t;
  }

  const ExperimentConfig& c_;
  Benchmark hf_;
  std::optional<Model> lf_;
  std::optional<Model> lf_used_;
  std::optional<Dataset> data_;
  std::optional<MfPilot> pilot_;
  std::shared_ptr<NeuramMap> hf_map_;
  std::shared_ptr<AsMap> as_map_;
  std::map<std::size_t, Stratification> strata_;
  std::map<std::pair<std::vector<double>, bool>, StratumStats> stats_;
  std::map<std::vector<double>, StratumStats> as_stats_;
  TrainingSummary training_;
};

std::size_t thread_count(const ExperimentConfig& c) {
  if (c.threads > 0) return c.threads;
  return std::max(1u, std::thread::hardware_concurrency());
}

void run_rows(Pipeline& p, std::size_t N, std::size_t S, bool include_unstratified, std::vector<ReportRow>& rows,
              std::vector<RepeatSummary>& summaries) {
  const auto& c = p.config();
  for (const auto& spec : c.estimators) {
    if (!include_unstratified && !spec.stratified()) continue;
    std::size_t strata_used = 0;
    const auto fn = p.closure(spec, N, S, strata_used);
    std::string seed_label = spec.label() + "@N=" + std::to_string(N);
    if (spec.stratified()) seed_label += "@S=" + std::to_string(strata_used);
    auto summary = repeat_harness(fn, c.repetitions, c.seed, seed_label, p.exact(), thread_count(c));
    ReportRow row;
    row.label = spec.label();
    row.estimator = spec.kind;
    row.allocation = spec.stratified() ? to_string(spec.allocation) : "";
    row.N = N;
    row.S = strata_used;
    row.repetitions = c.repetitions;
    row.mean = summary.mean;
    row.variance = summary.variance;
    row.mse = summary.mse;
    row.mean_hf_evals = summary.mean_hf_evals;
    row.mean_lf_evals = summary.mean_lf_evals;
    row.mean_cost = summary.mean_cost;
    row.wall_seconds = summary.wall_seconds;
    rows.push_back(row);
    summary.label = seed_label;
    summaries.push_back(std::move(summary));
  }
}

void write_outputs(const std::filesystem::path& out, std::vector<ReportRow> rows, const std::vector<RepeatSummary>& summaries,
                   const io::json& run, const std::string& report_name = "report.csv") {
  if (out.empty()) return;
  assign_mc_ratios(rows);
  io::write_text(out / report_name, report_csv(rows));
  io::write_text(out / "timing.csv", timing_csv(rows));
  io::json dump = io::json::object();
  for (const auto& s : summaries) {
    io::json reps = io::json::array();
    for (const auto& r : s.results) reps.push_back(io::estimate_to_json(r));
    dump[s.label] = reps;
  }
  io::write_json(out / "estimates.json", dump, -1);
  io::write_json(out / "run.json", run);
}

}  // namespace

ExperimentOutput run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir) {
  Pipeline p(config);
  ExperimentOutput out;
  try {
    run_rows(p, config.N, config.S, true, out.rows, out.summaries);
  } catch (...) {
    write_outputs(out_dir, out.rows, out.summaries, p.describe());
    throw;
  }
  assign_mc_ratios(out.rows);
  out.training = p.training();
  if (std::any_of(config.estimators.begin(), config.estimators.end(), [](const auto& e) { return e.stratified(); }))
    out.strat = p.strat_for(config.S);
  write_outputs(out_dir, out.rows, out.summaries, p.describe());
  return out;
}

std::vector<ReportRow> compare_experiments(const std::vector<ExperimentConfig>& configs, const std::filesystem::path& out_dir) {
  if (configs.empty()) throw Error(ErrorKind::Config, "compare needs at least one config");
  for (const auto& c : configs)
    if (c.model != configs.front().model || c.dim != configs.front().dim)
      throw Error(ErrorKind::Config, "compared configs must share the model and distribution");
  std::vector<ReportRow> rows;
  std::vector<RepeatSummary> summaries;
  io::json runs = io::json::array();
  for (const auto& c : configs) {
    Pipeline p(c);
    std::vector<ReportRow> part;
    run_rows(p, c.N, c.S, true, part, summaries);
    for (auto& r : part) {
      if (configs.size() > 1) r.label = c.name + ":" + r.label;
      rows.push_back(r);
    }
    auto d = p.describe();
    d["name"] = c.name;
    runs.push_back(d);
  }
  assign_mc_ratios(rows);
  write_outputs(out_dir, rows, summaries, runs, "compare.csv");
  return rows;
}

std::vector<ReportRow> sweep_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir) {
  if (config.sweep_parameter.empty()) throw Error(ErrorKind::Config, "config has no 'sweep' section");
  Pipeline p(config);
  std::vector<ReportRow> rows;
  std::vector<RepeatSummary> summaries;
  bool first = true;
  for (std::size_t v : config.sweep_values) {
    const bool by_n = config.sweep_parameter == "N";
    run_rows(p, by_n ? v : config.N, by_n ? config.S : v, by_n || first, rows, summaries);
    first = false;
  }
  assign_mc_ratios(rows);
  write_outputs(out_dir, rows, summaries, p.describe(), "sweep.csv");
  return rows;
}

void train_command(const ExperimentConfig& config, const std::filesystem::path& out_dir) {
  const auto hf = make_benchmark(config.model, config.dim);
  Rng rng(derive_seed(config.seed, "train-data"));
  const Dataset data = stage("train-data", config.seed, [&] { return make_dataset(hf.model, hf.dist, config.M, rng); });
  auto train_one = [&](const Dataset& d, const std::string& tag) {
    TrainConfig t;
    t.epochs = config.epochs;
    t.learning_rate = config.learning_rate;
    t.hidden = config.hidden;
    t.seed = derive_seed(config.seed, "train-" + tag);
    auto model = stage("train-" + tag, t.seed, [&] { return train_neuram(d, hf.dist, t); });
    const std::uint64_t cdf_seed = derive_seed(config.seed, "cdf-" + tag);
    auto cdf = stage("cdf-" + tag, cdf_seed, [&] { return build_cdf(model, hf.dist, config.K, cdf_seed); });
    io::write_dataset_csv(out_dir / ("dataset_" + tag + ".csv"), d);
    io::save_bundle(out_dir / ("neuram_" + tag + ".json"), model, cdf);
  };
  train_one(data, "hf");
  if (config.lf_model) {
    const auto lf = make_benchmark(*config.lf_model, config.dim);
    Dataset lf_data = data;
    for (std::size_t i = 0; i < lf_data.rows(); ++i) lf_data.outputs[i] = eval_model(lf.model, lf_data.row(i));
    train_one(lf_data, "lf");
  }
}

Stratification stratify_command(const ExperimentConfig& config, const std::filesystem::path& out_dir) {
  Pipeline p(config);
  const Stratification strat = p.strat_for(config.S);
  io::StratificationFile f;
  f.strat = strat;
  f.provenance = {{"source", config.stratification},
                  {"S_target", config.S},
                  {"split_rule", to_string(config.split_rule)},
                  {"allocation", to_string(config.heuristic_allocation)},
                  {"n_cheap", config.n_cheap},
                  {"seed", config.seed}};
  if (std::any_of(config.estimators.begin(), config.estimators.end(), [](const auto& e) { return e.kind == "as-smc"; }))
    f.as_direction = p.as_map().direction();
  if (!out_dir.empty()) io::save_stratification(out_dir / "stratification.json", f);
  return strat;
}

}  // namespace neurstrat
