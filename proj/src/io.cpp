#include "neurstrat/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "neurstrat/error.hpp"

namespace neurstrat::io {
namespace {

template <typename T>
T get(const json& j, const char* key) {
  if (!j.contains(key)) throw Error(ErrorKind::Io, std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Io, std::string("field '") + key + "': " + e.what());
  }
}

std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

json mlp_to_json(const nn::Mlp& mlp) {
  json layers = json::array();
  json weights = json::array();
  json biases = json::array();
  for (std::size_t l = 0; l < mlp.num_layers(); ++l) {
    weights.push_back(mlp.weights_row_major(l));
    const auto b = mlp.biases(l);
    biases.push_back(std::vector<double>(b.begin(), b.end()));
  }
  return {{"layer_dims", mlp.layer_dims()}, {"weights", weights}, {"biases", biases}};
}

nn::Mlp mlp_from_json(const json& j) {
  return nn::Mlp(get<std::vector<std::size_t>>(j, "layer_dims"), get<std::vector<std::vector<double>>>(j, "weights"),
                 get<std::vector<std::vector<double>>>(j, "biases"));
}

json normalizer_to_json(const AffineNormalizer& n) { return {{"offset", n.offset}, {"scale", n.scale}}; }

AffineNormalizer normalizer_from_json(const json& j) {
  AffineNormalizer n{get<std::vector<double>>(j, "offset"), get<std::vector<double>>(j, "scale")};
  if (n.offset.size() != n.scale.size()) throw Error(ErrorKind::Io, "normalizer offset/scale lengths differ");
  return n;
}

json report_to_json(const TrainReport& r) {
  return {{"final_loss", r.final_loss},
          {"epochs", r.epochs},
          {"dataset_size", r.dataset_size},
          {"seed", r.seed},
          {"loss_history", r.loss_history}};
}

TrainReport report_from_json(const json& j) {
  TrainReport r;
  r.final_loss = get<double>(j, "final_loss");
  r.epochs = get<std::size_t>(j, "epochs");
  r.dataset_size = get<std::size_t>(j, "dataset_size");
  r.seed = get<std::uint64_t>(j, "seed");
  r.loss_history = get<std::vector<double>>(j, "loss_history");
  return r;
}

json bundle_to_json(const NeurAmModel& model, const EmpiricalCdf& cdf) {
  return {{"format", "neurstrat-bundle"},
          {"version", 1},
          {"encoder", mlp_to_json(model.encoder())},
          {"decoder", mlp_to_json(model.decoder())},
          {"surrogate", mlp_to_json(model.surrogate())},
          {"input_normalizer", normalizer_to_json(model.input_normalizer())},
          {"output_normalizer", normalizer_to_json(model.output_normalizer())},
          {"training_report", report_to_json(model.training_report())},
          {"sorted_latents", cdf.sorted_latents()}};
}

Bundle bundle_from_json(const json& j) {
  if (get<std::string>(j, "format") != "neurstrat-bundle") throw Error(ErrorKind::Io, "not a neurstrat bundle");
  NeurAmModel model(mlp_from_json(j.at("encoder")), mlp_from_json(j.at("decoder")), mlp_from_json(j.at("surrogate")),
                    normalizer_from_json(j.at("input_normalizer")), normalizer_from_json(j.at("output_normalizer")),
                    report_from_json(j.at("training_report")));
  return {std::move(model), EmpiricalCdf(get<std::vector<double>>(j, "sorted_latents"))};
}

void save_bundle(const std::filesystem::path& path, const NeurAmModel& model, const EmpiricalCdf& cdf) {
  write_json(path, bundle_to_json(model, cdf), -1);
}

Bundle load_bundle(const std::filesystem::path& path) { return bundle_from_json(read_json(path)); }

json as_direction_to_json(const AsDirection& d) {
  return {{"v", d.v}, {"eigenvalues", d.eigenvalues}, {"n_samples", d.n_samples}};
}

AsDirection as_direction_from_json(const json& j) {
  AsDirection d;
  d.v = get<std::vector<double>>(j, "v");
  d.eigenvalues = get<std::vector<double>>(j, "eigenvalues");
  d.n_samples = get<std::size_t>(j, "n_samples");
  return d;
}

json stratification_to_json(const StratificationFile& f) {
  json j = {{"format", "neurstrat-stratification"},
            {"version", 1},
            {"breakpoints", f.strat.breakpoints},
            {"provenance", f.provenance}};
  if (f.as_direction) j["as_direction"] = as_direction_to_json(*f.as_direction);
  return j;
}

StratificationFile stratification_from_json(const json& j) {
  if (get<std::string>(j, "format") != "neurstrat-stratification") throw Error(ErrorKind::Io, "not a stratification file");
  StratificationFile f;
  f.strat = Stratification::from_breakpoints(get<std::vector<double>>(j, "breakpoints"));
  if (j.contains("provenance")) f.provenance = j.at("provenance");
  if (j.contains("as_direction")) f.as_direction = as_direction_from_json(j.at("as_direction"));
  return f;
}

void save_stratification(const std::filesystem::path& path, const StratificationFile& f) {
  write_json(path, stratification_to_json(f));
}

StratificationFile load_stratification(const std::filesystem::path& path) {
  return stratification_from_json(read_json(path));
}

json estimate_to_json(const EstimateResult& r) {
  json strata = json::array();
  for (const auto& b : r.strata) {
    json s = {{"width", b.width},         {"mean", b.mean},
              {"variance", b.variance},   {"hf_count", b.hf_count},
              {"estimate", b.estimate},   {"variance_estimate", b.variance_estimate}};
    if (b.lf_count > 0) {
      s["lf_count"] = b.lf_count;
      s["lf_mean_paired"] = b.lf_mean_paired;
      s["lf_mean_all"] = b.lf_mean_all;
      s["lf_variance"] = b.lf_variance;
      s["covariance"] = b.covariance;
      s["alpha"] = b.alpha;
      s["rho"] = b.rho;
    }
    strata.push_back(std::move(s));
  }
  return {{"estimator", r.estimator},     {"estimate", r.estimate}, {"variance_estimate", r.variance_estimate},
          {"hf_evals", r.hf_evals},       {"lf_evals", r.lf_evals}, {"cost_ratio", r.cost_ratio},
          {"seed", r.seed},               {"strata", strata}};
}

void write_dataset_csv(const std::filesystem::path& path, const Dataset& data) {
  data.validate();
  std::ostringstream out;
  for (std::size_t k = 0; k < data.dim; ++k) out << "x_" << k + 1 << ',';
  out << "q\n";
  for (std::size_t i = 0; i < data.rows(); ++i) {
    for (std::size_t k = 0; k < data.dim; ++k) out << fmt17(data.inputs[i * data.dim + k]) << ',';
    out << fmt17(data.outputs[i]) << '\n';
  }
  write_text(path, out.str());
}

Dataset read_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::Io, path.string() + " is empty");
  std::size_t columns = 1;
  for (char c : line) columns += c == ',';
  if (columns < 2) throw Error(ErrorKind::Io, path.string() + ": need at least one input column and q");
  Dataset data;
  data.dim = columns - 1;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t col = 0;
    while (std::getline(ss, cell, ',')) {
      double v;
      try {
        std::size_t used = 0;
        v = std::stod(cell, &used);
      } catch (const std::exception&) {
        throw Error(ErrorKind::Io, path.string() + ":" + std::to_string(lineno) + ": bad number '" + cell + "'");
      }
      if (col < data.dim) data.inputs.push_back(v);
      else data.outputs.push_back(v);
      ++col;
    }
    if (col != columns) throw Error(ErrorKind::Io, path.string() + ":" + std::to_string(lineno) + ": wrong column count");
  }
  data.validate();
  return data;
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Io, path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const json& j, int indent) {
  write_text(path, j.dump(indent) + "\n");
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

}  // namespace neurstrat::io
