#pragma once

// JSON documents for networks, trained bundles, stratifications and
// estimator results; delimited text for datasets.

#include <filesystem>
#include <optional>
#include <string>

#include "json.hpp"
#include "neurstrat/baselines.hpp"
#include "neurstrat/estimators.hpp"
#include "neurstrat/neuram.hpp"
#include "neurstrat/nn.hpp"
#include "neurstrat/stratify.hpp"

namespace neurstrat::io {

using json = nlohmann::ordered_json;

json mlp_to_json(const nn::Mlp& mlp);
nn::Mlp mlp_from_json(const json& j);

json normalizer_to_json(const AffineNormalizer& n);
AffineNormalizer normalizer_from_json(const json& j);

json report_to_json(const TrainReport& r);
TrainReport report_from_json(const json& j);

struct Bundle {
  NeurAmModel model;
  EmpiricalCdf cdf;
};

json bundle_to_json(const NeurAmModel& model, const EmpiricalCdf& cdf);
Bundle bundle_from_json(const json& j);
void save_bundle(const std::filesystem::path& path, const NeurAmModel& model, const EmpiricalCdf& cdf);
Bundle load_bundle(const std::filesystem::path& path);

struct StratificationFile {
  Stratification strat;
  json provenance = json::object();
  std::optional<AsDirection> as_direction;
};

json stratification_to_json(const StratificationFile& f);
StratificationFile stratification_from_json(const json& j);
void save_stratification(const std::filesystem::path& path, const StratificationFile& f);
StratificationFile load_stratification(const std::filesystem::path& path);

json as_direction_to_json(const AsDirection& d);
AsDirection as_direction_from_json(const json& j);

json estimate_to_json(const EstimateResult& r);

// Header x_1,...,x_d,q; values printed with 17 significant digits.
void write_dataset_csv(const std::filesystem::path& path, const Dataset& data);
Dataset read_dataset_csv(const std::filesystem::path& path);

json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const json& j, int indent = 1);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace neurstrat::io
