#pragma once

#include <memory>

#include "neurstrat/models.hpp"
#include "neurstrat/neuram.hpp"

namespace testing {

struct TrainedQ0 {
  neurstrat::Benchmark hf;
  neurstrat::Benchmark lf;
  std::shared_ptr<const neurstrat::NeurAmModel> hf_model;
  std::shared_ptr<const neurstrat::NeurAmModel> lf_model;
  std::shared_ptr<const neurstrat::EmpiricalCdf> hf_cdf;
  std::shared_ptr<const neurstrat::EmpiricalCdf> lf_cdf;

  neurstrat::NeuramMap hf_map() const { return {hf_model, hf_cdf}; }
  neurstrat::NeuramMap lf_map() const { return {lf_model, lf_cdf}; }
};

// Q0 and its LF partner, M = 100, default training, K = 1e5. Built once.
const TrainedQ0& trained_q0();

}  // namespace testing
