#include "fixtures.hpp"

#include "neurstrat/rng.hpp"

namespace testing {

using namespace neurstrat;

const TrainedQ0& trained_q0() {
  static const TrainedQ0 t = [] {
    TrainedQ0 r{make_benchmark("q0"), make_benchmark("q0_lf"), nullptr, nullptr, nullptr, nullptr};
    Rng rng(2025);
    const auto hf_data = make_dataset(r.hf.model, r.hf.dist, 100, rng);
    const auto lf_data = make_dataset(r.lf.model, r.lf.dist, 100, rng);
    TrainConfig cfg;
    cfg.seed = 1;
    r.hf_model = std::make_shared<const NeurAmModel>(train_neuram(hf_data, r.hf.dist, cfg));
    r.lf_model = std::make_shared<const NeurAmModel>(train_neuram(lf_data, r.lf.dist, cfg));
    r.hf_cdf = std::make_shared<const EmpiricalCdf>(build_cdf(*r.hf_model, r.hf.dist, 100000, 3));
    r.lf_cdf = std::make_shared<const EmpiricalCdf>(build_cdf(*r.lf_model, r.lf.dist, 100000, 4));
    return r;
  }();
  return t;
}

}  // namespace testing
