#ifndef LAB_EXPERIMENT_HPP
#define LAB_EXPERIMENT_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lab/methods.hpp"

namespace lab {

enum class ExperimentKind { ExtractStats, ParityEndToEnd, RegimeSweep, GadgetAudit, ReductionMatrix };
const char* to_string(ExperimentKind k);
ExperimentKind experiment_kind_from_string(const std::string& s);

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::ExtractStats;
  std::string distribution;  // optional JSON distribution file
  nlohmann::json pipeline;   // pipeline spec or list of specs (ReductionMatrix)
  nlohmann::json params = nlohmann::json::object();
  long trials = 100;
  std::uint64_t seed = 1;
  std::string output = "out";
  bool out_of_regime = false;
  bool transcript = false;  // also write transcript.jsonl for trial 0

  // Relative paths resolve against base_dir.
  static ExperimentConfig from_json(const nlohmann::json& j, const std::string& base_dir = ".");
  static ExperimentConfig load(const std::string& path);
};

struct ExperimentOutcome {
  bool passed = false;
  nlohmann::json summary;
  std::vector<std::string> failures;
};

// Writes results.csv, summary.json and run.log into config.output.
ExperimentOutcome run_experiment(const ExperimentConfig& config);

// The bSGD -> bSQ -> SQ chain for f_w = w at grid rho, labels Bernoulli(p_y): fraction of trials in
// which the (noisy) population answers fail as batch answers on a fresh batch of size b.
struct RegimeResult {
  double failure_rate = 0.0;
  long failures = 0;
  long trials = 0;
  double tau_bsq = 0.0;
  double tau_sq = 0.0;
};
RegimeResult regime_failure_rate(long b, double rho, double p_y, long trials, std::uint64_t seed,
                                 NoiseAdversary noise = NoiseAdversary::PlusTau);

// Total variation distance between empirical counts and D.
double tv_distance(const FiniteDistribution& D, const std::vector<Example>& draws);

}  // namespace lab

#endif
