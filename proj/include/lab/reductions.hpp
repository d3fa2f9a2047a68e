#ifndef LAB_REDUCTIONS_HPP
#define LAB_REDUCTIONS_HPP

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "lab/extract.hpp"
#include "lab/methods.hpp"

namespace lab {

class IncompatibleComposition : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ReductionReport {
  MethodSpec source;
  MethodSpec target;
  std::vector<std::string> stages;
  double delta = 0.0;
  std::map<std::string, double> params;  // derived quantities (k', q, T', p', r', ...)
  std::vector<std::string> warnings;     // out-of-regime notes
  std::vector<std::pair<double, double>> error_pairs;
  long violations = 0;
};

// Round budget of the extraction reductions.
long extraction_budget(long m, int n, double delta, bool alternating);
// q = ceil(8 ln(4k/delta) / (b tau^2)).
long averaging_repeats(long k, double delta, long b, double tau);
bool bsq_to_sq_in_regime(long k, long p, long b, double tau, double delta);
// m tau^2 > 32 (kp ln(1/tau) + ln(1/delta)).
bool fbsq_regime(long k, long p, long m, double tau, double delta);
// Nearest point of (2 alpha) Z intersected with [-1, 1].
double discretize(double v, double alpha);
Eigen::VectorXd discretize(const Eigen::VectorXd& v, double alpha);

QueryLearner pac_to_bsq(const PacLearner& pac, long b, double tau, double delta);
QueryLearner pac_to_bsq_alternating(const PacLearner& pac, long b, double tau, double delta);
QueryLearner pac_to_fbsq(const PacLearner& pac, long m, double tau);
QueryLearner sq_to_bsq(const QueryLearner& sq, long b, double delta, std::vector<std::string>* warnings = nullptr);
QueryLearner bsq_to_sq(const QueryLearner& bsq, double delta, std::vector<std::string>* warnings = nullptr);
QueryLearner sq_split_alternating(const QueryLearner& sq);
QueryLearner bsgd_to_bsq(const GradientLearner& gd);
QueryLearner sq_to_fbsq(const QueryLearner& sq, long m, double delta, std::vector<std::string>* warnings = nullptr);
QueryLearner fbsq_to_sq(const QueryLearner& fbsq, double delta, std::vector<std::string>* warnings = nullptr);

// Stage parameters: b, tau, rho, delta, m (frozen batch), payload_m, n.
struct PipelineParams {
  int n = 0;
  long b = 0;
  long m = 0;
  long payload_m = 0;  // PAC sample size (default 2n)
  double tau = 0.0;
  double rho = 0.0;
  double delta = 0.1;
  static PipelineParams from_json(const nlohmann::json& j);
};

struct Pipeline {
  Method method;
  ReductionReport report;
};

Pipeline build_pipeline(const std::vector<std::string>& stages, const Method& payload, const PipelineParams& params);
// {"pipeline": [...], "payload": name, "params": {...}}
Pipeline build_pipeline(const nlohmann::json& spec);
// Payloads by name: "parity", "constant", "majority" (PAC); "dictator" (SQ); "majority_vote" (alternating SQ).
Method payload_by_name(const std::string& name, int n, long m, double tau = 0.1);

// Checks recorded answers against fresh batches: rounds are grouped `group` at a time
// (one vector query split into scalar sub-queries); returns the number of violated groups.
long fresh_batch_violations(const std::vector<OracleRound>& log, long group, const FiniteDistribution& D, long b,
                            double tau, std::uint64_t seed);

}  // namespace lab

#endif
