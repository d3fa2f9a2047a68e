#ifndef LAB_METHODS_HPP
#define LAB_METHODS_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "lab/paradigms.hpp"

namespace lab {

enum class Paradigm { PAC, SQ, BSQ, FBSQ, BSGD, FBGD };
const char* to_string(Paradigm p);

// Parameters of a method class; unused fields stay 0.
struct MethodSpec {
  Paradigm kind = Paradigm::PAC;
  long k = 0;        // rounds (k or T)
  double tau = 0.0;  // tolerance, or rho for gradient methods
  long b = 0;        // batch size (m for full-batch classes and PAC)
  long p = 0;        // query arity or parameter count
  long r = 0;        // random bits
  bool alternating = false;
  std::string describe() const;
};

struct PacLearner {
  std::string name;
  long m = 0;
  long r = 0;
  int n = 0;
  std::function<Predictor(const std::vector<Example>&, const Bits& R)> learn;
};

// One execution of a query program; rounds are consumed strictly in order.
class ProgramSession {
 public:
  virtual ~ProgramSession() = default;
  virtual SQQuery next_query() = 0;
  virtual void respond(const Eigen::VectorXd& v) = 0;
  virtual Predictor finish() = 0;
};

// A query method as data: per-round queries from (t, R, v_1..v_{t-1}) and a final predictor.
class QueryProgram {
 public:
  virtual ~QueryProgram() = default;
  virtual std::string name() const = 0;
  virtual int n() const = 0;
  virtual long rounds() const = 0;
  virtual int arity() const = 0;
  virtual long random_bits() const = 0;
  virtual bool alternating() const { return false; }
  virtual std::unique_ptr<ProgramSession> start(const Bits& R) const = 0;
};

// Query of round t given R and earlier responses (replays a fresh session).
SQQuery generate_query(const QueryProgram& prog, long t, const Bits& R, const std::vector<Eigen::VectorXd>& responses);

struct QueryLearner {
  MethodSpec spec;
  std::shared_ptr<const QueryProgram> program;
};

struct GradientLearner {
  MethodSpec spec;
  std::shared_ptr<const DiffModel> model;
  // When set, every run compiles its own model (models with per-run caches).
  std::function<std::shared_ptr<const DiffModel>()> model_factory;
  double gamma = 1.0;
  // Optional per-run observer factory (trajectory audits).
  std::function<std::unique_ptr<StepObserver>(std::shared_ptr<const DiffModel>)> observer;
};

using Method = std::variant<PacLearner, QueryLearner, GradientLearner>;
MethodSpec spec_of(const Method& m);

struct RunOptions {
  Adversary noise;
  RoundingStrategy rounding = RoundingStrategy::Nearest;
  bool clamp_outputs = false;
  bool keep_log = false;
};

struct RunResult {
  Predictor predictor;
  double error = 0.0;
  long rounds = 0;
  long samples = 0;
  long violations = 0;
  std::vector<OracleRound> log;  // when keep_log
  std::shared_ptr<Transcript> transcript;  // gradient methods, when keep_log
};

// Runs a query program to completion against an oracle; checks arity and alternation.
Predictor run_program(const QueryProgram& prog, QueryOracle& oracle, const Bits& R);

RunResult execute(const Method& method, const FiniteDistribution& D, std::uint64_t seed, const RunOptions& opts = {});

struct ErrorEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;
  std::vector<RunResult> runs;
};

// Monte-Carlo err(A, D) over independent trials with split seeds.
ErrorEstimate eval_method_error(const Method& method, const FiniteDistribution& D, long trials, std::uint64_t seed,
                                const RunOptions& opts = {});

// Worker count from LAB_THREADS (default: hardware concurrency).
unsigned lab_threads();
void parallel_for(long count, const std::function<void(long)>& body);

}  // namespace lab

#endif
