#ifndef LAB_PARADIGMS_HPP
#define LAB_PARADIGMS_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "lab/model.hpp"
#include "lab/numerics.hpp"
#include "lab/problems.hpp"

namespace lab {

enum class LabelRestriction { None, ZeroQuery, OneQuery };
const char* to_string(LabelRestriction r);

class RangeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Expected restriction of round t in an alternating method.
inline LabelRestriction alternating_restriction(long t) {
  return (t % 2 == 1) ? LabelRestriction::OneQuery : LabelRestriction::ZeroQuery;
}

// Phi : {0,1}^n x {0,1} -> [-1,1]^p.
class SQQuery {
 public:
  using Evaluator = std::function<void(const Example&, Eigen::Ref<Eigen::VectorXd>)>;

  SQQuery() = default;
  SQQuery(int arity, Evaluator f, LabelRestriction r = LabelRestriction::None)
      : arity_(arity), f_(std::move(f)), restriction_(r) {}

  static SQQuery constant(int arity, double value, LabelRestriction r = LabelRestriction::None);
  // Phi(x,y) = 1{y = label} * phi_x(x) for a label-free phi_x.
  static SQQuery restricted(int label, int arity, std::function<void(const Bits&, Eigen::Ref<Eigen::VectorXd>)> phi_x);

  int arity() const { return arity_; }
  LabelRestriction restriction() const { return restriction_; }

  // Checked evaluation: range and label restriction.
  Eigen::VectorXd operator()(const Example& e) const;
  void eval_into(const Example& e, Eigen::Ref<Eigen::VectorXd> out) const;

 private:
  int arity_ = 1;
  Evaluator f_;
  LabelRestriction restriction_ = LabelRestriction::None;
};

Eigen::VectorXd empirical_mean(const std::vector<Example>& items, const SQQuery& q);
Eigen::VectorXd population_mean(const FiniteDistribution& D, const SQQuery& q);
// Per-sample values, one row per item.
Eigen::MatrixXd query_values(const std::vector<Example>& items, const SQQuery& q);

enum class NoiseAdversary { ZeroNoise, PlusTau, MinusTau, SeededRandom };
const char* to_string(NoiseAdversary a);
NoiseAdversary noise_adversary_from_string(const std::string& name);

struct Adversary {
  NoiseAdversary kind = NoiseAdversary::ZeroNoise;
  std::uint64_t seed = 0;
  Eigen::VectorXd perturb(const Eigen::VectorXd& exact, double tau, std::uint64_t round) const;
};

double sq_oracle_answer(const FiniteDistribution& D, const SQQuery& q, double tau, const Adversary& adv);
std::pair<Eigen::VectorXd, Batch> bsq_oracle_answer(const FiniteDistribution& D, const SQQuery& q, long b, double tau,
                                                    const Adversary& adv, std::uint64_t seed);
Eigen::VectorXd fbsq_oracle_answer(const Batch& S, const SQQuery& q, double tau, const Adversary& adv,
                                   std::uint64_t round = 0);

struct OracleRound {
  long round = 0;
  LabelRestriction restriction = LabelRestriction::None;
  std::uint64_t seed = 0;
  SQQuery query;
  Batch hidden;                 // empty for population and frozen-batch oracles
  Eigen::MatrixXd values;       // per-sample query values (batch oracles only)
  Eigen::VectorXd exact;        // empirical or population mean
  Eigen::VectorXd response;
};

// Method-facing query access: answer() is all a method sees.
class QueryOracle {
 public:
  virtual ~QueryOracle() = default;
  virtual Eigen::VectorXd answer(const SQQuery& q) = 0;
  virtual double tolerance() const = 0;
  virtual long rounds() const = 0;
  virtual long samples_consumed() const = 0;
};

class PopulationOracle : public QueryOracle {
 public:
  PopulationOracle(const FiniteDistribution& D, double tau, Adversary adv, bool record = true)
      : D_(D), tau_(tau), adv_(adv), record_(record) {}
  Eigen::VectorXd answer(const SQQuery& q) override;
  double tolerance() const override { return tau_; }
  long rounds() const override { return rounds_; }
  long samples_consumed() const override { return 0; }
  const std::vector<OracleRound>& log() const { return log_; }

 private:
  const FiniteDistribution& D_;
  double tau_;
  Adversary adv_;
  bool record_;
  long rounds_ = 0;
  std::vector<OracleRound> log_;
};

class BatchOracle : public QueryOracle {
 public:
  BatchOracle(const FiniteDistribution& D, long b, double tau, Adversary adv, std::uint64_t seed, bool record = true)
      : D_(D), b_(b), tau_(tau), adv_(adv), seed_(seed), record_(record) {}
  Eigen::VectorXd answer(const SQQuery& q) override;
  double tolerance() const override { return tau_; }
  long rounds() const override { return rounds_; }
  long samples_consumed() const override { return rounds_ * b_; }
  long batch_size() const { return b_; }
  const std::vector<OracleRound>& log() const { return log_; }

 private:
  const FiniteDistribution& D_;
  long b_;
  double tau_;
  Adversary adv_;
  std::uint64_t seed_;
  bool record_;
  long rounds_ = 0;
  std::vector<OracleRound> log_;
};

class FixedBatchOracle : public QueryOracle {
 public:
  FixedBatchOracle(Batch S, double tau, Adversary adv, bool record = true)
      : S_(std::move(S)), tau_(tau), adv_(adv), record_(record) {}
  Eigen::VectorXd answer(const SQQuery& q) override;
  double tolerance() const override { return tau_; }
  long rounds() const override { return rounds_; }
  long samples_consumed() const override { return static_cast<long>(S_.size()); }
  const Batch& hidden() const { return S_; }
  const std::vector<OracleRound>& log() const { return log_; }

 private:
  Batch S_;
  double tau_;
  Adversary adv_;
  bool record_;
  long rounds_ = 0;
  std::vector<OracleRound> log_;
};

// Rounds violating |response - exact|_inf <= tol.
long count_query_violations(const std::vector<OracleRound>& log, double tol);

// Additive hash of a parameter vector, updatable coordinate-wise.
std::uint64_t hash_contribution(long index, double value);
std::uint64_t iterate_hash(const Eigen::VectorXd& w);

struct GradientRound {
  long t = 0;
  Batch batch;           // empty for frozen-batch runs (see Transcript::fixed_batch)
  SparseGrad exact;      // averaged clipped gradient
  SparseGrad g;          // rounded update direction
  std::uint64_t hash = 0;
  std::uint64_t seed = 0;
};

class StepObserver {
 public:
  virtual ~StepObserver() = default;
  // Called after w has been updated to w_after.
  virtual void on_step(long t, const Eigen::VectorXd& w_after, const std::vector<Example>& batch,
                       const SparseGrad& exact, const SparseGrad& g) = 0;
  virtual void on_finish(const Eigen::VectorXd& /*w_final*/) {}
  virtual long violations() const { return 0; }
};

struct GradientOptions {
  RoundingOracle rounding;
  bool record = true;
  StepObserver* observer = nullptr;
};

struct Transcript {
  std::string paradigm;
  long T = 0;
  double rho = 0.0;
  double gamma = 1.0;
  long b = 0;
  long p = 0;
  std::uint64_t seed = 0;
  Eigen::VectorXd initial;
  Eigen::VectorXd final_w;
  Predictor predictor;
  std::vector<GradientRound> rounds;
  Batch fixed_batch;
  long samples_consumed = 0;
  long random_bits_consumed = 0;
};

// Gradient of the square loss of f_w at one example, clipped entrywise.
SparseGrad clipped_loss_gradient(const DiffModel& model, const Eigen::VectorXd& w, const Example& e);
SparseGrad average_clipped_gradient(const DiffModel& model, const Eigen::VectorXd& w, const std::vector<Example>& batch);

// One bSGD update on a given batch; returns the rounded direction g and updates w and hash.
SparseGrad gradient_step(const DiffModel& model, Eigen::VectorXd& w, const std::vector<Example>& batch, GridStep rho,
                         double gamma, const RoundingOracle& rounding, SparseGrad* exact_out, std::uint64_t* hash);

Transcript run_bsgd(std::shared_ptr<const DiffModel> model, const FiniteDistribution& D, long T, GridStep rho, long b,
                    double gamma, std::uint64_t seed, const GradientOptions& opts = {});
Transcript run_fbgd(std::shared_ptr<const DiffModel> model, const Batch& S, long T, GridStep rho, double gamma,
                    std::uint64_t seed, const GradientOptions& opts = {});
// bSGD on caller-supplied batches (scripted protocols).
Transcript run_on_batches(std::shared_ptr<const DiffModel> model, const Eigen::VectorXd& w0,
                          const std::vector<Batch>& batches, GridStep rho, double gamma,
                          const GradientOptions& opts = {});

bool valid_rounding(const SparseGrad& g, const SparseGrad& v, GridStep rho);

// Rounds whose g fails valid_rounding against the recomputed clipped average gradient.
long count_gradient_violations(const DiffModel& model, const Transcript& tr);

}  // namespace lab

#endif
