#ifndef LAB_DIFFSIM_HPP
#define LAB_DIFFSIM_HPP

#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "lab/methods.hpp"

namespace lab {

class ClockRegionError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class SnapBoundViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class TrajectoryClaimViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct ClockValue {
  double value = 0.0;
  double d1 = 0.0, d2 = 0.0, d3 = 0.0;
};

// c(a1, a2, a3): a3 when a1 >= rho and a2 <= rho/2; 0 when both >= rho or both <= rho/2.
ClockValue clock_gate(double a1, double a2, double a3, GridStep rho);

// Snaps to the grid; throws SnapBoundViolation when a coordinate is farther than `bound`.
Eigen::VectorXd snap_responses(const Eigen::VectorXd& v, GridStep grid, double bound, double* max_distance = nullptr);

// f = 1 - <Phi_X, theta> - kappa + eps (0-query) or <Phi_X, theta> + kappa - eps (1-query).
// Parameters are (theta_1..theta_p, kappa).
class SingleQueryModel : public DiffModel {
 public:
  SingleQueryModel(SQQuery query, int label, double eps) : query_(std::move(query)), label_(label), eps_(eps) {}
  long dimension() const override { return query_.arity() + 1; }
  Eigen::VectorXd initialize(const Bits&) const override { return Eigen::VectorXd::Zero(dimension()); }
  double evaluate(const Eigen::VectorXd& w, const Bits& x) const override;
  double differentiate(const Eigen::VectorXd& w, const Bits& x, SparseGrad& grad) const override;

 private:
  SQQuery query_;
  int label_;
  double eps_;
};

std::shared_ptr<SingleQueryModel> build_single_query_model(const SQQuery& q, LabelRestriction restriction, double eps);

// The composed model F of an alternating query program:
// F(x) = sum_t c(kappa_{t-1}, kappa_t, f^(t)(x)) + c(kappa_T, 0, h(x)), kappa_0 = 1.
// Layout: theta^0 (r entries), theta^1..theta^T (p each), kappa_1..kappa_T.
class ComposedModel : public DiffModel {
 public:
  ComposedModel(std::shared_ptr<const QueryProgram> prog, GridStep rho, bool strict = false);

  long dimension() const override { return r_ + (p_ + 1) * T_; }
  long random_bits() const override { return r_; }
  Eigen::VectorXd initialize(const Bits& R) const override;
  double evaluate(const Eigen::VectorXd& w, const Bits& x) const override;
  double differentiate(const Eigen::VectorXd& w, const Bits& x, SparseGrad& grad) const override;

  const QueryProgram& program() const { return *prog_; }
  GridStep rho() const { return rho_; }
  double eps() const { return 2.0 * rho_.value(); }
  long rounds() const { return T_; }
  int arity() const { return p_; }
  long theta_offset(long t) const { return t == 0 ? 0 : r_ + (t - 1) * p_; }
  long kappa_index(long t) const { return r_ + p_ * T_ + (t - 1); }
  double kappa(const Eigen::VectorXd& w, long t) const { return t == 0 ? 1.0 : w[kappa_index(t)]; }

  // First round whose clock has not fired (T+1 once all have).
  long active_round(const Eigen::VectorXd& w) const;
  // Query of round t under the snapped responses stored in w.
  std::shared_ptr<const SQQuery> query_for_round(const Eigen::VectorXd& w, long t) const;
  // Final predictor h(R, v_1..v_T) computed from w.
  Predictor final_predictor(const Eigen::VectorXd& w) const;
  Bits stored_bits(const Eigen::VectorXd& w) const;
  Eigen::VectorXd response(const Eigen::VectorXd& w, long t) const;
  // Largest snap distance observed so far.
  double max_snap_distance() const;

 private:
  double value_at(const Eigen::VectorXd& w, const Bits& x, SparseGrad* grad) const;
  void sync(const Eigen::VectorXd& w, long fed_target) const;

  std::shared_ptr<const QueryProgram> prog_;
  GridStep rho_;
  bool strict_;
  long T_;
  int p_;
  long r_;

  struct Cache {
    const double* key = nullptr;
    Bits R;
    std::unique_ptr<ProgramSession> session;
    long fed = 0;
    std::vector<Eigen::VectorXd> responses;
    std::shared_ptr<const SQQuery> pending;
    std::optional<Predictor> final;
    double max_snap = 0.0;
  };
  mutable std::mutex mutex_;
  mutable Cache cache_;
};

std::shared_ptr<ComposedModel> compile_program(std::shared_ptr<const QueryProgram> prog, GridStep rho,
                                               bool strict = false);

// Audits the induction claims after every step of a bSGD run on a composed model.
class TrajectoryAuditor : public StepObserver {
 public:
  explicit TrajectoryAuditor(std::shared_ptr<const ComposedModel> model, bool throw_on_violation = false)
      : model_(std::move(model)), throw_(throw_on_violation) {}
  void on_step(long t, const Eigen::VectorXd& w_after, const std::vector<Example>& batch, const SparseGrad& exact,
               const SparseGrad& g) override;
  void on_finish(const Eigen::VectorXd& w_final) override;
  long violations() const override { return static_cast<long>(failures_.size()); }

  const std::vector<std::string>& failures() const { return failures_; }
  long steps() const { return steps_; }
  double max_response_error() const { return max_response_error_; }
  double min_kappa() const { return min_kappa_; }
  double max_clip_displacement() const { return max_clip_; }
  bool clipping_activated() const { return clipped_; }
  bool final_matches() const { return final_matches_; }

 private:
  void fail(std::string msg);

  std::shared_ptr<const ComposedModel> model_;
  bool throw_;
  long steps_ = 0;
  double max_response_error_ = 0.0;
  double min_kappa_ = 1e300;
  double max_clip_ = 0.0;
  bool clipped_ = false;
  bool final_matches_ = false;
  std::vector<std::string> failures_;
};

// Learner running bSGD (gamma = 1) on the compiled program, with trajectory audits.
GradientLearner diffsim_learner(std::shared_ptr<const QueryProgram> prog, double tau, long b, bool audit = true);

}  // namespace lab

#endif
