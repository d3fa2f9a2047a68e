#include "lab/diffsim.hpp"

#include <cmath>
#include <sstream>

namespace lab {

ClockValue clock_gate(double a1, double a2, double a3, GridStep rho) {
  const double r = rho.value();
  if (a1 >= r && a2 <= r / 2) return {a3, 0.0, 0.0, 1.0};
  if (a1 >= r && a2 >= r) return {};
  if (a1 <= r / 2 && a2 <= r / 2) return {};
  std::ostringstream os;
  os << "clock evaluated in the unspecified region (" << a1 << ", " << a2 << ")";
  throw ClockRegionError(os.str());
}

Eigen::VectorXd snap_responses(const Eigen::VectorXd& v, GridStep grid, double bound, double* max_distance) {
  Eigen::VectorXd out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    out[i] = grid.snap(v[i]);
    double d = std::fabs(out[i] - v[i]);
    if (max_distance && d > *max_distance) *max_distance = d;
    if (d > bound) {
      std::ostringstream os;
      os << "response coordinate " << v[i] << " is " << d << " from the grid (bound " << bound << ")";
      throw SnapBoundViolation(os.str());
    }
  }
  return out;
}

double SingleQueryModel::evaluate(const Eigen::VectorXd& w, const Bits& x) const {
  SparseGrad unused(dimension());
  return differentiate(w, x, unused);
}

double SingleQueryModel::differentiate(const Eigen::VectorXd& w, const Bits& x, SparseGrad& grad) const {
  const int p = query_.arity();
  Eigen::VectorXd phi = query_(Example{x, label_});
  const double dot = phi.dot(w.head(p));
  const double kappa = w[p];
  const double sign = label_ == 1 ? 1.0 : -1.0;
  grad.resize(dimension());
  grad.setZero();
  for (int j = 0; j < p; ++j)
    if (phi[j] != 0.0) grad.insertBack(j) = sign * phi[j];
  grad.insertBack(p) = sign;
  return label_ == 1 ? dot + kappa - eps_ : 1.0 - dot - kappa + eps_;
}

std::shared_ptr<SingleQueryModel> build_single_query_model(const SQQuery& q, LabelRestriction restriction, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("margin must be positive");
  if (restriction == LabelRestriction::None) throw std::invalid_argument("single-query model needs a 0- or 1-query");
  return std::make_shared<SingleQueryModel>(q, restriction == LabelRestriction::OneQuery ? 1 : 0, eps);
}

ComposedModel::ComposedModel(std::shared_ptr<const QueryProgram> prog, GridStep rho, bool strict)
    : prog_(std::move(prog)), rho_(rho), strict_(strict) {
  if (!prog_->alternating()) throw std::invalid_argument("compile_program needs an alternating program");
  T_ = prog_->rounds();
  p_ = prog_->arity();
  r_ = prog_->random_bits();
}

Eigen::VectorXd ComposedModel::initialize(const Bits& R) const {
  if (static_cast<long>(R.size()) != r_) throw std::invalid_argument("initialization needs exactly r bits");
  Eigen::VectorXd w = Eigen::VectorXd::Zero(dimension());
  for (long i = 0; i < r_; ++i) w[i] = R[static_cast<std::size_t>(i)];
  return w;
}

Bits ComposedModel::stored_bits(const Eigen::VectorXd& w) const {
  Bits R(static_cast<std::size_t>(r_));
  const double bound = rho_.value() / 8;
  for (long i = 0; i < r_; ++i) {
    double v = std::round(w[i]);
    if (std::fabs(v - w[i]) > bound || (v != 0.0 && v != 1.0))
      throw SnapBoundViolation("random-bit block entry " + std::to_string(i) + " is not a bit");
    R[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(v);
  }
  return R;
}

Eigen::VectorXd ComposedModel::response(const Eigen::VectorXd& w, long t) const {
  return snap_responses(w.segment(theta_offset(t), p_), rho_, rho_.value() / 8);
}

long ComposedModel::active_round(const Eigen::VectorXd& w) const {
  const double half = rho_.value() / 2;
  if (strict_) {
    for (long t = 1; t <= T_; ++t)
      if (kappa(w, t) <= half) return t;
    return T_ + 1;
  }
  long lo = 1, hi = T_ + 1;
  while (lo < hi) {
    long mid = lo + (hi - lo) / 2;
    if (kappa(w, mid) <= half)
      hi = mid;
    else
      lo = mid + 1;
  }
  return lo;
}

void ComposedModel::sync(const Eigen::VectorXd& w, long fed_target) const {
  Cache& c = cache_;
  bool reset = c.key != w.data() || !c.session || c.fed > fed_target;
  if (!reset && c.fed > 0) {
    long from = strict_ ? 1 : c.fed;
    for (long t = from; t <= c.fed && !reset; ++t) {
      const auto& stored = c.responses[static_cast<std::size_t>(t - 1)];
      if (stored != w.segment(theta_offset(t), p_)) reset = true;
    }
  }
  if (reset) {
    Bits R = stored_bits(w);
    c = Cache{};
    c.key = w.data();
    c.R = std::move(R);
    c.session = prog_->start(c.R);
  }
  while (c.fed < fed_target) {
    if (!c.pending) c.session->next_query();
    c.pending.reset();
    Eigen::VectorXd v = snap_responses(w.segment(theta_offset(c.fed + 1), p_), rho_, rho_.value() / 8, &c.max_snap);
    c.session->respond(v);
    c.responses.push_back(std::move(v));
    ++c.fed;
  }
}

std::shared_ptr<const SQQuery> ComposedModel::query_for_round(const Eigen::VectorXd& w, long t) const {
  std::lock_guard<std::mutex> lock(mutex_);
  sync(w, t - 1);
  if (!cache_.pending) {
    auto q = std::make_shared<const SQQuery>(cache_.session->next_query());
    if (q->arity() != p_) throw std::logic_error("program query arity differs from p");
    if (q->restriction() != alternating_restriction(t))
      throw std::logic_error("program breaks alternation at round " + std::to_string(t));
    cache_.pending = std::move(q);
  }
  return cache_.pending;
}

Predictor ComposedModel::final_predictor(const Eigen::VectorXd& w) const {
  std::lock_guard<std::mutex> lock(mutex_);
  sync(w, T_);
  if (!cache_.final) cache_.final = cache_.session->finish();
  return *cache_.final;
}

double ComposedModel::max_snap_distance() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return cache_.max_snap;
}

double ComposedModel::value_at(const Eigen::VectorXd& w, const Bits& x, SparseGrad* grad) const {
  if (grad) {
    grad->resize(dimension());
    grad->setZero();
  }
  auto round_term = [&](long t) {
    auto q = query_for_round(w, t);
    const int label = (t % 2 == 1) ? 1 : 0;
    Eigen::VectorXd phi = (*q)(Example{x, label});
    const long off = theta_offset(t);
    const double dot = phi.dot(w.segment(off, p_));
    const double k = kappa(w, t);
    const double sign = label == 1 ? 1.0 : -1.0;
    if (grad) {
      for (int j = 0; j < p_; ++j)
        if (phi[j] != 0.0) grad->coeffRef(off + j) += sign * phi[j];
      grad->coeffRef(kappa_index(t)) += sign;
    }
    return label == 1 ? dot + k - eps() : 1.0 - dot - k + eps();
  };
  auto final_term = [&]() { return final_predictor(w)(x); };

  double value = 0.0;
  if (strict_) {
    for (long t = 1; t <= T_; ++t)
      if (clock_gate(kappa(w, t - 1), kappa(w, t), 1.0, rho_).d3 != 0.0) value += round_term(t);
    if (clock_gate(kappa(w, T_), 0.0, 1.0, rho_).d3 != 0.0) value += final_term();
    return value;
  }
  const long t = active_round(w);
  if (t >= 2) clock_gate(kappa(w, t - 2), kappa(w, t - 1), 0.0, rho_);
  if (t <= T_) {
    if (clock_gate(kappa(w, t - 1), kappa(w, t), 1.0, rho_).d3 == 0.0)
      throw ClockRegionError("active clock is not in its firing region");
    if (t < T_) clock_gate(kappa(w, t), kappa(w, t + 1), 0.0, rho_);
    return round_term(t);
  }
  if (clock_gate(kappa(w, T_), 0.0, 1.0, rho_).d3 == 0.0) throw ClockRegionError("final clock did not fire");
  return final_term();
}

double ComposedModel::evaluate(const Eigen::VectorXd& w, const Bits& x) const { return value_at(w, x, nullptr); }

double ComposedModel::differentiate(const Eigen::VectorXd& w, const Bits& x, SparseGrad& grad) const {
  return value_at(w, x, &grad);
}

std::shared_ptr<ComposedModel> compile_program(std::shared_ptr<const QueryProgram> prog, GridStep rho, bool strict) {
  return std::make_shared<ComposedModel>(std::move(prog), rho, strict);
}

void TrajectoryAuditor::fail(std::string msg) {
  if (throw_) throw TrajectoryClaimViolation(msg);
  if (failures_.size() < 20) failures_.push_back(std::move(msg));
  else failures_.back() = "(further violations truncated)";
}

void TrajectoryAuditor::on_step(long i, const Eigen::VectorXd& w, const std::vector<Example>& batch,
                                const SparseGrad& exact, const SparseGrad& g) {
  ++steps_;
  const ComposedModel& F = *model_;
  const double rho = F.rho().value();
  const long lo = F.theta_offset(i), hi = lo + F.arity();
  const long ki = F.kappa_index(i);
  auto check_support = [&](const SparseGrad& v, const char* what) {
    for (SparseGrad::InnerIterator it(v); it; ++it) {
      long k = it.index();
      if (it.value() != 0.0 && !((k >= lo && k < hi) || k == ki)) {
        std::ostringstream os;
        os << "round " << i << ": " << what << " touches coordinate " << k << " outside the active block";
        fail(os.str());
        return;
      }
    }
  };
  check_support(exact, "gradient");
  check_support(g, "update");

  const double k = w[ki];
  min_kappa_ = std::min(min_kappa_, k);
  if (!(k >= rho)) fail("round " + std::to_string(i) + ": clock parameter below rho");

  auto q = F.query_for_round(w, i);
  Eigen::VectorXd avg = empirical_mean(batch, *q);
  double err = (w.segment(lo, F.arity()) - avg).lpNorm<Eigen::Infinity>();
  max_response_error_ = std::max(max_response_error_, err);
  if (!(err <= 3 * rho)) {
    std::ostringstream os;
    os << "round " << i << ": response differs from the batch average by " << err;
    fail(os.str());
  }

  // Before the step the block and clock were zero, so f = -eps (1-query) or 1 + eps (0-query).
  const int label = (i % 2 == 1) ? 1 : 0;
  const double f0 = label == 1 ? -F.eps() : 1.0 + F.eps();
  for (const auto& e : batch) {
    const double r = std::fabs(f0 - e.y);
    double largest = r;
    Eigen::VectorXd phi = (*q)(Example{e.x, label});
    if (phi.size() > 0) largest = std::max(largest, r * phi.cwiseAbs().maxCoeff());
    double d = std::max(0.0, largest - 1.0);
    if (d > 0.0) clipped_ = true;
    max_clip_ = std::max(max_clip_, d);
  }
  if (max_clip_ > F.eps() + 1e-12) fail("round " + std::to_string(i) + ": clipping moved a coordinate by more than eps");
  if (F.max_snap_distance() > rho / 8) fail("snap distance exceeded tau/32");
}

void TrajectoryAuditor::on_finish(const Eigen::VectorXd& w) {
  const ComposedModel& F = *model_;
  if (steps_ != F.rounds()) return;
  if (F.active_round(w) != F.rounds() + 1) {
    fail("clocks did not all fire by the end of training");
    return;
  }
  const QueryProgram& prog = F.program();
  auto session = prog.start(F.stored_bits(w));
  for (long t = 1; t <= F.rounds(); ++t) {
    session->next_query();
    session->respond(F.response(w, t));
  }
  Predictor h = session->finish();
  const int n = prog.n();
  if (n > 20) return;
  final_matches_ = true;
  for (std::uint64_t code = 0; code < (1ULL << n); ++code) {
    Bits x(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) x[static_cast<std::size_t>(j)] = static_cast<std::uint8_t>((code >> j) & 1U);
    if (F.evaluate(w, x) != h(x)) {
      final_matches_ = false;
      fail("final model output differs from the program's predictor at x=" + bits_to_string(x));
      return;
    }
  }
}

GradientLearner diffsim_learner(std::shared_ptr<const QueryProgram> prog, double tau, long b, bool audit) {
  GridStep rho = GridStep::from_value(tau / 4);
  GradientLearner gl;
  gl.spec.kind = Paradigm::BSGD;
  gl.spec.k = prog->rounds();
  gl.spec.tau = rho.value();
  gl.spec.b = b;
  gl.spec.p = prog->random_bits() + (prog->arity() + 1) * prog->rounds();
  gl.spec.r = prog->random_bits();
  gl.gamma = 1.0;
  gl.model_factory = [prog, rho] { return compile_program(prog, rho); };
  if (audit) {
    gl.observer = [](std::shared_ptr<const DiffModel> m) -> std::unique_ptr<StepObserver> {
      auto F = std::dynamic_pointer_cast<const ComposedModel>(m);
      if (!F) throw std::logic_error("trajectory audit needs a composed model");
      return std::make_unique<TrajectoryAuditor>(F);
    };
  }
  return gl;
}

}  // namespace lab
