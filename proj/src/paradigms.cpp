#include "lab/paradigms.hpp"

#include <cmath>
#include <cstring>

namespace lab {

const char* to_string(LabelRestriction r) {
  switch (r) {
    case LabelRestriction::None: return "none";
    case LabelRestriction::ZeroQuery: return "0-query";
    case LabelRestriction::OneQuery: return "1-query";
  }
  return "?";
}

SQQuery SQQuery::constant(int arity, double value, LabelRestriction r) {
  if (value == 0.0) return SQQuery(arity, [](const Example&, Eigen::Ref<Eigen::VectorXd> out) { out.setZero(); }, r);
  if (r != LabelRestriction::None) {
    int label = r == LabelRestriction::OneQuery ? 1 : 0;
    return SQQuery(
        arity,
        [value, label](const Example& e, Eigen::Ref<Eigen::VectorXd> out) { out.setConstant(e.y == label ? value : 0.0); },
        r);
  }
  return SQQuery(arity, [value](const Example&, Eigen::Ref<Eigen::VectorXd> out) { out.setConstant(value); }, r);
}

SQQuery SQQuery::restricted(int label, int arity, std::function<void(const Bits&, Eigen::Ref<Eigen::VectorXd>)> phi_x) {
  auto r = label == 1 ? LabelRestriction::OneQuery : LabelRestriction::ZeroQuery;
  return SQQuery(
      arity,
      [label, phi_x = std::move(phi_x)](const Example& e, Eigen::Ref<Eigen::VectorXd> out) {
        if (e.y == label)
          phi_x(e.x, out);
        else
          out.setZero();
      },
      r);
}

void SQQuery::eval_into(const Example& e, Eigen::Ref<Eigen::VectorXd> out) const {
  f_(e, out);
  for (Eigen::Index i = 0; i < out.size(); ++i)
    if (!(std::fabs(out[i]) <= 1.0)) throw RangeError("query value outside [-1,1]");
  bool must_vanish = (restriction_ == LabelRestriction::ZeroQuery && e.y == 1) ||
                     (restriction_ == LabelRestriction::OneQuery && e.y == 0);
  if (must_vanish && !out.isZero(0.0)) throw RangeError(std::string("query violates its ") + to_string(restriction_) + " restriction");
}

Eigen::VectorXd SQQuery::operator()(const Example& e) const {
  Eigen::VectorXd out(arity_);
  eval_into(e, out);
  return out;
}

Eigen::VectorXd empirical_mean(const std::vector<Example>& items, const SQQuery& q) {
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(q.arity());
  Eigen::VectorXd tmp(q.arity());
  for (const auto& e : items) {
    q.eval_into(e, tmp);
    sum += tmp;
  }
  return sum / static_cast<double>(items.size());
}

Eigen::VectorXd population_mean(const FiniteDistribution& D, const SQQuery& q) {
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(q.arity());
  Eigen::VectorXd tmp(q.arity());
  for (const auto& [e, p] : D.entries()) {
    q.eval_into(e, tmp);
    sum += p * tmp;
  }
  return sum;
}

Eigen::MatrixXd query_values(const std::vector<Example>& items, const SQQuery& q) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(items.size()), q.arity());
  Eigen::VectorXd tmp(q.arity());
  for (std::size_t i = 0; i < items.size(); ++i) {
    q.eval_into(items[i], tmp);
    out.row(static_cast<Eigen::Index>(i)) = tmp.transpose();
  }
  return out;
}

const char* to_string(NoiseAdversary a) {
  switch (a) {
    case NoiseAdversary::ZeroNoise: return "zero";
    case NoiseAdversary::PlusTau: return "plus_tau";
    case NoiseAdversary::MinusTau: return "minus_tau";
    case NoiseAdversary::SeededRandom: return "seeded_random";
  }
  return "?";
}

NoiseAdversary noise_adversary_from_string(const std::string& name) {
  if (name == "zero") return NoiseAdversary::ZeroNoise;
  if (name == "plus_tau") return NoiseAdversary::PlusTau;
  if (name == "minus_tau") return NoiseAdversary::MinusTau;
  if (name == "seeded_random") return NoiseAdversary::SeededRandom;
  throw std::invalid_argument("unknown noise adversary: " + name);
}

Eigen::VectorXd Adversary::perturb(const Eigen::VectorXd& exact, double tau, std::uint64_t round) const {
  switch (kind) {
    case NoiseAdversary::ZeroNoise:
      return exact;
    case NoiseAdversary::PlusTau:
      return exact.array() + tau;
    case NoiseAdversary::MinusTau:
      return exact.array() - tau;
    case NoiseAdversary::SeededRandom: {
      Rng rng(split_seed(seed, round));
      Eigen::VectorXd v = exact;
      for (Eigen::Index i = 0; i < v.size(); ++i) v[i] += rng.uniform(-tau, tau);
      return v;
    }
  }
  return exact;
}

double sq_oracle_answer(const FiniteDistribution& D, const SQQuery& q, double tau, const Adversary& adv) {
  return adv.perturb(population_mean(D, q), tau, 0)[0];
}

std::pair<Eigen::VectorXd, Batch> bsq_oracle_answer(const FiniteDistribution& D, const SQQuery& q, long b, double tau,
                                                    const Adversary& adv, std::uint64_t seed) {
  Batch S = sample_batch(D, b, seed);
  Eigen::VectorXd v = adv.perturb(empirical_mean(S.items, q), tau, seed);
  return {v, std::move(S)};
}

Eigen::VectorXd fbsq_oracle_answer(const Batch& S, const SQQuery& q, double tau, const Adversary& adv, std::uint64_t round) {
  return adv.perturb(empirical_mean(S.items, q), tau, round);
}

Eigen::VectorXd PopulationOracle::answer(const SQQuery& q) {
  ++rounds_;
  Eigen::VectorXd exact = population_mean(D_, q);
  Eigen::VectorXd v = adv_.perturb(exact, tau_, static_cast<std::uint64_t>(rounds_));
  if (record_) {
    OracleRound r;
    r.round = rounds_;
    r.restriction = q.restriction();
    r.query = q;
    r.exact = exact;
    r.response = v;
    log_.push_back(std::move(r));
  }
  return v;
}

Eigen::VectorXd BatchOracle::answer(const SQQuery& q) {
  ++rounds_;
  std::uint64_t s = split_seed(seed_, static_cast<std::uint64_t>(rounds_));
  Batch S = sample_batch(D_, b_, s);
  Eigen::VectorXd exact = empirical_mean(S.items, q);
  Eigen::VectorXd v = adv_.perturb(exact, tau_, s);
  if (record_) {
    OracleRound r;
    r.round = rounds_;
    r.restriction = q.restriction();
    r.query = q;
    r.seed = s;
    r.values = query_values(S.items, q);
    r.hidden = std::move(S);
    r.exact = exact;
    r.response = v;
    log_.push_back(std::move(r));
  }
  return v;
}

Eigen::VectorXd FixedBatchOracle::answer(const SQQuery& q) {
  ++rounds_;
  Eigen::VectorXd exact = empirical_mean(S_.items, q);
  Eigen::VectorXd v = adv_.perturb(exact, tau_, static_cast<std::uint64_t>(rounds_));
  if (record_) {
    OracleRound r;
    r.round = rounds_;
    r.restriction = q.restriction();
    r.query = q;
    r.values = query_values(S_.items, q);
    r.exact = exact;
    r.response = v;
    log_.push_back(std::move(r));
  }
  return v;
}

long count_query_violations(const std::vector<OracleRound>& log, double tol) {
  long bad = 0;
  for (const auto& r : log)
    if ((r.response - r.exact).lpNorm<Eigen::Infinity>() > tol) ++bad;
  return bad;
}

std::uint64_t hash_contribution(long index, double value) {
  if (value == 0.0) return 0;
  std::uint64_t bits;
  std::memcpy(&bits, &value, sizeof bits);
  return splitmix64(splitmix64(static_cast<std::uint64_t>(index)) ^ bits);
}

std::uint64_t iterate_hash(const Eigen::VectorXd& w) {
  std::uint64_t h = 0;
  for (Eigen::Index i = 0; i < w.size(); ++i) h += hash_contribution(static_cast<long>(i), w[i]);
  return h;
}

SparseGrad clipped_loss_gradient(const DiffModel& model, const Eigen::VectorXd& w, const Example& e) {
  SparseGrad grad(model.dimension());
  double f = model.differentiate(w, e.x, grad);
  double r = f - static_cast<double>(e.y);
  grad *= r;
  for (SparseGrad::InnerIterator it(grad); it; ++it) it.valueRef() = clip1(it.value());
  return grad;
}

SparseGrad average_clipped_gradient(const DiffModel& model, const Eigen::VectorXd& w, const std::vector<Example>& batch) {
  SparseGrad sum(model.dimension());
  for (const auto& e : batch) sum += clipped_loss_gradient(model, w, e);
  sum /= static_cast<double>(batch.size());
  return sum;
}

SparseGrad gradient_step(const DiffModel& model, Eigen::VectorXd& w, const std::vector<Example>& batch, GridStep rho,
                         double gamma, const RoundingOracle& rounding, SparseGrad* exact_out, std::uint64_t* hash) {
  SparseGrad exact = average_clipped_gradient(model, w, batch);
  SparseGrad g(exact.size());
  g.reserve(exact.nonZeros());
  for (SparseGrad::InnerIterator it(exact); it; ++it) {
    double gi = rounding.round(it.value(), rho, static_cast<std::uint64_t>(it.index()));
    if (gi != 0.0) g.insertBack(it.index()) = gi;
  }
  for (SparseGrad::InnerIterator it(g); it; ++it) {
    double& wi = w[it.index()];
    if (hash) *hash -= hash_contribution(it.index(), wi);
    wi -= gamma * it.value();
    if (hash) *hash += hash_contribution(it.index(), wi);
  }
  if (exact_out) *exact_out = std::move(exact);
  return g;
}

namespace {

Transcript run_loop(std::shared_ptr<const DiffModel> model, Eigen::VectorXd w, long T, GridStep rho, double gamma,
                    std::uint64_t seed, const GradientOptions& opts,
                    const std::function<const std::vector<Example>&(long, Batch&)>& batch_for) {
  Transcript tr;
  tr.T = T;
  tr.rho = rho.value();
  tr.gamma = gamma;
  tr.p = model->dimension();
  tr.seed = seed;
  tr.initial = w;
  std::uint64_t h = iterate_hash(w);
  Batch scratch;
  for (long t = 1; t <= T; ++t) {
    const std::vector<Example>& items = batch_for(t, scratch);
    RoundingOracle rounding(opts.rounding.strategy(), split_seed(opts.rounding.seed(), static_cast<std::uint64_t>(t)));
    SparseGrad exact;
    SparseGrad g = gradient_step(*model, w, items, rho, gamma, rounding, &exact, &h);
    if (opts.observer) opts.observer->on_step(t, w, items, exact, g);
    if (opts.record) {
      GradientRound r;
      r.t = t;
      r.batch = scratch;
      r.exact = std::move(exact);
      r.g = std::move(g);
      r.hash = h;
      r.seed = scratch.draw_seed;
      tr.rounds.push_back(std::move(r));
    }
  }
  if (opts.observer) opts.observer->on_finish(w);
  tr.final_w = w;
  tr.predictor = Predictor::snapshot(model, std::move(w));
  return tr;
}

}  // namespace

Transcript run_bsgd(std::shared_ptr<const DiffModel> model, const FiniteDistribution& D, long T, GridStep rho, long b,
                    double gamma, std::uint64_t seed, const GradientOptions& opts) {
  if (!(gamma > 0.0)) throw std::invalid_argument("step size must be positive");
  Bits R = random_bits(split_seed(seed, 0), model->random_bits());
  Transcript tr = run_loop(model, model->initialize(R), T, rho, gamma, seed, opts,
                           [&](long t, Batch& scratch) -> const std::vector<Example>& {
                             scratch = sample_batch(D, b, split_seed(seed, static_cast<std::uint64_t>(t)));
                             return scratch.items;
                           });
  tr.paradigm = "bsgd";
  tr.b = b;
  tr.samples_consumed = T * b;
  tr.random_bits_consumed = model->random_bits();
  return tr;
}

Transcript run_fbgd(std::shared_ptr<const DiffModel> model, const Batch& S, long T, GridStep rho, double gamma,
                    std::uint64_t seed, const GradientOptions& opts) {
  if (!(gamma > 0.0)) throw std::invalid_argument("step size must be positive");
  Bits R = random_bits(split_seed(seed, 0), model->random_bits());
  Transcript tr = run_loop(model, model->initialize(R), T, rho, gamma, seed, opts,
                           [&](long, Batch&) -> const std::vector<Example>& { return S.items; });
  tr.paradigm = "fbgd";
  tr.b = static_cast<long>(S.size());
  tr.fixed_batch = S;
  tr.samples_consumed = static_cast<long>(S.size());
  tr.random_bits_consumed = model->random_bits();
  return tr;
}

Transcript run_on_batches(std::shared_ptr<const DiffModel> model, const Eigen::VectorXd& w0,
                          const std::vector<Batch>& batches, GridStep rho, double gamma, const GradientOptions& opts) {
  Transcript tr = run_loop(model, w0, static_cast<long>(batches.size()), rho, gamma, 0, opts,
                           [&](long t, Batch& scratch) -> const std::vector<Example>& {
                             scratch = batches[static_cast<std::size_t>(t - 1)];
                             return scratch.items;
                           });
  tr.paradigm = "scripted";
  long total = 0;
  for (const auto& b : batches) total += static_cast<long>(b.size());
  tr.samples_consumed = total;
  return tr;
}

bool valid_rounding(const SparseGrad& g, const SparseGrad& v, GridStep rho) {
  SparseGrad::InnerIterator a(g), b(v);
  while (a || b) {
    if (a && (!b || a.index() < b.index())) {
      if (!valid_rounding(a.value(), 0.0, rho)) return false;
      ++a;
    } else if (b && (!a || b.index() < a.index())) {
      if (!valid_rounding(0.0, b.value(), rho)) return false;
      ++b;
    } else {
      if (!valid_rounding(a.value(), b.value(), rho)) return false;
      ++a;
      ++b;
    }
  }
  return true;
}

long count_gradient_violations(const DiffModel& model, const Transcript& tr) {
  GridStep rho = GridStep::from_value(tr.rho);
  Eigen::VectorXd w = tr.initial;
  long bad = 0;
  for (const auto& r : tr.rounds) {
    const std::vector<Example>& items = r.batch.items.empty() ? tr.fixed_batch.items : r.batch.items;
    SparseGrad exact = average_clipped_gradient(model, w, items);
    if (!valid_rounding(r.g, exact, rho)) ++bad;
    for (SparseGrad::InnerIterator it(r.g); it; ++it) w[it.index()] -= tr.gamma * it.value();
  }
  return bad;
}

}  // namespace lab
