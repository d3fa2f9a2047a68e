#include <doctest.h>

#include <cmath>

#include "lab/methods.hpp"
#include "lab/payloads.hpp"

using namespace lab;

namespace {

FiniteDistribution label_rate(double q) {
  return FiniteDistribution(1, {{Example{{0}, 0}, (1 - q) / 2},
                                {Example{{0}, 1}, q / 2},
                                {Example{{1}, 0}, (1 - q) / 2},
                                {Example{{1}, 1}, q / 2}});
}

SQQuery label_query() {
  return SQQuery(1, [](const Example& e, Eigen::Ref<Eigen::VectorXd> out) { out[0] = e.y; });
}

// Random [-1,1]^p query given by a lookup table over (x, y).
SQQuery table_query(int n, int p, std::uint64_t seed) {
  auto table = std::make_shared<std::vector<double>>();
  Rng rng(seed);
  for (long i = 0; i < (2L << n) * p; ++i) table->push_back(rng.uniform(-1, 1));
  return SQQuery(p, [table, n, p](const Example& e, Eigen::Ref<Eigen::VectorXd> out) {
    long idx = e.y;
    for (int i = 0; i < n; ++i) idx = 2 * idx + e.x[i];
    for (int j = 0; j < p; ++j) out[j] = (*table)[idx * p + j];
  });
}

}  // namespace

TEST_CASE("query range and label restriction are checked") {
  SQQuery bad(1, [](const Example&, Eigen::Ref<Eigen::VectorXd> out) { out[0] = 1.5; });
  CHECK_THROWS_AS(bad(Example{{0}, 0}), RangeError);
  SQQuery leaky(1, [](const Example&, Eigen::Ref<Eigen::VectorXd> out) { out[0] = 1; }, LabelRestriction::OneQuery);
  CHECK_THROWS_AS(leaky(Example{{0}, 0}), RangeError);
  CHECK(leaky(Example{{0}, 1})[0] == 1.0);
  SQQuery r = SQQuery::restricted(0, 1, [](const Bits&, Eigen::Ref<Eigen::VectorXd> out) { out[0] = 1; });
  CHECK(r.restriction() == LabelRestriction::ZeroQuery);
  CHECK(r(Example{{0}, 1})[0] == 0.0);
  CHECK(alternating_restriction(1) == LabelRestriction::OneQuery);
  CHECK(alternating_restriction(2) == LabelRestriction::ZeroQuery);
}

TEST_CASE("SQ oracle") {
  FiniteDistribution D = label_rate(0.25);
  CHECK(sq_oracle_answer(D, SQQuery::constant(1, 1.0), 0.1, {}) == 1.0);
  CHECK(sq_oracle_answer(D, label_query(), 1.0 / 16, Adversary{NoiseAdversary::PlusTau, 0}) == 0.3125);
  for (int i = 0; i < 100; ++i) {
    FiniteDistribution R = random_distribution(3, 10, 100 + i);
    SQQuery q = table_query(3, 1, i);
    double exact = 0.0;
    for (const auto& [e, p] : R.entries()) exact += p * q(e)[0];
    const double v = sq_oracle_answer(R, q, 0.05, Adversary{NoiseAdversary::SeededRandom, static_cast<std::uint64_t>(i)});
    CHECK(std::abs(v - exact) <= 0.05 + 1e-15);
  }
}

TEST_CASE("bSQ oracle validity against the hidden batch") {
  FiniteDistribution point(2, {{Example{{1, 0}, 1}, 1.0}});
  SQQuery ind(1, [](const Example& e, Eigen::Ref<Eigen::VectorXd> out) {
    out[0] = (e.x == Bits{1, 0} && e.y == 1) ? 1.0 : 0.0;
  });
  CHECK(bsq_oracle_answer(point, ind, 8, 0.01, {}, 3).first[0] == 1.0);
  auto [vc, hc] = bsq_oracle_answer(point, SQQuery::constant(1, 1.0), 5, 0.1, Adversary{NoiseAdversary::MinusTau, 0}, 1);
  CHECK(std::abs(vc[0] - 1.0) <= 0.1 + 1e-15);
  CHECK(hc.size() == 5);

  Rng rng(17);
  for (int i = 0; i < 10000; ++i) {
    const int n = 1 + static_cast<int>(rng.below(3));
    FiniteDistribution D = random_distribution(n, 1 + rng.below(2L << n), rng.next());
    const int p = 1 + static_cast<int>(rng.below(3));
    SQQuery q = table_query(n, p, rng.next());
    const long b = 1 + static_cast<long>(rng.below(20));
    const double tau = std::ldexp(1.0, -1 - static_cast<int>(rng.below(6)));
    const auto adv = Adversary{static_cast<NoiseAdversary>(rng.below(4)), rng.next()};
    auto [v, hidden] = bsq_oracle_answer(D, q, b, tau, adv, rng.next());
    REQUIRE(hidden.size() == static_cast<std::size_t>(b));
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(p);
    for (const auto& e : hidden.items) mean += q(e) / static_cast<double>(b);
    REQUIRE((v - mean).lpNorm<Eigen::Infinity>() <= tau + 1e-12);
  }
}

TEST_CASE("fbSQ oracle over a frozen batch") {
  FiniteDistribution D = random_distribution(3, 8, 2);
  Batch S = sample_batch(D, 16, 4);
  SQQuery q = table_query(3, 2, 5);
  auto a = fbsq_oracle_answer(S, q, 0.0625, {});
  auto b = fbsq_oracle_answer(S, q, 0.0625, {});
  CHECK(a == b);
  CHECK((a - empirical_mean(S.items, q)).lpNorm<Eigen::Infinity>() < 1e-12);
  CHECK(std::abs(fbsq_oracle_answer(S, SQQuery::constant(1, 1.0), 0.25, Adversary{NoiseAdversary::PlusTau, 0})[0] - 1) <=
        0.25);
  FixedBatchOracle o(S, 0.0625, Adversary{NoiseAdversary::SeededRandom, 3});
  for (int i = 0; i < 10; ++i) o.answer(q);
  CHECK(count_query_violations(o.log(), 0.0625) == 0);
  CHECK(o.samples_consumed() == 16);
}

TEST_CASE("bSGD runner") {
  FiniteDistribution D(1, {{Example{{0}, 1}, 1.0}});
  const GridStep rho = GridStep::dyadic(6);
  auto model = identity_model();
  Transcript t0 = run_bsgd(model, D, 0, rho, 4, 1.0, 1);
  CHECK(t0.final_w == t0.initial);
  CHECK(t0.samples_consumed == 0);
  Transcript t1 = run_bsgd(model, D, 1, rho, 4, 1.0, 1);
  CHECK(t1.final_w[0] == 1.0);
  CHECK(t1.samples_consumed == 4);
  CHECK(t1.predictor({0}) == 1.0);

  FiniteDistribution R = label_rate(0.3);
  for (auto s : {RoundingStrategy::Nearest, RoundingStrategy::AdversarialUp, RoundingStrategy::SeededRandom}) {
    GradientOptions o;
    o.rounding = RoundingOracle(s, 9);
    Transcript tr = run_bsgd(model, R, 20, GridStep::dyadic(4), 8, 0.5, 3, o);
    CHECK(tr.rounds.size() == 20);
    CHECK(tr.samples_consumed == 160);
    CHECK(count_gradient_violations(*model, tr) == 0);
    // Replaying the recorded updates reproduces the final iterate.
    Eigen::VectorXd w = tr.initial;
    for (const auto& r : tr.rounds) w -= 0.5 * Eigen::VectorXd(r.g);
    CHECK(w == tr.final_w);
    CHECK(iterate_hash(tr.final_w) == tr.rounds.back().hash);
  }
  Transcript a = run_bsgd(model, R, 10, rho, 4, 1.0, 77), b = run_bsgd(model, R, 10, rho, 4, 1.0, 77);
  CHECK(a.final_w == b.final_w);
}

TEST_CASE("fbGD runner consumes exactly m samples") {
  FiniteDistribution D(1, {{Example{{0}, 1}, 1.0}});
  Batch S = sample_batch(D, 6, 1);
  Transcript tr = run_fbgd(identity_model(), S, 5, GridStep::dyadic(6), 1.0, 2);
  CHECK(tr.samples_consumed == 6);
  CHECK(tr.final_w[0] == 1.0);
  CHECK(count_gradient_violations(*identity_model(), tr) == 0);
}

TEST_CASE("tampered updates are detected") {
  FiniteDistribution R = label_rate(0.5);
  auto model = identity_model();
  Transcript tr = run_bsgd(model, R, 5, GridStep::dyadic(4), 8, 1.0, 3);
  tr.rounds[2].g.coeffRef(0) += 1.0 / 16;
  CHECK(count_gradient_violations(*model, tr) >= 1);
}

TEST_CASE("method error estimates") {
  Bits a{1, 0, 1, 1};
  FiniteDistribution D = parity_distribution(a, 0);
  PacLearner exact{"exact", 1, 0, 4, [a](const std::vector<Example>&, const Bits&) { return Predictor::parity(a, 0); }};
  ErrorEstimate e = eval_method_error(exact, D, 20, 1);
  CHECK(e.mean == 0.0);
  CHECK(e.stderr_ == 0.0);

  PacLearner zero{"zero", 1, 0, 1, [](const std::vector<Example>&, const Bits&) { return Predictor::zero(); }};
  CHECK(eval_method_error(zero, label_rate(0.5), 10, 1).mean == 0.25);

  ErrorEstimate pe = eval_method_error(parity_learner(6, 12), parity_distribution({1, 1, 0, 1, 0, 1}, 0), 400, 5);
  CHECK(pe.mean < 0.05);
  // Rank deficiency of a random 12x6 GF(2) matrix is rare; errors come only from it.
  for (const auto& r : pe.runs) CHECK((r.error == 0.0 || r.error >= 0.125));
}

TEST_CASE("parity solver") {
  std::vector<Example> s;
  Bits a{1, 0, 1};
  FiniteDistribution D = parity_distribution(a, 1);
  for (const auto& [e, p] : D.entries()) s.push_back(e);
  auto h = solve_parity(s, 3);
  REQUIRE(h);
  CHECK(population_loss(D, *h) == 0.0);
  // Inconsistent system
  CHECK_FALSE(solve_parity({Example{{1, 0, 0}, 0}, Example{{1, 0, 0}, 1}}, 3));
}

TEST_CASE("query programs run against oracles") {
  FiniteDistribution D = parity_distribution({1, 0, 0}, 0);
  auto prog = dictator_program(3);
  PopulationOracle o(D, 0.05, {});
  Predictor h = run_program(*prog, o, {});
  CHECK(population_loss(D, h) < 1e-12);
  CHECK(o.rounds() == prog->rounds());

  auto mv = majority_vote_program(1);
  CHECK(mv->alternating());
  FiniteDistribution L = label_rate(0.75);
  PopulationOracle o2(L, 0.05, {});
  Predictor h2 = run_program(*mv, o2, {});
  CHECK(h2({0}) == 1.0);
  CHECK(h2({1}) == 1.0);
  CHECK(o2.log()[0].query.restriction() == LabelRestriction::OneQuery);
  CHECK(o2.log()[1].query.restriction() == LabelRestriction::ZeroQuery);
}

TEST_CASE("parallel execution is deterministic") {
  Bits a{1, 1, 0, 1};
  FiniteDistribution D = parity_distribution(a, 0);
  auto e1 = eval_method_error(parity_learner(4, 5), D, 64, 3);
  auto e2 = eval_method_error(parity_learner(4, 5), D, 64, 3);
  for (std::size_t i = 0; i < e1.runs.size(); ++i) CHECK(e1.runs[i].error == e2.runs[i].error);
}
