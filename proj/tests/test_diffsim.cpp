#include <doctest.h>

#include <cmath>

#include "fd_oracle.hpp"
#include "lab/diffsim.hpp"
#include "lab/payloads.hpp"
#include "lab/reductions.hpp"

using namespace lab;

namespace {

const GridStep kRho = GridStep::dyadic(6);

SQQuery random_restricted(int n, int p, int label, std::uint64_t seed) {
  auto table = std::make_shared<std::vector<double>>();
  Rng rng(seed);
  for (long i = 0; i < (1L << n) * p; ++i) table->push_back(rng.below(3) == 0 ? 0.0 : rng.uniform(-1, 1));
  return SQQuery::restricted(label, p, [table, n, p](const Bits& x, Eigen::Ref<Eigen::VectorXd> out) {
    long idx = 0;
    for (int i = 0; i < n; ++i) idx = 2 * idx + x[i];
    for (int j = 0; j < p; ++j) out[j] = (*table)[idx * p + j];
  });
}

}  // namespace

TEST_CASE("clock gate") {
  const double r = kRho.value();
  ClockValue on = clock_gate(2 * r, 0, 5, kRho);
  CHECK(on.value == 5.0);
  CHECK(on.d3 == 1.0);
  CHECK(on.d1 == 0.0);
  CHECK(clock_gate(2 * r, 2 * r, 5, kRho).value == 0.0);
  CHECK(clock_gate(0, 0, 5, kRho).value == 0.0);
  CHECK(clock_gate(r, r / 2, 5, kRho).value == 5.0);
  CHECK_THROWS_AS(clock_gate(0.75 * r, 0, 5, kRho), ClockRegionError);
  CHECK_THROWS_AS(clock_gate(2 * r, 0.75 * r, 5, kRho), ClockRegionError);
}

TEST_CASE("response snapping") {
  const double r = kRho.value();
  Eigen::VectorXd v(3);
  v << 3 * r, -5 * r + r / 64, r / 16;
  double dist = 0.0;
  Eigen::VectorXd s = snap_responses(v, kRho, r / 8, &dist);
  CHECK(s[0] == 3 * r);
  CHECK(s[1] == -5 * r);
  CHECK(s[2] == 0.0);
  CHECK(dist == r / 16);
  Eigen::VectorXd far(1);
  far << r / 4;
  CHECK_THROWS_AS(snap_responses(far, kRho, r / 8), SnapBoundViolation);
}

TEST_CASE("single-query model: one step records the batch average") {
  const double rho = kRho.value(), eps = 2 * rho;
  Rng rng(5);
  long clipped = 0;
  for (int i = 0; i < 1000; ++i) {
    const int n = 1 + static_cast<int>(rng.below(3));
    const int p = 1 + static_cast<int>(rng.below(3));
    const int label = static_cast<int>(rng.bit());
    SQQuery q = random_restricted(n, p, label, rng.next());
    auto model = build_single_query_model(
        q, label == 1 ? LabelRestriction::OneQuery : LabelRestriction::ZeroQuery, eps);
    FiniteDistribution D = random_distribution(n, 1 + rng.below(2UL << n), rng.next());
    const long b = 1 + static_cast<long>(rng.below(8));
    GradientOptions o;
    o.rounding = RoundingOracle(static_cast<RoundingStrategy>(rng.below(4)), rng.next());
    Transcript tr = run_bsgd(model, D, 1, kRho, b, 1.0, rng.next(), o);
    const Eigen::VectorXd avg = empirical_mean(tr.rounds[0].batch.items, q);
    const double err = (tr.final_w.head(p) - avg).lpNorm<Eigen::Infinity>();
    REQUIRE(err <= eps + rho + 1e-12);
    REQUIRE(tr.final_w[p] >= eps - rho);
    for (const auto& e : tr.rounds[0].batch.items) {
      const double f0 = label == 1 ? -eps : 1 + eps;
      clipped += std::abs(f0 - e.y) * q(Example{e.x, label}).cwiseAbs().maxCoeff() > 1.0;
    }
  }
  CHECK(clipped > 0);
}

TEST_CASE("composed model layout") {
  auto F = compile_program(majority_vote_program(3), kRho);
  CHECK(F->rounds() == 2);
  CHECK(F->dimension() == 0 + (1 + 1) * 2);
  CHECK(F->kappa_index(1) == 2);
  CHECK(F->theta_offset(2) == 1);

  auto E = pac_to_bsq_alternating(parity_learner(3, 6), 4, 1.0 / 16, 0.1).program;
  auto G = compile_program(E, kRho);
  CHECK(G->dimension() == E->random_bits() + (E->arity() + 1) * E->rounds());
  CHECK(G->random_bits() == E->random_bits());
  Bits R(static_cast<std::size_t>(E->random_bits()), 1);
  Eigen::VectorXd w = G->initialize(R);
  CHECK(G->stored_bits(w) == R);
  CHECK(G->active_round(w) == 1);
  CHECK_THROWS_AS(compile_program(dictator_program(3), kRho), std::invalid_argument);
}

TEST_CASE("trajectory claims on small programs under every rounding") {
  for (auto s : {RoundingStrategy::Nearest, RoundingStrategy::AdversarialUp, RoundingStrategy::AdversarialDown,
                 RoundingStrategy::SeededRandom}) {
    for (int i = 0; i < 10; ++i) {
      FiniteDistribution D = random_distribution(2, 6, split_seed(51, i));
      std::shared_ptr<const QueryProgram> prog =
          i % 2 ? majority_vote_program(2)
                : sq_split_alternating({MethodSpec{Paradigm::SQ, 2, 0.1, 0, 1, 0, false}, dictator_program(2)}).program;
      auto F = compile_program(prog, kRho);
      TrajectoryAuditor audit(F);
      GradientOptions o;
      o.rounding = RoundingOracle(s, i);
      o.observer = &audit;
      Transcript tr = run_bsgd(F, D, F->rounds(), kRho, 4, 1.0, split_seed(52, i), o);
      CHECK(audit.failures().empty());
      CHECK(audit.final_matches());
      CHECK(audit.steps() == F->rounds());
      CHECK(audit.max_response_error() <= 3 * kRho.value());
      CHECK(audit.min_kappa() >= kRho.value());
      CHECK(F->active_round(tr.final_w) == F->rounds() + 1);
      CHECK(count_gradient_violations(*F, tr) == 0);
    }
  }
}

TEST_CASE("trajectory auditor flags a tampered response") {
  FiniteDistribution D = random_distribution(2, 6, 3);
  auto F = compile_program(majority_vote_program(2), kRho);
  TrajectoryAuditor audit(F);
  Eigen::VectorXd w = F->initialize({});
  std::vector<Example> batch = sample_batch(D, 4, 1).items;
  SparseGrad g(F->dimension());
  w[F->kappa_index(1)] = 2 * kRho.value();
  w[F->theta_offset(1)] = empirical_mean(batch, *F->query_for_round(w, 1))[0] + 8 * kRho.value();
  audit.on_step(1, w, batch, g, g);
  CHECK(audit.failures().size() == 1);
  TrajectoryAuditor strict(F, true);
  CHECK_THROWS_AS(strict.on_step(1, w, batch, g, g), TrajectoryClaimViolation);
}

TEST_CASE("diffsim learner matches the program it compiles") {
  Bits a{1, 0, 1};
  FiniteDistribution D = parity_distribution(a, 0);
  QueryLearner bsq = pac_to_bsq_alternating(parity_learner(3, 6), 4, 1.0 / 16, 0.2);
  GradientLearner gl = diffsim_learner(bsq.program, 1.0 / 16, 4);
  CHECK(gl.spec.p == bsq.program->random_bits() + (bsq.program->arity() + 1) * bsq.program->rounds());
  CHECK(gl.spec.tau == 1.0 / 64);
  RunOptions o;
  o.clamp_outputs = true;
  o.rounding = RoundingStrategy::SeededRandom;
  ErrorEstimate e = eval_method_error(gl, D, 8, 3, o);
  for (const auto& r : e.runs) CHECK(r.violations == 0);
  CHECK(e.mean <= 0.3);
}

TEST_CASE("finite differences on compiled models") {
  fd::Report rep;
  for (int i = 0; i < 20; ++i) fd::diffsim_case(split_seed(61, i), rep, 2);
  CHECK(rep.failures == 0);
  CHECK(rep.checked > 0);
  INFO(rep.first_failure);
  CHECK(rep.worst_rel <= 1e-5);
}
