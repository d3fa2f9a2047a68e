#include <doctest.h>

#include <cmath>

#include "lab/problems.hpp"

using namespace lab;

namespace {

Bits bits_of(unsigned v, int n) {
  Bits b(n);
  for (int i = 0; i < n; ++i) b[i] = (v >> i) & 1;
  return b;
}

}  // namespace

TEST_CASE("distribution invariants are enforced") {
  CHECK_THROWS(FiniteDistribution(1, {{Example{{0}, 0}, 0.5}, {Example{{1}, 0}, 0.4}}));
  CHECK_THROWS(FiniteDistribution(1, {{Example{{0}, 0}, 0.5}, {Example{{0}, 0}, 0.5}}));
  CHECK_THROWS(FiniteDistribution(1, {{Example{{0}, 0}, 1.5}, {Example{{1}, 0}, -0.5}}));
  CHECK_THROWS(FiniteDistribution(2, {{Example{{0}, 0}, 1.0}}));
}

TEST_CASE("distribution JSON round trip") {
  FiniteDistribution D = random_distribution(3, 6, 4);
  FiniteDistribution E = FiniteDistribution::from_json(D.to_json());
  REQUIRE(E.size() == D.size());
  for (std::size_t i = 0; i < D.size(); ++i) {
    CHECK(E.example(i) == D.example(i));
    CHECK(E.probability(i) == D.probability(i));
  }
  auto D2 = FiniteDistribution::load(std::string(LAB_DATA_DIR) + "/dist_n4.json");
  CHECK(D2.n() == 4);
  CHECK(D2.size() == 16);
}

TEST_CASE("sample_batch") {
  FiniteDistribution point(4, {{Example{{0, 0, 0, 0}, 1}, 1.0}});
  Batch B = sample_batch(point, 3, 1);
  REQUIRE(B.size() == 3);
  for (const auto& e : B.items) CHECK(e == Example{{0, 0, 0, 0}, 1});

  FiniteDistribution two(1, {{Example{{0}, 0}, 0.5}, {Example{{1}, 1}, 0.5}});
  Batch big = sample_batch(two, 100000, 9);
  long ones = 0;
  for (const auto& e : big.items) ones += e.y;
  CHECK(std::abs(ones / 1e5 - 0.5) < 0.01);

  Batch a = sample_batch(two, 50, 77), b = sample_batch(two, 50, 77);
  CHECK(a.items == b.items);
}

TEST_CASE("population loss") {
  Bits a{1, 0, 1};
  FiniteDistribution D = parity_distribution(a, 0);
  CHECK(population_loss(D, Predictor::parity(a, 0)) == 0.0);

  FiniteDistribution q(1, {{Example{{0}, 0}, 0.75}, {Example{{1}, 1}, 0.25}});
  CHECK(population_loss(q, Predictor::zero()) == doctest::Approx(0.125).epsilon(1e-15));

  // Random table against a direct summation.
  FiniteDistribution R = random_distribution(3, 8, 21);
  Rng rng(3);
  std::map<Bits, double> table;
  for (unsigned x = 0; x < 8; ++x) table[bits_of(x, 3)] = rng.uniform(-2, 2);
  Predictor f = Predictor::table(table);
  double direct = 0.0;
  for (const auto& [e, p] : R.entries()) direct += p * 0.5 * (table[e.x] - e.y) * (table[e.x] - e.y);
  CHECK(std::abs(population_loss(R, f) - direct) < 1e-12);

  // Clamped version caps outputs to [-1, 1].
  double clamped = 0.0;
  for (const auto& [e, p] : R.entries()) {
    const double v = std::max(-1.0, std::min(1.0, table[e.x]));
    clamped += p * 0.5 * (v - e.y) * (v - e.y);
  }
  CHECK(std::abs(clamped_population_loss(R, f) - clamped) < 1e-12);

  // Empirical loss on a large batch approaches the population loss.
  Batch B = sample_batch(R, 100000, 5);
  double emp = 0.0;
  for (const auto& e : B.items) emp += 0.5 * (f(e.x) - e.y) * (f(e.x) - e.y) / 1e5;
  CHECK(std::abs(emp - population_loss(R, f)) < 0.02);
}

TEST_CASE("prefix probabilities") {
  FiniteDistribution q(1, {{Example{{0}, 0}, 0.75}, {Example{{1}, 1}, 0.25}});
  CHECK(prefix_probability(q, {}) == 1.0);
  CHECK(prefix_probability(q, {1}) == 0.25);

  FiniteDistribution D = random_distribution(4, 16, 8);
  for (int len = 0; len <= 3; ++len)
    for (unsigned s = 0; s < (1u << len); ++s) {
      Bits pre = bits_of(s, len);
      double brute = 0.0;
      for (const auto& [e, p] : D.entries()) {
        Bits z = e.z();
        if (std::equal(pre.begin(), pre.end(), z.begin())) brute += p;
      }
      CHECK(std::abs(prefix_probability(D, pre) - brute) < 1e-12);
      Bits p0 = pre, p1 = pre;
      p0.push_back(0);
      p1.push_back(1);
      CHECK(std::abs(prefix_probability(D, p0) + prefix_probability(D, p1) - prefix_probability(D, pre)) < 1e-12);
    }
}

TEST_CASE("extraction order is (y, x)") {
  Example e{{1, 0, 1}, 0};
  CHECK(e.z() == Bits{0, 1, 0, 1});
  CHECK(Example::from_z(e.z()) == e);
}

TEST_CASE("predictors") {
  Predictor p = Predictor::parity({1, 1, 0}, 1);
  CHECK(p({1, 0, 0}) == 0.0);
  CHECK(p({1, 1, 0}) == 1.0);
  CHECK(Predictor::zero()({1, 1}) == 0.0);
  CHECK(bits_from_string("0110") == Bits{0, 1, 1, 0});
  CHECK(bits_to_string({1, 0}) == "10");
}
