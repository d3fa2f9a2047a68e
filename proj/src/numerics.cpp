#include "lab/numerics.hpp"

#include <cmath>
#include <cstring>

#include "lab/rng.hpp"

namespace lab {

GridStep GridStep::dyadic(int d) {
  if (d < 0 || d > 40) throw std::invalid_argument("grid step exponent must be in [0, 40]");
  GridStep s;
  s.d_ = d;
  s.value_ = std::ldexp(1.0, -d);
  return s;
}

GridStep GridStep::from_value(double value) {
  if (!(value > 0.0)) throw std::invalid_argument("grid step must be positive");
  int e = 0;
  double m = std::frexp(value, &e);  // value = m * 2^e, m in [0.5, 1)
  if (m != 0.5) throw std::invalid_argument("grid step is not a power of two");
  return dyadic(1 - e);
}

bool GridStep::contains(double x) const {
  double u = x / value_;
  return std::fabs(u - std::round(u)) < 1e-12;
}

double GridStep::snap(double x) const { return std::round(x / value_) * value_; }

const char* to_string(RoundingStrategy s) {
  switch (s) {
    case RoundingStrategy::Nearest: return "nearest";
    case RoundingStrategy::AdversarialUp: return "adversarial_up";
    case RoundingStrategy::AdversarialDown: return "adversarial_down";
    case RoundingStrategy::SeededRandom: return "seeded_random";
  }
  return "?";
}

RoundingStrategy rounding_strategy_from_string(const std::string& name) {
  if (name == "nearest") return RoundingStrategy::Nearest;
  if (name == "adversarial_up") return RoundingStrategy::AdversarialUp;
  if (name == "adversarial_down") return RoundingStrategy::AdversarialDown;
  if (name == "seeded_random") return RoundingStrategy::SeededRandom;
  throw std::invalid_argument("unknown rounding strategy: " + name);
}

namespace {

// Integer range [lo, hi] of q with |q - u| <= 3/4.
void band(double u, double& lo, double& hi) {
  hi = std::floor(u + 0.75);
  if (hi - u > 0.75) hi -= 1.0;
  lo = std::ceil(u - 0.75);
  if (u - lo > 0.75) lo += 1.0;
}

std::uint64_t bits_of(double v) {
  std::uint64_t b;
  std::memcpy(&b, &v, sizeof b);
  return b;
}

}  // namespace

double RoundingOracle::round(double v, GridStep rho, std::uint64_t index) const {
  const double u = v / rho.value();
  double q = 0.0;
  switch (strategy_) {
    case RoundingStrategy::Nearest:
      q = std::round(u);
      break;
    case RoundingStrategy::AdversarialUp: {
      double lo, hi;
      band(u, lo, hi);
      q = hi;
      break;
    }
    case RoundingStrategy::AdversarialDown: {
      double lo, hi;
      band(u, lo, hi);
      q = lo;
      break;
    }
    case RoundingStrategy::SeededRandom: {
      double lo, hi;
      band(u, lo, hi);
      auto count = static_cast<std::uint64_t>(hi - lo) + 1;
      std::uint64_t h = split_seed(seed_ ^ bits_of(v), index * 64 + static_cast<std::uint64_t>(rho.exponent()));
      q = lo + static_cast<double>(h % count);
      break;
    }
  }
  return q * rho.value() + 0.0;
}

Eigen::VectorXd round_approximate(const Eigen::VectorXd& v, GridStep rho, const RoundingOracle& oracle) {
  Eigen::VectorXd g(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) g[i] = oracle.round(v[i], rho, static_cast<std::uint64_t>(i));
  return g;
}

double round_approximate(double v, GridStep rho, const RoundingOracle& oracle) { return oracle.round(v, rho, 0); }

bool valid_rounding(double g, double v, GridStep rho) {
  if (!rho.contains(g)) return false;
  return std::fabs(g / rho.value() - v / rho.value()) <= 0.75;
}

std::vector<double> valid_multiples(double v, GridStep rho) {
  double lo, hi;
  band(v / rho.value(), lo, hi);
  std::vector<double> out;
  for (double q = lo; q <= hi; q += 1.0) out.push_back(q * rho.value() + 0.0);
  return out;
}

EmpiricalAverage recover_batch_average(double v, long b, double tau) {
  if (b < 1) throw ContractViolation("batch size must be positive");
  if (!(tau * 2.0 * static_cast<double>(b) < 1.0)) throw ContractViolation("recover_batch_average requires tau < 1/(2b)");
  return EmpiricalAverage{std::lround(v * static_cast<double>(b)), b};
}

std::vector<long> recover_counts(const Eigen::VectorXd& v, long b, double tau) {
  std::vector<long> out(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) out[static_cast<std::size_t>(i)] = recover_batch_average(v[i], b, tau).numerator;
  return out;
}

}  // namespace lab
