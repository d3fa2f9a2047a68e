#ifndef LAB_NUMERICS_HPP
#define LAB_NUMERICS_HPP

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace lab {

// A dyadic grid step 2^-d with 0 <= d <= 40.
class GridStep {
 public:
  GridStep() = default;
  static GridStep dyadic(int d);
  // Throws std::invalid_argument unless value is exactly 2^-d with 0 <= d <= 40.
  static GridStep from_value(double value);

  double value() const { return value_; }
  int exponent() const { return d_; }

  bool contains(double x) const;
  double snap(double x) const;  // nearest grid point, ties away from zero

 private:
  int d_ = 0;
  double value_ = 1.0;
};

struct GridValue {
  double value = 0.0;
  GridStep step;
};

enum class RoundingStrategy { Nearest, AdversarialUp, AdversarialDown, SeededRandom };

const char* to_string(RoundingStrategy s);
RoundingStrategy rounding_strategy_from_string(const std::string& name);

class RoundingOracle {
 public:
  RoundingOracle() = default;
  explicit RoundingOracle(RoundingStrategy strategy, std::uint64_t seed = 0)
      : strategy_(strategy), seed_(seed) {}

  RoundingStrategy strategy() const { return strategy_; }
  std::uint64_t seed() const { return seed_; }

  // Rounds one coordinate; `index` only feeds the SeededRandom hash.
  double round(double v, GridStep rho, std::uint64_t index = 0) const;

 private:
  RoundingStrategy strategy_ = RoundingStrategy::Nearest;
  std::uint64_t seed_ = 0;
};

struct EmpiricalAverage {
  long numerator = 0;
  long denominator = 1;
  double value() const { return static_cast<double>(numerator) / static_cast<double>(denominator); }
  bool operator==(const EmpiricalAverage&) const = default;
};

class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> clip1(const Eigen::MatrixBase<Derived>& v) {
  using S = typename Derived::Scalar;
  return v.cwiseMax(S(-1)).cwiseMin(S(1));
}

inline double clip1(double v) { return v < -1.0 ? -1.0 : (v > 1.0 ? 1.0 : v); }

Eigen::VectorXd round_approximate(const Eigen::VectorXd& v, GridStep rho, const RoundingOracle& oracle);
double round_approximate(double v, GridStep rho, const RoundingOracle& oracle);

bool valid_rounding(double g, double v, GridStep rho);

template <typename DerivedG, typename DerivedV>
bool valid_rounding(const Eigen::MatrixBase<DerivedG>& g, const Eigen::MatrixBase<DerivedV>& v, GridStep rho) {
  if (g.size() != v.size()) return false;
  for (Eigen::Index i = 0; i < g.size(); ++i)
    if (!valid_rounding(static_cast<double>(g[i]), static_cast<double>(v[i]), rho)) return false;
  return true;
}

// Every multiple of rho within 3*rho/4 of v, ascending.
std::vector<double> valid_multiples(double v, GridStep rho);

// Nearest multiple of 1/b; requires tau < 1/(2b).
EmpiricalAverage recover_batch_average(double v, long b, double tau);
std::vector<long> recover_counts(const Eigen::VectorXd& v, long b, double tau);

}  // namespace lab

#endif
