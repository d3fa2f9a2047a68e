#ifndef LAB_PROBLEMS_HPP
#define LAB_PROBLEMS_HPP

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "lab/model.hpp"
#include "lab/rng.hpp"

namespace lab {

std::string bits_to_string(const Bits& b);
Bits bits_from_string(const std::string& s);

struct Example {
  Bits x;
  int y = 0;
  bool operator==(const Example&) const = default;
  auto operator<=>(const Example&) const = default;
  // Bit string in extraction order (y, x_1, ..., x_n).
  Bits z() const;
  static Example from_z(const Bits& z);
};

class FiniteDistribution {
 public:
  FiniteDistribution(int n, std::vector<std::pair<Example, double>> entries);

  int n() const { return n_; }
  std::size_t size() const { return entries_.size(); }
  const Example& example(std::size_t i) const { return entries_[i].first; }
  double probability(std::size_t i) const { return entries_[i].second; }
  const std::vector<std::pair<Example, double>>& entries() const { return entries_; }
  // Inverse CDF lookup for u in [0,1).
  std::size_t index_for(double u) const;
  double probability_of(const Example& e) const;

  static FiniteDistribution from_json(const nlohmann::json& j);
  static FiniteDistribution load(const std::string& path);
  nlohmann::json to_json() const;

 private:
  int n_;
  std::vector<std::pair<Example, double>> entries_;
  std::vector<double> cumulative_;
};

// Random distribution on `support` distinct points of {0,1}^n x {0,1}.
FiniteDistribution random_distribution(int n, std::size_t support, std::uint64_t seed);
// Uniform x, y = <a,x> xor bias.
FiniteDistribution parity_distribution(const Bits& a, int bias);

struct Batch {
  std::vector<Example> items;
  std::uint64_t draw_seed = 0;
  std::size_t size() const { return items.size(); }
};

Batch sample_batch(const FiniteDistribution& D, long b, std::uint64_t seed);

class Predictor {
 public:
  enum class Kind { Table, ParityVector, ModelSnapshot, Zero };

  Predictor() = default;
  static Predictor zero() { return Predictor(); }
  static Predictor table(std::map<Bits, double> values);
  static Predictor parity(Bits coeffs, int bias);
  static Predictor snapshot(std::shared_ptr<const DiffModel> model, Eigen::VectorXd w);

  Kind kind() const { return kind_; }
  double operator()(const Bits& x) const;
  const Bits& parity_coeffs() const { return coeffs_; }
  int parity_bias() const { return bias_; }
  const Eigen::VectorXd& weights() const { return w_; }
  std::string describe() const;

 private:
  Kind kind_ = Kind::Zero;
  std::map<Bits, double> table_;
  Bits coeffs_;
  int bias_ = 0;
  std::shared_ptr<const DiffModel> model_;
  Eigen::VectorXd w_;
};

inline double square_loss(double yhat, double y) { return 0.5 * (yhat - y) * (yhat - y); }

double population_loss(const FiniteDistribution& D, const Predictor& f);
// Same loss with predictor outputs clamped to [-1, 1].
double clamped_population_loss(const FiniteDistribution& D, const Predictor& f);
double prefix_probability(const FiniteDistribution& D, const Bits& s);

}  // namespace lab

#endif
