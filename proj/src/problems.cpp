#include "lab/problems.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace lab {

std::string bits_to_string(const Bits& b) {
  std::string s(b.size(), '0');
  for (std::size_t i = 0; i < b.size(); ++i) s[i] = b[i] ? '1' : '0';
  return s;
}

Bits bits_from_string(const std::string& s) {
  Bits b(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '0' && s[i] != '1') throw std::invalid_argument("bit string contains '" + std::string(1, s[i]) + "'");
    b[i] = static_cast<std::uint8_t>(s[i] == '1');
  }
  return b;
}

Bits Example::z() const {
  Bits out;
  out.reserve(x.size() + 1);
  out.push_back(static_cast<std::uint8_t>(y));
  out.insert(out.end(), x.begin(), x.end());
  return out;
}

Example Example::from_z(const Bits& z) {
  if (z.empty()) throw std::invalid_argument("empty extraction string");
  return Example{Bits(z.begin() + 1, z.end()), z[0]};
}

FiniteDistribution::FiniteDistribution(int n, std::vector<std::pair<Example, double>> entries)
    : n_(n), entries_(std::move(entries)) {
  if (n < 0) throw std::invalid_argument("n must be nonnegative");
  if (entries_.empty()) throw std::invalid_argument("distribution has no entries");
  double total = 0.0;
  std::set<Example> seen;
  for (const auto& [e, p] : entries_) {
    if (static_cast<int>(e.x.size()) != n) throw std::invalid_argument("example length differs from n");
    if (e.y != 0 && e.y != 1) throw std::invalid_argument("label must be 0 or 1");
    if (!(p >= 0.0)) throw std::invalid_argument("negative probability");
    if (!seen.insert(e).second) throw std::invalid_argument("duplicate example " + bits_to_string(e.z()));
    total += p;
  }
  if (std::fabs(total - 1.0) > 1e-12) throw std::invalid_argument("probabilities do not sum to 1");
  cumulative_.reserve(entries_.size());
  double acc = 0.0;
  for (const auto& entry : entries_) {
    acc += entry.second;
    cumulative_.push_back(acc);
  }
}

std::size_t FiniteDistribution::index_for(double u) const {
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u * cumulative_.back());
  std::size_t i = static_cast<std::size_t>(it - cumulative_.begin());
  if (i >= entries_.size()) i = entries_.size() - 1;
  while (entries_[i].second == 0.0 && i > 0) --i;
  return i;
}

double FiniteDistribution::probability_of(const Example& e) const {
  for (const auto& [ex, p] : entries_)
    if (ex == e) return p;
  return 0.0;
}

FiniteDistribution FiniteDistribution::from_json(const nlohmann::json& j) {
  int n = j.at("n").get<int>();
  std::vector<std::pair<Example, double>> entries;
  for (const auto& item : j.at("entries")) {
    Example e{bits_from_string(item.at("x").get<std::string>()), item.at("y").get<int>()};
    entries.emplace_back(std::move(e), item.at("p").get<double>());
  }
  return FiniteDistribution(n, std::move(entries));
}

FiniteDistribution FiniteDistribution::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open distribution file " + path);
  return from_json(nlohmann::json::parse(in));
}

nlohmann::json FiniteDistribution::to_json() const {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& [e, p] : entries_) entries.push_back({{"x", bits_to_string(e.x)}, {"y", e.y}, {"p", p}});
  return {{"n", n_}, {"entries", entries}};
}

FiniteDistribution random_distribution(int n, std::size_t support, std::uint64_t seed) {
  const std::uint64_t space = 1ULL << (n + 1);
  if (support == 0 || support > space) throw std::invalid_argument("support size out of range");
  Rng rng(seed);
  std::set<std::uint64_t> chosen;
  while (chosen.size() < support) chosen.insert(rng.below(space));
  std::vector<double> weights;
  double total = 0.0;
  for (std::size_t i = 0; i < support; ++i) {
    weights.push_back(rng.uniform(0.05, 1.0));
    total += weights.back();
  }
  std::vector<std::pair<Example, double>> entries;
  std::size_t i = 0;
  double acc = 0.0;
  for (std::uint64_t code : chosen) {
    Bits z(static_cast<std::size_t>(n + 1));
    for (int k = 0; k <= n; ++k) z[static_cast<std::size_t>(k)] = static_cast<std::uint8_t>((code >> (n - k)) & 1U);
    double p = (i + 1 == support) ? 1.0 - acc : weights[i] / total;
    acc += p;
    entries.emplace_back(Example::from_z(z), p);
    ++i;
  }
  return FiniteDistribution(n, std::move(entries));
}

FiniteDistribution parity_distribution(const Bits& a, int bias) {
  const int n = static_cast<int>(a.size());
  const std::uint64_t count = 1ULL << n;
  std::vector<std::pair<Example, double>> entries;
  for (std::uint64_t code = 0; code < count; ++code) {
    Bits x(static_cast<std::size_t>(n));
    int y = bias & 1;
    for (int k = 0; k < n; ++k) {
      x[static_cast<std::size_t>(k)] = static_cast<std::uint8_t>((code >> (n - 1 - k)) & 1U);
      y ^= a[static_cast<std::size_t>(k)] & x[static_cast<std::size_t>(k)];
    }
    entries.emplace_back(Example{std::move(x), y}, 1.0 / static_cast<double>(count));
  }
  return FiniteDistribution(n, std::move(entries));
}

Batch sample_batch(const FiniteDistribution& D, long b, std::uint64_t seed) {
  if (b < 1) throw std::invalid_argument("batch size must be positive");
  Rng rng(seed);
  Batch batch;
  batch.draw_seed = seed;
  batch.items.reserve(static_cast<std::size_t>(b));
  for (long i = 0; i < b; ++i) batch.items.push_back(D.example(D.index_for(rng.uniform01())));
  return batch;
}

Predictor Predictor::table(std::map<Bits, double> values) {
  Predictor f;
  f.kind_ = Kind::Table;
  f.table_ = std::move(values);
  return f;
}

Predictor Predictor::parity(Bits coeffs, int bias) {
  Predictor f;
  f.kind_ = Kind::ParityVector;
  f.coeffs_ = std::move(coeffs);
  f.bias_ = bias & 1;
  return f;
}

Predictor Predictor::snapshot(std::shared_ptr<const DiffModel> model, Eigen::VectorXd w) {
  Predictor f;
  f.kind_ = Kind::ModelSnapshot;
  f.model_ = std::move(model);
  f.w_ = std::move(w);
  return f;
}

double Predictor::operator()(const Bits& x) const {
  switch (kind_) {
    case Kind::Zero:
      return 0.0;
    case Kind::Table: {
      auto it = table_.find(x);
      return it == table_.end() ? 0.0 : it->second;
    }
    case Kind::ParityVector: {
      if (x.size() != coeffs_.size()) throw std::invalid_argument("parity predictor length mismatch");
      int v = bias_;
      for (std::size_t i = 0; i < x.size(); ++i) v ^= coeffs_[i] & x[i];
      return static_cast<double>(v);
    }
    case Kind::ModelSnapshot:
      return model_->evaluate(w_, x);
  }
  return 0.0;
}

std::string Predictor::describe() const {
  switch (kind_) {
    case Kind::Zero: return "zero";
    case Kind::Table: return "table[" + std::to_string(table_.size()) + "]";
    case Kind::ParityVector: return "parity(" + bits_to_string(coeffs_) + "," + std::to_string(bias_) + ")";
    case Kind::ModelSnapshot: return "snapshot[p=" + std::to_string(w_.size()) + "]";
  }
  return "?";
}

double population_loss(const FiniteDistribution& D, const Predictor& f) {
  double total = 0.0;
  for (const auto& [e, p] : D.entries())
    if (p > 0.0) total += p * square_loss(f(e.x), e.y);
  return total;
}

double clamped_population_loss(const FiniteDistribution& D, const Predictor& f) {
  double total = 0.0;
  for (const auto& [e, p] : D.entries())
    if (p > 0.0) total += p * square_loss(std::clamp(f(e.x), -1.0, 1.0), e.y);
  return total;
}

double prefix_probability(const FiniteDistribution& D, const Bits& s) {
  if (static_cast<int>(s.size()) > D.n() + 1) throw std::invalid_argument("prefix longer than n+1");
  double total = 0.0;
  for (const auto& [e, p] : D.entries()) {
    Bits z = e.z();
    if (std::equal(s.begin(), s.end(), z.begin())) total += p;
  }
  return total;
}

}  // namespace lab
