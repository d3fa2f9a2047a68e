#include "lab/payloads.hpp"

#include <cmath>
#include <cstdint>

namespace lab {

std::optional<Predictor> solve_parity(const std::vector<Example>& samples, int n) {
  if (n > 62) throw std::invalid_argument("parity solver supports n <= 62");
  const int vars = n + 1;  // a_1..a_n, then the bias c
  std::vector<std::uint64_t> rows;
  std::vector<int> rhs;
  for (const auto& e : samples) {
    std::uint64_t row = 1ULL << n;
    for (int j = 0; j < n; ++j)
      if (e.x[static_cast<std::size_t>(j)]) row |= 1ULL << j;
    rows.push_back(row);
    rhs.push_back(e.y);
  }
  std::vector<int> pivot_row(static_cast<std::size_t>(vars), -1);
  std::size_t next = 0;
  for (int col = 0; col < vars && next < rows.size(); ++col) {
    std::size_t sel = next;
    while (sel < rows.size() && !((rows[sel] >> col) & 1ULL)) ++sel;
    if (sel == rows.size()) continue;
    std::swap(rows[sel], rows[next]);
    std::swap(rhs[sel], rhs[next]);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (i != next && ((rows[i] >> col) & 1ULL)) {
        rows[i] ^= rows[next];
        rhs[i] ^= rhs[next];
      }
    }
    pivot_row[static_cast<std::size_t>(col)] = static_cast<int>(next);
    ++next;
  }
  for (std::size_t i = next; i < rows.size(); ++i)
    if (rhs[i]) return std::nullopt;
  // Reduced form: each pivot row holds its pivot plus free columns only, and free variables are 0.
  Bits a(static_cast<std::size_t>(n), 0);
  int c = 0;
  for (int col = 0; col < vars; ++col) {
    int r = pivot_row[static_cast<std::size_t>(col)];
    if (r < 0) continue;
    int value = rhs[static_cast<std::size_t>(r)];
    if (col < n)
      a[static_cast<std::size_t>(col)] = static_cast<std::uint8_t>(value);
    else
      c = value;
  }
  return Predictor::parity(std::move(a), c);
}

PacLearner parity_learner(int n, long m) {
  PacLearner L;
  L.name = "parity";
  L.m = m;
  L.r = 0;
  L.n = n;
  L.learn = [n](const std::vector<Example>& S, const Bits&) {
    auto f = solve_parity(S, n);
    return f ? *f : Predictor::zero();
  };
  return L;
}

PacLearner constant_learner(int n, long m, int value) {
  PacLearner L;
  L.name = "constant";
  L.m = m;
  L.n = n;
  L.learn = [n, value](const std::vector<Example>&, const Bits&) {
    return Predictor::parity(Bits(static_cast<std::size_t>(n), 0), value);
  };
  return L;
}

PacLearner majority_learner(int n, long m) {
  PacLearner L;
  L.name = "majority";
  L.m = m;
  L.n = n;
  L.learn = [n](const std::vector<Example>& S, const Bits&) {
    long ones = 0;
    for (const auto& e : S) ones += e.y;
    return Predictor::parity(Bits(static_cast<std::size_t>(n), 0), 2 * ones > static_cast<long>(S.size()) ? 1 : 0);
  };
  return L;
}

namespace {

class DictatorSession : public ProgramSession {
 public:
  explicit DictatorSession(int n) : n_(n) {}
  SQQuery next_query() override {
    const int j = static_cast<int>(corr_.size());
    return SQQuery(1, [j](const Example& e, Eigen::Ref<Eigen::VectorXd> out) {
      out[0] = (2.0 * e.y - 1.0) * (2.0 * e.x[static_cast<std::size_t>(j)] - 1.0);
    });
  }
  void respond(const Eigen::VectorXd& v) override { corr_.push_back(v[0]); }
  Predictor finish() override {
    int best = 0;
    for (int j = 1; j < n_; ++j)
      if (std::fabs(corr_[static_cast<std::size_t>(j)]) > std::fabs(corr_[static_cast<std::size_t>(best)])) best = j;
    Bits a(static_cast<std::size_t>(n_), 0);
    a[static_cast<std::size_t>(best)] = 1;
    return Predictor::parity(std::move(a), corr_[static_cast<std::size_t>(best)] < 0 ? 1 : 0);
  }

 private:
  int n_;
  std::vector<double> corr_;
};

class DictatorProgram : public QueryProgram {
 public:
  explicit DictatorProgram(int n) : n_(n) {}
  std::string name() const override { return "dictator"; }
  int n() const override { return n_; }
  long rounds() const override { return n_; }
  int arity() const override { return 1; }
  long random_bits() const override { return 0; }
  std::unique_ptr<ProgramSession> start(const Bits&) const override { return std::make_unique<DictatorSession>(n_); }

 private:
  int n_;
};

class MajoritySession : public ProgramSession {
 public:
  explicit MajoritySession(int n) : n_(n) {}
  SQQuery next_query() override {
    return SQQuery::constant(1, 1.0, v_.empty() ? LabelRestriction::OneQuery : LabelRestriction::ZeroQuery);
  }
  void respond(const Eigen::VectorXd& v) override { v_.push_back(v[0]); }
  Predictor finish() override {
    return Predictor::parity(Bits(static_cast<std::size_t>(n_), 0), v_[0] > v_[1] ? 1 : 0);
  }

 private:
  int n_;
  std::vector<double> v_;
};

class MajorityProgram : public QueryProgram {
 public:
  explicit MajorityProgram(int n) : n_(n) {}
  std::string name() const override { return "majority_vote"; }
  int n() const override { return n_; }
  long rounds() const override { return 2; }
  int arity() const override { return 1; }
  long random_bits() const override { return 0; }
  bool alternating() const override { return true; }
  std::unique_ptr<ProgramSession> start(const Bits&) const override { return std::make_unique<MajoritySession>(n_); }

 private:
  int n_;
};

}  // namespace

std::shared_ptr<const QueryProgram> dictator_program(int n) { return std::make_shared<DictatorProgram>(n); }
std::shared_ptr<const QueryProgram> majority_vote_program(int n) { return std::make_shared<MajorityProgram>(n); }

namespace {

class IdentityModel : public DiffModel {
 public:
  long dimension() const override { return 1; }
  Eigen::VectorXd initialize(const Bits&) const override { return Eigen::VectorXd::Zero(1); }
  double evaluate(const Eigen::VectorXd& w, const Bits&) const override { return w[0]; }
  double differentiate(const Eigen::VectorXd& w, const Bits&, SparseGrad& grad) const override {
    grad.resize(1);
    grad.setZero();
    grad.insert(0) = 1.0;
    return w[0];
  }
};

}  // namespace

std::shared_ptr<const DiffModel> identity_model() { return std::make_shared<IdentityModel>(); }

}  // namespace lab
