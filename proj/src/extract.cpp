#include "lab/extract.hpp"

#include <algorithm>

namespace lab {

PrefixExtractor::PrefixExtractor(ExtractionConfig cfg, std::vector<Example> already)
    : cfg_(cfg), chunk_bits_(ceil_log2(cfg.b)), extracted_(std::move(already)) {
  if (!(2.0 * static_cast<double>(cfg_.b) * cfg_.tau < 1.0))
    throw ContractViolation("Sample-Extract requires b*tau < 1/2");
  if (cfg_.without_replacement && static_cast<long>(extracted_.size()) >= cfg_.b)
    throw ContractViolation("nothing left to extract from the frozen batch");
}

SQQuery PrefixExtractor::prefix_query() const {
  const int n = cfg_.n;
  const int p = n + 1;
  if (s_.empty() && !cfg_.alternating) {
    return SQQuery(p, [](const Example& e, Eigen::Ref<Eigen::VectorXd> out) {
      out[0] = e.y;
      for (std::size_t j = 0; j < e.x.size(); ++j) out[static_cast<Eigen::Index>(j + 1)] = e.x[j];
    });
  }
  Bits s = s_.empty() ? Bits{1} : s_;
  auto r = s[0] ? LabelRestriction::OneQuery : LabelRestriction::ZeroQuery;
  return SQQuery(
      p,
      [s](const Example& e, Eigen::Ref<Eigen::VectorXd> out) {
        out.setZero();
        const std::size_t l = s.size();
        if (e.y != s[0]) return;
        for (std::size_t i = 1; i < l; ++i)
          if (e.x[i - 1] != s[i]) return;
        out[0] = 1.0;
        // coordinate j refers to z_{l+j}, i.e. x_{l+j-1}
        for (std::size_t j = 1; l + j <= e.x.size() + 1; ++j) out[static_cast<Eigen::Index>(j)] = e.x[l + j - 2];
      },
      r);
}

SQQuery PrefixExtractor::next_query(long t) {
  last_ = prefix_query();
  if (cfg_.alternating && last_.restriction() != alternating_restriction(t)) {
    padding_ = true;
    return SQQuery::constant(arity(), 0.0, alternating_restriction(t));
  }
  padding_ = false;
  return last_;
}

bool PrefixExtractor::descend(long w, long w1, BitSource& bits) {
  // Every w >= 2 round draws, even when all matches agree; skipping the draw there would
  // reweight the branches by the rejection rate.
  std::uint64_t u = bits.next_bits(chunk_bits_);
  if (cfg_.without_replacement) {
    while (u >= static_cast<std::uint64_t>(w)) u = bits.next_bits(chunk_bits_);
  } else if (u >= static_cast<std::uint64_t>(w)) {
    return false;  // rejected draw: the round is spent without progress
  }
  const int child = u < static_cast<std::uint64_t>(w1) ? 1 : 0;
  s_.push_back(static_cast<std::uint8_t>(child));
  return true;
}

Example PrefixExtractor::finish_sample(Bits z) {
  Example e = Example::from_z(z);
  extracted_.push_back(e);
  s_.clear();
  rounds_current_ = 0;
  return e;
}

std::optional<Example> PrefixExtractor::respond(const Eigen::VectorXd& v, BitSource& bits) {
  ++round_;
  ++rounds_current_;
  if (padding_) {
    padding_ = false;
    if (trace_) trace_->push_back({round_, s_, 0, 0, true});
    return std::nullopt;
  }
  const int n = cfg_.n;
  if (v.size() != n + 1) throw std::invalid_argument("response arity differs from n+1");
  std::vector<long> c = recover_counts(v, cfg_.b, cfg_.tau);
  if (cfg_.without_replacement) {
    for (const auto& e : extracted_) {
      Eigen::VectorXd phi = last_(e);
      for (int j = 0; j <= n; ++j) c[static_cast<std::size_t>(j)] -= std::lround(phi[j]);
    }
  }
  const long remaining = cfg_.b - (cfg_.without_replacement ? static_cast<long>(extracted_.size()) : 0);
  for (long x : c)
    if (x < 0 || x > cfg_.b) throw ContractViolation("recovered count outside [0, b]");

  const std::size_t l = s_.size();
  long w, w1;
  Bits readout;  // completion of the unique matching item when w = 1
  if (l == 0 && !cfg_.alternating) {
    w = remaining;
    w1 = c[0];
    readout.assign(c.begin(), c.end());
    for (auto& bit : readout) bit = static_cast<std::uint8_t>(bit != 0);
  } else if (l == 0) {
    w = remaining;
    w1 = c[0];
    if (c[0] == 1 && w == 1) {
      readout.push_back(1);
      for (int j = 1; j <= n; ++j) readout.push_back(static_cast<std::uint8_t>(c[static_cast<std::size_t>(j)] != 0));
    }
  } else {
    w = c[0];
    w1 = c[1];
    if (w == 1) {
      readout = s_;
      for (std::size_t j = 1; l + j <= static_cast<std::size_t>(n + 1); ++j)
        readout.push_back(static_cast<std::uint8_t>(c[j] != 0));
    }
  }
  if (trace_) trace_->push_back({round_, s_, w, w1, false});

  if (w == 0) return std::nullopt;
  if (w == 1 && !readout.empty()) return finish_sample(std::move(readout));
  if (!descend(w, w1, bits)) return std::nullopt;
  if (s_.size() == static_cast<std::size_t>(n + 1)) return finish_sample(s_);
  return std::nullopt;
}

ExtractResult sample_extract(QueryOracle& oracle, int n, long b, double tau, BitSource& bits,
                             std::vector<ExtractTraceEntry>* trace, long max_rounds) {
  PrefixExtractor ex({n, b, tau, false, false});
  ex.set_trace(trace);
  for (long t = 1; t <= max_rounds; ++t) {
    SQQuery q = ex.next_query(t);
    if (auto e = ex.respond(oracle.answer(q), bits)) return {*e, t};
  }
  throw std::runtime_error("sample_extract exceeded its round cap");
}

std::optional<std::vector<Example>> extract_m_samples(QueryOracle& oracle, int n, long b, double tau, long m,
                                                      long budget, BitSource& bits, long* rounds_used) {
  PrefixExtractor ex({n, b, tau, false, false});
  std::vector<Example> out;
  long t = 0;
  while (static_cast<long>(out.size()) < m && t < budget) {
    ++t;
    SQQuery q = ex.next_query(t);
    if (auto e = ex.respond(oracle.answer(q), bits)) out.push_back(std::move(*e));
  }
  if (rounds_used) *rounds_used = t;
  if (static_cast<long>(out.size()) < m) return std::nullopt;
  return out;
}

ExtractResult fb_extract_all(QueryOracle& oracle, int n, long m, double tau, const std::vector<Example>& already,
                             BitSource& bits) {
  PrefixExtractor ex({n, m, tau, false, true}, already);
  for (long t = 1; t <= n + 1; ++t) {
    SQQuery q = ex.next_query(t);
    if (auto e = ex.respond(oracle.answer(q), bits)) return {*e, t};
  }
  throw std::logic_error("frozen-batch extraction did not finish within n+1 rounds");
}

std::vector<Example> fb_extract_batch(QueryOracle& oracle, int n, long m, double tau, BitSource& bits, long* rounds_used) {
  std::vector<Example> out;
  long total = 0;
  while (static_cast<long>(out.size()) < m) {
    ExtractResult r = fb_extract_all(oracle, n, m, tau, out, bits);
    total += r.rounds_used;
    out.push_back(std::move(r.sample));
  }
  if (rounds_used) *rounds_used = total;
  return out;
}

}  // namespace lab
