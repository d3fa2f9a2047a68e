#ifndef LAB_EXTRACT_HPP
#define LAB_EXTRACT_HPP

#include <optional>
#include <vector>

#include "lab/paradigms.hpp"

namespace lab {

struct ExtractionConfig {
  int n = 0;
  long b = 1;  // batch size (m for the frozen-batch variant)
  double tau = 0.0;
  bool alternating = false;
  bool without_replacement = false;
};

struct ExtractTraceEntry {
  long round = 0;
  Bits prefix;
  long w = 0;   // items matching the prefix (after subtracting extracted items)
  long w1 = 0;  // of those, items whose next coordinate is 1
  bool padding = false;
};

// Prefix-descent state machine of Sample-Extract. One instance extracts samples back to back;
// queries are {0,1}-valued with arity n+1 (zero padded).
class PrefixExtractor {
 public:
  explicit PrefixExtractor(ExtractionConfig cfg, std::vector<Example> already = {});

  int arity() const { return cfg_.n + 1; }
  // Query for global round t (1-based); in alternating mode this may be a zero padding query.
  SQQuery next_query(long t);
  // Consumes the response to the last query; returns a sample when one completes.
  std::optional<Example> respond(const Eigen::VectorXd& v, BitSource& bits);

  const Bits& prefix() const { return s_; }
  long rounds_in_current() const { return rounds_current_; }
  const std::vector<Example>& extracted() const { return extracted_; }
  void set_trace(std::vector<ExtractTraceEntry>* trace) { trace_ = trace; }

 private:
  SQQuery prefix_query() const;
  Example finish_sample(Bits z);
  bool descend(long w, long w1, BitSource& bits);

  ExtractionConfig cfg_;
  int chunk_bits_;
  Bits s_;
  bool padding_ = false;
  SQQuery last_;
  long round_ = 0;
  long rounds_current_ = 0;
  std::vector<Example> extracted_;
  std::vector<ExtractTraceEntry>* trace_ = nullptr;
};

struct ExtractResult {
  Example sample;
  long rounds_used = 0;
};

// Sample-Extract against bSQ access; requires b*tau < 1/2.
ExtractResult sample_extract(QueryOracle& oracle, int n, long b, double tau, BitSource& bits,
                             std::vector<ExtractTraceEntry>* trace = nullptr, long max_rounds = 100000000);

// Restarts sample_extract until m samples or the round budget is spent; nullopt means Failure.
std::optional<std::vector<Example>> extract_m_samples(QueryOracle& oracle, int n, long b, double tau, long m,
                                                      long budget, BitSource& bits, long* rounds_used = nullptr);

// One draw without replacement from the frozen batch minus `already`; requires m*tau < 1/2.
ExtractResult fb_extract_all(QueryOracle& oracle, int n, long m, double tau, const std::vector<Example>& already,
                             BitSource& bits);
// Recovers the whole frozen batch (m draws).
std::vector<Example> fb_extract_batch(QueryOracle& oracle, int n, long m, double tau, BitSource& bits,
                                      long* rounds_used = nullptr);

}  // namespace lab

#endif
