#ifndef LAB_TRANSCRIPT_IO_HPP
#define LAB_TRANSCRIPT_IO_HPP

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "lab/paradigms.hpp"

namespace lab {

class TranscriptParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// JSONL: one header line, then one line per round.
// Header fields: paradigm ("bsq", "fbsq", "sq", "bsgd", "fbgd"), tau or rho, gamma, and an optional
// "pipeline" spec used to rebuild the model for offline gradient checks.
void write_query_transcript(std::ostream& os, nlohmann::json header, const std::vector<OracleRound>& log);
void write_gradient_transcript(std::ostream& os, nlohmann::json header, const Transcript& tr);

struct RoundVerdict {
  long t = 0;
  bool ok = true;
  std::string detail;
};

struct VerifyReport {
  std::string paradigm;
  std::vector<RoundVerdict> rounds;
  long flagged = 0;
  bool model_rebuilt = false;
  bool trajectory_checked = false;
  std::vector<std::string> trajectory_failures;
  bool ok() const { return flagged == 0 && trajectory_failures.empty(); }
};

VerifyReport verify_transcript(std::istream& is);
VerifyReport verify_transcript_file(const std::string& path);

}  // namespace lab

#endif
