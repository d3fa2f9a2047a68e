#ifndef LAB_TESTS_RECORDING_PROGRAM_HPP
#define LAB_TESTS_RECORDING_PROGRAM_HPP

#include <memory>
#include <vector>

#include "lab/methods.hpp"

namespace testing_support {

using namespace lab;

// SQ program issuing fixed queries and recording the answers it is fed.
class RecordingProgram : public QueryProgram {
 public:
  RecordingProgram(int n, std::vector<SQQuery> queries, std::shared_ptr<std::vector<Eigen::VectorXd>> seen,
                   bool alternating = false)
      : n_(n), queries_(std::move(queries)), seen_(std::move(seen)), alternating_(alternating) {}
  std::string name() const override { return "recording"; }
  int n() const override { return n_; }
  long rounds() const override { return static_cast<long>(queries_.size()); }
  int arity() const override { return queries_.front().arity(); }
  long random_bits() const override { return 0; }
  bool alternating() const override { return alternating_; }
  std::unique_ptr<ProgramSession> start(const Bits&) const override {
    struct S : ProgramSession {
      const RecordingProgram* p;
      std::size_t t = 0;
      explicit S(const RecordingProgram* q) : p(q) {}
      SQQuery next_query() override { return p->queries_[t]; }
      void respond(const Eigen::VectorXd& v) override {
        p->seen_->push_back(v);
        ++t;
      }
      Predictor finish() override { return Predictor::zero(); }
    };
    seen_->clear();
    return std::make_unique<S>(this);
  }

 private:
  int n_;
  std::vector<SQQuery> queries_;
  std::shared_ptr<std::vector<Eigen::VectorXd>> seen_;
  bool alternating_;
};

}  // namespace testing_support

#endif
