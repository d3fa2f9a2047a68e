#include "lab/reductions.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "lab/diffsim.hpp"
#include "lab/payloads.hpp"

namespace lab {

long extraction_budget(long m, int n, double delta, bool alternating) {
  const double per = alternating ? 20.0 : 10.0;
  return static_cast<long>(std::ceil(per * static_cast<double>(m) * (n + 1) / delta - 1e-9));
}

long averaging_repeats(long k, double delta, long b, double tau) {
  return static_cast<long>(std::ceil(8.0 * std::log(4.0 * static_cast<double>(k) / delta) /
                                     (static_cast<double>(b) * tau * tau)));
}

bool bsq_to_sq_in_regime(long k, long p, long b, double tau, double delta) {
  return static_cast<double>(b) * tau * tau >= 8.0 * std::log(4.0 * static_cast<double>(k * p) / delta);
}

bool fbsq_regime(long k, long p, long m, double tau, double delta) {
  return static_cast<double>(m) * tau * tau >
         32.0 * (static_cast<double>(k * p) * std::log(1.0 / tau) + std::log(1.0 / delta));
}

double discretize(double v, double alpha) {
  const double step = 2.0 * alpha;
  double q = std::round(v / step) * step;
  return std::clamp(q, -1.0, 1.0) + 0.0;
}

Eigen::VectorXd discretize(const Eigen::VectorXd& v, double alpha) {
  return v.unaryExpr([alpha](double x) { return discretize(x, alpha); });
}

namespace {

SQQuery zero_query(int arity, bool alternating, long t) {
  return SQQuery::constant(arity, 0.0, alternating ? alternating_restriction(t) : LabelRestriction::None);
}

// ---- PAC -> bSQ / bSQ^{0/1} / fbSQ through Sample-Extract ----

class ExtractionProgram : public QueryProgram {
 public:
  ExtractionProgram(PacLearner pac, long b, double tau, long budget, bool alternating, bool fb)
      : pac_(std::move(pac)), b_(b), tau_(tau), budget_(budget), alternating_(alternating), fb_(fb) {}

  std::string name() const override {
    return fb_ ? "pac_to_fbsq" : (alternating_ ? "pac_to_bsq_alternating" : "pac_to_bsq");
  }
  int n() const override { return pac_.n; }
  long rounds() const override { return budget_; }
  int arity() const override { return pac_.n + 1; }
  long random_bits() const override {
    const long c = ceil_log2(b_);
    return pac_.r + (fb_ ? 4 * budget_ * c + 64 : budget_ * c);
  }
  bool alternating() const override { return alternating_; }
  std::unique_ptr<ProgramSession> start(const Bits& R) const override;

  const PacLearner& pac() const { return pac_; }
  long b() const { return b_; }
  double tau() const { return tau_; }

 private:
  PacLearner pac_;
  long b_;
  double tau_;
  long budget_;
  bool alternating_;
  bool fb_;
};

class ExtractionSession : public ProgramSession {
 public:
  ExtractionSession(const ExtractionProgram& prog, const Bits& R, long b, double tau, bool alternating, bool fb)
      : prog_(prog),
        R_pac_(R.begin(), R.begin() + prog.pac().r),
        bits_(Bits(R.begin() + prog.pac().r, R.end())),
        extractor_({prog.n(), b, tau, alternating, fb}),
        alternating_(alternating) {}

  SQQuery next_query() override {
    ++t_;
    from_extractor_ = static_cast<long>(samples_.size()) < prog_.pac().m;
    if (from_extractor_) return extractor_.next_query(t_);
    return zero_query(prog_.arity(), alternating_, t_);
  }
  void respond(const Eigen::VectorXd& v) override {
    if (!from_extractor_) return;
    if (auto e = extractor_.respond(v, bits_)) samples_.push_back(std::move(*e));
  }
  Predictor finish() override {
    if (static_cast<long>(samples_.size()) < prog_.pac().m) return Predictor::zero();
    return prog_.pac().learn(samples_, R_pac_);
  }

 private:
  const ExtractionProgram& prog_;
  Bits R_pac_;
  BitSource bits_;
  PrefixExtractor extractor_;
  bool alternating_;
  long t_ = 0;
  bool from_extractor_ = false;
  std::vector<Example> samples_;
};

std::unique_ptr<ProgramSession> ExtractionProgram::start(const Bits& R) const {
  if (static_cast<long>(R.size()) < random_bits()) throw std::invalid_argument("random string shorter than r");
  return std::make_unique<ExtractionSession>(*this, R, b_, tau_, alternating_, fb_);
}

// ---- SQ -> bSQ: repeat each query q times and average ----

class AveragingProgram : public QueryProgram {
 public:
  AveragingProgram(std::shared_ptr<const QueryProgram> inner, long q) : inner_(std::move(inner)), q_(q) {
    if (!inner_->alternating()) {
      rounds_ = inner_->rounds() * q_;
    } else {
      long t = 1;
      for (long i = 1; i <= inner_->rounds(); ++i)
        for (long j = 0; j < q_; ++j) {
          while (alternating_restriction(t) != alternating_restriction(i)) ++t;
          ++t;
        }
      rounds_ = t - 1;
    }
  }
  std::string name() const override { return "sq_to_bsq(" + inner_->name() + ")"; }
  int n() const override { return inner_->n(); }
  long rounds() const override { return rounds_; }
  int arity() const override { return inner_->arity(); }
  long random_bits() const override { return inner_->random_bits(); }
  bool alternating() const override { return inner_->alternating(); }
  std::unique_ptr<ProgramSession> start(const Bits& R) const override;

  const QueryProgram& inner() const { return *inner_; }
  long repeats() const { return q_; }

 private:
  std::shared_ptr<const QueryProgram> inner_;
  long q_;
  long rounds_;
};

class AveragingSession : public ProgramSession {
 public:
  AveragingSession(const AveragingProgram& prog, const Bits& R) : prog_(prog), inner_(prog.inner().start(R)) {}
  SQQuery next_query() override {
    ++t_;
    if (!current_) {
      current_ = inner_->next_query();
      sum_ = Eigen::VectorXd::Zero(prog_.arity());
      count_ = 0;
    }
    padding_ = prog_.alternating() && current_->restriction() != alternating_restriction(t_);
    if (padding_) return zero_query(prog_.arity(), true, t_);
    return *current_;
  }
  void respond(const Eigen::VectorXd& v) override {
    if (padding_) return;
    sum_ += v;
    if (++count_ == prog_.repeats()) {
      inner_->respond(sum_ / static_cast<double>(count_));
      current_.reset();
    }
  }
  Predictor finish() override { return inner_->finish(); }

 private:
  const AveragingProgram& prog_;
  std::unique_ptr<ProgramSession> inner_;
  std::optional<SQQuery> current_;
  Eigen::VectorXd sum_;
  long count_ = 0;
  long t_ = 0;
  bool padding_ = false;
};

std::unique_ptr<ProgramSession> AveragingProgram::start(const Bits& R) const {
  return std::make_unique<AveragingSession>(*this, R);
}

// ---- vector queries -> p scalar queries (optionally discretizing each answer) ----

class SplitProgram : public QueryProgram {
 public:
  SplitProgram(std::shared_ptr<const QueryProgram> inner, double alpha) : inner_(std::move(inner)), alpha_(alpha) {}
  std::string name() const override { return "split(" + inner_->name() + ")"; }
  int n() const override { return inner_->n(); }
  long rounds() const override { return inner_->rounds() * inner_->arity(); }
  int arity() const override { return 1; }
  long random_bits() const override { return inner_->random_bits(); }
  bool alternating() const override { return inner_->alternating() && inner_->arity() == 1; }
  std::unique_ptr<ProgramSession> start(const Bits& R) const override;
  const QueryProgram& inner() const { return *inner_; }
  double alpha() const { return alpha_; }

 private:
  std::shared_ptr<const QueryProgram> inner_;
  double alpha_;  // 0: no discretization
};

class SplitSession : public ProgramSession {
 public:
  SplitSession(const SplitProgram& prog, const Bits& R) : prog_(prog), inner_(prog.inner().start(R)) {}
  SQQuery next_query() override {
    if (!current_) {
      current_ = std::make_shared<SQQuery>(inner_->next_query());
      answers_ = Eigen::VectorXd::Zero(current_->arity());
      j_ = 0;
    }
    auto q = current_;
    const int j = j_;
    return SQQuery(
        1,
        [q, j](const Example& e, Eigen::Ref<Eigen::VectorXd> out) { out[0] = (*q)(e)[j]; },
        q->restriction());
  }
  void respond(const Eigen::VectorXd& v) override {
    answers_[j_] = prog_.alpha() > 0 ? discretize(v[0], prog_.alpha()) : v[0];
    if (++j_ == current_->arity()) {
      inner_->respond(answers_);
      current_.reset();
    }
  }
  Predictor finish() override { return inner_->finish(); }

 private:
  const SplitProgram& prog_;
  std::unique_ptr<ProgramSession> inner_;
  std::shared_ptr<SQQuery> current_;
  Eigen::VectorXd answers_;
  int j_ = 0;
};

std::unique_ptr<ProgramSession> SplitProgram::start(const Bits& R) const { return std::make_unique<SplitSession>(*this, R); }

// ---- discretize every response before the wrapped method sees it ----

class DiscretizingProgram : public QueryProgram {
 public:
  DiscretizingProgram(std::shared_ptr<const QueryProgram> inner, double alpha) : inner_(std::move(inner)), alpha_(alpha) {}
  std::string name() const override { return "discretize(" + inner_->name() + ")"; }
  int n() const override { return inner_->n(); }
  long rounds() const override { return inner_->rounds(); }
  int arity() const override { return inner_->arity(); }
  long random_bits() const override { return inner_->random_bits(); }
  bool alternating() const override { return inner_->alternating(); }
  std::unique_ptr<ProgramSession> start(const Bits& R) const override {
    class Session : public ProgramSession {
     public:
      Session(std::unique_ptr<ProgramSession> inner, double alpha) : inner_(std::move(inner)), alpha_(alpha) {}
      SQQuery next_query() override { return inner_->next_query(); }
      void respond(const Eigen::VectorXd& v) override { inner_->respond(discretize(v, alpha_)); }
      Predictor finish() override { return inner_->finish(); }

     private:
      std::unique_ptr<ProgramSession> inner_;
      double alpha_;
    };
    return std::make_unique<Session>(inner_->start(R), alpha_);
  }

 private:
  std::shared_ptr<const QueryProgram> inner_;
  double alpha_;
};

// ---- SQ -> SQ^{0/1}: y*Phi on odd rounds, (1-y)*Phi on even rounds ----

class AlternatingSplitProgram : public QueryProgram {
 public:
  explicit AlternatingSplitProgram(std::shared_ptr<const QueryProgram> inner) : inner_(std::move(inner)) {}
  std::string name() const override { return "sq_split_alternating(" + inner_->name() + ")"; }
  int n() const override { return inner_->n(); }
  long rounds() const override { return 2 * inner_->rounds(); }
  int arity() const override { return inner_->arity(); }
  long random_bits() const override { return inner_->random_bits(); }
  bool alternating() const override { return true; }
  std::unique_ptr<ProgramSession> start(const Bits& R) const override {
    class Session : public ProgramSession {
     public:
      explicit Session(std::unique_ptr<ProgramSession> inner) : inner_(std::move(inner)) {}
      SQQuery next_query() override {
        if (!odd_pending_) {
          current_ = std::make_shared<SQQuery>(inner_->next_query());
          odd_pending_ = true;
          return part(1);
        }
        odd_pending_ = false;
        return part(0);
      }
      void respond(const Eigen::VectorXd& v) override {
        if (odd_pending_) {
          v1_ = v;
        } else {
          inner_->respond(v1_ + v);
        }
      }
      Predictor finish() override { return inner_->finish(); }

     private:
      SQQuery part(int label) const {
        auto q = current_;
        return SQQuery(
            q->arity(),
            [q, label](const Example& e, Eigen::Ref<Eigen::VectorXd> out) {
              if (e.y == label)
                q->eval_into(e, out);
              else
                out.setZero();
            },
            label == 1 ? LabelRestriction::OneQuery : LabelRestriction::ZeroQuery);
      }
      std::unique_ptr<ProgramSession> inner_;
      std::shared_ptr<SQQuery> current_;
      bool odd_pending_ = false;
      Eigen::VectorXd v1_;
    };
    return std::make_unique<Session>(inner_->start(R));
  }

 private:
  std::shared_ptr<const QueryProgram> inner_;
};

// ---- bSGD -> bSQ: one vector query per step, response snapped to the rho grid ----

class GradientQueryProgram : public QueryProgram {
 public:
  GradientQueryProgram(std::shared_ptr<const DiffModel> model, long T, GridStep rho, double gamma, int n)
      : model_(std::move(model)), T_(T), rho_(rho), gamma_(gamma), n_(n) {}
  std::string name() const override { return "bsgd_to_bsq"; }
  int n() const override { return n_; }
  long rounds() const override { return T_; }
  int arity() const override { return static_cast<int>(model_->dimension()); }
  long random_bits() const override { return model_->random_bits(); }
  std::unique_ptr<ProgramSession> start(const Bits& R) const override {
    class Session : public ProgramSession {
     public:
      Session(const GradientQueryProgram& prog, const Bits& R)
          : prog_(prog), w_(std::make_shared<Eigen::VectorXd>(prog.model_->initialize(R))) {}
      SQQuery next_query() override {
        auto model = prog_.model_;
        std::shared_ptr<const Eigen::VectorXd> w = std::make_shared<const Eigen::VectorXd>(*w_);
        return SQQuery(static_cast<int>(model->dimension()),
                       [model, w](const Example& e, Eigen::Ref<Eigen::VectorXd> out) {
                         out = Eigen::VectorXd(clipped_loss_gradient(*model, *w, e));
                       });
      }
      void respond(const Eigen::VectorXd& v) override {
        for (Eigen::Index i = 0; i < v.size(); ++i) (*w_)[i] -= prog_.gamma_ * prog_.rho_.snap(v[i]);
      }
      Predictor finish() override { return Predictor::snapshot(prog_.model_, *w_); }

     private:
      const GradientQueryProgram& prog_;
      std::shared_ptr<Eigen::VectorXd> w_;
    };
    return std::make_unique<Session>(*this, R);
  }

 private:
  std::shared_ptr<const DiffModel> model_;
  long T_;
  GridStep rho_;
  double gamma_;
  int n_;
};

QueryLearner make_learner(Paradigm kind, std::shared_ptr<const QueryProgram> prog, double tau, long b) {
  QueryLearner L;
  L.spec.kind = kind;
  L.spec.k = prog->rounds();
  L.spec.tau = tau;
  L.spec.b = b;
  L.spec.p = prog->arity();
  L.spec.r = prog->random_bits();
  L.spec.alternating = prog->alternating();
  L.program = std::move(prog);
  return L;
}

void warn(std::vector<std::string>* warnings, const std::string& msg) {
  if (warnings) warnings->push_back(msg);
}

}  // namespace

QueryLearner pac_to_bsq(const PacLearner& pac, long b, double tau, double delta) {
  if (!(2.0 * static_cast<double>(b) * tau < 1.0)) throw ContractViolation("pac_to_bsq requires b*tau < 1/2");
  long budget = extraction_budget(pac.m, pac.n, delta, false);
  return make_learner(Paradigm::BSQ, std::make_shared<ExtractionProgram>(pac, b, tau, budget, false, false), tau, b);
}

QueryLearner pac_to_bsq_alternating(const PacLearner& pac, long b, double tau, double delta) {
  if (!(2.0 * static_cast<double>(b) * tau < 1.0)) throw ContractViolation("pac_to_bsq requires b*tau < 1/2");
  long budget = extraction_budget(pac.m, pac.n, delta, true);
  return make_learner(Paradigm::BSQ, std::make_shared<ExtractionProgram>(pac, b, tau, budget, true, false), tau, b);
}

QueryLearner pac_to_fbsq(const PacLearner& pac, long m, double tau) {
  if (!(2.0 * static_cast<double>(m) * tau < 1.0)) throw ContractViolation("pac_to_fbsq requires m*tau < 1/2");
  if (m < pac.m) throw std::invalid_argument("frozen batch smaller than the PAC sample size");
  PacLearner inner = pac;
  inner.m = m;
  auto base = pac.learn;
  const long need = pac.m;
  inner.learn = [base, need](const std::vector<Example>& S, const Bits& R) {
    return base(std::vector<Example>(S.begin(), S.begin() + need), R);
  };
  long budget = m * (pac.n + 1);
  return make_learner(Paradigm::FBSQ, std::make_shared<ExtractionProgram>(inner, m, tau, budget, false, true), tau, m);
}

QueryLearner sq_to_bsq(const QueryLearner& sq, long b, double delta, std::vector<std::string>* warnings) {
  if (sq.spec.kind != Paradigm::SQ) throw IncompatibleComposition("sq_to_bsq needs an SQ method");
  (void)warnings;
  long q = averaging_repeats(sq.program->rounds(), delta, b, sq.spec.tau);
  return make_learner(Paradigm::BSQ, std::make_shared<AveragingProgram>(sq.program, q), sq.spec.tau / 2, b);
}

QueryLearner bsq_to_sq(const QueryLearner& bsq, double delta, std::vector<std::string>* warnings) {
  if (bsq.spec.kind != Paradigm::BSQ) throw IncompatibleComposition("bsq_to_sq needs a bSQ method");
  if (!bsq_to_sq_in_regime(bsq.spec.k, bsq.spec.p, bsq.spec.b, bsq.spec.tau, delta)) {
    std::ostringstream os;
    os << "bsq_to_sq out of regime: b tau^2 = " << static_cast<double>(bsq.spec.b) * bsq.spec.tau * bsq.spec.tau
       << " < 8 ln(4kp/delta)";
    warn(warnings, os.str());
  }
  auto prog = std::make_shared<SplitProgram>(bsq.program, 0.0);
  QueryLearner out = make_learner(Paradigm::SQ, prog, bsq.spec.tau / 2, 0);
  out.spec.b = 0;
  return out;
}

QueryLearner sq_split_alternating(const QueryLearner& sq) {
  if (sq.spec.kind != Paradigm::SQ) throw IncompatibleComposition("sq_split_alternating needs an SQ method");
  return make_learner(Paradigm::SQ, std::make_shared<AlternatingSplitProgram>(sq.program), sq.spec.tau / 2, 0);
}

QueryLearner bsgd_to_bsq(const GradientLearner& gd) {
  if (gd.spec.kind != Paradigm::BSGD) throw IncompatibleComposition("bsgd_to_bsq needs a bSGD method");
  if (!gd.model) throw IncompatibleComposition("bsgd_to_bsq needs a fixed model");
  GridStep rho = GridStep::from_value(gd.spec.tau);
  int n = 0;
  auto prog = std::make_shared<GradientQueryProgram>(gd.model, gd.spec.k, rho, gd.gamma, n);
  return make_learner(Paradigm::BSQ, prog, rho.value() / 4, gd.spec.b);
}

QueryLearner sq_to_fbsq(const QueryLearner& sq, long m, double delta, std::vector<std::string>* warnings) {
  if (sq.spec.kind != Paradigm::SQ) throw IncompatibleComposition("sq_to_fbsq needs an SQ method");
  const double tau = sq.spec.tau;
  if (!fbsq_regime(sq.spec.k, 1, m, tau, delta)) warn(warnings, "sq_to_fbsq out of regime");
  auto prog = std::make_shared<DiscretizingProgram>(sq.program, tau / 4);
  return make_learner(Paradigm::FBSQ, prog, tau / 2, m);
}

QueryLearner fbsq_to_sq(const QueryLearner& fbsq, double delta, std::vector<std::string>* warnings) {
  if (fbsq.spec.kind != Paradigm::FBSQ) throw IncompatibleComposition("fbsq_to_sq needs an fbSQ method");
  const double tau = fbsq.spec.tau;
  if (!fbsq_regime(fbsq.spec.k, fbsq.spec.p, fbsq.spec.b, tau, delta)) warn(warnings, "fbsq_to_sq out of regime");
  auto prog = std::make_shared<SplitProgram>(fbsq.program, tau / 4);
  return make_learner(Paradigm::SQ, prog, tau / 2, 0);
}

PipelineParams PipelineParams::from_json(const nlohmann::json& j) {
  PipelineParams p;
  p.n = j.value("n", 0);
  p.b = j.value("b", 0L);
  p.m = j.value("m", 0L);
  p.payload_m = j.value("payload_m", 2L * p.n);
  p.tau = j.value("tau", 0.0);
  p.rho = j.value("rho", 0.0);
  p.delta = j.value("delta", 0.1);
  return p;
}

Method payload_by_name(const std::string& name, int n, long m, double tau) {
  if (name == "parity") return parity_learner(n, m);
  if (name == "constant") return constant_learner(n, m, 1);
  if (name == "majority") return majority_learner(n, m);
  if (name == "dictator") return make_learner(Paradigm::SQ, dictator_program(n), tau, 0);
  if (name == "majority_vote") return make_learner(Paradigm::SQ, majority_vote_program(n), tau, 0);
  throw std::invalid_argument("unknown payload: " + name);
}

Pipeline build_pipeline(const std::vector<std::string>& stages, const Method& payload, const PipelineParams& in) {
  PipelineParams params = in;
  if (params.tau == 0.0 && params.rho > 0.0) params.tau = 4.0 * params.rho;
  if (params.rho == 0.0 && params.tau > 0.0) params.rho = params.tau / 4.0;
  Pipeline out;
  out.method = payload;
  out.report.source = spec_of(payload);
  out.report.stages = stages;
  out.report.delta = params.delta;
  const double stage_delta = stages.size() >= 2 ? params.delta / 2 : params.delta;
  std::optional<PacLearner> origin;
  if (const auto* pac = std::get_if<PacLearner>(&payload)) origin = *pac;

  if (std::find(stages.begin(), stages.end(), "diffsim") != stages.end() && params.b > 0 &&
      !(8.0 * static_cast<double>(params.b) * params.rho < 1.0))
    throw IncompatibleComposition("diffsim pipeline needs rho < 1/(8b)");

  for (const auto& stage : stages) {
    Method& cur = out.method;
    auto need_query = [&](Paradigm kind) -> const QueryLearner& {
      const auto* q = std::get_if<QueryLearner>(&cur);
      if (!q || q->spec.kind != kind)
        throw IncompatibleComposition(stage + " cannot follow " + spec_of(cur).describe());
      return *q;
    };
    if (stage == "pac_to_bsq") {
      const auto* pac = std::get_if<PacLearner>(&cur);
      if (!pac) throw IncompatibleComposition("pac_to_bsq needs a PAC method");
      cur = pac_to_bsq(*pac, params.b, params.tau, stage_delta);
      out.report.params["k_prime"] = static_cast<double>(spec_of(cur).k);
    } else if (stage == "bsq_alternating") {
      if (!origin) throw IncompatibleComposition("bsq_alternating applies to extraction-based methods");
      if (const auto* q = std::get_if<QueryLearner>(&cur); !(q && q->program->name() == "pac_to_bsq") &&
                                                          !std::holds_alternative<PacLearner>(cur))
        throw IncompatibleComposition("bsq_alternating must follow pac_to_bsq");
      cur = pac_to_bsq_alternating(*origin, params.b, params.tau, stage_delta);
      out.report.params["k_prime"] = static_cast<double>(spec_of(cur).k);
    } else if (stage == "pac_to_fbsq") {
      const auto* pac = std::get_if<PacLearner>(&cur);
      if (!pac) throw IncompatibleComposition("pac_to_fbsq needs a PAC method");
      cur = pac_to_fbsq(*pac, params.m > 0 ? params.m : pac->m, params.tau);
    } else if (stage == "sq_to_bsq") {
      const QueryLearner q = need_query(Paradigm::SQ);
      out.report.params["q"] = static_cast<double>(averaging_repeats(q.spec.k, stage_delta, params.b, q.spec.tau));
      cur = sq_to_bsq(q, params.b, stage_delta, &out.report.warnings);
    } else if (stage == "bsq_to_sq") {
      cur = bsq_to_sq(need_query(Paradigm::BSQ), stage_delta, &out.report.warnings);
    } else if (stage == "sq_split_alternating") {
      cur = sq_split_alternating(need_query(Paradigm::SQ));
    } else if (stage == "sq_to_fbsq") {
      cur = sq_to_fbsq(need_query(Paradigm::SQ), params.m, stage_delta, &out.report.warnings);
    } else if (stage == "fbsq_to_sq") {
      cur = fbsq_to_sq(need_query(Paradigm::FBSQ), stage_delta, &out.report.warnings);
    } else if (stage == "bsgd_to_bsq") {
      const auto* gd = std::get_if<GradientLearner>(&cur);
      if (!gd) throw IncompatibleComposition("bsgd_to_bsq needs a bSGD method");
      cur = bsgd_to_bsq(*gd);
    } else if (stage == "diffsim") {
      const QueryLearner& q = need_query(Paradigm::BSQ);
      if (!q.program->alternating()) throw IncompatibleComposition("diffsim needs an alternating bSQ method");
      const double rho = q.spec.tau / 4;
      if (!(8.0 * static_cast<double>(q.spec.b) * rho < 1.0))
        throw IncompatibleComposition("diffsim of an extraction method needs rho < 1/(8b)");
      cur = diffsim_learner(q.program, q.spec.tau, q.spec.b);
      out.report.params["T_prime"] = static_cast<double>(spec_of(cur).k);
      out.report.params["p_prime"] = static_cast<double>(spec_of(cur).p);
      out.report.params["r_prime"] = static_cast<double>(spec_of(cur).r);
      out.report.params["rho"] = rho;
    } else {
      throw IncompatibleComposition("unknown reduction stage: " + stage);
    }
  }
  out.report.target = spec_of(out.method);
  out.report.params["stage_delta"] = stage_delta;
  return out;
}

Pipeline build_pipeline(const nlohmann::json& spec) {
  PipelineParams params = PipelineParams::from_json(spec.value("params", nlohmann::json::object()));
  std::vector<std::string> stages = spec.value("pipeline", std::vector<std::string>{});
  const double payload_tau = params.tau > 0 ? params.tau : 4.0 * params.rho;
  Method payload = payload_by_name(spec.value("payload", std::string("parity")), params.n, params.payload_m, payload_tau);
  return build_pipeline(stages, payload, params);
}

long fresh_batch_violations(const std::vector<OracleRound>& log, long group, const FiniteDistribution& D, long b,
                            double tau, std::uint64_t seed) {
  long bad = 0;
  for (std::size_t start = 0; start < log.size(); start += static_cast<std::size_t>(group)) {
    Batch S = sample_batch(D, b, split_seed(seed, start));
    bool ok = true;
    for (std::size_t i = start; i < std::min(log.size(), start + static_cast<std::size_t>(group)); ++i) {
      Eigen::VectorXd mean = empirical_mean(S.items, log[i].query);
      if ((log[i].response - mean).lpNorm<Eigen::Infinity>() > tau + 1e-12) ok = false;
    }
    if (!ok) ++bad;
  }
  return bad;
}

}  // namespace lab
