#include "lab/methods.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <mutex>
#include <thread>

namespace lab {

const char* to_string(Paradigm p) {
  switch (p) {
    case Paradigm::PAC: return "PAC";
    case Paradigm::SQ: return "SQ";
    case Paradigm::BSQ: return "bSQ";
    case Paradigm::FBSQ: return "fbSQ";
    case Paradigm::BSGD: return "bSGD";
    case Paradigm::FBGD: return "fbGD";
  }
  return "?";
}

std::string MethodSpec::describe() const {
  std::ostringstream os;
  os << to_string(kind) << (alternating ? "^{0/1}" : "") << "(";
  switch (kind) {
    case Paradigm::PAC: os << "m=" << b << ",r=" << r; break;
    case Paradigm::SQ: os << "k=" << k << ",tau=" << tau << ",r=" << r; break;
    case Paradigm::BSQ: os << "k=" << k << ",tau=" << tau << ",b=" << b << ",p=" << p << ",r=" << r; break;
    case Paradigm::FBSQ: os << "k=" << k << ",tau=" << tau << ",m=" << b << ",p=" << p << ",r=" << r; break;
    case Paradigm::BSGD: os << "T=" << k << ",rho=" << tau << ",b=" << b << ",p=" << p << ",r=" << r; break;
    case Paradigm::FBGD: os << "T=" << k << ",rho=" << tau << ",m=" << b << ",p=" << p << ",r=" << r; break;
  }
  os << ")";
  return os.str();
}

SQQuery generate_query(const QueryProgram& prog, long t, const Bits& R, const std::vector<Eigen::VectorXd>& responses) {
  if (t < 1 || t > prog.rounds()) throw std::out_of_range("round outside program");
  if (static_cast<long>(responses.size()) < t - 1) throw std::invalid_argument("missing earlier responses");
  auto session = prog.start(R);
  for (long s = 1; s < t; ++s) {
    session->next_query();
    session->respond(responses[static_cast<std::size_t>(s - 1)]);
  }
  return session->next_query();
}

MethodSpec spec_of(const Method& m) {
  return std::visit(
      [](const auto& x) -> MethodSpec {
        using X = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<X, PacLearner>) {
          MethodSpec s;
          s.kind = Paradigm::PAC;
          s.b = x.m;
          s.r = x.r;
          return s;
        } else {
          return x.spec;
        }
      },
      m);
}

Predictor run_program(const QueryProgram& prog, QueryOracle& oracle, const Bits& R) {
  auto session = prog.start(R);
  for (long t = 1; t <= prog.rounds(); ++t) {
    SQQuery q = session->next_query();
    if (q.arity() != prog.arity()) throw std::logic_error(prog.name() + ": query arity differs from declared p");
    if (prog.alternating() && q.restriction() != alternating_restriction(t))
      throw std::logic_error(prog.name() + ": round " + std::to_string(t) + " breaks alternation");
    session->respond(oracle.answer(q));
  }
  return session->finish();
}

RunResult execute(const Method& method, const FiniteDistribution& D, std::uint64_t seed, const RunOptions& opts) {
  RunResult out;
  const std::uint64_t data_seed = split_seed(seed, 1);
  const std::uint64_t bit_seed = split_seed(seed, 2);
  Adversary adv = opts.noise;
  adv.seed = split_seed(adv.seed ^ seed, 3);

  if (const auto* pac = std::get_if<PacLearner>(&method)) {
    Batch S = sample_batch(D, pac->m, data_seed);
    out.predictor = pac->learn(S.items, random_bits(bit_seed, pac->r));
    out.samples = pac->m;
  } else if (const auto* ql = std::get_if<QueryLearner>(&method)) {
    const MethodSpec& s = ql->spec;
    Bits R = random_bits(bit_seed, ql->program->random_bits());
    const double tol = s.tau;
    if (s.kind == Paradigm::SQ) {
      PopulationOracle oracle(D, s.tau, adv);
      out.predictor = run_program(*ql->program, oracle, R);
      out.rounds = oracle.rounds();
      out.violations = count_query_violations(oracle.log(), tol);
      if (opts.keep_log) out.log = oracle.log();
    } else if (s.kind == Paradigm::BSQ) {
      BatchOracle oracle(D, s.b, s.tau, adv, data_seed);
      out.predictor = run_program(*ql->program, oracle, R);
      out.rounds = oracle.rounds();
      out.samples = oracle.samples_consumed();
      out.violations = count_query_violations(oracle.log(), tol);
      if (opts.keep_log) out.log = oracle.log();
    } else if (s.kind == Paradigm::FBSQ) {
      FixedBatchOracle oracle(sample_batch(D, s.b, data_seed), s.tau, adv);
      out.predictor = run_program(*ql->program, oracle, R);
      out.rounds = oracle.rounds();
      out.samples = oracle.samples_consumed();
      out.violations = count_query_violations(oracle.log(), tol);
      if (opts.keep_log) out.log = oracle.log();
    } else {
      throw std::logic_error("query learner with non-query paradigm");
    }
  } else {
    const auto& gl = std::get<GradientLearner>(method);
    const MethodSpec& s = gl.spec;
    std::shared_ptr<const DiffModel> model = gl.model_factory ? gl.model_factory() : gl.model;
    std::unique_ptr<StepObserver> observer = gl.observer ? gl.observer(model) : nullptr;
    GradientOptions go;
    go.rounding = RoundingOracle(opts.rounding, split_seed(seed, 4));
    go.record = opts.keep_log;
    go.observer = observer.get();
    GridStep rho = GridStep::from_value(s.tau);
    Transcript tr = s.kind == Paradigm::BSGD
                        ? run_bsgd(model, D, s.k, rho, s.b, gl.gamma, data_seed, go)
                        : run_fbgd(model, sample_batch(D, s.b, data_seed), s.k, rho, gl.gamma, data_seed, go);
    out.predictor = tr.predictor;
    out.rounds = s.k;
    out.samples = tr.samples_consumed;
    out.violations = observer ? observer->violations() : 0;
    if (opts.keep_log) {
      out.violations += count_gradient_violations(*model, tr);
      out.transcript = std::make_shared<Transcript>(std::move(tr));
    }
  }
  out.error = opts.clamp_outputs ? clamped_population_loss(D, out.predictor) : population_loss(D, out.predictor);
  return out;
}

ErrorEstimate eval_method_error(const Method& method, const FiniteDistribution& D, long trials, std::uint64_t seed,
                                const RunOptions& opts) {
  if (trials < 1) throw std::invalid_argument("trials must be positive");
  ErrorEstimate est;
  est.runs.resize(static_cast<std::size_t>(trials));
  parallel_for(trials, [&](long i) {
    est.runs[static_cast<std::size_t>(i)] = execute(method, D, split_seed(seed, static_cast<std::uint64_t>(i)), opts);
  });
  double sum = 0.0, sq = 0.0;
  for (const auto& r : est.runs) {
    sum += r.error;
    sq += r.error * r.error;
  }
  const double t = static_cast<double>(trials);
  est.mean = sum / t;
  double var = trials > 1 ? std::max(0.0, (sq - t * est.mean * est.mean) / (t - 1.0)) : 0.0;
  est.stderr_ = std::sqrt(var / t);
  return est;
}

unsigned lab_threads() {
  unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("LAB_THREADS")) {
    long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<unsigned>(std::min<long>(v, hw * 4L));
  }
  return hw;
}

void parallel_for(long count, const std::function<void(long)>& body) {
  unsigned workers = static_cast<unsigned>(std::min<long>(lab_threads(), count));
  if (workers <= 1) {
    for (long i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<long> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (long i = next++; i < count; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace lab
