// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

#include "fd_oracle.hpp"
#include "lab/diffsim.hpp"
#include "lab/experiment.hpp"
#include "lab/extract.hpp"
#include "lab/reductions.hpp"
#include "recording_program.hpp"

namespace fs = std::filesystem;
using namespace lab;
using nlohmann::json;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("lab_acceptance_" + name);
  fs::remove_all(p);
  return p;
}

ExperimentConfig config_from(const std::string& file, const fs::path& out) {
  const std::string path = std::string(LAB_DATA_DIR) + "/" + file;
  std::ifstream in(path);
  json j = json::parse(in);
  j["output"] = out.string();
  return ExperimentConfig::from_json(j, LAB_DATA_DIR);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Verdict rounding_fuzz() {
  auto t0 = std::chrono::steady_clock::now();
  Rng rng(101);
  long bad = 0;
  const long cases = 100000;
  for (long i = 0; i < cases; ++i) {
    const GridStep rho = GridStep::dyadic(1 + static_cast<int>(rng.below(20)));
    const double v = rng.uniform(-1, 1);
    const RoundingOracle o(static_cast<RoundingStrategy>(rng.below(4)), rng.next());
    const double g = o.round(v, rho, i);
    // Independent check: an integer multiple of rho within 3 rho / 4.
    const double m = g / rho.value();
    if (m != std::floor(m) || std::abs(g - v) > 0.75 * rho.value()) ++bad;
  }
  const double secs = seconds_since(t0);
  return {bad == 0 && secs < 5.0, fmt("%.0f cases, %.0f invalid, %.2f s", cases, bad, secs)};
}

Verdict batch_average_recovery() {
  long bad = 0, cases = 0;
  for (long b = 1; b <= 64; ++b) {
    // Within one ulp of 1/(2b) the noisy value itself rounds onto the midpoint, so the edge case
    // keeps a 2^-30 relative margin.
    for (double tau : {0.25 / b, (1 - std::ldexp(1.0, -30)) * 0.5 / b})
      for (long k = 0; k <= b; ++k)
        for (double s : {-1.0, 0.0, 1.0}) {
          ++cases;
          const double v = static_cast<double>(k) / b + s * tau;
          if (recover_batch_average(v, b, tau).numerator != k) ++bad;
        }
  }
  return {bad == 0, fmt("%.0f cases (b <= 64, noise 0 and +-tau), %.0f wrong", cases, bad)};
}

Verdict extract_stats() {
  auto t0 = std::chrono::steady_clock::now();
  ExperimentConfig c = config_from("extract_stats.json", scratch("extract"));
  ExperimentOutcome o = run_experiment(c);
  const double secs = seconds_since(t0);
  const double tv = o.summary["tv_distance"].get<double>();
  const double mr = o.summary["mean_rounds"].get<double>();
  const bool ok = o.passed && tv <= 0.03 && mr <= 50 && c.trials == 10000 && secs < 60;
  return {ok, fmt("tv %.4f, mean rounds %.2f, %.0f trials, %.2f s", tv, mr, c.trials, secs)};
}

Verdict full_batch_extraction() {
  long bad = 0, max_rounds = 0;
  for (int i = 0; i < 100; ++i) {
    FiniteDistribution D = random_distribution(4, 1 + (i % 32), split_seed(201, i));
    Batch S = sample_batch(D, 8, split_seed(202, i));
    FixedBatchOracle o(S, 1.0 / 32, Adversary{static_cast<NoiseAdversary>(i % 4), static_cast<std::uint64_t>(i)});
    BitSource bits(split_seed(203, i));
    long rounds = 0;
    auto got = fb_extract_batch(o, 4, 8, 1.0 / 32, bits, &rounds);
    auto want = S.items;
    std::sort(got.begin(), got.end());
    std::sort(want.begin(), want.end());
    max_rounds = std::max(max_rounds, rounds);
    if (got != want || rounds > 40) ++bad;
  }
  return {bad == 0, fmt("100 trials, %.0f failures, max rounds %.0f (bound 40)", bad, max_rounds)};
}

Verdict one_query_contract() {
  const GridStep rho = GridStep::dyadic(6);
  const double r = rho.value(), eps = 2 * r;
  Rng rng(301);
  long bad = 0;
  double worst = 0.0, min_kappa = 1.0;
  for (int i = 0; i < 1000; ++i) {
    const int n = 1 + static_cast<int>(rng.below(4));
    const int p = 1 + static_cast<int>(rng.below(3));
    const int label = static_cast<int>(rng.bit());
    auto table = std::make_shared<std::vector<double>>();
    for (long j = 0; j < (1L << n) * p; ++j) table->push_back(rng.below(4) == 0 ? 0.0 : rng.uniform(-1, 1));
    SQQuery q = SQQuery::restricted(label, p, [table, n, p](const Bits& x, Eigen::Ref<Eigen::VectorXd> out) {
      long idx = 0;
      for (int j = 0; j < n; ++j) idx = 2 * idx + x[j];
      for (int j = 0; j < p; ++j) out[j] = (*table)[idx * p + j];
    });
    auto model =
        build_single_query_model(q, label ? LabelRestriction::OneQuery : LabelRestriction::ZeroQuery, eps);
    FiniteDistribution D = random_distribution(n, 1 + rng.below(2UL << n), rng.next());
    GradientOptions o;
    o.rounding = RoundingOracle(static_cast<RoundingStrategy>(rng.below(4)), rng.next());
    Transcript tr = run_bsgd(model, D, 1, rho, 1 + static_cast<long>(rng.below(8)), 1.0, rng.next(), o);
    const Eigen::VectorXd avg = empirical_mean(tr.rounds[0].batch.items, q);
    const double err = (tr.final_w.head(p) - avg).lpNorm<Eigen::Infinity>();
    worst = std::max(worst, err);
    min_kappa = std::min(min_kappa, tr.final_w[p]);
    if (err > eps + r + 1e-12 || tr.final_w[p] < eps - r) ++bad;
  }
  return {bad == 0, fmt("1000 runs, max |theta - avg| %.5f (bound %.5f), min kappa %.5f, %.0f failures", worst,
                        eps + r, min_kappa, bad)};
}

Verdict parity_pipeline() {
  auto t0 = std::chrono::steady_clock::now();
  ExperimentConfig c = config_from("parity_end_to_end.json", scratch("parity"));
  ExperimentOutcome o = run_experiment(c);
  const double secs = seconds_since(t0);
  const double err = o.summary["mean_error"].get<double>(), base = o.summary["baseline_error"].get<double>();
  const long viol = o.summary["violations"].get<long>();
  const bool ok = o.passed && viol == 0 && err <= base + 0.1 && c.trials == 200 && secs < 300;
  return {ok, fmt("error %.4f vs baseline %.4f, %.0f violations, %.1f s", err, base, viol, secs)};
}

Verdict regime_separation() {
  RegimeResult in = regime_failure_rate(10000, 1.0, 0.3, 1000, 401);
  RegimeResult out = regime_failure_rate(2, 1.0, 0.3, 1000, 402);
  const bool ok = in.tau_bsq == 0.25 && in.failure_rate <= 0.01 && out.failure_rate >= 0.2;
  return {ok, fmt("b=10000: failure %.4f (tau_bsq %.3f); b=2: failure %.4f", in.failure_rate, in.tau_bsq,
                  out.failure_rate)};
}

Verdict sq_to_bsq_averaging() {
  FiniteDistribution D = random_distribution(3, 8, 501);
  auto seen = std::make_shared<std::vector<Eigen::VectorXd>>();
  std::vector<SQQuery> qs;
  for (int j = -1; j < 3; ++j)
    qs.emplace_back(1, [j](const Example& e, Eigen::Ref<Eigen::VectorXd> out) {
      out[0] = j < 0 ? 2.0 * e.y - 1.0 : (2.0 * e.x[j] - 1.0) * (2.0 * e.y - 1.0);
    });
  QueryLearner sq;
  sq.spec = MethodSpec{Paradigm::SQ, 4, 0.125, 0, 1, 0, false};
  sq.program = std::make_shared<testing_support::RecordingProgram>(3, qs, seen);
  QueryLearner bsq = sq_to_bsq(sq, 2, 0.05);
  const long q = bsq.spec.k / 4;
  long good = 0;
  for (int i = 0; i < 1000; ++i) {
    BatchOracle o(D, 2, bsq.spec.tau, Adversary{static_cast<NoiseAdversary>(i % 4), static_cast<std::uint64_t>(i)},
                  split_seed(502, i), false);
    run_program(*bsq.program, o, {});
    bool ok = seen->size() == 4;
    for (int t = 0; t < 4 && ok; ++t) ok = std::abs((*seen)[t][0] - population_mean(D, qs[t])[0]) <= 0.125;
    good += ok;
  }
  return {q == 1477 && good >= 950, fmt("q = %.0f, %.0f of 1000 trials within tau", q, good)};
}

Verdict gadget_part(const ExperimentOutcome& o, const char* key, const char* what) {
  const long v = o.summary[key]["violations"].get<long>();
  return {v == 0, std::string(what) + ", " + std::to_string(v) + " violations"};
}

Verdict finite_differences() {
  fd::Report dag, sim;
  for (int i = 0; i < 100; ++i) {
    fd::dag_case(split_seed(601, i), dag);
    fd::diffsim_case(split_seed(602, i), sim);
  }
  const bool ok = dag.failures == 0 && sim.failures == 0 && dag.checked > 0 && sim.checked > 0;
  std::string d = fmt("DAGs: %.0f coords, worst rel %.2e; compiled models: %.0f coords, worst rel %.2e", dag.checked,
                      dag.worst_rel, sim.checked, sim.worst_rel);
  if (!ok) d += "; " + dag.first_failure + sim.first_failure;
  return {ok, d};
}

Verdict determinism() {
  // Same configs, run twice with different worker counts.
  const char* files[] = {"extract_stats.json", "parity_end_to_end.json", "regime_sweep.json"};
  long diffs = 0, compared = 0;
  for (const char* f : files) {
    fs::path a = scratch(std::string("det_a_") + f), b = scratch(std::string("det_b_") + f);
    ExperimentConfig ca = config_from(f, a), cb = config_from(f, b);
    ca.trials = cb.trials = std::min<long>(ca.trials, 20);
    setenv("LAB_THREADS", "1", 1);
    run_experiment(ca);
    setenv("LAB_THREADS", "3", 1);
    run_experiment(cb);
    unsetenv("LAB_THREADS");
    for (const auto& entry : fs::directory_iterator(a)) {
      ++compared;
      if (slurp(entry.path()) != slurp(b / entry.path().filename())) ++diffs;
    }
  }
  return {diffs == 0 && compared >= 9, fmt("%.0f files compared, %.0f differ", compared, diffs)};
}

}  // namespace

int main() {
  int failed = 0;
  auto report = [&](int id, const char* name, const std::function<Verdict()>& f) {
    Verdict v;
    try {
      v = f();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %2d %s: %s\n", v.pass ? "PASS" : "FAIL", id, name, v.detail.c_str());
    std::fflush(stdout);
    failed += !v.pass;
  };
  report(1, "rounding fuzz", rounding_fuzz);
  report(2, "batch-average recovery", batch_average_recovery);
  report(3, "extraction statistics", extract_stats);
  report(4, "full-batch extraction", full_batch_extraction);
  report(5, "one-query contract", one_query_contract);
  report(6, "parity pipeline", parity_pipeline);
  report(7, "regime separation", regime_separation);
  report(8, "SQ to bSQ averaging", sq_to_bsq_averaging);

  ExperimentOutcome gadgets;
  std::string gadget_error;
  try {
    gadgets = run_experiment(config_from("gadget_audit.json", scratch("gadgets")));
  } catch (const std::exception& e) {
    gadget_error = e.what();
  }
  auto gadget = [&](const char* key, const char* what) {
    return [&, key, what]() -> Verdict {
      if (!gadget_error.empty()) return {false, "exception: " + gadget_error};
      return gadget_part(gadgets, key, what);
    };
  };
  report(9, "circuit emulation", gadget("circuits", "100 circuits x 100 inputs, frozen edges"));
  report(10, "memory gadget", gadget("memory", "exhaustive b <= 6 at tau = 1/16"));
  report(11, "finite differences", finite_differences);
  report(12, "determinism", determinism);
  std::printf("%d of 12 criteria failed\n", failed);
  return failed ? 1 : 0;
}
