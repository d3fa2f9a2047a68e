#ifndef LAB_TESTS_FD_ORACLE_HPP
#define LAB_TESTS_FD_ORACLE_HPP

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "lab/diffsim.hpp"
#include "lab/model.hpp"
#include "lab/nn.hpp"
#include "lab/payloads.hpp"
#include "lab/reductions.hpp"

namespace fd {

struct Report {
  long checked = 0;     // coordinates with nonzero analytic gradient
  long zero_checked = 0;
  long failures = 0;
  long skipped = 0;     // a perturbation left the model's domain (clock boundary)
  double worst_rel = 0.0;
  std::string first_failure;
};

// Central differences of f_w(x) in every coordinate of w.
inline void compare(const lab::DiffModel& model, const Eigen::VectorXd& w, const lab::Bits& x, Report& rep,
                    double h = 1e-6, double rel_tol = 1e-5, double zero_tol = 1e-7) {
  lab::SparseGrad g(model.dimension());
  model.differentiate(w, x, g);
  const Eigen::VectorXd dense(g);
  Eigen::VectorXd wp = w, wm = w;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    wp[i] = w[i] + h;
    wm[i] = w[i] - h;
    double num;
    try {
      num = (model.evaluate(wp, x) - model.evaluate(wm, x)) / (2 * h);
    } catch (const std::logic_error&) {
      wp[i] = wm[i] = w[i];
      ++rep.skipped;
      continue;
    }
    wp[i] = wm[i] = w[i];
    const double a = dense[i];
    bool ok;
    if (a != 0.0) {
      ++rep.checked;
      const double rel = std::abs(num - a) / std::abs(a);
      rep.worst_rel = std::max(rep.worst_rel, rel);
      ok = rel <= rel_tol;
    } else {
      ++rep.zero_checked;
      ok = std::abs(num) <= zero_tol;
    }
    if (!ok) {
      if (rep.failures == 0)
        rep.first_failure = "coordinate " + std::to_string(i) + ": analytic " + std::to_string(a) + ", numeric " +
                            std::to_string(num);
      ++rep.failures;
    }
  }
}

// Random compiled program, trained for a random number of steps; checks the gradient at the
// visited point on a few random inputs.
inline void diffsim_case(std::uint64_t seed, Report& rep, long inputs = 3) {
  lab::Rng rng(seed);
  const int n = 1 + static_cast<int>(rng.below(3));
  std::shared_ptr<const lab::QueryProgram> prog;
  switch (rng.below(3)) {
    case 0:
      prog = lab::majority_vote_program(n);
      break;
    case 1: {
      lab::QueryLearner sq{lab::MethodSpec{lab::Paradigm::SQ, n, 0.1, 0, 1, 0, false}, lab::dictator_program(n)};
      prog = lab::sq_split_alternating(sq).program;
      break;
    }
    default:
      prog = lab::pac_to_bsq_alternating(lab::parity_learner(n, 2), 2, 1.0 / 16, 0.5).program;
  }
  const lab::GridStep rho = lab::GridStep::dyadic(5 + static_cast<int>(rng.below(3)));
  auto F = lab::compile_program(prog, rho);
  const long b = 1 + static_cast<long>(rng.below(4));
  lab::FiniteDistribution D = lab::random_distribution(n, 1 + rng.below(2UL << n), rng.next());
  const long steps = static_cast<long>(rng.below(static_cast<std::uint64_t>(std::min<long>(F->rounds(), 12)) + 1));
  lab::GradientOptions o;
  o.rounding = lab::RoundingOracle(static_cast<lab::RoundingStrategy>(rng.below(4)), rng.next());
  o.record = false;
  lab::Transcript tr = lab::run_bsgd(F, D, steps, rho, b, 1.0, rng.next(), o);
  for (long i = 0; i < inputs; ++i) {
    lab::Bits x(static_cast<std::size_t>(n));
    for (auto& v : x) v = static_cast<std::uint8_t>(rng.bit());
    compare(*F, tr.final_w, x, rep);
  }
}

// Random DAG; inputs whose vertices sit within 1e-4 of a breakpoint are redrawn.
inline void dag_case(std::uint64_t seed, Report& rep, long inputs = 3) {
  lab::Rng rng(seed);
  const int n = 2 + static_cast<int>(rng.below(5));
  lab::NeuralNet net = lab::random_dag(n, 3 + static_cast<int>(rng.below(15)), 0.5, rng.next());
  lab::NetModel model(net);
  const Eigen::VectorXd w = net.weights();
  auto near_breakpoint = [&](const lab::Bits& x) {
    lab::Activations a = lab::forward(net, w, x);
    for (int v = 0; v < net.vertex_count(); ++v) {
      if (net.role(v) != lab::VertexRole::Internal) continue;
      for (double bp : {-3.0, -1.0, 0.0, 2.0})
        if (std::abs(a.input[static_cast<std::size_t>(v)] - bp) < 1e-4) return true;
    }
    return false;
  };
  for (long i = 0, tries = 0; i < inputs && tries < 100; ++tries) {
    lab::Bits x(static_cast<std::size_t>(n));
    for (auto& v : x) v = static_cast<std::uint8_t>(rng.bit());
    if (near_breakpoint(x)) continue;
    compare(model, w, x, rep);
    ++i;
  }
}

}  // namespace fd

#endif
