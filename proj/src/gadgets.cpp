#include "lab/gadgets.hpp"

#include <cmath>

namespace lab {

int register_width(double tau) {
  int K = 1;
  while (std::ldexp(1.0, K) < 1.0 / tau + 4.0) ++K;
  return K;
}

QueryGadget build_query_gadget(NeuralNet& net, double tau, GadgetVariant variant, int output) {
  if (!(tau > 0.0 && tau < 1.0 / 12.0)) throw std::invalid_argument("query gadget needs 0 < tau < 1/12");
  QueryGadget g;
  g.variant = variant;
  g.tau = tau;
  g.K = register_width(tau);
  g.v0 = net.constant();
  g.v4 = output;
  g.v1 = net.add_vertex("v1");
  g.v2 = net.add_vertex("v2");
  g.v2p = net.add_vertex("v2'");
  g.v3 = net.add_vertex("v3");
  g.vc = net.add_vertex("vc");
  g.reg.resize(g.K);
  for (int i = g.K - 1; i >= 0; --i) g.reg[i] = net.add_vertex("vr" + std::to_string(i));
  auto edge = [&](int a, int b, double w) {
    int e = net.add_edge(a, b, w);
    g.edges.push_back(e);
    return e;
  };
  g.e01 = edge(g.v0, g.v1, 1.0 / 12.0);
  edge(g.v1, g.v2, 1.0);
  edge(g.v1, g.v2p, 1.0);
  edge(g.v2, g.v3, 1.0);
  edge(g.v2p, g.v3, 1.0);
  edge(g.vc, g.v2, 10.0);
  edge(g.vc, g.v2p, -10.0);
  edge(g.vc, g.v3, -0.25);
  const double bias = -1.0 / tau + 6.0 - 6.0 * std::ldexp(1.0, g.K);
  for (int i = g.K - 1; i >= 0; --i) {
    edge(g.v1, g.reg[i], 12.0 / tau);
    edge(g.v0, g.reg[i], bias);
    for (int j = g.K - 1; j > i; --j) edge(g.reg[j], g.reg[i], -3.0 * std::ldexp(1.0, j));
  }
  g.e34 = edge(g.v3, g.v4, variant == GadgetVariant::Q ? 0.25 : -0.25);
  return g;
}

Bits register_bits(const Activations& acts, const QueryGadget& g) {
  Bits out(g.K);
  for (int i = 0; i < g.K; ++i) {
    double o = acts.output[g.reg[i]];
    if (o == 2.0)
      out[i] = 1;
    else if (o == -2.0)
      out[i] = 0;
    else
      throw RegisterError("register vertex " + std::to_string(i) + " outputs " + std::to_string(o));
  }
  return out;
}

long read_register(const Activations& acts, const QueryGadget& g) {
  Bits b = register_bits(acts, g);
  long m = 0;
  for (int i = g.K - 1; i >= 0; --i) m = 2 * m + b[i];
  return m;
}

double gadget_contribution(const Activations& acts, const QueryGadget& g, const Eigen::VectorXd& w) {
  return w[g.e34] * acts.output[g.v3];
}

namespace {

// Control vertex sigma(a + b - 1/2) in {-2, 0, 2} for circuit outputs a, b in {-2, 2}.
int control_vertex(NeuralNet& net, const std::string& label) { return net.add_vertex(label); }

void wire_control(NeuralNet& net, const CircuitGadget& cg, int v, int a, int b) {
  net.add_edge(cg.node_vertex[a], v, 1.0);
  net.add_edge(cg.node_vertex[b], v, 1.0);
  net.add_edge(net.constant(), v, -0.5);
}

// vc = sigma(c + 3/2): 2 when c = 2, 0 when c = -2; both inputs sit on flat pieces.
void wire_vc(NeuralNet& net, const CircuitGadget& cg, int vc, int c) {
  net.add_edge(cg.node_vertex[c], vc, 1.0);
  net.add_edge(net.constant(), vc, 1.5);
}

}  // namespace

MemoryHarness build_memory_harness(double tau, GadgetVariant variant) {
  NeuralNet net(1);
  const int out = net.add_vertex("out");
  MemoryHarness h;
  h.tau = tau;
  h.gadget = build_query_gadget(net, tau, variant, out);
  const int S = control_vertex(net, "secondary");
  net.add_edge(S, out, 1.0 / 48.0);
  const int P = control_vertex(net, "primary");
  net.add_edge(P, out, variant == GadgetVariant::Q ? -tau : (1.0 + 2.0 * tau) / 2.0);

  Circuit c(1);
  const int q = c.input(0);
  const int nq = c.add_not(q);
  const int f = c.add_const(false);
  const int t = c.add_const(true);
  CircuitGadget cg = build_circuit_gadget(net, c, {0}, {{0.25, 0.75}});
  wire_vc(net, cg, h.gadget.vc, nq);
  if (variant == GadgetVariant::Q)
    wire_control(net, cg, S, nq, f);
  else
    wire_control(net, cg, S, q, t);
  wire_control(net, cg, P, q, t);
  net.set_output(out);
  h.gadget_edges = h.gadget.edges;
  h.model = std::make_shared<NetModel>(std::move(net));
  return h;
}

namespace {

class WeightRecorder : public StepObserver {
 public:
  void on_step(long, const Eigen::VectorXd& w, const std::vector<Example>&, const SparseGrad&,
               const SparseGrad&) override {
    after.push_back(w);
  }
  std::vector<Eigen::VectorXd> after;
};

}  // namespace

MemoryTrial run_memory_trial(const MemoryHarness& h, const std::vector<SampleRole>& pattern,
                             RoundingStrategy rounding, std::uint64_t seed, long idle_before, long idle_after) {
  const long b = static_cast<long>(pattern.size());
  const bool isQ = h.gadget.variant == GadgetVariant::Q;
  const int agree_label = isQ ? 0 : 1;
  std::vector<Batch> batches;
  auto idle_batch = [&] {
    Batch B;
    for (long i = 0; i < b; ++i) B.items.push_back({{0}, static_cast<int>(i % 2)});
    return B;
  };
  for (long s = 0; s < idle_before; ++s) batches.push_back(idle_batch());
  Batch query;
  MemoryTrial r;
  for (SampleRole role : pattern) {
    switch (role) {
      case SampleRole::Idle: query.items.push_back({{0}, 0}); break;
      case SampleRole::Agree:
        query.items.push_back({{1}, agree_label});
        ++r.queries;
        break;
      case SampleRole::Mismatch:
        query.items.push_back({{1}, 1 - agree_label});
        ++r.queries;
        ++r.mismatches;
        break;
    }
  }
  batches.push_back(query);
  for (long s = 0; s < idle_after; ++s) batches.push_back(idle_batch());
  const long query_step = idle_before + 1;

  const Eigen::VectorXd w0 = h.model->initialize({});
  {
    Activations a = forward(h.model->net(), w0, {1});
    const double target = isQ ? -2.0 * h.tau : 1.0 + 2.0 * h.tau;
    r.contribution_exact = gadget_contribution(a, h.gadget, w0) == (isQ ? 1.0 : -1.0) / 24.0;
    r.output_exact = a.value == target;
  }

  WeightRecorder rec;
  GradientOptions opts{RoundingOracle(rounding, seed), false, &rec};
  Transcript tr = run_on_batches(h.model, w0, batches, GridStep::from_value(h.tau), 2.0, opts);
  Eigen::VectorXd prev = w0;
  for (std::size_t s = 0; s < rec.after.size(); ++s) {
    bool moved = false;
    for (int e : h.gadget_edges)
      if (rec.after[s][e] != prev[e]) moved = true;
    if (moved) {
      r.changed_steps.push_back(static_cast<long>(s) + 1);
      if (static_cast<long>(s) + 1 != query_step) ++r.off_step_changes;
    }
    prev = rec.after[s];
  }
  Activations fin = forward(h.model->net(), tr.final_w, {0});
  r.decoded = read_register(fin, h.gadget);
  r.expected = static_cast<double>(r.mismatches) / (static_cast<double>(b) * h.tau) +
               2.0 * static_cast<double>(r.queries) / static_cast<double>(b);
  r.within_bound = std::abs(static_cast<double>(r.decoded) - r.expected) <= 1.5 + 1e-9;
  return r;
}

Bits CircuitProgram::answer_bits(double v) const {
  const int k = K();
  const long top = (1L << k) - 1;
  long m = std::clamp(static_cast<long>(std::llround(v / rho)), 0L, top);
  Bits out(k);
  for (int i = 0; i < k; ++i) out[i] = (m >> i) & 1;
  return out;
}

namespace {

class CircuitQueryProgram : public QueryProgram {
 public:
  explicit CircuitQueryProgram(CircuitProgram prog) : prog_(std::move(prog)) {}
  std::string name() const override { return prog_.name; }
  int n() const override { return prog_.n; }
  long rounds() const override { return prog_.T; }
  int arity() const override { return prog_.p; }
  long random_bits() const override { return 0; }
  bool alternating() const override { return true; }
  std::unique_ptr<ProgramSession> start(const Bits&) const override {
    class Session : public ProgramSession {
     public:
      explicit Session(const CircuitProgram& p) : p_(p) {}
      SQQuery next_query() override {
        ++t_;
        const CircuitProgram* p = &p_;
        const long t = t_;
        auto prev = std::make_shared<const Bits>(bits_);
        return SQQuery(
            p->p,
            [p, t, prev](const Example& e, Eigen::Ref<Eigen::VectorXd> out) {
              Bits in = e.x;
              in.insert(in.end(), prev->begin(), prev->end());
              const double label = (t % 2 == 1) ? e.y : 1 - e.y;
              for (int j = 0; j < p->p; ++j) out[j] = label * p->queries[t - 1][j].evaluate(in)[0];
            },
            alternating_restriction(t));
      }
      void respond(const Eigen::VectorXd& v) override {
        for (Eigen::Index j = 0; j < v.size(); ++j) {
          Bits b = p_.answer_bits(v[j]);
          bits_.insert(bits_.end(), b.begin(), b.end());
        }
      }
      Predictor finish() override {
        std::map<Bits, double> table;
        for (long x = 0; x < (1L << p_.n); ++x) {
          Bits in(p_.n);
          for (int i = 0; i < p_.n; ++i) in[i] = (x >> i) & 1;
          Bits full = in;
          full.insert(full.end(), bits_.begin(), bits_.end());
          table[in] = p_.final.evaluate(full)[0];
        }
        return Predictor::table(std::move(table));
      }

     private:
      const CircuitProgram& p_;
      long t_ = 0;
      Bits bits_;
    };
    return std::make_unique<Session>(prog_);
  }

 private:
  CircuitProgram prog_;
};

// Circuit over `inputs` inputs whose single output is the constant `value`.
Circuit constant_circuit(int inputs, bool value) {
  Circuit c(inputs);
  c.add_output(c.add_const(value));
  return c;
}

}  // namespace

std::shared_ptr<const QueryProgram> CircuitProgram::as_program() const {
  return std::make_shared<CircuitQueryProgram>(*this);
}

CircuitProgram constant_query_program(int n, double rho, long threshold) {
  CircuitProgram p;
  p.name = "constant_query";
  p.n = n;
  p.T = 1;
  p.p = 1;
  p.rho = rho;
  const int K = p.K();
  p.queries = {{constant_circuit(n, true)}};
  Circuit f(n + K);
  std::vector<int> bind;
  for (int i = 0; i < K; ++i) bind.push_back(f.input(n + i));
  for (int i = 0; i < K; ++i) bind.push_back(f.add_const(((threshold - 1) >> i) & 1));
  f.add_output(f.inline_circuit(greater_than_circuit(K), bind)[0]);
  p.final = f;
  return p;
}

CircuitProgram majority_vote_circuit_program(int n, double rho) {
  CircuitProgram p;
  p.name = "majority_vote_circuit";
  p.n = n;
  p.T = 2;
  p.p = 1;
  p.rho = rho;
  const int K = p.K();
  p.queries = {{constant_circuit(n, true)}, {constant_circuit(n + K, true)}};
  Circuit f(n + 2 * K);
  std::vector<int> bind;
  for (int i = 0; i < 2 * K; ++i) bind.push_back(f.input(n + i));
  f.add_output(f.inline_circuit(greater_than_circuit(K), bind)[0]);
  p.final = f;
  return p;
}

EmulationNet build_emulation_net(const CircuitProgram& prog) {
  if (!(prog.rho > 0.0 && prog.rho < 1.0 / 12.0)) throw std::invalid_argument("emulation net needs rho < 1/12");
  if (static_cast<long>(prog.queries.size()) != prog.T) throw std::invalid_argument("one query list per round");
  const int n = prog.n, p = prog.p, K = prog.K();
  const long T = prog.T;
  NeuralNet net(n);
  const int out = net.add_vertex("out");
  EmulationNet em;
  em.program = prog;

  struct Slot {
    QueryGadget g;
    int S;
  };
  auto add_gadget = [&](long t) {
    Slot s;
    s.g = build_query_gadget(net, prog.rho, t % 2 == 1 ? GadgetVariant::Q : GadgetVariant::QPrime, out);
    s.S = control_vertex(net, "secondary");
    em.control_edges.push_back(net.add_edge(s.S, out, 1.0 / 48.0));
    return s;
  };
  std::vector<Slot> clock_slots;
  std::vector<std::vector<Slot>> query_slots(T);
  std::vector<int> primary(T);
  for (long t = 1; t <= T; ++t) {
    clock_slots.push_back(add_gadget(t));
    for (int j = 0; j < p; ++j) query_slots[t - 1].push_back(add_gadget(t));
    primary[t - 1] = control_vertex(net, "primary" + std::to_string(t));
    em.control_edges.push_back(
        net.add_edge(primary[t - 1], out, t % 2 == 1 ? -prog.rho : (1.0 + 2.0 * prog.rho) / 2.0));
  }
  const int F = control_vertex(net, "final");
  em.final_edge = net.add_edge(F, out, 0.5);

  // computation circuit over [x, clock_1, query_1_*, clock_2, ...] registers
  std::vector<int> in_vertices;
  std::vector<std::pair<double, double>> thresholds;
  for (int i = 0; i < n; ++i) {
    in_vertices.push_back(i);
    thresholds.push_back({0.25, 0.75});
  }
  auto add_register_inputs = [&](const QueryGadget& g) {
    for (int i = 0; i < K; ++i) {
      in_vertices.push_back(g.reg[i]);
      thresholds.push_back({-1.0, 1.0});
    }
  };
  for (long t = 0; t < T; ++t) {
    add_register_inputs(clock_slots[t].g);
    for (int j = 0; j < p; ++j) add_register_inputs(query_slots[t][j].g);
  }
  Circuit c(static_cast<int>(in_vertices.size()));
  std::vector<int> x_nodes;
  for (int i = 0; i < n; ++i) x_nodes.push_back(c.input(i));
  auto reg_nodes = [&](long t, int slot) {  // slot 0 = clock, 1 + j = query j
    std::vector<int> r;
    const int base = n + static_cast<int>(t) * (1 + p) * K + slot * K;
    for (int i = 0; i < K; ++i) r.push_back(c.input(base + i));
    return r;
  };
  auto answer_nodes = [&](long rounds) {
    std::vector<int> r;
    for (long t = 0; t < rounds; ++t)
      for (int j = 0; j < p; ++j) {
        auto q = reg_nodes(t, 1 + j);
        r.insert(r.end(), q.begin(), q.end());
      }
    return r;
  };
  const int TRUE = c.add_const(true);
  const int FALSE = c.add_const(false);
  std::vector<int> fired(T + 1);
  fired[0] = TRUE;
  for (long t = 1; t <= T; ++t) fired[t] = c.inline_circuit(any_circuit(K), reg_nodes(t - 1, 0))[0];

  struct Wiring {
    int vc, c, S, a, b;
  };
  std::vector<Wiring> gadget_wiring;
  std::vector<std::pair<int, int>> primary_wiring;
  for (long t = 1; t <= T; ++t) {
    const int active = c.add_and(fired[t - 1], c.add_not(fired[t]));
    const bool odd = t % 2 == 1;
    auto wire = [&](const Slot& s, int on) {
      const int cn = c.add_not(on);
      if (odd)
        gadget_wiring.push_back({s.g.vc, cn, s.S, cn, FALSE});
      else
        gadget_wiring.push_back({s.g.vc, cn, s.S, on, TRUE});
    };
    wire(clock_slots[t - 1], active);
    std::vector<int> bind = x_nodes;
    auto prev = answer_nodes(t - 1);
    bind.insert(bind.end(), prev.begin(), prev.end());
    for (int j = 0; j < p; ++j) {
      const int phi = c.inline_circuit(prog.queries[t - 1][j], bind)[0];
      wire(query_slots[t - 1][j], c.add_and(active, phi));
    }
    primary_wiring.push_back({active, TRUE});
  }
  std::vector<int> fbind = x_nodes;
  auto all = answer_nodes(T);
  fbind.insert(fbind.end(), all.begin(), all.end());
  const int h = c.inline_circuit(prog.final, fbind)[0];
  const int final_on = c.add_and(fired[T], h);

  em.computation = build_circuit_gadget(net, c, in_vertices, thresholds);
  for (const auto& w : gadget_wiring) {
    wire_vc(net, em.computation, w.vc, w.c);
    wire_control(net, em.computation, w.S, w.a, w.b);
  }
  for (long t = 0; t < T; ++t) wire_control(net, em.computation, primary[t], primary_wiring[t].first, primary_wiring[t].second);
  wire_control(net, em.computation, F, final_on, TRUE);
  net.set_output(out);

  for (const auto& s : clock_slots) em.clocks.push_back(s.g);
  for (const auto& row : query_slots) {
    em.queries.emplace_back();
    for (const auto& s : row) em.queries.back().push_back(s.g);
  }
  em.model = std::make_shared<NetModel>(std::move(net));
  return em;
}

std::vector<Eigen::VectorXd> EmulationNet::answers(const Eigen::VectorXd& w) const {
  Activations a = forward(model->net(), w, Bits(program.n, 0));
  std::vector<Eigen::VectorXd> out;
  for (const auto& row : queries) {
    Eigen::VectorXd v(row.size());
    for (std::size_t j = 0; j < row.size(); ++j) v[j] = static_cast<double>(read_register(a, row[j])) * program.rho;
    out.push_back(v);
  }
  return out;
}

Predictor EmulationNet::predictor(const Eigen::VectorXd& w) const { return Predictor::snapshot(model, w); }

}  // namespace lab
