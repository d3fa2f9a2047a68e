#include "lab/circuit.hpp"

#include <random>
#include <stdexcept>

namespace lab {

Circuit::Circuit(int inputs) : inputs_(inputs) {
  for (int i = 0; i < inputs; ++i) nodes_.push_back({GateKind::Input, i, -1});
}

int Circuit::input(int i) const {
  if (i < 0 || i >= inputs_) throw std::out_of_range("circuit input");
  return i;
}

int Circuit::push(Gate g) {
  const int n = node_count();
  if (g.a >= n || g.b >= n) throw std::out_of_range("gate operand");
  nodes_.push_back(g);
  return n;
}

int Circuit::add_not(int a) { return push({GateKind::Not, a, -1}); }
int Circuit::add_and(int a, int b) { return push({GateKind::And, a, b}); }
int Circuit::add_or(int a, int b) { return push({GateKind::Or, a, b}); }
int Circuit::add_const(bool value) { return push({value ? GateKind::True : GateKind::False, -1, -1}); }

int Circuit::add_xor(int a, int b) {
  int both = add_and(a, b);
  int either = add_or(a, b);
  return add_and(either, add_not(both));
}

std::vector<int> Circuit::inline_circuit(const Circuit& sub, const std::vector<int>& bind) {
  if (static_cast<int>(bind.size()) != sub.inputs()) throw std::invalid_argument("inline_circuit: binding size");
  std::vector<int> map(sub.node_count());
  for (int i = 0; i < sub.node_count(); ++i) {
    const Gate& g = sub.node(i);
    switch (g.kind) {
      case GateKind::Input: map[i] = bind[i]; break;
      case GateKind::Not: map[i] = add_not(map[g.a]); break;
      case GateKind::And: map[i] = add_and(map[g.a], map[g.b]); break;
      case GateKind::Or: map[i] = add_or(map[g.a], map[g.b]); break;
      case GateKind::False: map[i] = add_const(false); break;
      case GateKind::True: map[i] = add_const(true); break;
    }
  }
  std::vector<int> out;
  for (int o : sub.outputs()) out.push_back(map[o]);
  return out;
}

Bits Circuit::evaluate_all(const Bits& in) const {
  if (static_cast<int>(in.size()) != inputs_) throw std::invalid_argument("circuit input size");
  Bits v(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Gate& g = nodes_[i];
    switch (g.kind) {
      case GateKind::Input: v[i] = in[g.a]; break;
      case GateKind::Not: v[i] = !v[g.a]; break;
      case GateKind::And: v[i] = v[g.a] && v[g.b]; break;
      case GateKind::Or: v[i] = v[g.a] || v[g.b]; break;
      case GateKind::False: v[i] = 0; break;
      case GateKind::True: v[i] = 1; break;
    }
  }
  return v;
}

Bits Circuit::evaluate(const Bits& in) const {
  Bits all = evaluate_all(in);
  Bits out;
  for (int o : outputs_) out.push_back(all[o]);
  return out;
}

Circuit random_circuit(int inputs, int gates, int outputs, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  Circuit c(inputs);
  for (int g = 0; g < gates; ++g) {
    std::uniform_int_distribution<int> pick(0, c.node_count() - 1);
    switch (std::uniform_int_distribution<int>(0, 2)(gen)) {
      case 0: c.add_not(pick(gen)); break;
      case 1: c.add_and(pick(gen), pick(gen)); break;
      default: c.add_or(pick(gen), pick(gen)); break;
    }
  }
  for (int o = 0; o < outputs; ++o) c.add_output(c.node_count() - 1 - (o % std::max(1, gates)));
  return c;
}

Circuit greater_than_circuit(int K) {
  // inputs: a_0..a_{K-1}, b_0..b_{K-1}
  Circuit c(2 * K);
  int gt = c.add_const(false);
  for (int i = 0; i < K; ++i) {  // from LSB up: higher bits override
    int a = c.input(i), b = c.input(K + i);
    int a_gt = c.add_and(a, c.add_not(b));
    int eq = c.add_not(c.add_xor(a, b));
    gt = c.add_or(a_gt, c.add_and(eq, gt));
  }
  c.add_output(gt);
  return c;
}

Circuit any_circuit(int K) {
  Circuit c(K);
  int acc = c.add_const(false);
  for (int i = 0; i < K; ++i) acc = c.add_or(acc, c.input(i));
  c.add_output(acc);
  return c;
}

CircuitGadget build_circuit_gadget(NeuralNet& net, const Circuit& c, const std::vector<int>& inputs,
                                   const std::vector<std::pair<double, double>>& thresholds) {
  if (static_cast<int>(inputs.size()) != c.inputs() || thresholds.size() != inputs.size())
    throw std::invalid_argument("build_circuit_gadget: input binding");
  CircuitGadget g;
  g.node_vertex.resize(c.node_count());
  const int one = net.constant();
  auto edge = [&](int from, int to, double w) { g.edges.push_back(net.add_edge(from, to, w)); };
  for (int i = 0; i < c.node_count(); ++i) {
    const Gate& gate = c.node(i);
    const int v = net.add_vertex("gate" + std::to_string(i));
    g.node_vertex[i] = v;
    switch (gate.kind) {
      case GateKind::Input: {
        auto [y0, y1] = thresholds[gate.a];
        edge(inputs[gate.a], v, 8.0 / (y1 - y0));
        edge(one, v, -(4.0 * y1 + 4.0 * y0) / (y1 - y0));
        g.input_vertices.push_back(v);
        break;
      }
      case GateKind::Not:
        edge(g.node_vertex[gate.a], v, -2.0);
        break;
      case GateKind::And:
        edge(g.node_vertex[gate.a], v, 2.0);
        edge(g.node_vertex[gate.b], v, 2.0);
        edge(one, v, -4.0);
        break;
      case GateKind::Or:
        edge(g.node_vertex[gate.a], v, 2.0);
        edge(g.node_vertex[gate.b], v, 2.0);
        edge(one, v, 4.0);
        break;
      case GateKind::False:
        edge(one, v, -4.0);
        break;
      case GateKind::True:
        edge(one, v, 4.0);
        break;
    }
  }
  for (int o : c.outputs()) g.output_vertices.push_back(g.node_vertex[o]);
  return g;
}

}  // namespace lab
