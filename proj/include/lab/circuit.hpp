#ifndef LAB_CIRCUIT_HPP
#define LAB_CIRCUIT_HPP

#include <utility>
#include <vector>

#include "lab/nn.hpp"

namespace lab {

enum class GateKind { Input, Not, And, Or, False, True };

struct Gate {
  GateKind kind = GateKind::Input;
  int a = -1;
  int b = -1;
};

// Boolean circuit; nodes 0..inputs-1 are the inputs, gates follow in topological order.
class Circuit {
 public:
  explicit Circuit(int inputs = 0);

  int inputs() const { return inputs_; }
  int node_count() const { return static_cast<int>(nodes_.size()); }
  long gate_count() const { return static_cast<long>(nodes_.size()) - inputs_; }
  const Gate& node(int i) const { return nodes_[i]; }
  const std::vector<int>& outputs() const { return outputs_; }

  int input(int i) const;
  int add_not(int a);
  int add_and(int a, int b);
  int add_or(int a, int b);
  int add_const(bool value);
  int add_xor(int a, int b);
  void add_output(int node) { outputs_.push_back(node); }

  // Copies `sub` into this circuit with its inputs bound to `bind`; returns the nodes of its outputs.
  std::vector<int> inline_circuit(const Circuit& sub, const std::vector<int>& bind);

  Bits evaluate(const Bits& in) const;
  Bits evaluate_all(const Bits& in) const;  // every node

 private:
  int push(Gate g);
  int inputs_;
  std::vector<Gate> nodes_;
  std::vector<int> outputs_;
};

Circuit random_circuit(int inputs, int gates, int outputs, std::uint64_t seed);
// Output 1 iff the K-bit number a (LSB first) exceeds b.
Circuit greater_than_circuit(int K);
// Output 1 iff any input is 1.
Circuit any_circuit(int K);

struct CircuitGadget {
  std::vector<int> input_vertices;  // conversion vertex per circuit input
  std::vector<int> node_vertex;     // net vertex of each circuit node
  std::vector<int> output_vertices;
  std::vector<int> edges;           // every edge entering a new vertex
};

// Adds one vertex per circuit node. Input i reads net vertex `inputs[i]`, whose activation is
// below thresholds[i].first for 0 and above thresholds[i].second for 1. Node vertices output +-2.
CircuitGadget build_circuit_gadget(NeuralNet& net, const Circuit& c, const std::vector<int>& inputs,
                                   const std::vector<std::pair<double, double>>& thresholds);

}  // namespace lab

#endif
