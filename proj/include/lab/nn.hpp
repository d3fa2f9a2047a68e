#ifndef LAB_NN_HPP
#define LAB_NN_HPP

#include <string>
#include <vector>

#include <json.hpp>

#include "lab/model.hpp"

namespace lab {

// Five-piece stage-wise ramp. At breakpoints the first matching closed piece wins.
double sigma(double x);
double sigma_prime(double x);
bool is_breakpoint(double x);

enum class VertexRole { Input, Constant, Internal, Output };

struct Edge {
  int from = 0;
  int to = 0;
  double weight = 0.0;
  bool trainable = true;
};

// DAG net: vertices 0..n-1 are the data inputs, vertex n is the constant 1.
// Internal vertices apply sigma; the single output vertex is linear.
class NeuralNet {
 public:
  explicit NeuralNet(int n = 0);

  int n() const { return n_; }
  int constant() const { return n_; }
  int add_vertex(std::string label = {});
  int add_edge(int from, int to, double weight);
  void set_output(int v);
  int output() const { return output_; }

  long vertex_count() const { return static_cast<long>(roles_.size()); }
  long edge_count() const { return static_cast<long>(edges_.size()); }
  VertexRole role(int v) const { return roles_[v]; }
  const std::string& label(int v) const { return labels_[v]; }
  const Edge& edge(int e) const { return edges_[e]; }
  const std::vector<int>& in_edges(int v) const { return in_[v]; }
  const std::vector<int>& out_edges(int v) const { return out_[v]; }

  Eigen::VectorXd weights() const;
  void set_weights(const Eigen::VectorXd& w);

  // Topological order; throws std::logic_error on a cycle or a malformed output.
  const std::vector<int>& order() const;

  nlohmann::json to_json() const;
  static NeuralNet from_json(const nlohmann::json& j);

 private:
  int n_;
  int output_ = -1;
  std::vector<VertexRole> roles_;
  std::vector<std::string> labels_;
  std::vector<Edge> edges_;
  std::vector<std::vector<int>> in_, out_;
  mutable std::vector<int> order_;
  mutable bool order_valid_ = false;
};

struct Activations {
  std::vector<double> input;   // pre-activation
  std::vector<double> output;  // o_v
  double value = 0.0;         // output vertex
};

// Forward pass with weights w (one per edge).
Activations forward(const NeuralNet& net, const Eigen::VectorXd& w, const Bits& x);

struct BackwardResult {
  double value = 0.0;
  double loss = 0.0;
  Eigen::VectorXd grad;          // d loss / d w_e
  long breakpoint_hits = 0;      // vertices on a breakpoint with a nonzero adjoint
};

// d f / d w_e by reverse accumulation.
Eigen::VectorXd output_gradient(const NeuralNet& net, const Eigen::VectorXd& w, const Activations& acts,
                                long* breakpoint_hits = nullptr);
// Square loss 0.5 (f - y)^2.
BackwardResult backward(const NeuralNet& net, const Eigen::VectorXd& w, const Bits& x, double y);

// The net as a differentiable model; parameters are the edge weights, initialized to the stored ones.
class NetModel : public DiffModel {
 public:
  explicit NetModel(NeuralNet net) : net_(std::move(net)) { net_.order(); }
  long dimension() const override { return net_.edge_count(); }
  Eigen::VectorXd initialize(const Bits&) const override { return net_.weights(); }
  double evaluate(const Eigen::VectorXd& w, const Bits& x) const override;
  double differentiate(const Eigen::VectorXd& w, const Bits& x, SparseGrad& grad) const override;
  const NeuralNet& net() const { return net_; }

 private:
  NeuralNet net_;
};

// Random layered DAG with `internal` hidden vertices and Gaussian weights.
NeuralNet random_dag(int n, int internal, double edge_prob, std::uint64_t seed);

}  // namespace lab

#endif
