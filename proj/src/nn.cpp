#include "lab/nn.hpp"

#include <deque>
#include <random>
#include <stdexcept>

namespace lab {

double sigma(double x) {
  if (x < -3.0) return -2.0;
  if (x <= -1.0) return x + 1.0;
  if (x < 0.0) return 0.0;
  if (x <= 2.0) return x;
  return 2.0;
}

double sigma_prime(double x) {
  if (x < -3.0) return 0.0;
  if (x <= -1.0) return 1.0;
  if (x < 0.0) return 0.0;
  if (x <= 2.0) return 1.0;
  return 0.0;
}

bool is_breakpoint(double x) { return x == -3.0 || x == -1.0 || x == 0.0 || x == 2.0; }

NeuralNet::NeuralNet(int n) : n_(n) {
  for (int i = 0; i < n; ++i) {
    roles_.push_back(VertexRole::Input);
    labels_.push_back("x" + std::to_string(i));
  }
  roles_.push_back(VertexRole::Constant);
  labels_.push_back("const");
  in_.resize(roles_.size());
  out_.resize(roles_.size());
}

int NeuralNet::add_vertex(std::string label) {
  roles_.push_back(VertexRole::Internal);
  labels_.push_back(std::move(label));
  in_.emplace_back();
  out_.emplace_back();
  order_valid_ = false;
  return static_cast<int>(roles_.size()) - 1;
}

int NeuralNet::add_edge(int from, int to, double weight) {
  const int V = static_cast<int>(roles_.size());
  if (from < 0 || from >= V || to < 0 || to >= V) throw std::out_of_range("edge endpoint");
  if (roles_[to] == VertexRole::Input || roles_[to] == VertexRole::Constant)
    throw std::logic_error("edges may not enter an input vertex");
  if (roles_[from] == VertexRole::Output) throw std::logic_error("the output vertex has no out-edges");
  edges_.push_back({from, to, weight, true});
  const int e = static_cast<int>(edges_.size()) - 1;
  in_[to].push_back(e);
  out_[from].push_back(e);
  order_valid_ = false;
  return e;
}

void NeuralNet::set_output(int v) {
  if (roles_[v] != VertexRole::Internal) throw std::logic_error("output must be a non-input vertex");
  if (!out_[v].empty()) throw std::logic_error("output vertex has out-edges");
  if (output_ >= 0) roles_[output_] = VertexRole::Internal;
  roles_[v] = VertexRole::Output;
  output_ = v;
  order_valid_ = false;
}

Eigen::VectorXd NeuralNet::weights() const {
  Eigen::VectorXd w(edges_.size());
  for (std::size_t e = 0; e < edges_.size(); ++e) w[e] = edges_[e].weight;
  return w;
}

void NeuralNet::set_weights(const Eigen::VectorXd& w) {
  if (w.size() != edge_count()) throw std::invalid_argument("weight vector size");
  for (std::size_t e = 0; e < edges_.size(); ++e) edges_[e].weight = w[e];
}

const std::vector<int>& NeuralNet::order() const {
  if (order_valid_) return order_;
  if (output_ < 0) throw std::logic_error("net has no output vertex");
  const int V = static_cast<int>(roles_.size());
  std::vector<int> indeg(V, 0);
  for (const auto& e : edges_) ++indeg[e.to];
  std::deque<int> ready;
  for (int v = 0; v < V; ++v)
    if (indeg[v] == 0) ready.push_back(v);
  std::vector<int> order;
  order.reserve(V);
  while (!ready.empty()) {
    int v = ready.front();
    ready.pop_front();
    order.push_back(v);
    for (int e : out_[v])
      if (--indeg[edges_[e].to] == 0) ready.push_back(edges_[e].to);
  }
  if (static_cast<int>(order.size()) != V) throw std::logic_error("net contains a cycle");
  order_ = std::move(order);
  order_valid_ = true;
  return order_;
}

static const char* role_name(VertexRole r) {
  switch (r) {
    case VertexRole::Input: return "input";
    case VertexRole::Constant: return "constant";
    case VertexRole::Internal: return "internal";
    case VertexRole::Output: return "output";
  }
  return "?";
}

nlohmann::json NeuralNet::to_json() const {
  nlohmann::json j;
  j["n"] = n_;
  j["output"] = output_;
  auto& vs = j["vertices"] = nlohmann::json::array();
  for (std::size_t v = 0; v < roles_.size(); ++v)
    vs.push_back({{"id", v}, {"role", role_name(roles_[v])}, {"label", labels_[v]}});
  auto& es = j["edges"] = nlohmann::json::array();
  for (const auto& e : edges_)
    es.push_back({{"from", e.from}, {"to", e.to}, {"weight", e.weight}, {"trainable", e.trainable}});
  return j;
}

NeuralNet NeuralNet::from_json(const nlohmann::json& j) {
  NeuralNet net(j.at("n").get<int>());
  const auto& vs = j.at("vertices");
  for (std::size_t v = net.roles_.size(); v < vs.size(); ++v) net.add_vertex(vs[v].value("label", ""));
  for (const auto& e : j.at("edges")) {
    int id = net.add_edge(e.at("from").get<int>(), e.at("to").get<int>(), e.at("weight").get<double>());
    net.edges_[id].trainable = e.value("trainable", true);
  }
  net.set_output(j.at("output").get<int>());
  return net;
}

Activations forward(const NeuralNet& net, const Eigen::VectorXd& w, const Bits& x) {
  const auto& order = net.order();
  const long V = net.vertex_count();
  Activations a;
  a.input.assign(V, 0.0);
  a.output.assign(V, 0.0);
  for (int v : order) {
    switch (net.role(v)) {
      case VertexRole::Input:
        a.output[v] = x.at(v);
        break;
      case VertexRole::Constant:
        a.output[v] = 1.0;
        break;
      default: {
        double s = 0.0;
        for (int e : net.in_edges(v)) s += w[e] * a.output[net.edge(e).from];
        a.input[v] = s;
        a.output[v] = net.role(v) == VertexRole::Output ? s : sigma(s);
      }
    }
  }
  a.value = a.output[net.output()];
  return a;
}

Eigen::VectorXd output_gradient(const NeuralNet& net, const Eigen::VectorXd& w, const Activations& acts,
                                long* breakpoint_hits) {
  const auto& order = net.order();
  std::vector<double> adj(net.vertex_count(), 0.0);  // d f / d o_v
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(net.edge_count());
  adj[net.output()] = 1.0;
  long hits = 0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const int v = *it;
    if (adj[v] == 0.0) continue;
    const VertexRole role = net.role(v);
    if (role == VertexRole::Input || role == VertexRole::Constant) continue;
    double d = adj[v];
    if (role == VertexRole::Internal) {
      if (is_breakpoint(acts.input[v])) ++hits;
      d *= sigma_prime(acts.input[v]);
    }
    if (d == 0.0) continue;
    for (int e : net.in_edges(v)) {
      const int u = net.edge(e).from;
      grad[e] += d * acts.output[u];
      adj[u] += d * w[e];
    }
  }
  if (breakpoint_hits) *breakpoint_hits = hits;
  return grad;
}

BackwardResult backward(const NeuralNet& net, const Eigen::VectorXd& w, const Bits& x, double y) {
  Activations a = forward(net, w, x);
  BackwardResult r;
  r.value = a.value;
  r.loss = 0.5 * (r.value - y) * (r.value - y);
  r.grad = (r.value - y) * output_gradient(net, w, a, &r.breakpoint_hits);
  return r;
}

double NetModel::evaluate(const Eigen::VectorXd& w, const Bits& x) const { return forward(net_, w, x).value; }

double NetModel::differentiate(const Eigen::VectorXd& w, const Bits& x, SparseGrad& grad) const {
  Activations a = forward(net_, w, x);
  Eigen::VectorXd g = output_gradient(net_, w, a);
  grad.resize(g.size());
  grad.setZero();
  for (Eigen::Index i = 0; i < g.size(); ++i)
    if (g[i] != 0.0) grad.insert(i) = g[i];
  return a.value;
}

NeuralNet random_dag(int n, int internal, double edge_prob, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, 0.8);
  std::bernoulli_distribution coin(edge_prob);
  NeuralNet net(n);
  std::vector<int> hidden;
  for (int i = 0; i < internal; ++i) {
    int v = net.add_vertex("h" + std::to_string(i));
    for (int u = 0; u <= n; ++u)
      if (coin(gen)) net.add_edge(u, v, normal(gen));
    for (int u : hidden)
      if (coin(gen)) net.add_edge(u, v, normal(gen));
    if (net.in_edges(v).empty()) net.add_edge(n, v, normal(gen));
    hidden.push_back(v);
  }
  int out = net.add_vertex("out");
  for (int u : hidden)
    if (coin(gen) || net.out_edges(u).empty()) net.add_edge(u, out, normal(gen));
  if (net.in_edges(out).empty()) net.add_edge(n, out, normal(gen));
  net.set_output(out);
  return net;
}

}  // namespace lab
