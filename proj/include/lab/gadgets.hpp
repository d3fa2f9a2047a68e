#ifndef LAB_GADGETS_HPP
#define LAB_GADGETS_HPP

#include <memory>
#include <stdexcept>
#include <vector>

#include "lab/circuit.hpp"
#include "lab/methods.hpp"
#include "lab/nn.hpp"

namespace lab {

class RegisterError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class GadgetVariant { Q, QPrime };

// Smallest K with 2^K >= 1/tau + 4 (room for the largest increment the gadget can record).
int register_width(double tau);

struct QueryGadget {
  GadgetVariant variant = GadgetVariant::Q;
  double tau = 0.0;
  int K = 0;
  int v0 = 0, v1 = 0, v2 = 0, v2p = 0, v3 = 0, v4 = 0, vc = 0;
  std::vector<int> reg;  // reg[i] reads digit 2^i
  int e01 = -1;          // memory edge v0 -> v1
  int e34 = -1;          // v3 -> v4
  std::vector<int> edges;
};

// Adds Q or Q' with v0 = constant and v4 = `output`; vc is created and left without in-edges.
QueryGadget build_query_gadget(NeuralNet& net, double tau, GadgetVariant variant, int output);

// Decodes the register (+2 -> 1, -2 -> 0); throws RegisterError on any other activation.
long read_register(const Activations& acts, const QueryGadget& g);
Bits register_bits(const Activations& acts, const QueryGadget& g);
// Input to v4 through v3 -> v4.
double gadget_contribution(const Activations& acts, const QueryGadget& g, const Eigen::VectorXd& w);

// Memory-lemma protocol on a single gadget: input x0 = 1 marks a queried sample (vc = 0).
enum class SampleRole { Idle, Agree, Mismatch };

struct MemoryHarness {
  std::shared_ptr<NetModel> model;
  QueryGadget gadget;
  double tau = 0.0;
  std::vector<int> gadget_edges;
};

MemoryHarness build_memory_harness(double tau, GadgetVariant variant);

struct MemoryTrial {
  long queries = 0;
  long mismatches = 0;
  long decoded = 0;
  double expected = 0.0;  // mismatches/(b tau) + 2 queries / b
  bool within_bound = false;
  std::vector<long> changed_steps;  // steps (1-based) in which some gadget edge moved
  long off_step_changes = 0;
  bool contribution_exact = true;   // +-1/24 on every queried sample of the query step
  bool output_exact = true;         // net output -2tau (Q) / 1+2tau (Q') on queried samples
};

// Runs idle steps, one query step with `pattern`, then idle steps, under the given rounding.
MemoryTrial run_memory_trial(const MemoryHarness& h, const std::vector<SampleRole>& pattern,
                             RoundingStrategy rounding, std::uint64_t seed, long idle_before = 1,
                             long idle_after = 1);

// A bSQ^{0/1} method given by circuits. Round t (1-based) issues p {0,1}-valued queries;
// odd rounds are 1-queries y*phi(x), even rounds 0-queries (1-y)*phi(x).
// queries[t-1][j] reads [x (n bits), bits of all answers of rounds < t (K bits each, LSB first)].
// final reads [x, bits of all T*p answers]. An answer v is stored as m = round(v / rho).
struct CircuitProgram {
  std::string name;
  int n = 0;
  long T = 0;
  int p = 1;
  double rho = 0.0;
  std::vector<std::vector<Circuit>> queries;
  Circuit final;

  int K() const { return register_width(rho); }
  double tau() const { return 4.0 * rho; }
  Bits answer_bits(double v) const;
  std::shared_ptr<const QueryProgram> as_program() const;
};

// T=1, p=1: queries y; predicts 1 iff the answer register is at least `threshold`.
CircuitProgram constant_query_program(int n, double rho, long threshold);
// T=2, p=1: 1-query y, then 0-query 1-y; predicts 1 iff the first answer is larger.
CircuitProgram majority_vote_circuit_program(int n, double rho);

struct EmulationNet {
  std::shared_ptr<NetModel> model;
  CircuitProgram program;
  CircuitGadget computation;
  std::vector<QueryGadget> clocks;                // one per round
  std::vector<std::vector<QueryGadget>> queries;  // [t][j]
  std::vector<int> control_edges;                 // edges into the output from control vertices
  int final_edge = -1;

  // Answers m*rho read from the registers of w.
  std::vector<Eigen::VectorXd> answers(const Eigen::VectorXd& w) const;
  Predictor predictor(const Eigen::VectorXd& w) const;
};

// Requires rho < 1/12. Train with bSGD, gamma = 2, grid rho.
EmulationNet build_emulation_net(const CircuitProgram& prog);

}  // namespace lab

#endif
