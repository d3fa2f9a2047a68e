#ifndef LAB_PAYLOADS_HPP
#define LAB_PAYLOADS_HPP

#include <optional>

#include "lab/methods.hpp"

namespace lab {

// Solves <a,x> xor c = y over GF(2); free variables are set to 0. nullopt when inconsistent.
std::optional<Predictor> solve_parity(const std::vector<Example>& samples, int n);

PacLearner parity_learner(int n, long m);
PacLearner constant_learner(int n, long m, int value);
PacLearner majority_learner(int n, long m);

// SQ(k=n): correlation of (2y-1) with each (2x_j-1); predicts the best signed coordinate.
std::shared_ptr<const QueryProgram> dictator_program(int n);
// Two alternating rounds: 1-query y, then 0-query (1-y); predicts the majority label.
std::shared_ptr<const QueryProgram> majority_vote_program(int n);

// f_w(x) = w_1 with w initialized to 0: the clipped loss gradient is -y at w = 0.
std::shared_ptr<const DiffModel> identity_model();

}  // namespace lab

#endif
