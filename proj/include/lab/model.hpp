#ifndef LAB_MODEL_HPP
#define LAB_MODEL_HPP

#include <stdexcept>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "lab/rng.hpp"

namespace lab {

using SparseGrad = Eigen::SparseVector<double>;

class NonDifferentiable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// f : R^p x {0,1}^n -> R with an initialization {0,1}^r -> R^p.
class DiffModel {
 public:
  virtual ~DiffModel() = default;
  virtual long dimension() const = 0;
  virtual long random_bits() const { return 0; }
  virtual Eigen::VectorXd initialize(const Bits& R) const = 0;
  virtual double evaluate(const Eigen::VectorXd& w, const Bits& x) const = 0;
  // Value and gradient of f_w(x) with respect to w; throws NonDifferentiable.
  virtual double differentiate(const Eigen::VectorXd& w, const Bits& x, SparseGrad& grad) const = 0;
};

}  // namespace lab

#endif
