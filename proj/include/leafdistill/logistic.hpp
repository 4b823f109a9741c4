#pragma once

#include <string>
#include <vector>

#include "leafdistill/data.hpp"

namespace leafdistill {

struct LogisticOptions {
  double l2 = 1e-4;            // penalty (l2 / 2) * ||w||^2; the bias is not penalized
  double gradient_tol = 1e-8;  // stop when ||grad||_2 of the mean objective falls below this
  std::size_t max_iters = 200;
};

// Binary logistic regression fitted by full-batch damped Newton steps.
// Deterministic: no sampling, no data-order dependence beyond summation order.
class LogisticRegression {
 public:
  LogisticRegression() = default;
  LogisticRegression(std::vector<double> weights, double bias) : weights_(std::move(weights)), bias_(bias) {}

  void fit(const Matrix& x, std::span<const Label> y, const LogisticOptions& options = {});

  double decision(std::span<const double> x) const;
  double predict_proba(std::span<const double> x) const;
  std::vector<double> predict_proba(const Matrix& xs) const;

  const std::vector<double>& weights() const noexcept { return weights_; }
  double bias() const noexcept { return bias_; }
  std::size_t iterations() const noexcept { return iterations_; }
  double gradient_norm() const noexcept { return gradient_norm_; }
  bool converged() const noexcept { return converged_; }

 private:
  std::vector<double> weights_;
  double bias_ = 0.0;
  std::size_t iterations_ = 0;
  double gradient_norm_ = 0.0;
  bool converged_ = false;
};

double sigmoid(double z);

}  // namespace leafdistill
