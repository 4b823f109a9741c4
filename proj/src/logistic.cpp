#include "leafdistill/logistic.hpp"

#include <cmath>

#include "leafdistill/error.hpp"

namespace leafdistill {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

namespace {

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

// In-place Cholesky solve of the SPD system a * x = b (a is m x m, row-major).
// Returns false if a is not numerically positive definite.
bool cholesky_solve(std::vector<double> a, std::vector<double>& b, std::size_t m) {
  for (std::size_t j = 0; j < m; ++j) {
    double d = a[j * m + j];
    for (std::size_t k = 0; k < j; ++k) d -= a[j * m + k] * a[j * m + k];
    if (!(d > 0.0)) return false;
    const double l = std::sqrt(d);
    a[j * m + j] = l;
    for (std::size_t i = j + 1; i < m; ++i) {
      double s = a[i * m + j];
      for (std::size_t k = 0; k < j; ++k) s -= a[i * m + k] * a[j * m + k];
      a[i * m + j] = s / l;
    }
  }
  for (std::size_t i = 0; i < m; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= a[i * m + k] * b[k];
    b[i] = s / a[i * m + i];
  }
  for (std::size_t i = m; i-- > 0;) {
    double s = b[i];
    for (std::size_t k = i + 1; k < m; ++k) s -= a[k * m + i] * b[k];
    b[i] = s / a[i * m + i];
  }
  return true;
}

}  // namespace

void LogisticRegression::fit(const Matrix& x, std::span<const Label> y, const LogisticOptions& options) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  if (n == 0 || y.size() != n) throw ArgumentError("logistic regression: empty input or label length mismatch");
  const std::size_t m = d + 1;  // weights then bias
  std::vector<double> theta(m, 0.0);
  const double inv_n = 1.0 / static_cast<double>(n);

  auto objective = [&](const std::vector<double>& t) {
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      auto xi = x.row(i);
      double z = t[d];
      for (std::size_t j = 0; j < d; ++j) z += t[j] * xi[j];
      loss += softplus(z) - (y[i] ? z : 0.0);
    }
    double reg = 0.0;
    for (std::size_t j = 0; j < d; ++j) reg += t[j] * t[j];
    return loss * inv_n + 0.5 * options.l2 * reg;
  };

  std::vector<double> grad(m), hess(m * m);
  converged_ = false;
  iterations_ = 0;
  for (std::size_t iter = 0; iter < options.max_iters; ++iter) {
    std::fill(grad.begin(), grad.end(), 0.0);
    std::fill(hess.begin(), hess.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      auto xi = x.row(i);
      double z = theta[d];
      for (std::size_t j = 0; j < d; ++j) z += theta[j] * xi[j];
      const double p = sigmoid(z);
      const double r = p - (y[i] ? 1.0 : 0.0);
      const double w = p * (1.0 - p);
      for (std::size_t a = 0; a < m; ++a) {
        const double xa = a < d ? xi[a] : 1.0;
        grad[a] += r * xa;
        for (std::size_t b = 0; b <= a; ++b) hess[a * m + b] += w * xa * (b < d ? xi[b] : 1.0);
      }
    }
    for (std::size_t a = 0; a < m; ++a) {
      grad[a] *= inv_n;
      if (a < d) grad[a] += options.l2 * theta[a];
      for (std::size_t b = 0; b <= a; ++b) {
        hess[a * m + b] *= inv_n;
        hess[b * m + a] = hess[a * m + b];
      }
      if (a < d) hess[a * m + a] += options.l2;
    }
    double gnorm = 0.0;
    for (double g : grad) gnorm += g * g;
    gradient_norm_ = std::sqrt(gnorm);
    iterations_ = iter;
    if (gradient_norm_ < options.gradient_tol) {
      converged_ = true;
      break;
    }

    std::vector<double> step = grad;
    double jitter = 0.0;
    while (!cholesky_solve(hess, step, m)) {
      jitter = jitter == 0.0 ? 1e-10 : jitter * 10.0;
      if (jitter > 1.0) throw InternalError("logistic regression: Hessian is not positive definite");
      step = grad;
      for (std::size_t a = 0; a < m; ++a) hess[a * m + a] += jitter;
    }

    // Armijo backtracking on the Newton direction.
    const double f0 = objective(theta);
    double slope = 0.0;
    for (std::size_t a = 0; a < m; ++a) slope += grad[a] * step[a];
    double t = 1.0;
    std::vector<double> trial(m);
    for (int ls = 0; ls < 60; ++ls) {
      for (std::size_t a = 0; a < m; ++a) trial[a] = theta[a] - t * step[a];
      if (objective(trial) <= f0 - 1e-4 * t * slope) break;
      t *= 0.5;
    }
    theta = trial;
    iterations_ = iter + 1;
  }
  weights_.assign(theta.begin(), theta.begin() + static_cast<std::ptrdiff_t>(d));
  bias_ = theta[d];
}

double LogisticRegression::decision(std::span<const double> x) const {
  if (x.size() != weights_.size()) throw ArgumentError("logistic regression: feature count mismatch");
  double z = bias_;
  for (std::size_t j = 0; j < x.size(); ++j) z += weights_[j] * x[j];
  return z;
}

double LogisticRegression::predict_proba(std::span<const double> x) const { return sigmoid(decision(x)); }

std::vector<double> LogisticRegression::predict_proba(const Matrix& xs) const {
  std::vector<double> out(xs.rows());
  for (std::size_t i = 0; i < xs.rows(); ++i) out[i] = predict_proba(xs.row(i));
  return out;
}

}  // namespace leafdistill
