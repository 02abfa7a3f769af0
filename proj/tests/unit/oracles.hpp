#pragma once

// Independent reference computations used by the unit tests.

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include <torch/torch.h>

namespace oracle {

inline double log_sigmoid(double t) { return t >= 0 ? -std::log1p(std::exp(-t)) : t - std::log1p(std::exp(t)); }

/// sup_T E_P log s(T) + E_Q log(1 - s(T)) = 2 JSD(P, Q) - log 4, with P the
/// rho-correlated standard bivariate normal and Q the product of marginals.
/// Midpoint rule on [-L, L]^2.
inline double optimal_jsd_bound_gaussian(double rho, double half_width = 7.0, int n = 700) {
  const double h = 2.0 * half_width / n;
  const double s2 = 1.0 - rho * rho;
  const double norm_p = 1.0 / (2.0 * M_PI * std::sqrt(s2));
  const double norm_q = 1.0 / (2.0 * M_PI);
  double jsd = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = -half_width + (i + 0.5) * h;
    for (int j = 0; j < n; ++j) {
      const double y = -half_width + (j + 0.5) * h;
      const double p = norm_p * std::exp(-(x * x - 2 * rho * x * y + y * y) / (2 * s2));
      const double q = norm_q * std::exp(-(x * x + y * y) / 2);
      const double m = 0.5 * (p + q);
      if (p > 0) jsd += 0.5 * p * std::log(p / m);
      if (q > 0) jsd += 0.5 * q * std::log(q / m);
    }
  }
  jsd *= h * h;
  return 2.0 * jsd - std::log(4.0);
}

/// dL/dtheta by central differences, for every scalar of every parameter.
inline std::vector<double> finite_difference_gradient(std::vector<torch::Tensor> params,
                                                      const std::function<double()>& loss,
                                                      double eps = 1e-6) {
  std::vector<double> grad;
  torch::NoGradGuard no_grad;
  for (auto& p : params) {
    auto flat = p.view({-1});
    for (std::int64_t i = 0; i < flat.size(0); ++i) {
      const double old = flat[i].item<double>();
      flat[i] = old + eps;
      const double up = loss();
      flat[i] = old - eps;
      const double down = loss();
      flat[i] = old;
      grad.push_back((up - down) / (2 * eps));
    }
  }
  return grad;
}

inline std::vector<double> flatten_grads(const std::vector<torch::Tensor>& params) {
  std::vector<double> out;
  for (const auto& p : params) {
    auto g = p.grad().defined() ? p.grad().reshape({-1}) : torch::zeros({p.numel()}, torch::kDouble);
    for (std::int64_t i = 0; i < g.size(0); ++i) out.push_back(g[i].item<double>());
  }
  return out;
}

/// max_i |a_i - b_i| / max(|b|_inf, tiny)
inline double max_relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double scale = 1e-12;
  for (double v : b) scale = std::max(scale, std::abs(v));
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  return worst;
}

}  // namespace oracle
