#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

namespace aerocrowd {

struct KrylovResult {
  int iterations = 0;
  double residual_inf = 0.0;  ///< max-norm of the true residual b - A x
  double rhs_inf = 0.0;       ///< max-norm of b
  bool converged = false;
};

namespace detail {

// Fixed-order sums keep results bit-reproducible across thread counts.
inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

inline double max_abs(std::span<const double> a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace detail

struct NoProjection {
  void operator()(std::span<double>) const {}
};

struct IdentityPreconditioner {
  void operator()(std::span<const double> r, std::span<double> z) const { std::copy(r.begin(), r.end(), z.begin()); }
};

/// Preconditioned conjugate gradients for a symmetric positive (semi-)definite
/// operator given matrix-free as apply(x, y): y = A x.
///
/// Converges when the max-norm of the true residual is at most
/// rel_tol * max|b|. `project` is applied to every residual and search
/// direction; for a singular operator it removes the null-space component so
/// the iteration stays on a consistent system. x holds the initial guess.
template <class Apply, class Precond = IdentityPreconditioner, class Project = NoProjection>
KrylovResult conjugate_gradient(Apply&& apply, std::span<const double> b, std::span<double> x, double rel_tol,
                                int max_iter, Precond&& precond = {}, Project&& project = {}) {
  const size_t n = b.size();
  KrylovResult result;
  result.rhs_inf = detail::max_abs(b);
  if (n == 0 || result.rhs_inf == 0.0) {
    std::fill(x.begin(), x.end(), 0.0);
    result.converged = true;
    return result;
  }
  const double target = rel_tol * result.rhs_inf;

  std::vector<double> r(n), z(n), p(n), q(n);
  auto true_residual = [&]() {
    apply(std::span<const double>(x.data(), n), std::span<double>(q));
    for (size_t k = 0; k < n; ++k) r[k] = b[k] - q[k];
    project(std::span<double>(r));
    return detail::max_abs(r);
  };

  result.residual_inf = true_residual();
  int it = 0;
  while (result.residual_inf > target && it < max_iter) {
    // (Re)start from the true residual; restarts only happen if the
    // recursive residual drifted below tolerance ahead of the true one.
    precond(std::span<const double>(r), std::span<double>(z));
    project(std::span<double>(z));
    std::copy(z.begin(), z.end(), p.begin());
    double rz = detail::dot(r, z);
    while (it < max_iter) {
      apply(std::span<const double>(p), std::span<double>(q));
      const double pq = detail::dot(p, q);
      if (!(pq > 0.0)) break;
      const double alpha = rz / pq;
      for (size_t k = 0; k < n; ++k) {
        x[k] += alpha * p[k];
        r[k] -= alpha * q[k];
      }
      project(std::span<double>(r));
      ++it;
      if (detail::max_abs(r) <= target) break;
      precond(std::span<const double>(r), std::span<double>(z));
      project(std::span<double>(z));
      const double rz_next = detail::dot(r, z);
      const double beta = rz_next / rz;
      rz = rz_next;
      for (size_t k = 0; k < n; ++k) p[k] = z[k] + beta * p[k];
    }
    const double previous = result.residual_inf;
    result.residual_inf = true_residual();
    if (result.residual_inf > target && result.residual_inf >= previous) break;  // stagnated
  }
  result.iterations = it;
  result.converged = result.residual_inf <= target;
  return result;
}

}  // namespace aerocrowd
