#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "orion/error.hpp"

namespace orion {

// p(x) = sum c[j] T_j(x) on [-1, 1].
struct ChebPoly {
  std::vector<double> coeffs;
  double sup_error = 0.0;  // measured against the fitted function, 0 if exact/unknown

  int degree() const { return static_cast<int>(coeffs.size()) - 1; }

  // Clenshaw. Sign-symmetric in floating point: an odd coefficient vector
  // gives p(-x) == -p(x) bit for bit.
  double operator()(double x) const {
    double b1 = 0.0, b2 = 0.0;
    for (int k = degree(); k >= 1; --k) {
      const double b0 = 2.0 * x * b1 - b2 + coeffs[static_cast<std::size_t>(k)];
      b2 = b1;
      b1 = b0;
    }
    return x * b1 - b2 + coeffs[0];
  }
};

// Levels a balanced power tree consumes for this degree.
inline int poly_depth(int degree) {
  int d = 0;
  while ((1L << d) < degree + 1) ++d;
  return d;
}

inline double grid_sup_error(const std::function<double(double)>& f, const ChebPoly& p, int points = 10001) {
  double worst = 0.0;
  for (int i = 0; i < points; ++i) {
    const double x = -1.0 + 2.0 * i / (points - 1);
    worst = std::max(worst, std::abs(p(x) - f(x)));
  }
  return worst;
}

// Interpolation at the degree+1 Chebyshev points of the first kind.
inline ChebPoly chebyshev_fit(const std::function<double(double)>& f, int degree) {
  if (degree < 1) throw Error(Errc::InvalidArgument, "Chebyshev degree must be at least 1");
  const int n = degree + 1;
  std::vector<double> fx(static_cast<std::size_t>(n)), theta(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    theta[static_cast<std::size_t>(k)] = M_PI * (k + 0.5) / n;
    fx[static_cast<std::size_t>(k)] = f(std::cos(theta[static_cast<std::size_t>(k)]));
    if (!std::isfinite(fx[static_cast<std::size_t>(k)]))
      throw Error(Errc::NonFinite, "function is not finite at x = " + std::to_string(std::cos(theta[static_cast<std::size_t>(k)])));
  }
  ChebPoly p;
  p.coeffs.assign(static_cast<std::size_t>(n), 0.0);
  for (int j = 0; j < n; ++j) {
    double acc = 0.0;
    for (int k = 0; k < n; ++k) acc += fx[static_cast<std::size_t>(k)] * std::cos(j * theta[static_cast<std::size_t>(k)]);
    p.coeffs[static_cast<std::size_t>(j)] = (j == 0 ? 1.0 : 2.0) * acc / n;
  }
  p.sup_error = grid_sup_error(f, p);
  return p;
}

// Horner in the Chebyshev basis using x T_j = (T_{j+1} + T_{|j-1|}) / 2.
// Parity is preserved exactly: coefficients of the other parity stay 0.
inline ChebPoly monomial_to_chebyshev(const std::vector<double>& a) {
  if (a.empty()) throw Error(Errc::InvalidArgument, "empty polynomial");
  std::vector<double> r{a.back()};
  for (int k = static_cast<int>(a.size()) - 2; k >= 0; --k) {
    std::vector<double> next(r.size() + 1, 0.0);
    for (std::size_t j = 0; j < r.size(); ++j) {
      if (j == 0) {
        next[1] += r[0];
      } else {
        next[j + 1] += 0.5 * r[j];
        next[j - 1] += 0.5 * r[j];
      }
    }
    next[0] += a[static_cast<std::size_t>(k)];
    r = std::move(next);
  }
  return ChebPoly{std::move(r), 0.0};
}

// Odd refinement polynomial f_n(x) = sum_{i<=n} binom(2i,i)/4^i x (1-x^2)^i,
// degree 2n+1, monomial coefficients.
inline std::vector<double> sign_refinement_monomial(int n) {
  std::vector<double> a(static_cast<std::size_t>(2 * n + 2), 0.0);
  double ci = 1.0;  // binom(2i,i)/4^i
  for (int i = 0; i <= n; ++i) {
    if (i > 0) ci *= (2.0 * i - 1.0) / (2.0 * i);
    double binom = 1.0;  // binom(i, t)
    for (int t = 0; t <= i; ++t) {
      a[static_cast<std::size_t>(2 * t + 1)] += ci * binom * ((t % 2) ? -1.0 : 1.0);
      binom = binom * (i - t) / (t + 1);
    }
  }
  return a;
}

struct SignComposite {
  std::vector<ChebPoly> stages;
  double tau = 1.0 / 1024.0;
  double delta = 1.0;      // smallest measured x with |p(y) - 1| <= tau for all y in [x, 1]
  double sup_error = 0.0;  // max |p(x) - sign(x)| over delta <= |x| <= 1

  double operator()(double x) const {
    for (const auto& s : stages) x = s(x);
    return x;
  }
};

inline void measure_composite(SignComposite& c, int points = 100001) {
  c.delta = 1.0;
  c.sup_error = 0.0;
  double worst_tail = 0.0;
  // walk down from 1 while the composite stays within tau of 1
  for (int i = points - 1; i >= 1; --i) {
    const double x = static_cast<double>(i) / (points - 1);
    const double err = std::abs(c(x) - 1.0);
    if (err > c.tau) break;
    c.delta = x;
    worst_tail = std::max(worst_tail, err);
  }
  c.sup_error = worst_tail;
}

inline void check_odd_degrees(const std::vector<int>& degrees) {
  if (degrees.empty()) throw Error(Errc::InvalidArgument, "sign composite needs at least one stage");
  for (int d : degrees)
    if (d < 1 || d % 2 == 0)
      throw Error(Errc::InvalidArgument, "sign stage degree " + std::to_string(d) + " is not odd");
}

// Builtin default: stage i is f_{(d_i - 1)/2}.
inline SignComposite sign_composite(const std::vector<int>& degrees = {15, 15, 27}, double tau = 1.0 / 1024.0) {
  check_odd_degrees(degrees);
  SignComposite c;
  c.tau = tau;
  for (int d : degrees) c.stages.push_back(monomial_to_chebyshev(sign_refinement_monomial((d - 1) / 2)));
  measure_composite(c);
  return c;
}

// {"stages": [[c0, c1, ...], ...]} in the Chebyshev basis.
inline SignComposite sign_composite_from_json(const nlohmann::json& j, double tau = 1.0 / 1024.0) {
  SignComposite c;
  c.tau = tau;
  std::vector<int> degrees;
  try {
    for (const auto& s : j.at("stages")) {
      ChebPoly p{s.get<std::vector<double>>(), 0.0};
      degrees.push_back(p.degree());
      c.stages.push_back(std::move(p));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::Format, std::string("sign composite: ") + e.what());
  }
  check_odd_degrees(degrees);
  for (auto& s : c.stages)
    for (std::size_t k = 0; k < s.coeffs.size(); k += 2)
      if (s.coeffs[k] != 0.0) throw Error(Errc::InvalidArgument, "sign stage has a nonzero even coefficient");
  measure_composite(c);
  return c;
}

}  // namespace orion
