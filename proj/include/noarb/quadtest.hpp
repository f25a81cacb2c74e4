#pragma once

// Boundary behaviour of the scale-type integral v(f, g) and of the single
// integrals the price tests reduce to.
//
// Everything is computed in a ladder variable s >= 0 that reaches the boundary
// geometrically: z(s) = x0 +- w (2^s - 1) toward an infinite endpoint and
// z(s) = b -+ |b - x0| 2^-s toward a finite one. The ladder rungs are
// s_k = s_max^(k/K), so the cutoffs z(s_k) run out to ~1e300 (or to within
// ~1e-300 of a finite endpoint at 0).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "noarb/expr.hpp"
#include "noarb/model.hpp"
#include "noarb/quadrature.hpp"

namespace noarb {

enum class Boundary { Lower, Upper };
enum class Convergence { Divergent, Convergent, Undetermined };

inline const char* to_string(Boundary b) { return b == Boundary::Lower ? "lower" : "upper"; }
inline const char* to_string(Convergence c) {
  switch (c) {
    case Convergence::Divergent: return "Divergent";
    case Convergence::Convergent: return "Convergent";
    default: return "Undetermined";
  }
}

struct QuadOptions {
  int rungs = 24;
  double divergence_threshold = 1e6;
  double cauchy_tol = 1e-6;
  // Increment-ratio rule on the last three rungs.
  double ratio_tie = 1e-6;        // ratios >= 1 - tie: increments not shrinking
  double ratio_converge = 0.98;   // ratios <= this and not trending up: geometric tail
  double ratio_trend = 1e-3;
  double rel_tol = 1e-10;         // per-rung quadrature accuracy
  double v_rel_tol = 1e-9;        // v_value accuracy
};

struct LadderPoint {
  double s;
  double cutoff;
  double partial;
};

struct ExponentFit {
  double slope = std::numeric_limits<double>::quiet_NaN();
  double residual = std::numeric_limits<double>::quiet_NaN();
};

struct BoundaryVerdict {
  Convergence status = Convergence::Undetermined;
  Boundary boundary = Boundary::Upper;
  double estimate = 0.0;
  std::vector<LadderPoint> cutoffs;
  ExponentFit exponent_fit;
  std::string rule;        // which status rule fired
  std::string diagnostic;  // free text, always set for Undetermined
};

struct VTestResult {
  BoundaryVerdict at_upper;
  BoundaryVerdict at_lower;
  double x0_used = 0.0;
};

/// The pair (f, g) of v(f, g): drift ratio and positive scale function.
struct ScaleIntegrand {
  Expr f;
  Expr g;
  StateInterval interval;
};

// ---------------------------------------------------------------------------

/// Geometric reparametrization of [x0, boundary).
struct LadderMap {
  double x0 = 0.0;
  double end = 0.0;  // the boundary itself (possibly infinite)
  double dir = 1.0;  // +1 toward upper, -1 toward lower
  double w = 1.0;    // scale for infinite ends, |end - x0| for finite ones
  bool infinite = true;
  double s_max = 0.0;

  LadderMap(const StateInterval& iv, Boundary which) : x0(iv.x0) {
    dir = which == Boundary::Upper ? 1.0 : -1.0;
    end = which == Boundary::Upper ? iv.upper : iv.lower;
    infinite = !std::isfinite(end);
    if (infinite) {
      w = std::max(1.0, std::fabs(x0));
      s_max = std::log2(1e300 / w);
    } else {
      w = std::fabs(end - x0);
      const double floor_dist =
          std::max(1e-300, 64.0 * std::numeric_limits<double>::epsilon() * std::fabs(end));
      s_max = std::log2(w / floor_dist);
    }
  }

  double z(double s) const {
    return infinite ? x0 + dir * w * std::expm1(s * std::numbers::ln2)
                    : end - dir * w * std::exp2(-s);
  }
  /// |dz/ds|
  double rho(double s) const {
    return infinite ? w * std::numbers::ln2 * std::exp2(s) : w * std::numbers::ln2 * std::exp2(-s);
  }
  /// Inverse of z for x strictly between x0 and the boundary.
  double s_of(double x) const {
    return infinite ? std::log2(1.0 + std::fabs(x - x0) / w) : std::log2(w / std::fabs(end - x));
  }
  /// Distance measure used by the exponent fit.
  double distance(double s) const {
    return infinite ? std::fabs(z(s) - x0) : w * std::exp2(-s);
  }

  /// Pulls s_max back to the last point of a fine geometric scan at which
  /// `ok` still holds, so that no rung reaches where the integrand overflows
  /// or underflows in double precision.
  template <class Ok>
  void limit_to(Ok&& ok, int scan = 256) {
    double last_ok = 0.0;
    for (int i = 1; i <= scan; ++i) {
      const double s = std::pow(s_max, double(i) / scan);
      bool good;
      try {
        good = ok(s);
      } catch (const DomainError&) {
        good = false;
      }
      if (!good) break;
      last_ok = s;
    }
    if (last_ok > 0.0) s_max = last_ok;
  }

  std::vector<double> rungs(int k) const {
    std::vector<double> out;
    for (int i = 1; i <= k; ++i) out.push_back(std::pow(s_max, double(i) / k));
    return out;
  }
};

namespace detail {

inline ExponentFit fit_exponent(const std::vector<LadderPoint>& pts, const LadderMap& map) {
  std::vector<std::pair<double, double>> xy;
  for (const auto& p : pts)
    if (p.partial > 0.0 && std::isfinite(p.partial))
      xy.emplace_back(std::log(map.distance(p.s)), std::log(p.partial));
  ExponentFit fit;
  if (xy.size() < 2) return fit;
  double mx = 0, my = 0;
  for (auto [x, y] : xy) {
    mx += x;
    my += y;
  }
  mx /= xy.size();
  my /= xy.size();
  double sxx = 0, sxy = 0;
  for (auto [x, y] : xy) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
  }
  if (sxx == 0.0) return fit;
  fit.slope = sxy / sxx;
  double rss = 0;
  for (auto [x, y] : xy) {
    const double r = y - (my + fit.slope * (x - mx));
    rss += r * r;
  }
  fit.residual = std::sqrt(rss / xy.size());
  return fit;
}

// Applies the status rules to rung partials produced by `next(k)`, which
// returns the increment on rung k (may be +inf).
template <class Increment>
BoundaryVerdict classify_ladder(const LadderMap& map, Boundary which, const QuadOptions& opt,
                                Increment&& next) {
  BoundaryVerdict out;
  out.boundary = which;
  const auto s = map.rungs(opt.rungs);
  std::vector<double> inc;
  double partial = 0.0;
  bool monotone = true;
  for (std::size_t k = 0; k < s.size(); ++k) {
    double d;
    try {
      d = next(k == 0 ? 0.0 : s[k - 1], s[k]);
    } catch (const DomainError& e) {
      out.status = Convergence::Undetermined;
      out.rule = "evaluation-error";
      out.diagnostic = std::string("integrand not evaluable on rung ") + std::to_string(k + 1) +
                       ": " + e.what();
      out.estimate = partial;
      out.exponent_fit = fit_exponent(out.cutoffs, map);
      return out;
    } catch (const QuadratureFailure& e) {
      out.status = Convergence::Undetermined;
      out.rule = "quadrature-failure";
      out.diagnostic = std::string("rung ") + std::to_string(k + 1) + ": " + e.what();
      out.estimate = partial;
      out.exponent_fit = fit_exponent(out.cutoffs, map);
      return out;
    }
    if (std::isnan(d)) d = std::numeric_limits<double>::infinity();
    partial += d;
    if (d < -1e-9 * std::fabs(partial)) monotone = false;
    inc.push_back(d);
    out.cutoffs.push_back({s[k], map.z(s[k]), partial});
    if (monotone && partial >= opt.divergence_threshold) {
      out.status = Convergence::Divergent;
      out.rule = "threshold";
      out.estimate = partial;
      out.exponent_fit = fit_exponent(out.cutoffs, map);
      return out;
    }
  }
  out.estimate = partial;
  out.exponent_fit = fit_exponent(out.cutoffs, map);
  const std::size_t n = inc.size();

  bool cauchy = n >= 3;
  for (std::size_t k = n - 3; cauchy && k < n; ++k)
    cauchy = std::fabs(inc[k]) <= opt.cauchy_tol * std::fabs(out.cutoffs[k].partial);
  if (cauchy) {
    out.status = Convergence::Convergent;
    out.rule = "cauchy";
    return out;
  }

  if (monotone && n >= 4 && inc[n - 4] > 0.0 && inc[n - 3] > 0.0 && inc[n - 2] > 0.0 &&
      inc[n - 1] > 0.0) {
    const double r1 = inc[n - 3] / inc[n - 4];
    const double r2 = inc[n - 2] / inc[n - 3];
    const double r3 = inc[n - 1] / inc[n - 2];
    if (std::min({r1, r2, r3}) >= 1.0 - opt.ratio_tie) {
      out.status = Convergence::Divergent;
      out.rule = "increment-ratio";
      std::ostringstream os;
      os << "increments not shrinking on the last rungs (ratios " << r1 << ", " << r2 << ", " << r3
         << ")";
      out.diagnostic = os.str();
      return out;
    }
    if (std::max({r1, r2, r3}) <= opt.ratio_converge && r2 <= r1 + opt.ratio_trend &&
        r3 <= r2 + opt.ratio_trend) {
      out.status = Convergence::Convergent;
      out.rule = "increment-ratio";
      out.estimate = partial + inc[n - 1] * r3 / (1.0 - r3);
      std::ostringstream os;
      os << "geometric tail, ratios " << r1 << ", " << r2 << ", " << r3;
      out.diagnostic = os.str();
      return out;
    }
    std::ostringstream os;
    os << "tail ratios " << r1 << ", " << r2 << ", " << r3 << " decide neither way";
    out.diagnostic = os.str();
  } else {
    out.diagnostic = monotone ? "increments vanish or change sign near the boundary"
                              : "partial integrals are not monotone along the ladder";
  }
  out.status = Convergence::Undetermined;
  out.rule = "none";
  return out;
}

// ODE coefficients of v(f, g) along a ladder map.
struct ScaleOde {
  const ScaleIntegrand& si;
  const LadderMap& map;
  LinearCoefficients operator()(double s) const {
    const double z = map.z(s);
    const double rho = map.rho(s);
    const double g = si.g.eval(z);
    if (!(g > 0.0))
      throw DomainError(si.g.to_string(), z, "scale function must be positive");
    return {2.0 * map.dir * si.f.eval(z) * rho, 2.0 * rho / g, rho};
  }
};

}  // namespace detail

/// v(f, g)(x) for x in the interval, relative accuracy about opt.v_rel_tol.
inline double v_value(const ScaleIntegrand& si, double x, const QuadOptions& opt = {}) {
  if (!si.interval.contains(x)) throw std::invalid_argument("v_value: x outside the interval");
  if (x == si.interval.x0) return 0.0;
  const Boundary side = x > si.interval.x0 ? Boundary::Upper : Boundary::Lower;
  const LadderMap map(si.interval, side);
  RadauState st;
  RadauOptions ro;
  ro.rel_tol = opt.v_rel_tol * 0.1;
  radau_integrate(detail::ScaleOde{si, map}, st, map.s_of(x), ro);
  if (!std::isfinite(st.v)) throw QuadratureFailure("v_value: integral overflowed");
  return st.v;
}

/// Convergence of lim v(f, g)(x) at the chosen boundary.
inline BoundaryVerdict classify_boundary(const ScaleIntegrand& si, Boundary which,
                                         const QuadOptions& opt = {}) {
  LadderMap map(si.interval, which);
  map.limit_to([&](double s) {
    const double z = map.z(s), rho = map.rho(s);
    const double g = si.g.eval(z), f = si.f.eval(z);
    return std::isfinite(z) && std::isnormal(g) && g > 0.0 && std::isfinite(2.0 * rho / g) &&
           std::isfinite(2.0 * f * rho);
  });
  RadauState st;
  RadauOptions ro;
  ro.rel_tol = opt.rel_tol;
  const detail::ScaleOde ode{si, map};
  return detail::classify_ladder(map, which, opt, [&](double, double s_hi) {
    const double before = st.v;
    radau_integrate(ode, st, s_hi, ro);
    return st.v - before;
  });
}

/// Convergence of the single integral of h from x0 toward the boundary.
template <class H>
BoundaryVerdict classify_integral(H&& h, const StateInterval& iv, Boundary which,
                                  const QuadOptions& opt = {}) {
  LadderMap map(iv, which);
  auto phi = [&](double s) { return h(map.z(s)) * map.rho(s); };
  map.limit_to([&](double s) {
    const double hz = h(map.z(s));
    const double v = phi(s);
    return std::isfinite(v) && (hz == 0.0 || std::isnormal(hz));
  });
  return detail::classify_ladder(map, which, opt, [&](double s_lo, double s_hi) {
    const auto r = gauss_kronrod(phi, s_lo, s_hi, 1e-300, opt.rel_tol);
    if (!r.converged && std::isfinite(r.value))
      throw QuadratureFailure("single integral: tolerance not met on [" + std::to_string(s_lo) +
                              ", " + std::to_string(s_hi) + "]");
    return r.value;
  });
}

/// Both boundary limits of v(f, g).
inline VTestResult v_test(const ScaleIntegrand& si, const QuadOptions& opt = {}) {
  return {classify_boundary(si, Boundary::Upper, opt), classify_boundary(si, Boundary::Lower, opt),
          si.interval.x0};
}

/// The constant-drift-ratio case f = 1 toward an infinite upper endpoint,
/// where lim v(1, a) equals the single integral of 1/a.
inline BoundaryVerdict reduced_const_u_test(const Expr& a, const StateInterval& iv, Boundary which,
                                            const QuadOptions& opt = {}) {
  if (which != Boundary::Upper || std::isfinite(iv.upper))
    throw std::invalid_argument(
        "reduced test applies toward an infinite upper endpoint only");
  return classify_integral(
      [&](double z) {
        const double v = a.eval(z);
        if (!(v > 0.0)) throw DomainError(a.to_string(), z, "envelope must be positive");
        if (!std::isfinite(v)) throw DomainError(a.to_string(), z, "envelope overflows");
        return 1.0 / v;
      },
      iv, which, opt);
}

enum class PriceBoundary { Zero, Infinity };

inline const char* to_string(PriceBoundary b) { return b == PriceBoundary::Zero ? "zero" : "infinity"; }

/// Integral of z / sigma^2(z, j) from x0 toward 0 or infinity on (0, inf).
inline BoundaryVerdict feller_price_test(const SwitchingModel& m, std::size_t j, PriceBoundary which,
                                         const QuadOptions& opt = {}) {
  if (!m.interval.is_positive_half_line())
    throw std::invalid_argument("price test needs the state interval (0, inf)");
  if (j >= m.sigma.size()) throw std::out_of_range("regime index out of range");
  const Expr& sigma = m.sigma[j];
  return classify_integral(
      [&](double z) {
        const double s = sigma.eval(z);
        if (!std::isfinite(s) || s == 0.0)
          throw DomainError(sigma.to_string(), z, "volatility overflows or vanishes");
        return (z / s) / s;
      },
      m.interval, which == PriceBoundary::Zero ? Boundary::Lower : Boundary::Upper, opt);
}

/// (f, g) = ((b + c sigma)/sigma^2, sigma^2) for regime j; c defaults to -b/sigma.
inline ScaleIntegrand scale_integrand(const SwitchingModel& m, std::size_t j) {
  using namespace expr_ops;
  const auto c = effective_kernel(m);
  const Expr g = square(m.sigma[j]);
  Expr drift;
  if (c[j].structurally_equals(m.sigma[j]))
    drift = add(m.b[j], g);
  else
    drift = add(m.b[j], mul(c[j], m.sigma[j]));
  return {div(drift, g), g, m.interval};
}

inline VTestResult general_v_switching(const SwitchingModel& m, std::size_t j,
                                       const QuadOptions& opt = {}) {
  if (j >= m.sigma.size()) throw std::out_of_range("regime index out of range");
  return v_test(scale_integrand(m, j), opt);
}

/// CSV of the ladder: s, cutoff, partial.
inline std::string to_csv(const BoundaryVerdict& v) {
  std::ostringstream os;
  os.precision(17);
  os << "rung,s,cutoff,partial\n";
  for (std::size_t k = 0; k < v.cutoffs.size(); ++k)
    os << k + 1 << ',' << v.cutoffs[k].s << ',' << v.cutoffs[k].cutoff << ','
       << v.cutoffs[k].partial << '\n';
  return os.str();
}

}  // namespace noarb
