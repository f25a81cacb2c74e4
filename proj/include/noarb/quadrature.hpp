#pragma once

// Adaptive Gauss-Kronrod (7/15) and a Radau IIA integrator for the linear
// system  H' = q(s) - lambda(s) H,  v' = rho(s) H  used by the scale integral.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

namespace noarb {

class QuadratureFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct QuadResult {
  double value = 0.0;
  double abs_error = 0.0;
  int intervals = 0;
  bool converged = true;
};

namespace detail {

inline constexpr std::array<double, 8> kXgk{
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0};
inline constexpr std::array<double, 8> kWgk{
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> kWg{
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Panel {
  double a, b, value, error;
  bool operator<(const Panel& o) const { return error < o.error; }
};

template <class F>
Panel gk15(F& f, double a, double b) {
  const double c = 0.5 * (a + b), h = 0.5 * (b - a);
  const double fc = f(c);
  double k = fc * kWgk[7], g = fc * kWg[3];
  for (int i = 0; i < 7; ++i) {
    const double dx = h * kXgk[static_cast<std::size_t>(i)];
    const double s = f(c - dx) + f(c + dx);
    k += kWgk[static_cast<std::size_t>(i)] * s;
    if (i % 2 == 1) g += kWg[static_cast<std::size_t>(i / 2)] * s;
  }
  k *= h;
  g *= h;
  return {a, b, k, std::fabs(k - g)};
}

}  // namespace detail

/// Adaptive G7K15 on [a, b]; bisects the panel with the largest error until
/// the total error is below max(abs_tol, rel_tol*|I|). A non-finite panel value
/// stops refinement and is returned as is (callers treat it as divergence).
template <class F>
QuadResult gauss_kronrod(F&& f, double a, double b, double abs_tol = 1e-12, double rel_tol = 1e-10,
                         int max_intervals = 2000) {
  QuadResult out;
  if (a == b) return out;
  std::priority_queue<detail::Panel> heap;
  heap.push(detail::gk15(f, a, b));
  double total = heap.top().value, err = heap.top().error;
  out.intervals = 1;
  while (std::isfinite(total) && err > std::max(abs_tol, rel_tol * std::fabs(total))) {
    if (out.intervals >= max_intervals) {
      out.converged = false;
      break;
    }
    const detail::Panel p = heap.top();
    heap.pop();
    const double m = 0.5 * (p.a + p.b);
    if (!(p.a < m && m < p.b)) {  // panel no longer splittable
      out.converged = false;
      heap.push(p);
      break;
    }
    const auto l = detail::gk15(f, p.a, m);
    const auto r = detail::gk15(f, m, p.b);
    heap.push(l);
    heap.push(r);
    ++out.intervals;
    // Re-sum from the heap to avoid drift from repeated subtraction.
    total = 0.0;
    err = 0.0;
    auto copy = heap;
    while (!copy.empty()) {
      total += copy.top().value;
      err += copy.top().error;
      copy.pop();
    }
  }
  out.value = total;
  out.abs_error = err;
  return out;
}

// ---------------------------------------------------------------------------
// Radau IIA (3 stages, order 5) for  H' = q - lambda H,  v' = rho H.

struct LinearCoefficients {
  double lambda, q, rho;
};

struct RadauState {
  double s = 0.0;
  double h = 0.0;  // H
  double v = 0.0;
};

struct RadauOptions {
  double rel_tol = 1e-10;
  long max_steps = 200000;
};

namespace detail {

inline const double kSqrt6 = std::sqrt(6.0);
inline const std::array<double, 3> kRadauC{(4.0 - kSqrt6) / 10.0, (4.0 + kSqrt6) / 10.0, 1.0};
inline const std::array<std::array<double, 3>, 3> kRadauA{{
    {(88.0 - 7.0 * kSqrt6) / 360.0, (296.0 - 169.0 * kSqrt6) / 1800.0, (-2.0 + 3.0 * kSqrt6) / 225.0},
    {(296.0 + 169.0 * kSqrt6) / 1800.0, (88.0 + 7.0 * kSqrt6) / 360.0, (-2.0 - 3.0 * kSqrt6) / 225.0},
    {(16.0 - kSqrt6) / 36.0, (16.0 + kSqrt6) / 36.0, 1.0 / 9.0},
}};

// One Radau step of length dt from (H0, v0); returns (H1, dv).
template <class Coef>
std::pair<double, double> radau_step(Coef& coef, double s0, double dt, double H0) {
  std::array<LinearCoefficients, 3> k;
  for (std::size_t i = 0; i < 3; ++i) k[i] = coef(s0 + kRadauC[i] * dt);
  // (I + dt A diag(lambda)) Y = H0 + dt A q
  double m[3][4];
  for (std::size_t i = 0; i < 3; ++i) {
    double rhs = H0;
    for (std::size_t j = 0; j < 3; ++j) {
      m[i][j] = (i == j ? 1.0 : 0.0) + dt * kRadauA[i][j] * k[j].lambda;
      rhs += dt * kRadauA[i][j] * k[j].q;
    }
    m[i][3] = rhs;
  }
  for (int col = 0; col < 3; ++col) {
    int piv = col;
    for (int r = col + 1; r < 3; ++r)
      if (std::fabs(m[r][col]) > std::fabs(m[piv][col])) piv = r;
    if (piv != col)
      for (int c = 0; c < 4; ++c) std::swap(m[col][c], m[piv][c]);
    for (int r = col + 1; r < 3; ++r) {
      const double f = m[r][col] / m[col][col];
      for (int c = col; c < 4; ++c) m[r][c] -= f * m[col][c];
    }
  }
  double y[3];
  for (int r = 2; r >= 0; --r) {
    double acc = m[r][3];
    for (int c = r + 1; c < 3; ++c) acc -= m[r][c] * y[c];
    y[r] = acc / m[r][r];
  }
  double dv = 0.0;
  for (std::size_t j = 0; j < 3; ++j) dv += kRadauA[2][j] * k[j].rho * y[j];
  return {y[2], dt * dv};
}

}  // namespace detail

/// Integrates from st.s to s_end with step doubling error control. Non-finite
/// values end the integration early with st.v = +inf. Throws
/// QuadratureFailure when the step budget is exhausted or the step collapses.
template <class Coef>
void radau_integrate(Coef&& coef, RadauState& st, double s_end, const RadauOptions& opt = {}) {
  double dt = std::max((s_end - st.s) / 8.0, 1e-6);
  long steps = 0;
  while (st.s < s_end) {
    if (++steps > opt.max_steps) throw QuadratureFailure("scale integral: step budget exhausted");
    dt = std::min(dt, s_end - st.s);
    const auto [h_full, dv_full] = detail::radau_step(coef, st.s, dt, st.h);
    const auto [h_half, dv_half] = detail::radau_step(coef, st.s, 0.5 * dt, st.h);
    const auto [h_two, dv_two] = detail::radau_step(coef, st.s + 0.5 * dt, 0.5 * dt, h_half);
    const double dv2 = dv_half + dv_two;
    if (!std::isfinite(h_two) || !std::isfinite(dv2) || !std::isfinite(st.v + dv2)) {
      if (dt > 1e-9 * std::max(1.0, std::fabs(st.s))) {
        dt *= 0.25;
        continue;
      }
      st.v = std::numeric_limits<double>::infinity();
      st.s = s_end;
      return;
    }
    const double tiny = 1e-300;
    const double err_h = std::fabs(h_two - h_full) / (std::fabs(h_two) + tiny);
    const double err_v =
        std::fabs(dv2 - dv_full) / (std::fabs(dv2) + 1e-14 * std::fabs(st.v) + tiny);
    const double err = std::max(err_h, err_v) / opt.rel_tol;
    if (err <= 1.0) {
      st.s += dt;
      // Richardson-style: keep the two half steps.
      st.h = h_two;
      st.v += dv2;
      dt *= std::min(4.0, std::max(1.0, 0.9 * std::pow(std::max(err, 1e-12), -1.0 / 6.0)));
    } else {
      const double shrink = std::max(0.1, 0.9 * std::pow(err, -1.0 / 6.0));
      dt *= shrink;
      if (dt < 1e-13 * std::max(1.0, std::fabs(st.s)))
        throw QuadratureFailure("scale integral: step size collapsed at s=" + std::to_string(st.s));
    }
  }
}

}  // namespace noarb
