#pragma once

// Monte Carlo for switching diffusions: chain sampling, path simulation by
// concatenating frozen-regime SDE solutions, and estimators of E[Z_T].
//
// Paths are indexed; path i draws from PathRng(seed, i, stream) only, so every
// estimate is a function of (seed, n_paths, policy) and nothing else.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "noarb/model.hpp"
#include "noarb/parallel.hpp"
#include "noarb/rng.hpp"

namespace noarb {

// ---------------------------------------------------------------------------
// Regime chain.

struct RegimePath {
  std::vector<double> jump_times{0.0};  // gamma_0 = 0 < gamma_1 < ...
  std::vector<std::size_t> states;      // regime on [gamma_k, gamma_k+1)
  double horizon = 0.0;

  std::size_t jumps() const { return states.empty() ? 0 : states.size() - 1; }

  std::size_t regime_at(double t) const {
    auto it = std::upper_bound(jump_times.begin(), jump_times.end(), t);
    return states[static_cast<std::size_t>(it - jump_times.begin()) - 1];
  }
};

/// Gillespie sampling on [0, T]: Exp(-q_jj) holding times, next state with
/// probability q_ji / -q_jj.
inline RegimePath sample_chain(const QMatrix& q, std::size_t j0, double T, PathRng& rng) {
  if (!(T > 0.0)) throw std::invalid_argument("sample_chain: horizon must be positive");
  if (j0 >= q.size()) throw std::out_of_range("sample_chain: initial regime out of range");
  RegimePath p;
  p.horizon = T;
  p.states.push_back(j0);
  double t = 0.0;
  std::size_t j = j0;
  for (;;) {
    const double rate = -q(j, j);
    if (!(rate > 0.0)) break;
    t += rng.exponential(rate);
    if (t >= T) break;
    double u = rng.uniform() * rate;
    std::size_t next = j;
    for (std::size_t i = 0; i < q.size(); ++i) {
      if (i == j || q(j, i) <= 0.0) continue;
      next = i;
      u -= q(j, i);
      if (u < 0.0) break;
    }
    p.jump_times.push_back(t);
    p.states.push_back(next);
    j = next;
  }
  return p;
}

// ---------------------------------------------------------------------------
// Path simulation.

enum class Scheme { Euler, Milstein };

inline const char* to_string(Scheme s) { return s == Scheme::Euler ? "euler" : "milstein"; }

struct SimPolicy {
  double dt = 0.0;  // base step; 0 means T / 4096
  Scheme scheme = Scheme::Euler;
  // Substeps keep |b| h, sigma^2 h and c^2 h small against the local scale;
  // kappa = 0 switches them off (steps still split when they leave I).
  double kappa = 0.2;
  int depth = 40;  // deepest localization level
  double overflow = 1e12;
  int max_bisect = 48;

  double base_dt(double T) const { return dt > 0.0 ? dt : T / 4096.0; }
};

enum class PathStatus { Alive, Absorbed, Overflow };

inline const char* to_string(PathStatus s) {
  switch (s) {
    case PathStatus::Alive: return "alive";
    case PathStatus::Absorbed: return "absorbed";
    default: return "overflow";
  }
}

struct SamplePath {
  std::vector<double> grid;
  std::vector<double> values;
  std::vector<std::size_t> regimes;
  std::vector<double> z_values;
  RegimePath chain;
  PathStatus status = PathStatus::Alive;
  int absorbed_level = 0;  // level whose exit stopped the path
  double stop_time = 0.0;
};

namespace detail {

struct PathState {
  double x = 0.0;
  double logz = 0.0;
  double lo = 0.0, hi = 0.0;  // running extremes
  double t = 0.0;
  double w = 0.0;      // W_t
  double int_c = 0.0;  // int_0^t c ds
  PathStatus status = PathStatus::Alive;
  double stop_time = 0.0;
};

class Stepper {
 public:
  Stepper(const SwitchingModel& m, const SimPolicy& p) : iv_(m.interval), pol_(p) {
    const auto c = effective_kernel(m);
    for (std::size_t j = 0; j < m.n_regimes(); ++j) {
      const bool cz = c[j].is_number(0.0);
      coef_.push_back({m.b[j], m.sigma[j], c[j], m.b[j].is_number(0.0), cz});
    }
    const auto ladder = localization_ladder(m.interval, p.depth);
    lo_ = ladder.back().first;
    hi_ = ladder.back().second;
    log_overflow_ = std::log(p.overflow);
  }

  const StateInterval& interval() const { return iv_; }

  /// Advances over a step of length h with Brownian increment dw, splitting
  /// it by Brownian-bridge bisection when needed.
  void advance(PathState& s, std::size_t j, double h, double dw, PathRng& rng, int level = 0) const {
    const auto& k = coef_[j];
    const double x = s.x;
    const double sig = k.sigma.eval(x);
    const double b = k.b_zero ? 0.0 : k.b.eval(x);
    const double c = k.c_zero ? 0.0 : k.c.eval(x);
    const bool can_split = level < pol_.max_bisect;
    if (can_split && pol_.kappa > 0.0 && h > allowed(x, b, sig, c)) {
      split(s, j, h, dw, rng, level);
      return;
    }
    double xn = x + b * h + sig * dw;
    if (pol_.scheme == Scheme::Milstein) xn += 0.5 * sig * dsigma(k.sigma, x) * (dw * dw - h);
    if (!std::isfinite(xn) || !iv_.contains(xn)) {
      if (can_split) {
        split(s, j, h, dw, rng, level);
        return;
      }
      stop(s, PathStatus::Absorbed, h);
      return;
    }
    if (!k.c_zero) {
      s.logz += c * dw - 0.5 * c * c * h;
      s.int_c += c * h;
    }
    s.w += dw;
    s.x = xn;
    s.t += h;
    s.lo = std::min(s.lo, xn);
    s.hi = std::max(s.hi, xn);
    if (std::fabs(xn) > pol_.overflow || s.logz > log_overflow_)
      stop(s, PathStatus::Overflow, 0.0);
    else if (!(lo_ < xn && xn < hi_))
      stop(s, PathStatus::Absorbed, 0.0);
  }

 private:
  struct Coef {
    Expr b, sigma, c;
    bool b_zero, c_zero;
  };

  StateInterval iv_;
  SimPolicy pol_;
  std::vector<Coef> coef_;
  double lo_ = 0.0, hi_ = 0.0, log_overflow_ = 0.0;

  double allowed(double x, double b, double sig, double c) const {
    const double scale = std::min({x - iv_.lower, iv_.upper - x, std::max(1.0, std::fabs(x))});
    const double k = pol_.kappa;
    double h = std::numeric_limits<double>::infinity();
    if (sig != 0.0) h = std::min(h, k * k * scale * scale / (sig * sig));
    if (b != 0.0) h = std::min(h, k * scale / std::fabs(b));
    if (c != 0.0) h = std::min(h, k * k / (c * c));
    return h;
  }

  double dsigma(const Expr& sigma, double x) const {
    const double e = 1e-5 * std::max(1.0, std::fabs(x));
    const double up = iv_.contains(x + e) ? x + e : x;
    const double dn = iv_.contains(x - e) ? x - e : x;
    return (sigma.eval(up) - sigma.eval(dn)) / (up - dn);
  }

  void split(PathState& s, std::size_t j, double h, double dw, PathRng& rng, int level) const {
    const double half = 0.5 * h;
    const double w1 = 0.5 * dw + std::sqrt(0.25 * h) * rng.normal();
    advance(s, j, half, w1, rng, level + 1);
    if (s.status == PathStatus::Alive) advance(s, j, half, dw - w1, rng, level + 1);
  }

  static void stop(PathState& s, PathStatus st, double pending) {
    s.status = st;
    s.stop_time = s.t + pending;
  }
};

/// Runs one path on the base grid merged with the chain's jump times.
/// on_grid(t, x, regime, logz) is called at every grid point reached.
template <class OnGrid>
PathState run_path(const Stepper& st, const RegimePath& chain, double x0, double T, double dt,
                   PathRng& rng, OnGrid&& on_grid) {
  PathState s;
  s.x = s.lo = s.hi = x0;
  std::size_t next_jump = 1;
  std::size_t regime = chain.states.front();
  long k = 0;
  on_grid(0.0, x0, regime, 0.0);
  while (s.t < T && s.status == PathStatus::Alive) {
    const double tg = std::min(T, static_cast<double>(k + 1) * dt);
    const double tj = next_jump < chain.jump_times.size() ? chain.jump_times[next_jump]
                                                          : std::numeric_limits<double>::infinity();
    const double target = std::min(tg, tj);
    const double h = target - s.t;
    if (h > 0.0) st.advance(s, regime, h, std::sqrt(h) * rng.normal(), rng);
    if (s.status != PathStatus::Alive) break;
    s.t = target;  // drop rounding from the substeps
    if (target == tj) regime = chain.states[next_jump++];
    if (target == tg) ++k;
    on_grid(s.t, s.x, regime, s.logz);
  }
  if (s.status != PathStatus::Alive) on_grid(std::min(s.stop_time, T), s.x, regime, s.logz);
  return s;
}

}  // namespace detail

/// One path of (S, xi, Z) for a given regime path.
inline SamplePath simulate_switching_sde(const SwitchingModel& m, const RegimePath& chain,
                                         const SimPolicy& policy, PathRng& rng) {
  const double T = chain.horizon;
  detail::Stepper st(m, policy);
  SamplePath p;
  p.chain = chain;
  const auto s = detail::run_path(st, chain, m.interval.x0, T, policy.base_dt(T), rng,
                                  [&](double t, double x, std::size_t j, double logz) {
                                    p.grid.push_back(t);
                                    p.values.push_back(x);
                                    p.regimes.push_back(j);
                                    p.z_values.push_back(std::exp(logz));
                                  });
  p.status = s.status;
  p.stop_time = s.status == PathStatus::Alive ? T : s.stop_time;
  if (s.status == PathStatus::Absorbed) p.absorbed_level = policy.depth;
  return p;
}

/// Tilted dynamics under Q^n: drift b + c sigma, same sigma, c cleared to 0.
inline SwitchingModel girsanov_tilt(const SwitchingModel& m) {
  using namespace expr_ops;
  SwitchingModel out = m;
  const auto c = effective_kernel(m);
  const auto theta = market_price_of_risk(m);
  for (std::size_t j = 0; j < m.n_regimes(); ++j) {
    if (c[j].is_number(0.0)) continue;
    if (!m.c || c[j].structurally_equals(neg(theta[j])))
      out.b[j] = Expr::number(0.0);
    else if (c[j].structurally_equals(m.sigma[j]))
      out.b[j] = add(m.b[j], square(m.sigma[j]));
    else
      out.b[j] = add(m.b[j], mul(c[j], m.sigma[j]));
  }
  out.c = std::vector<Expr>(m.n_regimes(), Expr::number(0.0));
  return out;
}

// ---------------------------------------------------------------------------
// Estimators.

struct MCEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  double ci95_low = 0.0;
  double ci95_high = 0.0;
  std::size_t n_paths = 0;
  std::uint64_t seed = 0;
  std::string scheme;
  double dt = 0.0;
  std::size_t flagged = 0;  // paths stopped by absorption or overflow
  std::vector<std::string> warnings;

  std::pair<double, double> ci(double z) const { return {mean - z * std_error, mean + z * std_error}; }
};

/// Mean and standard error with index-order pairwise reductions.
inline MCEstimate summarize(std::span<const double> v) {
  MCEstimate e;
  e.n_paths = v.size();
  if (v.empty()) return e;
  const double n = static_cast<double>(v.size());
  e.mean = pairwise_sum(v) / n;
  if (v.size() > 1) {
    std::vector<double> dev(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) dev[i] = (v[i] - e.mean) * (v[i] - e.mean);
    e.std_error = std::sqrt(pairwise_sum(dev) / (n - 1.0) / n);
  }
  e.ci95_low = e.mean - 1.96 * e.std_error;
  e.ci95_high = e.mean + 1.96 * e.std_error;
  return e;
}

struct SimConfig {
  std::size_t n_paths = 10000;
  std::uint64_t seed = 1;
  unsigned workers = 1;
  SimPolicy policy;
};

namespace detail {

inline MCEstimate stamp(MCEstimate e, const SimConfig& cfg, double T) {
  e.seed = cfg.seed;
  e.scheme = to_string(cfg.policy.scheme);
  e.dt = cfg.policy.base_dt(T);
  return e;
}

/// Runs every path to T (no grid storage) and hands fn(i, chain, end state)
/// to the caller; fn may only write per-index storage.
template <class Fn>
void for_each_path(const SwitchingModel& m, double T, const SimConfig& cfg, Fn&& fn) {
  Stepper st(m, cfg.policy);
  const double dt = cfg.policy.base_dt(T);
  parallel_for(cfg.n_paths, cfg.workers, [&](std::size_t i) {
    PathRng crng(cfg.seed, i, PathRng::Chain);
    PathRng drng(cfg.seed, i, PathRng::Diffusion);
    const auto chain = sample_chain(m.q, m.regimes.initial, T, crng);
    const auto s = run_path(st, chain, m.interval.x0, T, dt, drng,
                            [](double, double, std::size_t, double) {});
    fn(i, chain, s);
  });
}

}  // namespace detail

/// E[Z_T] for Z = E(int c dW), simulating (S, xi, Z) jointly. A path stopped by
/// absorption at the deepest level or by overflow keeps its last Z value.
inline MCEstimate martingale_defect_direct(const SwitchingModel& m, double T, const SimConfig& cfg) {
  std::vector<double> z(cfg.n_paths);
  std::vector<unsigned char> flag(cfg.n_paths, 0);
  detail::for_each_path(m, T, cfg, [&](std::size_t i, const RegimePath&, const detail::PathState& s) {
    z[i] = std::exp(s.logz);
    flag[i] = s.status != PathStatus::Alive;
  });
  auto e = detail::stamp(summarize(z), cfg, T);
  for (auto f : flag) e.flagged += f;
  if (e.flagged * 100 > cfg.n_paths)
    e.warnings.push_back(std::to_string(e.flagged) + " of " + std::to_string(cfg.n_paths) +
                         " paths stopped early and keep their last Z");
  return e;
}

struct LevelSurvival {
  int level = 0;
  double lower = 0.0, upper = 0.0;
  std::size_t exits = 0;
  double survival = 0.0;
  double std_error = 0.0;
};

struct ExplosionStats {
  std::vector<LevelSurvival> levels;
  MCEstimate limit;  // survival at the deepest level: the duality estimate of E[Z_T]
  bool plateau = true;
  std::vector<std::string> warnings;
};

/// Q^n(tau_n > T) for every level n of the localization ladder, from paths of
/// the tilted model.
inline ExplosionStats explosion_probability(const SwitchingModel& tilted, double T, const SimConfig& cfg) {
  const int depth = cfg.policy.depth;
  const auto ladder = localization_ladder(tilted.interval, depth);
  std::vector<double> lo(cfg.n_paths), hi(cfg.n_paths);
  detail::for_each_path(tilted, T, cfg, [&](std::size_t i, const RegimePath&, const detail::PathState& s) {
    lo[i] = s.lo;
    hi[i] = s.hi;
    if (s.status != PathStatus::Alive) {
      // Stopped paths left the deepest level (or overflowed past it).
      lo[i] = std::min(lo[i], ladder.back().first);
      hi[i] = std::max(hi[i], ladder.back().second);
    }
  });
  ExplosionStats out;
  std::vector<double> ind(cfg.n_paths);
  for (int n = 1; n <= depth; ++n) {
    const auto [l, r] = ladder[static_cast<std::size_t>(n - 1)];
    for (std::size_t i = 0; i < cfg.n_paths; ++i) ind[i] = (l < lo[i] && hi[i] < r) ? 1.0 : 0.0;
    const auto e = summarize(ind);
    LevelSurvival lv;
    lv.level = n;
    lv.lower = l;
    lv.upper = r;
    lv.survival = e.mean;
    lv.std_error = e.std_error;
    lv.exits = cfg.n_paths - static_cast<std::size_t>(std::llround(e.mean * static_cast<double>(cfg.n_paths)));
    out.levels.push_back(lv);
    if (n == depth) out.limit = detail::stamp(e, cfg, T);
  }
  if (depth >= 2) {
    const auto& a = out.levels[static_cast<std::size_t>(depth - 2)];
    const auto& b = out.levels.back();
    if (std::fabs(b.survival - a.survival) > 2.0 * std::max(b.std_error, 1.0 / static_cast<double>(cfg.n_paths))) {
      out.plateau = false;
      out.warnings.push_back("survival has not levelled off by level " + std::to_string(depth));
    }
  }
  return out;
}

/// Simulates n paths in full (grid values kept); meant for dumps and functionals.
inline std::vector<SamplePath> simulate_paths(const SwitchingModel& m, double T, const SimConfig& cfg) {
  std::vector<SamplePath> out(cfg.n_paths);
  parallel_for(cfg.n_paths, cfg.workers, [&](std::size_t i) {
    PathRng crng(cfg.seed, i, PathRng::Chain);
    PathRng drng(cfg.seed, i, PathRng::Diffusion);
    const auto chain = sample_chain(m.q, m.regimes.initial, T, crng);
    out[i] = simulate_switching_sde(m, chain, cfg.policy, drng);
  });
  return out;
}

inline MCEstimate estimate_functional(const std::vector<SamplePath>& paths,
                                      const std::function<double(const SamplePath&)>& f) {
  std::vector<double> v(paths.size());
  for (std::size_t i = 0; i < paths.size(); ++i) v[i] = f(paths[i]);
  auto e = summarize(v);
  for (const auto& p : paths) e.flagged += p.status != PathStatus::Alive;
  return e;
}

/// Path dump: path_id, t, regime (1-based), state, z.
inline void write_paths_csv(std::ostream& os, const std::vector<SamplePath>& paths) {
  const auto old = os.precision(17);
  os << "path_id,t,regime,state,z\n";
  for (std::size_t i = 0; i < paths.size(); ++i) {
    const auto& p = paths[i];
    for (std::size_t k = 0; k < p.grid.size(); ++k)
      os << i << ',' << p.grid[k] << ',' << p.regimes[k] + 1 << ',' << p.values[k] << ','
         << p.z_values[k] << '\n';
  }
  os.precision(old);
}

struct BiasCheck {
  MCEstimate coarse;
  MCEstimate fine;
  bool flagged = false;  // estimates at dt and dt/2 differ by more than one stderr
};

/// Reruns the direct estimator at half the base step.
inline BiasCheck defect_bias_check(const SwitchingModel& m, double T, const SimConfig& cfg) {
  BiasCheck b;
  b.coarse = martingale_defect_direct(m, T, cfg);
  SimConfig half = cfg;
  half.policy.dt = 0.5 * cfg.policy.base_dt(T);
  b.fine = martingale_defect_direct(m, T, half);
  const double se = std::max(b.coarse.std_error, b.fine.std_error);
  b.flagged = std::fabs(b.coarse.mean - b.fine.mean) > se;
  return b;
}

}  // namespace noarb
