#pragma once

// Changes of measure on the regime chain: the Q-matrix tilt by a positive
// vector f, the chain exponential that carries it, and Monte Carlo checks
// that the tilt, and the MLMM, do what they should to the chain law.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "noarb/model.hpp"
#include "noarb/parallel.hpp"
#include "noarb/rng.hpp"
#include "noarb/simkit.hpp"

namespace noarb {

class TiltVector {
 public:
  explicit TiltVector(std::vector<double> f) : f_(std::move(f)) {
    if (f_.empty()) throw std::invalid_argument("tilt vector is empty");
    for (std::size_t i = 0; i < f_.size(); ++i)
      if (!(f_[i] > 0.0) || !std::isfinite(f_[i]))
        throw std::invalid_argument("tilt vector entry f" + std::to_string(i + 1) + " must be positive and finite");
  }

  static TiltVector ones(std::size_t n) { return TiltVector(std::vector<double>(n, 1.0)); }

  std::size_t size() const { return f_.size(); }
  double operator[](std::size_t i) const { return f_[i]; }
  const std::vector<double>& values() const { return f_; }

 private:
  std::vector<double> f_;
};

/// q*_ij = q_ij f_j / f_i off the diagonal, rows closed to zero.
inline QMatrix tilt_qmatrix(const QMatrix& q, const TiltVector& f) {
  const std::size_t n = q.size();
  if (f.size() != n) throw std::invalid_argument("tilt vector length does not match the Q-matrix");
  std::vector<std::vector<double>> r(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i || q(i, j) == 0.0) continue;
      r[i][j] = q(i, j) * f[j] / f[i];
      s += r[i][j];
    }
    r[i][i] = -s;
  }
  return QMatrix(std::move(r));
}

/// The same model with its chain generator tilted by f.
inline SwitchingModel tilt_model(SwitchingModel m, const TiltVector& f) {
  m.q = tilt_qmatrix(m.q, f);
  return m;
}

/// Z_t = f(xi_t)/f(xi_0) exp(-int_0^t (Qf)(xi_s)/f(xi_s) ds), evaluated exactly.
class ChainExponential {
 public:
  ChainExponential(const QMatrix& q, const TiltVector& f, const RegimePath& chain) : chain_(chain) {
    if (f.size() != q.size()) throw std::invalid_argument("tilt vector length does not match the Q-matrix");
    rate_.resize(q.size());
    for (std::size_t j = 0; j < q.size(); ++j) {
      double qf = 0.0;
      for (std::size_t k = 0; k < q.size(); ++k) qf += q(j, k) * f[k];
      rate_[j] = qf / f[j];
    }
    log_knot_.push_back(0.0);
    for (std::size_t k = 1; k < chain.jump_times.size(); ++k) {
      const auto prev = chain.states[k - 1], next = chain.states[k];
      const double dt = chain.jump_times[k] - chain.jump_times[k - 1];
      log_knot_.push_back(log_knot_.back() - rate_[prev] * dt + std::log(f[next]) - std::log(f[prev]));
    }
  }

  double log_at(double t) const {
    if (t < 0.0 || t > chain_.horizon) throw std::out_of_range("chain exponential evaluated outside [0, T]");
    const auto it = std::upper_bound(chain_.jump_times.begin(), chain_.jump_times.end(), t);
    const auto k = static_cast<std::size_t>(it - chain_.jump_times.begin()) - 1;
    return log_knot_[k] - rate_[chain_.states[k]] * (t - chain_.jump_times[k]);
  }

  double at(double t) const { return std::exp(log_at(t)); }
  double terminal() const { return at(chain_.horizon); }

  std::vector<double> on_grid(const std::vector<double>& grid) const {
    std::vector<double> v;
    v.reserve(grid.size());
    for (double t : grid) v.push_back(at(t));
    return v;
  }

 private:
  RegimePath chain_;
  std::vector<double> rate_;      // (Qf)(j)/f(j)
  std::vector<double> log_knot_;  // log Z right after each jump
};

inline ChainExponential chain_exponential(const QMatrix& q, const TiltVector& f, const RegimePath& chain) {
  return ChainExponential(q, f, chain);
}

/// E[Z_t] at each requested time over chains started in j0.
inline std::vector<MCEstimate> chain_exponential_means(const QMatrix& q, const TiltVector& f, std::size_t j0,
                                                       double T, const std::vector<double>& times,
                                                       const SimConfig& cfg) {
  std::vector<std::vector<double>> z(times.size(), std::vector<double>(cfg.n_paths));
  parallel_for(cfg.n_paths, cfg.workers, [&](std::size_t i) {
    PathRng rng(cfg.seed, i, PathRng::Chain);
    const auto ce = chain_exponential(q, f, sample_chain(q, j0, T, rng));
    for (std::size_t k = 0; k < times.size(); ++k) z[k][i] = ce.at(times[k]);
  });
  std::vector<MCEstimate> out;
  for (const auto& v : z) {
    auto e = summarize(v);
    e.seed = cfg.seed;
    out.push_back(e);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Two-estimator comparisons.

struct ComparisonEntry {
  std::string statistic;
  double reweighted = 0.0, reweighted_se = 0.0;
  double direct = 0.0, direct_se = 0.0;
  double diff_se = 0.0;  // standard error of reweighted - direct
  bool pass = true;

  double z_score() const {
    const double d = reweighted - direct;
    return diff_se > 0.0 ? d / diff_se : (d == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
  }
};

struct ComparisonReport {
  std::vector<ComparisonEntry> entries;
  std::size_t n_paths = 0;
  std::uint64_t seed = 0;
  double tolerance = 3.0;  // in standard errors

  bool passed() const {
    return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.pass; });
  }
  std::vector<std::string> failures() const {
    std::vector<std::string> f;
    for (const auto& e : entries)
      if (!e.pass) f.push_back(e.statistic);
    return f;
  }
};

namespace detail {

struct ChainStats {
  std::vector<double> occupation;  // fraction of [0, T] per state
  std::vector<double> transitions;  // n x n counts, row-major
};

inline ChainStats chain_stats(const RegimePath& p, std::size_t n) {
  ChainStats s{std::vector<double>(n, 0.0), std::vector<double>(n * n, 0.0)};
  for (std::size_t k = 0; k < p.states.size(); ++k) {
    const double end = k + 1 < p.jump_times.size() ? p.jump_times[k + 1] : p.horizon;
    s.occupation[p.states[k]] += (end - p.jump_times[k]) / p.horizon;
    if (k > 0) s.transitions[p.states[k - 1] * n + p.states[k]] += 1.0;
  }
  return s;
}

inline std::string occupation_name(std::size_t j) { return "occupation[" + std::to_string(j + 1) + "]"; }
inline std::string transition_name(std::size_t i, std::size_t j) {
  return "transitions[" + std::to_string(i + 1) + "->" + std::to_string(j + 1) + "]";
}

inline bool within(double d, double se, double tol) { return std::fabs(d) <= tol * se || d == 0.0; }

}  // namespace detail

/// Chain statistics under Q weighted by Z_T against plain simulation under Q*.
/// The two samples use independent streams of the same seed.
inline ComparisonReport verify_tilt_law(const QMatrix& q, const TiltVector& f, std::size_t j0, double T,
                                        const SimConfig& cfg) {
  const std::size_t n = q.size();
  const QMatrix qs = tilt_qmatrix(q, f);
  const std::size_t n_stat = n + n * n;
  std::vector<std::vector<double>> rw(n_stat, std::vector<double>(cfg.n_paths));
  std::vector<std::vector<double>> dir(n_stat, std::vector<double>(cfg.n_paths));
  parallel_for(cfg.n_paths, cfg.workers, [&](std::size_t i) {
    PathRng r1(cfg.seed, i, PathRng::Chain);
    const auto p = sample_chain(q, j0, T, r1);
    const double z = chain_exponential(q, f, p).terminal();
    const auto a = detail::chain_stats(p, n);
    PathRng r2(cfg.seed, i, PathRng::Aux);
    const auto b = detail::chain_stats(sample_chain(qs, j0, T, r2), n);
    for (std::size_t k = 0; k < n; ++k) {
      rw[k][i] = z * a.occupation[k];
      dir[k][i] = b.occupation[k];
    }
    for (std::size_t k = 0; k < n * n; ++k) {
      rw[n + k][i] = z * a.transitions[k];
      dir[n + k][i] = b.transitions[k];
    }
  });
  ComparisonReport rep;
  rep.n_paths = cfg.n_paths;
  rep.seed = cfg.seed;
  for (std::size_t k = 0; k < n_stat; ++k) {
    if (k >= n) {
      const std::size_t a = (k - n) / n, b = (k - n) % n;
      if (a == b || q(a, b) == 0.0) continue;
    }
    const auto er = summarize(rw[k]);
    const auto ed = summarize(dir[k]);
    ComparisonEntry e;
    e.statistic = k < n ? detail::occupation_name(k) : detail::transition_name((k - n) / n, (k - n) % n);
    e.reweighted = er.mean;
    e.reweighted_se = er.std_error;
    e.direct = ed.mean;
    e.direct_se = ed.std_error;
    e.diff_se = std::hypot(er.std_error, ed.std_error);
    e.pass = detail::within(e.reweighted - e.direct, e.diff_se, rep.tolerance);
    rep.entries.push_back(e);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Minimal local martingale measure.

/// Driftless pricing dynamics under the MLMM: Z = E(-int theta dW), W + int theta
/// is a Brownian motion and the chain keeps its generator, so only b changes.
inline SwitchingModel mlmm_kernel(const SwitchingModel& m) {
  SwitchingModel p = m;
  std::vector<Expr> c;
  for (const auto& th : market_price_of_risk(m)) c.push_back(expr_ops::neg(th));
  p.c = c;
  return girsanov_tilt(p);
}

/// The model with c set to -theta explicitly (P-dynamics, MLMM density).
inline SwitchingModel with_mlmm_density(SwitchingModel m) {
  std::vector<Expr> c;
  for (const auto& th : market_price_of_risk(m)) c.push_back(expr_ops::neg(th));
  m.c = c;
  return m;
}

struct PreservationReport {
  ComparisonReport transitions;  // reweighted by Z_T vs untilted, per entry
  ComparisonEntry independence;  // Q-covariance of occupation and tanh(B_T)
  std::size_t flagged = 0;
  std::size_t batches = 0;

  bool passed() const { return transitions.passed() && independence.pass; }
};

/// Reweights paths of P by the MLMM density and checks that the chain
/// transition counts are unchanged and that the chain stays independent of
/// the Q-Brownian motion B = W - int c ds.
inline PreservationReport mlmm_preservation_probe(const SwitchingModel& m, double T, const SimConfig& cfg,
                                                  std::size_t batches = 50) {
  const auto pm = with_mlmm_density(m);
  const std::size_t n = m.n_regimes();
  const std::size_t j0 = m.regimes.initial;
  std::vector<double> z(cfg.n_paths), g(cfg.n_paths), h(cfg.n_paths);
  std::vector<std::vector<double>> cnt(n * n, std::vector<double>(cfg.n_paths));
  std::vector<unsigned char> flag(cfg.n_paths, 0);
  detail::for_each_path(pm, T, cfg, [&](std::size_t i, const RegimePath& chain, const detail::PathState& s) {
    z[i] = std::exp(s.logz);
    flag[i] = s.status != PathStatus::Alive;
    const auto st = detail::chain_stats(chain, n);
    g[i] = st.occupation[j0];
    h[i] = std::tanh(s.w - s.int_c);
    for (std::size_t k = 0; k < n * n; ++k) cnt[k][i] = st.transitions[k];
  });

  PreservationReport rep;
  for (auto f : flag) rep.flagged += f;
  rep.transitions.n_paths = cfg.n_paths;
  rep.transitions.seed = cfg.seed;
  std::vector<double> zc(cfg.n_paths), d(cfg.n_paths);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b) {
      if (a == b || m.q(a, b) == 0.0) continue;
      const auto& c = cnt[a * n + b];
      for (std::size_t i = 0; i < cfg.n_paths; ++i) {
        zc[i] = z[i] * c[i];
        d[i] = (z[i] - 1.0) * c[i];
      }
      const auto er = summarize(zc), ed = summarize(c), ediff = summarize(d);
      ComparisonEntry e;
      e.statistic = detail::transition_name(a, b);
      e.reweighted = er.mean;
      e.reweighted_se = er.std_error;
      e.direct = ed.mean;
      e.direct_se = ed.std_error;
      e.diff_se = ediff.std_error;  // paired: same paths on both sides
      e.pass = detail::within(ediff.mean, ediff.std_error, rep.transitions.tolerance);
      rep.transitions.entries.push_back(e);
    }

  // Self-normalized covariance; its spread comes from contiguous batches.
  auto cov = [&](std::size_t lo, std::size_t hi) {
    const std::size_t len = hi - lo;
    std::vector<double> wz(len), wg(len), wh(len), wgh(len);
    for (std::size_t i = lo; i < hi; ++i) {
      wz[i - lo] = z[i];
      wg[i - lo] = z[i] * g[i];
      wh[i - lo] = z[i] * h[i];
      wgh[i - lo] = z[i] * g[i] * h[i];
    }
    const double sz = pairwise_sum(wz);
    const double eg = pairwise_sum(wg) / sz, eh = pairwise_sum(wh) / sz;
    return pairwise_sum(wgh) / sz - eg * eh;
  };
  rep.batches = std::max<std::size_t>(2, std::min(batches, cfg.n_paths / 2));
  std::vector<double> per(rep.batches);
  for (std::size_t k = 0; k < rep.batches; ++k)
    per[k] = cov(k * cfg.n_paths / rep.batches, (k + 1) * cfg.n_paths / rep.batches);
  const auto eb = summarize(per);
  auto& e = rep.independence;
  e.statistic = "cov_Q(occupation[" + std::to_string(j0 + 1) + "], tanh(B_T))";
  e.reweighted = cov(0, cfg.n_paths);
  e.reweighted_se = eb.std_error;
  e.direct = 0.0;
  e.diff_se = eb.std_error;
  e.pass = detail::within(e.reweighted, e.diff_se, 3.0);
  return rep;
}

}  // namespace noarb
