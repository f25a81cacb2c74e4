#pragma once

// Market model descriptions and the standing-assumption checks run on them.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "noarb/expr.hpp"

namespace noarb {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Open state interval (lower, upper) with an interior reference point.
struct StateInterval {
  double lower = 0.0;
  double upper = kInf;
  double x0 = 1.0;

  static StateInterval positive_half_line(double x0 = 1.0) { return {0.0, kInf, x0}; }
  static StateInterval real_line(double x0 = 0.0) { return {-kInf, kInf, x0}; }

  /// Reference point used when none is given: 1 on (0, inf), 0 on R,
  /// otherwise the midpoint or one unit inside the finite endpoint.
  static double default_x0(double lower, double upper) {
    if (lower == 0.0 && upper == kInf) return 1.0;
    if (lower == -kInf && upper == kInf) return 0.0;
    if (lower == -kInf) return upper - 1.0;
    if (upper == kInf) return lower + 1.0;
    return 0.5 * (lower + upper);
  }

  bool contains(double x) const { return lower < x && x < upper; }
  bool well_formed() const {
    return !std::isnan(lower) && !std::isnan(upper) && !std::isnan(x0) && std::isfinite(x0) &&
           lower < x0 && x0 < upper;
  }
  bool is_positive_half_line() const { return lower == 0.0 && upper == kInf; }

  StateInterval with_x0(double x) const { return {lower, upper, x}; }
};

/// Strictly nested localization pairs (l_k, r_k), k = 1..depth, exhausting the
/// interval. On (0, inf): (2^-k min(x0,1), 2^k max(x0,1)). On R: (x0-k, x0+k).
/// Otherwise finite endpoints are approached geometrically and infinite ones
/// by doubling the offset from x0.
inline std::vector<std::pair<double, double>> localization_ladder(const StateInterval& iv,
                                                                  int depth) {
  if (depth < 1) throw std::invalid_argument("localization ladder depth must be >= 1");
  if (!iv.well_formed()) throw std::invalid_argument("malformed state interval");
  std::vector<std::pair<double, double>> out;
  out.reserve(static_cast<std::size_t>(depth));
  const bool real_line = iv.lower == -kInf && iv.upper == kInf;
  const double w = std::max(1.0, std::fabs(iv.x0));
  for (int k = 1; k <= depth; ++k) {
    const double two_k = std::ldexp(1.0, k);
    double l, r;
    if (iv.is_positive_half_line()) {
      l = std::min(iv.x0, 1.0) / two_k;
      r = std::max(iv.x0, 1.0) * two_k;
    } else if (real_line) {
      l = iv.x0 - k;
      r = iv.x0 + k;
    } else {
      // A nonzero finite endpoint only has ~52 bits of room next to it, so
      // its distance shrinks by sqrt(2) per level instead of 2.
      auto shrink = [&](double end) { return end == 0.0 ? two_k : std::exp2(0.5 * k); };
      l = std::isfinite(iv.lower) ? iv.lower + (iv.x0 - iv.lower) / shrink(iv.lower)
                                  : iv.x0 - w * (two_k - 1.0);
      r = std::isfinite(iv.upper) ? iv.upper - (iv.upper - iv.x0) / shrink(iv.upper)
                                  : iv.x0 + w * (two_k - 1.0);
    }
    if (!out.empty() && !(l < out.back().first && out.back().second < r))
      throw std::domain_error("localization ladder not resolvable in double precision at depth " +
                              std::to_string(k));
    if (!(iv.lower < l && r < iv.upper))
      throw std::domain_error("localization ladder left the interval at depth " + std::to_string(k));
    out.emplace_back(l, r);
  }
  return out;
}

enum class Tri { True, False, Unknown };

inline const char* to_string(Tri t) {
  switch (t) {
    case Tri::True: return "true";
    case Tri::False: return "false";
    default: return "unknown";
  }
}

/// Hypotheses the numerical tests cannot decide. Nothing here is ever
/// upgraded from Unknown by the library.
struct RegularityAttestation {
  // Yamada-Watanabe condition per envelope pair, keyed "f,g" with f in
  // {lower_u, upper_u, one} and g in {lower_a, upper_a}.
  std::map<std::string, Tri> yw_pair;
  // Engelbert-Schmidt condition per regime (index = regime, 0-based).
  std::vector<Tri> es_condition;
  Tri c_locally_bounded = Tri::Unknown;
  Tri localizing_sequence_m1 = Tri::Unknown;  // (M1) / (L1)
  Tri envelope_upper = Tri::Unknown;          // sigma^2 <= zeta * upper_a
  Tri envelope_lower = Tri::Unknown;          // lower_a <= sigma^2
  Tri drift_bounds = Tri::Unknown;            // lower_u sigma^2 <= b + c sigma <= upper_u sigma^2
  Tri chain_recurrent = Tri::Unknown;

  Tri yw(const std::string& key) const {
    auto it = yw_pair.find(key);
    return it == yw_pair.end() ? Tri::Unknown : it->second;
  }
  Tri es(std::size_t regime) const {
    return regime < es_condition.size() ? es_condition[regime] : Tri::Unknown;
  }

  bool operator==(const RegularityAttestation&) const = default;
};

/// Generator matrix of a finite continuous-time Markov chain. Construction
/// enforces nonnegative off-diagonal rates and zero row sums.
class QMatrix {
 public:
  static constexpr double kRowSumTol = 1e-12;

  QMatrix() : QMatrix(std::vector<std::vector<double>>{{0.0}}) {}

  explicit QMatrix(std::vector<std::vector<double>> rows) : q_(std::move(rows)) {
    const std::size_t n = q_.size();
    if (n == 0) throw std::invalid_argument("Q-matrix must have at least one state");
    for (std::size_t i = 0; i < n; ++i) {
      if (q_[i].size() != n) throw std::invalid_argument("Q-matrix must be square");
      double sum = 0.0, scale = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double v = q_[i][j];
        if (!std::isfinite(v)) throw std::invalid_argument("Q-matrix entries must be finite");
        if (i != j && v < 0.0)
          throw std::invalid_argument("Q-matrix off-diagonal rate q" + std::to_string(i + 1) +
                                      std::to_string(j + 1) + " is negative");
        sum += v;
        scale = std::max(scale, std::fabs(v));
      }
      if (std::fabs(sum) > kRowSumTol * std::max(1.0, scale))
        throw std::invalid_argument("Q-matrix row " + std::to_string(i + 1) + " does not sum to 0");
    }
  }

  /// Builds from off-diagonal rates; the diagonal is set to minus the row sum.
  static QMatrix from_rates(std::vector<std::vector<double>> rows) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < rows[i].size(); ++j)
        if (j != i) s += rows[i][j];
      if (i < rows[i].size()) rows[i][i] = -s;
    }
    return QMatrix(std::move(rows));
  }

  std::size_t size() const { return q_.size(); }
  double operator()(std::size_t i, std::size_t j) const { return q_[i][j]; }
  const std::vector<std::vector<double>>& rows() const { return q_; }

  /// Strong connectivity of the graph with edges i -> j whenever q_ij > 0.
  bool irreducible() const {
    const std::size_t n = size();
    auto reach_all = [&](bool transpose) {
      std::vector<bool> seen(n, false);
      std::queue<std::size_t> work;
      work.push(0);
      seen[0] = true;
      while (!work.empty()) {
        const std::size_t i = work.front();
        work.pop();
        for (std::size_t j = 0; j < n; ++j) {
          const double rate = transpose ? q_[j][i] : q_[i][j];
          if (j != i && rate > 0.0 && !seen[j]) {
            seen[j] = true;
            work.push(j);
          }
        }
      }
      return std::all_of(seen.begin(), seen.end(), [](bool b) { return b; });
    };
    return reach_all(false) && reach_all(true);
  }

  bool operator==(const QMatrix&) const = default;

 private:
  std::vector<std::vector<double>> q_;
};

struct RegimeSet {
  std::size_t count = 1;
  std::size_t initial = 0;  // 0-based
  std::vector<std::string> labels;
};

/// dP = b(P, xi) dt + sigma(P, xi) dW with xi a finite Markov chain.
struct SwitchingModel {
  StateInterval interval = StateInterval::positive_half_line();
  RegimeSet regimes;
  QMatrix q;
  std::vector<Expr> b;
  std::vector<Expr> sigma;
  std::optional<std::vector<Expr>> c;  // unset means the MLMM kernel -b/sigma
  double p0 = 1.0;
  RegularityAttestation attestations;

  std::size_t n_regimes() const { return regimes.count; }
};

/// Stochastic-exponential market described through Markovian envelopes of its
/// volatility and drift.
struct ItoEnvelopeModel {
  StateInterval interval = StateInterval::real_line();
  Expr upper_a = Expr::number(1.0);
  std::optional<Expr> lower_a;
  std::optional<Expr> upper_u;
  std::optional<Expr> lower_u;
  Expr zeta = Expr::number(1.0);  // function of t on [0, T]
  double s0 = 0.0;
  RegularityAttestation attestations;
};

struct MarketModel {
  std::variant<ItoEnvelopeModel, SwitchingModel> model;
  double horizon = 1.0;

  bool is_switching() const { return std::holds_alternative<SwitchingModel>(model); }
  const SwitchingModel& switching() const { return std::get<SwitchingModel>(model); }
  const ItoEnvelopeModel& ito() const { return std::get<ItoEnvelopeModel>(model); }
};

// ---------------------------------------------------------------------------
// Validation

enum class CheckStatus { Pass, Fail, HeuristicPass, Warn };

inline const char* to_string(CheckStatus s) {
  switch (s) {
    case CheckStatus::Pass: return "pass";
    case CheckStatus::Fail: return "fail";
    case CheckStatus::HeuristicPass: return "heuristic-pass";
    default: return "warn";
  }
}

struct ValidationCheck {
  std::string name;
  CheckStatus status;
  std::string detail;
};

struct ValidationReport {
  std::vector<ValidationCheck> checks;

  bool ok() const {
    return std::none_of(checks.begin(), checks.end(),
                        [](const ValidationCheck& c) { return c.status == CheckStatus::Fail; });
  }
  const ValidationCheck* find(const std::string& name) const {
    for (const auto& c : checks)
      if (c.name == name) return &c;
    return nullptr;
  }
  void add(std::string name, CheckStatus s, std::string detail = {}) {
    checks.push_back({std::move(name), s, std::move(detail)});
  }
};

class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(ValidationReport report)
      : std::runtime_error(summarize(report)), report_(std::move(report)) {}
  const ValidationReport& report() const { return report_; }

 private:
  ValidationReport report_;

  static std::string summarize(const ValidationReport& r) {
    std::ostringstream os;
    os << "model validation failed:";
    for (const auto& c : r.checks)
      if (c.status == CheckStatus::Fail) os << "\n  - " << c.name << ": " << c.detail;
    return os.str();
  }
};

namespace detail {

// Interior grid: every localization rung to depth 20 plus 31 evenly spaced
// points between consecutive rungs, and x0 itself.
inline std::vector<double> validation_grid(const StateInterval& iv) {
  std::vector<double> g{iv.x0};
  const auto ladder = localization_ladder(iv, 20);
  double prev_l = iv.x0, prev_r = iv.x0;
  for (const auto& [l, r] : ladder) {
    for (int i = 1; i <= 32; ++i) {
      g.push_back(prev_l + (l - prev_l) * i / 32.0);
      g.push_back(prev_r + (r - prev_r) * i / 32.0);
    }
    prev_l = l;
    prev_r = r;
  }
  std::sort(g.begin(), g.end());
  g.erase(std::unique(g.begin(), g.end()), g.end());
  return g;
}

// Composite trapezoid of h over [a, b] on n panels; returns inf/nan-free sum or
// nullopt when the integrand cannot be evaluated or is not finite.
template <class F>
std::optional<double> probe_integral(F&& h, double a, double b, int n = 2048) {
  double s = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double x = a + (b - a) * i / n;
    double v;
    try {
      v = h(x);
    } catch (const DomainError&) {
      return std::nullopt;
    }
    if (!std::isfinite(v)) return std::nullopt;
    s += (i == 0 || i == n) ? 0.5 * v : v;
  }
  return s * (b - a) / n;
}

inline std::string fmt(double v) { return DomainError::format_double(v); }

}  // namespace detail

inline void validate_interval(const StateInterval& iv, ValidationReport& rep) {
  if (!iv.well_formed()) {
    rep.add("interval", CheckStatus::Fail,
            "need lower < x0 < upper with finite x0, got (" + detail::fmt(iv.lower) + ", " +
                detail::fmt(iv.upper) + ") x0=" + detail::fmt(iv.x0));
    return;
  }
  try {
    localization_ladder(iv, 20);
    rep.add("interval", CheckStatus::Pass);
  } catch (const std::exception& e) {
    rep.add("interval", CheckStatus::Fail, e.what());
  }
}

inline void validate_qmatrix(const QMatrix& q, std::size_t n_regimes, ValidationReport& rep) {
  if (q.size() != n_regimes) {
    rep.add("q-matrix", CheckStatus::Fail,
            "size " + std::to_string(q.size()) + " != regime count " + std::to_string(n_regimes));
    return;
  }
  bool rows_ok = true;
  for (std::size_t i = 0; i < q.size(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < q.size(); ++j) {
      s += q(i, j);
      if (i != j && q(i, j) < 0.0) rows_ok = false;
    }
    if (std::fabs(s) > QMatrix::kRowSumTol) rows_ok = false;
  }
  rep.add("q-matrix", rows_ok ? CheckStatus::Pass : CheckStatus::Fail,
          rows_ok ? "" : "rows must sum to 0 within 1e-12 with nonnegative off-diagonal rates");
  if (q.irreducible())
    rep.add("irreducible", CheckStatus::Pass);
  else
    rep.add("irreducible", CheckStatus::Warn,
            "rate graph is not strongly connected; recurrence is not available");
}

inline ValidationReport validate(const SwitchingModel& m, double horizon) {
  ValidationReport rep;
  if (!(horizon > 0.0) || !std::isfinite(horizon))
    rep.add("horizon", CheckStatus::Fail, "T must be finite and positive");
  else
    rep.add("horizon", CheckStatus::Pass);

  validate_interval(m.interval, rep);
  const std::size_t n = m.regimes.count;
  if (n < 1 || m.regimes.initial >= n) {
    rep.add("regimes", CheckStatus::Fail, "need N >= 1 and 1 <= j0 <= N");
    return rep;
  }
  if (m.b.size() != n || m.sigma.size() != n || (m.c && m.c->size() != n)) {
    rep.add("coefficients", CheckStatus::Fail, "one b, sigma (and c, if given) per regime required");
    return rep;
  }
  rep.add("regimes", CheckStatus::Pass);
  validate_qmatrix(m.q, n, rep);
  if (!rep.ok()) return rep;

  if (!m.interval.contains(m.p0))
    rep.add("initial-value", CheckStatus::Fail, "p0 must lie inside the state interval");
  else
    rep.add("initial-value", CheckStatus::Pass);

  const auto grid = detail::validation_grid(m.interval);
  for (std::size_t j = 0; j < n; ++j) {
    const std::string tag = "regime " + std::to_string(j + 1);
    // sigma nonzero: no zero on the grid and no sign change between points.
    std::string why;
    try {
      const auto s = m.sigma[j].sample(grid);
      for (std::size_t i = 0; i < s.size() && why.empty(); ++i) {
        if (s[i] == 0.0) why = "sigma vanishes at x=" + detail::fmt(grid[i]);
        else if (i > 0 && std::signbit(s[i]) != std::signbit(s[i - 1]))
          why = "sigma changes sign between x=" + detail::fmt(grid[i - 1]) + " and " +
                detail::fmt(grid[i]);
      }
    } catch (const DomainError& e) {
      why = e.what();
    }
    rep.add("sigma-nonzero " + tag, why.empty() ? CheckStatus::Pass : CheckStatus::Fail, why);

    try {
      (void)m.b[j].sample(grid);
      rep.add("drift-defined " + tag, CheckStatus::Pass);
    } catch (const DomainError& e) {
      rep.add("drift-defined " + tag, CheckStatus::Fail, e.what());
    }

    // (1 + |b|)/sigma^2 locally integrable, probed on a few compacts.
    const auto ladder = localization_ladder(m.interval, 6);
    bool integrable = true;
    for (const auto& [l, r] : ladder) {
      auto v = detail::probe_integral(
          [&](double x) {
            const double s = m.sigma[j].eval(x);
            return (1.0 + std::fabs(m.b[j].eval(x))) / (s * s);
          },
          l, r);
      if (!v) {
        integrable = false;
        break;
      }
    }
    rep.add("local-integrability " + tag, integrable ? CheckStatus::HeuristicPass : CheckStatus::Fail,
            integrable ? "probed on 6 nested compacts" : "(1+|b|)/sigma^2 not finite on a compact");

    if (m.c) {
      bool ok = true;
      for (const auto& [l, r] : ladder) {
        auto v = detail::probe_integral(
            [&](double x) {
              const double q = m.c->at(j).eval(x) / m.sigma[j].eval(x);
              return q * q;
            },
            l, r);
        if (!v) {
          ok = false;
          break;
        }
      }
      rep.add("c-square-integrability " + tag, ok ? CheckStatus::HeuristicPass : CheckStatus::Fail,
              ok ? "probed on 6 nested compacts" : "(c/sigma)^2 not finite on a compact");
    }

    // Finite-difference Holder-1/2 probe for sigma (informational only; the
    // ES attestation is never derived from it).
    {
      const auto [l, r] = ladder[2];
      double worst = 0.0;
      bool finite = true;
      const int n_pts = 400;
      try {
        for (int i = 0; i < n_pts && finite; ++i) {
          const double x = l + (r - l) * i / n_pts;
          const double h = 1e-4 * (r - l);
          const double d = m.sigma[j].eval(x + h) - m.sigma[j].eval(x);
          const double ratio = d * d / h;
          if (!std::isfinite(ratio)) finite = false;
          worst = std::max(worst, ratio);
        }
      } catch (const DomainError&) {
        finite = false;
      }
      rep.add("holder-probe " + tag, finite ? CheckStatus::HeuristicPass : CheckStatus::Warn,
              "max |dsigma|^2/h = " + detail::fmt(worst));
    }
  }
  return rep;
}

inline ValidationReport validate(const ItoEnvelopeModel& m, double horizon) {
  ValidationReport rep;
  if (!(horizon > 0.0) || !std::isfinite(horizon))
    rep.add("horizon", CheckStatus::Fail, "T must be finite and positive");
  else
    rep.add("horizon", CheckStatus::Pass);
  validate_interval(m.interval, rep);
  if (!rep.ok()) return rep;

  const auto grid = detail::validation_grid(m.interval);
  auto positive = [&](const Expr& e, const std::string& name) {
    try {
      const auto v = e.sample(grid);
      for (std::size_t i = 0; i < v.size(); ++i)
        if (!(v[i] > 0.0)) {
          rep.add(name + "-positive", CheckStatus::Fail,
                  name + " not positive at x=" + detail::fmt(grid[i]));
          return std::vector<double>{};
        }
      rep.add(name + "-positive", CheckStatus::Pass);
      return v;
    } catch (const DomainError& e) {
      rep.add(name + "-positive", CheckStatus::Fail, e.what());
      return std::vector<double>{};
    }
  };
  const auto ua = positive(m.upper_a, "upper_a");
  if (m.lower_a) {
    const auto la = positive(*m.lower_a, "lower_a");
    if (!ua.empty() && !la.empty()) {
      std::string why;
      for (std::size_t i = 0; i < ua.size() && why.empty(); ++i)
        if (la[i] > ua[i] * (1.0 + 1e-12)) why = "lower_a > upper_a at x=" + detail::fmt(grid[i]);
      rep.add("envelope-order", why.empty() ? CheckStatus::Pass : CheckStatus::Fail, why);
    }
  }
  for (const auto* u : {&m.upper_u, &m.lower_u}) {
    if (!*u) continue;
    const std::string name = (u == &m.upper_u) ? "upper_u" : "lower_u";
    try {
      (void)(*u)->sample(grid);
      rep.add(name + "-defined", CheckStatus::Pass);
    } catch (const DomainError& e) {
      rep.add(name + "-defined", CheckStatus::Fail, e.what());
    }
  }
  if (m.upper_u && m.lower_u) {
    try {
      const auto hi = m.upper_u->sample(grid);
      const auto lo = m.lower_u->sample(grid);
      std::string why;
      for (std::size_t i = 0; i < hi.size() && why.empty(); ++i)
        if (lo[i] > hi[i]) why = "lower_u > upper_u at x=" + detail::fmt(grid[i]);
      rep.add("drift-envelope-order", why.empty() ? CheckStatus::Pass : CheckStatus::Fail, why);
    } catch (const DomainError&) {
    }
  }
  // zeta >= 0 on [0, T] and integrable there.
  {
    std::string why;
    double integral = 0.0;
    const int n = 1024;
    try {
      for (int i = 0; i <= n && why.empty(); ++i) {
        const double t = horizon * i / n;
        const double z = m.zeta.eval(t);
        if (z < 0.0) why = "zeta negative at t=" + detail::fmt(t);
        integral += (i == 0 || i == n ? 0.5 : 1.0) * z * horizon / n;
      }
    } catch (const DomainError& e) {
      why = e.what();
    }
    if (why.empty() && !std::isfinite(integral)) why = "zeta not integrable on [0,T]";
    rep.add("zeta", why.empty() ? CheckStatus::Pass : CheckStatus::Fail, why);
  }
  if (!ua.empty()) {
    bool ok = true;
    for (const auto& [l, r] : localization_ladder(m.interval, 6)) {
      if (!detail::probe_integral([&](double x) { return 1.0 / m.upper_a.eval(x); }, l, r)) {
        ok = false;
        break;
      }
    }
    rep.add("local-integrability upper_a", ok ? CheckStatus::HeuristicPass : CheckStatus::Fail,
            ok ? "probed on 6 nested compacts" : "1/upper_a not finite on a compact");
  }
  return rep;
}

inline ValidationReport validate(const MarketModel& m) {
  return std::visit([&](const auto& inner) { return validate(inner, m.horizon); }, m.model);
}

inline void validate_or_throw(const MarketModel& m) {
  auto rep = validate(m);
  if (!rep.ok()) throw ValidationError(std::move(rep));
}

// ---------------------------------------------------------------------------

/// theta(x, j) = b(x, j)/sigma(x, j) per regime.
inline std::vector<Expr> market_price_of_risk(const SwitchingModel& m) {
  std::vector<Expr> theta;
  theta.reserve(m.b.size());
  for (std::size_t j = 0; j < m.b.size(); ++j) theta.push_back(expr_ops::div(m.b[j], m.sigma[j]));
  return theta;
}

/// Density kernel c actually in force: the configured one, or -theta.
inline std::vector<Expr> effective_kernel(const SwitchingModel& m) {
  if (m.c) return *m.c;
  std::vector<Expr> c;
  for (const auto& th : market_price_of_risk(m)) c.push_back(expr_ops::neg(th));
  return c;
}

/// Copy of the model with c set to the MLMM kernel -theta when unset.
inline SwitchingModel with_default_kernel(SwitchingModel m) {
  if (!m.c) m.c = effective_kernel(m);
  return m;
}

/// Kernel of Z P / P_0 = E(int (sigma/P - theta) dW): c = sigma/x - theta.
inline std::vector<Expr> price_density_kernel(const SwitchingModel& m) {
  std::vector<Expr> c;
  const auto theta = market_price_of_risk(m);
  for (std::size_t j = 0; j < m.sigma.size(); ++j)
    c.push_back(expr_ops::sub(expr_ops::div(m.sigma[j], Expr::variable()), theta[j]));
  return c;
}

/// Recurrence of the regime chain: attested value if given, otherwise true
/// for finite irreducible chains (the only chains represented).
inline bool chain_recurrent(const SwitchingModel& m) {
  if (m.attestations.chain_recurrent != Tri::Unknown)
    return m.attestations.chain_recurrent == Tri::True;
  return m.q.irreducible();
}

}  // namespace noarb
