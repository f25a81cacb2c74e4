#pragma once

// Arbitrage verdicts assembled from boundary tests and attestations.
//
// Every verdict is three-valued. A route to Holds or Fails closes only when
// each of its hypotheses is either attested true or decided by quadrature;
// anything less leaves the verdict Inconclusive with the missing pieces listed.

#include <algorithm>
#include <cstddef>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "noarb/model.hpp"
#include "noarb/quadtest.hpp"

namespace noarb {

enum class Status { Holds, Fails, Inconclusive };

inline const char* to_string(Status s) {
  switch (s) {
    case Status::Holds: return "holds";
    case Status::Fails: return "fails";
    default: return "inconclusive";
  }
}

struct TheoremCitation {
  std::string id;
  std::string quote;
  bool operator==(const TheoremCitation&) const = default;
};

// Fixed citation table. Some results have two parts with separate anchors;
// those appear twice under the same id.
inline const std::vector<TheoremCitation>& citation_table() {
  static const std::vector<TheoremCitation> table{
      {"T2.1", "is a localizing sequence for"},
      {"T2.3", "Then, Z is a strict local martingale."},
      {"T2.6i", "c is bounded on compact subsets"},
      {"T2.6ii", "Assume that ξ is recurrent"},
      {"C2.8", "is a martingale if and only if"},
      {"T3.2", "is a localizing sequence for"},
      {"T3.2", "then Q is an EMM and Z is a SMD"},
      {"T3.4", "Then, no SMD exists."},
      {"T3.6", "then Q is an EMM."},
      {"T3.7", "and the MLMM does not exist"},
      {"T3.7", "the MMM does not exist"},
      {"C3.8", "The MLMM exists if and only if"},
      {"T3.9", "Suppose there exists a j ∈ J"},
      {"P5.4", "Then, A* = ℝ^N and"},
      {"T5.2", "preserves the independence of the sources"},
      {"T5.3", "solution process for the martingale problem"},
      {"T5.5", "is well-posed and that"},
      {"CEV", "The MLMM exists if and only if"},
  };
  return table;
}

/// part selects among entries sharing an id.
inline TheoremCitation cite(std::string_view id, int part = 0) {
  for (const auto& c : citation_table())
    if (c.id == id && part-- == 0) return c;
  throw std::out_of_range("no citation " + std::string(id));
}

struct VerdictInput {
  std::string name;
  std::string value;
  bool operator==(const VerdictInput&) const = default;
};

struct Verdict {
  Status status = Status::Inconclusive;
  std::optional<TheoremCitation> certificate;
  std::vector<VerdictInput> inputs;
  std::string reason;
};

/// One boundary test that fed the report.
struct BoundaryRecord {
  std::size_t regime = 0;  // 0-based; 0 for single-regime inputs
  std::string test;        // e.g. "price", "scale", "reduced upper_a"
  std::string boundary;    // "zero", "infinity", "lower", "upper"
  BoundaryVerdict verdict;
};

struct ArbitrageReport {
  std::string model_kind;  // "switching", "ito" or "cev"
  Verdict smd;
  Verdict elmm_mlmm;
  Verdict emm_mmm;
  Verdict bubble;
  std::optional<Verdict> structure_preserving_L;
  std::optional<Verdict> structure_preserving_M;
  Verdict z_is_martingale;
  std::vector<BoundaryRecord> tests;

  bool decided() const {
    for (const Verdict* v : {&smd, &elmm_mlmm, &emm_mmm, &bubble, &z_is_martingale})
      if (v->status == Status::Inconclusive) return false;
    for (const auto* v : {&structure_preserving_L, &structure_preserving_M})
      if (*v && (*v)->status == Status::Inconclusive) return false;
    return true;
  }
};

/// Raised when one verdict has both a Holds route and a Fails route closed.
class InternalContradiction : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

namespace detail {

struct Route {
  explicit Route(TheoremCitation c) : certificate(std::move(c)) {}

  TheoremCitation certificate;
  std::vector<VerdictInput> inputs;
  std::vector<std::string> missing;

  bool closed() const { return missing.empty(); }

  Route& need(bool ok, std::string name, std::string value, const std::string& miss) {
    inputs.push_back({std::move(name), std::move(value)});
    if (!ok) missing.push_back(miss);
    return *this;
  }
  Route& attest(Tri t, const std::string& name) {
    return need(t == Tri::True, "attest " + name, to_string(t), name + " not attested");
  }
};

inline std::string describe(const BoundaryVerdict& v) {
  std::string s = to_string(v.status);
  if (!v.rule.empty()) s += " (" + v.rule + ")";
  return s;
}

inline Verdict decide(std::string_view what, const std::vector<Route>& holds,
                      const std::vector<Route>& fails) {
  const Route* h = nullptr;
  const Route* f = nullptr;
  for (const auto& r : holds)
    if (r.closed()) { h = &r; break; }
  for (const auto& r : fails)
    if (r.closed()) { f = &r; break; }
  if (h && f)
    throw InternalContradiction(std::string(what) + ": both " + h->certificate.id + " (holds) and " +
                                f->certificate.id + " (fails) apply");
  Verdict v;
  if (h || f) {
    const Route& r = h ? *h : *f;
    v.status = h ? Status::Holds : Status::Fails;
    v.certificate = r.certificate;
    v.inputs = r.inputs;
    return v;
  }
  std::vector<std::string> seen;
  std::ostringstream why;
  bool first = true;
  for (const auto* group : {&holds, &fails})
    for (const auto& r : *group) {
      for (const auto& in : r.inputs)
        if (std::find(seen.begin(), seen.end(), in.name) == seen.end()) {
          seen.push_back(in.name);
          v.inputs.push_back(in);
        }
      why << (first ? "" : "; ") << r.certificate.id << ": ";
      for (std::size_t k = 0; k < r.missing.size(); ++k) why << (k ? ", " : "") << r.missing[k];
      first = false;
    }
  v.reason = first ? "no applicable criterion" : why.str();
  return v;
}

// Bubble = ELMM holds and (SMD fails or EMM fails). An EMM rules a bubble out,
// and so does the absence of an ELMM.
inline Verdict bubble_from(const Verdict& elmm, const Verdict& smd, const Verdict& emm) {
  const bool fire_smd = smd.status == Status::Fails;
  const bool fire_emm = emm.status == Status::Fails;
  const bool holds = elmm.status == Status::Holds && (fire_smd || fire_emm);
  const bool fails = elmm.status == Status::Fails || emm.status == Status::Holds;
  if (holds && fails) throw InternalContradiction("bubble: supported both ways");
  Verdict v;
  if (holds) {
    const Verdict& src = fire_smd ? smd : emm;
    v.status = Status::Holds;
    v.certificate = src.certificate;
    v.inputs = {{"elmm", to_string(elmm.status)},
                {"conjunct", fire_smd ? "smd fails" : "emm fails"}};
    return v;
  }
  if (fails) {
    const bool by_elmm = elmm.status == Status::Fails;
    v.status = Status::Fails;
    v.certificate = by_elmm ? elmm.certificate : emm.certificate;
    v.inputs = {{"conjunct", by_elmm ? "elmm fails" : "emm holds"}};
    return v;
  }
  v.inputs = {{"elmm", to_string(elmm.status)},
              {"smd", to_string(smd.status)},
              {"emm", to_string(emm.status)}};
  v.reason = "neither the bubble nor its negation is established";
  return v;
}

inline std::string regime_name(std::size_t j) { return std::to_string(j + 1); }

}  // namespace detail

/// Report consistency: EMM => ELMM, EMM => no bubble, ELMM and no SMD => bubble.
inline bool consistent(const ArbitrageReport& r) {
  if (r.emm_mmm.status == Status::Holds) {
    if (r.elmm_mlmm.status != Status::Holds) return false;
    if (r.bubble.status != Status::Fails) return false;
  }
  if (r.elmm_mlmm.status == Status::Holds && r.smd.status == Status::Fails &&
      r.bubble.status != Status::Holds)
    return false;
  return true;
}

// ---------------------------------------------------------------------------
// Martingale property of a stochastic exponential.

/// Envelopes of the general Ito setting: a_lo <= sigma^2 <= zeta a_hi and
/// u_lo sigma^2 <= b + c sigma <= u_hi sigma^2.
struct EnvelopeInput {
  StateInterval interval = StateInterval::real_line();
  std::optional<Expr> upper_a;
  std::optional<Expr> lower_a;
  std::optional<Expr> upper_u;
  std::optional<Expr> lower_u;
  RegularityAttestation attestations;
};

inline EnvelopeInput envelope_input(const ItoEnvelopeModel& m) {
  return {m.interval, m.upper_a, m.lower_a, m.upper_u, m.lower_u, m.attestations};
}

/// Holds means the exponential is a true martingale, Fails a strict local one.
inline Verdict classify_exponential(const EnvelopeInput& in, const QuadOptions& opt = {},
                                    std::vector<BoundaryRecord>* records = nullptr) {
  using detail::Route;
  const auto& at = in.attestations;
  auto run = [&](const Expr& f, const Expr& g, Boundary which, const char* label) {
    auto v = classify_boundary({f, g, in.interval}, which, opt);
    if (records) records->push_back({0, label, to_string(which), v});
    return v;
  };

  std::vector<Route> holds, fails;

  Route m{cite("T2.1")};
  m.attest(at.localizing_sequence_m1, "localizing_sequence_m1")
      .attest(at.envelope_upper, "envelope_upper")
      .attest(at.drift_bounds, "drift_bounds");
  if (in.upper_a && in.upper_u && in.lower_u) {
    const auto up = run(*in.upper_u, *in.upper_a, Boundary::Upper, "v(upper_u, upper_a)");
    const auto lo = run(*in.lower_u, *in.upper_a, Boundary::Lower, "v(lower_u, upper_a)");
    m.need(up.status == Convergence::Divergent, "v(upper_u, upper_a) at upper", detail::describe(up),
           "v(upper_u, upper_a) not divergent at the upper end");
    m.need(lo.status == Convergence::Divergent, "v(lower_u, upper_a) at lower", detail::describe(lo),
           "v(lower_u, upper_a) not divergent at the lower end");
  } else {
    m.missing.push_back("upper_a, upper_u and lower_u envelopes required");
  }
  holds.push_back(m);

  if (in.lower_a && in.lower_u) {
    Route sl{cite("T2.3")};
    sl.attest(at.yw("lower_u,lower_a"), "yw lower_u,lower_a")
        .attest(at.envelope_lower, "envelope_lower")
        .attest(at.drift_bounds, "drift_bounds");
    const auto up = run(*in.lower_u, *in.lower_a, Boundary::Upper, "v(lower_u, lower_a)");
    sl.need(up.status == Convergence::Convergent, "v(lower_u, lower_a) at upper", detail::describe(up),
            "v(lower_u, lower_a) not convergent at the upper end");
    fails.push_back(sl);
  }
  if (in.lower_a && in.upper_u) {
    Route sl{cite("T2.3")};
    sl.attest(at.yw("upper_u,lower_a"), "yw upper_u,lower_a")
        .attest(at.envelope_lower, "envelope_lower")
        .attest(at.drift_bounds, "drift_bounds");
    const auto lo = run(*in.upper_u, *in.lower_a, Boundary::Lower, "v(upper_u, lower_a)");
    sl.need(lo.status == Convergence::Convergent, "v(upper_u, lower_a) at lower", detail::describe(lo),
            "v(upper_u, lower_a) not convergent at the lower end");
    fails.push_back(sl);
  }
  if (fails.empty()) {
    Route none{cite("T2.3")};
    none.missing.push_back("lower_a with a drift envelope required");
    fails.push_back(none);
  }
  return detail::decide("exponential", holds, fails);
}

inline Verdict classify_exponential(const ItoEnvelopeModel& m, const QuadOptions& opt = {}) {
  return classify_exponential(envelope_input(m), opt);
}

/// Switching case: Z = E(int c(S, xi) dW) with the model's kernel (the MLMM
/// kernel when c is unset). Uses v((b + c sigma)/sigma^2, sigma^2) per regime.
inline Verdict classify_exponential(const SwitchingModel& m, const QuadOptions& opt = {},
                                    std::vector<BoundaryRecord>* records = nullptr) {
  using detail::Route;
  const auto& at = m.attestations;
  const std::size_t n = m.n_regimes();
  const bool recurrent = chain_recurrent(m);

  std::vector<VTestResult> v(n);
  for (std::size_t j = 0; j < n; ++j) {
    v[j] = general_v_switching(m, j, opt);
    if (records) {
      records->push_back({j, "scale", "lower", v[j].at_lower});
      records->push_back({j, "scale", "upper", v[j].at_upper});
    }
  }

  // With a recurrent chain the finite-regime corollary decides both ways.
  Route h{recurrent ? cite("C2.8") : cite("T2.6i")};
  h.attest(at.c_locally_bounded, "c_locally_bounded");
  for (std::size_t j = 0; j < n; ++j) {
    const auto r = detail::regime_name(j);
    h.attest(at.es(j), "es" + r);
    h.need(v[j].at_lower.status == Convergence::Divergent, "v regime " + r + " at lower",
           detail::describe(v[j].at_lower), "regime " + r + " not divergent at the lower end");
    h.need(v[j].at_upper.status == Convergence::Divergent, "v regime " + r + " at upper",
           detail::describe(v[j].at_upper), "regime " + r + " not divergent at the upper end");
  }

  std::vector<Route> fails;
  for (std::size_t j = 0; j < n; ++j) {
    const auto r = detail::regime_name(j);
    Route f{cite("T2.6ii")};
    f.attest(at.es(j), "es" + r);
    f.need(recurrent || j == m.regimes.initial, "chain reaches regime " + r,
           recurrent ? "recurrent" : (j == m.regimes.initial ? "initial regime" : "no"),
           "chain not recurrent and regime " + r + " is not the initial one");
    const bool conv = v[j].at_lower.status == Convergence::Convergent ||
                      v[j].at_upper.status == Convergence::Convergent;
    f.need(conv, "v regime " + r,
           detail::describe(v[j].at_lower) + " / " + detail::describe(v[j].at_upper),
           "regime " + r + " convergent at neither end");
    fails.push_back(f);
  }
  return detail::decide("exponential", {h}, fails);
}

// ---------------------------------------------------------------------------
// Market reports.

/// Positive price with Markov switching on (0, inf); verdicts concern the
/// minimal density Z = E(-int theta dW).
inline ArbitrageReport classify_switching_market(const SwitchingModel& m, const QuadOptions& opt = {}) {
  using detail::Route;
  if (!m.interval.is_positive_half_line())
    throw std::invalid_argument("switching market needs the price interval (0, inf)");
  const auto& at = m.attestations;
  const std::size_t n = m.n_regimes();
  const bool recurrent = chain_recurrent(m);

  ArbitrageReport rep;
  rep.model_kind = "switching";
  std::vector<BoundaryVerdict> zero(n), inf(n);
  for (std::size_t j = 0; j < n; ++j) {
    zero[j] = feller_price_test(m, j, PriceBoundary::Zero, opt);
    inf[j] = feller_price_test(m, j, PriceBoundary::Infinity, opt);
    rep.tests.push_back({j, "price", "zero", zero[j]});
    rep.tests.push_back({j, "price", "infinity", inf[j]});
  }

  auto standing = [&](Route& r) {
    r.attest(at.c_locally_bounded, "c_locally_bounded");
    for (std::size_t j = 0; j < n; ++j) r.attest(at.es(j), "es" + detail::regime_name(j));
  };
  auto all_div = [&](Route& r, const std::vector<BoundaryVerdict>& side, const char* label) {
    for (std::size_t j = 0; j < n; ++j) {
      const auto rn = detail::regime_name(j);
      r.need(side[j].status == Convergence::Divergent,
             std::string(label) + " integral regime " + rn, detail::describe(side[j]),
             std::string(label) + " integral of regime " + rn + " not divergent");
    }
  };
  // Some regime j with a convergent integral on the given side, ES(j), and
  // (when asked) a chain that reaches j.
  auto some_conv = [&](const TheoremCitation& c, const std::vector<BoundaryVerdict>& side,
                       const char* label, bool need_reach) {
    std::vector<Route> out;
    for (std::size_t j = 0; j < n; ++j) {
      const auto rn = detail::regime_name(j);
      Route r{c};
      r.attest(at.es(j), "es" + rn);
      if (need_reach)
        r.need(recurrent || j == m.regimes.initial, "chain reaches regime " + rn,
               recurrent ? "recurrent" : (j == m.regimes.initial ? "initial regime" : "no"),
               "chain not recurrent and regime " + rn + " is not the initial one");
      r.need(side[j].status == Convergence::Convergent,
             std::string(label) + " integral regime " + rn, detail::describe(side[j]),
             std::string(label) + " integral of regime " + rn + " not convergent");
      out.push_back(r);
    }
    return out;
  };
  auto concat = [](std::vector<Route> a, const std::vector<Route>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
  };

  Route mlmm{cite("T3.6")};
  standing(mlmm);
  all_div(mlmm, zero, "zero-side");
  Route mmm{cite("T3.6")};
  standing(mmm);
  all_div(mmm, zero, "zero-side");
  all_div(mmm, inf, "infinity-side");
  Route smd{cite("T3.6")};
  standing(smd);
  all_div(smd, inf, "infinity-side");

  const auto no_mlmm = some_conv(cite("T3.7", 0), zero, "zero-side", true);
  const auto no_mmm = some_conv(cite("T3.7", 1), inf, "infinity-side", true);

  rep.elmm_mlmm = detail::decide("elmm_mlmm", {mlmm}, no_mlmm);
  rep.z_is_martingale = detail::decide("z_is_martingale", {mlmm}, no_mlmm);
  rep.smd = detail::decide("smd", {smd}, no_mmm);
  rep.emm_mmm = detail::decide("emm_mmm", {mmm}, concat(no_mmm, no_mlmm));
  rep.bubble = detail::bubble_from(rep.elmm_mlmm, rep.smd, rep.emm_mmm);

  // The MLMM leaves the chain law alone, so it is structure preserving when it exists.
  auto preserved = [&](const Verdict& base, const char* what) {
    Route r{cite("T5.2")};
    r.need(base.status == Status::Holds, what, to_string(base.status), std::string(what) + " not established");
    return r;
  };
  const auto no_l = some_conv(cite("T3.9"), zero, "zero-side", false);
  const auto no_m = some_conv(cite("T3.9"), inf, "infinity-side", false);
  rep.structure_preserving_L =
      detail::decide("structure_preserving_L", {preserved(rep.elmm_mlmm, "mlmm")}, no_l);
  rep.structure_preserving_M =
      detail::decide("structure_preserving_M", {preserved(rep.emm_mmm, "mmm")}, concat(no_m, no_l));
  return rep;
}

/// Price P = E(S) for an Ito process S on the real line, density Z = E(-int theta dW).
inline ArbitrageReport classify_ito_market(const ItoEnvelopeModel& m, const QuadOptions& opt = {}) {
  using detail::Route;
  const auto& at = m.attestations;
  ArbitrageReport rep;
  rep.model_kind = "ito";

  const auto upper = reduced_const_u_test(m.upper_a, m.interval, Boundary::Upper, opt);
  rep.tests.push_back({0, "reduced upper_a", "upper", upper});
  std::optional<BoundaryVerdict> lower;
  if (m.lower_a) {
    lower = reduced_const_u_test(*m.lower_a, m.interval, Boundary::Upper, opt);
    rep.tests.push_back({0, "reduced lower_a", "upper", *lower});
  }

  Route elmm{cite("T3.2", 0)};
  elmm.attest(at.localizing_sequence_m1, "localizing_sequence_m1")
      .attest(at.envelope_upper, "envelope_upper");
  Route emm{cite("T3.2", 1)};
  emm.inputs = elmm.inputs;
  emm.missing = elmm.missing;
  emm.need(upper.status == Convergence::Divergent, "integral 1/upper_a", detail::describe(upper),
           "integral of 1/upper_a not divergent");

  Route no_smd{cite("T3.4")};
  if (lower) {
    no_smd.attest(at.yw("one,lower_a"), "yw one,lower_a").attest(at.envelope_lower, "envelope_lower");
    no_smd.need(lower->status == Convergence::Convergent, "integral 1/lower_a",
                detail::describe(*lower), "integral of 1/lower_a not convergent");
  } else {
    no_smd.missing.push_back("lower_a envelope required");
  }

  Route z_strict{cite("T2.3")};
  z_strict.missing.push_back("no strictness criterion for the density on the real line");

  rep.elmm_mlmm = detail::decide("elmm_mlmm", {elmm}, {});
  rep.z_is_martingale = detail::decide("z_is_martingale", {elmm}, {z_strict});
  rep.smd = detail::decide("smd", {emm}, {no_smd});
  rep.emm_mmm = detail::decide("emm_mmm", {emm}, {no_smd});
  rep.bubble = detail::bubble_from(rep.elmm_mlmm, rep.smd, rep.emm_mmm);
  return rep;
}

inline ArbitrageReport classify_market(const MarketModel& m, const QuadOptions& opt = {}) {
  if (m.is_switching()) return classify_switching_market(m.switching(), opt);
  return classify_ito_market(m.ito(), opt);
}

/// Switching CEV with sigma(x, j) = x^beta(j): MLMM iff min beta >= 1,
/// MMM iff all beta = 1, Z a SMD iff max beta <= 1.
inline ArbitrageReport cev_closed_form(const std::vector<double>& betas) {
  if (betas.empty()) throw std::invalid_argument("cev_closed_form: no regimes");
  for (double b : betas)
    if (!(b > 0.0)) throw std::invalid_argument("cev_closed_form: beta must be positive");
  const double lo = *std::min_element(betas.begin(), betas.end());
  const double hi = *std::max_element(betas.begin(), betas.end());
  std::ostringstream os;
  os.precision(17);
  os << '(';
  for (std::size_t j = 0; j < betas.size(); ++j) os << (j ? ", " : "") << betas[j];
  os << ')';
  auto mk = [&](bool holds) {
    Verdict v;
    v.status = holds ? Status::Holds : Status::Fails;
    v.certificate = cite("CEV");
    v.inputs = {{"beta", os.str()}};
    return v;
  };
  ArbitrageReport rep;
  rep.model_kind = "cev";
  rep.elmm_mlmm = mk(lo >= 1.0);
  rep.z_is_martingale = rep.elmm_mlmm;
  rep.emm_mmm = mk(lo == 1.0 && hi == 1.0);
  rep.smd = mk(hi <= 1.0);
  rep.bubble = detail::bubble_from(rep.elmm_mlmm, rep.smd, rep.emm_mmm);
  rep.structure_preserving_L = rep.elmm_mlmm;
  rep.structure_preserving_M = rep.emm_mmm;
  return rep;
}

// ---------------------------------------------------------------------------
// Output.

inline nlohmann::ordered_json to_json(const Verdict& v) {
  nlohmann::ordered_json j;
  j["status"] = to_string(v.status);
  if (v.certificate)
    j["certificate"] = {{"id", v.certificate->id}, {"quote", v.certificate->quote}};
  else
    j["certificate"] = nullptr;
  auto inputs = nlohmann::ordered_json::array();
  for (const auto& in : v.inputs) inputs.push_back({{"name", in.name}, {"value", in.value}});
  j["inputs"] = inputs;
  j["reason"] = v.reason;
  return j;
}

inline nlohmann::ordered_json to_json(const ArbitrageReport& r) {
  nlohmann::ordered_json j;
  j["model"] = r.model_kind;
  nlohmann::ordered_json v;
  v["smd"] = to_json(r.smd);
  v["elmm_mlmm"] = to_json(r.elmm_mlmm);
  v["emm_mmm"] = to_json(r.emm_mmm);
  v["bubble"] = to_json(r.bubble);
  v["structure_preserving_L"] =
      r.structure_preserving_L ? to_json(*r.structure_preserving_L) : nlohmann::ordered_json(nullptr);
  v["structure_preserving_M"] =
      r.structure_preserving_M ? to_json(*r.structure_preserving_M) : nlohmann::ordered_json(nullptr);
  v["z_is_martingale"] = to_json(r.z_is_martingale);
  j["verdicts"] = v;
  auto tests = nlohmann::ordered_json::array();
  for (const auto& t : r.tests) {
    nlohmann::ordered_json e;
    e["regime"] = t.regime + 1;
    e["test"] = t.test;
    e["boundary"] = t.boundary;
    e["status"] = to_string(t.verdict.status);
    e["rule"] = t.verdict.rule;
    if (std::isfinite(t.verdict.estimate))
      e["estimate"] = t.verdict.estimate;
    else
      e["estimate"] = "inf";
    if (!t.verdict.diagnostic.empty()) e["diagnostic"] = t.verdict.diagnostic;
    tests.push_back(e);
  }
  j["tests"] = tests;
  j["decided"] = r.decided();
  return j;
}

inline std::string to_table(const ArbitrageReport& r) {
  std::ostringstream os;
  auto row = [&](const char* name, const Verdict& v) {
    std::string cert = v.certificate ? v.certificate->id : "-";
    os << std::left;
    os.width(24);
    os << name;
    os.width(14);
    os << to_string(v.status);
    os.width(8);
    os << cert;
    os << (v.status == Status::Inconclusive ? v.reason : std::string()) << '\n';
  };
  os << "model: " << r.model_kind << '\n';
  row("smd", r.smd);
  row("elmm_mlmm", r.elmm_mlmm);
  row("emm_mmm", r.emm_mmm);
  row("bubble", r.bubble);
  if (r.structure_preserving_L) row("structure_preserving_L", *r.structure_preserving_L);
  if (r.structure_preserving_M) row("structure_preserving_M", *r.structure_preserving_M);
  row("z_is_martingale", r.z_is_martingale);
  return os.str();
}

}  // namespace noarb
