#include <catch2/catch_amalgamated.hpp>

#include <functional>
#include <set>

#include "noarb/classify.hpp"

using namespace noarb;

namespace {

RegularityAttestation attest_all(std::size_t n) {
  RegularityAttestation a;
  a.es_condition.assign(n, Tri::True);
  a.c_locally_bounded = Tri::True;
  a.localizing_sequence_m1 = Tri::True;
  a.envelope_upper = Tri::True;
  a.envelope_lower = Tri::True;
  a.drift_bounds = Tri::True;
  for (const char* f : {"one", "lower_u", "upper_u"})
    for (const char* g : {"lower_a", "upper_a"}) a.yw_pair[std::string(f) + "," + g] = Tri::True;
  return a;
}

std::string num(double v) { return DomainError::format_double(v); }

SwitchingModel cev(const std::vector<double>& betas) {
  SwitchingModel m;
  const std::size_t n = betas.size();
  m.regimes.count = n;
  std::vector<std::vector<double>> rows(n, std::vector<double>(n, 1.0));
  m.q = n == 1 ? QMatrix() : QMatrix::from_rates(rows);
  for (double b : betas) {
    m.b.push_back(Expr::number(0.0));
    m.sigma.push_back(Expr::parse("x^" + num(b)));
  }
  m.attestations = attest_all(n);
  return m;
}

std::vector<const Verdict*> fields(const ArbitrageReport& r) {
  std::vector<const Verdict*> v{&r.smd, &r.elmm_mlmm, &r.emm_mmm, &r.bubble, &r.z_is_martingale};
  if (r.structure_preserving_L) v.push_back(&*r.structure_preserving_L);
  if (r.structure_preserving_M) v.push_back(&*r.structure_preserving_M);
  return v;
}

void check_same_status(const ArbitrageReport& a, const ArbitrageReport& b) {
  const auto fa = fields(a), fb = fields(b);
  REQUIRE(fa.size() == fb.size());
  for (std::size_t k = 0; k < fa.size(); ++k) CHECK(to_string(fa[k]->status) == to_string(fb[k]->status));
}

// Each attestation that is true, flipped to unknown one at a time.
std::vector<RegularityAttestation> weakenings(const RegularityAttestation& a) {
  std::vector<RegularityAttestation> out;
  for (std::size_t j = 0; j < a.es_condition.size(); ++j)
    if (a.es_condition[j] == Tri::True) {
      auto w = a;
      w.es_condition[j] = Tri::Unknown;
      out.push_back(w);
    }
  for (auto member : {&RegularityAttestation::c_locally_bounded, &RegularityAttestation::localizing_sequence_m1,
                      &RegularityAttestation::envelope_upper, &RegularityAttestation::envelope_lower,
                      &RegularityAttestation::drift_bounds, &RegularityAttestation::chain_recurrent})
    if (a.*member == Tri::True) {
      auto w = a;
      w.*member = Tri::Unknown;
      out.push_back(w);
    }
  for (const auto& [k, v] : a.yw_pair)
    if (v == Tri::True) {
      auto w = a;
      w.yw_pair[k] = Tri::Unknown;
      out.push_back(w);
    }
  return out;
}

void check_monotone(const ArbitrageReport& strong, const ArbitrageReport& weak) {
  const auto fs = fields(strong), fw = fields(weak);
  REQUIRE(fs.size() == fw.size());
  for (std::size_t k = 0; k < fs.size(); ++k) {
    if (fw[k]->status == Status::Inconclusive) continue;
    CHECK(fw[k]->status == fs[k]->status);
  }
}

ItoEnvelopeModel ito(const std::string& upper_a, const std::string& lower_a = "") {
  ItoEnvelopeModel m;
  m.upper_a = Expr::parse(upper_a);
  if (!lower_a.empty()) m.lower_a = Expr::parse(lower_a);
  m.attestations = attest_all(1);
  return m;
}

}  // namespace

TEST_CASE("citation table", "[classify]") {
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& c : citation_table()) {
    CHECK_FALSE(c.quote.empty());
    CHECK(seen.insert({c.id, c.quote}).second);
  }
  CHECK(cite("T3.7", 0).quote == "and the MLMM does not exist");
  CHECK(cite("T3.7", 1).quote == "the MMM does not exist");
  CHECK(cite("T3.4").quote == "Then, no SMD exists.");
  CHECK_THROWS_AS(cite("T9.9"), std::out_of_range);
  CHECK_THROWS_AS(cite("T3.4", 1), std::out_of_range);
}

TEST_CASE("switching CEV examples", "[classify]") {
  SECTION("beta = (1, 1.5): bubble") {
    const auto r = classify_switching_market(cev({1.0, 1.5}));
    CHECK(r.elmm_mlmm.status == Status::Holds);
    CHECK(r.elmm_mlmm.certificate->id == "T3.6");
    CHECK(r.emm_mmm.status == Status::Fails);
    CHECK(r.emm_mmm.certificate->id == "T3.7");
    CHECK(r.smd.status == Status::Fails);
    CHECK(r.bubble.status == Status::Holds);
    CHECK(r.structure_preserving_L->status == Status::Holds);
    CHECK(r.structure_preserving_L->certificate->id == "T5.2");
    CHECK(r.structure_preserving_M->status == Status::Fails);
    CHECK(r.structure_preserving_M->certificate->id == "T3.9");
    CHECK(r.z_is_martingale.status == Status::Holds);
    CHECK(r.decided());
    CHECK(r.tests.size() == 4);
  }
  SECTION("beta = (1, 1): MMM") {
    const auto r = classify_switching_market(cev({1.0, 1.0}));
    CHECK(r.emm_mmm.status == Status::Holds);
    CHECK(r.smd.status == Status::Holds);
    CHECK(r.bubble.status == Status::Fails);
    CHECK(r.structure_preserving_M->status == Status::Holds);
  }
  SECTION("beta = (0.5, 1): no MLMM, SMD") {
    const auto r = classify_switching_market(cev({0.5, 1.0}));
    CHECK(r.elmm_mlmm.status == Status::Fails);
    CHECK(r.elmm_mlmm.certificate->quote == "and the MLMM does not exist");
    CHECK(r.z_is_martingale.status == Status::Fails);
    CHECK(r.smd.status == Status::Holds);
    CHECK(r.emm_mmm.status == Status::Fails);
    CHECK(r.structure_preserving_L->status == Status::Fails);
  }
}

TEST_CASE("closed form examples", "[classify]") {
  auto r = cev_closed_form({1.0, 1.0});
  CHECK(r.emm_mmm.status == Status::Holds);
  r = cev_closed_form({2.0});
  CHECK(r.elmm_mlmm.status == Status::Holds);
  CHECK(r.smd.status == Status::Fails);
  CHECK(r.bubble.status == Status::Holds);
  r = cev_closed_form({0.5});
  CHECK(r.elmm_mlmm.status == Status::Fails);
  CHECK(r.smd.status == Status::Holds);
  CHECK(r.bubble.status == Status::Fails);
  CHECK_THROWS(cev_closed_form({}));
  CHECK_THROWS(cev_closed_form({0.0}));
}

TEST_CASE("numeric verdicts agree with the closed form on beta grids", "[classify][slow]") {
  std::vector<double> grid;
  for (int k = 1; k <= 10; ++k) grid.push_back(0.25 * k);

  std::vector<std::vector<double>> cases;
  for (double a : grid) cases.push_back({a});
  for (double a : grid)
    for (double b : grid) cases.push_back({a, b});
  for (double a : grid)
    for (double b : grid)
      for (double c : grid) cases.push_back({a, b, c});

  int agree = 0;
  for (const auto& betas : cases) {
    const auto num_r = classify_switching_market(cev(betas));
    const auto cf = cev_closed_form(betas);
    const auto fn = fields(num_r), fc = fields(cf);
    bool same = fn.size() == fc.size();
    for (std::size_t k = 0; same && k < fn.size(); ++k) same = fn[k]->status == fc[k]->status;
    if (!same) {
      std::string s;
      for (double b : betas) s += num(b) + " ";
      UNSCOPED_INFO("disagreement at beta = " << s);
    }
    agree += same;
    CHECK(consistent(num_r));
  }
  CHECK(agree == static_cast<int>(cases.size()));
}

TEST_CASE("single-regime reduction", "[classify]") {
  for (double beta : {0.5, 0.75, 1.0, 1.25, 2.0}) {
    INFO("beta = " << beta);
    check_same_status(classify_switching_market(cev({beta})), cev_closed_form({beta}));
  }
}

TEST_CASE("missing attestations only weaken verdicts", "[classify]") {
  for (const auto& betas : std::vector<std::vector<double>>{{1.0, 1.5}, {0.5, 1.0}, {1.0, 1.0}, {2.0}}) {
    const auto m = cev(betas);
    const auto strong = classify_switching_market(m);
    for (const auto& w : weakenings(m.attestations)) {
      auto mw = m;
      mw.attestations = w;
      const auto weak = classify_switching_market(mw);
      check_monotone(strong, weak);
      CHECK(consistent(weak));
    }
  }
  for (const auto& m : {ito("1"), ito("1 + x^2", "1 + x^2"), ito("sqrt(1 + x^2)", "sqrt(1 + x^2)")}) {
    const auto strong = classify_ito_market(m);
    for (const auto& w : weakenings(m.attestations)) {
      auto mw = m;
      mw.attestations = w;
      check_monotone(strong, classify_ito_market(mw));
    }
  }
}

TEST_CASE("ES attestations gate both branches", "[classify]") {
  auto m = cev({1.0, 1.5});
  m.attestations.es_condition = {Tri::True, Tri::Unknown};
  auto r = classify_switching_market(m);
  CHECK(r.elmm_mlmm.status == Status::Inconclusive);  // holds route needs ES everywhere
  CHECK(r.smd.status == Status::Inconclusive);         // the convergent regime lacks ES
  CHECK(r.bubble.status == Status::Inconclusive);
  CHECK_FALSE(r.decided());
  CHECK(r.smd.reason.find("es2 not attested") != std::string::npos);

  m.attestations.es_condition = {Tri::Unknown, Tri::True};
  r = classify_switching_market(m);
  CHECK(r.smd.status == Status::Fails);
  CHECK(r.elmm_mlmm.status == Status::Inconclusive);
  CHECK(r.structure_preserving_M->status == Status::Fails);
}

TEST_CASE("recurrence requirement for the failure branches", "[classify]") {
  // One-way chain: regime 2 is absorbing and regime 1 is never revisited.
  auto m = cev({1.0, 1.5});
  m.q = QMatrix({{-1.0, 1.0}, {0.0, 0.0}});
  m.attestations.chain_recurrent = Tri::False;
  auto r = classify_switching_market(m);
  CHECK(r.smd.status == Status::Inconclusive);
  CHECK(r.elmm_mlmm.status == Status::Holds);
  // The structure-preserving result needs no recurrence.
  CHECK(r.structure_preserving_M->status == Status::Fails);

  // Started in the explosive regime, recurrence is not needed.
  m.regimes.initial = 1;
  r = classify_switching_market(m);
  CHECK(r.smd.status == Status::Fails);
  CHECK(r.bubble.status == Status::Holds);
}

TEST_CASE("state interval other than the half line is rejected", "[classify]") {
  auto m = cev({1.0});
  m.interval = StateInterval{0.0, 10.0, 1.0};
  CHECK_THROWS_AS(classify_switching_market(m), std::invalid_argument);
}

TEST_CASE("Ito envelope markets", "[classify]") {
  SECTION("bounded volatility") {
    const auto r = classify_ito_market(ito("1"));
    CHECK(r.elmm_mlmm.status == Status::Holds);
    CHECK(r.elmm_mlmm.certificate->quote == "is a localizing sequence for");
    CHECK(r.emm_mmm.status == Status::Holds);
    CHECK(r.emm_mmm.certificate->quote == "then Q is an EMM and Z is a SMD");
    CHECK(r.smd.status == Status::Holds);
    CHECK(r.bubble.status == Status::Fails);
    CHECK_FALSE(r.structure_preserving_L);
    CHECK(consistent(r));
  }
  SECTION("linear growth") {
    const auto r = classify_ito_market(ito("sqrt(1 + x^2)", "sqrt(1 + x^2)"));
    CHECK(r.emm_mmm.status == Status::Holds);
    CHECK(r.bubble.status == Status::Fails);
  }
  SECTION("quadratic lower envelope") {
    const auto r = classify_ito_market(ito("1 + x^2", "1 + x^2"));
    CHECK(r.elmm_mlmm.status == Status::Holds);
    CHECK(r.smd.status == Status::Fails);
    CHECK(r.smd.certificate->id == "T3.4");
    CHECK(r.emm_mmm.status == Status::Fails);
    CHECK(r.bubble.status == Status::Holds);
    CHECK(consistent(r));
  }
  SECTION("without the localizing sequence") {
    auto m = ito("1 + x^2", "1 + x^2");
    m.attestations.localizing_sequence_m1 = Tri::Unknown;
    const auto r = classify_ito_market(m);
    CHECK(r.elmm_mlmm.status == Status::Inconclusive);
    CHECK(r.smd.status == Status::Fails);
    CHECK(r.bubble.status == Status::Inconclusive);
  }
  SECTION("no lower envelope and slow upper") {
    const auto r = classify_ito_market(ito("1 + x^2"));
    CHECK(r.smd.status == Status::Inconclusive);
    CHECK(r.smd.reason.find("lower_a envelope required") != std::string::npos);
  }
}

TEST_CASE("stochastic exponential verdicts", "[classify]") {
  SECTION("envelope form, sigma = z^2 with unit drift ratio") {
    EnvelopeInput in;
    in.interval = StateInterval::positive_half_line();
    in.lower_a = Expr::parse("x^4");
    in.upper_a = Expr::parse("x^4");
    in.lower_u = Expr::number(1.0);
    in.upper_u = Expr::number(1.0);
    in.attestations = attest_all(1);
    const auto v = classify_exponential(in);
    CHECK(v.status == Status::Fails);
    CHECK(v.certificate->id == "T2.3");

    in.attestations.yw_pair.clear();
    CHECK(classify_exponential(in).status == Status::Inconclusive);
  }
  SECTION("envelope form, bounded volatility on the line") {
    EnvelopeInput in;
    in.upper_a = Expr::number(1.0);
    in.lower_a = Expr::number(1.0);
    in.lower_u = Expr::number(0.0);
    in.upper_u = Expr::number(0.0);
    in.attestations = attest_all(1);
    const auto v = classify_exponential(in);
    CHECK(v.status == Status::Holds);
    CHECK(v.certificate->id == "T2.1");
  }
  SECTION("switching, sigma = z in both regimes, c = 0") {
    auto m = cev({1.0, 1.0});
    m.c = std::vector<Expr>{Expr::number(0.0), Expr::number(0.0)};
    const auto v = classify_exponential(m);
    CHECK(v.status == Status::Holds);
    CHECK(v.certificate->id == "C2.8");
  }
  SECTION("switching CEV (1, 2), price-density kernel") {
    auto m = cev({1.0, 2.0});
    m.c = price_density_kernel(m);
    std::vector<BoundaryRecord> recs;
    const auto v = classify_exponential(m, {}, &recs);
    CHECK(v.status == Status::Fails);
    REQUIRE(recs.size() == 4);
    CHECK(recs[3].regime == 1);
    CHECK(recs[3].boundary == "upper");
    CHECK(recs[3].verdict.status == Convergence::Convergent);
    CHECK(recs[1].verdict.status == Convergence::Divergent);
  }
  SECTION("MLMM kernel agrees with the price tests") {
    for (const auto& betas : std::vector<std::vector<double>>{{0.5, 1.0}, {1.0, 1.5}, {1.0, 1.0}, {0.75}}) {
      const auto m = cev(betas);
      CHECK(to_string(classify_exponential(m).status) ==
            to_string(classify_switching_market(m).z_is_martingale.status));
    }
  }
  SECTION("non-recurrent chain") {
    auto m = cev({1.0, 2.0});
    m.c = price_density_kernel(m);
    m.q = QMatrix({{-1.0, 1.0}, {0.0, 0.0}});
    m.attestations.chain_recurrent = Tri::False;
    CHECK(classify_exponential(m).status == Status::Inconclusive);
    m.regimes.initial = 1;
    const auto v = classify_exponential(m);
    CHECK(v.status == Status::Fails);
    CHECK(v.certificate->id == "T2.6ii");

    auto h = cev({1.0, 1.0});
    h.c = std::vector<Expr>{Expr::number(0.0), Expr::number(0.0)};
    h.q = m.q;
    h.attestations.chain_recurrent = Tri::False;
    CHECK(classify_exponential(h).certificate->id == "T2.6i");
  }
}

TEST_CASE("contradictory routes raise", "[classify]") {
  detail::Route h{cite("T3.6")}, f{cite("T3.7")};
  CHECK_THROWS_AS(detail::decide("x", {h}, {f}), InternalContradiction);
  f.missing.push_back("nope");
  CHECK(detail::decide("x", {h}, {f}).status == Status::Holds);

  Verdict holds, fails;
  holds.status = Status::Holds;
  fails.status = Status::Fails;
  CHECK_THROWS_AS(detail::bubble_from(holds, fails, holds), InternalContradiction);
}

TEST_CASE("report serialization", "[classify]") {
  const auto r = classify_switching_market(cev({1.0, 1.5}));
  const auto j = to_json(r);
  CHECK(j["model"] == "switching");
  for (const char* k : {"smd", "elmm_mlmm", "emm_mmm", "bubble", "structure_preserving_L",
                        "structure_preserving_M", "z_is_martingale"})
    CHECK(j["verdicts"].contains(k));
  CHECK(j["verdicts"]["bubble"]["status"] == "holds");
  CHECK(j["verdicts"]["bubble"]["inputs"][1]["value"] == "smd fails");
  CHECK(j["tests"].size() == 4);
  CHECK(j.dump() == to_json(classify_switching_market(cev({1.0, 1.5}))).dump());

  const auto ji = to_json(classify_ito_market(ito("1")));
  CHECK(ji["verdicts"]["structure_preserving_L"].is_null());

  const auto t = to_table(r);
  CHECK(t.find("bubble") != std::string::npos);
  CHECK(t.find("T3.6") != std::string::npos);
}
