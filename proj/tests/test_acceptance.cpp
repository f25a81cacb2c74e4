// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
// Runtime budgets are part of each criterion and are checked as well.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "noarb/classify.hpp"
#include "noarb/measure.hpp"
#include "noarb/quadtest.hpp"
#include "noarb/simkit.hpp"

using namespace noarb;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
};

std::string num(double v, int prec = 6) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

RegularityAttestation attest_all(std::size_t n) {
  RegularityAttestation a;
  a.es_condition.assign(n, Tri::True);
  a.c_locally_bounded = Tri::True;
  a.localizing_sequence_m1 = Tri::True;
  return a;
}

SwitchingModel make_model(std::vector<std::string> sigma, std::vector<std::string> c,
                          std::vector<std::vector<double>> rates = {}) {
  SwitchingModel m;
  const std::size_t n = sigma.size();
  m.regimes.count = n;
  m.q = n == 1 ? QMatrix() : QMatrix::from_rates(rates.empty() ? std::vector<std::vector<double>>(n, std::vector<double>(n, 1.0)) : rates);
  for (std::size_t j = 0; j < n; ++j) {
    m.b.push_back(Expr::number(0.0));
    m.sigma.push_back(Expr::parse(sigma[j]));
  }
  if (!c.empty()) {
    std::vector<Expr> k;
    for (const auto& s : c) k.push_back(Expr::parse(s));
    m.c = k;
  }
  m.attestations = attest_all(n);
  return m;
}

SimConfig sim(std::size_t n, std::uint64_t seed, double dt, double kappa = 0.1, int depth = 24) {
  SimConfig c;
  c.n_paths = n;
  c.seed = seed;
  c.workers = default_workers();
  c.policy.dt = dt;
  c.policy.kappa = kappa;
  c.policy.depth = depth;
  return c;
}

bool within(double a, double sa, double b, double sb, double k = 3.0) {
  return std::fabs(a - b) <= k * std::hypot(sa, sb);
}

// ---------------------------------------------------------------------------

Outcome cev_matrix() {
  Outcome o;
  const std::vector<double> betas{0.5, 1.0, 1.5};
  std::vector<std::vector<double>> cases;
  for (double a : betas) cases.push_back({a});
  for (double a : betas)
    for (double b : betas) cases.push_back({a, b});
  std::size_t agree = 0;
  for (const auto& bs : cases) {
    std::vector<std::string> sig;
    for (double b : bs) sig.push_back("x^" + num(b));
    const auto r = classify_switching_market(make_model(sig, {}));
    const auto cf = cev_closed_form(bs);
    const double lo = *std::min_element(bs.begin(), bs.end());
    const double hi = *std::max_element(bs.begin(), bs.end());
    auto st = [](bool h) { return h ? Status::Holds : Status::Fails; };
    const bool ok = r.elmm_mlmm.status == st(lo >= 1.0) && r.emm_mmm.status == st(lo == 1.0 && hi == 1.0) &&
                    r.smd.status == st(hi <= 1.0) && r.elmm_mlmm.status == cf.elmm_mlmm.status &&
                    r.emm_mmm.status == cf.emm_mmm.status && r.smd.status == cf.smd.status &&
                    r.bubble.status == cf.bubble.status && r.z_is_martingale.status == cf.z_is_martingale.status &&
                    r.structure_preserving_L->status == cf.structure_preserving_L->status &&
                    r.structure_preserving_M->status == cf.structure_preserving_M->status;
    agree += ok;
    if (!ok) o.require(false, "beta " + cf.elmm_mlmm.inputs.front().value + " disagrees");
  }
  o.detail = std::to_string(agree) + "/" + std::to_string(cases.size()) + " models agree" +
             (o.detail.empty() ? "" : ": " + o.detail);
  return o;
}

Outcome quadrature_oracle() {
  Outcome o;
  std::size_t correct = 0, total = 0;
  for (double p : {0.5, 0.9, 0.98, 1.0, 1.02, 1.1, 2.0, 3.0}) {
    const auto expect = p > 1.0 ? Convergence::Convergent : Convergence::Divergent;
    const bool may_abstain = std::fabs(p - 1.0) < 0.02;
    const auto inf = classify_integral([p](double z) { return std::pow(z, -p); }, StateInterval::positive_half_line(),
                                       Boundary::Upper);
    const auto zero = classify_integral([p](double z) { return std::pow(z, p - 2.0); },
                                        StateInterval::positive_half_line(), Boundary::Lower);
    for (const auto& v : {inf, zero}) {
      ++total;
      const bool ok = v.status == expect || (may_abstain && v.status == Convergence::Undetermined);
      correct += ok;
      o.require(ok, "p=" + num(p) + " " + to_string(v.status));
    }
  }
  o.detail = std::to_string(correct) + "/" + std::to_string(total) + " integrals" +
             (o.detail.empty() ? "" : ": " + o.detail);
  return o;
}

Outcome inverse_bessel() {
  Outcome o;
  const auto m = make_model({"x^2"}, {"x"});
  const auto e = martingale_defect_direct(m, 1.0, sim(1000000, 2024, 1.0 / 128));

  // E[1/|(1,0,0) + B_1|] from Gaussian draws.
  std::mt19937_64 gen(99);
  std::normal_distribution<double> n01;
  std::vector<double> v(1000000);
  for (auto& x : v) {
    const double a = 1.0 + n01(gen), b = n01(gen), c = n01(gen);
    x = 1.0 / std::sqrt(a * a + b * b + c * c);
  }
  const auto oracle = summarize(v);
  o.require(within(e.mean, e.std_error, oracle.mean, oracle.std_error), "estimate and oracle differ");
  const auto [lo, hi] = e.ci(2.5758293035489);
  o.require(hi < 1.0, "99% CI reaches 1");
  o.detail = "direct " + num(e.mean) + " +- " + num(e.std_error, 2) + ", oracle " + num(oracle.mean) + " +- " +
             num(oracle.std_error, 2) + ", 99% CI [" + num(lo) + ", " + num(hi) + "]" +
             (o.detail.empty() ? "" : ": " + o.detail);
  return o;
}

Outcome martingale_sanity() {
  Outcome o;
  const auto m = make_model({"x", "x"}, {"0", "0"});
  const auto cfg = sim(100000, 17, 1.0 / 128, 0.1, 40);
  std::vector<double> pt(cfg.n_paths);
  std::size_t stopped = 0;
  std::vector<unsigned char> flag(cfg.n_paths);
  detail::for_each_path(m, 1.0, cfg, [&](std::size_t i, const RegimePath&, const detail::PathState& s) {
    pt[i] = s.x;
    flag[i] = s.status != PathStatus::Alive;
  });
  for (auto f : flag) stopped += f;
  const auto e = summarize(pt);
  o.require(e.ci95_low <= m.p0 && m.p0 <= e.ci95_high, "E[P_T] CI misses P_0");
  o.require(stopped == 0, std::to_string(stopped) + " paths stopped");
  const auto z = martingale_defect_direct(m, 1.0, cfg);
  o.require(z.mean == 1.0 && z.std_error == 0.0, "c = 0 defect not exactly 0");
  o.detail = "E[P_T] " + num(e.mean) + " CI [" + num(e.ci95_low) + ", " + num(e.ci95_high) + "], c=0 defect " +
             num(1.0 - z.mean) + (o.detail.empty() ? "" : ": " + o.detail);
  return o;
}

Outcome duality() {
  Outcome o;
  struct Case {
    const char* name;
    SwitchingModel m;
  };
  const std::vector<Case> suite{
      {"gbm", make_model({"0.4*x"}, {"0.4"})},
      {"bounded kernel", make_model({"x"}, {"1/(1+x)"})},
      {"inverse bessel", make_model({"x^2"}, {"x"})},
      {"cev 1.5", make_model({"x^1.5"}, {"x^0.5"})},
      {"switching gbm", make_model({"0.3*x", "0.6*x"}, {"0.3", "0.6"})},
      {"switching 1,2", make_model({"x", "x^2"}, {"1", "x"})},
  };
  std::string d;
  std::uint64_t seed = 500;
  for (const auto& c : suite) {
    const auto direct = martingale_defect_direct(c.m, 1.0, sim(100000, seed++, 1.0 / 128));
    const auto expl = explosion_probability(girsanov_tilt(c.m), 1.0, sim(100000, seed++, 1.0 / 128));
    const bool ok = within(direct.mean, direct.std_error, expl.limit.mean, expl.limit.std_error);
    o.require(ok, std::string(c.name) + " gap");
    d += std::string(d.empty() ? "" : ", ") + c.name + " " + num(direct.mean, 4) + "/" + num(expl.limit.mean, 4);
  }
  o.detail = d + (o.detail.empty() ? "" : ": " + o.detail);
  return o;
}

Outcome qtilt() {
  Outcome o;
  const QMatrix q({{-1, 1}, {2, -2}});
  const TiltVector f({1, 3});
  const auto qs = tilt_qmatrix(q, f);
  const double hand[2][2] = {{-3.0, 3.0}, {2.0 / 3.0, -2.0 / 3.0}};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      o.require(std::fabs(qs(i, j) - hand[i][j]) <= 1e-15, "entry mismatch");

  std::mt19937_64 gen(6);
  std::uniform_real_distribution<double> rate(0.0, 5.0), logf(-2.3, 2.3);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 2 + t % 5;
    std::vector<std::vector<double>> r(n, std::vector<double>(n, 0.0));
    std::vector<double> fv(n);
    for (std::size_t i = 0; i < n; ++i) {
      fv[i] = std::exp(logf(gen));
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) r[i][j] = rate(gen);
    }
    const auto t_q = tilt_qmatrix(QMatrix::from_rates(r), TiltVector(fv));
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += t_q(i, j);
      worst = std::max(worst, std::fabs(s));
    }
  }
  o.require(worst <= 1e-12, "row sum " + num(worst));

  SimConfig cfg;
  cfg.n_paths = 100000;
  cfg.seed = 61;
  cfg.workers = default_workers();
  const auto rep = verify_tilt_law(q, f, 0, 1.0, cfg);
  for (const auto& s : rep.failures()) o.require(false, s);
  std::string z;
  for (const auto& e : rep.entries) z += (z.empty() ? "" : " ") + num(e.z_score(), 3);
  o.detail = "Q* matches, max |row sum| " + num(worst, 2) + ", z-scores " + z + (o.detail.empty() ? "" : ": " + o.detail);
  return o;
}

Outcome chain_exponential_mean() {
  Outcome o;
  const std::vector<std::pair<QMatrix, TiltVector>> fixtures{
      {QMatrix({{-1, 1}, {2, -2}}), TiltVector({1, 3})},
      {QMatrix({{-1, 1}, {1, -1}}), TiltVector({1, 2})},
      {QMatrix::from_rates({{0, 0.5, 1.5}, {2, 0, 0.25}, {0.75, 0.75, 0}}), TiltVector({1, 0.5, 4})},
  };
  SimConfig cfg;
  cfg.n_paths = 100000;
  cfg.workers = default_workers();
  std::string d;
  for (std::size_t k = 0; k < fixtures.size(); ++k) {
    cfg.seed = 70 + k;
    const auto e = chain_exponential_means(fixtures[k].first, fixtures[k].second, 0, 1.0, {1.0}, cfg).front();
    o.require(std::fabs(e.mean - 1.0) <= 3.0 * e.std_error, "fixture " + std::to_string(k + 1));
    d += (d.empty() ? "" : ", ") + num(e.mean) + " +- " + num(e.std_error, 2);
  }
  o.detail = "E[Z_T] " + d + (o.detail.empty() ? "" : ": " + o.detail);
  return o;
}

Outcome mlmm_preservation() {
  Outcome o;
  SwitchingModel m;
  m.regimes.count = 2;
  m.q = QMatrix({{-1.5, 1.5}, {1, -1}});
  m.b = {Expr::parse("0.1*x^2/(1+x)"), Expr::parse("-0.2*x")};
  m.sigma = {Expr::parse("0.2*x"), Expr::parse("0.4*x")};
  const auto rep = mlmm_preservation_probe(m, 1.0, sim(100000, 81, 1.0 / 64, 0.2, 40));
  std::string d;
  for (const auto& e : rep.transitions.entries) {
    o.require(e.pass, e.statistic);
    d += (d.empty() ? "" : ", ") + e.statistic + " " + num(e.reweighted, 4) + " vs " + num(e.direct, 4);
  }
  o.require(rep.independence.pass, "independence probe");
  o.require(rep.flagged == 0, "stopped paths");
  o.detail = d + ", cov " + num(rep.independence.reweighted, 3) + " +- " + num(rep.independence.diff_se, 2) +
             (o.detail.empty() ? "" : ": " + o.detail);
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism() {
  Outcome o;
  const fs::path dir = fs::temp_directory_path() / ("noarb_acc_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const std::string cfgdir = NOARB_CONFIG_DIR;
  struct Cmd {
    std::string args;
    bool workers;
  };
  const std::vector<Cmd> cmds{
      {"classify --config " + cfgdir + "/cev_bubble.ini", false},
      {"validate --config " + cfgdir + "/change_point.ini", false},
      {"defect --config " + cfgdir + "/inverse_bessel.ini --paths 20000", true},
      {"tilt --verify --config " + cfgdir + "/tilt_two_state.ini --paths 20000", true},
      {"simulate --config " + cfgdir + "/cev_bubble.ini --paths 20", true},
  };
  std::size_t runs = 0;
  for (const auto& c : cmds) {
    std::string first;
    for (int w : {1, 4, 8}) {
      for (int rep = 0; rep < 2; ++rep) {
        const auto out = dir / "report", so = dir / "stdout";
        std::string cmd = std::string(NOARB_CLI) + " " + c.args + " --deterministic --out " + out.string();
        if (c.workers) cmd += " --workers " + std::to_string(w);
        cmd += " >" + so.string() + " 2>/dev/null";
        const int st = std::system(cmd.c_str());
        const int code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
        ++runs;
        const std::string text = std::to_string(code) + "\n" + slurp(so) + "\n" + slurp(out);
        if (first.empty()) first = text;
        if (text != first) o.require(false, c.args.substr(0, c.args.find(' ')) + " differs at workers " + std::to_string(w));
      }
      if (!c.workers) break;
    }
  }
  fs::remove_all(dir);
  o.detail = std::to_string(runs) + " runs over 5 subcommands" + (o.detail.empty() ? "" : ": " + o.detail);
  return o;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "CEV verdict matrix", 30, cev_matrix},
      {2, "quadrature oracle suite", 10, quadrature_oracle},
      {3, "inverse Bessel defect", 300, inverse_bessel},
      {4, "martingale sanity", 120, martingale_sanity},
      {5, "duality check", 600, duality},
      {6, "Q-tilt correctness", 180, qtilt},
      {7, "chain exponential martingale", 120, chain_exponential_mean},
      {8, "MLMM preservation", 180, mlmm_preservation},
      {9, "determinism", 600, determinism},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > c.budget_s) o.require(false, "over the " + num(c.budget_s) + " s budget");
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << c.id << " (" << c.name << ", " << num(secs, 3)
              << " s): " << o.detail << std::endl;
  }
  std::cout << (failed ? std::to_string(failed) + " criteria failed" : "all criteria passed") << std::endl;
  return failed ? 1 : 0;
}
