// noarb: classify market models, estimate martingale defects, tilt regime
// chains and dump simulated paths.
//
// Exit codes: 0 success (classify: every verdict decided), 2 when the run
// finished but its answer is not clean (an inconclusive verdict, a duality
// gap, a failed check), 1 on any error.

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "noarb/classify.hpp"
#include "noarb/config.hpp"
#include "noarb/measure.hpp"
#include "noarb/simkit.hpp"

using namespace noarb;
using json = nlohmann::ordered_json;

namespace {

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> paths;
  std::optional<int> depth;
  std::optional<double> dt;
  std::optional<unsigned> workers;
  bool deterministic = false;
  bool verify = false;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void add_common(CLI::App* cmd, Options& o, bool sim) {
  cmd->add_option("--config", o.config, "model config file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", o.out, "write the report here");
  cmd->add_flag("--deterministic", o.deterministic, "omit timestamps and timings from reports");
  if (!sim) {
    cmd->add_option("--depth", o.depth, "quadrature ladder rungs")->check(CLI::Range(2, 1000));
    return;
  }
  cmd->add_option("--seed", o.seed, "random seed (required unless the config sets one)");
  cmd->add_option("--paths", o.paths, "number of paths")->check(CLI::PositiveNumber);
  cmd->add_option("--depth", o.depth, "localization ladder depth")->check(CLI::Range(1, 1000));
  cmd->add_option("--dt", o.dt, "base time step")->check(CLI::PositiveNumber);
  cmd->add_option("--workers", o.workers, "worker threads")->check(CLI::Range(1, 1024));
}

SimConfig sim_config(const Options& o, const RunConfig& rc, std::size_t default_paths) {
  SimConfig cfg;
  const auto seed = o.seed ? o.seed : rc.run.seed;
  if (!seed) throw UsageError("a seed is required for simulation: pass --seed or set [run] seed");
  cfg.seed = *seed;
  cfg.n_paths = o.paths.value_or(rc.run.paths.value_or(default_paths));
  cfg.workers = o.workers.value_or(rc.run.workers.value_or(default_workers()));
  if (auto d = o.depth ? o.depth : rc.run.depth) cfg.policy.depth = *d;
  if (auto d = o.dt ? o.dt : rc.run.dt) cfg.policy.dt = *d;
  if (rc.run.kappa) cfg.policy.kappa = *rc.run.kappa;
  if (rc.run.scheme) cfg.policy.scheme = *rc.run.scheme;
  return cfg;
}

const SwitchingModel& need_switching(const RunConfig& rc, const char* cmd) {
  if (!rc.model.is_switching())
    throw UsageError(std::string(cmd) + " needs a switching model (kind = switching)");
  return rc.model.switching();
}

void check_valid(const MarketModel& m) {
  const auto rep = validate(m);
  if (!rep.ok()) throw ValidationError(rep);
}

std::string iso_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

class Run {
 public:
  explicit Run(const Options& o) : o_(o), start_(std::chrono::steady_clock::now()) {}

  void stamp(json& j) const {
    if (o_.deterministic) return;
    j["generated_at"] = iso_now();
    j["elapsed_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

  void emit(const std::string& text) const {
    if (o_.out.empty()) return;
    std::ofstream f(o_.out, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + o_.out);
    f << text;
  }

 private:
  const Options& o_;
  std::chrono::steady_clock::time_point start_;
};

json to_json(const MCEstimate& e) {
  json j;
  j["mean"] = e.mean;
  j["std_error"] = e.std_error;
  j["ci95"] = {e.ci95_low, e.ci95_high};
  j["n_paths"] = e.n_paths;
  j["flagged"] = e.flagged;
  j["warnings"] = e.warnings;
  return j;
}

json sim_json(const SimConfig& c, double T) {
  return {{"seed", c.seed}, {"paths", c.n_paths}, {"horizon", T}, {"dt", c.policy.base_dt(T)},
          {"scheme", to_string(c.policy.scheme)}, {"kappa", c.policy.kappa}, {"depth", c.policy.depth}};
}

std::string fixed(double v, int prec = 6) {
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

// ---------------------------------------------------------------------------

int cmd_classify(const Options& o) {
  Run run(o);
  const auto rc = load_config(o.config);
  check_valid(rc.model);
  QuadOptions q;
  if (auto d = o.depth ? o.depth : rc.run.depth) q.rungs = *d;
  const auto rep = classify_market(rc.model, q);
  std::cout << to_table(rep);
  auto j = to_json(rep);
  run.stamp(j);
  run.emit(j.dump(2) + "\n");
  return rep.decided() ? 0 : 2;
}

int cmd_defect(const Options& o) {
  Run run(o);
  const auto rc = load_config(o.config);
  const auto& m = need_switching(rc, "defect");
  check_valid(rc.model);
  const double T = rc.model.horizon;
  const auto cfg = sim_config(o, rc, 10000);

  const auto direct = martingale_defect_direct(m, T, cfg);
  const auto expl = explosion_probability(girsanov_tilt(m), T, cfg);
  const double gap = direct.mean - expl.limit.mean;
  const double gap_se = std::hypot(direct.std_error, expl.limit.std_error);
  const bool agree = std::fabs(gap) <= 3.0 * gap_se || gap == 0.0;

  std::vector<std::string> warnings = direct.warnings;
  for (const auto& w : expl.warnings) warnings.push_back(w);
  if (!agree)
    warnings.push_back("duality gap " + fixed(gap) + " exceeds 3 combined standard errors (" + fixed(3 * gap_se) + ")");

  std::cout << "E[Z_T] direct      " << fixed(direct.mean) << " +- " << fixed(direct.std_error, 3)
            << "   defect " << fixed(1.0 - direct.mean) << '\n'
            << "E[Z_T] explosion   " << fixed(expl.limit.mean) << " +- " << fixed(expl.limit.std_error, 3)
            << "   (level " << cfg.policy.depth << (expl.plateau ? ", plateau" : ", no plateau") << ")\n"
            << "gap                " << fixed(gap) << " (3 se = " << fixed(3 * gap_se, 3) << ")\n";
  if (!warnings.empty()) {
    std::cout << "warnings:\n";
    for (const auto& w : warnings) std::cout << "  - " << w << '\n';
  }

  json j;
  j["command"] = "defect";
  j["simulation"] = sim_json(cfg, T);
  j["direct"] = to_json(direct);
  j["direct"]["defect"] = 1.0 - direct.mean;
  json lv = json::array();
  for (const auto& l : expl.levels)
    lv.push_back({{"level", l.level}, {"lower", l.lower}, {"upper", l.upper}, {"survival", l.survival},
                  {"std_error", l.std_error}});
  j["explosion"] = {{"limit", to_json(expl.limit)}, {"plateau", expl.plateau}, {"levels", lv}};
  j["gap"] = {{"value", gap}, {"combined_std_error", gap_se}, {"within_3_se", agree}};
  j["warnings"] = warnings;
  run.stamp(j);
  run.emit(j.dump(2) + "\n");
  return agree ? 0 : 2;
}

int cmd_tilt(const Options& o) {
  Run run(o);
  const auto rc = load_config(o.config);
  const auto& m = need_switching(rc, "tilt");
  check_valid(rc.model);
  if (!rc.run.tilt) throw UsageError("tilt needs [run] tilt = f1, ..., fN in the config");
  const TiltVector f(*rc.run.tilt);

  RunConfig out = rc;
  out.model.model = tilt_model(m, f);
  const auto text = serialize_config(out);
  const auto& qs = std::get<SwitchingModel>(out.model.model).q;

  std::ostringstream summary;
  summary << "; Q* = Q tilted by f = (";
  for (std::size_t i = 0; i < f.size(); ++i) summary << (i ? ", " : "") << config_detail::number(f[i]);
  summary << ")\n";
  for (std::size_t i = 0; i < qs.size(); ++i) {
    summary << ";   ";
    for (std::size_t k = 0; k < qs.size(); ++k) summary << " " << std::setw(22) << config_detail::number(qs(i, k));
    summary << '\n';
  }

  int code = 0;
  if (o.verify) {
    const auto cfg = sim_config(o, rc, 100000);
    const auto rep = verify_tilt_law(m.q, f, m.regimes.initial, rc.model.horizon, cfg);
    summary << "; verification with " << cfg.n_paths << " chains, seed " << cfg.seed << '\n';
    for (const auto& e : rep.entries)
      summary << ";   " << std::left << std::setw(20) << e.statistic << std::right << std::setw(12)
              << fixed(e.reweighted) << std::setw(12) << fixed(e.direct) << "  z = " << std::setw(8)
              << fixed(e.z_score(), 3) << (e.pass ? "  ok" : "  FAIL") << '\n';
    summary << "; " << (rep.passed() ? "tilt law verified" : "tilt law NOT verified") << '\n';
    if (!rep.passed()) code = 2;
  }
  std::cout << summary.str();
  if (o.out.empty())
    std::cout << '\n' << text;
  else
    run.emit(text);
  return code;
}

int cmd_simulate(const Options& o) {
  const auto rc = load_config(o.config);
  const auto& m = need_switching(rc, "simulate");
  check_valid(rc.model);
  const auto cfg = sim_config(o, rc, 10);
  const auto paths = simulate_paths(m, rc.model.horizon, cfg);
  std::ostringstream csv;
  write_paths_csv(csv, paths);
  Run run(o);
  if (o.out.empty())
    std::cout << csv.str();
  else
    run.emit(csv.str());
  std::size_t stopped = 0;
  for (const auto& p : paths) stopped += p.status != PathStatus::Alive;
  if (stopped) std::cerr << stopped << " of " << paths.size() << " paths stopped early\n";
  return 0;
}

int cmd_validate(const Options& o) {
  Run run(o);
  const auto rc = load_config(o.config);
  const auto rep = validate(rc.model);
  json checks = json::array();
  for (const auto& c : rep.checks) {
    std::cout << std::left << std::setw(30) << c.name << " " << std::setw(15) << to_string(c.status) << c.detail << '\n';
    checks.push_back({{"name", c.name}, {"status", to_string(c.status)}, {"detail", c.detail}});
  }
  json j;
  j["command"] = "validate";
  j["ok"] = rep.ok();
  j["checks"] = checks;
  j["canonical_config"] = serialize_config(rc);
  run.stamp(j);
  run.emit(j.dump(2) + "\n");
  return rep.ok() ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"No-arbitrage classification and Monte Carlo checks for one-asset market models"};
  app.require_subcommand(1);
  Options o;
  auto* classify = app.add_subcommand("classify", "run the integral tests and print the verdicts");
  add_common(classify, o, false);
  auto* defect = app.add_subcommand("defect", "estimate E[Z_T] directly and through explosion probabilities");
  add_common(defect, o, true);
  auto* tilt = app.add_subcommand("tilt", "tilt the regime chain by [run] tilt and print the tilted model");
  add_common(tilt, o, true);
  tilt->add_flag("--verify", o.verify, "check the tilted law by importance sampling");
  auto* simulate = app.add_subcommand("simulate", "write simulated paths as CSV");
  add_common(simulate, o, true);
  auto* check = app.add_subcommand("validate", "check a model config");
  add_common(check, o, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*classify) return cmd_classify(o);
    if (*defect) return cmd_defect(o);
    if (*tilt) return cmd_tilt(o);
    if (*simulate) return cmd_simulate(o);
    return cmd_validate(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
  } catch (const ValidationError& e) {
    std::cerr << e.what() << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
  }
  return 1;
}
