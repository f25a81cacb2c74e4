#pragma once

// Model configuration files: INI-style text with sections [model], [regimes],
// [q], [coefficients], [attestations] and [run]. The grammar is described in
// README.md. Parsing goes through boost::property_tree; this layer adds
// the schema, line/field diagnostics and a canonical writer.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "noarb/model.hpp"
#include "noarb/simkit.hpp"

namespace noarb {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string source, std::size_t line, std::string field, const std::string& msg)
      : std::runtime_error(format(source, line, field, msg)),
        source_(std::move(source)),
        line_(line),
        field_(std::move(field)) {}

  std::size_t line() const noexcept { return line_; }  // 0 when not tied to a line
  const std::string& field() const noexcept { return field_; }
  const std::string& source() const noexcept { return source_; }

 private:
  std::string source_;
  std::size_t line_;
  std::string field_;

  static std::string format(const std::string& src, std::size_t line, const std::string& field,
                            const std::string& msg) {
    std::string s = src;
    if (line > 0) s += ":" + std::to_string(line);
    s += ": ";
    if (!field.empty()) s += field + ": ";
    return s + msg;
  }
};

/// Knobs from [run]. Unset entries fall back to the command defaults.
struct RunSettings {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> paths;
  std::optional<int> depth;
  std::optional<double> dt;
  std::optional<double> kappa;
  std::optional<Scheme> scheme;
  std::optional<unsigned> workers;
  std::optional<std::vector<double>> tilt;  // f for the tilt command

  bool operator==(const RunSettings&) const = default;
};

struct RunConfig {
  MarketModel model;
  RunSettings run;
};

namespace config_detail {

inline std::string trim(std::string s) {
  auto sp = [](unsigned char c) { return std::isspace(c) != 0; };
  s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), sp));
  s.erase(std::find_if_not(s.rbegin(), s.rend(), sp).base(), s.end());
  return s;
}

inline std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(trim(cur));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

/// Shortest decimal that reads back to the same double; infinities as inf.
inline std::string number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return DomainError::format_double(v);
}

inline std::string tri(Tri t) { return to_string(t); }

class Reader {
 public:
  Reader(const std::string& text, std::string source) : text_(text), source_(std::move(source)) {
    std::istringstream is(text);
    try {
      boost::property_tree::ini_parser::read_ini(is, tree_);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw ConfigError(source_, e.line(), "", e.message());
    }
    index_lines();
  }

  bool has_section(const std::string& s) const { return tree_.find(s) != tree_.not_found(); }

  std::optional<std::string> get(const std::string& section, const std::string& key) {
    used_.insert({section, key});
    const auto sec = tree_.find(section);
    if (sec == tree_.not_found()) return std::nullopt;
    const auto it = sec->second.find(key);
    if (it == sec->second.not_found()) return std::nullopt;
    return strip_comment(it->second.data());
  }

  std::string require(const std::string& section, const std::string& key) {
    auto v = get(section, key);
    if (!v) fail(section, key, "missing required field");
    return *v;
  }

  std::vector<std::string> keys(const std::string& section) const {
    std::vector<std::string> k;
    const auto sec = tree_.find(section);
    if (sec == tree_.not_found()) return k;
    for (const auto& kv : sec->second) k.push_back(kv.first);
    return k;
  }

  [[noreturn]] void fail(const std::string& section, const std::string& key, const std::string& msg) const {
    throw ConfigError(source_, line_of(section, key), "[" + section + "]" + (key.empty() ? "" : " " + key), msg);
  }

  double real(const std::string& section, const std::string& key, const std::string& v) const {
    const std::string s = lower(trim(v));
    if (s == "inf" || s == "+inf") return kInf;
    if (s == "-inf") return -kInf;
    double out = 0.0;
    const char* b = s.data();
    const char* e = b + s.size();
    if (!s.empty() && *b == '+') ++b;
    auto [p, ec] = std::from_chars(b, e, out);
    if (ec != std::errc{} || p != e || s.empty()) fail(section, key, "expected a number, got '" + v + "'");
    return out;
  }

  std::uint64_t unsigned_int(const std::string& section, const std::string& key, const std::string& v) const {
    const std::string s = trim(v);
    std::uint64_t out = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec != std::errc{} || p != s.data() + s.size() || s.empty())
      fail(section, key, "expected a non-negative integer, got '" + v + "'");
    return out;
  }

  Tri tri(const std::string& section, const std::string& key, const std::string& v) const {
    const auto s = lower(trim(v));
    if (s == "true" || s == "yes") return Tri::True;
    if (s == "false" || s == "no") return Tri::False;
    if (s == "unknown" || s == "?") return Tri::Unknown;
    fail(section, key, "expected true, false or unknown, got '" + v + "'");
  }

  Expr expr(const std::string& section, const std::string& key, const std::string& v) const {
    try {
      return Expr::parse(v);
    } catch (const SyntaxError& e) {
      fail(section, key, e.what());
    } catch (const UnknownIdentifier& e) {
      fail(section, key, e.what());
    }
  }

  /// Every key present must have been read by the schema.
  void reject_unknown() const {
    for (const auto& sec : tree_) {
      static const std::set<std::string> known{"model", "regimes", "q", "coefficients", "attestations", "run"};
      if (!known.count(sec.first)) fail(sec.first, "", "unknown section");
      for (const auto& kv : sec.second)
        if (!used_.count({sec.first, kv.first})) fail(sec.first, kv.first, "unknown field");
    }
  }

  void mark_used(const std::string& section, const std::string& key) { used_.insert({section, key}); }

 private:
  std::string text_;
  std::string source_;
  boost::property_tree::ptree tree_;
  std::map<std::pair<std::string, std::string>, std::size_t> lines_;
  std::map<std::string, std::size_t> section_lines_;
  std::set<std::pair<std::string, std::string>> used_;

  static std::string strip_comment(const std::string& v) {
    const auto p = v.find_first_of(";#");
    return trim(p == std::string::npos ? v : v.substr(0, p));
  }

  void index_lines() {
    std::istringstream is(text_);
    std::string line, section;
    for (std::size_t n = 1; std::getline(is, line); ++n) {
      const auto t = trim(line);
      if (t.empty() || t[0] == ';' || t[0] == '#') continue;
      if (t.front() == '[' && t.back() == ']') {
        section = trim(t.substr(1, t.size() - 2));
        section_lines_.emplace(section, n);
        continue;
      }
      const auto eq = t.find('=');
      if (eq != std::string::npos) lines_.emplace(std::make_pair(section, trim(t.substr(0, eq))), n);
    }
  }

  std::size_t line_of(const std::string& section, const std::string& key) const {
    if (!key.empty()) {
      auto it = lines_.find({section, key});
      if (it != lines_.end()) return it->second;
    }
    auto s = section_lines_.find(section);
    return s == section_lines_.end() ? 0 : s->second;
  }
};

inline StateInterval parse_interval(Reader& r, const std::string& v) {
  auto s = trim(v);
  if (s.size() < 2 || s.front() != '(' || s.back() != ')')
    r.fail("model", "interval", "expected an open interval like (0, inf)");
  const auto parts = split(s.substr(1, s.size() - 2), ',');
  if (parts.size() != 2) r.fail("model", "interval", "expected two endpoints");
  const double lo = r.real("model", "interval", parts[0]);
  const double hi = r.real("model", "interval", parts[1]);
  if (!(lo < hi)) r.fail("model", "interval", "lower endpoint must be below the upper one");
  return {lo, hi, StateInterval::default_x0(lo, hi)};
}

inline void read_attestations(Reader& r, RegularityAttestation& a, std::size_t regimes) {
  const std::string sec = "attestations";
  auto flag = [&](const char* key, Tri& out) {
    if (auto v = r.get(sec, key)) out = r.tri(sec, key, *v);
  };
  flag("c_locally_bounded", a.c_locally_bounded);
  flag("localizing_sequence_m1", a.localizing_sequence_m1);
  flag("envelope_upper", a.envelope_upper);
  flag("envelope_lower", a.envelope_lower);
  flag("drift_bounds", a.drift_bounds);
  flag("chain_recurrent", a.chain_recurrent);
  if (auto v = r.get(sec, "es")) {
    const auto parts = split(*v, ',');
    if (parts.size() != regimes)
      r.fail(sec, "es", "expected one entry per regime (" + std::to_string(regimes) + ")");
    for (const auto& p : parts) a.es_condition.push_back(r.tri(sec, "es", p));
  }
  static const std::set<std::string> yw_f{"lower_u", "upper_u", "one"}, yw_g{"lower_a", "upper_a"};
  for (const auto& key : r.keys(sec)) {
    if (key.rfind("yw:", 0) != 0) continue;
    const auto pair = split(key.substr(3), ',');
    if (pair.size() != 2 || !yw_f.count(pair[0]) || !yw_g.count(pair[1]))
      r.fail(sec, key, "expected yw:F,G with F in {lower_u, upper_u, one} and G in {lower_a, upper_a}");
    a.yw_pair[pair[0] + "," + pair[1]] = r.tri(sec, key, *r.get(sec, key));
  }
}

inline SwitchingModel read_switching(Reader& r) {
  SwitchingModel m;
  m.interval = parse_interval(r, r.get("model", "interval").value_or("(0, inf)"));
  if (auto v = r.get("model", "p0")) m.p0 = r.real("model", "p0", *v);
  if (!m.interval.contains(m.p0)) r.fail("model", "p0", "initial value must lie inside the interval");
  m.interval.x0 = m.p0;

  const auto n = r.unsigned_int("regimes", "count", r.require("regimes", "count"));
  if (n < 1 || n > 64) r.fail("regimes", "count", "need between 1 and 64 regimes");
  m.regimes.count = n;
  const auto j0 = r.unsigned_int("regimes", "initial", r.get("regimes", "initial").value_or("1"));
  if (j0 < 1 || j0 > n) r.fail("regimes", "initial", "initial regime must be in 1.." + std::to_string(n));
  m.regimes.initial = j0 - 1;
  if (auto v = r.get("regimes", "labels")) {
    m.regimes.labels = split(*v, ',');
    if (m.regimes.labels.size() != n) r.fail("regimes", "labels", "expected one label per regime");
  }

  std::vector<std::vector<double>> rows;
  for (std::size_t i = 1; i <= n; ++i) {
    const std::string key = "row" + std::to_string(i);
    if (n == 1 && !r.get("q", key)) {
      rows.push_back({0.0});
      continue;
    }
    const auto parts = split(r.require("q", key), ',');
    if (parts.size() != n) r.fail("q", key, "expected " + std::to_string(n) + " entries");
    std::vector<double> row;
    for (const auto& p : parts) row.push_back(r.real("q", key, p));
    rows.push_back(row);
  }
  try {
    m.q = QMatrix(rows);
  } catch (const std::invalid_argument& e) {
    r.fail("q", "", e.what());
  }

  const std::string cs = "coefficients";
  std::vector<Expr> c;
  std::size_t c_count = 0;
  for (std::size_t j = 1; j <= n; ++j) {
    const auto idx = std::to_string(j);
    m.b.push_back(r.expr(cs, "b" + idx, r.get(cs, "b" + idx).value_or("0")));
    m.sigma.push_back(r.expr(cs, "sigma" + idx, r.require(cs, "sigma" + idx)));
    if (auto v = r.get(cs, "c" + idx)) {
      c.push_back(r.expr(cs, "c" + idx, *v));
      ++c_count;
    }
  }
  if (c_count != 0 && c_count != n) r.fail(cs, "c1", "give c for every regime or for none");
  if (c_count == n) m.c = c;

  read_attestations(r, m.attestations, n);
  return m;
}

inline ItoEnvelopeModel read_ito(Reader& r) {
  ItoEnvelopeModel m;
  m.interval = parse_interval(r, r.get("model", "interval").value_or("(-inf, inf)"));
  if (auto v = r.get("model", "x0")) m.interval.x0 = r.real("model", "x0", *v);
  if (!m.interval.contains(m.interval.x0)) r.fail("model", "x0", "reference point must lie inside the interval");
  if (auto v = r.get("model", "s0")) m.s0 = r.real("model", "s0", *v);
  const std::string cs = "coefficients";
  m.upper_a = r.expr(cs, "upper_a", r.require(cs, "upper_a"));
  if (auto v = r.get(cs, "lower_a")) m.lower_a = r.expr(cs, "lower_a", *v);
  if (auto v = r.get(cs, "upper_u")) m.upper_u = r.expr(cs, "upper_u", *v);
  if (auto v = r.get(cs, "lower_u")) m.lower_u = r.expr(cs, "lower_u", *v);
  if (auto v = r.get(cs, "zeta")) m.zeta = r.expr(cs, "zeta", *v);
  read_attestations(r, m.attestations, 0);
  return m;
}

inline RunSettings read_run(Reader& r) {
  const std::string s = "run";
  RunSettings run;
  auto positive = [&](const char* key, double v) {
    if (!(v > 0.0) || !std::isfinite(v)) r.fail(s, key, "must be positive and finite");
    return v;
  };
  if (auto v = r.get(s, "seed")) run.seed = r.unsigned_int(s, "seed", *v);
  if (auto v = r.get(s, "paths")) {
    run.paths = r.unsigned_int(s, "paths", *v);
    if (*run.paths == 0) r.fail(s, "paths", "must be positive");
  }
  if (auto v = r.get(s, "depth")) {
    const auto d = r.unsigned_int(s, "depth", *v);
    if (d < 1 || d > 1000) r.fail(s, "depth", "must be between 1 and 1000");
    run.depth = static_cast<int>(d);
  }
  if (auto v = r.get(s, "dt")) run.dt = positive("dt", r.real(s, "dt", *v));
  if (auto v = r.get(s, "kappa")) run.kappa = positive("kappa", r.real(s, "kappa", *v));
  if (auto v = r.get(s, "workers")) {
    const auto w = r.unsigned_int(s, "workers", *v);
    if (w < 1 || w > 1024) r.fail(s, "workers", "must be between 1 and 1024");
    run.workers = static_cast<unsigned>(w);
  }
  if (auto v = r.get(s, "scheme")) {
    const auto k = lower(*v);
    if (k == "euler") run.scheme = Scheme::Euler;
    else if (k == "milstein") run.scheme = Scheme::Milstein;
    else r.fail(s, "scheme", "expected euler or milstein");
  }
  if (auto v = r.get(s, "tilt")) {
    std::vector<double> f;
    for (const auto& p : split(*v, ',')) {
      const double x = r.real(s, "tilt", p);
      if (!(x > 0.0) || !std::isfinite(x)) r.fail(s, "tilt", "tilt entries must be positive and finite");
      f.push_back(x);
    }
    run.tilt = f;
  }
  return run;
}

}  // namespace config_detail

/// Parses config text. `source` names it in diagnostics.
inline RunConfig parse_config(const std::string& text, const std::string& source = "config") {
  using namespace config_detail;
  Reader r(text, source);
  RunConfig cfg;
  const auto kind = lower(r.require("model", "kind"));
  if (auto v = r.get("model", "horizon")) {
    cfg.model.horizon = r.real("model", "horizon", *v);
    if (!(cfg.model.horizon > 0.0) || !std::isfinite(cfg.model.horizon))
      r.fail("model", "horizon", "must be positive and finite");
  }
  if (kind == "switching") {
    cfg.model.model = read_switching(r);
  } else if (kind == "ito") {
    if (r.has_section("regimes") || r.has_section("q"))
      r.fail("model", "kind", "ito models take no [regimes] or [q] section");
    cfg.model.model = read_ito(r);
  } else {
    r.fail("model", "kind", "expected switching or ito");
  }
  cfg.run = read_run(r);
  if (cfg.run.tilt && cfg.model.is_switching() && cfg.run.tilt->size() != cfg.model.switching().n_regimes())
    r.fail("run", "tilt", "expected one entry per regime");
  r.reject_unknown();
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, 0, "", "cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

/// Canonical text form: fixed section and key order, shortest round-trip
/// numbers, printed expressions.
inline std::string serialize_config(const RunConfig& cfg) {
  using config_detail::number;
  using config_detail::tri;
  std::ostringstream os;
  const auto& mm = cfg.model;
  auto interval = [&](const StateInterval& iv) { return "(" + number(iv.lower) + ", " + number(iv.upper) + ")"; };
  auto attest = [&](const RegularityAttestation& a, bool per_regime) {
    os << "\n[attestations]\n";
    if (per_regime && !a.es_condition.empty()) {
      os << "es = ";
      for (std::size_t j = 0; j < a.es_condition.size(); ++j) os << (j ? ", " : "") << tri(a.es_condition[j]);
      os << '\n';
    }
    os << "c_locally_bounded = " << tri(a.c_locally_bounded) << '\n'
       << "localizing_sequence_m1 = " << tri(a.localizing_sequence_m1) << '\n'
       << "envelope_upper = " << tri(a.envelope_upper) << '\n'
       << "envelope_lower = " << tri(a.envelope_lower) << '\n'
       << "drift_bounds = " << tri(a.drift_bounds) << '\n'
       << "chain_recurrent = " << tri(a.chain_recurrent) << '\n';
    for (const auto& [k, v] : a.yw_pair) os << "yw:" << k << " = " << tri(v) << '\n';
  };

  os << "[model]\n";
  if (mm.is_switching()) {
    const auto& m = mm.switching();
    os << "kind = switching\n"
       << "interval = " << interval(m.interval) << '\n'
       << "p0 = " << number(m.p0) << '\n'
       << "horizon = " << number(mm.horizon) << '\n';
    os << "\n[regimes]\ncount = " << m.regimes.count << "\ninitial = " << m.regimes.initial + 1 << '\n';
    if (!m.regimes.labels.empty()) {
      os << "labels = ";
      for (std::size_t j = 0; j < m.regimes.labels.size(); ++j) os << (j ? ", " : "") << m.regimes.labels[j];
      os << '\n';
    }
    os << "\n[q]\n";
    for (std::size_t i = 0; i < m.q.size(); ++i) {
      os << "row" << i + 1 << " = ";
      for (std::size_t j = 0; j < m.q.size(); ++j) os << (j ? ", " : "") << number(m.q(i, j));
      os << '\n';
    }
    os << "\n[coefficients]\n";
    for (std::size_t j = 0; j < m.n_regimes(); ++j) {
      os << "b" << j + 1 << " = " << m.b[j].to_string() << '\n'
         << "sigma" << j + 1 << " = " << m.sigma[j].to_string() << '\n';
      if (m.c) os << "c" << j + 1 << " = " << (*m.c)[j].to_string() << '\n';
    }
    attest(m.attestations, true);
  } else {
    const auto& m = mm.ito();
    os << "kind = ito\n"
       << "interval = " << interval(m.interval) << '\n'
       << "x0 = " << number(m.interval.x0) << '\n'
       << "s0 = " << number(m.s0) << '\n'
       << "horizon = " << number(mm.horizon) << '\n';
    os << "\n[coefficients]\nupper_a = " << m.upper_a.to_string() << '\n';
    if (m.lower_a) os << "lower_a = " << m.lower_a->to_string() << '\n';
    if (m.upper_u) os << "upper_u = " << m.upper_u->to_string() << '\n';
    if (m.lower_u) os << "lower_u = " << m.lower_u->to_string() << '\n';
    os << "zeta = " << m.zeta.to_string() << '\n';
    attest(m.attestations, false);
  }

  const auto& r = cfg.run;
  std::ostringstream run;
  if (r.seed) run << "seed = " << *r.seed << '\n';
  if (r.paths) run << "paths = " << *r.paths << '\n';
  if (r.depth) run << "depth = " << *r.depth << '\n';
  if (r.dt) run << "dt = " << number(*r.dt) << '\n';
  if (r.kappa) run << "kappa = " << number(*r.kappa) << '\n';
  if (r.scheme) run << "scheme = " << to_string(*r.scheme) << '\n';
  if (r.workers) run << "workers = " << *r.workers << '\n';
  if (r.tilt) {
    run << "tilt = ";
    for (std::size_t j = 0; j < r.tilt->size(); ++j) run << (j ? ", " : "") << number((*r.tilt)[j]);
    run << '\n';
  }
  if (!run.str().empty()) os << "\n[run]\n" << run.str();
  return os.str();
}

/// Field-by-field equality of parsed configs (expressions compared structurally).
inline bool same_config(const RunConfig& a, const RunConfig& b) {
  auto same_exprs = [](const std::vector<Expr>& x, const std::vector<Expr>& y) {
    if (x.size() != y.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i)
      if (!x[i].structurally_equals(y[i])) return false;
    return true;
  };
  auto same_opt = [](const std::optional<Expr>& x, const std::optional<Expr>& y) {
    return x.has_value() == y.has_value() && (!x || x->structurally_equals(*y));
  };
  auto same_iv = [](const StateInterval& x, const StateInterval& y) {
    return x.lower == y.lower && x.upper == y.upper && x.x0 == y.x0;
  };
  if (a.run != b.run || a.model.horizon != b.model.horizon || a.model.is_switching() != b.model.is_switching())
    return false;
  if (a.model.is_switching()) {
    const auto &x = a.model.switching(), &y = b.model.switching();
    return same_iv(x.interval, y.interval) && x.p0 == y.p0 && x.regimes.count == y.regimes.count &&
           x.regimes.initial == y.regimes.initial && x.regimes.labels == y.regimes.labels &&
           x.q.rows() == y.q.rows() && same_exprs(x.b, y.b) && same_exprs(x.sigma, y.sigma) &&
           x.c.has_value() == y.c.has_value() && (!x.c || same_exprs(*x.c, *y.c)) &&
           x.attestations == y.attestations;
  }
  const auto &x = a.model.ito(), &y = b.model.ito();
  return same_iv(x.interval, y.interval) && x.s0 == y.s0 && x.upper_a.structurally_equals(y.upper_a) &&
         same_opt(x.lower_a, y.lower_a) && same_opt(x.upper_u, y.upper_u) && same_opt(x.lower_u, y.lower_u) &&
         x.zeta.structurally_equals(y.zeta) && x.attestations == y.attestations;
}

}  // namespace noarb
