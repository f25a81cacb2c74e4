#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "noarb/config.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Sandbox {
 public:
  Sandbox() : dir_(fs::temp_directory_path() / ("noarb_cli_" + std::to_string(::getpid()))) {
    fs::create_directories(dir_);
  }
  ~Sandbox() { fs::remove_all(dir_); }

  fs::path file(const std::string& name, const std::string& text) const {
    const auto p = dir_ / name;
    std::ofstream(p, std::ios::binary) << text;
    return p;
  }
  fs::path path(const std::string& name) const { return dir_ / name; }

  Result run(const std::string& args) const {
    const auto out = dir_ / "stdout", err = dir_ / "stderr";
    const std::string cmd = std::string(NOARB_CLI) + " " + args + " >" + out.string() + " 2>" + err.string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
  }

 private:
  fs::path dir_;
};

std::string shipped(const std::string& name) { return std::string(NOARB_CONFIG_DIR) + "/" + name; }

const char* kTwoState = R"([model]
kind = switching
[regimes]
count = 2
[q]
row1 = -1, 1
row2 = 1, -1
[coefficients]
sigma1 = 0.2*x
sigma2 = 0.3*x
[attestations]
es = true, true
c_locally_bounded = true
[run]
seed = 9
paths = 2000
)";

}  // namespace

TEST_CASE("classify exit codes") {
  Sandbox box;
  SECTION("decided report") {
    const auto out = box.path("r.json");
    const auto r = box.run("classify --config " + shipped("cev_bubble.ini") + " --out " + out.string());
    CHECK(r.code == 0);
    const auto j = nlohmann::json::parse(slurp(out));
    CHECK(j["verdicts"]["bubble"]["status"] == "holds");
    CHECK(j["decided"] == true);
    CHECK(j.contains("generated_at"));
  }
  SECTION("unknown attestation leaves verdicts open") {
    std::string text = kTwoState;
    text.replace(text.find("es = true, true"), 15, "es = unknown, unknown");
    text.replace(text.find("sigma2 = 0.3*x"), 14, "sigma2 = x^1.5 + x");
    const auto r = box.run("classify --config " + box.file("u.ini", text).string());
    CHECK(r.code == 2);
    CHECK(r.out.find("inconclusive") != std::string::npos);
  }
  SECTION("syntax error") {
    std::string text = kTwoState;
    text.replace(text.find("sigma1 = 0.2*x"), 14, "sigma1 = 0.2*(x");
    const auto r = box.run("classify --config " + box.file("bad.ini", text).string());
    CHECK(r.code == 1);
    CHECK(r.err.find("syntax error") != std::string::npos);
    CHECK(r.err.find("bad.ini:9") != std::string::npos);
  }
  SECTION("invalid model") {
    std::string text = kTwoState;
    text.replace(text.find("sigma1 = 0.2*x"), 14, "sigma1 = 0*x");
    CHECK(box.run("classify --config " + box.file("z.ini", text).string()).code == 1);
    CHECK(box.run("validate --config " + box.file("z.ini", text).string()).code == 2);
  }
  SECTION("missing file and bad flags") {
    CHECK(box.run("classify --config /nonexistent.ini").code == 1);
    CHECK(box.run("classify").code == 1);
    CHECK(box.run("frobnicate --config x").code == 1);
  }
}

TEST_CASE("defect command") {
  Sandbox box;
  SECTION("zero kernel gives zero defect") {
    std::string text = kTwoState;
    text.replace(text.find("sigma2 = 0.3*x"), 14, "sigma2 = 0.3*x\nc1 = 0\nc2 = 0");
    const auto out = box.path("d.json");
    const auto r = box.run("defect --config " + box.file("c0.ini", text).string() + " --out " + out.string());
    CHECK(r.code == 0);
    const auto j = nlohmann::json::parse(slurp(out));
    CHECK(j["direct"]["defect"] == 0.0);
    CHECK(j["direct"]["std_error"] == 0.0);
  }
  SECTION("lognormal switching density is a martingale") {
    const auto out = box.path("m.json");
    const auto r = box.run("defect --config " + shipped("cev_martingale.ini") + " --paths 20000 --out " + out.string());
    CHECK(r.code == 0);
    const auto j = nlohmann::json::parse(slurp(out));
    const double lo = j["direct"]["ci95"][0], hi = j["direct"]["ci95"][1];
    CHECK(lo <= 1.0);
    CHECK(1.0 <= hi);
  }
  SECTION("inverse Bessel shows a defect on both estimators") {
    const auto out = box.path("b.json");
    const auto r = box.run("defect --config " + shipped("inverse_bessel.ini") + " --paths 5000 --out " + out.string());
    CHECK(r.code == 0);
    const auto j = nlohmann::json::parse(slurp(out));
    CHECK(j["direct"]["mean"].get<double>() < 0.8);
    CHECK(j["explosion"]["limit"]["mean"].get<double>() < 0.8);
    CHECK(j["gap"]["within_3_se"] == true);
  }
  SECTION("no seed, no run") {
    std::string text = kTwoState;
    text.replace(text.find("seed = 9"), 8, "");
    const auto r = box.run("defect --config " + box.file("ns.ini", text).string());
    CHECK(r.code == 1);
    CHECK(r.err.find("seed") != std::string::npos);
    CHECK(box.run("defect --config " + box.path("ns.ini").string() + " --seed 4 --paths 100").code == 0);
  }
  SECTION("ito models are rejected") {
    CHECK(box.run("defect --config " + shipped("ito_quadratic.ini") + " --seed 1").code == 1);
  }
}

TEST_CASE("tilt command") {
  Sandbox box;
  SECTION("unit tilt reproduces the canonical input") {
    const auto in = box.file("t1.ini", std::string(kTwoState) + "tilt = 1, 1\n");
    const auto out = box.path("t1.out.ini");
    const auto r = box.run("tilt --config " + in.string() + " --out " + out.string());
    CHECK(r.code == 0);
    CHECK(slurp(out) == noarb::serialize_config(noarb::load_config(in.string())));
  }
  SECTION("f = (1, 2) on the symmetric chain") {
    const auto in = box.file("t2.ini", std::string(kTwoState) + "tilt = 1, 2\n");
    const auto out = box.path("t2.out.ini");
    const auto r = box.run("tilt --config " + in.string() + " --out " + out.string());
    CHECK(r.code == 0);
    const auto cfg = noarb::load_config(out.string());
    CHECK(cfg.model.switching().q.rows() == std::vector<std::vector<double>>{{-2, 2}, {0.5, -0.5}});
  }
  SECTION("verification") {
    const auto r = box.run("tilt --verify --config " + shipped("tilt_two_state.ini") + " --paths 20000");
    CHECK(r.code == 0);
    CHECK(r.out.find("tilt law verified") != std::string::npos);
  }
  SECTION("tilt vector is required") {
    CHECK(box.run("tilt --config " + box.file("t0.ini", kTwoState).string()).code == 1);
  }
}

TEST_CASE("simulate command") {
  Sandbox box;
  const auto out = box.path("p.csv");
  const auto r = box.run("simulate --config " + box.file("s.ini", kTwoState).string() +
                         " --paths 3 --dt 0.125 --out " + out.string());
  CHECK(r.code == 0);
  const auto csv = slurp(out);
  CHECK(csv.rfind("path_id,t,regime,state,z\n", 0) == 0);
  CHECK(csv.find("\n2,1,") != std::string::npos);  // last path reaches T
}

TEST_CASE("deterministic reports do not depend on worker count") {
  Sandbox box;
  for (const std::string cmd : {"defect", "simulate"}) {
    std::string first;
    for (int w : {1, 4, 8}) {
      const auto out = box.path(cmd + std::to_string(w));
      const auto r = box.run(cmd + " --config " + shipped("cev_bubble.ini") + " --paths 3000 --deterministic --workers " +
                             std::to_string(w) + " --out " + out.string());
      REQUIRE(r.code == 0);
      const auto text = slurp(out);
      if (first.empty()) first = text;
      INFO(cmd << " workers " << w);
      CHECK(text == first);
    }
  }
}
