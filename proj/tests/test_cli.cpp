#include "doctest.h"

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gwpk/container.hpp"
#include "gwpk/scenario.hpp"

using namespace gwpk;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "gwpk_cli_tests" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

struct Cmd {
  int code = -1;
  std::string out;
};

Cmd cli(const std::string& args, const std::string& env = "") {
  const fs::path log = fs::temp_directory_path() / "gwpk_cli_tests" / "stdout.txt";
  fs::create_directories(log.parent_path());
  const std::string cmd = env + " \"" GWPK_CLI_PATH "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int st = std::system(cmd.c_str());
  std::ifstream f(log);
  std::ostringstream os;
  os << f.rdbuf();
  return {WIFEXITED(st) ? WEXITSTATUS(st) : -1, os.str()};
}

fs::path config(const fs::path& dir, const std::string& body) {
  const fs::path p = dir / "config.json";
  std::ofstream(p) << body;
  return p;
}

Cmd run(const std::string& task, const fs::path& cfg, const fs::path& out) {
  return cli("run " + task + " --config \"" + cfg.string() + "\" --output \"" + out.string() + "\"");
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

}  // namespace

TEST_CASE("list") {
  const Cmd all = cli("list");
  CHECK(all.code == 0);
  for (const char* s : {"free", "harmonic", "shear", "anharmonic-bounded", "kicked"})
    CHECK_MESSAGE(all.out.find(std::string(s) + "\t") != std::string::npos, s);
  const Cmd empty = cli("list \"\"");
  CHECK(empty.code == 0);
  CHECK(empty.out == all.out);
  const Cmd none = cli("list no-such-symbol");
  CHECK(none.code == 0);
  CHECK(none.out.empty());
  const Cmd js = cli("list kick --json");
  CHECK(js.code == 0);
  const json j = json::parse(js.out);
  REQUIRE(j.size() == 1);
  CHECK(j[0]["name"] == "kicked");
  CHECK(list_scenarios("").size() == 5);
  CHECK(list_scenarios("zzz").empty());
}

TEST_CASE("flow on the free particle follows (x + 2 t xi, xi)") {
  const fs::path d = scratch("flow");
  const Cmd c = run("flow", config(d, R"({"symbol": "free", "T": 1.0, "lattice": {"nx": 16, "nxi": 16}})"), d / "out");
  CHECK(c.code == 0);
  const Array tr = read_array((d / "out" / "trajectories.gwpk").string());
  REQUIRE(tr.dims.size() == 3);
  CHECK(tr.dims[0] == 9);
  CHECK(tr.dims[2] == 4);
  double worst = 0.0;
  const std::size_t nt = tr.dims[1];
  for (std::size_t s = 0; s < 9; ++s) {
    const double* first = &tr.real[(s * nt) * 4];
    for (std::size_t k = 0; k < nt; ++k) {
      const double* row = &tr.real[(s * nt + k) * 4];
      const double t = row[0];
      worst = std::max(worst, std::abs(row[1] - (first[1] + 2.0 * t * first[2])));
      worst = std::max(worst, std::abs(row[2] - first[2]));
    }
  }
  CHECK(worst < 1e-10);
  const std::string csv = slurp(d / "out" / "trajectories.csv");
  CHECK(csv.rfind("seed,t,x,xi,psi\n", 0) == 0);
  const json m = read_json((d / "out" / "metrics.json").string());
  CHECK(m["pass"] == true);
  CHECK(m["checks"]["det_jacobian_error"]["value"].get<double>() < 1e-12);
  CHECK_FALSE(fs::exists(d / "out" / "error.json"));
}

TEST_CASE("evolve with T = 0 returns the input") {
  const fs::path d = scratch("evolve0");
  const Cmd c = run("evolve", config(d, R"({"symbol": "harmonic", "T": 0, "lattice": {"nx": 16, "nxi": 16},
                                          "initial": {"x0": 1.0, "xi0": -0.5}})"),
                    d / "out");
  CHECK(c.code == 0);
  const Array a = read_array((d / "out" / "initial_state.gwpk").string());
  const Array b = read_array((d / "out" / "evolved_state.gwpk").string());
  CHECK(a.dtype == Array::DType::c128);
  CHECK(a.cdata == b.cdata);
  CHECK(fs::exists(d / "out" / "stft_initial.svg"));
}

TEST_CASE("sparsity-fit on the harmonic oscillator") {
  const fs::path d = scratch("sparsity");
  const Cmd c = run("sparsity-fit", config(d, R"({"symbol": "harmonic", "T": 1.0, "lattice": {"nx": 48, "nxi": 48}})"),
                    d / "out");
  CHECK(c.code == 0);
  const json m = read_json((d / "out" / "metrics.json").string());
  CHECK(m["metrics"]["fit"]["eps"].get<double>() > 0.05);
  CHECK(m["checks"]["eps"]["pass"] == true);
  const std::string svg = slurp(d / "out" / "decay_scatter.svg");
  CHECK(svg.find("<svg") == 0);
  CHECK(svg.find("<line") != std::string::npos);
}

TEST_CASE("config errors exit 2 with a record") {
  const fs::path d = scratch("config");
  const fs::path out = d / "out";
  const std::string o = "\"output\": \"" + out.string() + "\"";
  for (const std::string& body : std::vector<std::string>{R"({"symbol": "harmonic", "colour": 1, )" + o + "}", R"({"grid": {"n": 512, "y_max": 3}, )" + o + "}",
        R"({"modspace": {"weight": {"q": 1}}, )" + o + "}", R"({"symbol": "nope", )" + o + "}",
        R"({"lattice": {"dxi": 0.2}, )" + o + "}", R"({"method": "euler", )" + o + "}",
        R"({"symbol": "shear", "method": "strang_split", )" + o + "}", R"({"T": "one", )" + o + "}",
        R"({"energy": {"N_max": 40}, )" + o + "}", "{not json"}) {
    fs::remove_all(out);
    const Cmd c = cli("run evolve --config \"" + config(d, body).string() + "\"");
    CHECK_MESSAGE(c.code == 2, body);
    CHECK_MESSAGE(c.out.find("\"code\":\"config\"") != std::string::npos, body);
    if (body != "{not json") {
      REQUIRE_MESSAGE(fs::exists(out / "error.json"), body);
      CHECK(read_json((out / "error.json").string())["exit_code"] == 2);
    }
  }
  CHECK(cli("run nonsense --config \"" + config(d, "{}").string() + "\"").code == 2);
  CHECK(cli("run evolve").code == 2);
  CHECK(cli("run evolve --config /no/such/file.json").code == 2);
  CHECK(cli("frobnicate").code == 2);
}

TEST_CASE("config parsing") {
  const ScenarioConfig c = parse_config(json::parse(R"({"symbol": {"quadratic": [[1, 0.5], [0.5, 2]]},
      "lattice": {"dxi": 0.7853981633974483, "nx": 20, "nxi": 20}, "modspace": {"p": 1}})"));
  CHECK(c.symbol_model().kind == SymbolKind::quadratic_form);
  CHECK(c.lattice_q == 6);
  CHECK(c.modspace_p == "1");
  CHECK(c.handle().method == Method::metaplectic_exact);
  CHECK(parse_config(json::parse(R"({"symbol": "free"})")).handle().method == Method::strang_split);
  CHECK_THROWS_AS(parse_config(json::parse(R"({"symbol": {"quadratic": [[1, 0.5], [0.2, 2]]}})")), Error);
  CHECK_THROWS_AS(parse_config(json::parse(R"({"lattice": {"q": 6, "dxi": 0.78}})")), Error);
  CHECK_THROWS_AS(parse_config(json::parse(R"([1, 2])")), Error);
}

TEST_CASE("caustic exits 3 with a record") {
  const fs::path d = scratch("caustic");
  const Cmd c = run("fio", config(d, R"({"symbol": "harmonic", "T": 1.5707963267948966,
                                       "lattice": {"nx": 16, "nxi": 16}})"),
                    d / "out");
  CHECK(c.code == 3);
  const json e = read_json((d / "out" / "error.json").string());
  CHECK(e["code"] == "caustic");
  CHECK(e["exit_code"] == 3);
  CHECK(read_json((d / "out" / "metrics.json").string())["pass"] == false);
}

TEST_CASE("invariant failure exits 1 with a record") {
  // a slack-free propagation check with a tiny neighbourhood cannot absorb the
  // lattice-scale mismatch of the dilated free window
  const fs::path d = scratch("invariant");
  const Cmd c = run("singularities", config(d, R"({"symbol": "free", "T": 1.0, "initial": {"kind": "chirp_bump"},
      "thresholds": {"delta": 0.001, "eps_threshold": 2.0}, "lattice": {"nx": 48, "nxi": 48}})"),
                    d / "out");
  CHECK(c.code == 1);
  const json e = read_json((d / "out" / "error.json").string());
  CHECK(e["code"] == "invariant");
  CHECK(e["failed"].size() >= 1);
  CHECK(fs::exists(d / "out" / "regular_before.png"));
}

TEST_CASE("fio task agrees with the solver") {
  const fs::path d = scratch("fio");
  const Cmd c = run("fio", config(d, R"({"symbol": "harmonic", "T": 1.0, "method": "metaplectic_exact",
                                       "lattice": {"nx": 16, "nxi": 16},
                                       "initial": {"x0": 1.0, "xi0": -0.5}})"),
                    d / "out");
  CHECK(c.code == 0);
  const json m = read_json((d / "out" / "metrics.json").string());
  CHECK(m["metrics"]["aligned_error"].get<double>() < 1e-8);
  CHECK(m["metrics"]["alignment_modulus"].get<double>() ==
        doctest::Approx(1.0 / std::sqrt(std::cos(1.0))).epsilon(1e-6));
  const Array P = read_array((d / "out" / "phase.gwpk").string());
  CHECK(P.dims[0] == 4);
}

TEST_CASE("inspect and artifact round trips") {
  const fs::path d = scratch("inspect");
  const Cmd c = run("energy", config(d, R"({"symbol": "free", "lattice": {"nx": 16, "nxi": 16}})"), d / "out");
  CHECK(c.code == 0);
  const json m = read_json((d / "out" / "metrics.json").string());
  REQUIRE(m["artifacts"].size() >= 1);
  for (const auto& a : m["artifacts"]) {
    const fs::path p = d / "out" / a.get<std::string>();
    const Array arr = read_array(p.string());
    const Cmd ins = cli("inspect \"" + p.string() + "\"");
    CHECK(ins.code == 0);
    const json j = json::parse(ins.out);
    CHECK(j["format"] == "GWPK1");
    CHECK(j["count"] == arr.count());
  }
  CHECK(cli("inspect \"" + (d / "out" / "metrics.json").string() + "\"").code == 0);
  CHECK(cli("inspect /no/such/file.gwpk").code == 2);
  std::ofstream(d / "junk.gwpk") << "not a container";
  CHECK(cli("inspect \"" + (d / "junk.gwpk").string() + "\"").code == 2);
}

TEST_CASE("metrics are bit-identical across repeated runs") {
  const fs::path d = scratch("repeat");
  const fs::path cfg = config(d, R"({"symbol": "anharmonic-bounded", "T": 0.5, "lattice": {"nx": 16, "nxi": 16}})");
  for (const char* task : {"evolve", "singularities", "energy"}) {
    const Cmd a = cli(std::string("run ") + task + " --config \"" + cfg.string() + "\" --output \"" +
                           (d / "a").string() + "\"",
                       "GWPK_THREADS=1");
    const Cmd b = cli(std::string("run ") + task + " --config \"" + cfg.string() + "\" --output \"" +
                           (d / "b").string() + "\"",
                       "GWPK_THREADS=1");
    CHECK(a.code == b.code);
    CHECK_MESSAGE(slurp(d / "a" / "metrics.json") == slurp(d / "b" / "metrics.json"), task);
    CHECK(slurp(d / "a" / "metrics.json").find("time") == std::string::npos);
  }
}
