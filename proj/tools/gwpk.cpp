// gwpk: batch runner for wave-packet propagator scenarios.
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "gwpk/container.hpp"
#include "gwpk/scenario.hpp"

using nlohmann::json;

namespace {

// Error record on stderr, and in <output>/error.json when the config names one.
int report(int code, const std::string& kind, const std::string& message, const std::string& config_path = "") {
  json rec = {{"code", kind}, {"exit_code", code}, {"message", message}};
  std::cerr << rec.dump() << "\n";
  if (!config_path.empty()) {
    try {
      std::ifstream f(config_path);
      const json j = json::parse(f);
      if (j.is_object() && j.contains("output") && j["output"].is_string()) {
        const std::filesystem::path dir = j["output"].get<std::string>();
        std::filesystem::create_directories(dir);
        gwpk::write_json((dir / "error.json").string(), rec);
      }
    } catch (...) {
    }
  }
  return code;
}

int cmd_run(const std::string& task, const std::string& config, const std::string& output) {
  const auto& names = gwpk::task_names();
  if (std::find(names.begin(), names.end(), task) == names.end())
    return report(2, "config", "unknown task '" + task + "'");
  gwpk::ScenarioConfig cfg;
  try {
    cfg = gwpk::load_config(config);
  } catch (const gwpk::Error& e) {
    return report(2, gwpk::to_string(e.code()), e.what(), output.empty() ? config : "");
  }
  if (!output.empty()) cfg.output = output;
  const gwpk::TaskResult res = gwpk::run_scenario(cfg, task);
  const json& m = res.metrics;
  std::cout << task << ": " << (res.exit_code == 0 ? "pass" : "fail") << " (exit " << res.exit_code << "), "
            << res.artifacts.size() << " arrays in " << cfg.output << "\n";
  if (m.contains("error")) std::cerr << json({{"code", m["error"]["code"]}, {"message", m["error"]["message"]}}).dump() << "\n";
  return res.exit_code;
}

int cmd_list(const std::string& filter, bool as_json) {
  const auto entries = gwpk::list_scenarios(filter);
  if (as_json) {
    json j = json::array();
    for (const auto& e : entries) j.push_back({{"name", e.name}, {"description", e.description}});
    std::cout << j.dump(2) << "\n";
  } else {
    for (const auto& e : entries) std::cout << e.name << "\t" << e.description << "\n";
  }
  return 0;
}

int cmd_inspect(const std::string& path) {
  try {
    if (std::filesystem::path(path).extension() == ".json") {
      std::cout << gwpk::read_json(path).dump(2) << "\n";
      return 0;
    }
    const gwpk::Array a = gwpk::read_array(path);
    double max_abs = 0.0, sum2 = 0.0;
    bool finite = true;
    auto visit = [&](double m) {
      finite = finite && std::isfinite(m);
      max_abs = std::max(max_abs, m);
      sum2 += m * m;
    };
    if (a.dtype == gwpk::Array::DType::f64)
      for (double v : a.real) visit(std::abs(v));
    else
      for (const auto& v : a.cdata) visit(std::abs(v));
    const json j = {{"format", "GWPK1"},
                    {"version", gwpk::kContainerVersion},
                    {"dtype", a.dtype == gwpk::Array::DType::f64 ? "f64" : "c128"},
                    {"dims", a.dims},
                    {"count", a.count()},
                    {"finite", finite},
                    {"max_abs", max_abs},
                    {"l2", std::sqrt(sum2)}};
    std::cout << j.dump(2) << "\n";
    return 0;
  } catch (const gwpk::Error& e) {
    return report(2, gwpk::to_string(e.code()), e.what());
  } catch (const std::exception& e) {
    return report(2, "io", e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gwpk: Gabor wave-packet propagator toolkit"};
  app.require_subcommand(1);

  std::string task, config, output;
  auto* run = app.add_subcommand("run", "run a scenario task");
  run->add_option("task", task, "flow | evolve | gabor-matrix | sparsity-fit | fio | energy | modspace | "
                                "singularities | full-report")
      ->required();
  run->add_option("--config,-c", config, "JSON scenario config")->required();
  run->add_option("--output,-o", output, "output directory (overrides the config)");

  std::string filter;
  bool as_json = false;
  auto* list = app.add_subcommand("list", "list built-in symbols");
  list->add_option("filter", filter, "substring filter on the name");
  list->add_flag("--json", as_json, "JSON output");

  std::string artifact;
  auto* inspect = app.add_subcommand("inspect", "summarise a GWPK1 array or JSON artifact");
  inspect->add_option("artifact", artifact)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*run) return cmd_run(task, config, output);
    if (*list) return cmd_list(filter, as_json);
    if (*inspect) return cmd_inspect(artifact);
  } catch (const std::exception& e) {
    return report(2, "internal", e.what());
  }
  return 2;
}
