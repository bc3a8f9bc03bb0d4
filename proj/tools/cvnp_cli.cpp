#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cvnp/io.hpp"
#include "cvnp/pipeline.hpp"
#include "cvnp/sparse_poly.hpp"

namespace {

using StageFn = std::function<void(const cvnp::PipelineConfig&, const std::filesystem::path&)>;

struct Globals {
  std::string config_file;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  std::vector<std::string> overrides;
  std::optional<int> workers;
};

cvnp::PipelineConfig resolve(const Globals& g) {
  cvnp::PipelineConfig cfg;
  if (!g.config_file.empty()) cfg = cvnp::parse_config(cvnp::read_text(g.config_file));
  for (const auto& kv : g.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw cvnp::ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (g.seed) cfg.seed = *g.seed;
  if (g.workers) cfg.workers = *g.workers;
  cfg.validate();
  return cfg;
}

int expand(const std::string& input, const std::string& threshold, bool swap_xy) {
  cvnp::SparsePoly2 f;
  if (input == "-") {
    f = cvnp::parse_poly_text(std::cin);
  } else {
    std::ifstream in(input);
    if (!in) throw cvnp::Error("cannot open " + input);
    f = cvnp::parse_poly_text(in);
  }
  cvnp::PuiseuxOptions opts;
  opts.threshold = cvnp::parse_rational(threshold);
  opts.swap_xy = swap_xy;
  const auto branches = cvnp::puiseux_expand(f, opts);
  const auto summary = cvnp::branch_summary(branches);
  cvnp::Json j;
  j["schema_version"] = cvnp::kSchemaVersion;
  j["kind"] = "expansion";
  j["threshold"] = threshold;
  j["swap_xy"] = swap_xy;
  j["branches"] = cvnp::branches_to_json(branches);
  j["num_branches"] = summary.num_branches;
  j["m"] = summary.m;
  std::cout << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Newton-Puiseux analysis and calibration for a complex-valued classifier"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_file, "key = value config file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "master seed");
  app.add_option("--out-dir", g.out_dir, "artifact directory")->capture_default_str();
  app.add_option("--set", g.overrides, "override a config key (key=value), repeatable");
  app.add_option("--workers", g.workers, "worker threads for per-anchor stages")->check(CLI::PositiveNumber);

  const std::vector<std::pair<std::string, std::pair<std::string, StageFn>>> stages{
      {"gen", {"generate the helix dataset", cvnp::stage_gen}},
      {"train", {"train the complex-valued network", cvnp::stage_train}},
      {"mine", {"flag uncertain test points", cvnp::stage_mine}},
      {"analyze", {"fit surrogates and expand branches per anchor", cvnp::stage_analyze}},
      {"probe", {"ray probes, saliency and triage", cvnp::stage_probe}},
      {"calibrate", {"cross-validated calibration comparison", cvnp::stage_calibrate}},
      {"report", {"summarise artifacts into report.json", cvnp::stage_report}},
      {"bench", {"timing summary", cvnp::stage_bench}},
      {"run", {"all stages in order", cvnp::run_pipeline}},
  };
  StageFn chosen;
  for (const auto& [name, entry] : stages) {
    const StageFn fn = entry.second;
    app.add_subcommand(name, entry.first)->callback([&chosen, fn] { chosen = fn; });
  }

  std::string poly_input = "-";
  std::string threshold = "4";
  bool swap_xy = false;
  auto* exp = app.add_subcommand("expand", "Puiseux branches of a polynomial given as text");
  exp->add_option("input", poly_input, "polynomial file, '-' for stdin")->capture_default_str();
  exp->add_option("--threshold", threshold, "truncation exponent, p or p/q")->capture_default_str();
  exp->add_flag("--swap-xy", swap_xy, "expand x as a series in y");

  auto* check = app.add_subcommand("check", "validate an artifact directory");
  auto* show = app.add_subcommand("config", "print the effective configuration");

  CLI11_PARSE(app, argc, argv);

  try {
    if (exp->parsed()) return expand(poly_input, threshold, swap_xy);
    const cvnp::PipelineConfig cfg = resolve(g);
    if (show->parsed()) {
      std::cout << cfg.to_text();
      return 0;
    }
    if (check->parsed()) {
      const auto problems = cvnp::check_artifacts(g.out_dir);
      for (const auto& p : problems) std::cerr << p << "\n";
      if (!problems.empty()) return 1;
      std::cout << "artifacts ok\n";
      return 0;
    }
    chosen(cfg, g.out_dir);
  } catch (const cvnp::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const cvnp::StageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
