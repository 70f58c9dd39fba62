// Command-line front end: one scenario per invocation, outputs written once at the end.

#include <cstdio>
#include <iostream>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "cquant/scenario.hpp"

namespace {

using namespace cquant;
using namespace cquant::cli;

struct Common {
  std::string config;
  std::optional<long> seed;
  std::string out;
  std::optional<int> threads;
};

void add_common(CLI::App* sub, Common& c, bool config_required) {
  auto* opt = sub->add_option("--config", c.config, "scenario file");
  if (config_required) opt->required();
  sub->add_option("--seed", c.seed, "base RNG seed (overrides the scenario)");
  sub->add_option("--out", c.out, "output directory (overrides the scenario)");
  sub->add_option("--threads", c.threads, "worker threads, 0 = hardware concurrency");
}

void apply_overrides(Scenario& sc, const Common& c) {
  if (c.seed) {
    if (*c.seed < 0) throw UsageError("--seed must be nonnegative");
    sc.solver.seed = static_cast<std::uint64_t>(*c.seed);
  }
  if (!c.out.empty()) sc.out_dir = c.out;
  if (c.threads) {
    if (*c.threads < 0) throw UsageError("--threads must be >= 0");
    sc.solver.threads = *c.threads == 0 ? static_cast<int>(std::max(1u, std::thread::hardware_concurrency()))
                                        : *c.threads;
  }
}

int finish(const Scenario& sc, const RunOutcome& out) {
  for (const auto& path : out.files.write(sc.out_dir)) std::cout << "wrote " << path << "\n";
  if (!out.message.empty()) std::cerr << "cquant: " << out.message << "\n";
  return out.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Constrained quantization: codebooks, error curves, dimension estimates"};
  app.require_subcommand(1);

  Common c;
  auto* quantize = app.add_subcommand("quantize", "solve at [solver] n; writes codebook.txt and summary.csv");
  add_common(quantize, c, true);
  auto* curve = app.add_subcommand("curve", "error curve over [solver] n_list; writes curve.csv");
  add_common(curve, c, true);
  auto* dimension = app.add_subcommand("dimension", "curve, dimension report and condition tables");
  add_common(dimension, c, true);
  auto* check = app.add_subcommand("check", "U1 / U3 condition tables");
  add_common(check, c, true);
  auto* reproduce = app.add_subcommand("reproduce", "full bundle for a built-in preset");
  std::string preset_name;
  reproduce->add_option("preset", preset_name, "circle-disc | cantor-line | dirac-circle | vshape | circle-ball-half")
      ->required();
  add_common(reproduce, c, false);
  auto* project = app.add_subcommand("project", "nearest points in the constraint; writes projection.csv");
  add_common(project, c, true);
  std::vector<std::string> points;
  project->add_option("--point", points, "query point, coordinates separated by commas or spaces (replaces [project] points)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    Scenario sc = reproduce->parsed() ? preset(preset_name) : load_scenario(c.config);
    if (reproduce->parsed() && !c.config.empty()) throw UsageError("reproduce takes a preset, not --config");
    apply_overrides(sc, c);
    if (quantize->parsed()) return finish(sc, dispatch<QuantizeRunner>(sc));
    if (curve->parsed()) return finish(sc, dispatch<CurveRunner>(sc));
    if (dimension->parsed()) return finish(sc, dispatch<AnalyzeRunner>(sc));
    if (check->parsed()) return finish(sc, dispatch<CheckRunner>(sc));
    if (reproduce->parsed()) return finish(sc, run_reproduce(sc));
    if (project->parsed()) {
      if (!points.empty()) sc.project_points.clear();
      for (const auto& p : points) sc.project_points.push_back(cli::detail::parse_numbers(p, "--point"));
      return finish(sc, dispatch<ProjectRunner>(sc));
    }
    return kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "cquant: usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "cquant: config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ResourceError& e) {
    std::cerr << "cquant: resource error: " << e.what() << "\n";
    return kExitResource;
  } catch (const NumericalError& e) {
    std::cerr << "cquant: numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "cquant: error: " << e.what() << "\n";
    return kExitOther;
  }
}
