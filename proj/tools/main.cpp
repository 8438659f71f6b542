#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "cli/commands.hpp"
#include "cli/run_config.hpp"
#include "tabdistill/error.hpp"

using namespace tabdistill;
using namespace tabdistill::cli;

namespace {

struct Flags {
  std::optional<std::string> config;
  std::vector<std::pair<std::string, std::string>> overrides;  // in command-line order
  std::vector<std::string> sets;
};

// A string flag that becomes an override of `key`.
void bind(CLI::App* app, Flags& f, const std::string& name, const std::string& key, const std::string& help) {
  app->add_option_function<std::string>(
         name, [&f, key](const std::string& v) { f.overrides.emplace_back(key, v); }, help + " (" + key + ")")
      ->type_name("VALUE");
}

void common(CLI::App* app, Flags& f) {
  app->add_option("--config", f.config, "JSON file with flat dotted keys")->check(CLI::ExistingFile);
  bind(app, f, "--out", "out", "output directory");
  bind(app, f, "--seed", "seed", "master seed");
  bind(app, f, "--jobs", "jobs", "worker threads for restarts and inner models");
  app->add_flag_callback(
      "--strict-serial", [&f] { f.overrides.emplace_back("strict_serial", "true"); },
      "single-threaded, bit-reproducible execution");
  app->add_option("--set", f.sets, "override any key, KEY=VALUE (repeatable)")->type_name("KEY=VALUE");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dataset distillation for small tabular classifiers"};
  app.require_subcommand(1);
  Flags f;

  auto* datagen = app.add_subcommand("datagen", "generate, split and standardize the two-moons data");
  bind(datagen, f, "--n-total", "datagen.n_total", "number of objects");

  auto* distill = app.add_subcommand("distill", "distill synthetic data and learning rates");
  bind(distill, f, "--inner-models", "distill.inner_models", "inner models per outer step");
  bind(distill, f, "--archs", "distill.archs", "architectures, e.g. 1layer,2layer,4layer");
  bind(distill, f, "--outer-epochs", "distill.outer_epochs", "outer epochs");

  auto* schedule = app.add_subcommand("schedule", "expand distilled rates into training schedules");
  bind(schedule, f, "--strategies", "strategies", "raw,s1,s2,s3");

  auto* train = app.add_subcommand("train", "train models on original or distilled data");
  bind(train, f, "--source", "train.source", "'original' or a synthetic.json path");
  bind(train, f, "--archs", "eval.archs", "test architectures");
  bind(train, f, "--strategies", "strategies", "raw,s1,s2,s3");
  bind(train, f, "--restarts", "eval.restarts", "restarts per distilled cell");

  auto* eval = app.add_subcommand("eval", "cross-architecture evaluation matrix");
  bind(eval, f, "--archs", "eval.archs", "test architectures");
  bind(eval, f, "--strategies", "strategies", "raw,s1,s2,s3");
  bind(eval, f, "--restarts", "eval.restarts", "restarts per distilled cell");

  auto* sweep = app.add_subcommand("sweep", "distill and evaluate along one inner-loop axis");
  bind(sweep, f, "--inner-models", "distill.inner_models", "inner models per outer step");
  bind(sweep, f, "--archs", "distill.archs", "architectures");
  bind(sweep, f, "--outer-epochs", "distill.outer_epochs", "outer epochs");
  bind(sweep, f, "--strategies", "strategies", "first entry is used");
  bind(sweep, f, "--restarts", "eval.restarts", "restarts per point");
  bind(sweep, f, "--sweep-epochs", "sweep.inner_epochs", "inner epoch values, e.g. 1,2,5");
  bind(sweep, f, "--sweep-steps", "sweep.inner_steps", "steps-per-epoch values, e.g. 1,5,10,20,40");
  bind(sweep, f, "--sweep-models", "sweep.inner_models", "inner model counts, e.g. 1,3,5");

  auto* plot = app.add_subcommand("plot-export", "render SVG plots from existing outputs");
  bind(plot, f, "--strategies", "strategies", "schedules drawn in the rate plots");

  for (auto* sub : {datagen, distill, schedule, train, eval, sweep, plot}) common(sub, f);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  for (const auto& kv : f.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      std::cerr << "error: --set expects KEY=VALUE, got '" << kv << "'\n";
      return kExitValidation;
    }
    f.overrides.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
  }

  RunConfig cfg;
  try {
    cfg = resolve_config(f.config, current_environment(), f.overrides);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: cannot read config: " << e.what() << "\n";
    return kExitValidation;
  }
  return run_command(app.get_subcommands().front()->get_name(), cfg, std::cout, std::cerr);
}
