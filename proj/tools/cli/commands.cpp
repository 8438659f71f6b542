#include "cli/commands.hpp"

#include <algorithm>
#include <ostream>

#include "tabdistill/error.hpp"
#include "tabdistill/evalharness.hpp"
#include "tabdistill/rng.hpp"
#include "tabdistill/svg.hpp"

namespace tabdistill::cli {

namespace {

fs::path out_dir(const RunConfig& cfg) { return fs::path(cfg.str("out")); }

fs::path data_file(const RunConfig& cfg, const std::string& key, const char* name) {
  const std::string given = cfg.str(key);
  return given.empty() ? out_dir(cfg) / "data" / name : fs::path(given);
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

void write_resolved(const fs::path& dir, RunConfig cfg) {
  cfg.set("jobs", std::to_string(effective_jobs(cfg)), "resolution");
  save_json(dir / "resolved_config.json", cfg.values());
}

std::vector<fs::path> discover_synthetic(const RunConfig& cfg, const std::string& key) {
  std::vector<fs::path> out;
  for (const auto& item : cfg.list(key)) out.emplace_back(item);
  if (!out.empty()) return out;
  const fs::path root = out_dir(cfg) / "distill";
  if (fs::is_directory(root)) {
    for (const auto& entry : fs::directory_iterator(root)) {
      if (entry.is_directory() && fs::exists(entry.path() / "synthetic.json")) out.push_back(entry.path() / "synthetic.json");
    }
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw ValidationError("no distilled datasets found under " + root.string());
  return out;
}

std::string source_name(const fs::path& synthetic_file) { return synthetic_file.parent_path().filename().string(); }

std::string join(const std::vector<fs::path>& paths) {
  std::string out;
  for (const auto& p : paths) out += (out.empty() ? "" : ",") + p.string();
  return out;
}

std::string cell_stem(const std::string& source, const std::string& strategy, const std::string& arch) {
  return sanitize(source) + "__" + strategy + "__" + sanitize(arch);
}

Json model_json(const ArchSpec& arch, std::uint64_t seed, const ParamVector& theta) {
  std::vector<double> values(theta.values().data(), theta.values().data() + theta.values().size());
  return Json{{"arch", arch.to_string()}, {"seed", seed}, {"parameters", values}};
}

// Retrains the median restart of a report so its decision boundary can be
// exported; seeds make this exact.
TrainedModel median_model_of(const EvalReport& report, const ArchSpec& arch, const SyntheticData* syn,
                             const StrategySpec* strategy, const Dataset* train, const Dataset& test,
                             const RealTrainingSettings& real, std::uint64_t& seed) {
  seed = report.per_restart[median_model(report)].seed;
  if (syn == nullptr) return train_on_real(arch, *train, test, real, seed);
  return train_on_distilled(arch, *syn, make_schedule(*strategy, *syn), test, seed);
}

}  // namespace

std::string distill_name(const RunConfig& cfg) {
  if (!cfg.str("distill.name").empty()) return sanitize(cfg.str("distill.name"));
  std::string name;
  for (const auto& t : cfg.list("distill.archs")) name += (name.empty() ? "" : "+") + t;
  if (name.empty()) throw ValidationError("distill.archs is empty");
  return sanitize(name);
}

int cmd_datagen(const RunConfig& cfg, std::ostream& log) {
  const std::uint64_t seed = cfg.u64("seed");
  const Dataset full =
      generate_moons(cfg.integer("datagen.n_total"), cfg.real("datagen.noise_std"), derive_seed(seed, {fnv1a("datagen")}));
  auto [train, test] = split(full, cfg.real("datagen.train_fraction"), derive_seed(seed, {fnv1a("split")}));
  if (cfg.flag("datagen.standardize")) std::tie(train, test) = standardize(train, test);

  const fs::path dir = out_dir(cfg) / "data";
  ensure_dir(dir);
  write_dataset_csv(dir / "full.csv", full);
  write_dataset_csv(dir / "train.csv", train);
  write_dataset_csv(dir / "test.csv", test);
  write_resolved(dir, cfg);
  log << "datagen: " << full.size() << " rows -> " << train.size() << " train / " << test.size() << " test in "
      << dir.string() << "\n";
  return kExitOk;
}

int cmd_distill(const RunConfig& cfg, std::ostream& log) {
  const fs::path train_path = data_file(cfg, "distill.train", "train.csv");
  const Dataset train = read_dataset_csv(train_path, SplitTag::train);
  const DistillConfig config = distill_config(cfg);
  const std::string name = distill_name(cfg);
  const fs::path dir = out_dir(cfg) / "distill" / name;
  ensure_dir(dir);

  std::vector<double> epoch_loss(static_cast<std::size_t>(config.outer_epochs), 0.0);
  std::vector<std::size_t> epoch_steps(epoch_loss.size(), 0);
  const SyntheticData syn = distill(config, train, [&](const OuterStepInfo& info) {
    epoch_loss[info.outer_epoch] += info.outer_loss;
    epoch_steps[info.outer_epoch] += 1;
  });

  std::string loss_csv = "outer_epoch,steps,mean_outer_loss\n";
  for (std::size_t e = 0; e < epoch_loss.size(); ++e) {
    loss_csv += std::to_string(e) + "," + std::to_string(epoch_steps[e]) + "," +
                format_double(epoch_loss[e] / static_cast<double>(std::max<std::size_t>(epoch_steps[e], 1))) + "\n";
  }

  save_synthetic(dir / "synthetic.json", syn);
  write_synthetic_csv(dir / "synthetic.csv", syn);
  write_text(dir / "outer_loss.csv", loss_csv);
  const DistillCounters planned = planned_counters(config, train.size());
  save_json(dir / "counters.json", Json{{"counters", to_json(syn.metadata.counters)},
                                        {"planned", to_json(planned)},
                                        {"matches_plan", syn.metadata.counters == planned}});
  RunConfig resolved = cfg;
  resolved.set("distill.train", train_path.string(), "resolution");
  resolved.set("distill.name", name, "resolution");
  write_resolved(dir, resolved);

  log << "distill: " << name << ", " << syn.metadata.counters.outer_steps << " outer steps, "
      << syn.metadata.counters.inner_forward_passes << " inner forward passes, peak "
      << syn.metadata.counters.peak_snapshots_per_model << " snapshots per model -> " << dir.string() << "\n";
  return kExitOk;
}

int cmd_schedule(const RunConfig& cfg, std::ostream& log) {
  const auto inputs = discover_synthetic(cfg, "schedule.inputs");
  const auto strategies = strategy_list(cfg);
  const fs::path root = out_dir(cfg) / "schedule";
  ensure_dir(root);
  for (const auto& in : inputs) {
    const SyntheticData syn = load_synthetic(in);
    const fs::path dir = root / sanitize(source_name(in));
    ensure_dir(dir);
    for (const auto& st : strategies) {
      const TrainingSchedule sched = make_schedule(st, syn);
      write_schedule_csv(dir / (st.name() + ".csv"), sched);
      save_json(dir / (st.name() + ".json"), to_json(sched));
      log << "schedule: " << source_name(in) << " " << st.name() << " -> " << sched.size() << " steps, "
          << sched.epoch_count() << " epochs\n";
    }
  }
  RunConfig resolved = cfg;
  resolved.set("schedule.inputs", join(inputs), "resolution");
  write_resolved(root, resolved);
  return kExitOk;
}

int cmd_train(const RunConfig& cfg, std::ostream& log) {
  const Dataset test = read_dataset_csv(data_file(cfg, "eval.test", "test.csv"), SplitTag::test);
  const auto archs = arch_list(cfg, "eval.archs");
  const RealTrainingSettings real = real_training(cfg);
  const BootstrapSettings boot = bootstrap_settings(cfg);
  const int jobs = effective_jobs(cfg);
  const std::uint64_t seed = cfg.u64("seed");
  const std::string source = cfg.str("train.source");
  const fs::path root = out_dir(cfg) / "train";
  ensure_dir(root);

  const GridBounds bounds = bounds_of(test, cfg.real("eval.grid_margin"));
  const int resolution = cfg.integer("eval.grid_resolution");
  auto emit = [&](const std::string& stem, const EvalReport& report, const ArchSpec& arch, const TrainedModel& median,
                  std::uint64_t median_seed) {
    const fs::path dir = root / stem;
    ensure_dir(dir);
    save_json(dir / "report.json", to_json(report));
    write_curves_csv(dir / "curves.csv", report);
    write_grid_csv(dir / "grid.csv", decision_grid(arch, median.theta, bounds, resolution));
    save_json(dir / "model.json", model_json(arch, median_seed, median.theta));
    log << "train: " << stem << " mean " << format_double(report.mean) << " std " << format_double(report.std) << "\n";
  };

  if (source == kOriginalSource) {
    const Dataset train = read_dataset_csv(data_file(cfg, "eval.train", "train.csv"), SplitTag::train);
    for (const auto& arch : archs) {
      const EvalReport report = evaluate_real(arch, train, test, real, cfg.integer("eval.original_restarts"), seed, boot, jobs);
      std::uint64_t s = 0;
      const TrainedModel m = median_model_of(report, arch, nullptr, nullptr, &train, test, real, s);
      emit(cell_stem(kOriginalSource, kNoStrategy, arch.to_string()), report, arch, m, s);
    }
  } else {
    const SyntheticData syn = load_synthetic(source);
    const std::string name = source_name(source);
    for (const auto& st : strategy_list(cfg)) {
      for (const auto& arch : archs) {
        const EvalReport report =
            evaluate_distilled(arch, name, syn, st, test, cfg.integer("eval.restarts"), seed, boot, jobs);
        std::uint64_t s = 0;
        const TrainedModel m = median_model_of(report, arch, &syn, &st, nullptr, test, real, s);
        emit(cell_stem(name, st.name(), arch.to_string()), report, arch, m, s);
      }
    }
  }
  write_resolved(root, cfg);
  return kExitOk;
}

int cmd_eval(const RunConfig& cfg, std::ostream& log) {
  const fs::path test_path = data_file(cfg, "eval.test", "test.csv");
  const fs::path train_path = data_file(cfg, "eval.train", "train.csv");
  const Dataset test = read_dataset_csv(test_path, SplitTag::test);
  std::optional<Dataset> train;
  if (cfg.flag("eval.original")) train = read_dataset_csv(train_path, SplitTag::train);
  const auto inputs = discover_synthetic(cfg, "eval.sources");

  CrossEvalRequest req;
  req.train = train ? &*train : nullptr;
  req.original_restarts = cfg.integer("eval.original_restarts");
  req.real = real_training(cfg);
  for (const auto& in : inputs) req.sources.push_back({source_name(in), load_synthetic(in)});
  req.strategies = strategy_list(cfg);
  req.archs = arch_list(cfg, "eval.archs");
  req.restarts = cfg.integer("eval.restarts");
  req.test = &test;
  req.seed = cfg.u64("seed");
  req.bootstrap = bootstrap_settings(cfg);
  req.jobs = effective_jobs(cfg);

  const CrossEvalMatrix matrix = cross_eval(req);

  const fs::path dir = out_dir(cfg) / "eval";
  ensure_dir(dir / "grids");
  ensure_dir(dir / "curves");
  save_json(dir / "matrix.json", to_json(matrix));
  write_cross_eval_csv(dir / "matrix.csv", matrix);

  const GridBounds bounds = bounds_of(test, cfg.real("eval.grid_margin"));
  const int resolution = cfg.integer("eval.grid_resolution");
  Json medians = Json::array();
  for (const auto& cell : matrix.cells) {
    if (cell.report.failed()) {
      log << "eval: " << cell.source << " / " << cell.strategy << " / " << cell.arch << " FAILED: " << cell.report.error
          << "\n";
      continue;
    }
    const std::string stem = cell_stem(cell.source, cell.strategy, cell.arch);
    const ArchSpec arch = *std::find_if(req.archs.begin(), req.archs.end(),
                                        [&](const ArchSpec& a) { return a.to_string() == cell.arch; });
    const SyntheticData* syn = nullptr;
    const StrategySpec* st = nullptr;
    if (cell.source != kOriginalSource) {
      syn = &std::find_if(req.sources.begin(), req.sources.end(), [&](const DistilledSource& s) { return s.name == cell.source; })->data;
      st = &*std::find_if(req.strategies.begin(), req.strategies.end(),
                          [&](const StrategySpec& s) { return s.name() == cell.strategy; });
    }
    std::uint64_t seed = 0;
    const TrainedModel median = median_model_of(cell.report, arch, syn, st, req.train, test, req.real, seed);
    write_grid_csv(dir / "grids" / (stem + ".csv"), decision_grid(arch, median.theta, bounds, resolution));
    write_curves_csv(dir / "curves" / (stem + ".csv"), cell.report);
    medians.push_back(Json{{"cell", stem}, {"median_seed", seed}, {"accuracy", median.curves.accuracy.empty() ? Json() : Json(median.curves.accuracy.back())}});
    log << "eval: " << cell.source << " / " << cell.strategy << " / " << cell.arch << " mean "
        << format_double(cell.report.mean) << " [" << format_double(cell.report.ci_lo) << ", "
        << format_double(cell.report.ci_hi) << "]\n";
  }
  save_json(dir / "median_models.json", medians);

  RunConfig resolved = cfg;
  resolved.set("eval.test", test_path.string(), "resolution");
  resolved.set("eval.train", train_path.string(), "resolution");
  resolved.set("eval.sources", join(inputs), "resolution");
  write_resolved(dir, resolved);
  return matrix.any_failed() ? kExitPartialFailure : kExitOk;
}

int cmd_sweep(const RunConfig& cfg, std::ostream& log) {
  static const std::pair<const char*, const char*> kAxes[] = {{"sweep.inner_epochs", "distill.inner_epochs"},
                                                             {"sweep.inner_steps", "distill.steps_per_epoch"},
                                                             {"sweep.inner_models", "distill.inner_models"}};
  const char* axis = nullptr;
  const char* target = nullptr;
  for (const auto& [key, distill_key] : kAxes) {
    if (cfg.list(key).empty()) continue;
    if (axis != nullptr) throw ValidationError("sweep accepts exactly one axis; got " + std::string(axis) + " and " + key);
    axis = key;
    target = distill_key;
  }
  if (axis == nullptr) throw ValidationError("sweep needs one of sweep.inner_epochs, sweep.inner_steps, sweep.inner_models");

  const Dataset train = read_dataset_csv(data_file(cfg, "distill.train", "train.csv"), SplitTag::train);
  const Dataset test = read_dataset_csv(data_file(cfg, "eval.test", "test.csv"), SplitTag::test);
  const StrategySpec strategy = strategy_list(cfg).front();
  const std::string axis_name = std::string(axis).substr(std::string("sweep.").size());

  std::string csv = "axis,value,data_source,strategy,arch,mean,std,ci_lo,ci_hi,restarts,final_outer_loss\n";
  for (const auto& value : cfg.list(axis)) {
    RunConfig point = cfg;
    point.set(target, value, std::string(axis));
    const DistillConfig config = distill_config(point);
    const std::string name = distill_name(point);
    double last_loss = 0.0;
    std::size_t last_epoch_steps = 0;
    const SyntheticData syn = distill(config, train, [&](const OuterStepInfo& info) {
      if (info.outer_epoch + 1 == static_cast<std::size_t>(config.outer_epochs)) {
        last_loss += info.outer_loss;
        ++last_epoch_steps;
      }
    });
    const ArchSpec arch = config.architectures.front();
    const EvalReport report = evaluate_distilled(arch, name, syn, strategy, test, cfg.integer("eval.restarts"),
                                                 cfg.u64("seed"), bootstrap_settings(cfg), effective_jobs(cfg));
    csv += axis_name + "," + value + "," + name + "," + strategy.name() + "," + arch.to_string() + "," +
           format_double(report.mean) + "," + format_double(report.std) + "," + format_double(report.ci_lo) + "," +
           format_double(report.ci_hi) + "," + std::to_string(report.per_restart.size()) + "," +
           (last_epoch_steps > 0 ? format_double(last_loss / static_cast<double>(last_epoch_steps)) : std::string()) + "\n";
    log << "sweep: " << axis_name << "=" << value << " mean " << format_double(report.mean) << "\n";
  }
  const fs::path dir = out_dir(cfg) / "sweep";
  ensure_dir(dir);
  write_text(dir / (axis_name + ".csv"), csv);
  write_resolved(dir, cfg);
  return kExitOk;
}

int cmd_plot_export(const RunConfig& cfg, std::ostream& log) {
  const fs::path root = out_dir(cfg);
  const fs::path dir = root / "plots";
  ensure_dir(dir);
  std::size_t written = 0;
  auto save = [&](const std::string& name, const std::string& svg) {
    write_text(dir / name, svg);
    ++written;
  };

  std::optional<Dataset> train, test;
  if (fs::exists(root / "data" / "train.csv")) {
    train = read_dataset_csv(root / "data" / "train.csv", SplitTag::train);
    save("data_train.svg", scatter_svg(&*train, nullptr, nullptr, "training data"));
  }
  if (fs::exists(root / "data" / "test.csv")) test = read_dataset_csv(root / "data" / "test.csv", SplitTag::test);

  if (fs::is_directory(root / "distill")) {
    for (const auto& in : discover_synthetic(cfg, "eval.sources")) {
      const SyntheticData syn = load_synthetic(in);
      const std::string name = sanitize(source_name(in));
      save("synthetic_" + name + ".svg", scatter_svg(train ? &*train : nullptr, &syn, nullptr, "distilled data: " + name));
      std::vector<SvgSeries> series;
      for (const auto& st : strategy_list(cfg)) {
        SvgSeries s{st.name(), {}};
        for (const auto& e : make_schedule(st, syn).entries) s.y.push_back(e.lr);
        series.push_back(std::move(s));
      }
      save("lr_" + name + ".svg", lines_svg(series, "learning rates: " + name, "global step", "lr"));
    }
  }

  const fs::path grids = root / "eval" / "grids";
  if (fs::is_directory(grids)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(grids)) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      const DecisionGrid g = read_grid_csv(f);
      save("boundary_" + f.stem().string() + ".svg", scatter_svg(test ? &*test : nullptr, nullptr, &g, f.stem().string()));
    }
  }

  if (fs::exists(root / "eval" / "matrix.json")) {
    const Json m = load_json(root / "eval" / "matrix.json");
    for (const auto& cell : m.at("cells")) {
      const Json& rep = cell.at("report");
      if (rep.contains("error") || rep.at("per_restart").empty()) continue;
      std::vector<SvgSeries> series;
      for (std::size_t r = 0; r < rep.at("per_restart").size(); ++r) {
        series.push_back({"restart " + std::to_string(r),
                          rep.at("per_restart")[r].at("accuracy_curve").get<std::vector<double>>()});
      }
      const std::string stem = cell_stem(cell.at("data_source").get<std::string>(), cell.at("strategy").get<std::string>(),
                                         cell.at("arch").get<std::string>());
      save("curves_" + stem + ".svg", lines_svg(series, stem, "epoch", "test accuracy"));
    }
  }
  write_resolved(dir, cfg);
  log << "plot-export: " << written << " SVG files in " << dir.string() << "\n";
  return kExitOk;
}

int run_command(const std::string& name, const RunConfig& cfg, std::ostream& log, std::ostream& err) {
  try {
    if (name == "datagen") return cmd_datagen(cfg, log);
    if (name == "distill") return cmd_distill(cfg, log);
    if (name == "schedule") return cmd_schedule(cfg, log);
    if (name == "train") return cmd_train(cfg, log);
    if (name == "eval") return cmd_eval(cfg, log);
    if (name == "sweep") return cmd_sweep(cfg, log);
    if (name == "plot-export") return cmd_plot_export(cfg, log);
    err << "error: unknown subcommand '" << name << "'\n";
    return kExitValidation;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const Json::exception& e) {
    err << "error: malformed JSON: " << e.what() << "\n";
    return kExitValidation;
  }
}

}  // namespace tabdistill::cli
