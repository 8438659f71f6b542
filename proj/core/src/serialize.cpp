#include "tabdistill/serialize.hpp"

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "tabdistill/error.hpp"

namespace tabdistill {

std::string format_double(double x) {
  char buf[64];
  for (int precision = 15; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, x);
    if (std::strtod(buf, nullptr) == x) break;
  }
  return buf;
}

// ---------------------------------------------------------------------------
// Text files

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void save_json(const fs::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

Json load_json(const fs::path& path) {
  try {
    return Json::parse(read_text(path));
  } catch (const Json::parse_error& e) {
    throw ValidationError("malformed JSON in '" + path.string() + "': " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Config and metadata

Json to_json(const DistillConfig& c) {
  Json archs = Json::array();
  for (const auto& a : c.architectures) archs.push_back(a.to_string());
  return Json{
      {"inner_models", c.inner_models},
      {"architectures", archs},
      {"steps_per_epoch", c.steps_per_epoch},
      {"inner_epochs", c.inner_epochs},
      {"outer_epochs", c.outer_epochs},
      {"real_batch_size", c.real_batch_size},
      {"outer_optimizer",
       {{"name", "adam"},
        {"step", c.outer_optimizer.step},
        {"beta1", c.outer_optimizer.beta1},
        {"beta2", c.outer_optimizer.beta2},
        {"epsilon", c.outer_optimizer.epsilon}}},
      {"synthetic_batch_size", c.synthetic_batch_size},
      {"lr_init", c.lr_init},
      {"min_lr", c.min_lr},
      {"synthetic_init", {{"distribution", "normal"}, {"mean", c.synthetic_init.mean}, {"stddev", c.synthetic_init.stddev}}},
      {"seed", c.seed},
  };
}

DistillConfig distill_config_from_json(const Json& j) {
  try {
    DistillConfig c;
    c.inner_models = j.at("inner_models").get<int>();
    c.architectures.clear();
    for (const auto& a : j.at("architectures")) c.architectures.push_back(ArchSpec::parse(a.get<std::string>()));
    c.steps_per_epoch = j.at("steps_per_epoch").get<int>();
    c.inner_epochs = j.at("inner_epochs").get<int>();
    c.outer_epochs = j.at("outer_epochs").get<int>();
    c.real_batch_size = j.at("real_batch_size").get<int>();
    const auto& opt = j.at("outer_optimizer");
    c.outer_optimizer = {opt.at("step").get<double>(), opt.at("beta1").get<double>(), opt.at("beta2").get<double>(),
                         opt.at("epsilon").get<double>()};
    c.synthetic_batch_size = j.at("synthetic_batch_size").get<int>();
    c.lr_init = j.at("lr_init").get<double>();
    c.min_lr = j.at("min_lr").get<double>();
    c.synthetic_init = {j.at("synthetic_init").at("mean").get<double>(), j.at("synthetic_init").at("stddev").get<double>()};
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("malformed distill config: ") + e.what());
  }
}

Json to_json(const DistillCounters& c) {
  return Json{{"outer_steps", c.outer_steps},
              {"inner_forward_passes", c.inner_forward_passes},
              {"second_order_passes", c.second_order_passes},
              {"real_loss_evaluations", c.real_loss_evaluations},
              {"peak_snapshots_per_model", c.peak_snapshots_per_model}};
}

DistillCounters counters_from_json(const Json& j) {
  DistillCounters c;
  c.outer_steps = j.value("outer_steps", std::uint64_t{0});
  c.inner_forward_passes = j.value("inner_forward_passes", std::uint64_t{0});
  c.second_order_passes = j.value("second_order_passes", std::uint64_t{0});
  c.real_loss_evaluations = j.value("real_loss_evaluations", std::uint64_t{0});
  c.peak_snapshots_per_model = j.value("peak_snapshots_per_model", std::uint64_t{0});
  return c;
}

namespace {

Json batch_objects(const LabeledBatch& b) {
  Json objects = Json::array();
  for (Eigen::Index i = 0; i < b.features.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < b.features.cols(); ++c) row.push_back(b.features(i, c));
    objects.push_back(std::move(row));
  }
  return objects;
}

LabeledBatch batch_from_json(const Json& step) {
  LabeledBatch b;
  const auto& objects = step.at("objects");
  const auto& labels = step.at("labels");
  if (objects.size() != labels.size()) throw ValidationError("object and label counts differ in synthetic step");
  const auto rows = static_cast<Eigen::Index>(objects.size());
  const auto cols = rows > 0 ? static_cast<Eigen::Index>(objects.front().size()) : Eigen::Index{0};
  b.features.resize(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = objects[static_cast<std::size_t>(i)];
    if (static_cast<Eigen::Index>(row.size()) != cols) throw ValidationError("ragged synthetic object rows");
    for (Eigen::Index c = 0; c < cols; ++c) b.features(i, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  for (const auto& y : labels) b.labels.push_back(y.get<int>());
  return b;
}

}  // namespace

Json to_json(const SyntheticData& syn) {
  const auto& md = syn.metadata;
  Json meta{
      {"architectures", md.architectures},
      {"config", to_json(md.config)},
      {"seeds", {{"master", md.master_seed}, {"synthetic_init", md.init_seed}}},
      {"counters", to_json(md.counters)},
      {"theta_init", md.theta_init},
      {"outer_optimizer", md.outer_optimizer},
      {"epochs_inner", syn.epochs_inner},
      {"steps_per_epoch", syn.steps_per_epoch},
  };
  Json epochs = Json::array();
  const auto s = static_cast<std::size_t>(syn.steps_per_epoch);
  std::vector<Json> objects;
  for (const auto& b : syn.step_batches) objects.push_back(batch_objects(b));
  for (int e = 0; e < syn.epochs_inner; ++e) {
    Json steps = Json::array();
    for (std::size_t p = 0; p < s; ++p) {
      steps.push_back(Json{{"lr", syn.step_lrs[static_cast<std::size_t>(e) * s + p]},
                           {"objects", objects[p]},
                           {"labels", syn.step_batches[p].labels}});
    }
    epochs.push_back(Json{{"steps", std::move(steps)}});
  }
  Json doc{{"format_version", md.format_version}, {"metadata", std::move(meta)}, {"epochs", std::move(epochs)}};
  if (syn.epochs_inner == 0) {
    // An empty program still carries its batches.
    Json batches = Json::array();
    for (std::size_t p = 0; p < s; ++p) {
      batches.push_back(Json{{"objects", objects[p]}, {"labels", syn.step_batches[p].labels}});
    }
    doc["batches"] = std::move(batches);
  }
  return doc;
}

SyntheticData synthetic_from_json(const Json& j) {
  try {
    const int version = j.at("format_version").get<int>();
    if (version != kSyntheticFormatVersion) {
      throw ValidationError("unsupported distilled format version " + std::to_string(version));
    }
    SyntheticData syn;
    const auto& meta = j.at("metadata");
    syn.metadata.format_version = version;
    syn.metadata.architectures = meta.at("architectures").get<std::vector<std::string>>();
    syn.metadata.config = distill_config_from_json(meta.at("config"));
    syn.metadata.master_seed = meta.at("seeds").at("master").get<std::uint64_t>();
    syn.metadata.init_seed = meta.at("seeds").at("synthetic_init").get<std::uint64_t>();
    syn.metadata.counters = counters_from_json(meta.at("counters"));
    syn.metadata.theta_init = meta.value("theta_init", syn.metadata.theta_init);
    syn.metadata.outer_optimizer = meta.value("outer_optimizer", syn.metadata.outer_optimizer);
    syn.epochs_inner = meta.at("epochs_inner").get<int>();
    syn.steps_per_epoch = meta.at("steps_per_epoch").get<int>();

    const auto& epochs = j.at("epochs");
    if (epochs.size() != static_cast<std::size_t>(syn.epochs_inner)) {
      throw ValidationError("epoch count disagrees with metadata");
    }
    if (syn.epochs_inner == 0) {
      for (const auto& b : j.at("batches")) syn.step_batches.push_back(batch_from_json(b));
    }
    for (std::size_t e = 0; e < epochs.size(); ++e) {
      const auto& steps = epochs[e].at("steps");
      if (steps.size() != static_cast<std::size_t>(syn.steps_per_epoch)) {
        throw ValidationError("epoch " + std::to_string(e) + " has the wrong number of steps");
      }
      for (std::size_t p = 0; p < steps.size(); ++p) {
        syn.step_lrs.push_back(steps[p].at("lr").get<double>());
        LabeledBatch b = batch_from_json(steps[p]);
        if (e == 0) {
          syn.step_batches.push_back(std::move(b));
        } else if (b.labels != syn.step_batches[p].labels || b.features != syn.step_batches[p].features) {
          throw ValidationError("step " + std::to_string(p) + " objects differ between epochs");
        }
      }
    }
    syn.validate();
    return syn;
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("malformed distilled dataset: ") + e.what());
  }
}

void save_synthetic(const fs::path& path, const SyntheticData& syn) { save_json(path, to_json(syn)); }

SyntheticData load_synthetic(const fs::path& path) { return synthetic_from_json(load_json(path)); }

Json to_json(const Provenance& p) {
  Json j{{"generator", p.generator}, {"n_total", p.n_total}, {"noise_std", p.noise_std}, {"seed", p.seed}};
  if (p.train_fraction) j["train_fraction"] = *p.train_fraction;
  if (p.split_seed) j["split_seed"] = *p.split_seed;
  if (p.standardization) {
    j["standardization"] = {{"mean", p.standardization->mean}, {"scale", p.standardization->scale}};
  }
  return j;
}

Provenance provenance_from_json(const Json& j) {
  Provenance p;
  p.generator = j.value("generator", p.generator);
  p.n_total = j.value("n_total", 0);
  p.noise_std = j.value("noise_std", 0.0);
  p.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("train_fraction")) p.train_fraction = j.at("train_fraction").get<double>();
  if (j.contains("split_seed")) p.split_seed = j.at("split_seed").get<std::uint64_t>();
  if (j.contains("standardization")) {
    p.standardization = Standardization{j.at("standardization").at("mean").get<std::vector<double>>(),
                                        j.at("standardization").at("scale").get<std::vector<double>>()};
  }
  return p;
}

// ---------------------------------------------------------------------------
// Reports

Json to_json(const EvalReport& r, bool with_curves) {
  Json restarts = Json::array();
  for (const auto& x : r.per_restart) {
    Json e{{"seed", x.seed}, {"accuracy", x.accuracy}, {"logloss", x.logloss}};
    if (with_curves) {
      e["accuracy_curve"] = x.curves.accuracy;
      e["logloss_curve"] = x.curves.logloss;
    }
    restarts.push_back(std::move(e));
  }
  Json j{{"mean", r.mean}, {"std", r.std}, {"ci95", {r.ci_lo, r.ci_hi}}, {"fingerprint", r.fingerprint},
         {"per_restart", std::move(restarts)}};
  if (r.failed()) j["error"] = r.error;
  return j;
}

Json to_json(const CrossEvalMatrix& m, bool with_curves) {
  Json cells = Json::array();
  for (const auto& c : m.cells) {
    cells.push_back(Json{{"data_source", c.source},
                         {"strategy", c.strategy},
                         {"arch", c.arch},
                         {"restarts", c.restarts},
                         {"report", to_json(c.report, with_curves)}});
  }
  return Json{{"format_version", 1}, {"cells", std::move(cells)}};
}

Json to_json(const TrainingSchedule& sched) {
  Json j{{"strategy", to_string(sched.tag)}, {"steps_per_epoch", sched.steps_per_epoch}, {"entries", sched.entries.size()}};
  Json params = Json::object();
  for (const auto& [k, v] : sched.params) params[k] = v;
  j["params"] = std::move(params);
  return j;
}

// ---------------------------------------------------------------------------
// CSV

fs::path provenance_path(const fs::path& csv) {
  fs::path p = csv;
  p.replace_extension(".provenance.json");
  return p;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, const fs::path& path, std::size_t line) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) {
    throw ValidationError(path.string() + ":" + std::to_string(line) + ": not a number '" + s + "'");
  }
  return v;
}

}  // namespace

void write_dataset_csv(const fs::path& path, const Dataset& data) {
  std::ostringstream out;
  for (std::size_t c = 0; c < data.feature_count(); ++c) out << 'x' << c + 1 << ',';
  out << "label\n";
  char buf[64];
  for (Eigen::Index i = 0; i < data.features.rows(); ++i) {
    for (Eigen::Index c = 0; c < data.features.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", data.features(i, c));
      out << buf << ',';
    }
    out << data.labels[static_cast<std::size_t>(i)] << '\n';
  }
  write_text(path, out.str());
  Json side = to_json(data.provenance);
  side["split"] = std::string(to_string(data.split));
  side["rows"] = data.size();
  if (!data.row_ids.empty()) side["row_ids"] = data.row_ids;
  save_json(provenance_path(path), side);
}

Dataset read_dataset_csv(const fs::path& path, SplitTag tag) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(path.string() + ": empty file");
  const auto header = split_csv_line(line);
  if (header.size() < 2 || header.back() != "label") {
    throw ValidationError(path.string() + ": header must list feature columns followed by 'label'");
  }
  const std::size_t d = header.size() - 1;
  std::vector<double> values;
  std::vector<int> labels;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != d + 1) throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": wrong column count");
    for (std::size_t c = 0; c < d; ++c) values.push_back(parse_double(cells[c], path, lineno));
    const double y = parse_double(cells[d], path, lineno);
    if (y != 0.0 && y != 1.0) throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": label must be 0 or 1");
    labels.push_back(static_cast<int>(y));
  }
  Matrix features(static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t c = 0; c < d; ++c) {
      features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = values[i * d + c];
    }
  }
  Dataset data = make_dataset(std::move(features), std::move(labels), "csv:" + path.filename().string());
  data.split = tag;
  if (fs::exists(provenance_path(path))) {
    const Json side = load_json(provenance_path(path));
    data.provenance = provenance_from_json(side);
    if (side.contains("split")) data.split = parse_split_tag(side.at("split").get<std::string>());
    if (side.contains("row_ids")) {
      auto ids = side.at("row_ids").get<std::vector<std::size_t>>();
      if (ids.size() != data.size()) throw ValidationError(provenance_path(path).string() + ": row_ids length mismatch");
      data.row_ids = std::move(ids);
    }
  }
  return data;
}

void write_synthetic_csv(const fs::path& path, const SyntheticData& syn) {
  std::ostringstream out;
  const std::size_t d = syn.step_batches.empty() ? 0 : static_cast<std::size_t>(syn.step_batches.front().features.cols());
  out << "epoch,step,object_index";
  for (std::size_t c = 0; c < d; ++c) out << ",x" << c + 1;
  out << ",label,lr\n";
  const auto s = static_cast<std::size_t>(syn.steps_per_epoch);
  for (int e = 0; e < syn.epochs_inner; ++e) {
    for (std::size_t p = 0; p < s; ++p) {
      const auto& b = syn.step_batches[p];
      const std::string lr = format_double(syn.step_lrs[static_cast<std::size_t>(e) * s + p]);
      for (Eigen::Index i = 0; i < b.features.rows(); ++i) {
        out << e << ',' << p << ',' << i;
        for (Eigen::Index c = 0; c < b.features.cols(); ++c) out << ',' << format_double(b.features(i, c));
        out << ',' << b.labels[static_cast<std::size_t>(i)] << ',' << lr << '\n';
      }
    }
  }
  write_text(path, out.str());
}

void write_schedule_csv(const fs::path& path, const TrainingSchedule& sched) {
  std::ostringstream out;
  out << "global_step,epoch,batch_index,lr\n";
  for (std::size_t g = 0; g < sched.entries.size(); ++g) {
    const auto& e = sched.entries[g];
    out << g << ',' << e.epoch << ',' << e.batch_index << ',' << format_double(e.lr) << '\n';
  }
  write_text(path, out.str());
}

void write_cross_eval_csv(const fs::path& path, const CrossEvalMatrix& m) {
  std::ostringstream out;
  out << "data_source,strategy,arch,mean,std,ci_lo,ci_hi,restarts\n";
  for (const auto& c : m.cells) {
    out << c.source << ',' << c.strategy << ',' << c.arch << ',';
    if (c.report.failed()) {
      out << ",,,,";
    } else {
      out << format_double(c.report.mean) << ',' << format_double(c.report.std) << ',' << format_double(c.report.ci_lo)
          << ',' << format_double(c.report.ci_hi) << ',';
    }
    out << c.restarts << '\n';
  }
  write_text(path, out.str());
}

void write_grid_csv(const fs::path& path, const DecisionGrid& grid) {
  std::ostringstream out;
  out << "x1,x2,predicted,p1\n";
  for (const auto& p : grid.points) {
    out << format_double(p.x1) << ',' << format_double(p.x2) << ',' << p.predicted << ',' << format_double(p.p1) << '\n';
  }
  write_text(path, out.str());
}

DecisionGrid read_grid_csv(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  std::getline(in, line);
  DecisionGrid grid;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 4) throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": wrong column count");
    grid.points.push_back({parse_double(cells[0], path, lineno), parse_double(cells[1], path, lineno),
                           static_cast<int>(parse_double(cells[2], path, lineno)), parse_double(cells[3], path, lineno)});
  }
  std::size_t res = 0;
  while ((res + 1) * (res + 1) <= grid.points.size()) ++res;
  if (res < 2 || res * res != grid.points.size()) throw ValidationError(path.string() + ": grid is not square");
  grid.resolution = static_cast<int>(res);
  grid.bounds = {grid.points.front().x1, grid.points.back().x1, grid.points.front().x2, grid.points.back().x2};
  return grid;
}

void write_curves_csv(const fs::path& path, const EvalReport& report) {
  std::ostringstream out;
  out << "restart,seed,epoch,accuracy,logloss\n";
  for (std::size_t r = 0; r < report.per_restart.size(); ++r) {
    const auto& x = report.per_restart[r];
    for (std::size_t e = 0; e < x.curves.accuracy.size(); ++e) {
      out << r << ',' << x.seed << ',' << e << ',' << format_double(x.curves.accuracy[e]) << ','
          << format_double(x.curves.logloss[e]) << '\n';
    }
  }
  write_text(path, out.str());
}

}  // namespace tabdistill
