#include "tabdistill/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "tabdistill/error.hpp"
#include "tabdistill/parallel.hpp"
#include "tabdistill/rng.hpp"

namespace tabdistill {

namespace {

constexpr std::uint64_t kTagShuffle = 0x5f;
constexpr std::uint64_t kTagBootstrap = 0xb0;

void record_metrics(const ArchSpec& arch, const ParamVector& theta, const LabeledBatch& test, Curves& curves) {
  const Matrix logits = forward(arch, theta, test.features);
  const auto pred = predict(logits);
  std::size_t hits = 0;
  double ll = 0.0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    hits += pred[i] == test.labels[i];
    // log-sum-exp form keeps the loss finite when a probability underflows
    const auto row = static_cast<Eigen::Index>(i);
    const double mx = logits.row(row).maxCoeff();
    const double lse = mx + std::log((logits.row(row).array() - mx).exp().sum());
    ll += lse - logits(row, test.labels[i]);
  }
  curves.accuracy.push_back(static_cast<double>(hits) / static_cast<double>(test.size()));
  curves.logloss.push_back(ll / static_cast<double>(test.size()));
}

}  // namespace

TrainedModel train_on_real(const ArchSpec& arch, const Dataset& train, const Dataset& test,
                           const RealTrainingSettings& settings, std::uint64_t seed) {
  if (settings.epochs < 0) throw ValidationError("epochs must be >= 0");
  if (settings.batch_size < 1) throw ValidationError("batch size must be >= 1");
  if (!(settings.lr >= 0.0)) throw ValidationError("learning rate must be >= 0");
  train.validate();
  test.validate();

  TrainedModel out{xavier_init(arch, seed), {}};
  const LabeledBatch test_batch = test.as_batch();
  Rng rng(derive_seed(seed, {kTagShuffle}));
  std::vector<std::size_t> order(train.size());
  const auto b = static_cast<std::size_t>(settings.batch_size);

  for (int epoch = 0; epoch < settings.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t lo = 0; lo < order.size(); lo += b) {
      const std::size_t hi = std::min(lo + b, order.size());
      const LabeledBatch batch = train.rows(std::span<const std::size_t>(order.data() + lo, hi - lo));
      out.theta.axpy(-settings.lr, grad(arch, out.theta, batch));
    }
    if (!out.theta.all_finite()) throw NumericalError("training diverged in epoch " + std::to_string(epoch));
    record_metrics(arch, out.theta, test_batch, out.curves);
    if (!std::isfinite(out.curves.logloss.back())) {
      throw NumericalError("non-finite test loss in epoch " + std::to_string(epoch));
    }
  }
  return out;
}

TrainedModel train_on_distilled(const ArchSpec& arch, const SyntheticData& syn, const TrainingSchedule& sched,
                                const Dataset& test, std::uint64_t seed) {
  test.validate();
  if (sched.steps_per_epoch < 1 && !sched.entries.empty()) throw ValidationError("schedule has no epoch length");
  for (const auto& e : sched.entries) {
    if (e.batch_index < 0 || static_cast<std::size_t>(e.batch_index) >= syn.step_batches.size()) {
      throw ValidationError("schedule batch index out of range for the synthetic data");
    }
  }

  TrainedModel out{xavier_init(arch, seed), {}};
  const LabeledBatch test_batch = test.as_batch();
  for (std::size_t g = 0; g < sched.entries.size(); ++g) {
    const auto& e = sched.entries[g];
    out.theta.axpy(-e.lr, grad(arch, out.theta, syn.step_batches[static_cast<std::size_t>(e.batch_index)]));
    if (!out.theta.all_finite()) throw NumericalError("training diverged at global step " + std::to_string(g));
    const bool epoch_end = g + 1 == sched.entries.size() || sched.entries[g + 1].epoch != e.epoch;
    if (epoch_end) record_metrics(arch, out.theta, test_batch, out.curves);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Statistics

double sample_mean(std::span<const double> samples) {
  if (samples.empty()) throw ValidationError("mean of no samples");
  const double ref = samples.front();
  double acc = 0.0;
  for (double x : samples) acc += x - ref;
  return ref + acc / static_cast<double>(samples.size());
}

double sample_std(std::span<const double> samples) {
  const double mu = sample_mean(samples);
  double acc = 0.0;
  for (double x : samples) acc += (x - mu) * (x - mu);
  return std::sqrt(acc / static_cast<double>(samples.size()));
}

namespace {

double quantile_sorted(const std::vector<double>& v, double q) {
  const double h = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

std::pair<double, double> bootstrap_ci(std::span<const double> samples, double level, int resamples,
                                       std::uint64_t seed) {
  if (samples.size() < 2) throw ValidationError("bootstrap needs at least 2 samples");
  if (!(level > 0.0 && level < 1.0)) throw ValidationError("confidence level must lie in (0, 1)");
  if (resamples < 1000) throw ValidationError("bootstrap needs at least 1000 resamples");

  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, samples.size() - 1);
  const double ref = samples.front();
  std::vector<double> means(static_cast<std::size_t>(resamples));
  for (auto& m : means) {
    double acc = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) acc += samples[pick(rng)] - ref;
    m = ref + acc / static_cast<double>(samples.size());
  }
  std::sort(means.begin(), means.end());
  const double tail = (1.0 - level) / 2.0;
  return {quantile_sorted(means, tail), quantile_sorted(means, 1.0 - tail)};
}

std::vector<double> EvalReport::accuracies() const {
  std::vector<double> out;
  out.reserve(per_restart.size());
  for (const auto& r : per_restart) out.push_back(r.accuracy);
  return out;
}

EvalReport summarize(std::vector<RestartResult> restarts, const BootstrapSettings& bootstrap,
                     std::uint64_t bootstrap_seed, std::string fingerprint) {
  EvalReport report;
  report.per_restart = std::move(restarts);
  report.fingerprint = std::move(fingerprint);
  const auto acc = report.accuracies();
  report.mean = sample_mean(acc);
  report.std = sample_std(acc);
  std::tie(report.ci_lo, report.ci_hi) = bootstrap_ci(acc, bootstrap.level, bootstrap.resamples, bootstrap_seed);
  return report;
}

std::size_t median_model(const EvalReport& report) {
  if (report.per_restart.empty()) throw ValidationError("median of an empty report");
  auto acc = report.accuracies();
  std::sort(acc.begin(), acc.end());
  const double median = acc[(acc.size() - 1) / 2];
  std::size_t best = report.per_restart.size();
  for (std::size_t i = 0; i < report.per_restart.size(); ++i) {
    if (report.per_restart[i].accuracy != median) continue;
    if (best == report.per_restart.size() || report.per_restart[i].seed < report.per_restart[best].seed) best = i;
  }
  return best;
}

// ---------------------------------------------------------------------------
// Cells

std::uint64_t cell_seed(std::uint64_t master_seed, std::string_view source, std::string_view strategy,
                        std::string_view arch) {
  return derive_seed(master_seed, {fnv1a(source), fnv1a(strategy), fnv1a(arch)});
}

std::uint64_t restart_seed(std::uint64_t cell, std::size_t restart) { return derive_seed(cell, {restart}); }

namespace {

std::string fingerprint_of(std::string_view source, std::string_view strategy, const ArchSpec& arch, int restarts,
                           std::uint64_t cell) {
  return std::string(source) + "|" + std::string(strategy) + "|" + arch.to_string() + "|r" +
         std::to_string(restarts) + "|" + std::to_string(cell);
}

RestartResult to_restart(std::uint64_t seed, TrainedModel&& model) {
  RestartResult r;
  r.seed = seed;
  r.accuracy = model.curves.accuracy.empty() ? 0.0 : model.curves.accuracy.back();
  r.logloss = model.curves.logloss.empty() ? 0.0 : model.curves.logloss.back();
  r.curves = std::move(model.curves);
  return r;
}

// Final metrics are also defined for zero-length runs.
RestartResult finish_restart(const ArchSpec& arch, const Dataset& test, std::uint64_t seed, TrainedModel&& model) {
  if (model.curves.accuracy.empty()) {
    Curves c;
    record_metrics(arch, model.theta, test.as_batch(), c);
    RestartResult r = to_restart(seed, std::move(model));
    r.accuracy = c.accuracy.back();
    r.logloss = c.logloss.back();
    return r;
  }
  return to_restart(seed, std::move(model));
}

}  // namespace

EvalReport evaluate_real(const ArchSpec& arch, const Dataset& train, const Dataset& test,
                         const RealTrainingSettings& settings, int restarts, std::uint64_t master_seed,
                         const BootstrapSettings& bootstrap, int jobs) {
  if (restarts < 2) throw ValidationError("evaluation needs at least 2 restarts");
  const std::uint64_t cell = cell_seed(master_seed, kOriginalSource, kNoStrategy, arch.to_string());
  std::vector<RestartResult> results(static_cast<std::size_t>(restarts));
  parallel_for(results.size(), jobs, [&](std::size_t r) {
    const auto seed = restart_seed(cell, r);
    results[r] = finish_restart(arch, test, seed, train_on_real(arch, train, test, settings, seed));
  });
  return summarize(std::move(results), bootstrap, derive_seed(cell, {kTagBootstrap}),
                   fingerprint_of(kOriginalSource, kNoStrategy, arch, restarts, cell));
}

EvalReport evaluate_distilled(const ArchSpec& arch, const std::string& source, const SyntheticData& syn,
                              const StrategySpec& strategy, const Dataset& test, int restarts,
                              std::uint64_t master_seed, const BootstrapSettings& bootstrap, int jobs) {
  if (restarts < 2) throw ValidationError("evaluation needs at least 2 restarts");
  const std::string strategy_name = strategy.name();
  const std::uint64_t cell = cell_seed(master_seed, source, strategy_name, arch.to_string());
  const TrainingSchedule sched = make_schedule(strategy, syn);
  std::vector<RestartResult> results(static_cast<std::size_t>(restarts));
  parallel_for(results.size(), jobs, [&](std::size_t r) {
    const auto seed = restart_seed(cell, r);
    results[r] = finish_restart(arch, test, seed, train_on_distilled(arch, syn, sched, test, seed));
  });
  return summarize(std::move(results), bootstrap, derive_seed(cell, {kTagBootstrap}),
                   fingerprint_of(source, strategy_name, arch, restarts, cell));
}

const CrossEvalCell* CrossEvalMatrix::find(std::string_view source, std::string_view strategy,
                                           std::string_view arch) const {
  for (const auto& c : cells) {
    if (c.source == source && c.strategy == strategy && c.arch == arch) return &c;
  }
  return nullptr;
}

bool CrossEvalMatrix::any_failed() const {
  return std::any_of(cells.begin(), cells.end(), [](const CrossEvalCell& c) { return c.report.failed(); });
}

CrossEvalMatrix cross_eval(const CrossEvalRequest& req) {
  if (req.test == nullptr) throw ValidationError("cross evaluation needs a test set");
  if (req.archs.empty()) throw ValidationError("cross evaluation needs at least one architecture");
  if (req.restarts < 2 || (req.train != nullptr && req.original_restarts < 2)) {
    throw ValidationError("cross evaluation needs at least 2 restarts per cell");
  }

  struct Job {
    const DistilledSource* source = nullptr;  // null for the original row
    const StrategySpec* strategy = nullptr;
    const ArchSpec* arch = nullptr;
  };
  std::vector<Job> jobs;
  if (req.train != nullptr) {
    for (const auto& a : req.archs) jobs.push_back({nullptr, nullptr, &a});
  }
  for (const auto& src : req.sources) {
    for (const auto& st : req.strategies) {
      for (const auto& a : req.archs) jobs.push_back({&src, &st, &a});
    }
  }

  CrossEvalMatrix matrix;
  matrix.cells.resize(jobs.size());
  // Cells run one after another; restarts inside a cell use the worker pool.
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const Job& job = jobs[i];
    CrossEvalCell& cell = matrix.cells[i];
    cell.arch = job.arch->to_string();
    if (job.source == nullptr) {
      cell.source = kOriginalSource;
      cell.strategy = kNoStrategy;
      cell.restarts = req.original_restarts;
    } else {
      cell.source = job.source->name;
      cell.strategy = job.strategy->name();
      cell.restarts = req.restarts;
    }
    try {
      cell.report = job.source == nullptr
                        ? evaluate_real(*job.arch, *req.train, *req.test, req.real, req.original_restarts, req.seed,
                                        req.bootstrap, req.jobs)
                        : evaluate_distilled(*job.arch, job.source->name, job.source->data, *job.strategy, *req.test,
                                             req.restarts, req.seed, req.bootstrap, req.jobs);
    } catch (const std::exception& e) {
      cell.report = EvalReport{};
      cell.report.error = e.what();
    }
  }
  return matrix;
}

// ---------------------------------------------------------------------------
// Plot data

DecisionGrid decision_grid(const ArchSpec& arch, const ParamVector& theta, const GridBounds& bounds,
                           int resolution) {
  if (resolution < 2) throw ValidationError("grid resolution must be >= 2");
  if (!(bounds.x1_min < bounds.x1_max) || !(bounds.x2_min < bounds.x2_max)) {
    throw ValidationError("degenerate grid bounds");
  }
  if (arch.input_width() != 2) throw ValidationError("decision grids need a 2-feature model");

  const auto res = static_cast<std::size_t>(resolution);
  Matrix pts(static_cast<Eigen::Index>(res * res), 2);
  for (std::size_t r = 0; r < res; ++r) {
    const double x2 = bounds.x2_min + (bounds.x2_max - bounds.x2_min) * static_cast<double>(r) / (resolution - 1);
    for (std::size_t c = 0; c < res; ++c) {
      const double x1 = bounds.x1_min + (bounds.x1_max - bounds.x1_min) * static_cast<double>(c) / (resolution - 1);
      const auto row = static_cast<Eigen::Index>(r * res + c);
      pts(row, 0) = x1;
      pts(row, 1) = x2;
    }
  }
  const Matrix logits = forward(arch, theta, pts);
  const Matrix probs = softmax(logits);
  const auto pred = predict(logits);

  DecisionGrid grid;
  grid.bounds = bounds;
  grid.resolution = resolution;
  grid.points.resize(res * res);
  for (std::size_t i = 0; i < grid.points.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    grid.points[i] = {pts(row, 0), pts(row, 1), pred[i], probs(row, 1)};
  }
  return grid;
}

GridBounds bounds_of(const Dataset& data, double margin) {
  data.validate();
  if (data.feature_count() != 2) throw ValidationError("bounds_of needs 2 features");
  const auto mins = data.features.colwise().minCoeff();
  const auto maxs = data.features.colwise().maxCoeff();
  return {mins(0) - margin, maxs(0) + margin, mins(1) - margin, maxs(1) + margin};
}

}  // namespace tabdistill
