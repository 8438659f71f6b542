#pragma once

// Training and evaluation of models on real or distilled data, restart
// statistics, cross-architecture matrices and plot data.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tabdistill/datagen.hpp"
#include "tabdistill/distill.hpp"
#include "tabdistill/netgrad.hpp"
#include "tabdistill/schedules.hpp"

namespace tabdistill {

/// Test-set metrics sampled once per epoch (real training) or once per
/// schedule epoch (distilled training).
struct Curves {
  std::vector<double> accuracy;
  std::vector<double> logloss;
};

struct TrainedModel {
  ParamVector theta;
  Curves curves;
};

struct RealTrainingSettings {
  int epochs = 500;
  double lr = 0.05;
  int batch_size = 64;
};

/// Minibatch gradient descent with a constant rate and a per-epoch reshuffle.
/// theta_0 = xavier_init(arch, seed); the shuffle stream is derived from seed.
TrainedModel train_on_real(const ArchSpec& arch, const Dataset& train, const Dataset& test,
                           const RealTrainingSettings& settings, std::uint64_t seed);

/// theta_0 = xavier_init(arch, seed), then theta <- theta - lr * grad on the
/// scheduled synthetic batch, entry by entry.
TrainedModel train_on_distilled(const ArchSpec& arch, const SyntheticData& syn, const TrainingSchedule& sched,
                                const Dataset& test, std::uint64_t seed);

/// Mean shifted by the first sample, so identical samples give that value
/// exactly.
double sample_mean(std::span<const double> samples);
/// Population standard deviation.
double sample_std(std::span<const double> samples);

/// Percentile bootstrap interval of the mean.
std::pair<double, double> bootstrap_ci(std::span<const double> samples, double level, int resamples,
                                       std::uint64_t seed);

struct BootstrapSettings {
  double level = 0.95;
  int resamples = 10000;
};

struct RestartResult {
  std::uint64_t seed = 0;
  double accuracy = 0.0;  // final test accuracy
  double logloss = 0.0;   // final test log-loss
  Curves curves;
};

struct EvalReport {
  std::vector<RestartResult> per_restart;
  double mean = 0.0;
  double std = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  std::string fingerprint;
  std::string error;  // set when the cell failed

  bool failed() const { return !error.empty(); }
  std::vector<double> accuracies() const;
};

/// Fills mean / std / ci from per_restart.
EvalReport summarize(std::vector<RestartResult> restarts, const BootstrapSettings& bootstrap,
                     std::uint64_t bootstrap_seed, std::string fingerprint);

/// Restart whose final accuracy is the (lower) median; ties go to the
/// smallest seed. Returns an index into per_restart.
std::size_t median_model(const EvalReport& report);

/// Seed of a (data source, strategy, test architecture) cell and of restart r
/// inside it.
std::uint64_t cell_seed(std::uint64_t master_seed, std::string_view source, std::string_view strategy,
                        std::string_view arch);
std::uint64_t restart_seed(std::uint64_t cell, std::size_t restart);

inline constexpr const char* kOriginalSource = "original";
inline constexpr const char* kNoStrategy = "none";

/// `restarts` trainings of arch on the real training set.
EvalReport evaluate_real(const ArchSpec& arch, const Dataset& train, const Dataset& test,
                         const RealTrainingSettings& settings, int restarts, std::uint64_t master_seed,
                         const BootstrapSettings& bootstrap, int jobs = 1);

/// `restarts` trainings of arch on syn under one strategy.
EvalReport evaluate_distilled(const ArchSpec& arch, const std::string& source, const SyntheticData& syn,
                              const StrategySpec& strategy, const Dataset& test, int restarts,
                              std::uint64_t master_seed, const BootstrapSettings& bootstrap, int jobs = 1);

struct DistilledSource {
  std::string name;
  SyntheticData data;
};

struct CrossEvalRequest {
  /// Adds an "original" row trained on real data when set.
  const Dataset* train = nullptr;
  int original_restarts = 25;
  RealTrainingSettings real;

  std::vector<DistilledSource> sources;
  std::vector<StrategySpec> strategies;
  std::vector<ArchSpec> archs;
  int restarts = 10;

  const Dataset* test = nullptr;
  std::uint64_t seed = 0;
  BootstrapSettings bootstrap;
  int jobs = 1;
};

struct CrossEvalCell {
  std::string source;
  std::string strategy;
  std::string arch;
  int restarts = 0;
  EvalReport report;
};

struct CrossEvalMatrix {
  std::vector<CrossEvalCell> cells;  // original row first, then source-major, strategy, arch

  const CrossEvalCell* find(std::string_view source, std::string_view strategy, std::string_view arch) const;
  bool any_failed() const;
};

/// Every (source, strategy, arch) cell, plus the original row when a training
/// set is supplied. A failing cell records its error and the others proceed.
CrossEvalMatrix cross_eval(const CrossEvalRequest& request);

struct GridBounds {
  double x1_min = -3.0, x1_max = 3.0;
  double x2_min = -3.0, x2_max = 3.0;
};

struct GridPoint {
  double x1 = 0.0;
  double x2 = 0.0;
  int predicted = 0;
  double p1 = 0.0;  // class-1 probability
};

/// Row-major over x2 (outer) then x1 (inner), resolution points per axis,
/// endpoints included.
struct DecisionGrid {
  GridBounds bounds;
  int resolution = 0;
  std::vector<GridPoint> points;
};

DecisionGrid decision_grid(const ArchSpec& arch, const ParamVector& theta, const GridBounds& bounds, int resolution);

/// Bounding box of a dataset padded by `margin` on every side.
GridBounds bounds_of(const Dataset& data, double margin = 0.5);

}  // namespace tabdistill
