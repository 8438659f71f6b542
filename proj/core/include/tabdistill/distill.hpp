#pragma once

// Distillation of a training set into per-step synthetic batches and
// per-step learning rates by differentiating the real-data loss through an
// unrolled run of plain gradient descent on the synthetic batches.
//
// Inner step k (k = 0..n-1) trains on batch i(k) = k mod s:
//   theta_{k+1} = theta_k - lr_k * grad l(xs_{i(k)}, theta_k)
// and the outer objective is L = (1/m) sum_j l(x_real, theta_n^(j)).

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tabdistill/datagen.hpp"
#include "tabdistill/netgrad.hpp"

namespace tabdistill {

inline constexpr int kSyntheticFormatVersion = 1;

struct AdamSettings {
  double step = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Synthetic features start as mean + stddev * N(0, 1) in standardized space.
struct SyntheticInit {
  double mean = 0.0;
  double stddev = 1.0;
};

struct DistillConfig {
  int inner_models = 3;
  /// One entry per inner model, or a single entry shared by all of them.
  std::vector<ArchSpec> architectures = {ArchSpec::preset("2layer")};
  int steps_per_epoch = 40;
  int inner_epochs = 5;
  int outer_epochs = 50;
  int real_batch_size = 64;
  AdamSettings outer_optimizer;
  int synthetic_batch_size = 8;
  double lr_init = 0.01;
  double min_lr = 1e-6;
  SyntheticInit synthetic_init;
  std::uint64_t seed = 0;
  /// Threads for the per-model work inside one outer step. Accumulation is
  /// always summed in model order, so the result does not depend on it.
  int jobs = 1;

  void validate() const;
  int total_inner_steps() const { return inner_epochs * steps_per_epoch; }
  const ArchSpec& arch_for_model(std::size_t j) const;
  std::vector<ArchSpec> model_architectures() const;
  std::size_t outer_steps_per_epoch(std::size_t train_rows) const;
  std::size_t outer_steps(std::size_t train_rows) const;
};

struct DistillCounters {
  std::uint64_t outer_steps = 0;
  std::uint64_t inner_forward_passes = 0;  // grad evaluations during unrolls
  std::uint64_t second_order_passes = 0;   // hvp + mixed sweeps during reverse passes
  std::uint64_t real_loss_evaluations = 0;
  std::uint64_t peak_snapshots_per_model = 0;  // trained copies theta_1..theta_n held at once

  DistillCounters& operator+=(const DistillCounters& rhs);
  friend bool operator==(const DistillCounters&, const DistillCounters&) = default;
};

struct SyntheticMetadata {
  int format_version = kSyntheticFormatVersion;
  std::vector<std::string> architectures;
  DistillConfig config;
  std::uint64_t master_seed = 0;
  std::uint64_t init_seed = 0;
  std::string theta_init = "xavier_uniform_zero_bias";
  std::string outer_optimizer = "adam";
  DistillCounters counters;
};

struct SyntheticData {
  std::vector<LabeledBatch> step_batches;  // s batches
  std::vector<double> step_lrs;            // n = inner_epochs * s rates
  int epochs_inner = 0;
  int steps_per_epoch = 0;
  SyntheticMetadata metadata;

  std::size_t total_steps() const { return step_lrs.size(); }
  std::size_t batch_index(std::size_t k) const { return k % static_cast<std::size_t>(steps_per_epoch); }
  std::size_t object_count() const;
  void validate() const;
};

/// Draws labels (balanced, fixed), features and the constant initial rates.
SyntheticData init_synthetic(const DistillConfig& config, std::uint64_t rng_seed);

struct StepRecord {
  ParamVector grad;  // grad l(xs_{i(k)}, theta_k)
  std::size_t batch_index = 0;
};

struct Trajectory {
  std::vector<ParamVector> snapshots;  // theta_0..theta_n
  std::vector<StepRecord> steps;       // n records

  std::uint64_t trained_copies() const { return snapshots.empty() ? 0 : snapshots.size() - 1; }
};

/// Plain gradient descent over the synthetic program, keeping every snapshot.
Trajectory inner_unroll(const ArchSpec& arch, const ParamVector& theta0, const SyntheticData& syn);

struct HypergradAccumulator {
  std::vector<Matrix> grad_x;
  std::vector<double> grad_lr;
  double outer_loss = 0.0;  // accumulated (1/m) l(x_real, theta_n)
  DistillCounters counters;

  static HypergradAccumulator zeros_like(const SyntheticData& syn);
  /// Adds gradients and loss; counters add except the peak, which takes the max.
  HypergradAccumulator& operator+=(const HypergradAccumulator& rhs);
  void clear_gradients();
};

/// Reverse pass through one unrolled model. Starts from
/// dL/dtheta_n = (1/m) grad l(real, theta_n) and walks k = n-1..0:
///   dL/dlr_k          -= <dL/dtheta_{k+1}, grad l(xs_{i(k)}, theta_k)>
///   dL/dxs_{i(k)}     -= lr_k * mixed_vjp(theta_k, xs_{i(k)}, dL/dtheta_{k+1})
///   dL/dtheta_k        = dL/dtheta_{k+1} - lr_k * hvp(theta_k, xs_{i(k)}, dL/dtheta_{k+1})
void backward_pass(const ArchSpec& arch, const Trajectory& traj, const SyntheticData& syn,
                   const LabeledBatch& real_batch, int inner_models, HypergradAccumulator& acc);

/// Bias-corrected adaptive-moment state over all synthetic features and rates.
struct OuterOptimizerState {
  std::vector<Matrix> m_x, v_x;
  Vector m_lr, v_lr;
  std::uint64_t step = 0;

  static OuterOptimizerState zeros_like(const SyntheticData& syn);
};

SyntheticData outer_step(const AdamSettings& settings, double min_lr, const SyntheticData& syn,
                         const HypergradAccumulator& acc, OuterOptimizerState& state);

/// Seed of theta_0 for model j at outer step t.
std::uint64_t model_init_seed(std::uint64_t master_seed, std::uint64_t outer_step, std::uint64_t model);
std::uint64_t synthetic_init_seed(std::uint64_t master_seed);

struct OuterStepInfo {
  std::size_t outer_epoch = 0;
  std::size_t outer_step = 0;  // global index t
  double outer_loss = 0.0;     // L at the start of the step
  std::vector<ParamVector> final_params;  // theta_n of every inner model, before the update
};

using OuterStepCallback = std::function<void(const OuterStepInfo&)>;

/// Full outer loop: T = outer_epochs * ceil(|train| / real_batch_size) steps,
/// real minibatches drawn without replacement inside each outer epoch, fresh
/// theta_0 for every model at every step.
SyntheticData distill(const DistillConfig& config, const Dataset& train, const OuterStepCallback& on_step = {});

/// Counters a run of `config` on `train_rows` rows reports, derived without
/// running it.
DistillCounters planned_counters(const DistillConfig& config, std::size_t train_rows);

}  // namespace tabdistill
