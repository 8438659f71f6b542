#include "tabdistill/distill.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "tabdistill/error.hpp"
#include "tabdistill/parallel.hpp"
#include "tabdistill/rng.hpp"

namespace tabdistill {

namespace {

constexpr std::uint64_t kTagSyntheticInit = 0x5e;
constexpr std::uint64_t kTagRealBatches = 0xba;
constexpr std::uint64_t kTagModelInit = 0x7e;

}  // namespace

// ---------------------------------------------------------------------------
// Config

void DistillConfig::validate() const {
  if (inner_models < 1) throw ValidationError("inner_models must be >= 1");
  if (steps_per_epoch < 1) throw ValidationError("steps_per_epoch must be >= 1");
  if (inner_epochs < 0) throw ValidationError("inner_epochs must be >= 0");
  if (outer_epochs < 0) throw ValidationError("outer_epochs must be >= 0");
  if (real_batch_size < 1) throw ValidationError("real_batch_size must be >= 1");
  if (synthetic_batch_size < 2 || synthetic_batch_size % 2 != 0) {
    throw ValidationError("synthetic_batch_size must be even and >= 2 (balanced labels)");
  }
  if (!(lr_init > 0.0)) throw ValidationError("lr_init must be positive");
  if (!(min_lr > 0.0)) throw ValidationError("min_lr must be positive");
  if (!(synthetic_init.stddev >= 0.0)) throw ValidationError("synthetic_init.stddev must be non-negative");
  if (!(outer_optimizer.step >= 0.0) || !(outer_optimizer.epsilon > 0.0) ||
      !(outer_optimizer.beta1 >= 0.0 && outer_optimizer.beta1 < 1.0) ||
      !(outer_optimizer.beta2 >= 0.0 && outer_optimizer.beta2 < 1.0)) {
    throw ValidationError("invalid outer optimizer settings");
  }
  if (architectures.empty()) throw ValidationError("at least one architecture is required");
  if (architectures.size() != 1 && architectures.size() != static_cast<std::size_t>(inner_models)) {
    throw ValidationError("architectures must list one entry or one per inner model");
  }
  for (const auto& a : architectures) {
    a.validate();
    if (a.input_width() != architectures.front().input_width()) {
      throw ValidationError("all architectures must share the input width");
    }
    if (a.output_width() != 2) throw ValidationError("architectures must have 2 output classes");
  }
}

const ArchSpec& DistillConfig::arch_for_model(std::size_t j) const {
  return architectures.size() == 1 ? architectures.front() : architectures.at(j);
}

std::vector<ArchSpec> DistillConfig::model_architectures() const {
  std::vector<ArchSpec> out;
  for (std::size_t j = 0; j < static_cast<std::size_t>(inner_models); ++j) out.push_back(arch_for_model(j));
  return out;
}

std::size_t DistillConfig::outer_steps_per_epoch(std::size_t train_rows) const {
  const auto b = static_cast<std::size_t>(real_batch_size);
  return (train_rows + b - 1) / b;
}

std::size_t DistillConfig::outer_steps(std::size_t train_rows) const {
  return static_cast<std::size_t>(outer_epochs) * outer_steps_per_epoch(train_rows);
}

DistillCounters& DistillCounters::operator+=(const DistillCounters& rhs) {
  outer_steps += rhs.outer_steps;
  inner_forward_passes += rhs.inner_forward_passes;
  second_order_passes += rhs.second_order_passes;
  real_loss_evaluations += rhs.real_loss_evaluations;
  peak_snapshots_per_model = std::max(peak_snapshots_per_model, rhs.peak_snapshots_per_model);
  return *this;
}

DistillCounters planned_counters(const DistillConfig& config, std::size_t train_rows) {
  const std::uint64_t m = static_cast<std::uint64_t>(config.inner_models);
  const std::uint64_t t = config.outer_steps(train_rows);
  const std::uint64_t n = static_cast<std::uint64_t>(config.total_inner_steps());
  DistillCounters c;
  c.outer_steps = t;
  c.inner_forward_passes = m * t * n;
  c.second_order_passes = m * t * n;
  c.real_loss_evaluations = m * t;
  c.peak_snapshots_per_model = t > 0 ? n : 0;
  return c;
}

// ---------------------------------------------------------------------------
// Synthetic data

std::size_t SyntheticData::object_count() const {
  std::size_t total = 0;
  for (const auto& b : step_batches) total += b.size();
  return total;
}

void SyntheticData::validate() const {
  if (steps_per_epoch < 1) throw ValidationError("synthetic data needs steps_per_epoch >= 1");
  if (epochs_inner < 0) throw ValidationError("synthetic data needs epochs_inner >= 0");
  if (step_batches.size() != static_cast<std::size_t>(steps_per_epoch)) {
    throw ValidationError("synthetic data must hold one batch per step in an epoch");
  }
  if (step_lrs.size() != static_cast<std::size_t>(epochs_inner) * static_cast<std::size_t>(steps_per_epoch)) {
    throw ValidationError("learning-rate count must equal epochs_inner * steps_per_epoch");
  }
  for (double lr : step_lrs) {
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ValidationError("synthetic learning rates must be positive and finite");
  }
  const std::size_t b = step_batches.front().size();
  for (const auto& batch : step_batches) {
    batch.validate();
    if (batch.size() != b) throw ValidationError("synthetic batches must share the batch size");
    const auto ones = std::count(batch.labels.begin(), batch.labels.end(), 1);
    if (static_cast<std::size_t>(ones) * 2 != batch.size()) throw ValidationError("synthetic batches must be class balanced");
  }
}

std::uint64_t synthetic_init_seed(std::uint64_t master_seed) { return derive_seed(master_seed, {kTagSyntheticInit}); }

std::uint64_t model_init_seed(std::uint64_t master_seed, std::uint64_t outer_step, std::uint64_t model) {
  return derive_seed(master_seed, {kTagModelInit, outer_step, model});
}

SyntheticData init_synthetic(const DistillConfig& config, std::uint64_t rng_seed) {
  config.validate();
  const int b = config.synthetic_batch_size;
  const int d = config.architectures.front().input_width();

  SyntheticData syn;
  syn.steps_per_epoch = config.steps_per_epoch;
  syn.epochs_inner = config.inner_epochs;
  Rng rng(rng_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int step = 0; step < config.steps_per_epoch; ++step) {
    LabeledBatch batch;
    batch.features.resize(b, d);
    for (int i = 0; i < b; ++i) {
      for (int c = 0; c < d; ++c) {
        batch.features(i, c) = config.synthetic_init.mean + config.synthetic_init.stddev * normal(rng);
      }
    }
    batch.labels.resize(static_cast<std::size_t>(b));
    for (int i = 0; i < b; ++i) batch.labels[static_cast<std::size_t>(i)] = i < b / 2 ? 0 : 1;
    syn.step_batches.push_back(std::move(batch));
  }
  syn.step_lrs.assign(static_cast<std::size_t>(config.total_inner_steps()), config.lr_init);

  syn.metadata.config = config;
  syn.metadata.master_seed = config.seed;
  syn.metadata.init_seed = rng_seed;
  for (const auto& a : config.model_architectures()) syn.metadata.architectures.push_back(a.to_string());
  return syn;
}

// ---------------------------------------------------------------------------
// Forward / backward through the unroll

Trajectory inner_unroll(const ArchSpec& arch, const ParamVector& theta0, const SyntheticData& syn) {
  if (!theta0.matches(arch)) throw ValidationError("theta0 does not match architecture " + arch.to_string());
  const std::size_t n = syn.total_steps();
  Trajectory traj;
  traj.snapshots.reserve(n + 1);
  traj.steps.reserve(n);
  traj.snapshots.push_back(theta0);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = syn.batch_index(k);
    ParamVector g = grad(arch, traj.snapshots.back(), syn.step_batches[i]);
    ParamVector next = traj.snapshots.back();
    next.axpy(-syn.step_lrs[k], g);
    if (!next.all_finite()) {
      throw NumericalError("non-finite parameters after inner step " + std::to_string(k));
    }
    traj.steps.push_back({std::move(g), i});
    traj.snapshots.push_back(std::move(next));
  }
  return traj;
}

HypergradAccumulator HypergradAccumulator::zeros_like(const SyntheticData& syn) {
  HypergradAccumulator acc;
  for (const auto& b : syn.step_batches) acc.grad_x.push_back(Matrix::Zero(b.features.rows(), b.features.cols()));
  acc.grad_lr.assign(syn.total_steps(), 0.0);
  return acc;
}

HypergradAccumulator& HypergradAccumulator::operator+=(const HypergradAccumulator& rhs) {
  if (rhs.grad_x.size() != grad_x.size() || rhs.grad_lr.size() != grad_lr.size()) {
    throw ValidationError("accumulator shapes differ");
  }
  for (std::size_t i = 0; i < grad_x.size(); ++i) grad_x[i] += rhs.grad_x[i];
  for (std::size_t k = 0; k < grad_lr.size(); ++k) grad_lr[k] += rhs.grad_lr[k];
  outer_loss += rhs.outer_loss;
  counters += rhs.counters;
  return *this;
}

void HypergradAccumulator::clear_gradients() {
  for (auto& g : grad_x) g.setZero();
  std::fill(grad_lr.begin(), grad_lr.end(), 0.0);
  outer_loss = 0.0;
}

void backward_pass(const ArchSpec& arch, const Trajectory& traj, const SyntheticData& syn,
                   const LabeledBatch& real_batch, int inner_models, HypergradAccumulator& acc) {
  const std::size_t n = syn.total_steps();
  if (traj.snapshots.size() != n + 1 || traj.steps.size() != n) {
    throw ValidationError("trajectory length does not match the synthetic schedule");
  }
  if (acc.grad_x.size() != syn.step_batches.size() || acc.grad_lr.size() != n) {
    throw ValidationError("accumulator shape does not match the synthetic data");
  }
  if (inner_models < 1) throw ValidationError("inner_models must be >= 1");
  const double weight = 1.0 / inner_models;

  const LossGrad final_eval = loss_and_grad(arch, traj.snapshots.back(), real_batch);
  acc.outer_loss += weight * final_eval.loss;
  ParamVector adjoint = weight * final_eval.grad;
  if (!adjoint.all_finite()) throw NumericalError("non-finite real-data gradient at theta_n");

  for (std::size_t k = n; k-- > 0;) {
    const StepRecord& rec = traj.steps[k];
    if (rec.batch_index != syn.batch_index(k)) throw ValidationError("trajectory batch routing differs from i(k) = k mod s");
    const double lr = syn.step_lrs[k];
    acc.grad_lr[k] -= adjoint.dot(rec.grad);
    SecondOrder so = second_order(arch, traj.snapshots[k], syn.step_batches[rec.batch_index], adjoint);
    acc.grad_x[rec.batch_index] -= lr * so.mixed;
    adjoint.axpy(-lr, so.hvp);
    if (!adjoint.all_finite() || !std::isfinite(acc.grad_lr[k])) {
      throw NumericalError("non-finite hypergradient at inner step " + std::to_string(k));
    }
  }

  acc.counters.inner_forward_passes += traj.steps.size();
  acc.counters.second_order_passes += n;
  acc.counters.real_loss_evaluations += 1;
  acc.counters.peak_snapshots_per_model = std::max(acc.counters.peak_snapshots_per_model, traj.trained_copies());
}

// ---------------------------------------------------------------------------
// Outer update

OuterOptimizerState OuterOptimizerState::zeros_like(const SyntheticData& syn) {
  OuterOptimizerState s;
  for (const auto& b : syn.step_batches) {
    s.m_x.push_back(Matrix::Zero(b.features.rows(), b.features.cols()));
    s.v_x.push_back(Matrix::Zero(b.features.rows(), b.features.cols()));
  }
  s.m_lr = Vector::Zero(static_cast<Eigen::Index>(syn.total_steps()));
  s.v_lr = Vector::Zero(static_cast<Eigen::Index>(syn.total_steps()));
  return s;
}

SyntheticData outer_step(const AdamSettings& settings, double min_lr, const SyntheticData& syn,
                         const HypergradAccumulator& acc, OuterOptimizerState& state) {
  if (acc.grad_x.size() != syn.step_batches.size() || acc.grad_lr.size() != syn.total_steps()) {
    throw ValidationError("accumulator shape does not match the synthetic data");
  }
  if (state.m_x.size() != syn.step_batches.size() ||
      static_cast<std::size_t>(state.m_lr.size()) != syn.total_steps()) {
    throw ValidationError("optimizer state shape does not match the synthetic data");
  }

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(settings.beta1, t);
  const double c2 = 1.0 - std::pow(settings.beta2, t);

  auto moment_update = [&](auto&& param, const auto& g, auto&& m, auto&& v) {
    m = settings.beta1 * m + (1.0 - settings.beta1) * g;
    v = settings.beta2 * v + (1.0 - settings.beta2) * g.cwiseProduct(g);
    param -= (settings.step * (m / c1).array() / ((v / c2).array().sqrt() + settings.epsilon)).matrix();
  };

  SyntheticData next = syn;
  for (std::size_t i = 0; i < next.step_batches.size(); ++i) {
    moment_update(next.step_batches[i].features, acc.grad_x[i], state.m_x[i], state.v_x[i]);
    if (!next.step_batches[i].features.allFinite()) {
      throw NumericalError("non-finite synthetic features after outer step " + std::to_string(state.step));
    }
  }

  const auto n = static_cast<Eigen::Index>(syn.total_steps());
  Eigen::Map<Vector> lrs(next.step_lrs.data(), n);
  const Eigen::Map<const Vector> g_lr(acc.grad_lr.data(), n);
  moment_update(lrs, g_lr, state.m_lr, state.v_lr);
  for (double& lr : next.step_lrs) {
    if (!std::isfinite(lr)) throw NumericalError("non-finite learning rate after outer step " + std::to_string(state.step));
    lr = std::max(lr, min_lr);
  }
  return next;
}

// ---------------------------------------------------------------------------
// Main cycle

SyntheticData distill(const DistillConfig& config, const Dataset& train, const OuterStepCallback& on_step) {
  config.validate();
  train.validate();
  if (static_cast<int>(train.feature_count()) != config.architectures.front().input_width()) {
    throw ValidationError("training features do not match the architecture input width");
  }

  SyntheticData syn = init_synthetic(config, synthetic_init_seed(config.seed));
  OuterOptimizerState state = OuterOptimizerState::zeros_like(syn);
  const auto archs = config.model_architectures();
  const std::size_t m = archs.size();
  const std::size_t per_epoch = config.outer_steps_per_epoch(train.size());
  const auto batch_size = static_cast<std::size_t>(config.real_batch_size);

  DistillCounters totals;
  Rng batch_rng(derive_seed(config.seed, {kTagRealBatches}));
  std::vector<std::size_t> order(train.size());
  std::size_t t = 0;

  for (int epoch = 0; epoch < config.outer_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), batch_rng);
    for (std::size_t b = 0; b < per_epoch; ++b, ++t) {
      const std::size_t lo = b * batch_size;
      const std::size_t hi = std::min(lo + batch_size, order.size());
      const LabeledBatch real = train.rows(std::span<const std::size_t>(order.data() + lo, hi - lo));

      std::vector<HypergradAccumulator> per_model(m, HypergradAccumulator::zeros_like(syn));
      std::vector<ParamVector> finals(m);
      parallel_for(m, config.jobs, [&](std::size_t j) {
        try {
          const ParamVector theta0 = xavier_init(archs[j], model_init_seed(config.seed, t, j));
          const Trajectory traj = inner_unroll(archs[j], theta0, syn);
          backward_pass(archs[j], traj, syn, real, config.inner_models, per_model[j]);
          if (on_step) finals[j] = traj.snapshots.back();
        } catch (const NumericalError& e) {
          throw NumericalError("outer step " + std::to_string(t) + ", model " + std::to_string(j) + ": " + e.what());
        }
      });

      HypergradAccumulator acc = HypergradAccumulator::zeros_like(syn);
      for (const auto& part : per_model) acc += part;
      totals += acc.counters;
      totals.outer_steps += 1;

      try {
        syn = outer_step(config.outer_optimizer, config.min_lr, syn, acc, state);
      } catch (const NumericalError& e) {
        throw NumericalError("outer step " + std::to_string(t) + ": " + e.what());
      }
      if (on_step) on_step({static_cast<std::size_t>(epoch), t, acc.outer_loss, std::move(finals)});
    }
  }

  syn.metadata.counters = totals;
  return syn;
}

}  // namespace tabdistill
