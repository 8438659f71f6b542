#include "tabdistill/schedules.hpp"

#include <cmath>

#include "tabdistill/error.hpp"

namespace tabdistill {

std::string_view to_string(StrategyTag tag) {
  switch (tag) {
    case StrategyTag::raw: return "raw";
    case StrategyTag::strategy1: return "strategy1";
    case StrategyTag::strategy2: return "strategy2";
    case StrategyTag::strategy3: return "strategy3";
  }
  return "raw";
}

std::string_view short_name(StrategyTag tag) {
  switch (tag) {
    case StrategyTag::raw: return "raw";
    case StrategyTag::strategy1: return "s1";
    case StrategyTag::strategy2: return "s2";
    case StrategyTag::strategy3: return "s3";
  }
  return "raw";
}

StrategyTag parse_strategy_tag(std::string_view text) {
  if (text == "raw") return StrategyTag::raw;
  if (text == "s1" || text == "strategy1") return StrategyTag::strategy1;
  if (text == "s2" || text == "strategy2") return StrategyTag::strategy2;
  if (text == "s3" || text == "strategy3") return StrategyTag::strategy3;
  throw ValidationError("unknown strategy '" + std::string(text) + "'");
}

void TrainingSchedule::validate() const {
  if (steps_per_epoch < 1) throw ValidationError("schedule needs steps_per_epoch >= 1");
  if (entries.size() % static_cast<std::size_t>(steps_per_epoch) != 0) {
    throw ValidationError("schedule length is not a whole number of epochs");
  }
  for (std::size_t g = 0; g < entries.size(); ++g) {
    const auto& e = entries[g];
    const int epoch = static_cast<int>(g) / steps_per_epoch;
    const int pos = static_cast<int>(g) % steps_per_epoch;
    if (e.epoch != epoch || e.position != pos || e.batch_index != pos) {
      throw ValidationError("schedule entry " + std::to_string(g) + " breaks epoch/batch ordering");
    }
    if (!(e.lr > 0.0) || !std::isfinite(e.lr)) throw ValidationError("schedule entry " + std::to_string(g) + " has lr <= 0");
  }
}

double repeat_factor(double decay, int r) {
  double f = 1.0;
  for (int i = 0; i < r; ++i) f *= decay;
  return f;
}

namespace {

void append_epoch(TrainingSchedule& sched, int epoch, const double* lrs, double factor) {
  for (int p = 0; p < sched.steps_per_epoch; ++p) sched.entries.push_back({epoch, p, p, lrs[p] * factor});
}

}  // namespace

TrainingSchedule raw_schedule(const SyntheticData& syn) {
  TrainingSchedule sched;
  sched.tag = StrategyTag::raw;
  sched.steps_per_epoch = syn.steps_per_epoch;
  const int s = syn.steps_per_epoch;
  for (int e = 0; e < syn.epochs_inner; ++e) append_epoch(sched, e, syn.step_lrs.data() + static_cast<std::size_t>(e) * s, 1.0);
  return sched;
}

TrainingSchedule strategy1(int steps_per_epoch, int total_epochs, double base_lr, int warm_epochs, double growth,
                           double decay) {
  if (steps_per_epoch < 1) throw ValidationError("strategy1 needs steps_per_epoch >= 1");
  if (!(base_lr > 0.0)) throw ValidationError("strategy1 needs a positive base_lr");
  if (warm_epochs < 1 || warm_epochs > total_epochs) {
    throw ValidationError("strategy1 needs 1 <= warm_epochs <= total_epochs");
  }
  if (!(growth > 0.0) || !(decay > 0.0)) throw ValidationError("strategy1 factors must be positive");

  TrainingSchedule sched;
  sched.tag = StrategyTag::strategy1;
  sched.steps_per_epoch = steps_per_epoch;
  sched.params = {{"total_epochs", total_epochs}, {"base_lr", base_lr}, {"warm_epochs", warm_epochs},
                  {"growth", growth}, {"decay", decay}};
  double lr = base_lr;
  for (int e = 0; e < total_epochs; ++e) {
    if (e > 0) lr *= e < warm_epochs ? growth : decay;
    for (int p = 0; p < steps_per_epoch; ++p) sched.entries.push_back({e, p, p, lr});
  }
  return sched;
}

TrainingSchedule strategy2(const SyntheticData& syn, int repetitions, double decay) {
  if (repetitions < 1) throw ValidationError("strategy2 needs repetitions >= 1");
  if (!(decay > 0.0 && decay <= 1.0)) throw ValidationError("strategy2 needs 0 < decay <= 1");
  TrainingSchedule sched;
  sched.tag = StrategyTag::strategy2;
  sched.steps_per_epoch = syn.steps_per_epoch;
  sched.params = {{"repetitions", repetitions}, {"decay", decay}};
  const int s = syn.steps_per_epoch;
  for (int r = 0; r < repetitions; ++r) {
    const double factor = repeat_factor(decay, r);
    for (int e = 0; e < syn.epochs_inner; ++e) {
      append_epoch(sched, r * syn.epochs_inner + e, syn.step_lrs.data() + static_cast<std::size_t>(e) * s, factor);
    }
  }
  return sched;
}

TrainingSchedule strategy3(const SyntheticData& syn, int repetitions, double decay) {
  if (repetitions < 0) throw ValidationError("strategy3 needs repetitions >= 0");
  if (!(decay > 0.0 && decay <= 1.0)) throw ValidationError("strategy3 needs 0 < decay <= 1");
  if (repetitions > 0 && syn.epochs_inner < 1) throw ValidationError("strategy3 needs at least one distilled epoch");
  TrainingSchedule sched = raw_schedule(syn);
  sched.tag = StrategyTag::strategy3;
  sched.params = {{"repetitions", repetitions}, {"decay", decay}};
  const int s = syn.steps_per_epoch;
  const double* last = syn.step_lrs.data() + static_cast<std::size_t>(syn.epochs_inner - 1) * s;
  for (int r = 1; r <= repetitions; ++r) append_epoch(sched, syn.epochs_inner + r - 1, last, repeat_factor(decay, r));
  return sched;
}

TrainingSchedule make_schedule(const StrategySpec& spec, const SyntheticData& syn) {
  switch (spec.tag) {
    case StrategyTag::raw: return raw_schedule(syn);
    case StrategyTag::strategy1:
      return strategy1(syn.steps_per_epoch, spec.s1_total_epochs, spec.s1_base_lr, spec.s1_warm_epochs, spec.s1_growth,
                       spec.s1_decay);
    case StrategyTag::strategy2: return strategy2(syn, spec.s2_repetitions, spec.s2_decay);
    case StrategyTag::strategy3: return strategy3(syn, spec.s3_repetitions, spec.s3_decay);
  }
  throw ValidationError("unknown strategy");
}

}  // namespace tabdistill
