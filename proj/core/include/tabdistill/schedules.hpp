#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "tabdistill/distill.hpp"

namespace tabdistill {

enum class StrategyTag { raw, strategy1, strategy2, strategy3 };

std::string_view to_string(StrategyTag tag);
/// Accepts "raw", "s1"/"strategy1", "s2"/"strategy2", "s3"/"strategy3".
StrategyTag parse_strategy_tag(std::string_view text);
/// Short label used in report rows: raw, s1, s2, s3.
std::string_view short_name(StrategyTag tag);

struct ScheduleEntry {
  int epoch = 0;
  int position = 0;     // step inside the epoch
  int batch_index = 0;  // synthetic batch trained on
  double lr = 0.0;

  friend bool operator==(const ScheduleEntry&, const ScheduleEntry&) = default;
};

struct TrainingSchedule {
  std::vector<ScheduleEntry> entries;
  StrategyTag tag = StrategyTag::raw;
  int steps_per_epoch = 0;
  std::map<std::string, double> params;

  std::size_t size() const { return entries.size(); }
  int epoch_count() const { return steps_per_epoch > 0 ? static_cast<int>(entries.size()) / steps_per_epoch : 0; }
  /// Epochs are contiguous runs of exactly steps_per_epoch entries with
  /// batch indices 0..s-1 in order; every lr is positive.
  void validate() const;
};

/// Replays the distilled rates: epoch e, position p uses lr_{e*s+p}.
TrainingSchedule raw_schedule(const SyntheticData& syn);

/// Ignores distilled rates. Epochs before `warm_epochs` use base * growth^e,
/// later ones base * growth^(warm-1) * decay^(e-warm+1). Constant within an
/// epoch.
TrainingSchedule strategy1(int steps_per_epoch, int total_epochs, double base_lr, int warm_epochs,
                           double growth = 1.1, double decay = 0.95);

/// The whole n-step program repeated `repetitions` times, repetition r scaled
/// by decay^r.
TrainingSchedule strategy2(const SyntheticData& syn, int repetitions, double decay);

/// The n-step program once, then `repetitions` copies of its final epoch,
/// copy r (from 1) scaled by decay^r.
TrainingSchedule strategy3(const SyntheticData& syn, int repetitions, double decay);

/// decay^r by repeated multiplication, the factor both repeat strategies use.
double repeat_factor(double decay, int r);

/// A strategy plus all of its knobs, as named in configs and report rows.
struct StrategySpec {
  StrategyTag tag = StrategyTag::raw;
  int s1_total_epochs = 50;
  double s1_base_lr = 0.01;
  int s1_warm_epochs = 10;
  double s1_growth = 1.1;
  double s1_decay = 0.95;
  int s2_repetitions = 10;
  double s2_decay = 0.98;
  int s3_repetitions = 45;
  double s3_decay = 0.98;

  std::string name() const { return std::string(short_name(tag)); }
};

TrainingSchedule make_schedule(const StrategySpec& spec, const SyntheticData& syn);

}  // namespace tabdistill
