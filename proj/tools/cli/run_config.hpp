#pragma once

// Flat dotted-key configuration shared by every subcommand. Values resolve
// as defaults < config file < TABDISTILL_* environment < command-line flags.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tabdistill/netgrad.hpp"
#include "tabdistill/schedules.hpp"
#include "tabdistill/serialize.hpp"

namespace tabdistill::cli {

inline constexpr int kConfigFormatVersion = 1;
inline constexpr const char* kEnvPrefix = "TABDISTILL_";

class RunConfig {
 public:
  /// Every known key with its default; the default fixes the key's type.
  static RunConfig defaults();

  /// Merges a flat JSON object. Unknown keys and mistyped values are
  /// rejected with ValidationError naming `origin`.
  void merge(const Json& flat, const std::string& origin);
  /// Parses `text` according to the key's type.
  void set(const std::string& key, const std::string& text, const std::string& origin);
  /// Applies TABDISTILL_<KEY> variables (dots become underscores, upper case).
  void merge_env(const std::map<std::string, std::string>& env);

  bool has(const std::string& key) const { return values_.contains(key); }
  const Json& at(const std::string& key) const;
  std::string str(const std::string& key) const { return at(key).get<std::string>(); }
  int integer(const std::string& key) const { return at(key).get<int>(); }
  std::uint64_t u64(const std::string& key) const { return at(key).get<std::uint64_t>(); }
  double real(const std::string& key) const { return at(key).get<double>(); }
  bool flag(const std::string& key) const { return at(key).get<bool>(); }
  /// Comma-separated list; empty string gives an empty list.
  std::vector<std::string> list(const std::string& key) const;

  /// The flat object with every key, sorted.
  const Json& values() const { return values_; }

  static std::string env_name(const std::string& key);

 private:
  Json values_ = Json::object();
};

/// The environment as a map, restricted to TABDISTILL_* names.
std::map<std::string, std::string> current_environment();

/// Loads and merges the config file, then env, then (key, text) overrides in
/// order.
RunConfig resolve_config(const std::optional<std::string>& config_file, const std::map<std::string, std::string>& env,
                         const std::vector<std::pair<std::string, std::string>>& overrides);

/// Architecture list such as "1layer,2layer,2-8-2:tanh"; presets take the
/// hidden width and activation given.
std::vector<ArchSpec> parse_arch_list(const std::vector<std::string>& tokens, int hidden_width, Activation act);
std::vector<ArchSpec> arch_list(const RunConfig& cfg, const std::string& key);

StrategySpec strategy_spec(const RunConfig& cfg, StrategyTag tag);
std::vector<StrategySpec> strategy_list(const RunConfig& cfg);

DistillConfig distill_config(const RunConfig& cfg);
RealTrainingSettings real_training(const RunConfig& cfg);
BootstrapSettings bootstrap_settings(const RunConfig& cfg);
/// 1 under strict_serial, otherwise the jobs key.
int effective_jobs(const RunConfig& cfg);

/// File-system friendly form of a label ("2-16-2:relu" -> "2-16-2_relu").
std::string sanitize(const std::string& label);

}  // namespace tabdistill::cli
