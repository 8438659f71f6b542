#include "cli/run_config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <limits>
#include <cstdlib>

#include "tabdistill/error.hpp"

extern char** environ;

namespace tabdistill::cli {

RunConfig RunConfig::defaults() {
  RunConfig c;
  Json& v = c.values_;
  v["format_version"] = kConfigFormatVersion;
  v["seed"] = std::uint64_t{0};
  v["out"] = "out";
  v["jobs"] = 1;
  v["strict_serial"] = false;

  v["datagen.n_total"] = 1500;
  v["datagen.noise_std"] = 0.15;
  v["datagen.train_fraction"] = 2.0 / 3.0;
  v["datagen.standardize"] = true;

  v["model.hidden_width"] = 16;
  v["model.activation"] = "relu";

  v["distill.train"] = "";
  v["distill.name"] = "";
  v["distill.inner_models"] = 3;
  v["distill.archs"] = "2layer";
  v["distill.steps_per_epoch"] = 40;
  v["distill.inner_epochs"] = 5;
  v["distill.outer_epochs"] = 50;
  v["distill.real_batch_size"] = 64;
  v["distill.synthetic_batch_size"] = 8;
  v["distill.lr_init"] = 0.01;
  v["distill.min_lr"] = 1e-6;
  v["distill.adam.step"] = 0.01;
  v["distill.adam.beta1"] = 0.9;
  v["distill.adam.beta2"] = 0.999;
  v["distill.adam.epsilon"] = 1e-8;
  v["distill.init.mean"] = 0.0;
  v["distill.init.stddev"] = 1.0;

  v["strategies"] = "raw";
  v["strategy.s1.total_epochs"] = 50;
  v["strategy.s1.base_lr"] = 0.01;
  v["strategy.s1.warm_epochs"] = 10;
  v["strategy.s1.growth"] = 1.1;
  v["strategy.s1.decay"] = 0.95;
  v["strategy.s2.repetitions"] = 10;
  v["strategy.s2.decay"] = 0.98;
  v["strategy.s3.repetitions"] = 45;
  v["strategy.s3.decay"] = 0.98;

  v["schedule.inputs"] = "";

  v["eval.sources"] = "";
  v["eval.train"] = "";
  v["eval.test"] = "";
  v["eval.archs"] = "1layer,2layer,4layer";
  v["eval.restarts"] = 10;
  v["eval.original"] = true;
  v["eval.original_restarts"] = 25;
  v["eval.real.epochs"] = 500;
  v["eval.real.lr"] = 0.05;
  v["eval.real.batch_size"] = 64;
  v["eval.bootstrap.level"] = 0.95;
  v["eval.bootstrap.resamples"] = 10000;
  v["eval.grid_resolution"] = 200;
  v["eval.grid_margin"] = 0.5;

  v["train.source"] = "original";

  v["sweep.inner_epochs"] = "";
  v["sweep.inner_steps"] = "";
  v["sweep.inner_models"] = "";
  return c;
}

namespace {

enum class Kind { boolean, integer, unsigned_integer, real, text };

Kind kind_of(const Json& v) {
  if (v.is_boolean()) return Kind::boolean;
  if (v.is_number_float()) return Kind::real;
  if (v.is_number_integer()) return v.is_number_unsigned() ? Kind::unsigned_integer : Kind::integer;
  return Kind::text;
}

std::string describe(Kind k) {
  switch (k) {
    case Kind::boolean: return "a boolean";
    case Kind::integer: return "an integer";
    case Kind::unsigned_integer: return "a non-negative integer";
    case Kind::real: return "a number";
    case Kind::text: return "a string";
  }
  return "a value";
}

// Coerces v to the type of the default, or returns nullopt.
std::optional<Json> coerce(const Json& v, Kind k) {
  switch (k) {
    case Kind::boolean:
      if (v.is_boolean()) return Json(v.get<bool>());
      break;
    case Kind::integer:
      if (v.is_number_integer()) {
        const auto x = v.get<std::int64_t>();
        if (x >= std::numeric_limits<int>::min() && x <= std::numeric_limits<int>::max()) return Json(static_cast<int>(x));
      }
      break;
    case Kind::unsigned_integer:
      if (v.is_number_unsigned()) return Json(v.get<std::uint64_t>());
      if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return Json(v.get<std::uint64_t>());
      break;
    case Kind::real:
      if (v.is_number()) return Json(v.get<double>());
      break;
    case Kind::text:
      if (v.is_string()) return Json(v.get<std::string>());
      break;
  }
  return std::nullopt;
}

std::optional<Json> parse_text(const std::string& text, Kind k) {
  switch (k) {
    case Kind::boolean:
      if (text == "true" || text == "1" || text == "yes" || text == "on") return Json(true);
      if (text == "false" || text == "0" || text == "no" || text == "off") return Json(false);
      return std::nullopt;
    case Kind::integer: {
      int x = 0;
      const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), x);
      if (ec != std::errc() || p != text.data() + text.size() || text.empty()) return std::nullopt;
      return Json(x);
    }
    case Kind::unsigned_integer: {
      std::uint64_t x = 0;
      const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), x);
      if (ec != std::errc() || p != text.data() + text.size() || text.empty()) return std::nullopt;
      return Json(x);
    }
    case Kind::real: {
      char* end = nullptr;
      const double x = std::strtod(text.c_str(), &end);
      if (text.empty() || end != text.c_str() + text.size() || !std::isfinite(x)) return std::nullopt;
      return Json(x);
    }
    case Kind::text: return Json(text);
  }
  return std::nullopt;
}

const RunConfig& default_config() {
  static const RunConfig d = RunConfig::defaults();
  return d;
}

Kind key_kind(const std::string& key, const std::string& origin) {
  const Json& d = default_config().values();
  if (!d.contains(key)) throw ValidationError(origin + ": unknown config key '" + key + "'");
  return kind_of(d.at(key));
}

}  // namespace

void RunConfig::merge(const Json& flat, const std::string& origin) {
  if (!flat.is_object()) throw ValidationError(origin + ": config must be a JSON object with flat dotted keys");
  Json next = values_;
  for (const auto& [key, value] : flat.items()) {
    const Kind k = key_kind(key, origin);
    auto v = coerce(value, k);
    if (!v) throw ValidationError(origin + ": key '" + key + "' must be " + describe(k));
    next[key] = *v;
  }
  if (next.at("format_version").get<int>() != kConfigFormatVersion) {
    throw ValidationError(origin + ": unsupported config format_version");
  }
  values_ = std::move(next);
}

void RunConfig::set(const std::string& key, const std::string& text, const std::string& origin) {
  const Kind k = key_kind(key, origin);
  auto v = parse_text(text, k);
  if (!v) throw ValidationError(origin + ": value '" + text + "' for '" + key + "' is not " + describe(k));
  values_[key] = *v;
}

std::string RunConfig::env_name(const std::string& key) {
  std::string out = kEnvPrefix;
  for (char c : key) out += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

void RunConfig::merge_env(const std::map<std::string, std::string>& env) {
  for (const auto& [key, value] : default_config().values().items()) {
    const auto it = env.find(env_name(key));
    if (it != env.end()) set(key, it->second, "environment " + it->first);
  }
}

const Json& RunConfig::at(const std::string& key) const {
  if (!values_.contains(key)) throw ValidationError("unknown config key '" + key + "'");
  return values_.at(key);
}

std::vector<std::string> RunConfig::list(const std::string& key) const {
  std::vector<std::string> out;
  const std::string text = str(key);
  std::size_t start = 0;
  while (start <= text.size() && !text.empty()) {
    const std::size_t comma = std::min(text.find(',', start), text.size());
    std::string item = text.substr(start, comma - start);
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (item.empty()) throw ValidationError("empty item in list '" + key + "'");
    out.push_back(item);
    start = comma + 1;
  }
  return out;
}

std::map<std::string, std::string> current_environment() {
  std::map<std::string, std::string> env;
  for (char** e = environ; e != nullptr && *e != nullptr; ++e) {
    const std::string entry = *e;
    if (entry.rfind(kEnvPrefix, 0) != 0) continue;
    const auto eq = entry.find('=');
    if (eq == std::string::npos) continue;
    env[entry.substr(0, eq)] = entry.substr(eq + 1);
  }
  return env;
}

RunConfig resolve_config(const std::optional<std::string>& config_file, const std::map<std::string, std::string>& env,
                         const std::vector<std::pair<std::string, std::string>>& overrides) {
  RunConfig cfg = RunConfig::defaults();
  if (config_file) cfg.merge(load_json(*config_file), *config_file);
  cfg.merge_env(env);
  for (const auto& [key, text] : overrides) cfg.set(key, text, "flag for " + key);
  return cfg;
}

std::vector<ArchSpec> parse_arch_list(const std::vector<std::string>& tokens, int hidden_width, Activation act) {
  std::vector<ArchSpec> out;
  for (const auto& t : tokens) {
    if (t == "1layer" || t == "2layer" || t == "4layer") {
      out.push_back(ArchSpec::preset(t, hidden_width, act));
    } else {
      out.push_back(ArchSpec::parse(t));
    }
  }
  if (out.empty()) throw ValidationError("architecture list is empty");
  return out;
}

std::vector<ArchSpec> arch_list(const RunConfig& cfg, const std::string& key) {
  return parse_arch_list(cfg.list(key), cfg.integer("model.hidden_width"), parse_activation(cfg.str("model.activation")));
}

StrategySpec strategy_spec(const RunConfig& cfg, StrategyTag tag) {
  StrategySpec s;
  s.tag = tag;
  s.s1_total_epochs = cfg.integer("strategy.s1.total_epochs");
  s.s1_base_lr = cfg.real("strategy.s1.base_lr");
  s.s1_warm_epochs = cfg.integer("strategy.s1.warm_epochs");
  s.s1_growth = cfg.real("strategy.s1.growth");
  s.s1_decay = cfg.real("strategy.s1.decay");
  s.s2_repetitions = cfg.integer("strategy.s2.repetitions");
  s.s2_decay = cfg.real("strategy.s2.decay");
  s.s3_repetitions = cfg.integer("strategy.s3.repetitions");
  s.s3_decay = cfg.real("strategy.s3.decay");
  return s;
}

std::vector<StrategySpec> strategy_list(const RunConfig& cfg) {
  std::vector<StrategySpec> out;
  for (const auto& t : cfg.list("strategies")) out.push_back(strategy_spec(cfg, parse_strategy_tag(t)));
  if (out.empty()) throw ValidationError("at least one strategy is required");
  return out;
}

int effective_jobs(const RunConfig& cfg) {
  if (cfg.flag("strict_serial")) return 1;
  const int jobs = cfg.integer("jobs");
  if (jobs < 1) throw ValidationError("jobs must be >= 1");
  return jobs;
}

DistillConfig distill_config(const RunConfig& cfg) {
  DistillConfig c;
  c.inner_models = cfg.integer("distill.inner_models");
  c.architectures = arch_list(cfg, "distill.archs");
  c.steps_per_epoch = cfg.integer("distill.steps_per_epoch");
  c.inner_epochs = cfg.integer("distill.inner_epochs");
  c.outer_epochs = cfg.integer("distill.outer_epochs");
  c.real_batch_size = cfg.integer("distill.real_batch_size");
  c.synthetic_batch_size = cfg.integer("distill.synthetic_batch_size");
  c.lr_init = cfg.real("distill.lr_init");
  c.min_lr = cfg.real("distill.min_lr");
  c.outer_optimizer.step = cfg.real("distill.adam.step");
  c.outer_optimizer.beta1 = cfg.real("distill.adam.beta1");
  c.outer_optimizer.beta2 = cfg.real("distill.adam.beta2");
  c.outer_optimizer.epsilon = cfg.real("distill.adam.epsilon");
  c.synthetic_init.mean = cfg.real("distill.init.mean");
  c.synthetic_init.stddev = cfg.real("distill.init.stddev");
  c.seed = cfg.u64("seed");
  c.jobs = effective_jobs(cfg);
  c.validate();
  return c;
}

RealTrainingSettings real_training(const RunConfig& cfg) {
  RealTrainingSettings s;
  s.epochs = cfg.integer("eval.real.epochs");
  s.lr = cfg.real("eval.real.lr");
  s.batch_size = cfg.integer("eval.real.batch_size");
  return s;
}

BootstrapSettings bootstrap_settings(const RunConfig& cfg) {
  return {cfg.real("eval.bootstrap.level"), cfg.integer("eval.bootstrap.resamples")};
}

std::string sanitize(const std::string& label) {
  std::string out = label;
  for (char& c : out) {
    if (c == ':' || c == '/' || c == '\\' || c == ',' || c == ' ') c = '_';
  }
  return out;
}

}  // namespace tabdistill::cli
