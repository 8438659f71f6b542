#pragma once

#include <iosfwd>
#include <string>

#include "cli/run_config.hpp"

namespace tabdistill::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitNumerical = 3;
inline constexpr int kExitPartialFailure = 4;

/// Output layout under `out`:
///   data/{full,train,test}.csv        datagen
///   distill/<name>/synthetic.json     distill
///   schedule/<name>/<strategy>.csv    schedule
///   train/<cell>/report.json          train
///   eval/matrix.{json,csv}            eval
///   sweep/<axis>.csv                  sweep
///   plots/*.svg                       plot-export
/// Each directory written also receives resolved_config.json.
int cmd_datagen(const RunConfig& cfg, std::ostream& log);
int cmd_distill(const RunConfig& cfg, std::ostream& log);
int cmd_schedule(const RunConfig& cfg, std::ostream& log);
int cmd_train(const RunConfig& cfg, std::ostream& log);
int cmd_eval(const RunConfig& cfg, std::ostream& log);
int cmd_sweep(const RunConfig& cfg, std::ostream& log);
int cmd_plot_export(const RunConfig& cfg, std::ostream& log);

/// Dispatches by subcommand name and maps exceptions to exit codes.
int run_command(const std::string& name, const RunConfig& cfg, std::ostream& log, std::ostream& err);

/// Directory name used for a distillation run: distill.name, or the
/// architecture tokens joined by '+'.
std::string distill_name(const RunConfig& cfg);

}  // namespace tabdistill::cli
