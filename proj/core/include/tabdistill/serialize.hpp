#pragma once

// File formats: distilled-data JSON, dataset CSV + provenance sidecar, and
// the flat CSV exports used for plotting.

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tabdistill/datagen.hpp"
#include "tabdistill/distill.hpp"
#include "tabdistill/evalharness.hpp"
#include "tabdistill/schedules.hpp"

namespace tabdistill {

using Json = nlohmann::json;
namespace fs = std::filesystem;

/// Shortest decimal form that parses back to the same double ("%.17g" when
/// nothing shorter round-trips).
std::string format_double(double x);

Json to_json(const DistillConfig& config);
DistillConfig distill_config_from_json(const Json& j);
Json to_json(const DistillCounters& counters);
DistillCounters counters_from_json(const Json& j);

/// {format_version, metadata{...}, epochs:[{steps:[{lr, objects, labels}]}]}.
/// Objects repeat in every epoch (each epoch replays the same batches).
Json to_json(const SyntheticData& syn);
SyntheticData synthetic_from_json(const Json& j);

Json to_json(const Provenance& p);
Provenance provenance_from_json(const Json& j);

Json to_json(const EvalReport& report, bool with_curves = true);
Json to_json(const CrossEvalMatrix& matrix, bool with_curves = true);
Json to_json(const TrainingSchedule& sched);

/// Pretty-printed with a trailing newline; the same value always yields the
/// same bytes.
void save_json(const fs::path& path, const Json& j);
Json load_json(const fs::path& path);

void save_synthetic(const fs::path& path, const SyntheticData& syn);
SyntheticData load_synthetic(const fs::path& path);

/// Header x1..xd,label; sidecar <stem>.provenance.json next to it.
fs::path provenance_path(const fs::path& csv);
void write_dataset_csv(const fs::path& path, const Dataset& data);
/// Reads the CSV and, when present, its provenance sidecar.
Dataset read_dataset_csv(const fs::path& path, SplitTag tag = SplitTag::full);

/// epoch,step,object_index,x1,x2,label,lr
void write_synthetic_csv(const fs::path& path, const SyntheticData& syn);
/// global_step,epoch,batch_index,lr
void write_schedule_csv(const fs::path& path, const TrainingSchedule& sched);
/// data_source,strategy,arch,mean,std,ci_lo,ci_hi,restarts
void write_cross_eval_csv(const fs::path& path, const CrossEvalMatrix& matrix);
/// x1,x2,predicted,p1
void write_grid_csv(const fs::path& path, const DecisionGrid& grid);
DecisionGrid read_grid_csv(const fs::path& path);
/// restart,seed,epoch,accuracy,logloss
void write_curves_csv(const fs::path& path, const EvalReport& report);

void write_text(const fs::path& path, const std::string& text);
std::string read_text(const fs::path& path);

}  // namespace tabdistill
