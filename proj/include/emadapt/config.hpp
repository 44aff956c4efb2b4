#pragma once

#include <filesystem>
#include <span>

#include <nlohmann/json.hpp>

#include "emadapt/adapt.hpp"
#include "emadapt/mmd.hpp"
#include "emadapt/pretrain.hpp"
#include "emadapt/segeval.hpp"
#include "emadapt/segmodel.hpp"
#include "emadapt/synthdomains.hpp"
#include "emadapt/uncertainty.hpp"

// JSON forms of the config structs. Readers start from the defaults, accept a
// subset of keys and raise InvalidConfig on unknown keys or wrong types.
namespace emadapt {

using Json = nlohmann::ordered_json;

void to_json(Json& j, const ModelConfig& c);
void from_json(const Json& j, ModelConfig& c);
void to_json(Json& j, const TrainConfig& c);
void from_json(const Json& j, TrainConfig& c);
void to_json(Json& j, const UncertaintyConfig& c);
void from_json(const Json& j, UncertaintyConfig& c);
void to_json(Json& j, const KernelConfig& c);
void from_json(const Json& j, KernelConfig& c);
void to_json(Json& j, const WatershedConfig& c);
void from_json(const Json& j, WatershedConfig& c);
void to_json(Json& j, const DomainSpec& c);
void from_json(const Json& j, DomainSpec& c);
void to_json(Json& j, const AdaptConfig& c);
void from_json(const Json& j, AdaptConfig& c);
void to_json(Json& j, const GridConfig& c);
void from_json(const Json& j, GridConfig& c);
void to_json(Json& j, const BudgetPlan& p);
void to_json(Json& j, const VIResult& v);
void to_json(Json& j, const RunRecord& r);
void to_json(Json& j, const Dendrogram& d);

// Run summary: config hash, then per (target, mode, sampler, A) group the
// seeds, per-seed test VI and mean/sample std of vi_total. EmptyRun when no
// record carries a test evaluation.
Json run_manifest(const Json& config, std::span<const RunRecord> records);
// One row per record: target, method, transfer_domain, sample_size, seed, VI.
std::string run_manifest_csv(std::span<const RunRecord> records);
// Writes <path> (JSON) and the CSV mirror next to it with extension .csv.
void write_run_manifest(const Json& config, std::span<const RunRecord> records,
                        const std::filesystem::path& path);

// Parses text, mapping syntax errors to Parse.
Json parse_json(const std::string& text);
// Two-space indented dump with a trailing newline.
std::string dump_json(const Json& j);

}  // namespace emadapt
