#pragma once

#include <filesystem>
#include <functional>
#include <string>

#include <json.hpp>

#include "strata/config.hpp"
#include "strata/features.hpp"
#include "strata/truncation.hpp"

namespace strata {

using LogFn = std::function<void(const std::string&)>;

/// Trained artefacts of a workspace, loaded read-only.
struct Workspace {
    FrozenGenerator generator;
    LevelPartition partition;
    LevelModels models;
    ClusterCenters centers;

    /// Loads pretrain/generator, train-levels/<level> and centers/centers.json.
    static Workspace load(const RunConfig& config);
};

FrozenGenerator load_generator(const RunConfig& config);
LevelModels load_levels(const RunConfig& config);
FeatureExtractor load_extractor(const RunConfig& config);

/// Provenance record: command, resolved config, seeds and checkpoint hashes.
void write_run_record(const std::filesystem::path& dir, const std::string& command, const RunConfig& config,
                      const nlohmann::json& seeds, const nlohmann::json& hashes,
                      const nlohmann::json& extra = nlohmann::json::object());

void run_synth_data(const RunConfig& config, const LogFn& log);
void run_pretrain(const RunConfig& config, const LogFn& log);
void run_train_levels(const RunConfig& config, const LogFn& log);
void run_centers(const RunConfig& config, const LogFn& log);
void run_truncate(const RunConfig& config, const LogFn& log);
void run_controlled_grid(const RunConfig& config, const LogFn& log);
void run_sweep(const RunConfig& config, const LogFn& log);
void run_gmm_baseline(const RunConfig& config, const LogFn& log);
void run_embed(const RunConfig& config, const LogFn& log);
void run_mean_vs_samples(const RunConfig& config, const LogFn& log);

} // namespace strata
