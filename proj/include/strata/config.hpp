#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "strata/generator.hpp"
#include "strata/latent.hpp"
#include "strata/level.hpp"
#include "strata/synth.hpp"

namespace strata {

/// Every tunable of the pipeline. Each field is one config-file key and one
/// `--key` flag of the same name; see config_keys() for the schema.
struct RunConfig {
    std::string workspace = "run";
    std::string out;

    // synthetic data
    int data_n = 10000;
    std::uint64_t data_seed = 1;
    int coarse_values = 3;
    int medium_values = 4;
    int fine_values = 5;
    int image_size = 32;

    // generator and partition
    std::string generator = "toy";
    int z_dim = 64;
    int w_dim = 64;
    int mapping_depth = 4;
    int layers_coarse = 3;
    int layers_medium = 2;

    // pretraining
    int pretrain_steps = 3000;
    int pretrain_batch = 32;
    double pretrain_lr = 2e-3;
    double r1_gamma = 1.0;
    int r1_every = 4;
    int fid_every = 500;
    int fid_patience = 3;
    int fid_n = 512;
    int min_images = 10000;
    std::uint64_t pretrain_seed = 1;
    int extractor_epochs = 4;
    std::uint64_t extractor_seed = 7;

    // level training
    std::string level = "all";
    int k_coarse = 3;
    int k_medium = 4;
    int k_fine = 5;
    int iters = 10000;
    int batch = 4;
    int n_critic = 5;
    double lambda_gp = 10.0;
    double lr = 1e-4;
    int critic_hidden = 128;
    bool init_from_mapping = true;
    int consistency_samples = 2048;
    std::uint64_t level_seed = 0;

    // centers, truncation and evaluation
    int centers_n = 10000;
    std::uint64_t centers_seed = 3;
    std::uint64_t seed = 7;
    double phi = 0.7;
    int n = 10000;
    int phis = 11;
    int knn_k = 3;
    std::uint64_t sweep_seed = 11;
    int gmm_k = 8;
    int gmm_n = 10000;
    int gmm_iters = 100;
    double gmm_tol = 1e-6;
    std::uint64_t gmm_seed = 5;
    int embed_n = 2000;
    std::uint64_t embed_seed = 9;
    int samples = 8;

    // service
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string static_dir;

    /// Throws ConfigError on inconsistent values.
    void validate() const;

    FactorSpec factor_spec() const;
    GeneratorSpec generator_spec() const;
    LevelPartition partition() const;
    std::array<int, 3> cluster_counts() const;
    PretrainConfig pretrain_config() const;
    LevelConfig level_config() const;

    std::filesystem::path stage_dir(const std::string& stage) const;
    /// `out` when set, otherwise workspace/<command>.
    std::filesystem::path output_dir(const std::string& command) const;

    nlohmann::json to_json() const;
};

using ConfigField = std::variant<int RunConfig::*, double RunConfig::*, bool RunConfig::*, std::string RunConfig::*,
                                 std::uint64_t RunConfig::*>;

struct ConfigKey {
    const char* name;
    ConfigField field;
    const char* help;
};

const std::vector<ConfigKey>& config_keys();

/// Applies `j` on top of `config`; unknown keys and ill-typed values throw ConfigError.
void apply_json(RunConfig& config, const nlohmann::json& j);
/// Parses a flag value by the key's type; throws ConfigError.
void apply_flag(RunConfig& config, const std::string& key, const std::string& value);
RunConfig load_config_file(const std::filesystem::path& file);

} // namespace strata
