#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "strata/generator.hpp"
#include "strata/latent.hpp"
#include "strata/level.hpp"

namespace strata {

/// Trained models for coarse, medium and fine, in that order.
using LevelModels = std::array<LevelModel, 3>;

/// Index of the largest entry; ties resolve to the lowest index.
int argmax_lowest(std::span<const double> values);

struct ClusterAssignment {
    std::array<int, 3> index{};
    std::array<std::vector<double>, 3> probabilities;
};

/// Batched form: per level an int64 index tensor [B] and probabilities [B,k].
struct BatchAssignment {
    std::array<torch::Tensor, 3> index;
    std::array<torch::Tensor, 3> probabilities;

    ClusterAssignment row(int64_t i) const;
};

/// Classifies the image generated from broadcast(w) once per level.
ClusterAssignment assign_clusters(const torch::Tensor& w, const LevelModels& models, const FrozenGenerator& g,
                                  const LevelPartition& p);
BatchAssignment assign_clusters_batch(const torch::Tensor& w, const LevelModels& models, const FrozenGenerator& g,
                                      const LevelPartition& p);

struct LevelCenters {
    int k = 0;
    torch::Tensor centers;          // [k, D]
    std::vector<int64_t> counts;
    std::vector<bool> fallback;     // center replaced by the global mean
};

struct ClusterCenters {
    std::array<LevelCenters, 3> levels;
    torch::Tensor global_mean;      // [D]
    int64_t n = 0;
    std::uint64_t seed = 0;

    const LevelCenters& at(LayerGroup level) const { return levels[level_index(level)]; }

    nlohmann::json to_json() const;
    static ClusterCenters from_json(const nlohmann::json& j);
    void save(const std::filesystem::path& file) const;
    static ClusterCenters load(const std::filesystem::path& file);
};

/// Clusters with fewer members than this use the global mean.
int64_t min_cluster_count(int64_t n);

/// Draws n latents w = map_latent(z), z ~ N(0, I) from `seed`, in a fixed
/// chunking so every consumer sees the same sample stream.
torch::Tensor sample_w(const FrozenGenerator& g, int64_t n, std::uint64_t seed);

/// w = map_latent(z) for the single z ~ N(0, I) drawn from `seed`.
torch::Tensor latent_from_seed(const FrozenGenerator& g, std::uint64_t seed);

/// Mean of sample_w(g, n, seed).
torch::Tensor global_mean_w(const FrozenGenerator& g, int64_t n, std::uint64_t seed);

/// Per-level arithmetic means of the rows of `w` grouped by `index`.
ClusterCenters centers_from_assignments(const torch::Tensor& w, const std::array<torch::Tensor, 3>& index,
                                        const std::array<int, 3>& k);

ClusterCenters compute_centers(const LevelModels& models, const FrozenGenerator& g, const LevelPartition& p,
                               int64_t n, std::uint64_t seed);

/// Per level: (1 − φ)·w + φ·center of the assigned cluster. The passthrough
/// stays w. Throws std::invalid_argument for φ outside [0,1].
ExtendedLatent truncate_multilevel(const torch::Tensor& w, const ClusterCenters& centers,
                                   const ClusterAssignment& assignment, double phi);
ExtendedLatent truncate_multilevel(const torch::Tensor& w, const ClusterCenters& centers,
                                   const BatchAssignment& assignment, double phi);

/// (1 − φ)·w + φ·w̄ at every semantic level; the passthrough stays w.
ExtendedLatent truncate_global(const torch::Tensor& w, const torch::Tensor& global_mean, double phi);

struct ControlledSample {
    torch::Tensor image;
    ExtendedLatent latent;
};

/// Level l receives f^l(μ_c + σ_c ⊙ noise_l) for its chosen cluster c;
/// noise_l and the passthrough latent depend only on the seed.
ControlledSample controlled_generate(const LevelModels& models, const FrozenGenerator& g, const LevelPartition& p,
                                     const std::array<int, 3>& choice, std::uint64_t seed);

/// Every (coarse, medium, fine) cluster combination, lexicographic.
std::vector<std::array<int, 3>> enumerate_combinations(const std::array<int, 3>& k);

std::array<int, 3> cluster_counts(const LevelModels& models);

} // namespace strata
