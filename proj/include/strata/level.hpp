#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "strata/generator.hpp"
#include "strata/latent.hpp"

namespace strata {

struct LevelConfig {
    int iterations = 10000;
    int batch = 4;
    int n_critic = 5;
    double lambda_gp = 10.0;
    double lr = 1e-4;
    double beta1 = 0.0;
    double beta2 = 0.9;
    int critic_hidden = 128;
    bool init_from_mapping = true;
    int consistency_samples = 2048;
    int snapshot_every = 100;
    int log_every = 500;
    std::uint64_t seed = 0;

    nlohmann::json to_json() const;
};

/// k learnable diagonal Gaussians over the level mapper's input space.
/// sigma = softplus(raw_scales), so it stays strictly positive.
class GaussianBankImpl : public torch::nn::Module {
public:
    GaussianBankImpl(int k, int dim, std::uint64_t seed);

    int k() const { return static_cast<int>(means.size(0)); }
    int dim() const { return static_cast<int>(means.size(1)); }
    torch::Tensor scales() const;

    torch::Tensor means;
    torch::Tensor raw_scales;
};
TORCH_MODULE(GaussianBank);

class LatentCriticImpl : public torch::nn::Module {
public:
    LatentCriticImpl(int w_dim, int hidden, std::uint64_t seed);
    torch::Tensor forward(const torch::Tensor& w); // [B] scores

private:
    torch::nn::Sequential net_;
};
TORCH_MODULE(LatentCritic);

/// Four stride-2 convolutions, global average pooling and a linear head.
class LevelClassifierImpl : public torch::nn::Module {
public:
    LevelClassifierImpl(int k, std::uint64_t seed);
    torch::Tensor forward(const torch::Tensor& images); // logits [B,k]

private:
    torch::nn::Sequential features_;
    torch::nn::Linear head_{nullptr};
};
TORCH_MODULE(LevelClassifier);

/// All trainable pieces of one semantic level, registered under one module
/// so they checkpoint and hash together.
class LevelNetImpl : public torch::nn::Module {
public:
    LevelNetImpl(int k, const GeneratorSpec& gspec, int critic_hidden, std::uint64_t seed);

    GaussianBank bank{nullptr};
    MappingNetwork mapper{nullptr};
    LatentCritic critic{nullptr};
    LevelClassifier classifier{nullptr};
};
TORCH_MODULE(LevelNet);

struct LevelModel {
    LayerGroup level = LayerGroup::Coarse;
    int k = 0;
    LevelNet net{nullptr};
    nlohmann::json info = nlohmann::json::object(); // config and final metrics

    static LevelModel create(LayerGroup level, int k, const GeneratorSpec& gspec, int critic_hidden,
                             std::uint64_t seed);

    /// w^l = f^l(mixture sample) for Gaussian `indices` [B] and noise [B, z_dim].
    torch::Tensor generate(const torch::Tensor& indices, const torch::Tensor& noise) const;
    torch::Tensor critic_scores(const torch::Tensor& w) const;
    torch::Tensor classifier_logits(const torch::Tensor& images) const;
    torch::Tensor classifier_probabilities(const torch::Tensor& images) const;

    std::vector<torch::Tensor> joint_parameters() const;
    std::string hash() const;

    void save(const std::filesystem::path& dir) const;
    static LevelModel load(const std::filesystem::path& dir);
};

/// Uniformly drawn one-hot selector e_index over k Gaussians.
struct OneHotSelector {
    int index = 0;
    int k = 0;

    torch::Tensor vector(torch::Dtype dtype = torch::kFloat32) const;
};

std::vector<OneHotSelector> sample_selectors(int k, int count, std::uint64_t seed);
torch::Tensor selector_indices(const std::vector<OneHotSelector>& selectors);

/// Σ_i π_i (μ_i + σ_i ⊙ noise): reparameterised and differentiable in μ, σ.
/// `selectors` is a one-hot matrix [B,k]; noise is [B, dim].
torch::Tensor sample_mixture(const GaussianBank& bank, const torch::Tensor& selectors, const torch::Tensor& noise);
torch::Tensor sample_mixture(const GaussianBank& bank, const OneHotSelector& selector, const torch::Tensor& noise);

using CriticFn = std::function<torch::Tensor(const torch::Tensor&)>;

/// E[(||∇D(t·w_real + (1−t)·w_fake)||₂ − 1)²], one uniform t per pair drawn
/// from `seed`. Built with create_graph so it is differentiable in the
/// critic parameters.
torch::Tensor gradient_penalty(const CriticFn& critic, const torch::Tensor& w_real, const torch::Tensor& w_fake,
                               std::uint64_t seed);

struct CriticLoss {
    torch::Tensor total;
    double wasserstein = 0.0; // E[D(fake)] − E[D(real)]
    double penalty = 0.0;
};

/// −E[D(real)] + E[D(fake)] + λ_gp · gradient_penalty.
CriticLoss critic_loss(const CriticFn& critic, const torch::Tensor& w_real, const torch::Tensor& w_fake,
                       double lambda_gp, std::uint64_t seed);
CriticLoss critic_loss(const LevelModel& model, const torch::Tensor& w_real, const torch::Tensor& w_fake,
                       double lambda_gp, std::uint64_t seed);

struct MixedImage {
    torch::Tensor image;
    ExtendedLatent latent;
};

/// Places `w_level` at `level` and a fresh original-mapping latent (one per
/// sample, z drawn from that sample's seed) at every other position.
MixedImage mix_and_generate(const FrozenGenerator& g, const LevelPartition& p, LayerGroup level,
                            const torch::Tensor& w_level, const std::vector<std::uint64_t>& seeds);

struct JointBatch {
    torch::Tensor indices;              // [B] int64
    torch::Tensor noise;                // [B, z_dim]
    std::vector<std::uint64_t> seeds;   // one per sample, for the other levels
};

JointBatch sample_joint_batch(int k, int batch, int z_dim, torch::Dtype dtype, std::uint64_t seed);

struct JointLoss {
    torch::Tensor total;
    torch::Tensor adversarial; // −E[D(w^l)]
    torch::Tensor ce;          // E[−log softmax(C(G_mix(w^l)))[index]]
};

/// Objective of the mapper, bank and classifier. Critic parameters only
/// enter through D(w^l) and are not updated by the joint step.
JointLoss generator_classifier_loss(const LevelModel& model, const FrozenGenerator& g, const LevelPartition& p,
                                    const JointBatch& batch);

struct LevelLogRow {
    int iteration;
    double critic_loss;
    double gen_loss;
    double ce_term;
};

struct LevelTrainResult {
    LevelModel model;
    std::vector<LevelLogRow> log;
    double self_consistency = 0.0;
};

/// Fraction of fresh mixture samples whose classifier argmax equals the
/// Gaussian that generated them.
double classifier_self_consistency(const LevelModel& model, const FrozenGenerator& g, const LevelPartition& p,
                                   int samples, std::uint64_t seed);

/// Alternates n_critic critic steps with one joint step per iteration.
/// A non-finite loss restores the last good parameters, writes them to
/// `abort_dir` when given, and throws TrainingDiverged.
LevelTrainResult train_level(const FrozenGenerator& g, const LevelPartition& p, LayerGroup level, int k,
                             const LevelConfig& config,
                             const std::function<void(const std::string&)>& log = {},
                             const std::optional<std::filesystem::path>& abort_dir = std::nullopt);

} // namespace strata
