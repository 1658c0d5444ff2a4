#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

namespace strata {

/// Shape of the style-based generator. Layer j runs at resolutions[j] with
/// channels[j] output channels and is modulated by style input j.
struct GeneratorSpec {
    int z_dim = 64;
    int w_dim = 64;
    int mapping_depth = 4;
    std::vector<int> resolutions{4, 8, 8, 16, 16, 32, 32, 32};
    std::vector<int> channels{48, 48, 48, 32, 32, 16, 16, 16};

    int num_layers() const { return static_cast<int>(resolutions.size()); }
    int image_size() const { return resolutions.back(); }
    void validate() const;

    /// Four-layer 8×8 generator for numerical tests.
    static GeneratorSpec tiny(int latent_dim = 4);

    nlohmann::json to_json() const;
    static GeneratorSpec from_json(const nlohmann::json& j);
    bool operator==(const GeneratorSpec&) const = default;
};

/// MLP z -> w with input pixel-normalisation.
class MappingNetworkImpl : public torch::nn::Module {
public:
    MappingNetworkImpl(int z_dim, int w_dim, int depth);
    torch::Tensor forward(const torch::Tensor& z);

private:
    torch::nn::ModuleList layers_;
};
TORCH_MODULE(MappingNetwork);

/// 3×3 convolution with per-sample weight modulation and demodulation.
class ModulatedConvImpl : public torch::nn::Module {
public:
    ModulatedConvImpl(int in_channels, int out_channels, int w_dim, bool upsample);
    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& w);

private:
    bool upsample_;
    torch::nn::Linear affine_{nullptr};
    torch::Tensor weight_;
    torch::Tensor bias_;
};
TORCH_MODULE(ModulatedConv);

class SynthesisNetworkImpl : public torch::nn::Module {
public:
    explicit SynthesisNetworkImpl(const GeneratorSpec& spec);

    /// styles: num_layers tensors of shape [B, w_dim]. Returns [B,3,H,W] in [0,1].
    torch::Tensor forward(const std::vector<torch::Tensor>& styles);

    /// Output of every modulated layer followed by the final image.
    std::vector<torch::Tensor> forward_layers(const std::vector<torch::Tensor>& styles);

    void reset(at::Generator& gen);

private:
    GeneratorSpec spec_;
    torch::Tensor const_input_;
    torch::nn::ModuleList layers_;
    torch::nn::Conv2d to_rgb_{nullptr};
};
TORCH_MODULE(SynthesisNetwork);

class GeneratorImpl : public torch::nn::Module {
public:
    GeneratorImpl(const GeneratorSpec& spec, std::uint64_t seed);

    MappingNetwork mapping{nullptr};
    SynthesisNetwork synthesis{nullptr};
};
TORCH_MODULE(Generator);

/// Image critic used for pretraining: stride-2 convolutions down to 4×4.
class DiscriminatorImpl : public torch::nn::Module {
public:
    DiscriminatorImpl(int image_size, std::uint64_t seed);
    torch::Tensor forward(const torch::Tensor& images);

private:
    torch::nn::Sequential body_;
    torch::nn::Linear head_{nullptr};
};
TORCH_MODULE(Discriminator);

/// Pretrained generator with immutable parameters.
///
/// Gradients still flow through map_latent/synthesize to their inputs, but
/// no parameter of the wrapped network requires grad, and the content hash
/// taken at freeze time can be re-verified at any point.
class FrozenGenerator {
public:
    FrozenGenerator(GeneratorSpec spec, Generator net);

    const GeneratorSpec& spec() const { return spec_; }
    torch::Dtype dtype() const;

    /// z: [z_dim] or [B, z_dim].
    torch::Tensor map_latent(const torch::Tensor& z) const;

    /// styles: num_layers tensors, each [w_dim] or [B, w_dim].
    torch::Tensor synthesize(const std::vector<torch::Tensor>& styles) const;
    std::vector<torch::Tensor> synthesize_layers(const std::vector<torch::Tensor>& styles) const;

    /// The standard path: one w broadcast to every layer.
    torch::Tensor generate(const torch::Tensor& w) const;

    const std::string& freeze_hash() const { return hash_; }
    std::string current_hash() const;
    /// Throws FrozenError if parameters changed since freezing.
    void verify_unchanged() const;

    void save(const std::filesystem::path& dir) const;
    static FrozenGenerator load(const std::filesystem::path& dir);

    const Generator& network() const { return net_; }

private:
    std::vector<torch::Tensor> check_styles(const std::vector<torch::Tensor>& styles, bool& batched) const;

    GeneratorSpec spec_;
    Generator net_;
    std::string hash_;
};

struct PretrainConfig {
    int steps = 3000;
    int batch = 32;
    double lr = 2e-3;
    double beta1 = 0.0;
    double beta2 = 0.99;
    double r1_gamma = 1.0;
    int r1_every = 4;
    int fid_every = 500;
    int fid_patience = 3;
    int min_images = 10000;
    int log_every = 50;
    std::uint64_t seed = 1;
};

struct PretrainLossRow {
    int step;
    double d_loss;
    double g_loss;
    double r1;
};

struct FidLogRow {
    int step;
    double fid;
};

/// Computes FID of a batch of generated images against a fixed reference.
using FidProbe = std::function<double(const FrozenGenerator&)>;

/// Step-wise trainer; after freeze() every further step throws FrozenError.
class GeneratorTrainer {
public:
    GeneratorTrainer(GeneratorSpec spec, PretrainConfig config);

    PretrainLossRow step(const torch::Tensor& real_batch);
    FrozenGenerator snapshot() const;
    FrozenGenerator freeze();
    bool frozen() const { return frozen_; }
    int steps_done() const { return step_; }
    const Discriminator& discriminator() const { return disc_; }

private:
    GeneratorSpec spec_;
    PretrainConfig config_;
    Generator gen_;
    Discriminator disc_;
    torch::optim::Adam g_opt_;
    torch::optim::Adam d_opt_;
    at::Generator rng_;
    int step_ = 0;
    bool frozen_ = false;
};

struct PretrainResult {
    FrozenGenerator generator;
    Discriminator discriminator;
    std::vector<PretrainLossRow> losses;
    std::vector<FidLogRow> fid_log;
};

/// Non-saturating GAN with lazy R1 on `images` ([N,3,H,W] in [0,1]).
/// With a probe, FID is logged every fid_every steps and training aborts
/// with TrainingDiverged once it has worsened fid_patience times in a row.
PretrainResult pretrain(const GeneratorSpec& spec, const torch::Tensor& images, const PretrainConfig& config,
                        const FidProbe& probe = {}, const std::function<void(const std::string&)>& log = {});

/// True when the last `patience` FID values each worsened on their predecessor.
bool fid_diverging(const std::vector<FidLogRow>& log, int patience);

} // namespace strata
