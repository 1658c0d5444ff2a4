#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>

#include <torch/torch.h>

#include "strata/metrics.hpp"
#include "strata/synth.hpp"

namespace strata {

/// Convolutional classifier over the joint factor label. Its 64-d
/// penultimate activations are the metric feature space.
class FeatureNetImpl : public torch::nn::Module {
public:
    static constexpr int kFeatureDim = 64;

    FeatureNetImpl(int classes, std::uint64_t seed);

    torch::Tensor features(const torch::Tensor& images); // [B, kFeatureDim]
    torch::Tensor forward(const torch::Tensor& images);  // logits [B, classes]

private:
    torch::nn::Sequential body_;
    torch::nn::Linear embed_{nullptr};
    torch::nn::Linear head_{nullptr};
};
TORCH_MODULE(FeatureNet);

struct ExtractorConfig {
    int epochs = 4;
    int batch = 64;
    double lr = 1e-3;
    double holdout = 0.1; // fraction kept out for the accuracy gate
    std::uint64_t seed = 7;
};

class FeatureExtractor {
public:
    static constexpr double kMinAccuracy = 0.9;

    FeatureExtractor() = default;
    FeatureExtractor(FactorSpec spec, FeatureNet net, double accuracy);

    bool trained() const { return static_cast<bool>(net_); }
    const FactorSpec& spec() const { return spec_; }
    double holdout_accuracy() const { return accuracy_; }
    /// Content hash of the network; names the feature space.
    const std::string& id() const { return id_; }

    /// Throws std::logic_error when untrained.
    FeatureSet extract(const torch::Tensor& images) const;
    torch::Tensor predict_joint(const torch::Tensor& images) const;
    /// Coarse, medium and fine factors recovered from the predicted joint label.
    std::array<std::vector<int>, 3> predict_factors(const torch::Tensor& images) const;
    std::vector<int> predict_coarse(const torch::Tensor& images) const { return predict_factors(images)[0]; }

    void save(const std::filesystem::path& dir) const;
    static FeatureExtractor load(const std::filesystem::path& dir);

private:
    const FeatureNet& checked() const;

    FactorSpec spec_;
    FeatureNet net_{nullptr};
    double accuracy_ = 0.0;
    std::string id_;
};

/// Trains on the joint label with a fixed hold-out split.
FeatureExtractor train_extractor(const Dataset& data, const ExtractorConfig& config,
                                 const std::function<void(const std::string&)>& log = {});

/// Fraction of rows whose predicted joint label matches.
double extractor_accuracy(const FeatureExtractor& extractor, const torch::Tensor& images,
                          const torch::Tensor& joint_labels);

} // namespace strata
