#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "strata/image.hpp"

namespace strata {

/// Number of discrete values per semantic factor of the synthetic scenes.
///
/// coarse selects a position/scale preset, medium a shape, fine a hue.
struct FactorSpec {
    int coarse_count = 3;
    int medium_count = 4;
    int fine_count = 5;
    int image_size = 32;

    static constexpr int kMaxShapes = 6;

    void validate() const;
    int joint_count() const { return coarse_count * medium_count * fine_count; }

    nlohmann::json to_json() const;
    static FactorSpec from_json(const nlohmann::json& j);
    bool operator==(const FactorSpec&) const = default;
};

struct FactorLabels {
    int coarse = 0;
    int medium = 0;
    int fine = 0;
    std::uint64_t jitter_seed = 0;

    bool operator==(const FactorLabels&) const = default;
};

/// Index of the (coarse, medium, fine) combination in [0, joint_count).
int joint_label(const FactorSpec& spec, const FactorLabels& labels);

/// Palette hue in [0,1) for a fine index, before jitter.
double palette_hue(const FactorSpec& spec, int fine);

/// Background color shared by every scene.
inline constexpr float kBackground[3] = {0.12F, 0.12F, 0.14F};

/// Deterministic scene rendering; throws std::out_of_range for bad indices.
Image render_scene(const FactorSpec& spec, const FactorLabels& labels);

/// Fraction of each pixel covered by the object (same H×W layout as images).
std::vector<float> object_coverage(const FactorSpec& spec, const FactorLabels& labels);

std::vector<FactorLabels> sample_labels(const FactorSpec& spec, int n, std::uint64_t seed);

struct Dataset {
    FactorSpec spec;
    std::vector<Image> images;
    std::vector<FactorLabels> labels;
};

Dataset generate_dataset(const FactorSpec& spec, int n, std::uint64_t seed);

/// Writes `images/NNNNNN.png`, `labels.csv` and `spec.json` under `dir`.
void save_dataset(const Dataset& data, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

/// Joint-factor class indices as an int64 tensor.
torch::Tensor joint_label_tensor(const FactorSpec& spec, const std::vector<FactorLabels>& labels);

} // namespace strata
