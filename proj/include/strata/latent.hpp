#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

namespace strata {

/// Which semantic group a generator style-input layer belongs to.
enum class LayerGroup : std::uint8_t { Coarse, Medium, Fine, Passthrough };

inline constexpr std::array<LayerGroup, 3> kSemanticLevels{
    LayerGroup::Coarse, LayerGroup::Medium, LayerGroup::Fine};

std::string_view to_string(LayerGroup group);
LayerGroup parse_layer_group(std::string_view name);

/// Position of a semantic level in per-level arrays (0 = coarse).
/// Throws for Passthrough, which is not a trainable level.
std::size_t level_index(LayerGroup level);

/// Assignment of generator layers to coarse/medium/fine groups.
///
/// Coarse, medium and fine layers are contiguous blocks in that order; the
/// last layer is always the passthrough layer, fed by the original mapping.
class LevelPartition {
public:
    /// Throws std::invalid_argument when the counts leave no fine layer.
    static LevelPartition make(int num_layers, int coarse_count, int medium_count);
    static LevelPartition from_tags(std::vector<LayerGroup> tags);

    int num_layers() const { return static_cast<int>(tags_.size()); }
    LayerGroup operator[](int layer) const { return tags_.at(static_cast<std::size_t>(layer)); }
    const std::vector<LayerGroup>& tags() const { return tags_; }
    int count(LayerGroup group) const;
    std::vector<int> layers_of(LayerGroup group) const;

    nlohmann::json to_json() const;
    static LevelPartition from_json(const nlohmann::json& j);

    bool operator==(const LevelPartition&) const = default;

private:
    explicit LevelPartition(std::vector<LayerGroup> tags) : tags_(std::move(tags)) {}

    std::vector<LayerGroup> tags_;
};

/// One latent per semantic level plus the passthrough latent.
///
/// Every tensor is either a single latent [D] or a batch [B, D]; all four
/// share the same shape.
struct ExtendedLatent {
    std::array<torch::Tensor, 3> per_level;
    torch::Tensor passthrough;

    torch::Tensor& at(LayerGroup group);
    const torch::Tensor& at(LayerGroup group) const;
    int64_t dim() const { return passthrough.size(-1); }
};

ExtendedLatent broadcast(const torch::Tensor& w);

/// Per-layer style inputs: layer j receives the latent of its group.
std::vector<torch::Tensor> expand_to_layers(const ExtendedLatent& latent,
                                            const LevelPartition& partition);

} // namespace strata
