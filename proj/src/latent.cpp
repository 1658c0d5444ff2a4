#include "strata/latent.hpp"

#include <stdexcept>
#include <string>

namespace strata {

std::string_view to_string(LayerGroup group)
{
    switch (group) {
    case LayerGroup::Coarse: return "coarse";
    case LayerGroup::Medium: return "medium";
    case LayerGroup::Fine: return "fine";
    case LayerGroup::Passthrough: return "passthrough";
    }
    return "?";
}

LayerGroup parse_layer_group(std::string_view name)
{
    for (auto g : {LayerGroup::Coarse, LayerGroup::Medium, LayerGroup::Fine, LayerGroup::Passthrough}) {
        if (to_string(g) == name)
            return g;
    }
    throw std::invalid_argument("unknown layer group '" + std::string(name) + "'");
}

std::size_t level_index(LayerGroup level)
{
    if (level == LayerGroup::Passthrough)
        throw std::invalid_argument("passthrough is not a semantic level");
    return static_cast<std::size_t>(level);
}

LevelPartition LevelPartition::make(int num_layers, int coarse_count, int medium_count)
{
    if (coarse_count < 1 || medium_count < 1)
        throw std::invalid_argument("coarse and medium groups need at least one layer");
    const int fine_count = num_layers - coarse_count - medium_count - 1;
    if (fine_count < 1) {
        throw std::invalid_argument("partition of " + std::to_string(num_layers) + " layers with "
                                    + std::to_string(coarse_count) + " coarse and "
                                    + std::to_string(medium_count) + " medium leaves no fine layer");
    }
    std::vector<LayerGroup> tags;
    tags.reserve(static_cast<std::size_t>(num_layers));
    tags.insert(tags.end(), static_cast<std::size_t>(coarse_count), LayerGroup::Coarse);
    tags.insert(tags.end(), static_cast<std::size_t>(medium_count), LayerGroup::Medium);
    tags.insert(tags.end(), static_cast<std::size_t>(fine_count), LayerGroup::Fine);
    tags.push_back(LayerGroup::Passthrough);
    return LevelPartition(std::move(tags));
}

LevelPartition LevelPartition::from_tags(std::vector<LayerGroup> tags)
{
    if (tags.size() < 4 || tags.back() != LayerGroup::Passthrough)
        throw std::invalid_argument("partition must end with exactly one passthrough layer");
    // Groups must appear in non-decreasing order with each semantic level present.
    for (std::size_t j = 1; j < tags.size(); ++j) {
        if (static_cast<int>(tags[j]) < static_cast<int>(tags[j - 1]))
            throw std::invalid_argument("partition groups are not contiguous coarse/medium/fine");
    }
    LevelPartition p(std::move(tags));
    if (p.count(LayerGroup::Passthrough) != 1)
        throw std::invalid_argument("partition must contain exactly one passthrough layer");
    for (auto level : kSemanticLevels) {
        if (p.count(level) < 1)
            throw std::invalid_argument("partition has no " + std::string(to_string(level)) + " layer");
    }
    return p;
}

int LevelPartition::count(LayerGroup group) const
{
    return static_cast<int>(std::count(tags_.begin(), tags_.end(), group));
}

std::vector<int> LevelPartition::layers_of(LayerGroup group) const
{
    std::vector<int> out;
    for (int j = 0; j < num_layers(); ++j) {
        if (tags_[static_cast<std::size_t>(j)] == group)
            out.push_back(j);
    }
    return out;
}

nlohmann::json LevelPartition::to_json() const
{
    auto arr = nlohmann::json::array();
    for (auto t : tags_)
        arr.push_back(std::string(to_string(t)));
    return arr;
}

LevelPartition LevelPartition::from_json(const nlohmann::json& j)
{
    std::vector<LayerGroup> tags;
    for (const auto& t : j)
        tags.push_back(parse_layer_group(t.get<std::string>()));
    return from_tags(std::move(tags));
}

torch::Tensor& ExtendedLatent::at(LayerGroup group)
{
    return group == LayerGroup::Passthrough ? passthrough : per_level[level_index(group)];
}

const torch::Tensor& ExtendedLatent::at(LayerGroup group) const
{
    return group == LayerGroup::Passthrough ? passthrough : per_level[level_index(group)];
}

ExtendedLatent broadcast(const torch::Tensor& w)
{
    return ExtendedLatent{{w, w, w}, w};
}

std::vector<torch::Tensor> expand_to_layers(const ExtendedLatent& latent,
                                            const LevelPartition& partition)
{
    const auto shape = latent.passthrough.sizes();
    for (const auto& v : latent.per_level) {
        if (v.sizes() != shape)
            throw std::invalid_argument("extended latent components differ in shape");
    }
    std::vector<torch::Tensor> styles;
    styles.reserve(static_cast<std::size_t>(partition.num_layers()));
    for (auto tag : partition.tags())
        styles.push_back(latent.at(tag));
    return styles;
}

} // namespace strata
