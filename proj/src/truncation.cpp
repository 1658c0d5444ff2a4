#include "strata/truncation.hpp"

#include <fstream>
#include <stdexcept>

#include "strata/random.hpp"

namespace strata {

namespace {

constexpr int64_t kChunk = 512;

void check_phi(double phi)
{
    if (!(phi >= 0.0 && phi <= 1.0))
        throw std::invalid_argument("truncation strength phi must lie in [0,1]");
}

torch::Tensor contract(const torch::Tensor& w, const torch::Tensor& target, double phi)
{
    return (1.0 - phi) * w + phi * target;
}

std::vector<double> to_vector(const torch::Tensor& t)
{
    auto c = t.to(torch::kFloat64).contiguous();
    return {c.data_ptr<double>(), c.data_ptr<double>() + c.numel()};
}

} // namespace

int argmax_lowest(std::span<const double> values)
{
    if (values.empty())
        throw std::invalid_argument("argmax of an empty vector");
    int best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[static_cast<std::size_t>(best)])
            best = static_cast<int>(i);
    }
    return best;
}

ClusterAssignment BatchAssignment::row(int64_t i) const
{
    ClusterAssignment a;
    for (std::size_t l = 0; l < 3; ++l) {
        a.index[l] = static_cast<int>(index[l][i].item<int64_t>());
        a.probabilities[l] = to_vector(probabilities[l][i]);
    }
    return a;
}

BatchAssignment assign_clusters_batch(const torch::Tensor& w, const LevelModels& models, const FrozenGenerator& g,
                                      const LevelPartition& p)
{
    torch::NoGradGuard no_grad;
    const auto images = g.synthesize(expand_to_layers(broadcast(w), p));
    BatchAssignment out;
    for (std::size_t l = 0; l < 3; ++l) {
        const auto probs = models[l].classifier_probabilities(images);
        // torch::argmax does not promise lowest-index ties; resolve explicitly.
        const auto maxv = std::get<0>(probs.max(1, true));
        const auto is_max = probs.eq(maxv);
        const auto positions = torch::arange(probs.size(1), torch::kInt64).expand_as(probs);
        const auto masked = torch::where(is_max, positions, torch::full_like(positions, probs.size(1)));
        out.index[l] = std::get<0>(masked.min(1));
        out.probabilities[l] = probs;
    }
    return out;
}

ClusterAssignment assign_clusters(const torch::Tensor& w, const LevelModels& models, const FrozenGenerator& g,
                                  const LevelPartition& p)
{
    if (w.dim() != 1)
        throw std::invalid_argument("assign_clusters expects a single latent [D]");
    return assign_clusters_batch(w.unsqueeze(0), models, g, p).row(0);
}

nlohmann::json ClusterCenters::to_json() const
{
    nlohmann::json j;
    j["n"] = n;
    j["seed"] = seed;
    j["global_mean"] = to_vector(global_mean);
    auto levels_json = nlohmann::json::array();
    for (std::size_t l = 0; l < 3; ++l) {
        const auto& lc = levels[l];
        auto rows = nlohmann::json::array();
        for (int i = 0; i < lc.k; ++i)
            rows.push_back(to_vector(lc.centers[i]));
        levels_json.push_back({{"level", std::string(to_string(kSemanticLevels[l]))},
                               {"k", lc.k},
                               {"centers", rows},
                               {"counts", lc.counts},
                               {"fallback", lc.fallback}});
    }
    j["levels"] = levels_json;
    return j;
}

ClusterCenters ClusterCenters::from_json(const nlohmann::json& j)
{
    ClusterCenters c;
    c.n = j.at("n").get<int64_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.global_mean = torch::tensor(j.at("global_mean").get<std::vector<double>>(), torch::kFloat64).to(torch::kFloat32);
    const auto& lv = j.at("levels");
    if (lv.size() != 3)
        throw std::runtime_error("centers file must describe three levels");
    for (std::size_t l = 0; l < 3; ++l) {
        auto& lc = c.levels[l];
        lc.k = lv[l].at("k").get<int>();
        std::vector<torch::Tensor> rows;
        for (const auto& r : lv[l].at("centers"))
            rows.push_back(torch::tensor(r.get<std::vector<double>>(), torch::kFloat64).to(torch::kFloat32));
        lc.centers = torch::stack(rows);
        lc.counts = lv[l].at("counts").get<std::vector<int64_t>>();
        lc.fallback = lv[l].at("fallback").get<std::vector<bool>>();
    }
    return c;
}

void ClusterCenters::save(const std::filesystem::path& file) const
{
    std::ofstream(file) << to_json().dump(2) << '\n';
}

ClusterCenters ClusterCenters::load(const std::filesystem::path& file)
{
    std::ifstream f(file);
    if (!f)
        throw std::runtime_error("cannot read " + file.string());
    return from_json(nlohmann::json::parse(f));
}

int64_t min_cluster_count(int64_t n)
{
    return std::max<int64_t>(10, n / 1000);
}

torch::Tensor sample_w(const FrozenGenerator& g, int64_t n, std::uint64_t seed)
{
    torch::NoGradGuard no_grad;
    auto gen = make_generator(seed);
    std::vector<torch::Tensor> parts;
    for (int64_t done = 0; done < n; done += kChunk) {
        const auto m = std::min(kChunk, n - done);
        parts.push_back(g.map_latent(at::randn({m, g.spec().z_dim}, gen, torch::TensorOptions().dtype(g.dtype()))));
    }
    return torch::cat(parts);
}

torch::Tensor latent_from_seed(const FrozenGenerator& g, std::uint64_t seed)
{
    torch::NoGradGuard no_grad;
    return g.map_latent(seeded_normal({g.spec().z_dim}, seed, g.dtype()));
}

torch::Tensor global_mean_w(const FrozenGenerator& g, int64_t n, std::uint64_t seed)
{
    return sample_w(g, n, seed).to(torch::kFloat64).mean(0).to(g.dtype());
}

ClusterCenters centers_from_assignments(const torch::Tensor& w, const std::array<torch::Tensor, 3>& index,
                                        const std::array<int, 3>& k)
{
    const auto n = w.size(0);
    const auto wd = w.to(torch::kFloat64);
    ClusterCenters c;
    c.n = n;
    c.global_mean = wd.mean(0);
    const auto threshold = min_cluster_count(n);
    for (std::size_t l = 0; l < 3; ++l) {
        auto& lc = c.levels[l];
        lc.k = k[l];
        lc.centers = torch::empty({k[l], w.size(1)}, torch::kFloat64);
        for (int i = 0; i < k[l]; ++i) {
            const auto members = index[l].eq(i);
            const auto count = members.sum().item<int64_t>();
            lc.counts.push_back(count);
            const bool small = count < threshold;
            lc.fallback.push_back(small);
            lc.centers[i] = small ? c.global_mean : wd.index({members}).mean(0);
        }
        lc.centers = lc.centers.to(w.scalar_type());
    }
    c.global_mean = c.global_mean.to(w.scalar_type());
    return c;
}

ClusterCenters compute_centers(const LevelModels& models, const FrozenGenerator& g, const LevelPartition& p,
                               int64_t n, std::uint64_t seed)
{
    const auto w = sample_w(g, n, seed);
    std::array<std::vector<torch::Tensor>, 3> parts;
    for (int64_t done = 0; done < n; done += kChunk) {
        const auto m = std::min(kChunk, n - done);
        const auto a = assign_clusters_batch(w.narrow(0, done, m), models, g, p);
        for (std::size_t l = 0; l < 3; ++l)
            parts[l].push_back(a.index[l]);
    }
    std::array<torch::Tensor, 3> index;
    for (std::size_t l = 0; l < 3; ++l)
        index[l] = torch::cat(parts[l]);
    auto centers = centers_from_assignments(w, index, cluster_counts(models));
    centers.seed = seed;
    return centers;
}

ExtendedLatent truncate_multilevel(const torch::Tensor& w, const ClusterCenters& centers,
                                   const ClusterAssignment& assignment, double phi)
{
    check_phi(phi);
    if (w.dim() != 1)
        throw std::invalid_argument("expected a single latent [D]");
    ExtendedLatent out;
    for (std::size_t l = 0; l < 3; ++l) {
        const auto& lc = centers.levels[l];
        const int i = assignment.index[l];
        if (i < 0 || i >= lc.k)
            throw std::out_of_range("cluster assignment outside [0,k)");
        out.per_level[l] = contract(w, lc.centers[i].to(w.scalar_type()), phi);
    }
    out.passthrough = w;
    return out;
}

ExtendedLatent truncate_multilevel(const torch::Tensor& w, const ClusterCenters& centers,
                                   const BatchAssignment& assignment, double phi)
{
    check_phi(phi);
    ExtendedLatent out;
    for (std::size_t l = 0; l < 3; ++l) {
        const auto target = centers.levels[l].centers.to(w.scalar_type()).index_select(0, assignment.index[l]);
        out.per_level[l] = contract(w, target, phi);
    }
    out.passthrough = w;
    return out;
}

ExtendedLatent truncate_global(const torch::Tensor& w, const torch::Tensor& global_mean, double phi)
{
    check_phi(phi);
    const auto contracted = contract(w, global_mean.to(w.scalar_type()), phi);
    return ExtendedLatent{{contracted, contracted, contracted}, w};
}

ControlledSample controlled_generate(const LevelModels& models, const FrozenGenerator& g, const LevelPartition& p,
                                     const std::array<int, 3>& choice, std::uint64_t seed)
{
    torch::NoGradGuard no_grad;
    ExtendedLatent latent;
    for (std::size_t l = 0; l < 3; ++l) {
        if (choice[l] < 0 || choice[l] >= models[l].k)
            throw std::out_of_range("cluster choice for " + std::string(to_string(kSemanticLevels[l]))
                                    + " outside [0," + std::to_string(models[l].k) + ")");
        const auto noise = seeded_normal({1, g.spec().z_dim}, derive_seed(seed, l), g.dtype());
        const auto idx = torch::tensor({static_cast<int64_t>(choice[l])}, torch::kInt64);
        latent.per_level[l] = models[l].generate(idx, noise).squeeze(0);
    }
    latent.passthrough = g.map_latent(seeded_normal({g.spec().z_dim}, derive_seed(seed, 3), g.dtype()));
    return {g.synthesize(expand_to_layers(latent, p)), latent};
}

std::vector<std::array<int, 3>> enumerate_combinations(const std::array<int, 3>& k)
{
    std::vector<std::array<int, 3>> out;
    for (int a = 0; a < k[0]; ++a)
        for (int b = 0; b < k[1]; ++b)
            for (int c = 0; c < k[2]; ++c)
                out.push_back({a, b, c});
    return out;
}

std::array<int, 3> cluster_counts(const LevelModels& models)
{
    return {models[0].k, models[1].k, models[2].k};
}

} // namespace strata
