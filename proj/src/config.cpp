#include "strata/config.hpp"

#include <charconv>
#include <fstream>

#include "strata/errors.hpp"

namespace strata {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

const ConfigKey& find_key(const std::string& name)
{
    for (const auto& k : config_keys())
        if (name == k.name)
            return k;
    throw ConfigError("unknown configuration key '" + name + "'");
}

void require(bool ok, const std::string& message)
{
    if (!ok)
        throw ConfigError(message);
}

} // namespace

const std::vector<ConfigKey>& config_keys()
{
    using C = RunConfig;
    static const std::vector<ConfigKey> keys{
        {"workspace", &C::workspace, "root directory holding every stage's outputs"},
        {"out", &C::out, "output directory of this command (default: <workspace>/<command>)"},
        {"data_n", &C::data_n, "number of synthetic training images"},
        {"data_seed", &C::data_seed, "seed of the synthetic dataset"},
        {"coarse_values", &C::coarse_values, "number of coarse factor values (placement presets)"},
        {"medium_values", &C::medium_values, "number of medium factor values (shapes)"},
        {"fine_values", &C::fine_values, "number of fine factor values (hues)"},
        {"image_size", &C::image_size, "image side in pixels; must match the generator"},
        {"generator", &C::generator, "generator preset: toy (32px, 8 layers) or tiny (8px, 4 layers)"},
        {"z_dim", &C::z_dim, "latent z dimension"},
        {"w_dim", &C::w_dim, "intermediate latent w dimension"},
        {"mapping_depth", &C::mapping_depth, "layers of the mapping network"},
        {"layers_coarse", &C::layers_coarse, "generator layers controlled by the coarse level"},
        {"layers_medium", &C::layers_medium, "generator layers controlled by the medium level"},
        {"pretrain_steps", &C::pretrain_steps, "generator pretraining steps"},
        {"pretrain_batch", &C::pretrain_batch, "pretraining batch size"},
        {"pretrain_lr", &C::pretrain_lr, "pretraining Adam learning rate"},
        {"r1_gamma", &C::r1_gamma, "R1 penalty weight"},
        {"r1_every", &C::r1_every, "apply the R1 penalty every this many steps"},
        {"fid_every", &C::fid_every, "log FID every this many pretraining steps (0 disables)"},
        {"fid_patience", &C::fid_patience, "abort pretraining after this many consecutive FID increases"},
        {"fid_n", &C::fid_n, "images per side for the pretraining FID probe"},
        {"min_images", &C::min_images, "minimum dataset size accepted by pretraining"},
        {"pretrain_seed", &C::pretrain_seed, "seed of generator pretraining"},
        {"extractor_epochs", &C::extractor_epochs, "feature extractor training epochs"},
        {"extractor_seed", &C::extractor_seed, "seed of feature extractor training"},
        {"level", &C::level, "level(s) to train: all, coarse, medium or fine"},
        {"k_coarse", &C::k_coarse, "clusters at the coarse level"},
        {"k_medium", &C::k_medium, "clusters at the medium level"},
        {"k_fine", &C::k_fine, "clusters at the fine level"},
        {"iters", &C::iters, "level training iterations"},
        {"batch", &C::batch, "level training batch size"},
        {"n_critic", &C::n_critic, "critic steps per level training iteration"},
        {"lambda_gp", &C::lambda_gp, "gradient penalty weight"},
        {"lr", &C::lr, "level training Adam learning rate"},
        {"critic_hidden", &C::critic_hidden, "hidden width of the latent critic"},
        {"init_from_mapping", &C::init_from_mapping, "initialise each level mapper from the frozen mapping network"},
        {"consistency_samples", &C::consistency_samples, "fresh samples for the classifier self-consistency score"},
        {"level_seed", &C::level_seed, "seed of level training"},
        {"centers_n", &C::centers_n, "latents sampled to estimate cluster centers"},
        {"centers_seed", &C::centers_seed, "seed of center estimation"},
        {"seed", &C::seed, "sample seed for truncate, controlled-grid and mean-vs-samples"},
        {"phi", &C::phi, "truncation strength in [0,1]; 0 = untruncated, 1 = full contraction onto the center"},
        {"n", &C::n, "latents per sweep cell"},
        {"phis", &C::phis, "interior truncation strengths in the sweep (endpoints 0 and 1 are added)"},
        {"knn_k", &C::knn_k, "neighbour count of the precision/recall manifolds"},
        {"sweep_seed", &C::sweep_seed, "seed of the sweep's pre-sampled latents"},
        {"gmm_k", &C::gmm_k, "components of the GMM baseline on w"},
        {"gmm_n", &C::gmm_n, "latents fitted by the GMM baseline"},
        {"gmm_iters", &C::gmm_iters, "maximum EM iterations"},
        {"gmm_tol", &C::gmm_tol, "EM stops once the log-likelihood gain falls below this"},
        {"gmm_seed", &C::gmm_seed, "seed of the GMM baseline"},
        {"embed_n", &C::embed_n, "latents per level in the 2-D embedding"},
        {"embed_seed", &C::embed_seed, "seed of the embedding samples"},
        {"samples", &C::samples, "random samples shown beside the mean image"},
        {"host", &C::host, "address the service binds to"},
        {"port", &C::port, "port the service listens on"},
        {"static_dir", &C::static_dir, "directory of UI files served at / (optional)"},
    };
    return keys;
}

void apply_json(RunConfig& config, const nlohmann::json& j)
{
    require(j.is_object(), "configuration must be a JSON object");
    for (const auto& [name, value] : j.items()) {
        const auto& key = find_key(name);
        const auto bad = [&](const char* type) { return ConfigError("key '" + name + "' expects " + type); };
        std::visit(Overloaded{
                       [&](int RunConfig::*f) {
                           if (!value.is_number_integer())
                               throw bad("an integer");
                           config.*f = value.get<int>();
                       },
                       [&](std::uint64_t RunConfig::*f) {
                           if (!value.is_number_unsigned() && !(value.is_number_integer() && value.get<int64_t>() >= 0))
                               throw bad("a non-negative integer");
                           config.*f = value.get<std::uint64_t>();
                       },
                       [&](double RunConfig::*f) {
                           if (!value.is_number())
                               throw bad("a number");
                           config.*f = value.get<double>();
                       },
                       [&](bool RunConfig::*f) {
                           if (!value.is_boolean())
                               throw bad("true or false");
                           config.*f = value.get<bool>();
                       },
                       [&](std::string RunConfig::*f) {
                           if (!value.is_string())
                               throw bad("a string");
                           config.*f = value.get<std::string>();
                       },
                   },
                   key.field);
    }
}

void apply_flag(RunConfig& config, const std::string& name, const std::string& text)
{
    const auto& key = find_key(name);
    const auto bad = [&](const char* type) {
        return ConfigError("--" + name + " expects " + type + ", got '" + text + "'");
    };
    const auto parse_whole = [&](auto& out) {
        const auto* end = text.data() + text.size();
        const auto [ptr, ec] = std::from_chars(text.data(), end, out);
        return ec == std::errc() && ptr == end;
    };
    std::visit(Overloaded{
                   [&](int RunConfig::*f) {
                       int v = 0;
                       if (!parse_whole(v))
                           throw bad("an integer");
                       config.*f = v;
                   },
                   [&](std::uint64_t RunConfig::*f) {
                       std::uint64_t v = 0;
                       if (!parse_whole(v))
                           throw bad("a non-negative integer");
                       config.*f = v;
                   },
                   [&](double RunConfig::*f) {
                       double v = 0;
                       if (!parse_whole(v))
                           throw bad("a number");
                       config.*f = v;
                   },
                   [&](bool RunConfig::*f) {
                       if (text == "true" || text == "1")
                           config.*f = true;
                       else if (text == "false" || text == "0")
                           config.*f = false;
                       else
                           throw bad("true or false");
                   },
                   [&](std::string RunConfig::*f) { config.*f = text; },
               },
               key.field);
}

RunConfig load_config_file(const std::filesystem::path& file)
{
    std::ifstream in(file);
    if (!in)
        throw ConfigError("cannot read config file " + file.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config file " + file.string() + " is not valid JSON: " + e.what());
    }
    RunConfig config;
    apply_json(config, j);
    return config;
}

nlohmann::json RunConfig::to_json() const
{
    nlohmann::json j = nlohmann::json::object();
    for (const auto& key : config_keys())
        std::visit([&](auto RunConfig::*f) { j[key.name] = this->*f; }, key.field);
    return j;
}

void RunConfig::validate() const
{
    require(!workspace.empty(), "workspace must not be empty");
    require(generator == "toy" || generator == "tiny", "generator must be toy or tiny");
    require(level == "all" || level == "coarse" || level == "medium" || level == "fine",
            "level must be all, coarse, medium or fine");
    require(data_n > 0 && pretrain_steps >= 0 && pretrain_batch > 0 && iters >= 0 && batch > 0 && n_critic > 0,
            "counts must be positive");
    require(k_coarse >= 2 && k_medium >= 2 && k_fine >= 2, "each level needs at least two clusters");
    require(phi >= 0.0 && phi <= 1.0, "phi must lie in [0,1]");
    require(phis >= 2, "phis must be at least 2");
    require(n > knn_k && knn_k >= 1, "n must exceed knn_k >= 1");
    require(centers_n > 0 && gmm_n >= 2 && gmm_k >= 1 && embed_n >= 3 && samples >= 1, "sample counts must be positive");
    require(port > 0 && port < 65536, "port must be in 1..65535");
    try {
        factor_spec().validate();
        const auto g = generator_spec();
        g.validate();
        require(g.image_size() == image_size,
                "image_size " + std::to_string(image_size) + " does not match the " + generator
                    + " generator (" + std::to_string(g.image_size()) + ")");
        (void)partition();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
}

FactorSpec RunConfig::factor_spec() const
{
    return {coarse_values, medium_values, fine_values, image_size};
}

GeneratorSpec RunConfig::generator_spec() const
{
    GeneratorSpec spec = generator == "tiny" ? GeneratorSpec::tiny(z_dim) : GeneratorSpec{};
    spec.z_dim = z_dim;
    spec.w_dim = w_dim;
    spec.mapping_depth = mapping_depth;
    return spec;
}

LevelPartition RunConfig::partition() const
{
    return LevelPartition::make(generator_spec().num_layers(), layers_coarse, layers_medium);
}

std::array<int, 3> RunConfig::cluster_counts() const
{
    return {k_coarse, k_medium, k_fine};
}

PretrainConfig RunConfig::pretrain_config() const
{
    PretrainConfig c;
    c.steps = pretrain_steps;
    c.batch = pretrain_batch;
    c.lr = pretrain_lr;
    c.r1_gamma = r1_gamma;
    c.r1_every = r1_every;
    c.fid_every = fid_every;
    c.fid_patience = fid_patience;
    c.min_images = min_images;
    c.seed = pretrain_seed;
    return c;
}

LevelConfig RunConfig::level_config() const
{
    LevelConfig c;
    c.iterations = iters;
    c.batch = batch;
    c.n_critic = n_critic;
    c.lambda_gp = lambda_gp;
    c.lr = lr;
    c.critic_hidden = critic_hidden;
    c.init_from_mapping = init_from_mapping;
    c.consistency_samples = consistency_samples;
    c.seed = level_seed;
    return c;
}

std::filesystem::path RunConfig::stage_dir(const std::string& stage) const
{
    return std::filesystem::path(workspace) / stage;
}

std::filesystem::path RunConfig::output_dir(const std::string& command) const
{
    return out.empty() ? stage_dir(command) : std::filesystem::path(out);
}

} // namespace strata
