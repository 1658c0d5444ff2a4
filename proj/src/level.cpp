#include "strata/level.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include "strata/checkpoint.hpp"
#include "strata/errors.hpp"
#include "strata/random.hpp"

namespace strata {

namespace F = torch::nn::functional;

namespace {

constexpr double kSlope = 0.2;

std::vector<torch::Tensor> clone_all(const std::vector<torch::Tensor>& params)
{
    std::vector<torch::Tensor> out;
    out.reserve(params.size());
    for (const auto& p : params)
        out.push_back(p.detach().clone());
    return out;
}

void restore_all(std::vector<torch::Tensor> params, const std::vector<torch::Tensor>& saved)
{
    torch::NoGradGuard no_grad;
    for (std::size_t i = 0; i < params.size(); ++i)
        params[i].copy_(saved[i]);
}

void set_requires_grad(torch::nn::Module& m, bool on)
{
    for (auto& p : m.parameters(true))
        p.requires_grad_(on);
}

} // namespace

nlohmann::json LevelConfig::to_json() const
{
    return {{"iterations", iterations},       {"batch", batch},
            {"n_critic", n_critic},           {"lambda_gp", lambda_gp},
            {"lr", lr},                       {"beta1", beta1},
            {"beta2", beta2},                 {"critic_hidden", critic_hidden},
            {"init_from_mapping", init_from_mapping}, {"consistency_samples", consistency_samples},
            {"seed", seed}};
}

// ---------------------------------------------------------------------------

GaussianBankImpl::GaussianBankImpl(int k, int dim, std::uint64_t seed)
{
    if (k < 2)
        throw std::invalid_argument("a Gaussian bank needs k >= 2 components");
    auto gen = make_generator(seed);
    means = register_parameter("means", at::randn({k, dim}, gen, torch::TensorOptions()));
    // softplus(log(e - 1)) = 1
    raw_scales = register_parameter("raw_scales", torch::full({k, dim}, std::log(std::exp(1.0) - 1.0)));
}

torch::Tensor GaussianBankImpl::scales() const
{
    return F::softplus(raw_scales);
}

LatentCriticImpl::LatentCriticImpl(int w_dim, int hidden, std::uint64_t seed)
{
    net_->push_back(torch::nn::Linear(w_dim, hidden));
    net_->push_back(torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(kSlope)));
    net_->push_back(torch::nn::Linear(hidden, hidden));
    net_->push_back(torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(kSlope)));
    net_->push_back(torch::nn::Linear(hidden, 1));
    register_module("net", net_);
    auto gen = make_generator(seed);
    init_parameters(*this, gen);
}

torch::Tensor LatentCriticImpl::forward(const torch::Tensor& w)
{
    return net_->forward(w).squeeze(-1);
}

LevelClassifierImpl::LevelClassifierImpl(int k, std::uint64_t seed)
{
    const int widths[] = {3, 16, 32, 64, 64};
    for (int i = 0; i < 4; ++i) {
        features_->push_back(
            torch::nn::Conv2d(torch::nn::Conv2dOptions(widths[i], widths[i + 1], 3).stride(2).padding(1)));
        features_->push_back(torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(kSlope)));
    }
    register_module("features", features_);
    head_ = register_module("head", torch::nn::Linear(64, k));
    auto gen = make_generator(seed);
    init_parameters(*this, gen);
}

torch::Tensor LevelClassifierImpl::forward(const torch::Tensor& images)
{
    return head_->forward(features_->forward(images * 2.0 - 1.0).mean({2, 3}));
}

LevelNetImpl::LevelNetImpl(int k, const GeneratorSpec& gspec, int critic_hidden, std::uint64_t seed)
{
    bank = register_module("bank", GaussianBank(k, gspec.z_dim, derive_seed(seed, 1)));
    mapper = register_module("mapper", MappingNetwork(gspec.z_dim, gspec.w_dim, gspec.mapping_depth));
    auto gen = make_generator(derive_seed(seed, 2));
    init_parameters(*mapper, gen);
    critic = register_module("critic", LatentCritic(gspec.w_dim, critic_hidden, derive_seed(seed, 3)));
    classifier = register_module("classifier", LevelClassifier(k, derive_seed(seed, 4)));
}

// ---------------------------------------------------------------------------

LevelModel LevelModel::create(LayerGroup level, int k, const GeneratorSpec& gspec, int critic_hidden,
                              std::uint64_t seed)
{
    level_index(level);
    LevelModel m;
    m.level = level;
    m.k = k;
    m.net = LevelNet(k, gspec, critic_hidden, seed);
    m.info["generator_spec"] = gspec.to_json();
    m.info["critic_hidden"] = critic_hidden;
    return m;
}

torch::Tensor LevelModel::generate(const torch::Tensor& indices, const torch::Tensor& noise) const
{
    const auto onehot = F::one_hot(indices, k).to(noise.scalar_type());
    return net.ptr()->mapper->forward(sample_mixture(net.ptr()->bank, onehot, noise));
}

torch::Tensor LevelModel::critic_scores(const torch::Tensor& w) const
{
    return net.ptr()->critic->forward(w);
}

torch::Tensor LevelModel::classifier_logits(const torch::Tensor& images) const
{
    return net.ptr()->classifier->forward(images);
}

torch::Tensor LevelModel::classifier_probabilities(const torch::Tensor& images) const
{
    return torch::softmax(classifier_logits(images), -1);
}

std::vector<torch::Tensor> LevelModel::joint_parameters() const
{
    std::vector<torch::Tensor> out;
    for (const auto* m : {static_cast<torch::nn::Module*>(net.ptr()->bank.get()),
                          static_cast<torch::nn::Module*>(net.ptr()->mapper.get()),
                          static_cast<torch::nn::Module*>(net.ptr()->classifier.get())}) {
        auto ps = m->parameters(true);
        out.insert(out.end(), ps.begin(), ps.end());
    }
    return out;
}

std::string LevelModel::hash() const
{
    return parameter_hash(*net);
}

void LevelModel::save(const std::filesystem::path& dir) const
{
    save_checkpoint(*net, dir,
                    {{"kind", "level"},
                     {"level", std::string(to_string(level))},
                     {"k", k},
                     {"generator_spec", info.at("generator_spec")},
                     {"critic_hidden", info.at("critic_hidden")},
                     {"hash", hash()}});
    nlohmann::json meta = info;
    meta["level"] = std::string(to_string(level));
    meta["k"] = k;
    std::ofstream(dir / "level.json") << meta.dump(2) << '\n';
}

LevelModel LevelModel::load(const std::filesystem::path& dir)
{
    const auto manifest = read_manifest(dir);
    if (manifest.value("kind", "") != "level")
        throw std::runtime_error(dir.string() + " is not a level checkpoint");
    const auto gspec = GeneratorSpec::from_json(manifest.at("generator_spec"));
    auto m = create(parse_layer_group(manifest.at("level").get<std::string>()), manifest.at("k").get<int>(), gspec,
                    manifest.at("critic_hidden").get<int>(), 0);
    load_checkpoint(*m.net, dir);
    std::ifstream meta(dir / "level.json");
    if (meta)
        m.info = nlohmann::json::parse(meta);
    m.net->eval();
    return m;
}

// ---------------------------------------------------------------------------

torch::Tensor OneHotSelector::vector(torch::Dtype dtype) const
{
    if (index < 0 || index >= k)
        throw std::out_of_range("selector index outside [0,k)");
    auto v = torch::zeros({k}, dtype);
    v[index] = 1;
    return v;
}

std::vector<OneHotSelector> sample_selectors(int k, int count, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::vector<OneHotSelector> out(static_cast<std::size_t>(count));
    for (auto& s : out)
        s = {static_cast<int>(rng() % static_cast<std::uint64_t>(k)), k};
    return out;
}

torch::Tensor selector_indices(const std::vector<OneHotSelector>& selectors)
{
    std::vector<int64_t> idx;
    idx.reserve(selectors.size());
    for (const auto& s : selectors)
        idx.push_back(s.index);
    return torch::tensor(idx, torch::kInt64);
}

torch::Tensor sample_mixture(const GaussianBank& bank, const torch::Tensor& selectors, const torch::Tensor& noise)
{
    if (noise.size(-1) != bank->dim())
        throw std::invalid_argument("mixture noise must have the bank dimension");
    const auto pi = selectors.to(bank->means.scalar_type());
    return pi.matmul(bank->means) + pi.matmul(bank->scales()) * noise;
}

torch::Tensor sample_mixture(const GaussianBank& bank, const OneHotSelector& selector, const torch::Tensor& noise)
{
    const auto dtype = bank->means.scalar_type();
    return sample_mixture(bank, selector.vector(dtype).unsqueeze(0), noise.unsqueeze(0)).squeeze(0);
}

torch::Tensor gradient_penalty(const CriticFn& critic, const torch::Tensor& w_real, const torch::Tensor& w_fake,
                               std::uint64_t seed)
{
    if (w_real.sizes() != w_fake.sizes() || w_real.dim() != 2)
        throw std::invalid_argument("gradient penalty needs equal [B, D] batches");
    auto gen = make_generator(seed);
    const auto t = at::rand({w_real.size(0), 1}, gen, torch::TensorOptions().dtype(w_real.scalar_type()));
    auto mix = (t * w_real.detach() + (1 - t) * w_fake.detach()).requires_grad_(true);
    const auto out = critic(mix);
    torch::Tensor grad;
    if (out.requires_grad()) {
        grad = torch::autograd::grad({out.sum()}, {mix}, {}, true, true, true)[0];
    }
    if (!grad.defined())
        grad = torch::zeros_like(mix);
    const auto norm = torch::linalg_vector_norm(grad, 2, {1}, false, c10::nullopt);
    return (norm - 1).pow(2).mean();
}

CriticLoss critic_loss(const CriticFn& critic, const torch::Tensor& w_real, const torch::Tensor& w_fake,
                       double lambda_gp, std::uint64_t seed)
{
    const auto wdist = critic(w_fake).mean() - critic(w_real).mean();
    const auto gp = gradient_penalty(critic, w_real, w_fake, seed);
    CriticLoss out;
    out.total = wdist + lambda_gp * gp;
    out.wasserstein = wdist.item<double>();
    out.penalty = gp.item<double>();
    return out;
}

CriticLoss critic_loss(const LevelModel& model, const torch::Tensor& w_real, const torch::Tensor& w_fake,
                       double lambda_gp, std::uint64_t seed)
{
    return critic_loss([&model](const torch::Tensor& w) { return model.critic_scores(w); }, w_real, w_fake,
                       lambda_gp, seed);
}

MixedImage mix_and_generate(const FrozenGenerator& g, const LevelPartition& p, LayerGroup level,
                            const torch::Tensor& w_level, const std::vector<std::uint64_t>& seeds)
{
    const bool batched = w_level.dim() == 2;
    const auto batch = batched ? w_level.size(0) : 1;
    if (static_cast<int64_t>(seeds.size()) != batch)
        throw std::invalid_argument("mix_and_generate needs one seed per sample");
    if (w_level.size(-1) != g.spec().w_dim)
        throw std::invalid_argument("level latent has the wrong dimension");
    std::vector<torch::Tensor> zs;
    zs.reserve(seeds.size());
    for (auto s : seeds)
        zs.push_back(seeded_normal({g.spec().z_dim}, s, g.dtype()));
    auto w_other = g.map_latent(torch::stack(zs));
    if (!batched)
        w_other = w_other.squeeze(0);

    ExtendedLatent latent = broadcast(w_other);
    latent.at(level) = w_level;
    return {g.synthesize(expand_to_layers(latent, p)), latent};
}

JointBatch sample_joint_batch(int k, int batch, int z_dim, torch::Dtype dtype, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    JointBatch b;
    std::vector<int64_t> idx(static_cast<std::size_t>(batch));
    b.seeds.resize(static_cast<std::size_t>(batch));
    for (int i = 0; i < batch; ++i) {
        idx[static_cast<std::size_t>(i)] = static_cast<int64_t>(rng() % static_cast<std::uint64_t>(k));
        b.seeds[static_cast<std::size_t>(i)] = rng();
    }
    b.indices = torch::tensor(idx, torch::kInt64);
    b.noise = seeded_normal({batch, z_dim}, rng(), dtype);
    return b;
}

JointLoss generator_classifier_loss(const LevelModel& model, const FrozenGenerator& g, const LevelPartition& p,
                                    const JointBatch& batch)
{
    const auto w_level = model.generate(batch.indices, batch.noise);
    JointLoss out;
    out.adversarial = -model.critic_scores(w_level).mean();
    const auto mixed = mix_and_generate(g, p, model.level, w_level, batch.seeds);
    out.ce = F::cross_entropy(model.classifier_logits(mixed.image), batch.indices);
    out.total = out.adversarial + out.ce;
    return out;
}

double classifier_self_consistency(const LevelModel& model, const FrozenGenerator& g, const LevelPartition& p,
                                   int samples, std::uint64_t seed)
{
    torch::NoGradGuard no_grad;
    std::mt19937_64 rng(seed);
    int64_t correct = 0;
    for (int done = 0; done < samples;) {
        const int chunk = std::min(256, samples - done);
        const auto b = sample_joint_batch(model.k, chunk, g.spec().z_dim, g.dtype(), rng());
        const auto w = model.generate(b.indices, b.noise);
        const auto img = mix_and_generate(g, p, model.level, w, b.seeds).image;
        correct += model.classifier_logits(img).argmax(1).eq(b.indices).sum().item<int64_t>();
        done += chunk;
    }
    return static_cast<double>(correct) / samples;
}

LevelTrainResult train_level(const FrozenGenerator& g, const LevelPartition& p, LayerGroup level, int k,
                             const LevelConfig& config, const std::function<void(const std::string&)>& log,
                             const std::optional<std::filesystem::path>& abort_dir)
{
    if (p.num_layers() != g.spec().num_layers())
        throw std::invalid_argument("partition does not match the generator layer count");
    if (p.count(level) < 1)
        throw std::invalid_argument("level has no assigned layers");
    g.verify_unchanged();

    const auto base = derive_seed(config.seed, 101 + level_index(level));
    auto model = LevelModel::create(level, k, g.spec(), config.critic_hidden, derive_seed(base, 0));
    model.net->to(g.dtype());
    if (config.init_from_mapping) {
        torch::NoGradGuard no_grad;
        auto dst = model.net->mapper->parameters(true);
        auto src = g.network()->mapping->parameters(true);
        for (std::size_t i = 0; i < dst.size(); ++i)
            dst[i].copy_(src[i]);
    }

    const auto adam = torch::optim::AdamOptions(config.lr).betas({config.beta1, config.beta2});
    torch::optim::Adam critic_opt(model.net->critic->parameters(), adam);
    torch::optim::Adam joint_opt(model.joint_parameters(), adam);
    auto real_gen = make_generator(derive_seed(base, 1));
    std::mt19937_64 rng(derive_seed(base, 2));
    const auto z_dim = g.spec().z_dim;
    const auto dtype = g.dtype();
    const auto all_params = model.net->parameters(true);
    auto last_good = clone_all(all_params);

    LevelTrainResult result{model, {}, 0.0};
    result.log.reserve(static_cast<std::size_t>(config.iterations));
    for (int it = 1; it <= config.iterations; ++it) {
        CriticLoss cl;
        for (int c = 0; c < config.n_critic; ++c) {
            torch::Tensor real, fake;
            {
                torch::NoGradGuard no_grad;
                real = g.map_latent(at::randn({config.batch, z_dim}, real_gen, torch::TensorOptions().dtype(dtype)));
                const auto b = sample_joint_batch(k, config.batch, z_dim, dtype, rng());
                fake = model.generate(b.indices, b.noise);
            }
            cl = critic_loss(model, real, fake, config.lambda_gp, rng());
            critic_opt.zero_grad();
            cl.total.backward();
            critic_opt.step();
        }

        set_requires_grad(*model.net->critic, false);
        const auto jl = generator_classifier_loss(model, g, p, sample_joint_batch(k, config.batch, z_dim, dtype, rng()));
        joint_opt.zero_grad();
        jl.total.backward();
        joint_opt.step();
        set_requires_grad(*model.net->critic, true);

        const LevelLogRow row{it, cl.total.defined() ? cl.total.item<double>() : 0.0, jl.total.item<double>(),
                              jl.ce.item<double>()};
        result.log.push_back(row);
        if (!std::isfinite(row.critic_loss) || !std::isfinite(row.gen_loss)) {
            restore_all(all_params, last_good);
            if (abort_dir)
                model.save(*abort_dir);
            throw TrainingDiverged("non-finite loss at iteration " + std::to_string(it) + " while training the "
                                   + std::string(to_string(level)) + " level");
        }
        if (config.snapshot_every > 0 && it % config.snapshot_every == 0)
            last_good = clone_all(all_params);
        if (log && config.log_every > 0 && (it % config.log_every == 0 || it == 1)) {
            log(std::string(to_string(level)) + " it " + std::to_string(it) + " critic "
                + std::to_string(row.critic_loss) + " gen " + std::to_string(row.gen_loss) + " ce "
                + std::to_string(row.ce_term));
        }
    }

    model.net->eval();
    result.self_consistency =
        classifier_self_consistency(model, g, p, config.consistency_samples, derive_seed(base, 3));
    g.verify_unchanged();
    model.info["config"] = config.to_json();
    model.info["k"] = k;
    model.info["self_consistency"] = result.self_consistency;
    model.info["final_ce"] = result.log.empty() ? 0.0 : result.log.back().ce_term;
    result.model = model;
    return result;
}

} // namespace strata
