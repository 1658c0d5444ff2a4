#include "strata/generator.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "strata/checkpoint.hpp"
#include "strata/errors.hpp"
#include "strata/random.hpp"

namespace strata {

namespace F = torch::nn::functional;

namespace {

constexpr double kSlope = 0.2;

void copy_parameters(torch::nn::Module& dst, const torch::nn::Module& src)
{
    torch::NoGradGuard no_grad;
    auto d = dst.parameters(true);
    auto s = src.parameters(true);
    if (d.size() != s.size())
        throw std::logic_error("parameter lists differ");
    for (std::size_t i = 0; i < d.size(); ++i)
        d[i].copy_(s[i]);
}

} // namespace

// ---------------------------------------------------------------------------

void GeneratorSpec::validate() const
{
    if (z_dim < 1 || w_dim < 1 || mapping_depth < 1)
        throw std::invalid_argument("generator dimensions must be positive");
    if (resolutions.size() != channels.size() || resolutions.size() < 4)
        throw std::invalid_argument("generator needs at least 4 layers with matching channel list");
    for (std::size_t j = 1; j < resolutions.size(); ++j) {
        if (resolutions[j] != resolutions[j - 1] && resolutions[j] != 2 * resolutions[j - 1])
            throw std::invalid_argument("resolutions must stay equal or double between layers");
    }
    for (int c : channels) {
        if (c < 1)
            throw std::invalid_argument("channel widths must be positive");
    }
}

GeneratorSpec GeneratorSpec::tiny(int latent_dim)
{
    GeneratorSpec s;
    s.z_dim = latent_dim;
    s.w_dim = latent_dim;
    s.mapping_depth = 2;
    s.resolutions = {4, 8, 8, 8};
    s.channels = {4, 4, 4, 4};
    return s;
}

nlohmann::json GeneratorSpec::to_json() const
{
    return {{"z_dim", z_dim},
            {"w_dim", w_dim},
            {"mapping_depth", mapping_depth},
            {"resolutions", resolutions},
            {"channels", channels}};
}

GeneratorSpec GeneratorSpec::from_json(const nlohmann::json& j)
{
    GeneratorSpec s;
    s.z_dim = j.at("z_dim").get<int>();
    s.w_dim = j.at("w_dim").get<int>();
    s.mapping_depth = j.at("mapping_depth").get<int>();
    s.resolutions = j.at("resolutions").get<std::vector<int>>();
    s.channels = j.at("channels").get<std::vector<int>>();
    s.validate();
    return s;
}

// ---------------------------------------------------------------------------

MappingNetworkImpl::MappingNetworkImpl(int z_dim, int w_dim, int depth)
{
    for (int i = 0; i < depth; ++i)
        layers_->push_back(torch::nn::Linear(i == 0 ? z_dim : w_dim, w_dim));
    register_module("layers", layers_);
}

torch::Tensor MappingNetworkImpl::forward(const torch::Tensor& z)
{
    auto x = z * torch::rsqrt(z.pow(2).mean(-1, true) + 1e-8);
    for (const auto& layer : *layers_)
        x = torch::leaky_relu(layer->as<torch::nn::Linear>()->forward(x), kSlope);
    return x;
}

ModulatedConvImpl::ModulatedConvImpl(int in_channels, int out_channels, int w_dim, bool upsample)
    : upsample_(upsample)
{
    affine_ = register_module("affine", torch::nn::Linear(w_dim, in_channels));
    weight_ = register_parameter("weight", torch::empty({out_channels, in_channels, 3, 3}));
    bias_ = register_parameter("bias", torch::zeros({out_channels}));
}

torch::Tensor ModulatedConvImpl::forward(const torch::Tensor& x, const torch::Tensor& w)
{
    auto h = x;
    if (upsample_)
        h = F::interpolate(h, F::InterpolateFuncOptions().scale_factor(std::vector<double>{2.0, 2.0})
                                  .mode(torch::kNearest));
    const auto batch = h.size(0);
    const auto style = affine_->forward(w);                          // [B, in]
    h = h * style.view({batch, -1, 1, 1});
    auto y = F::conv2d(h, weight_, F::Conv2dFuncOptions().padding(1));
    const auto wsq = weight_.pow(2).sum({2, 3});                      // [out, in]
    const auto demod = torch::rsqrt(style.pow(2).matmul(wsq.t()) + 1e-8); // [B, out]
    y = y * demod.view({batch, -1, 1, 1}) + bias_.view({1, -1, 1, 1});
    return torch::leaky_relu(y, kSlope);
}

SynthesisNetworkImpl::SynthesisNetworkImpl(const GeneratorSpec& spec) : spec_(spec)
{
    spec_.validate();
    const int r0 = spec.resolutions.front();
    const_input_ = register_parameter("const_input", torch::empty({1, spec.channels.front(), r0, r0}));
    for (int j = 0; j < spec.num_layers(); ++j) {
        const int in = j == 0 ? spec.channels.front() : spec.channels[static_cast<std::size_t>(j - 1)];
        const bool up = j > 0 && spec.resolutions[static_cast<std::size_t>(j)]
                                     == 2 * spec.resolutions[static_cast<std::size_t>(j - 1)];
        layers_->push_back(ModulatedConv(in, spec.channels[static_cast<std::size_t>(j)], spec.w_dim, up));
    }
    register_module("layers", layers_);
    to_rgb_ = register_module("to_rgb", torch::nn::Conv2d(torch::nn::Conv2dOptions(spec.channels.back(), 3, 1)));
}

void SynthesisNetworkImpl::reset(at::Generator& gen)
{
    torch::NoGradGuard no_grad;
    const_input_.normal_(0.0, 1.0, gen);
    for (auto& layer : *layers_) {
        for (auto& item : layer->named_parameters(true)) {
            if (item.key() == "weight")
                item.value().normal_(0.0, 1.0, gen);
            else if (item.key() == "affine.bias")
                item.value().fill_(1.0);
        }
    }
}

std::vector<torch::Tensor> SynthesisNetworkImpl::forward_layers(const std::vector<torch::Tensor>& styles)
{
    if (static_cast<int>(styles.size()) != spec_.num_layers())
        throw std::invalid_argument("expected " + std::to_string(spec_.num_layers()) + " style inputs, got "
                                    + std::to_string(styles.size()));
    const auto batch = styles.front().size(0);
    auto x = const_input_.expand({batch, -1, -1, -1});
    std::vector<torch::Tensor> outs;
    outs.reserve(styles.size() + 1);
    for (std::size_t j = 0; j < styles.size(); ++j) {
        x = layers_[j]->as<ModulatedConv>()->forward(x, styles[j]);
        outs.push_back(x);
    }
    outs.push_back(torch::sigmoid(to_rgb_->forward(x)));
    return outs;
}

torch::Tensor SynthesisNetworkImpl::forward(const std::vector<torch::Tensor>& styles)
{
    return forward_layers(styles).back();
}

GeneratorImpl::GeneratorImpl(const GeneratorSpec& spec, std::uint64_t seed)
{
    spec.validate();
    mapping = register_module("mapping", MappingNetwork(spec.z_dim, spec.w_dim, spec.mapping_depth));
    synthesis = register_module("synthesis", SynthesisNetwork(spec));
    auto gen = make_generator(seed);
    init_parameters(*this, gen);
    synthesis->reset(gen);
}

DiscriminatorImpl::DiscriminatorImpl(int image_size, std::uint64_t seed)
{
    int c = 16;
    body_->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(3, c, 3).padding(1)));
    body_->push_back(torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(kSlope)));
    int res = image_size;
    while (res > 4) {
        const int next = std::min(2 * c, 64);
        body_->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(c, next, 4).stride(2).padding(1)));
        body_->push_back(torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(kSlope)));
        c = next;
        res /= 2;
    }
    register_module("body", body_);
    head_ = register_module("head", torch::nn::Linear(c * res * res, 1));
    auto gen = make_generator(seed);
    init_parameters(*this, gen);
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& images)
{
    return head_->forward(body_->forward(images * 2.0 - 1.0).flatten(1)).squeeze(1);
}

// ---------------------------------------------------------------------------

FrozenGenerator::FrozenGenerator(GeneratorSpec spec, Generator net) : spec_(std::move(spec)), net_(std::move(net))
{
    net_->eval();
    for (auto& p : net_->parameters(true))
        p.requires_grad_(false);
    hash_ = parameter_hash(*net_);
}

torch::Dtype FrozenGenerator::dtype() const
{
    return net_->parameters().front().scalar_type();
}

torch::Tensor FrozenGenerator::map_latent(const torch::Tensor& z) const
{
    if (z.dim() < 1 || z.dim() > 2 || z.size(-1) != spec_.z_dim)
        throw std::invalid_argument("map_latent expects z of dimension " + std::to_string(spec_.z_dim));
    if (z.dim() == 1)
        return net_.ptr()->mapping->forward(z.unsqueeze(0)).squeeze(0);
    return net_.ptr()->mapping->forward(z);
}

std::vector<torch::Tensor> FrozenGenerator::check_styles(const std::vector<torch::Tensor>& styles,
                                                         bool& batched) const
{
    if (static_cast<int>(styles.size()) != spec_.num_layers())
        throw std::invalid_argument("synthesize expects " + std::to_string(spec_.num_layers())
                                    + " style inputs, got " + std::to_string(styles.size()));
    batched = styles.front().dim() == 2;
    std::vector<torch::Tensor> out;
    out.reserve(styles.size());
    for (const auto& s : styles) {
        if (s.dim() != (batched ? 2 : 1) || s.size(-1) != spec_.w_dim)
            throw std::invalid_argument("style inputs must all be [w_dim] or all [B, w_dim]");
        out.push_back(batched ? s : s.unsqueeze(0));
    }
    return out;
}

torch::Tensor FrozenGenerator::synthesize(const std::vector<torch::Tensor>& styles) const
{
    bool batched = false;
    auto img = net_.ptr()->synthesis->forward(check_styles(styles, batched));
    return batched ? img : img.squeeze(0);
}

std::vector<torch::Tensor> FrozenGenerator::synthesize_layers(const std::vector<torch::Tensor>& styles) const
{
    bool batched = false;
    auto outs = net_.ptr()->synthesis->forward_layers(check_styles(styles, batched));
    if (!batched) {
        for (auto& t : outs)
            t = t.squeeze(0);
    }
    return outs;
}

torch::Tensor FrozenGenerator::generate(const torch::Tensor& w) const
{
    return synthesize(std::vector<torch::Tensor>(static_cast<std::size_t>(spec_.num_layers()), w));
}

std::string FrozenGenerator::current_hash() const
{
    return parameter_hash(*net_);
}

void FrozenGenerator::verify_unchanged() const
{
    if (current_hash() != hash_)
        throw FrozenError("frozen generator parameters changed (hash " + hash_ + ")");
}

void FrozenGenerator::save(const std::filesystem::path& dir) const
{
    save_checkpoint(*net_, dir, {{"kind", "generator"}, {"spec", spec_.to_json()}, {"freeze_hash", hash_}});
}

FrozenGenerator FrozenGenerator::load(const std::filesystem::path& dir)
{
    const auto manifest = read_manifest(dir);
    auto spec = GeneratorSpec::from_json(manifest.at("spec"));
    Generator net(spec, 0);
    load_checkpoint(*net, dir);
    FrozenGenerator g(spec, net);
    if (manifest.contains("freeze_hash") && manifest["freeze_hash"].get<std::string>() != g.freeze_hash())
        throw std::runtime_error("generator checkpoint in " + dir.string() + " does not match its freeze hash");
    return g;
}

// ---------------------------------------------------------------------------

GeneratorTrainer::GeneratorTrainer(GeneratorSpec spec, PretrainConfig config)
    : spec_(std::move(spec)),
      config_(config),
      gen_(spec_, derive_seed(config.seed, 1)),
      disc_(spec_.image_size(), derive_seed(config.seed, 2)),
      g_opt_(gen_->parameters(), torch::optim::AdamOptions(config.lr).betas({config.beta1, config.beta2})),
      d_opt_(disc_->parameters(), torch::optim::AdamOptions(config.lr).betas({config.beta1, config.beta2})),
      rng_(make_generator(derive_seed(config.seed, 3)))
{
}

PretrainLossRow GeneratorTrainer::step(const torch::Tensor& real_batch)
{
    if (frozen_)
        throw FrozenError("generator is frozen; training steps are not allowed");
    ++step_;
    const auto batch = real_batch.size(0);
    const auto layers = static_cast<std::size_t>(spec_.num_layers());
    auto generate = [&](const torch::Tensor& z) {
        return gen_->synthesis->forward(std::vector<torch::Tensor>(layers, gen_->mapping->forward(z)));
    };

    // Critic update.
    auto z = at::randn({batch, spec_.z_dim}, rng_);
    torch::Tensor fake;
    {
        torch::NoGradGuard no_grad;
        fake = generate(z);
    }
    auto d_loss = F::softplus(disc_->forward(fake)).mean() + F::softplus(-disc_->forward(real_batch)).mean();
    double r1_value = 0.0;
    if (config_.r1_gamma > 0.0 && config_.r1_every > 0 && step_ % config_.r1_every == 0) {
        auto real = real_batch.detach().requires_grad_(true);
        auto out = disc_->forward(real);
        auto grad = torch::autograd::grad({out.sum()}, {real}, {}, true, true)[0];
        auto r1 = grad.pow(2).sum({1, 2, 3}).mean();
        r1_value = r1.item<double>();
        d_loss = d_loss + 0.5 * config_.r1_gamma * config_.r1_every * r1;
    }
    d_opt_.zero_grad();
    d_loss.backward();
    d_opt_.step();

    // Generator update with the critic held fixed.
    for (auto& p : disc_->parameters())
        p.requires_grad_(false);
    auto z2 = at::randn({batch, spec_.z_dim}, rng_);
    auto g_loss = F::softplus(-disc_->forward(generate(z2))).mean();
    g_opt_.zero_grad();
    g_loss.backward();
    g_opt_.step();
    for (auto& p : disc_->parameters())
        p.requires_grad_(true);

    return {step_, d_loss.item<double>(), g_loss.item<double>(), r1_value};
}

FrozenGenerator GeneratorTrainer::snapshot() const
{
    Generator copy(spec_, 0);
    copy_parameters(*copy, *gen_);
    return FrozenGenerator(spec_, copy);
}

FrozenGenerator GeneratorTrainer::freeze()
{
    if (frozen_)
        throw FrozenError("generator already frozen");
    frozen_ = true;
    return FrozenGenerator(spec_, gen_);
}

bool fid_diverging(const std::vector<FidLogRow>& log, int patience)
{
    if (patience < 1 || static_cast<int>(log.size()) < patience + 1)
        return false;
    for (std::size_t i = log.size() - static_cast<std::size_t>(patience); i < log.size(); ++i) {
        if (!(log[i].fid > log[i - 1].fid))
            return false;
    }
    return true;
}

PretrainResult pretrain(const GeneratorSpec& spec, const torch::Tensor& images, const PretrainConfig& config,
                        const FidProbe& probe, const std::function<void(const std::string&)>& log)
{
    spec.validate();
    if (images.dim() != 4 || images.size(1) != 3 || images.size(2) != spec.image_size())
        throw std::invalid_argument("pretraining images must be [N,3,S,S] with S = generator image size");
    if (images.size(0) < config.min_images)
        throw std::invalid_argument("pretraining needs at least " + std::to_string(config.min_images) + " images");

    GeneratorTrainer trainer(spec, config);
    std::mt19937_64 pick(derive_seed(config.seed, 4));
    const auto n = static_cast<std::uint64_t>(images.size(0));
    std::vector<PretrainLossRow> losses;
    std::vector<FidLogRow> fid_log;
    std::vector<int64_t> idx(static_cast<std::size_t>(config.batch));

    for (int s = 1; s <= config.steps; ++s) {
        for (auto& i : idx)
            i = static_cast<int64_t>(pick() % n);
        const auto real = images.index_select(0, torch::tensor(idx, torch::kInt64));
        const auto row = trainer.step(real);
        if (!std::isfinite(row.d_loss) || !std::isfinite(row.g_loss))
            throw TrainingDiverged("non-finite loss at pretraining step " + std::to_string(s));
        losses.push_back(row);
        if (log && (s % config.log_every == 0 || s == 1)) {
            log("step " + std::to_string(s) + " d_loss " + std::to_string(row.d_loss) + " g_loss "
                + std::to_string(row.g_loss));
        }
        if (probe && config.fid_every > 0 && s % config.fid_every == 0) {
            const double fid = probe(trainer.snapshot());
            fid_log.push_back({s, fid});
            if (log)
                log("step " + std::to_string(s) + " fid " + std::to_string(fid));
            if (fid_diverging(fid_log, config.fid_patience)) {
                std::string trace;
                for (const auto& r : fid_log)
                    trace += " " + std::to_string(r.step) + ":" + std::to_string(r.fid);
                throw TrainingDiverged("FID worsened for " + std::to_string(config.fid_patience)
                                       + " consecutive evaluations;" + trace);
            }
        }
    }
    auto frozen = trainer.freeze();
    return PretrainResult{std::move(frozen), trainer.discriminator(), std::move(losses), std::move(fid_log)};
}

} // namespace strata
