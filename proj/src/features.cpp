#include "strata/features.hpp"

#include <numeric>
#include <random>
#include <stdexcept>

#include "strata/checkpoint.hpp"
#include "strata/random.hpp"

namespace strata {

namespace {

constexpr int64_t kChunk = 256;

torch::nn::Conv2dOptions conv(int in, int out, int stride)
{
    return torch::nn::Conv2dOptions(in, out, 3).stride(stride).padding(1);
}

RowMatrix to_matrix(const torch::Tensor& t)
{
    auto c = t.to(torch::kFloat64).contiguous();
    return Eigen::Map<const RowMatrix>(c.data_ptr<double>(), c.size(0), c.size(1));
}

} // namespace

FeatureNetImpl::FeatureNetImpl(int classes, std::uint64_t seed)
{
    using namespace torch::nn;
    const auto act = LeakyReLU(LeakyReLUOptions().negative_slope(0.2));
    body_ = register_module("body", Sequential(Conv2d(conv(3, 32, 1)), act, Conv2d(conv(32, 32, 2)), act,
                                               Conv2d(conv(32, 64, 2)), act, Conv2d(conv(64, 64, 2)), act,
                                               AdaptiveAvgPool2d(1), Flatten()));
    embed_ = register_module("embed", Linear(64, kFeatureDim));
    head_ = register_module("head", Linear(kFeatureDim, classes));
    auto gen = make_generator(seed);
    init_parameters(*this, gen);
}

torch::Tensor FeatureNetImpl::features(const torch::Tensor& images)
{
    return torch::leaky_relu(embed_(body_->forward(images * 2.0 - 1.0)), 0.2);
}

torch::Tensor FeatureNetImpl::forward(const torch::Tensor& images)
{
    return head_(features(images));
}

FeatureExtractor::FeatureExtractor(FactorSpec spec, FeatureNet net, double accuracy)
    : spec_(spec), net_(std::move(net)), accuracy_(accuracy)
{
    net_->eval();
    for (auto& t : net_->parameters())
        t.set_requires_grad(false);
    id_ = "joint-classifier:" + parameter_hash(*net_).substr(0, 16);
}

const FeatureNet& FeatureExtractor::checked() const
{
    if (!net_)
        throw std::logic_error("feature extractor has not been trained");
    return net_;
}

FeatureSet FeatureExtractor::extract(const torch::Tensor& images) const
{
    const auto& net = checked();
    torch::NoGradGuard no_grad;
    std::vector<torch::Tensor> parts;
    for (int64_t i = 0; i < images.size(0); i += kChunk)
        parts.push_back(net.ptr()->features(images.narrow(0, i, std::min(kChunk, images.size(0) - i)).to(torch::kFloat32)));
    FeatureSet out;
    out.extractor = id_;
    out.values = to_matrix(torch::cat(parts));
    return out;
}

torch::Tensor FeatureExtractor::predict_joint(const torch::Tensor& images) const
{
    const auto& net = checked();
    torch::NoGradGuard no_grad;
    std::vector<torch::Tensor> parts;
    for (int64_t i = 0; i < images.size(0); i += kChunk)
        parts.push_back(
            net.ptr()->forward(images.narrow(0, i, std::min(kChunk, images.size(0) - i)).to(torch::kFloat32)).argmax(1));
    return torch::cat(parts);
}

std::array<std::vector<int>, 3> FeatureExtractor::predict_factors(const torch::Tensor& images) const
{
    const auto joint = predict_joint(images);
    const auto n = static_cast<std::size_t>(joint.size(0));
    std::array<std::vector<int>, 3> out{std::vector<int>(n), std::vector<int>(n), std::vector<int>(n)};
    auto acc = joint.accessor<int64_t, 1>();
    for (std::size_t i = 0; i < n; ++i) {
        const auto j = static_cast<int>(acc[static_cast<int64_t>(i)]);
        out[0][i] = j / (spec_.medium_count * spec_.fine_count);
        out[1][i] = (j / spec_.fine_count) % spec_.medium_count;
        out[2][i] = j % spec_.fine_count;
    }
    return out;
}

void FeatureExtractor::save(const std::filesystem::path& dir) const
{
    save_checkpoint(*checked(), dir,
                    {{"kind", "feature-extractor"}, {"factor_spec", spec_.to_json()}, {"accuracy", accuracy_}});
}

FeatureExtractor FeatureExtractor::load(const std::filesystem::path& dir)
{
    const auto manifest = read_manifest(dir);
    if (manifest.value("kind", "") != "feature-extractor")
        throw std::runtime_error(dir.string() + " is not a feature extractor checkpoint");
    const auto spec = FactorSpec::from_json(manifest.at("factor_spec"));
    FeatureNet net(spec.joint_count(), 0);
    load_checkpoint(*net, dir);
    return {spec, net, manifest.at("accuracy").get<double>()};
}

double extractor_accuracy(const FeatureExtractor& extractor, const torch::Tensor& images,
                          const torch::Tensor& joint_labels)
{
    const auto pred = extractor.predict_joint(images);
    return pred.eq(joint_labels).to(torch::kFloat64).mean().item<double>();
}

FeatureExtractor train_extractor(const Dataset& data, const ExtractorConfig& config,
                                 const std::function<void(const std::string&)>& log)
{
    const auto images = stack_images(data.images);
    const auto labels = joint_label_tensor(data.spec, data.labels);
    const auto n = images.size(0);
    const auto n_hold = static_cast<int64_t>(static_cast<double>(n) * config.holdout);
    if (n - n_hold < config.batch || n_hold < 1)
        throw std::invalid_argument("dataset too small to train the feature extractor");

    std::vector<int64_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(config.seed);
    std::shuffle(order.begin(), order.end(), rng);
    const auto perm = torch::tensor(order, torch::kInt64);
    const auto hold_idx = perm.narrow(0, 0, n_hold);
    const auto train_idx = perm.narrow(0, n_hold, n - n_hold);

    FeatureNet net(data.spec.joint_count(), derive_seed(config.seed, 1));
    torch::optim::Adam opt(net->parameters(), torch::optim::AdamOptions(config.lr));
    const auto n_train = train_idx.size(0);
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::vector<int64_t> ep(static_cast<std::size_t>(n_train));
        std::iota(ep.begin(), ep.end(), 0);
        std::shuffle(ep.begin(), ep.end(), rng);
        const auto ep_idx = train_idx.index_select(0, torch::tensor(ep, torch::kInt64));
        double total = 0.0;
        int64_t batches = 0;
        for (int64_t i = 0; i + config.batch <= n_train; i += config.batch) {
            const auto idx = ep_idx.narrow(0, i, config.batch);
            const auto loss = torch::cross_entropy_loss(net->forward(images.index_select(0, idx)),
                                                        labels.index_select(0, idx));
            opt.zero_grad();
            loss.backward();
            opt.step();
            total += loss.item<double>();
            ++batches;
        }
        if (log)
            log("extractor epoch " + std::to_string(epoch) + " loss " + std::to_string(total / batches));
    }

    FeatureExtractor provisional(data.spec, net, 0.0);
    const double acc = extractor_accuracy(provisional, images.index_select(0, hold_idx), labels.index_select(0, hold_idx));
    if (log)
        log("extractor holdout accuracy " + std::to_string(acc));
    return {data.spec, net, acc};
}

} // namespace strata
