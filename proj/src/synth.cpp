#include "strata/synth.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace strata {

namespace {

constexpr int kSupersample = 4;

// Uniform in [-1, 1) from the top 53 bits.
double signed_unit(std::mt19937_64& rng)
{
    return static_cast<double>(rng() >> 11) * 0x1.0p-53 * 2.0 - 1.0;
}

struct Placement {
    double cx, cy, radius;
    double hue, value;
};

Placement place(const FactorSpec& spec, const FactorLabels& labels)
{
    const double t = spec.coarse_count == 1 ? 0.5
                                            : static_cast<double>(labels.coarse) / (spec.coarse_count - 1);
    Placement p{};
    p.cx = 0.3 + 0.4 * t;
    p.cy = 0.7 - 0.4 * t;
    p.radius = labels.coarse % 2 == 0 ? 0.16 : 0.27;

    // Jitter draws happen in a fixed order regardless of the labels, so that
    // changing one factor never shifts the perturbations of another.
    std::mt19937_64 rng(labels.jitter_seed);
    const double jx = signed_unit(rng);
    const double jy = signed_unit(rng);
    const double js = signed_unit(rng);
    const double jh = signed_unit(rng);
    const double jv = signed_unit(rng);

    p.cx += 0.02 * jx;
    p.cy += 0.02 * jy;
    p.radius *= 1.0 + 0.05 * js;
    p.hue = palette_hue(spec, labels.fine) + 0.05 / spec.fine_count * jh;
    p.value = 0.9 + 0.05 * jv;
    return p;
}

// Shape membership in coordinates normalised by the object radius.
bool inside(int shape, double dx, double dy)
{
    switch (shape) {
    case 0: return dx * dx + dy * dy <= 1.0;
    case 1: return std::max(std::abs(dx), std::abs(dy)) <= 0.8;
    case 2: return dy <= 0.8 && std::abs(dx) <= 0.95 * (dy + 0.9) / 1.7;
    case 3:
        return (std::abs(dx) <= 0.3 && std::abs(dy) <= 0.95) || (std::abs(dy) <= 0.3 && std::abs(dx) <= 0.95);
    case 4: return std::abs(dx) + std::abs(dy) <= 1.0;
    case 5: {
        const double r2 = dx * dx + dy * dy;
        return r2 <= 1.0 && r2 >= 0.3;
    }
    default: return false;
    }
}

std::array<double, 3> hsv_to_rgb(double h, double s, double v)
{
    h = h - std::floor(h);
    const double x = h * 6.0;
    const int sector = static_cast<int>(x) % 6;
    const double f = x - std::floor(x);
    const double p = v * (1 - s);
    const double q = v * (1 - s * f);
    const double t = v * (1 - s * (1 - f));
    switch (sector) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
    }
}

void check_labels(const FactorSpec& spec, const FactorLabels& labels)
{
    auto check = [](int v, int n, const char* what) {
        if (v < 0 || v >= n)
            throw std::out_of_range(std::string(what) + " index " + std::to_string(v) + " outside [0,"
                                    + std::to_string(n) + ")");
    };
    check(labels.coarse, spec.coarse_count, "coarse");
    check(labels.medium, spec.medium_count, "medium");
    check(labels.fine, spec.fine_count, "fine");
}

} // namespace

void FactorSpec::validate() const
{
    if (coarse_count < 1 || medium_count < 1 || fine_count < 1)
        throw std::invalid_argument("factor counts must be positive");
    if (medium_count > kMaxShapes)
        throw std::invalid_argument("at most " + std::to_string(kMaxShapes) + " medium (shape) values");
    if (image_size < 8)
        throw std::invalid_argument("image_size must be at least 8");
}

nlohmann::json FactorSpec::to_json() const
{
    return {{"coarse_count", coarse_count},
            {"medium_count", medium_count},
            {"fine_count", fine_count},
            {"image_size", image_size}};
}

FactorSpec FactorSpec::from_json(const nlohmann::json& j)
{
    FactorSpec s;
    s.coarse_count = j.at("coarse_count").get<int>();
    s.medium_count = j.at("medium_count").get<int>();
    s.fine_count = j.at("fine_count").get<int>();
    s.image_size = j.at("image_size").get<int>();
    s.validate();
    return s;
}

int joint_label(const FactorSpec& spec, const FactorLabels& labels)
{
    return (labels.coarse * spec.medium_count + labels.medium) * spec.fine_count + labels.fine;
}

double palette_hue(const FactorSpec& spec, int fine)
{
    return static_cast<double>(fine) / spec.fine_count;
}

std::vector<float> object_coverage(const FactorSpec& spec, const FactorLabels& labels)
{
    spec.validate();
    check_labels(spec, labels);
    const Placement p = place(spec, labels);
    const int n = spec.image_size;
    std::vector<float> cov(static_cast<std::size_t>(n) * n, 0.0F);
    const double step = 1.0 / (n * kSupersample);
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            int hits = 0;
            for (int sy = 0; sy < kSupersample; ++sy) {
                for (int sx = 0; sx < kSupersample; ++sx) {
                    const double u = (x * kSupersample + sx + 0.5) * step;
                    const double v = (y * kSupersample + sy + 0.5) * step;
                    hits += inside(labels.medium, (u - p.cx) / p.radius, (v - p.cy) / p.radius) ? 1 : 0;
                }
            }
            cov[static_cast<std::size_t>(y) * n + x] = static_cast<float>(hits) / (kSupersample * kSupersample);
        }
    }
    return cov;
}

Image render_scene(const FactorSpec& spec, const FactorLabels& labels)
{
    const auto cov = object_coverage(spec, labels);
    const Placement p = place(spec, labels);
    const auto rgb = hsv_to_rgb(p.hue, 0.85, p.value);
    const int n = spec.image_size;
    Image img(n, n);
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            const float a = cov[static_cast<std::size_t>(y) * n + x];
            for (int c = 0; c < 3; ++c)
                img.at(y, x, c) = a * static_cast<float>(rgb[c]) + (1.0F - a) * kBackground[c];
        }
    }
    return img;
}

std::vector<FactorLabels> sample_labels(const FactorSpec& spec, int n, std::uint64_t seed)
{
    if (n < 1)
        throw std::invalid_argument("dataset size must be at least 1");
    spec.validate();
    std::mt19937_64 rng(seed);
    std::vector<FactorLabels> out(static_cast<std::size_t>(n));
    for (auto& l : out) {
        l.coarse = static_cast<int>(rng() % static_cast<std::uint64_t>(spec.coarse_count));
        l.medium = static_cast<int>(rng() % static_cast<std::uint64_t>(spec.medium_count));
        l.fine = static_cast<int>(rng() % static_cast<std::uint64_t>(spec.fine_count));
        l.jitter_seed = rng();
    }
    return out;
}

Dataset generate_dataset(const FactorSpec& spec, int n, std::uint64_t seed)
{
    Dataset d{spec, {}, sample_labels(spec, n, seed)};
    d.images.reserve(d.labels.size());
    for (const auto& l : d.labels)
        d.images.push_back(render_scene(spec, l));
    return d;
}

void save_dataset(const Dataset& data, const std::filesystem::path& dir)
{
    namespace fs = std::filesystem;
    fs::create_directories(dir / "images");
    std::ofstream csv(dir / "labels.csv");
    csv << "index,coarse,medium,fine,jitter_seed\n";
    char name[32];
    for (std::size_t i = 0; i < data.labels.size(); ++i) {
        const auto& l = data.labels[i];
        csv << i << ',' << l.coarse << ',' << l.medium << ',' << l.fine << ',' << l.jitter_seed << '\n';
        std::snprintf(name, sizeof(name), "%06zu.png", i);
        write_png(dir / "images" / name, data.images[i]);
    }
    std::ofstream(dir / "spec.json") << data.spec.to_json().dump(2) << '\n';
}

Dataset load_dataset(const std::filesystem::path& dir)
{
    std::ifstream sj(dir / "spec.json");
    if (!sj)
        throw std::runtime_error("no dataset at " + dir.string());
    Dataset d;
    d.spec = FactorSpec::from_json(nlohmann::json::parse(sj));

    std::ifstream csv(dir / "labels.csv");
    std::string line;
    std::getline(csv, line);
    char name[32];
    while (std::getline(csv, line)) {
        if (line.empty())
            continue;
        std::istringstream row(line);
        std::string field;
        std::array<std::string, 5> f;
        for (auto& s : f)
            std::getline(row, s, ',');
        FactorLabels l{std::stoi(f[1]), std::stoi(f[2]), std::stoi(f[3]), std::stoull(f[4])};
        check_labels(d.spec, l);
        std::snprintf(name, sizeof(name), "%06zu.png", static_cast<std::size_t>(std::stoull(f[0])));
        d.images.push_back(read_png(dir / "images" / name));
        d.labels.push_back(l);
    }
    return d;
}

torch::Tensor joint_label_tensor(const FactorSpec& spec, const std::vector<FactorLabels>& labels)
{
    std::vector<int64_t> idx;
    idx.reserve(labels.size());
    for (const auto& l : labels)
        idx.push_back(joint_label(spec, l));
    return torch::tensor(idx, torch::kInt64);
}

} // namespace strata
