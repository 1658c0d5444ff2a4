// Acceptance run: one PASS/FAIL line per acceptance criterion, exit status 0
// only when every selected criterion passes.

#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "pipeline_util.hpp"
#include "strata/image.hpp"
#include "strata/metrics.hpp"
#include "strata/pipeline.hpp"
#include "strata/sweep.hpp"
#include "strata/synth.hpp"
#include "strata/text.hpp"
#include "test_util.hpp"

using namespace strata;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::vector<std::string> notes;

    /// Records a sub-check; the criterion fails if any sub-check fails.
    void expect(bool ok, const std::string& what)
    {
        pass = pass && ok;
        notes.push_back(std::string(ok ? "ok   " : "FAIL ") + what);
    }
    void note(const std::string& what) { notes.push_back("     " + what); }
};

std::string fmt(double v, int precision = 4)
{
    std::ostringstream s;
    s << std::setprecision(precision) << v;
    return s.str();
}

// ---------------------------------------------------------------------------
// Tiny workspace shared by the algebra and determinism criteria.

struct TinyWorkspace {
    TempDir dir{"strata-acceptance"};
    fs::path config = write_config(dir / "config.json", tiny_run_config(dir / "ws"));
    bool ok = true;
    std::string failure;

    TinyWorkspace()
    {
        for (const auto& cmd : pipeline_commands()) {
            const auto r = run_cli({cmd, "--config", config.string()});
            if (r.code != 0) {
                ok = false;
                failure = cmd + ": " + r.err;
                return;
            }
        }
    }
};

TinyWorkspace& tiny()
{
    static TinyWorkspace ws;
    return ws;
}

// ---------------------------------------------------------------------------

Outcome truncation_algebra()
{
    Outcome out;
    const std::array<double, 5> phis{0.0, 0.25, 0.5, 0.75, 1.0};
    std::mt19937_64 rng(2024);
    double worst = 0.0;
    bool endpoints_exact = true;
    for (int trial = 0; trial < 1000; ++trial) {
        const int dim = 1 + static_cast<int>(rng() % 64);
        const double phi = phis[rng() % phis.size()];
        ClusterCenters c;
        ClusterAssignment a;
        for (std::size_t l = 0; l < 3; ++l) {
            const int k = 1 + static_cast<int>(rng() % 8);
            c.levels[l].k = k;
            c.levels[l].centers = seeded_normal({k, dim}, rng()) * 3.0;
            a.index[l] = static_cast<int>(rng() % static_cast<std::uint64_t>(k));
        }
        const auto w = seeded_normal({dim}, rng()) * 3.0;
        const auto e = truncate_multilevel(w, c, a, phi);
        endpoints_exact = endpoints_exact && torch::equal(e.passthrough, w);
        for (std::size_t l = 0; l < 3; ++l) {
            const auto center = c.levels[l].centers[a.index[l]];
            // Oracle in float64 from the defining formula.
            const auto expect = (1.0 - phi) * w.to(torch::kFloat64) + phi * center.to(torch::kFloat64);
            worst = std::max(worst, (e.per_level[l].to(torch::kFloat64) - expect).abs().max().item<double>());
            if (phi == 1.0)
                endpoints_exact = endpoints_exact && torch::equal(e.per_level[l], center);
            if (phi == 0.0)
                endpoints_exact = endpoints_exact && torch::equal(e.per_level[l], w);
        }
    }
    out.expect(worst <= 1e-6, "1000 random cases, max |level - ((1-phi)w + phi c)| = " + fmt(worst, 3));
    out.expect(endpoints_exact, "phi=0 gives w and phi=1 gives the center, bit for bit");

    auto& t = tiny();
    if (!t.ok) {
        out.expect(false, "tiny pipeline failed: " + t.failure);
        return out;
    }
    int identical = 0;
    const int seeds = 10;
    const auto cfg = load_config_file(t.config);
    const auto g = load_generator(cfg);
    for (int seed = 0; seed < seeds; ++seed) {
        const auto dir = t.dir / ("phi0-" + std::to_string(seed));
        const auto r = run_cli({"truncate", "--config", t.config.string(), "--phi", "0", "--seed",
                                std::to_string(seed), "--out", dir.string()});
        if (r.code != 0)
            continue;
        torch::NoGradGuard ng;
        const auto direct = encode_png(image_from_tensor(g.generate(latent_from_seed(g, static_cast<std::uint64_t>(seed)))));
        const auto plain = read_bytes(dir / "untruncated.png");
        const std::string direct_bytes(direct.begin(), direct.end());
        identical += plain == direct_bytes && read_bytes(dir / "multilevel.png") == plain
                     && read_bytes(dir / "global.png") == plain;
    }
    out.expect(identical == seeds, "truncate --phi 0 PNGs equal direct generation for " + std::to_string(identical)
                                       + "/" + std::to_string(seeds) + " seeds");
    return out;
}

Outcome precision_recall_oracle()
{
    Outcome out;
    std::mt19937_64 rng(77);
    std::normal_distribution<double> normal;
    int matched = 0;
    for (int inst = 0; inst < 100; ++inst) {
        const int k = 1 + inst % 3;
        const int d = 1 + static_cast<int>(rng() % 8);
        const int nr = k + 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(32 - k));
        const int ng = k + 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(32 - k));
        FeatureSet real, gen;
        real.values.resize(nr, d);
        gen.values.resize(ng, d);
        const double shift = 0.5 * normal(rng);
        for (int i = 0; i < nr; ++i)
            for (int j = 0; j < d; ++j)
                real.values(i, j) = normal(rng);
        for (int i = 0; i < ng; ++i)
            for (int j = 0; j < d; ++j)
                gen.values(i, j) = normal(rng) + shift;
        const auto got = precision_recall(real, gen, k);
        const auto want = oracle::brute_force_pr(real.values, gen.values, k);
        matched += got.precision == want.precision && got.recall == want.recall;
    }
    out.expect(matched == 100, std::to_string(matched) + "/100 random instances match the brute-force oracle exactly");

    FeatureSet real, gen;
    real.values.resize(3, 1);
    real.values << 0.0, 1.0, 2.0;
    gen.values.resize(2, 1);
    gen.values << 0.5, 10.0;
    const auto pr = precision_recall(real, gen, 1);
    out.expect(pr.precision == 0.5 && pr.recall == 1.0,
               "1-D example: precision " + fmt(pr.precision) + ", recall " + fmt(pr.recall));
    return out;
}

Outcome fid_correctness()
{
    Outcome out;
    std::mt19937_64 rng(31);
    std::normal_distribution<double> normal;
    const auto random_set = [&](int n, int d) {
        FeatureSet s;
        s.values.resize(n, d);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j)
                s.values(i, j) = normal(rng) * (1.0 + 0.1 * j);
        return s;
    };
    const auto a = random_set(200, 16);
    const double self = fid(a, a);
    out.expect(std::abs(self) < 1e-6, "identical 16-d sets: FID " + fmt(self, 3));

    GaussianMoments r{Eigen::VectorXd::Constant(1, 0.0), Eigen::MatrixXd::Constant(1, 1, 1.0)};
    GaussianMoments g{Eigen::VectorXd::Constant(1, 1.0), Eigen::MatrixXd::Constant(1, 1, 4.0)};
    const double uni = frechet_distance(r, g);
    out.expect(std::abs(uni - 2.0) <= 1e-4, "univariate (0,1) vs (1,4): " + fmt(uni, 10));

    double worst_sym = 0.0, worst_shift = 0.0, worst_both = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const auto x = random_set(120, 16);
        auto y = random_set(150, 16);
        Eigen::RowVectorXd c(16);
        for (int j = 0; j < 16; ++j)
            c(j) = 2.0 * normal(rng);
        const double base = fid(x, y);
        worst_sym = std::max(worst_sym, std::abs(base - fid(y, x)));
        FeatureSet xc = x, yc = y;
        xc.values.rowwise() += c;
        yc.values.rowwise() += c;
        worst_both = std::max(worst_both, std::abs(fid(xc, yc) - base));
        // Gen shift by c changes the mean term from ||m||² to ||m + c||²; with
        // the means equalised first that difference is exactly ||c||².
        FeatureSet y0 = y;
        y0.values.rowwise() += (x.values.colwise().mean() - y.values.colwise().mean());
        FeatureSet y0c = y0;
        y0c.values.rowwise() += c;
        worst_shift = std::max(worst_shift, std::abs(fid(x, y0c) - fid(x, y0) - c.squaredNorm()));
    }
    out.expect(worst_sym <= 1e-4, "symmetry over 20 random pairs, max diff " + fmt(worst_sym, 3));
    out.expect(worst_both <= 1e-4, "common translation leaves FID unchanged, max diff " + fmt(worst_both, 3));
    out.expect(worst_shift <= 1e-4, "gen shift by c adds ||c||^2, max error " + fmt(worst_shift, 3));
    return out;
}

Outcome gradient_checks()
{
    Outcome out;
    const auto real = seeded_normal({16, 4}, 1, torch::kFloat64);
    const auto fake = seeded_normal({16, 4}, 2, torch::kFloat64);
    const auto unit = torch::tensor({0.5, 0.5, 0.5, 0.5}, torch::kFloat64);
    const auto zero_case = gradient_penalty([&](const torch::Tensor& w) { return w.matmul(unit); }, real, fake, 3);
    out.expect(std::abs(zero_case.item<double>()) <= 1e-5,
               "unit-gradient linear critic: penalty " + fmt(zero_case.item<double>(), 3));
    const CriticFn constant = [](const torch::Tensor& w) { return torch::zeros({w.size(0)}, w.options()); };
    const double lambda = 10.0;
    const auto cl = critic_loss(constant, real, fake, lambda, 3);
    out.expect(std::abs(cl.total.item<double>() - lambda) <= 1e-5,
               "constant critic: loss " + fmt(cl.total.item<double>(), 10) + " vs lambda_gp " + fmt(lambda));

    double worst_critic = 0.0, worst_joint = 0.0;
    for (std::uint64_t s = 0; s < 50; ++s) {
        worst_critic = std::max(worst_critic, gradcheck::critic_loss_error(1000 + s));
        worst_joint = std::max(worst_joint, gradcheck::joint_loss_error(2000 + s));
    }
    out.expect(worst_critic < 1e-3, "critic_loss vs central differences, 50 points, max rel. error " + fmt(worst_critic, 3));
    out.expect(worst_joint < 1e-3,
               "generator_classifier_loss vs central differences, 50 points, max rel. error " + fmt(worst_joint, 3));
    return out;
}

Outcome gmm_em()
{
    Outcome out;
    std::mt19937_64 rng(8);
    std::normal_distribution<double> normal;
    bool monotone = true;
    int runs = 0;
    for (int trial = 0; trial < 12; ++trial) {
        const int n = 400, d = 1 + trial % 4, k = 1 + trial % 5;
        RowMatrix x(n, d);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j)
                x(i, j) = normal(rng) + 4.0 * static_cast<double>(i % 3);
        const auto fit = gmm_em_fit(x, k, 60, 0.0, rng());
        for (std::size_t i = 1; i < fit.log_likelihood.size(); ++i)
            monotone = monotone && fit.log_likelihood[i] >= fit.log_likelihood[i - 1] - 1e-9;
        ++runs;
    }
    out.expect(monotone, "log-likelihood non-decreasing on " + std::to_string(runs) + " runs");

    RowMatrix two(2000, 1);
    std::uniform_real_distribution<double> jitter(-0.1, 0.1);
    for (int i = 0; i < 2000; ++i)
        two(i, 0) = (i % 2 ? 5.0 : -5.0) + jitter(rng);
    const auto fit = gmm_em_fit(two, 2, 100, 1e-10, 3);
    const double lo = std::min(fit.means(0, 0), fit.means(1, 0));
    const double hi = std::max(fit.means(0, 0), fit.means(1, 0));
    out.expect(std::abs(lo + 5.0) <= 1e-2 && std::abs(hi - 5.0) <= 1e-2,
               "separated 1-D clusters: means " + fmt(lo, 6) + ", " + fmt(hi, 6));

    RowMatrix one(50, 3);
    for (int i = 0; i < 50; ++i)
        for (int j = 0; j < 3; ++j)
            one(i, j) = normal(rng) * (j + 1);
    const auto single = gmm_em_fit(one, 1, 10, 1e-9, 1);
    double mean_err = 0.0, var_err = 0.0;
    for (int j = 0; j < 3; ++j) {
        double m = 0.0;
        for (int i = 0; i < 50; ++i)
            m += one(i, j);
        m /= 50;
        double v = 0.0;
        for (int i = 0; i < 50; ++i)
            v += (one(i, j) - m) * (one(i, j) - m);
        v /= 50;
        mean_err = std::max(mean_err, std::abs(single.means(0, j) - m));
        var_err = std::max(var_err, std::abs(single.variances(0, j) - v));
    }
    out.expect(mean_err <= 1e-12 && var_err <= 1e-12 && single.weights(0) == 1.0,
               "k=1: mean error " + fmt(mean_err, 3) + ", variance error " + fmt(var_err, 3));
    return out;
}

Outcome level_isolation()
{
    Outcome out;
    std::mt19937_64 rng(99);
    int isolated = 0;
    int dataflow = 0;
    const auto spec = GeneratorSpec::tiny(6);
    const FrozenGenerator g(spec, Generator(spec, 4));
    for (int trial = 0; trial < 100; ++trial) {
        const int layers = 4 + static_cast<int>(rng() % 9);
        const int coarse = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(layers - 3));
        const int medium = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(layers - 2 - coarse));
        const auto p = LevelPartition::make(layers, coarse, medium);
        const int dim = 1 + static_cast<int>(rng() % 16);
        const bool batched = rng() % 2 == 0;
        const auto shape = batched ? std::vector<int64_t>{3, dim} : std::vector<int64_t>{dim};
        ExtendedLatent e;
        for (auto& t : e.per_level)
            t = seeded_normal(shape, rng());
        e.passthrough = seeded_normal(shape, rng());
        const auto level = kSemanticLevels[rng() % 3];
        auto changed = e;
        changed.at(level) = seeded_normal(shape, rng());
        const auto before = expand_to_layers(e, p);
        const auto after = expand_to_layers(changed, p);
        bool ok = true;
        for (int j = 0; j < layers; ++j) {
            const bool same = torch::equal(before[static_cast<std::size_t>(j)], after[static_cast<std::size_t>(j)]);
            ok = ok && (p[j] == level ? !same : same);
        }
        isolated += ok;

        // Same check through the synthesis network of a 4-layer generator:
        // activations of layers before the changed group stay bit-identical.
        const auto gp = LevelPartition::make(4, 1, 1);
        ExtendedLatent ge;
        for (auto& t : ge.per_level)
            t = seeded_normal({6}, rng());
        ge.passthrough = seeded_normal({6}, rng());
        auto gc = ge;
        gc.at(level) = seeded_normal({6}, rng());
        torch::NoGradGuard ng;
        const auto la = g.synthesize_layers(expand_to_layers(ge, gp));
        const auto lb = g.synthesize_layers(expand_to_layers(gc, gp));
        const int first = gp.layers_of(level).front();
        bool flow = true;
        for (int j = 0; j < first; ++j)
            flow = flow && torch::equal(la[static_cast<std::size_t>(j)], lb[static_cast<std::size_t>(j)]);
        dataflow += flow;
    }
    out.expect(isolated == 100, std::to_string(isolated) + "/100 random cases change only the edited level's style inputs");
    out.expect(dataflow == 100, std::to_string(dataflow) + "/100 cases keep earlier synthesis activations bit-identical");
    return out;
}

// ---------------------------------------------------------------------------
// Toy end to end on the default configuration, reusing finished stages.

// FID of the pretrained default generator against 10⁴ training images in the
// extractor feature space: 134.0 on the first successful run with the default
// seeds, pinned with a 10% margin.
constexpr double kPinnedPretrainFid = 148.0;

nlohmann::json comparable(nlohmann::json config)
{
    config.erase("workspace");
    config.erase("out");
    return config;
}

bool stage_current(const RunConfig& config, const std::string& stage)
{
    const auto file = config.stage_dir(stage) / "run.json";
    if (!fs::exists(file))
        return false;
    const auto rec = nlohmann::json::parse(read_text(file));
    return rec.contains("config") && comparable(rec["config"]) == comparable(config.to_json());
}

Outcome toy_end_to_end(const fs::path& workspace)
{
    Outcome out;
    RunConfig base;
    base.workspace = workspace.string();
    RunConfig sweep_cfg = base;
    sweep_cfg.n = 2048;

    const LogFn log = [](const std::string& line) { std::cerr << "  [e2e] " << line << "\n"; };
    const std::vector<std::pair<std::string, std::function<void(const RunConfig&, const LogFn&)>>> stages{
        {"synth-data", run_synth_data}, {"pretrain", run_pretrain}, {"train-levels", run_train_levels},
        {"centers", run_centers},       {"sweep", run_sweep}};
    bool upstream_changed = false;
    for (const auto& [name, run] : stages) {
        const auto& cfg = name == "sweep" ? sweep_cfg : base;
        if (!upstream_changed && stage_current(cfg, name)) {
            out.note(name + ": reused " + cfg.stage_dir(name).string());
            continue;
        }
        const auto t0 = std::chrono::steady_clock::now();
        try {
            run(cfg, log);
        } catch (const std::exception& e) {
            out.expect(false, name + " failed: " + e.what());
            return out;
        }
        upstream_changed = true;
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        out.note(name + ": ran in " + fmt(secs, 4) + " s");
    }

    const auto pre = nlohmann::json::parse(read_text(base.stage_dir("pretrain") / "run.json"));
    const double acc = pre.value("extractor_accuracy", 0.0);
    out.note("feature extractor hold-out accuracy " + fmt(acc) + (acc >= FeatureExtractor::kMinAccuracy ? "" : " (below 0.9 gate)"));
    const auto hash = pre.at("hashes").at("generator").get<std::string>();

    // (a) self-consistency of every level classifier.
    const auto levels = nlohmann::json::parse(read_text(base.stage_dir("train-levels") / "run.json"));
    const auto ks = base.cluster_counts();
    for (std::size_t l = 0; l < 3; ++l) {
        const std::string name(to_string(kSemanticLevels[l]));
        const double sc = levels.at("self_consistency").at(name).get<double>();
        const double bar = 2.0 / ks[l];
        out.note(name + " self-consistency above chance 1/k: " + std::string(sc > 1.0 / ks[l] ? "yes" : "no"));
        out.expect(sc > bar, "(a) " + name + " self-consistency " + fmt(sc) + " > 2/k = " + fmt(bar));
    }

    const auto ws = Workspace::load(base);
    const auto extractor = load_extractor(base);
    const bool frozen = ws.generator.freeze_hash() == hash && ws.generator.current_hash() == hash
                        && levels.at("hashes").at("generator_after") == hash;

    // (b) coarse purity against the extractor-predicted coarse factor.
    const auto purity = level_purity(ws.models, ws.generator, ws.partition, extractor, base.centers_n, base.centers_seed);
    out.expect(purity[0] >= 0.6, "(b) coarse purity " + fmt(purity[0]) + " >= 0.6 over " + std::to_string(base.centers_n)
                                     + " samples (medium " + fmt(purity[1]) + ", fine " + fmt(purity[2]) + ")");

    // (c) sweep at n = 2048.
    SweepResult sweep;
    {
        std::istringstream csv(read_text(sweep_cfg.stage_dir("sweep") / "sweep.csv"));
        std::string line;
        std::getline(csv, line);
        while (std::getline(csv, line)) {
            std::istringstream row(line);
            std::string cell;
            std::vector<std::string> cells;
            while (std::getline(row, cell, ','))
                cells.push_back(cell);
            sweep.rows.push_back({cells.at(0), std::stod(cells.at(1)), std::stod(cells.at(2)), std::stod(cells.at(3)),
                                  std::stod(cells.at(4)), std::stoll(cells.at(5)), std::stoull(cells.at(6))});
        }
    }
    for (const std::string method : {"ours", "global"}) {
        std::vector<SweepRow> interior;
        for (const auto& r : sweep.method_rows(method))
            if (r.phi > 0.0 && r.phi < 1.0)
                interior.push_back(r);
        if (interior.empty()) {
            out.expect(false, "(c) no interior rows for " + method);
            continue;
        }
        const auto& lo = interior.front();
        const auto& hi = interior.back();
        out.expect(hi.recall <= lo.recall, "(c) " + method + ": recall(phi=" + fmt(hi.phi) + ") " + fmt(hi.recall)
                                               + " <= recall(phi=" + fmt(lo.phi) + ") " + fmt(lo.recall));
    }
    const auto cmp = compare_precision(sweep);
    std::string phis;
    for (double p : cmp.winning_phis)
        phis += " " + fmt(p);
    out.expect(cmp.wins >= 6, "(c) multi-level precision >= global at equal-or-higher recall on " + std::to_string(cmp.wins)
                                  + "/" + std::to_string(cmp.points) + " phi points (need 6; "
                                  + std::to_string(cmp.uncontested) + " uncontested; phi:" + phis + ")");
    // Diagnostic only: the same-phi pairing, which ignores recall.
    const auto ours_rows = sweep.method_rows("ours");
    const auto global_rows = sweep.method_rows("global");
    int same_phi = 0, interior = 0;
    for (std::size_t i = 0; i < ours_rows.size() && i < global_rows.size(); ++i) {
        if (ours_rows[i].phi <= 0.0 || ours_rows[i].phi >= 1.0)
            continue;
        ++interior;
        same_phi += ours_rows[i].precision >= global_rows[i].precision;
    }
    out.note("same-phi precision ours >= global on " + std::to_string(same_phi) + "/" + std::to_string(interior)
             + " interior points (not the criterion)");
    for (const auto& r : sweep.rows)
        out.note("sweep " + r.method + " phi " + fmt(r.phi) + " precision " + fmt(r.precision) + " recall "
                 + fmt(r.recall) + " fid " + fmt(r.fid));

    // Frozen generator hash across every stage of the run.
    bool same_hash = frozen;
    for (const auto* stage : {"train-levels", "centers", "sweep"}) {
        const auto rec = nlohmann::json::parse(read_text(base.stage_dir(stage) / "run.json"));
        same_hash = same_hash && rec.at("hashes").at("generator") == hash;
    }
    out.expect(same_hash, "generator hash " + hash.substr(0, 16) + " constant across pretrain, levels, centers, sweep");

    // Pretraining quality against the pinned baseline.
    const auto data = load_dataset(base.stage_dir("synth-data"));
    const auto images = stack_images(data.images);
    const auto real = extractor.extract(images);
    torch::Tensor generated;
    {
        torch::NoGradGuard ng;
        const auto w = sample_w(ws.generator, images.size(0), 4242);
        std::vector<torch::Tensor> parts;
        for (int64_t i = 0; i < w.size(0); i += 512)
            parts.push_back(ws.generator.generate(w.narrow(0, i, std::min<int64_t>(512, w.size(0) - i))));
        generated = torch::cat(parts);
    }
    const double pretrain_fid = fid(real, extractor.extract(generated));
    if (kPinnedPretrainFid > 0.0)
        out.note("pretrain FID (10^4 samples) " + fmt(pretrain_fid) + (pretrain_fid <= kPinnedPretrainFid ? " <= " : " > ")
                 + "pinned " + fmt(kPinnedPretrainFid));
    else
        out.note("pretrain FID (10^4 samples) " + fmt(pretrain_fid) + "; no pinned baseline");
    return out;
}

Outcome determinism()
{
    Outcome out;
    auto& t = tiny();
    if (!t.ok) {
        out.expect(false, "tiny pipeline failed: " + t.failure);
        return out;
    }
    const auto ws = t.dir / "ws";
    const auto before = snapshot(ws, {".csv", ".json"});
    int failures = 0;
    for (const auto& cmd : pipeline_commands())
        failures += run_cli({cmd, "--config", t.config.string()}).code != 0;
    const auto after = snapshot(ws, {".csv", ".json"});
    int identical = 0;
    for (const auto& [name, bytes] : before) {
        const auto it = after.find(name);
        identical += it != after.end() && it->second == bytes;
    }
    out.expect(failures == 0 && identical == static_cast<int>(before.size()) && after.size() == before.size(),
               "re-ran all " + std::to_string(pipeline_commands().size()) + " commands: " + std::to_string(identical) + "/"
                   + std::to_string(before.size()) + " CSV/JSON files byte-identical");

    std::set<std::string> hashes;
    for (const auto& cmd : pipeline_commands()) {
        const auto rec = nlohmann::json::parse(read_bytes(ws / cmd / "run.json"));
        if (rec.at("hashes").contains("generator"))
            hashes.insert(rec["hashes"]["generator"].get<std::string>());
        if (rec.at("hashes").contains("generator_after"))
            hashes.insert(rec["hashes"]["generator_after"].get<std::string>());
    }
    out.expect(hashes.size() == 1, "frozen generator hash constant across run records (" + std::to_string(hashes.size())
                                       + " distinct)");
    return out;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app("Runs the acceptance criteria and prints one PASS/FAIL line each.");
    std::string workspace = STRATA_ACCEPTANCE_WORKSPACE;
    std::vector<std::string> only;
    bool verbose = false;
    app.add_option("--workspace", workspace, "workspace for the toy end-to-end run (finished stages are reused)");
    app.add_option("--only", only, "run only the named criteria");
    app.add_flag("--verbose", verbose, "print every sub-check");
    CLI11_PARSE(app, argc, argv);
    torch::set_num_threads(1);

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"truncation-algebra", truncation_algebra},
        {"precision-recall-oracle", precision_recall_oracle},
        {"fid-correctness", fid_correctness},
        {"gradient-checks", gradient_checks},
        {"gmm-em", gmm_em},
        {"level-isolation", level_isolation},
        {"toy-end-to-end", [&] { return toy_end_to_end(workspace); }},
        {"determinism-provenance", determinism},
    };
    for (const auto& name : only) {
        if (std::none_of(criteria.begin(), criteria.end(), [&](const auto& c) { return c.first == name; })) {
            std::cerr << "unknown criterion " << name << "\n";
            return 2;
        }
    }

    int failed = 0;
    for (const auto& [name, run] : criteria) {
        if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end())
            continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o.expect(false, std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        failed += !o.pass;
        std::cout << (o.pass ? "PASS " : "FAIL ") << name << " (" << fmt(secs, 3) << " s)\n";
        for (const auto& n : o.notes)
            if (verbose || !o.pass || n.rfind("ok", 0) != 0)
                std::cout << "    " << n << "\n";
        std::cout.flush();
    }
    std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << "\n";
    return failed == 0 ? 0 : 1;
}
