#include "strata/pipeline.hpp"

#include <sstream>

#include "strata/checkpoint.hpp"
#include "strata/errors.hpp"
#include "strata/image.hpp"
#include "strata/metrics.hpp"
#include "strata/plot.hpp"
#include "strata/random.hpp"
#include "strata/sweep.hpp"
#include "strata/synth.hpp"
#include "strata/text.hpp"

namespace strata {

namespace fs = std::filesystem;

namespace {

fs::path prepare(const RunConfig& config, const std::string& command)
{
    const auto dir = config.output_dir(command);
    fs::create_directories(dir);
    return dir;
}

std::vector<float> to_floats(const torch::Tensor& t)
{
    auto c = t.to(torch::kFloat32).contiguous();
    return {c.data_ptr<float>(), c.data_ptr<float>() + c.numel()};
}

RowMatrix to_matrix(const torch::Tensor& t)
{
    auto c = t.to(torch::kFloat64).contiguous();
    return Eigen::Map<const RowMatrix>(c.data_ptr<double>(), c.size(0), c.size(1));
}

torch::Tensor generate_images(const FrozenGenerator& g, const torch::Tensor& w)
{
    torch::NoGradGuard no_grad;
    std::vector<torch::Tensor> parts;
    for (int64_t i = 0; i < w.size(0); i += 256)
        parts.push_back(g.generate(w.narrow(0, i, std::min<int64_t>(256, w.size(0) - i))));
    return torch::cat(parts);
}

std::vector<LayerGroup> selected_levels(const RunConfig& config)
{
    if (config.level == "all")
        return {kSemanticLevels.begin(), kSemanticLevels.end()};
    return {parse_layer_group(config.level)};
}

Dataset load_training_data(const RunConfig& config)
{
    auto data = load_dataset(config.stage_dir("synth-data"));
    if (!(data.spec == config.factor_spec()))
        throw ConfigError("dataset in " + config.stage_dir("synth-data").string()
                          + " was generated with different factor settings");
    return data;
}

nlohmann::json latent_json(const ExtendedLatent& e)
{
    nlohmann::json j;
    for (std::size_t l = 0; l < 3; ++l)
        j[std::string(to_string(kSemanticLevels[l]))] = to_floats(e.per_level[l]);
    j["passthrough"] = to_floats(e.passthrough);
    return j;
}

nlohmann::json level_hashes(const LevelModels& models)
{
    nlohmann::json j;
    for (const auto& m : models)
        j[std::string(to_string(m.level))] = m.hash();
    return j;
}

} // namespace

FrozenGenerator load_generator(const RunConfig& config)
{
    auto g = FrozenGenerator::load(config.stage_dir("pretrain") / "generator");
    if (!(g.spec() == config.generator_spec()))
        throw ConfigError("generator checkpoint does not match the configured generator settings");
    return g;
}

LevelModels load_levels(const RunConfig& config)
{
    LevelModels models;
    for (std::size_t l = 0; l < 3; ++l)
        models[l] = LevelModel::load(config.stage_dir("train-levels") / std::string(to_string(kSemanticLevels[l])));
    return models;
}

FeatureExtractor load_extractor(const RunConfig& config)
{
    return FeatureExtractor::load(config.stage_dir("pretrain") / "extractor");
}

Workspace Workspace::load(const RunConfig& config)
{
    return Workspace{load_generator(config), config.partition(), load_levels(config),
                     ClusterCenters::load(config.stage_dir("centers") / "centers.json")};
}

void write_run_record(const fs::path& dir, const std::string& command, const RunConfig& config,
                      const nlohmann::json& seeds, const nlohmann::json& hashes, const nlohmann::json& extra)
{
    nlohmann::json j = extra;
    j["command"] = command;
    j["config"] = config.to_json();
    j["seeds"] = seeds;
    j["hashes"] = hashes;
    write_text(dir / "run.json", j.dump(2) + "\n");
}

void run_synth_data(const RunConfig& config, const LogFn& log)
{
    const auto dir = prepare(config, "synth-data");
    const auto data = generate_dataset(config.factor_spec(), config.data_n, config.data_seed);
    save_dataset(data, dir);
    if (log)
        log("wrote " + std::to_string(config.data_n) + " images to " + dir.string());
    write_run_record(dir, "synth-data", config, {{"data_seed", config.data_seed}},
                     {{"labels.csv", sha256_hex(read_text(dir / "labels.csv"))}});
}

void run_pretrain(const RunConfig& config, const LogFn& log)
{
    const auto dir = prepare(config, "pretrain");
    const auto data = load_training_data(config);
    const auto images = stack_images(data.images);

    ExtractorConfig ec;
    ec.epochs = config.extractor_epochs;
    ec.seed = config.extractor_seed;
    const auto extractor = train_extractor(data, ec, log);
    const bool gate = extractor.holdout_accuracy() >= FeatureExtractor::kMinAccuracy;
    if (!gate && log)
        log("warning: extractor hold-out accuracy below " + format_real(FeatureExtractor::kMinAccuracy));
    extractor.save(dir / "extractor");

    const int fid_n = static_cast<int>(std::min<int64_t>(config.fid_n, images.size(0)));
    FidProbe probe;
    if (config.fid_every > 0 && fid_n > 1) {
        const auto real = extractor.extract(images.narrow(0, 0, fid_n));
        probe = [real, fid_n, &extractor, &config](const FrozenGenerator& g) {
            const auto w = g.map_latent(seeded_normal({fid_n, g.spec().z_dim}, derive_seed(config.pretrain_seed, 99)));
            return fid(real, extractor.extract(generate_images(g, w)));
        };
    }
    const auto result = pretrain(config.generator_spec(), images, config.pretrain_config(), probe, log);
    result.generator.save(dir / "generator");
    save_checkpoint(*result.discriminator, dir / "discriminator", {{"kind", "discriminator"}});

    std::ostringstream losses;
    losses << "step,d_loss,g_loss,r1\n";
    for (const auto& r : result.losses)
        losses << r.step << ',' << format_real(r.d_loss) << ',' << format_real(r.g_loss) << ',' << format_real(r.r1)
               << '\n';
    write_text(dir / "losses.csv", losses.str());
    std::ostringstream fids;
    fids << "step,fid\n";
    for (const auto& r : result.fid_log)
        fids << r.step << ',' << format_real(r.fid) << '\n';
    write_text(dir / "fid.csv", fids.str());

    const auto w = result.generator.map_latent(seeded_normal({16, config.z_dim}, derive_seed(config.pretrain_seed, 98)));
    write_png(dir / "samples.png", mosaic(unstack_images(generate_images(result.generator, w)), 4));

    write_run_record(dir, "pretrain", config,
                     {{"pretrain_seed", config.pretrain_seed}, {"extractor_seed", config.extractor_seed}},
                     {{"generator", result.generator.freeze_hash()},
                      {"discriminator", parameter_hash(*result.discriminator)},
                      {"extractor", extractor.id()}},
                     {{"extractor_accuracy", extractor.holdout_accuracy()}, {"extractor_gate_passed", gate}});
}

void run_train_levels(const RunConfig& config, const LogFn& log)
{
    const auto dir = prepare(config, "train-levels");
    const auto g = load_generator(config);
    const auto p = config.partition();
    const auto ks = config.cluster_counts();
    nlohmann::json hashes{{"generator", g.freeze_hash()}};
    nlohmann::json consistency = nlohmann::json::object();
    for (const auto level : selected_levels(config)) {
        const std::string name(to_string(level));
        const auto result = train_level(g, p, level, ks[level_index(level)], config.level_config(), log,
                                        dir / (name + "-aborted"));
        result.model.save(dir / name);
        std::ostringstream csv;
        csv << "iteration,critic_loss,gen_loss,ce_term\n";
        for (const auto& r : result.log)
            csv << r.iteration << ',' << format_real(r.critic_loss) << ',' << format_real(r.gen_loss) << ','
                << format_real(r.ce_term) << '\n';
        write_text(dir / name / "log.csv", csv.str());
        hashes[name] = result.model.hash();
        consistency[name] = result.self_consistency;
        if (log)
            log(name + " self-consistency " + format_real(result.self_consistency));
    }
    g.verify_unchanged();
    hashes["generator_after"] = g.current_hash();
    write_run_record(dir, "train-levels", config, {{"level_seed", config.level_seed}}, hashes,
                     {{"self_consistency", consistency}});
}

void run_centers(const RunConfig& config, const LogFn& log)
{
    const auto dir = prepare(config, "centers");
    const auto g = load_generator(config);
    const auto models = load_levels(config);
    const auto centers = compute_centers(models, g, config.partition(), config.centers_n, config.centers_seed);
    centers.save(dir / "centers.json");
    if (log) {
        for (std::size_t l = 0; l < 3; ++l) {
            std::string counts;
            for (auto c : centers.levels[l].counts)
                counts += " " + std::to_string(c);
            log(std::string(to_string(kSemanticLevels[l])) + " counts" + counts);
        }
    }
    const auto extractor = load_extractor(config);
    const auto purity = level_purity(models, g, config.partition(), extractor, config.centers_n, config.centers_seed);
    nlohmann::json purity_json;
    for (std::size_t l = 0; l < 3; ++l)
        purity_json[std::string(to_string(kSemanticLevels[l]))] = purity[l];
    if (log)
        log("coarse purity " + format_real(purity[0]));
    auto hashes = level_hashes(models);
    hashes["generator"] = g.freeze_hash();
    hashes["extractor"] = extractor.id();
    write_run_record(dir, "centers", config, {{"centers_seed", config.centers_seed}}, hashes,
                     {{"purity", purity_json}});
}

void run_truncate(const RunConfig& config, const LogFn& log)
{
    const auto dir = prepare(config, "truncate");
    const auto ws = Workspace::load(config);
    const auto& g = ws.generator;
    const auto w = latent_from_seed(g, config.seed);
    const auto a = assign_clusters(w, ws.models, g, ws.partition);
    const auto ours = truncate_multilevel(w, ws.centers, a, config.phi);
    const auto global = truncate_global(w, ws.centers.global_mean, config.phi);
    torch::NoGradGuard no_grad;
    write_png(dir / "untruncated.png", image_from_tensor(g.generate(w)));
    write_png(dir / "multilevel.png", image_from_tensor(g.synthesize(expand_to_layers(ours, ws.partition))));
    write_png(dir / "global.png", image_from_tensor(g.synthesize(expand_to_layers(global, ws.partition))));

    nlohmann::json assignment;
    for (std::size_t l = 0; l < 3; ++l) {
        const std::string name(to_string(kSemanticLevels[l]));
        assignment[name] = {{"index", a.index[l]}, {"probabilities", a.probabilities[l]}};
    }
    write_text(dir / "truncate.json",
               nlohmann::json{{"seed", config.seed},
                              {"phi", config.phi},
                              {"assignment", assignment},
                              {"multilevel_latent", latent_json(ours)},
                              {"global_latent", latent_json(global)}}
                       .dump(2)
                   + "\n");
    if (log)
        log("assignment " + std::to_string(a.index[0]) + "," + std::to_string(a.index[1]) + ","
            + std::to_string(a.index[2]));
    auto hashes = level_hashes(ws.models);
    hashes["generator"] = g.freeze_hash();
    write_run_record(dir, "truncate", config, {{"seed", config.seed}}, hashes);
}

void run_controlled_grid(const RunConfig& config, const LogFn& log)
{
    const auto dir = prepare(config, "controlled-grid");
    const auto g = load_generator(config);
    const auto models = load_levels(config);
    const auto p = config.partition();
    const auto ks = cluster_counts(models);
    const auto combos = enumerate_combinations(ks);
    std::vector<std::vector<Image>> per_coarse(static_cast<std::size_t>(ks[0]));
    for (const auto& c : combos)
        per_coarse[static_cast<std::size_t>(c[0])].push_back(
            image_from_tensor(controlled_generate(models, g, p, c, config.seed).image));
    nlohmann::json files = nlohmann::json::array();
    for (int c = 0; c < ks[0]; ++c) {
        const auto name = "grid_coarse" + std::to_string(c) + ".png";
        // rows: medium clusters, columns: fine clusters
        write_png(dir / name, mosaic(per_coarse[static_cast<std::size_t>(c)], ks[2]));
        files.push_back(name);
    }
    if (log)
        log("rendered " + std::to_string(combos.size()) + " cluster combinations");
    auto hashes = level_hashes(models);
    hashes["generator"] = g.freeze_hash();
    write_run_record(dir, "controlled-grid", config, {{"seed", config.seed}}, hashes,
                     {{"combinations", combos.size()}, {"k", ks}, {"files", files}});
}

void run_sweep(const RunConfig& config, const LogFn& log)
{
    const auto dir = prepare(config, "sweep");
    const auto ws = Workspace::load(config);
    const auto extractor = load_extractor(config);
    const auto data = load_training_data(config);
    const auto images = stack_images(data.images);
    const auto real = extractor.extract(images.narrow(0, 0, std::min<int64_t>(config.n, images.size(0))));
    SweepInputs in{&ws.generator, &ws.partition, &ws.models, &ws.centers, &extractor, &real};
    const auto result = truncation_sweep(in, config.n, sweep_phi_grid(config.phis), config.sweep_seed, config.knn_k, log);
    write_text(dir / "sweep.csv", result.csv());
    write_text(dir / "pr_curve.svg", result.pr_curve_svg());
    write_text(dir / "p_fid_curve.svg", result.p_fid_curve_svg());
    const auto cmp = compare_precision(result);
    auto hashes = level_hashes(ws.models);
    hashes["generator"] = ws.generator.freeze_hash();
    hashes["extractor"] = extractor.id();
    write_run_record(dir, "sweep", config, {{"sweep_seed", config.sweep_seed}}, hashes,
                     {{"feature_space", "self-trained joint-factor classifier, 64-d penultimate layer"},
                      {"real_n", real.size()},
                      {"precision_wins", cmp.wins},
                      {"interior_points", cmp.points}});
}

void run_gmm_baseline(const RunConfig& config, const LogFn& log)
{
    const auto dir = prepare(config, "gmm-baseline");
    const auto g = load_generator(config);
    const auto w = sample_w(g, config.gmm_n, config.gmm_seed);
    const auto fit = gmm_em_fit(to_matrix(w), config.gmm_k, config.gmm_iters, config.gmm_tol, config.gmm_seed);
    nlohmann::json j;
    j["weights"] = std::vector<double>(fit.weights.data(), fit.weights.data() + fit.weights.size());
    j["means"] = nlohmann::json::array();
    j["variances"] = nlohmann::json::array();
    for (Eigen::Index c = 0; c < fit.means.rows(); ++c) {
        j["means"].push_back(std::vector<double>(fit.means.row(c).data(), fit.means.row(c).data() + fit.means.cols()));
        j["variances"].push_back(
            std::vector<double>(fit.variances.row(c).data(), fit.variances.row(c).data() + fit.variances.cols()));
    }
    j["log_likelihood"] = fit.log_likelihood;
    j["iterations"] = fit.iterations;
    j["converged"] = fit.converged;
    write_text(dir / "gmm.json", j.dump(2) + "\n");

    const auto means = torch::from_blob(const_cast<double*>(fit.means.data()), {fit.means.rows(), fit.means.cols()},
                                        torch::kFloat64)
                           .to(g.dtype());
    write_png(dir / "gmm_centers.png", mosaic(unstack_images(generate_images(g, means)), config.gmm_k));
    if (log)
        log("EM finished after " + std::to_string(fit.iterations) + " iterations");
    write_run_record(dir, "gmm-baseline", config, {{"gmm_seed", config.gmm_seed}}, {{"generator", g.freeze_hash()}});
}

void run_embed(const RunConfig& config, const LogFn& log)
{
    const auto dir = prepare(config, "embed");
    const auto g = load_generator(config);
    const auto models = load_levels(config);
    nlohmann::json summary;
    for (std::size_t l = 0; l < 3; ++l) {
        const auto& m = models[l];
        const std::string name(to_string(m.level));
        const auto seed = derive_seed(config.embed_seed, l);
        const auto selectors = sample_selectors(m.k, config.embed_n, seed);
        const auto noise = seeded_normal({config.embed_n, g.spec().z_dim}, derive_seed(seed, 1), g.dtype());
        torch::Tensor wl;
        {
            torch::NoGradGuard no_grad;
            wl = m.generate(selector_indices(selectors), noise);
        }
        std::vector<int> ids;
        for (const auto& s : selectors)
            ids.push_back(s.index);
        const auto emb = embed_2d(to_matrix(wl), ids);
        std::ostringstream csv;
        csv << "x,y,cluster\n";
        std::vector<double> xs;
        std::vector<double> ys;
        for (Eigen::Index i = 0; i < emb.coords.rows(); ++i) {
            xs.push_back(emb.coords(i, 0));
            ys.push_back(emb.coords(i, 1));
            csv << format_real(xs.back()) << ',' << format_real(ys.back()) << ',' << ids[static_cast<std::size_t>(i)]
                << '\n';
        }
        write_text(dir / ("embed_" + name + ".csv"), csv.str());
        write_text(dir / ("embed_" + name + ".svg"),
                   svg_scatter_plot({name + " level latents (PCA)", "PC 1", "PC 2"}, xs, ys, ids));
        summary[name] = {{"explained_variance", emb.explained_variance}, {"rank_deficient", emb.rank_deficient}};
    }
    write_text(dir / "embed.json", summary.dump(2) + "\n");
    if (log)
        log("embedded " + std::to_string(config.embed_n) + " latents per level");
    auto hashes = level_hashes(models);
    hashes["generator"] = g.freeze_hash();
    write_run_record(dir, "embed", config, {{"embed_seed", config.embed_seed}}, hashes);
}

void run_mean_vs_samples(const RunConfig& config, const LogFn& log)
{
    const auto dir = prepare(config, "mean-vs-samples");
    const auto g = load_generator(config);
    const auto mean = global_mean_w(g, config.centers_n, config.centers_seed);
    std::vector<torch::Tensor> ws{mean};
    for (int i = 0; i < config.samples; ++i)
        ws.push_back(latent_from_seed(g, derive_seed(config.seed, static_cast<std::uint64_t>(i))));
    // first tile: the global mean; the rest: random samples
    write_png(dir / "mean_vs_samples.png", mosaic(unstack_images(generate_images(g, torch::stack(ws))), config.samples + 1));
    if (log)
        log("wrote mean image and " + std::to_string(config.samples) + " samples");
    write_run_record(dir, "mean-vs-samples", config, {{"seed", config.seed}, {"centers_seed", config.centers_seed}},
                     {{"generator", g.freeze_hash()}});
}

} // namespace strata
