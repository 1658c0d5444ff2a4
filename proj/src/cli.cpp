#include "strata/cli.hpp"

#include <functional>
#include <map>
#include <optional>
#include <ostream>

#include <CLI11.hpp>

#include "strata/config.hpp"
#include "strata/errors.hpp"
#include "strata/pipeline.hpp"
#include "strata/service.hpp"

namespace strata {

namespace {

constexpr const char* kDescription =
    "Multi-level latent structuring of a style-based generator.\n"
    "Truncation strength phi runs from 0 (untruncated) to 1 (full contraction onto the\n"
    "cluster center or global mean); this is the opposite of the usual psi.\n"
    "Configuration: --config FILE (JSON object of the keys below), then flags override it.";

struct Command {
    const char* name;
    const char* help;
    std::function<void(const RunConfig&, const LogFn&)> run;
};

void run_serve(const RunConfig& config, const LogFn& log)
{
    std::optional<Workspace> ws;
    try {
        ws.emplace(Workspace::load(config));
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        log(std::string("warning: models not loaded, API answers 503: ") + e.what());
    }
    const ExplorerService service = ws ? ExplorerService(std::move(*ws)) : ExplorerService();
    ExplorerServer server(service, config.static_dir);
    const int port = server.bind(config.host, config.port);
    if (port < 0)
        throw std::runtime_error("cannot bind " + config.host + ":" + std::to_string(config.port));
    log("serving on http://" + config.host + ":" + std::to_string(port));
    server.listen();
}

const std::vector<Command>& commands()
{
    static const std::vector<Command> list{
        {"synth-data", "render the synthetic factor dataset", run_synth_data},
        {"pretrain", "train the feature extractor and pretrain the generator", run_pretrain},
        {"train-levels", "train the per-level Gaussian banks, mappers, critics and classifiers", run_train_levels},
        {"centers", "estimate per-level cluster centers", run_centers},
        {"truncate", "multi-level and global truncation of one latent", run_truncate},
        {"controlled-grid", "render every cluster combination for one seed", run_controlled_grid},
        {"sweep", "precision/recall/FID over the truncation strength grid", run_sweep},
        {"gmm-baseline", "fit a GMM to w and render its component means", run_gmm_baseline},
        {"embed", "2-D projection of each level's latents coloured by cluster", run_embed},
        {"mean-vs-samples", "global-mean image beside random samples", run_mean_vs_samples},
        {"serve", "HTTP explorer service", run_serve},
    };
    return list;
}

} // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app(kDescription, "strata");
    app.require_subcommand(1);
    std::string config_file;
    std::map<std::string, std::string> flags;
    std::map<std::string, CLI::Option*> options;
    std::map<std::string, CLI::App*> subs;
    for (const auto& c : commands()) {
        auto* sub = app.add_subcommand(c.name, c.help);
        sub->add_option("--config", config_file, "JSON run configuration");
        sub->footer("phi: 0 = untruncated, 1 = full contraction onto the center (opposite of psi).");
        for (const auto& key : config_keys()) {
            auto* opt = sub->add_option(std::string("--") + key.name, flags[key.name], key.help);
            options[std::string(c.name) + "/" + key.name] = opt;
        }
        subs[c.name] = sub;
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        for (const auto& [name, sub] : subs) {
            if (sub->parsed()) {
                out << sub->help();
                return 0;
            }
        }
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }

    const Command* chosen = nullptr;
    for (const auto& c : commands())
        if (subs[c.name]->parsed())
            chosen = &c;

    const LogFn log = [&err](const std::string& line) { err << line << "\n"; };
    try {
        RunConfig config = config_file.empty() ? RunConfig{} : load_config_file(config_file);
        for (const auto& key : config_keys()) {
            if (options[std::string(chosen->name) + "/" + key.name]->count() > 0)
                apply_flag(config, key.name, flags[key.name]);
        }
        config.validate();
        torch::set_num_threads(1);
        chosen->run(config, log);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

} // namespace strata
