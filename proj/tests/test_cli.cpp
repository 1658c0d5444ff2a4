#include "doctest_torch.hpp"

#include <set>

#include "pipeline_util.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;

namespace {

/// One tiny workspace shared by the end-to-end cases below.
struct TinyRun {
    TempDir dir{"strata-cli"};
    fs::path config = write_config(dir / "config.json", tiny_run_config(dir / "ws"));
    std::map<std::string, CliResult> results;

    TinyRun()
    {
        for (const auto& cmd : pipeline_commands())
            results[cmd] = run_cli({cmd, "--config", config.string()});
    }
};

TinyRun& tiny_run()
{
    static TinyRun run;
    return run;
}

} // namespace

TEST_CASE("help exits zero and documents the phi orientation")
{
    const auto top = run_cli({"--help"});
    CHECK(top.code == 0);
    CHECK(top.out.find("sweep") != std::string::npos);
    CHECK(top.out.find("0 (untruncated)") != std::string::npos);
    const auto sub = run_cli({"truncate", "--help"});
    CHECK(sub.code == 0);
    CHECK(sub.out.find("--phi") != std::string::npos);
    CHECK(sub.out.find("full contraction") != std::string::npos);
}

TEST_CASE("usage errors exit with status 2")
{
    TempDir dir;
    CHECK(run_cli({}).code == 2);
    CHECK(run_cli({"no-such-command"}).code == 2);
    CHECK(run_cli({"truncate", "--no-such-flag", "1"}).code == 2);
    CHECK(run_cli({"truncate", "--phi", "abc"}).code == 2);
    CHECK(run_cli({"truncate", "--phi", "1.5"}).code == 2);
    CHECK(run_cli({"truncate", "--iters", "2.5"}).code == 2);
    CHECK(run_cli({"truncate", "--config", (dir / "missing.json").string()}).code == 2);

    const auto unknown = write_config(dir / "unknown.json", {{"phi", 0.5}, {"no_such_key", 1}});
    const auto r = run_cli({"truncate", "--config", unknown.string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("no_such_key") != std::string::npos);

    const auto typed = write_config(dir / "typed.json", {{"iters", "many"}});
    CHECK(run_cli({"truncate", "--config", typed.string()}).code == 2);
    const auto not_object = write_config(dir / "array.json", nlohmann::json::array({1, 2}));
    CHECK(run_cli({"truncate", "--config", not_object.string()}).code == 2);
}

TEST_CASE("missing artefacts are runtime failures")
{
    TempDir dir;
    const auto cfg = write_config(dir / "c.json", tiny_run_config(dir / "empty"));
    const auto r = run_cli({"truncate", "--config", cfg.string()});
    CHECK(r.code == 1);
    CHECK_FALSE(r.err.empty());
}

TEST_CASE("every pipeline command succeeds on the tiny configuration")
{
    auto& run = tiny_run();
    for (const auto& cmd : pipeline_commands()) {
        INFO(cmd << ": " << run.results[cmd].err);
        CHECK(run.results[cmd].code == 0);
        CHECK(fs::exists(run.dir / "ws" / cmd / "run.json"));
    }
    const auto ws = run.dir / "ws";
    for (const auto* f : {"pretrain/generator/manifest.json", "pretrain/losses.csv", "pretrain/fid.csv",
                          "train-levels/coarse/manifest.json", "train-levels/fine/log.csv", "centers/centers.json",
                          "truncate/multilevel.png", "controlled-grid/grid_coarse0.png", "sweep/sweep.csv",
                          "sweep/pr_curve.svg", "sweep/p_fid_curve.svg", "gmm-baseline/gmm.json",
                          "embed/embed_coarse.csv", "mean-vs-samples/mean_vs_samples.png"})
        CHECK_MESSAGE(fs::exists(ws / f), f);
}

TEST_CASE("run records carry the resolved config and a constant generator hash")
{
    auto& run = tiny_run();
    const auto ws = run.dir / "ws";
    const auto pre = nlohmann::json::parse(read_bytes(ws / "pretrain" / "run.json"));
    const auto hash = pre.at("hashes").at("generator").get<std::string>();
    CHECK(hash.size() == 64);
    for (const auto& cmd : pipeline_commands()) {
        const auto rec = nlohmann::json::parse(read_bytes(ws / cmd / "run.json"));
        CHECK(rec.at("command") == cmd);
        CHECK(rec.at("config").at("iters") == 10);
        if (rec.at("hashes").contains("generator"))
            CHECK(rec["hashes"]["generator"] == hash);
    }
    const auto sweep = read_bytes(ws / "sweep" / "sweep.csv");
    CHECK(sweep.rfind("method,phi,precision,recall,fid,n,seed\n", 0) == 0);
    // Two methods over the interior grid plus both endpoints.
    CHECK(std::count(sweep.begin(), sweep.end(), '\n') == 1 + 2 * 5);
}

TEST_CASE("re-running every command reproduces its CSV and JSON outputs byte for byte")
{
    auto& run = tiny_run();
    const auto ws = run.dir / "ws";
    const auto before = snapshot(ws, {".csv", ".json"});
    REQUIRE(before.size() > 10);
    for (const auto& cmd : pipeline_commands())
        REQUIRE(run_cli({cmd, "--config", run.config.string()}).code == 0);
    const auto after = snapshot(ws, {".csv", ".json"});
    REQUIRE(after.size() == before.size());
    for (const auto& [name, bytes] : before) {
        INFO(name);
        CHECK(after.at(name) == bytes);
    }
}

TEST_CASE("flags override the config file and phi zero truncation is the plain image")
{
    auto& run = tiny_run();
    const auto out = run.dir / "phi0";
    const auto r = run_cli({"truncate", "--config", run.config.string(), "--phi", "0", "--seed", "3", "--out",
                            out.string()});
    REQUIRE(r.code == 0);
    const auto rec = nlohmann::json::parse(read_bytes(out / "run.json"));
    CHECK(rec.at("config").at("phi") == 0.0);
    CHECK(rec.at("config").at("seed") == 3);
    CHECK(rec.at("config").at("iters") == 10);
    const auto plain = read_bytes(out / "untruncated.png");
    CHECK_FALSE(plain.empty());
    CHECK(read_bytes(out / "multilevel.png") == plain);
    CHECK(read_bytes(out / "global.png") == plain);

    const auto full = run.dir / "phi1";
    REQUIRE(run_cli({"truncate", "--config", run.config.string(), "--phi", "1", "--out", full.string()}).code == 0);
    const auto t = nlohmann::json::parse(read_bytes(full / "truncate.json"));
    const auto centers = nlohmann::json::parse(read_bytes(run.dir / "ws" / "centers" / "centers.json"));
    const int coarse = t.at("assignment").at("coarse").at("index");
    const auto expect = centers.at("levels")[0].at("centers")[static_cast<std::size_t>(coarse)];
    const auto got = t.at("multilevel_latent").at("coarse");
    REQUIRE(got.size() == expect.size());
    for (std::size_t i = 0; i < got.size(); ++i)
        CHECK(got[i].get<double>() == doctest::Approx(expect[i].get<double>()).epsilon(1e-6));
}
