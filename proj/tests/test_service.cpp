#include "doctest_torch.hpp"

#include <thread>

#include "pipeline_util.hpp"
#include "strata/config.hpp"
#include "strata/service.hpp"
#include "test_util.hpp"

// After the Eigen-based headers: httplib's declarations clash with Eigen's
// out-of-line template definitions otherwise.
#include <httplib.h>

using namespace strata;
namespace fs = std::filesystem;

namespace {

struct Loaded {
    TempDir dir{"strata-service"};
    RunConfig config;
    std::optional<ExplorerService> service;

    Loaded()
    {
        const auto file = write_config(dir / "config.json", tiny_run_config(dir / "ws"));
        for (const auto* cmd : {"synth-data", "pretrain", "train-levels", "centers"}) {
            const auto r = run_cli({cmd, "--config", file.string()});
            if (r.code != 0)
                throw std::runtime_error(std::string(cmd) + " failed: " + r.err);
        }
        config = load_config_file(file);
        service.emplace(Workspace::load(config));
    }
};

const ExplorerService& svc()
{
    static Loaded loaded;
    return *loaded.service;
}

std::string b64decode(const std::string& in)
{
    static const std::string chars = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    int val = 0, bits = -8;
    for (char c : in) {
        const auto pos = chars.find(c);
        if (pos == std::string::npos)
            break;
        val = (val << 6) + static_cast<int>(pos);
        bits += 6;
        if (bits >= 0) {
            out.push_back(static_cast<char>((val >> bits) & 0xFF));
            bits -= 8;
        }
    }
    return out;
}

} // namespace

TEST_CASE("unloaded service answers 503 everywhere")
{
    const ExplorerService none;
    CHECK_FALSE(none.loaded());
    CHECK(none.handle_meta().status == 503);
    CHECK(none.handle_generate({{"seed", 1}}).status == 503);
    CHECK(none.handle_compare({{"seed", 1}, {"phi", 0.5}}).status == 503);
    CHECK(none.handle("GET", "/api/meta", "").body.contains("error"));
}

TEST_CASE("meta describes the loaded levels")
{
    const auto r = svc().handle_meta();
    REQUIRE(r.status == 200);
    CHECK(r.body.at("k") == nlohmann::json::array({3, 4, 5}));
    const auto& levels = r.body.at("levels");
    REQUIRE(levels.size() == 3);
    CHECK(levels[0].at("name") == "coarse");
    CHECK(levels[1].at("k") == 4);
    CHECK(levels[2].at("layers").size() >= 1);
    CHECK(levels[0].at("center_counts").size() == 3);
    CHECK(r.body.at("image_size") == 8);
    CHECK(r.body.at("phi_orientation").get<std::string>().find("untruncated") != std::string::npos);
    CHECK(svc().handle_meta().body.dump() == r.body.dump());
}

TEST_CASE("generate is idempotent and returns a decodable PNG")
{
    const nlohmann::json req{{"seed", 4}, {"cluster_choice", {1, 2, 3}}};
    const auto a = svc().handle("POST", "/api/generate", req.dump());
    const auto b = svc().handle("POST", "/api/generate", req.dump());
    REQUIRE(a.status == 200);
    CHECK(a.body.dump() == b.body.dump());
    CHECK(a.body.at("mode") == "controlled");
    const auto png = b64decode(a.body.at("image").get<std::string>());
    CHECK(png.substr(1, 3) == "PNG");
    CHECK(a.body.at("assignment").at("fine").at("index") == 3);
}

TEST_CASE("changing only the fine choice keeps coarse and medium latents")
{
    const auto a = svc().handle_generate({{"seed", 4}, {"cluster_choice", {1, 2, 3}}});
    const auto b = svc().handle_generate({{"seed", 4}, {"cluster_choice", {{"fine", 0}, {"coarse", 1}, {"medium", 2}}}});
    REQUIRE(a.status == 200);
    REQUIRE(b.status == 200);
    CHECK(a.body["latent"]["coarse"] == b.body["latent"]["coarse"]);
    CHECK(a.body["latent"]["medium"] == b.body["latent"]["medium"]);
    CHECK(a.body["latent"]["passthrough"] == b.body["latent"]["passthrough"]);
    CHECK(a.body["latent"]["fine"] != b.body["latent"]["fine"]);

    // Levels missing from an object default to cluster 0.
    const auto partial = svc().handle_generate({{"seed", 4}, {"cluster_choice", {{"medium", 2}}}});
    REQUIRE(partial.status == 200);
    CHECK(partial.body["assignment"]["coarse"]["index"] == 0);
    CHECK(partial.body["assignment"]["medium"]["index"] == 2);
}

TEST_CASE("phi zero generation is the plain image")
{
    const auto plain = svc().handle_generate({{"seed", 9}});
    const auto zero = svc().handle_generate({{"seed", 9}, {"phi", 0.0}});
    const auto cmp = svc().handle_compare({{"seed", 9}, {"phi", 0.0}});
    REQUIRE(plain.status == 200);
    REQUIRE(cmp.status == 200);
    CHECK(plain.body.at("mode") == "truncated");
    CHECK(plain.body["image"] == zero.body["image"]);
    CHECK(cmp.body["untruncated"] == cmp.body["global"]);
    CHECK(cmp.body["untruncated"] == cmp.body["multilevel"]);
    CHECK(cmp.body["untruncated"] == plain.body["image"]);
    CHECK(plain.body["assignment"] == cmp.body["assignment"]);

    const auto half = svc().handle_compare({{"seed", 9}, {"phi", 0.5}});
    REQUIRE(half.status == 200);
    CHECK(half.body["untruncated"] == cmp.body["untruncated"]);
}

TEST_CASE("full truncation lands on the stored centers")
{
    const auto r = svc().handle_generate({{"seed", 2}, {"phi", 1.0}});
    REQUIRE(r.status == 200);
    const auto meta = svc().handle_meta().body;
    const int coarse = r.body["assignment"]["coarse"]["index"];
    CHECK(coarse >= 0);
    CHECK(coarse < meta["k"][0].get<int>());
    const auto latent = r.body["latent"]["coarse"];
    const auto again = svc().handle_generate({{"seed", 5}, {"phi", 1.0}});
    // Two seeds assigned to the same coarse cluster share its center exactly.
    if (again.body["assignment"]["coarse"]["index"] == coarse)
        CHECK(again.body["latent"]["coarse"] == latent);
    CHECK(r.body["latent"]["passthrough"] != latent);
}

TEST_CASE("bad requests answer 400 with a JSON error")
{
    const auto expect_400 = [](const ServiceResponse& r) {
        CHECK(r.status == 400);
        CHECK(r.body.at("error").is_string());
    };
    expect_400(svc().handle_generate({{"seed", 1}, {"cluster_choice", {3, 0, 0}}}));
    expect_400(svc().handle_generate({{"seed", 1}, {"cluster_choice", {0, 0, -1}}}));
    expect_400(svc().handle_generate({{"seed", 1}, {"cluster_choice", {0, 0}}}));
    expect_400(svc().handle_generate({{"seed", 1}, {"cluster_choice", {{"passthrough", 0}}}}));
    expect_400(svc().handle_generate({{"seed", 1}, {"cluster_choice", {0.5, 0, 0}}}));
    expect_400(svc().handle_generate({{"seed", 1}, {"cluster_choice", "0,0,0"}}));
    expect_400(svc().handle_generate({{"seed", 1}, {"cluster_choice", {0, 0, 0}}, {"phi", 0.5}}));
    expect_400(svc().handle_generate({{"seed", -1}}));
    expect_400(svc().handle_generate({{"seed", "x"}}));
    expect_400(svc().handle_generate({{"seed", 1}, {"phi", 1.5}}));
    expect_400(svc().handle_generate(nlohmann::json::array()));
    expect_400(svc().handle_compare({{"seed", 1}}));
    expect_400(svc().handle_compare({{"seed", 1}, {"phi", "half"}}));
    expect_400(svc().handle("POST", "/api/generate", "{not json"));
    CHECK(svc().handle("GET", "/api/nothing", "").status == 404);
    CHECK(svc().handle("GET", "/api/generate", "").status == 404);
}

TEST_CASE("concurrent requests match sequential ones")
{
    std::vector<nlohmann::json> reqs;
    for (int i = 0; i < 8; ++i)
        reqs.push_back(i % 2 ? nlohmann::json{{"seed", i}, {"cluster_choice", {i % 3, i % 4, i % 5}}}
                             : nlohmann::json{{"seed", i}, {"phi", 0.1 * i}});
    std::vector<std::string> sequential;
    for (const auto& r : reqs)
        sequential.push_back(svc().handle("POST", "/api/generate", r.dump()).body.dump());
    std::vector<std::string> parallel(reqs.size());
    std::vector<std::thread> threads;
    for (std::size_t i = 0; i < reqs.size(); ++i)
        threads.emplace_back([&, i] { parallel[i] = svc().handle("POST", "/api/generate", reqs[i].dump()).body.dump(); });
    for (auto& t : threads)
        t.join();
    CHECK(parallel == sequential);
    const auto log = svc().access_log();
    CHECK(log.size() >= 2 * reqs.size());
}

TEST_CASE("live HTTP server with CORS and static files")
{
    TempDir stat;
    std::ofstream(stat / "index.html") << "<html>explorer</html>";
    ExplorerServer server(svc(), stat.path().string());
    const int port = server.bind("127.0.0.1", 0);
    REQUIRE(port > 0);
    std::thread loop([&] { server.listen(); });

    httplib::Client client("127.0.0.1", port);
    client.set_connection_timeout(5);
    const auto meta = client.Get("/api/meta");
    REQUIRE(meta);
    CHECK(meta->status == 200);
    CHECK(meta->get_header_value("Access-Control-Allow-Origin") == "*");
    CHECK(nlohmann::json::parse(meta->body) == svc().handle_meta().body);

    const nlohmann::json req{{"seed", 3}, {"cluster_choice", {0, 1, 2}}};
    const auto a = client.Post("/api/generate", req.dump(), "application/json");
    const auto b = client.Post("/api/generate", req.dump(), "application/json");
    REQUIRE(a);
    REQUIRE(b);
    CHECK(a->status == 200);
    CHECK(a->body == b->body);

    const auto bad = client.Post("/api/generate", R"({"cluster_choice":[9,0,0]})", "application/json");
    REQUIRE(bad);
    CHECK(bad->status == 400);
    CHECK(nlohmann::json::parse(bad->body).contains("error"));

    const auto pre = client.Options("/api/generate");
    REQUIRE(pre);
    CHECK(pre->status == 204);

    const auto page = client.Get("/index.html");
    REQUIRE(page);
    CHECK(page->body.find("explorer") != std::string::npos);

    server.stop();
    loop.join();
    CHECK_THROWS(ExplorerServer(svc(), (stat / "missing").string()));
}
