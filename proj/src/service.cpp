#include "strata/service.hpp"

#include <httplib.h>

#include "strata/image.hpp"

namespace strata {

namespace {

ServiceResponse error(int status, const std::string& message)
{
    return {status, {{"error", message}}};
}

ServiceResponse unavailable()
{
    return error(503, "models are not loaded");
}

std::string png_base64(const torch::Tensor& chw)
{
    const auto png = encode_png(image_from_tensor(chw));
    return httplib::detail::base64_encode(png);
}

std::vector<float> to_floats(const torch::Tensor& t)
{
    auto c = t.to(torch::kFloat32).contiguous();
    return {c.data_ptr<float>(), c.data_ptr<float>() + c.numel()};
}

nlohmann::json latent_json(const ExtendedLatent& e)
{
    nlohmann::json j;
    for (std::size_t l = 0; l < 3; ++l)
        j[std::string(to_string(kSemanticLevels[l]))] = to_floats(e.per_level[l]);
    j["passthrough"] = to_floats(e.passthrough);
    return j;
}

nlohmann::json assignment_json(const ClusterAssignment& a)
{
    nlohmann::json j;
    for (std::size_t l = 0; l < 3; ++l)
        j[std::string(to_string(kSemanticLevels[l]))] = {{"index", a.index[l]}, {"probabilities", a.probabilities[l]}};
    return j;
}

nlohmann::json choice_json(const std::array<int, 3>& c)
{
    nlohmann::json j;
    for (std::size_t l = 0; l < 3; ++l)
        j[std::string(to_string(kSemanticLevels[l]))] = {{"index", c[l]}};
    return j;
}

struct BadRequest : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::uint64_t read_seed(const nlohmann::json& req)
{
    if (!req.contains("seed"))
        return 0;
    const auto& s = req.at("seed");
    if (!s.is_number_integer() || (s.is_number_integer() && !s.is_number_unsigned() && s.get<int64_t>() < 0))
        throw BadRequest("seed must be a non-negative integer");
    return s.get<std::uint64_t>();
}

std::optional<double> read_phi(const nlohmann::json& req, bool required)
{
    if (!req.contains("phi") || req.at("phi").is_null()) {
        if (required)
            throw BadRequest("phi is required");
        return std::nullopt;
    }
    const auto& p = req.at("phi");
    if (!p.is_number())
        throw BadRequest("phi must be a number");
    const double phi = p.get<double>();
    if (!(phi >= 0.0 && phi <= 1.0))
        throw BadRequest("phi must lie in [0,1]");
    return phi;
}

std::optional<std::array<int, 3>> read_choice(const nlohmann::json& req, const std::array<int, 3>& k)
{
    if (!req.contains("cluster_choice") || req.at("cluster_choice").is_null())
        return std::nullopt;
    const auto& c = req.at("cluster_choice");
    std::array<int, 3> out{0, 0, 0};
    const auto read = [&](const nlohmann::json& v, std::size_t l) {
        if (v.is_null())
            return;
        if (!v.is_number_integer())
            throw BadRequest("cluster indices must be integers");
        const auto i = v.get<int64_t>();
        if (i < 0 || i >= k[l])
            throw BadRequest("cluster index " + std::to_string(i) + " outside [0," + std::to_string(k[l]) + ") for "
                             + std::string(to_string(kSemanticLevels[l])));
        out[l] = static_cast<int>(i);
    };
    if (c.is_array()) {
        if (c.size() != 3)
            throw BadRequest("cluster_choice must list coarse, medium and fine");
        for (std::size_t l = 0; l < 3; ++l)
            read(c[l], l);
    } else if (c.is_object()) {
        for (const auto& [key, v] : c.items()) {
            LayerGroup g;
            try {
                g = parse_layer_group(key);
                (void)level_index(g);
            } catch (const std::exception&) {
                throw BadRequest("unknown level '" + key + "' in cluster_choice");
            }
            read(v, static_cast<std::size_t>(level_index(g)));
        }
    } else {
        throw BadRequest("cluster_choice must be an array or object");
    }
    return out;
}

} // namespace

ExplorerService::ExplorerService(Workspace workspace)
    : ws_(std::make_shared<const Workspace>(std::move(workspace)))
{
}

ServiceResponse ExplorerService::handle_meta() const
{
    if (!ws_)
        return unavailable();
    const auto& ws = *ws_;
    nlohmann::json levels = nlohmann::json::array();
    for (std::size_t l = 0; l < 3; ++l) {
        const auto level = kSemanticLevels[l];
        const auto& c = ws.centers.levels[l];
        levels.push_back({{"name", std::string(to_string(level))},
                          {"k", ws.models[l].k},
                          {"layers", ws.partition.layers_of(level)},
                          {"center_counts", c.counts},
                          {"center_fallback", c.fallback},
                          {"hash", ws.models[l].hash()}});
    }
    return {200,
            {{"levels", levels},
             {"k", cluster_counts(ws.models)},
             {"partition", ws.partition.to_json()},
             {"image_size", ws.generator.spec().image_size()},
             {"centers_n", ws.centers.n},
             {"generator_hash", ws.generator.freeze_hash()},
             {"phi_orientation", "0 = untruncated, 1 = full contraction onto the center"}}};
}

ServiceResponse ExplorerService::handle_generate(const nlohmann::json& req) const
{
    if (!ws_)
        return unavailable();
    const auto& ws = *ws_;
    try {
        if (!req.is_object())
            throw BadRequest("request body must be a JSON object");
        const auto seed = read_seed(req);
        const auto choice = read_choice(req, cluster_counts(ws.models));
        const auto phi = read_phi(req, false);
        if (choice && phi)
            throw BadRequest("cluster_choice and phi are mutually exclusive");
        nlohmann::json body{{"seed", seed}};
        torch::NoGradGuard no_grad;
        if (choice) {
            const auto s = controlled_generate(ws.models, ws.generator, ws.partition, *choice, seed);
            body["mode"] = "controlled";
            body["image"] = png_base64(s.image);
            body["assignment"] = choice_json(*choice);
            body["latent"] = latent_json(s.latent);
        } else {
            const double f = phi.value_or(0.0);
            const auto w = latent_from_seed(ws.generator, seed);
            const auto a = assign_clusters(w, ws.models, ws.generator, ws.partition);
            const auto e = truncate_multilevel(w, ws.centers, a, f);
            body["mode"] = "truncated";
            body["phi"] = f;
            body["image"] = png_base64(ws.generator.synthesize(expand_to_layers(e, ws.partition)));
            body["assignment"] = assignment_json(a);
            body["latent"] = latent_json(e);
        }
        return {200, body};
    } catch (const BadRequest& e) {
        return error(400, e.what());
    }
}

ServiceResponse ExplorerService::handle_compare(const nlohmann::json& req) const
{
    if (!ws_)
        return unavailable();
    const auto& ws = *ws_;
    try {
        if (!req.is_object())
            throw BadRequest("request body must be a JSON object");
        const auto seed = read_seed(req);
        const double phi = *read_phi(req, true);
        torch::NoGradGuard no_grad;
        const auto& g = ws.generator;
        const auto w = latent_from_seed(g, seed);
        const auto a = assign_clusters(w, ws.models, g, ws.partition);
        const auto ours = truncate_multilevel(w, ws.centers, a, phi);
        const auto global = truncate_global(w, ws.centers.global_mean, phi);
        return {200,
                {{"seed", seed},
                 {"phi", phi},
                 {"untruncated", png_base64(g.generate(w))},
                 {"global", png_base64(g.synthesize(expand_to_layers(global, ws.partition)))},
                 {"multilevel", png_base64(g.synthesize(expand_to_layers(ours, ws.partition)))},
                 {"assignment", assignment_json(a)}}};
    } catch (const BadRequest& e) {
        return error(400, e.what());
    }
}

ServiceResponse ExplorerService::handle(const std::string& method, const std::string& path,
                                        const std::string& body) const
{
    ServiceResponse r;
    if (method == "GET" && path == "/api/meta") {
        r = handle_meta();
    } else if (method == "POST" && (path == "/api/generate" || path == "/api/compare")) {
        nlohmann::json req;
        try {
            req = body.empty() ? nlohmann::json::object() : nlohmann::json::parse(body);
            r = path == "/api/generate" ? handle_generate(req) : handle_compare(req);
        } catch (const nlohmann::json::parse_error&) {
            r = error(400, "request body is not valid JSON");
        }
    } else {
        r = error(404, "no route for " + method + " " + path);
    }
    {
        std::lock_guard lock(log_mutex_);
        access_log_.push_back(method + " " + path + " " + std::to_string(r.status));
    }
    return r;
}

std::vector<std::string> ExplorerService::access_log() const
{
    std::lock_guard lock(log_mutex_);
    return access_log_;
}

struct ExplorerServer::Impl {
    explicit Impl(const ExplorerService& s) : service(s) {}

    const ExplorerService& service;
    httplib::Server server;
};

ExplorerServer::ExplorerServer(const ExplorerService& service, std::string static_dir)
    : impl_(std::make_unique<Impl>(service))
{
    auto& svr = impl_->server;
    svr.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                             {"Access-Control-Allow-Headers", "Content-Type"},
                             {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    const auto forward = [this](const httplib::Request& req, httplib::Response& res) {
        const auto r = impl_->service.handle(req.method, req.path, req.body);
        res.status = r.status;
        res.set_content(r.body.dump(), "application/json");
    };
    svr.Get("/api/meta", forward);
    svr.Post("/api/generate", forward);
    svr.Post("/api/compare", forward);
    svr.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    if (!static_dir.empty() && !svr.set_mount_point("/", static_dir))
        throw std::runtime_error("static directory " + static_dir + " does not exist");
}

ExplorerServer::~ExplorerServer() = default;

int ExplorerServer::bind(const std::string& host, int port)
{
    if (port == 0)
        return impl_->server.bind_to_any_port(host);
    if (!impl_->server.bind_to_port(host, port))
        return -1;
    return port;
}

void ExplorerServer::listen()
{
    impl_->server.listen_after_bind();
}

void ExplorerServer::stop()
{
    impl_->server.stop();
}

} // namespace strata
