#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "strata/pipeline.hpp"

namespace strata {

struct ServiceResponse {
    int status = 200;
    nlohmann::json body;
};

/// Request handlers over immutable loaded models. Every handler is safe to
/// call concurrently; the only shared mutable state is the access log.
class ExplorerService {
public:
    /// Unloaded: every handler answers 503.
    ExplorerService() = default;
    explicit ExplorerService(Workspace workspace);

    bool loaded() const { return ws_ != nullptr; }

    ServiceResponse handle_meta() const;
    /// {"seed": int, "cluster_choice"?: [c,m,f] or {"coarse":..}, "phi"?: real}
    ServiceResponse handle_generate(const nlohmann::json& request) const;
    /// {"seed": int, "phi": real}
    ServiceResponse handle_compare(const nlohmann::json& request) const;

    /// Parses the body, dispatches by path and records the access.
    ServiceResponse handle(const std::string& method, const std::string& path, const std::string& body) const;

    std::vector<std::string> access_log() const;

private:
    std::shared_ptr<const Workspace> ws_;
    mutable std::mutex log_mutex_;
    mutable std::vector<std::string> access_log_;
};

/// Blocks serving /api/* plus optional static files until stop() is called
/// from another thread.
class ExplorerServer {
public:
    ExplorerServer(const ExplorerService& service, std::string static_dir = {});
    ~ExplorerServer();

    /// Binds; returns the bound port (useful with port 0).
    int bind(const std::string& host, int port);
    void listen();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace strata
