#pragma once

// Local HTTP service: sessions that step a simulated embodiment by code id,
// the extractor's suggestion for the current state, and cached analysis.
//
// Every endpoint takes and returns JSON and every response carries
// {"api_version": 1}. Failures return {"api_version": 1, "error": {"code",
// "message"}} with a 4xx status for client faults.

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "actvocab/json.hpp"
#include "actvocab/model.hpp"

namespace actvocab::server {

inline constexpr int kApiVersion = 1;

class RequestError : public std::runtime_error {
public:
    RequestError(int status, std::string code, const std::string& message)
        : std::runtime_error(message), status_(status), code_(std::move(code)) {}
    int status() const { return status_; }
    const std::string& code() const { return code_; }

private:
    int status_;
    std::string code_;
};

struct Response {
    int status = 200;
    nlohmann::json body;
};

nlohmann::json state_to_wire(const sim::WorldState& s);

class Service {
public:
    /// `stats` is the output of the analyze command, if available.
    explicit Service(Model model, std::optional<nlohmann::json> stats = std::nullopt);

    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    nlohmann::json create_session(const nlohmann::json& request);
    nlohmann::json step(const nlohmann::json& request);
    nlohmann::json suggest(const nlohmann::json& request);
    nlohmann::json reset(const nlohmann::json& request);
    nlohmann::json stats() const;
    nlohmann::json list_embodiments() const;

    /// Dispatches by endpoint name and turns exceptions into error envelopes.
    Response handle(const std::string& endpoint, const nlohmann::json& request);

    const Model& model() const { return model_; }
    std::size_t session_count() const;

private:
    struct Session {
        std::mutex mutex;
        sim::EmbodimentKind embodiment;
        sim::TaskKind task;
        std::optional<std::array<double, 2>> target;
        std::uint64_t seed = 0;
        sim::WorldState state;
        std::vector<std::pair<std::size_t, sim::Action>> code_history;
    };

    std::shared_ptr<Session> find(const nlohmann::json& request) const;
    sim::WorldState initial_state(const Session& s) const;
    nlohmann::json snapshot(const std::string& id, const Session& s) const;

    const Model model_;
    const std::optional<nlohmann::json> stats_;
    mutable std::shared_mutex sessions_mutex_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    std::uint64_t next_id_ = 1;
};

// Binds the service to an HTTP listener. Endpoints are POST /<name>; stats
// and list-embodiments also answer GET.
class HttpServer {
public:
    explicit HttpServer(Service& service);
    ~HttpServer();

    /// Port 0 picks a free port. Returns the bound port; throws on failure.
    int bind(const std::string& host, int port);
    /// Blocks until stop() is called.
    void listen();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace actvocab::server
