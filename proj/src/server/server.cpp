#include "actvocab/server.hpp"

#include <httplib.h>

#include <cmath>
#include <cstdio>

#include "actvocab/embodiments.hpp"

namespace actvocab::server {

namespace {

constexpr std::uint64_t kSessionTag = 0x5E55ULL;

nlohmann::json envelope(nlohmann::json body) {
    body["api_version"] = kApiVersion;
    return body;
}

RequestError bad_request(const std::string& message) { return RequestError(400, "bad_request", message); }

const nlohmann::json& field(const nlohmann::json& request, const char* name) {
    if (!request.is_object()) throw bad_request("request body must be a JSON object");
    const auto it = request.find(name);
    if (it == request.end()) throw bad_request(std::string("missing field '") + name + "'");
    return *it;
}

std::uint64_t unsigned_field(const nlohmann::json& request, const char* name) {
    const auto& v = field(request, name);
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
        throw bad_request(std::string("field '") + name + "' must be a non-negative integer");
    return v.get<std::uint64_t>();
}

std::string string_field(const nlohmann::json& request, const char* name) {
    const auto& v = field(request, name);
    if (!v.is_string()) throw bad_request(std::string("field '") + name + "' must be a string");
    return v.get<std::string>();
}

bool all_finite(const nlohmann::json& j) {
    if (j.is_number_float()) return std::isfinite(j.get<double>());
    if (j.is_structured())
        for (const auto& v : j)
            if (!all_finite(v)) return false;
    return true;
}

nlohmann::json error_body(const std::string& code, const std::string& message) {
    return envelope({{"error", {{"code", code}, {"message", message}}}});
}

}  // namespace

nlohmann::json state_to_wire(const sim::WorldState& s) {
    return {{"agent", {s.x, s.y, s.heading}},
            {"grip", s.grip},
            {"object", {s.object_x, s.object_y}},
            {"carried", s.carried},
            {"goal", {s.goal.target[0], s.goal.target[1]}},
            {"step", s.step_count}};
}

Service::Service(Model model, std::optional<nlohmann::json> stats)
    : model_(std::move(model)), stats_(std::move(stats)) {}

std::size_t Service::session_count() const {
    std::shared_lock lock(sessions_mutex_);
    return sessions_.size();
}

sim::WorldState Service::initial_state(const Session& s) const {
    Rng rng(s.seed, {kSessionTag});
    auto state = sim::random_initial_state(s.embodiment, s.task, rng);
    if (s.target) state.goal.target = *s.target;
    return state;
}

nlohmann::json Service::snapshot(const std::string& id, const Session& s) const {
    return envelope({{"session_id", id},
                     {"embodiment", sim::to_string(s.embodiment)},
                     {"task", {{"kind", sim::to_string(s.task)}, {"target", {s.state.goal.target[0], s.state.goal.target[1]}}}},
                     {"state", state_to_wire(s.state)},
                     {"success", sim::success(s.state, s.state.goal)},
                     {"bounds", {-1.0, 1.0}},
                     {"n_codes", model_.codebook().n_codes()}});
}

std::shared_ptr<Service::Session> Service::find(const nlohmann::json& request) const {
    const auto id = string_field(request, "session_id");
    std::shared_lock lock(sessions_mutex_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) throw RequestError(404, "unknown_session", "no session with id '" + id + "'");
    return it->second;
}

nlohmann::json Service::create_session(const nlohmann::json& request) {
    auto s = std::make_shared<Session>();
    const auto name = string_field(request, "embodiment");
    try {
        s->embodiment = sim::parse_embodiment(name);
    } catch (const std::invalid_argument& e) {
        throw RequestError(400, "unknown_embodiment", e.what());
    }
    if (!model_.has_head(name)) {
        std::string known;
        for (const auto& [id, _] : model_.heads()) known += (known.empty() ? "" : ", ") + id;
        throw RequestError(400, "no_head", "the loaded model has no head for '" + name + "' (available: " + known + ")");
    }

    const auto& task = field(request, "task");
    const auto& kind = task.is_object() ? field(task, "kind") : task;
    if (!kind.is_string()) throw bad_request("task kind must be a string");
    try {
        s->task = sim::parse_task(kind.get<std::string>());
    } catch (const std::invalid_argument& e) {
        throw RequestError(400, "unknown_task", e.what());
    }
    if (task.is_object() && task.contains("target")) {
        const auto& t = task.at("target");
        if (!t.is_array() || t.size() != 2 || !t[0].is_number() || !t[1].is_number())
            throw bad_request("task target must be [x, y]");
        const std::array<double, 2> target{t[0].get<double>(), t[1].get<double>()};
        for (double v : target)
            if (!(std::abs(v) <= 1.0)) throw bad_request("task target must lie in [-1, 1]^2");
        s->target = target;
    }
    s->seed = request.contains("seed") ? unsigned_field(request, "seed") : 0;
    s->state = initial_state(*s);

    std::string id;
    {
        std::unique_lock lock(sessions_mutex_);
        char buf[24];
        std::snprintf(buf, sizeof buf, "s%016llx",
                      static_cast<unsigned long long>(derive_seed(kSessionTag, {next_id_++})));
        id = buf;
        sessions_[id] = s;
    }
    std::lock_guard guard(s->mutex);
    return snapshot(id, *s);
}

nlohmann::json Service::step(const nlohmann::json& request) {
    const auto s = find(request);
    const auto code = unsigned_field(request, "code_id");
    const auto n = model_.codebook().n_codes();
    if (code >= n)
        throw RequestError(400, "code_out_of_range",
                           "code_id " + std::to_string(code) + " outside the valid range [0, " + std::to_string(n) + ")");

    std::lock_guard guard(s->mutex);
    const auto id = sim::to_string(s->embodiment);
    const auto decoded = model_.decode_code(id, code, sim::observe(s->embodiment, s->state));
    const auto action = model_.head(id).to_action(decoded);
    s->state = sim::step(s->embodiment, s->state, action);
    s->code_history.emplace_back(code, action);
    return envelope({{"session_id", request.at("session_id")},
                     {"code_id", code},
                     {"action", action},
                     {"state", state_to_wire(s->state)},
                     {"success", sim::success(s->state, s->state.goal)},
                     {"history_length", s->code_history.size()}});
}

nlohmann::json Service::suggest(const nlohmann::json& request) {
    const auto s = find(request);
    std::lock_guard guard(s->mutex);
    const auto obs = sim::observe(s->embodiment, s->state);
    const auto logits = model_.extractor().extract_logits(obs, s->state.goal);
    return envelope({{"session_id", request.at("session_id")},
                     {"code_id", codebook::argmax(logits)},
                     {"logits", logits}});
}

nlohmann::json Service::reset(const nlohmann::json& request) {
    const auto s = find(request);
    std::lock_guard guard(s->mutex);
    if (request.contains("seed")) s->seed = unsigned_field(request, "seed");
    s->state = initial_state(*s);
    s->code_history.clear();
    return snapshot(request.at("session_id").get<std::string>(), *s);
}

nlohmann::json Service::stats() const {
    nlohmann::json out = {{"codebook", {{"n_codes", model_.codebook().n_codes()}, {"code_dim", model_.codebook().dim()}}},
                          {"available", stats_.has_value()}};
    if (stats_)
        for (const char* key : {"utilization", "divergence", "consistency"})
            out[key] = stats_->contains(key) ? stats_->at(key) : nlohmann::json(nullptr);
    return envelope(std::move(out));
}

nlohmann::json Service::list_embodiments() const {
    auto list = nlohmann::json::array();
    for (auto kind : sim::all_embodiments()) {
        const auto spec = sim::domain_spec(kind);
        list.push_back({{"name", sim::to_string(kind)},
                        {"has_head", model_.has_head(spec.domain_id)},
                        {"action_kind", spec.action_kind == ActionKind::discrete ? "discrete" : "continuous"},
                        {"action_dim", spec.action_dim},
                        {"action_low", spec.action_low},
                        {"action_high", spec.action_high}});
    }
    return envelope({{"embodiments", list}, {"tasks", {"reach", "pick_place"}}});
}

Response Service::handle(const std::string& endpoint, const nlohmann::json& request) {
    try {
        nlohmann::json body;
        if (endpoint == "create-session") body = create_session(request);
        else if (endpoint == "step") body = step(request);
        else if (endpoint == "suggest") body = suggest(request);
        else if (endpoint == "reset") body = reset(request);
        else if (endpoint == "stats") body = stats();
        else if (endpoint == "list-embodiments") body = list_embodiments();
        else throw RequestError(404, "unknown_endpoint", "no endpoint named '" + endpoint + "'");
        if (!all_finite(body)) return {500, error_body("non_finite", "response contained a non-finite number")};
        return {200, std::move(body)};
    } catch (const RequestError& e) {
        return {e.status(), error_body(e.code(), e.what())};
    } catch (const nlohmann::json::exception& e) {
        return {400, error_body("bad_request", e.what())};
    } catch (const std::exception& e) {
        return {500, error_body("internal", e.what())};
    }
}

struct HttpServer::Impl {
    Service& service;
    httplib::Server http;

    explicit Impl(Service& s) : service(s) {
        for (const char* name : {"create-session", "step", "suggest", "reset", "stats", "list-embodiments"}) {
            const std::string endpoint = name;
            const auto handler = [this, endpoint](const httplib::Request& req, httplib::Response& res) {
                Response r;
                nlohmann::json body = nlohmann::json::object();
                if (!req.body.empty()) {
                    body = nlohmann::json::parse(req.body, nullptr, false);
                    if (body.is_discarded()) r = {400, error_body("bad_json", "request body is not valid JSON")};
                }
                if (r.body.is_null()) r = service.handle(endpoint, body);
                res.status = r.status;
                res.set_content(r.body.dump(), "application/json");
            };
            http.Post("/" + endpoint, handler);
            if (endpoint == "stats" || endpoint == "list-embodiments") http.Get("/" + endpoint, handler);
        }
    }
};

HttpServer::HttpServer(Service& service) : impl_(std::make_unique<Impl>(service)) {}
HttpServer::~HttpServer() = default;

int HttpServer::bind(const std::string& host, int port) {
    const int bound = port == 0 ? impl_->http.bind_to_any_port(host) : (impl_->http.bind_to_port(host, port) ? port : -1);
    if (bound <= 0) throw std::runtime_error("could not bind " + host + ":" + std::to_string(port));
    return bound;
}

void HttpServer::listen() {
    if (!impl_->http.listen_after_bind()) throw std::runtime_error("server stopped with an error");
}

void HttpServer::stop() { impl_->http.stop(); }

}  // namespace actvocab::server
