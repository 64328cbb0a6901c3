#include "actvocab/dataset.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace actvocab::sim {

using nlohmann::json;

namespace {

constexpr std::uint64_t kMaxAttempts = 1000;

json goal_json(const Goal& g) { return json{{"task", to_string(g.task)}, {"target", g.target}}; }

Goal goal_from_json(const json& j) {
    Goal g;
    g.task = parse_task(j.at("task").get<std::string>());
    g.target = j.at("target").get<std::array<double, 2>>();
    return g;
}

}  // namespace

std::size_t Dataset::sample_count() const {
    std::size_t n = 0;
    for (const auto& t : trajectories) n += t.length();
    return n;
}

Trajectory rollout_expert(EmbodimentKind kind, const WorldState& initial, const ExpertNoise& noise, Rng& rng,
                          std::uint64_t max_steps) {
    Trajectory t;
    t.domain_id = to_string(kind);
    t.goal = initial.goal;
    t.initial_state = initial;
    WorldState s = initial;
    for (std::uint64_t i = 0; i < max_steps; ++i) {
        t.observations.push_back(observe(kind, s));
        t.actions.push_back(expert_action(kind, s, s.goal, noise, &rng));
        s = step(kind, s, t.actions.back());
        if (success(s, s.goal)) {
            t.success = true;
            break;
        }
    }
    return t;
}

Dataset generate_dataset(EmbodimentKind kind, TaskKind task, const GeneratorConfig& config, unsigned workers) {
    if (config.n_trajectories == 0) throw std::invalid_argument("generate_dataset needs n_trajectories >= 1");
    if (config.max_steps == 0 || config.max_steps > kDefaultMaxSteps)
        throw std::invalid_argument("generate_dataset: max_steps must lie in [1, 200]");
    Dataset d;
    d.header.domain_id = to_string(kind);
    d.header.task = task;
    d.header.generator = config;
    d.trajectories.resize(config.n_trajectories);

    auto make = [&](std::uint64_t index) {
        for (std::uint64_t attempt = 0; attempt < kMaxAttempts; ++attempt) {
            Rng rng(config.seed, {index, attempt});
            const WorldState initial = random_initial_state(kind, task, rng);
            Trajectory t = rollout_expert(kind, initial, config.noise, rng, config.max_steps);
            if (t.success) return t;
        }
        throw std::runtime_error("expert failed " + std::to_string(kMaxAttempts) + " times for trajectory " +
                                 std::to_string(index));
    };

    workers = std::max(1u, workers);
    if (workers == 1) {
        for (std::uint64_t i = 0; i < config.n_trajectories; ++i) d.trajectories[i] = make(i);
        return d;
    }
    std::vector<std::exception_ptr> errors(workers);
    {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                try {
                    for (std::uint64_t i = w; i < config.n_trajectories; i += workers) d.trajectories[i] = make(i);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return d;
}

json to_json(const WorldState& s) {
    return json{{"agent", {s.x, s.y, s.heading}},
                {"vel", {s.vx, s.vy}},
                {"grip", s.grip},
                {"object", {s.object_x, s.object_y}},
                {"carried", s.carried},
                {"goal", goal_json(s.goal)},
                {"step", s.step_count}};
}

WorldState world_state_from_json(const json& j) {
    WorldState s;
    const auto agent = j.at("agent").get<std::array<double, 3>>();
    const auto vel = j.at("vel").get<std::array<double, 2>>();
    const auto object = j.at("object").get<std::array<double, 2>>();
    s.x = agent[0];
    s.y = agent[1];
    s.heading = agent[2];
    s.vx = vel[0];
    s.vy = vel[1];
    s.grip = j.at("grip").get<int>();
    s.object_x = object[0];
    s.object_y = object[1];
    s.carried = j.at("carried").get<int>();
    s.goal = goal_from_json(j.at("goal"));
    s.step_count = j.at("step").get<std::uint64_t>();
    return s;
}

json to_json(const Trajectory& t) {
    return json{{"domain_id", t.domain_id},      {"goal", goal_json(t.goal)},
                {"initial_state", to_json(t.initial_state)}, {"observations", t.observations},
                {"actions", t.actions},          {"success", t.success}};
}

Trajectory trajectory_from_json(const json& j) {
    Trajectory t;
    t.domain_id = j.at("domain_id").get<std::string>();
    t.goal = goal_from_json(j.at("goal"));
    t.initial_state = world_state_from_json(j.at("initial_state"));
    t.observations = j.at("observations").get<std::vector<Observation>>();
    t.actions = j.at("actions").get<std::vector<Action>>();
    t.success = j.at("success").get<bool>();
    return t;
}

json to_json(const DatasetHeader& h) {
    return json{{"format_version", h.format_version},
                {"domain_id", h.domain_id},
                {"task", to_string(h.task)},
                {"generator",
                 {{"n_trajectories", h.generator.n_trajectories},
                  {"seed", h.generator.seed},
                  {"noise_sigma", h.generator.noise.sigma},
                  {"random_move_probability", h.generator.noise.random_move_probability},
                  {"max_steps", h.generator.max_steps}}}};
}

DatasetHeader header_from_json(const json& j) {
    DatasetHeader h;
    h.format_version = j.at("format_version").get<int>();
    if (h.format_version != kDatasetFormatVersion)
        throw std::runtime_error("dataset format_version " + std::to_string(h.format_version) +
                                 " is not supported (expected " + std::to_string(kDatasetFormatVersion) + ")");
    h.domain_id = j.at("domain_id").get<std::string>();
    parse_embodiment(h.domain_id);
    h.task = parse_task(j.at("task").get<std::string>());
    const auto& g = j.at("generator");
    h.generator.n_trajectories = g.at("n_trajectories").get<std::uint64_t>();
    h.generator.seed = g.at("seed").get<std::uint64_t>();
    h.generator.noise.sigma = g.at("noise_sigma").get<double>();
    h.generator.noise.random_move_probability = g.at("random_move_probability").get<double>();
    h.generator.max_steps = g.at("max_steps").get<std::uint64_t>();
    return h;
}

std::string serialize_dataset(const Dataset& dataset) {
    std::string out = to_json(dataset.header).dump();
    out += '\n';
    for (const auto& t : dataset.trajectories) {
        out += to_json(t).dump();
        out += '\n';
    }
    return out;
}

Dataset parse_dataset(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    Dataset d;
    if (!std::getline(in, line) || line.empty()) throw std::runtime_error("dataset: missing header line");
    try {
        d.header = header_from_json(json::parse(line));
        std::size_t line_no = 1;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            try {
                d.trajectories.push_back(trajectory_from_json(json::parse(line)));
            } catch (const std::exception& e) {
                throw std::runtime_error("dataset line " + std::to_string(line_no) + ": " + e.what());
            }
        }
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("dataset: malformed record: ") + e.what());
    }
    return d;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open '" + tmp.string() + "' for writing");
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        out.flush();
        if (!out) throw std::runtime_error("write to '" + tmp.string() + "' failed");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw std::runtime_error("cannot move '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
    }
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& path) {
    write_file_atomic(path, serialize_dataset(dataset));
}

Dataset read_dataset(const std::filesystem::path& path) { return parse_dataset(read_file(path)); }

void validate_dataset(const Dataset& dataset) {
    const EmbodimentKind kind = dataset.embodiment();
    const DomainSpec spec = domain_spec(kind);
    for (std::size_t ti = 0; ti < dataset.trajectories.size(); ++ti) {
        const auto& t = dataset.trajectories[ti];
        auto fail = [&](std::size_t step_index, const std::string& why) {
            throw std::runtime_error("trajectory " + std::to_string(ti) + " step " + std::to_string(step_index) + ": " +
                                     why);
        };
        if (t.domain_id != dataset.header.domain_id) fail(0, "domain_id differs from the header");
        if (t.goal.task != dataset.header.task) fail(0, "task differs from the header");
        if (t.actions.empty() || t.actions.size() > kDefaultMaxSteps) fail(0, "length outside [1, 200]");
        if (t.observations.size() != t.actions.size()) fail(0, "observation and action counts differ");
        WorldState s = t.initial_state;
        if (!(s.goal == t.goal)) fail(0, "initial state goal differs from the trajectory goal");
        for (std::size_t i = 0; i < t.actions.size(); ++i) {
            try {
                validate_observation(t.observations[i]);
                spec.check_action(t.actions[i]);
            } catch (const std::exception& e) {
                fail(i, e.what());
            }
            if (observe(kind, s) != t.observations[i]) fail(i, "observation does not match replay");
            s = step(kind, s, t.actions[i]);
        }
        if (success(s, t.goal) != t.success) fail(t.actions.size(), "recorded success flag does not match replay");
    }
}

}  // namespace actvocab::sim
