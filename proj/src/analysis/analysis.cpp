#include "actvocab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace actvocab::analysis {

namespace {

constexpr std::uint64_t kProbeStartTag = 0x9B0BEULL;
constexpr std::uint64_t kControlTag = 0xC047ULL;
constexpr double kSimplexTolerance = 1e-9;

void check_simplex(std::span<const double> p, const char* name) {
    double total = 0.0;
    for (double x : p) {
        if (!(x >= 0.0) || !std::isfinite(x)) throw std::invalid_argument(std::string(name) + " has a negative or non-finite entry");
        total += x;
    }
    if (std::abs(total - 1.0) > kSimplexTolerance)
        throw std::invalid_argument(std::string(name) + " sums to " + std::to_string(total) + ", not 1");
}

double kl_to_mid(std::span<const double> p, std::span<const double> q) {
    double kl = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] == 0.0) continue;
        kl += p[i] * std::log(p[i] / (0.5 * (p[i] + q[i])));
    }
    return kl;
}

sim::WorldState centered_start(sim::EmbodimentKind kind, const ProbeConfig& config, std::size_t index) {
    Rng rng(config.seed, {kProbeStartTag, index});
    sim::WorldState s;
    const bool lattice = kind == sim::EmbodimentKind::grid_discrete;
    auto coord = [&] {
        const double v = rng.uniform(-config.start_extent, config.start_extent);
        return lattice ? std::round(v / sim::kGridStep) * sim::kGridStep : v;
    };
    s.x = coord();
    s.y = coord();
    const double heading = rng.uniform(-std::numbers::pi, std::numbers::pi);
    if (kind == sim::EmbodimentKind::diff_drive) s.heading = heading;
    // keep the object out of reach so the gripper cannot change the dynamics
    s.object_x = s.x > 0.0 ? -0.9 : 0.9;
    s.object_y = s.y > 0.0 ? -0.9 : 0.9;
    s.goal = {sim::TaskKind::reach, {0.0, 0.0}};
    return s;
}

std::optional<std::array<double, 2>> mean_direction(const Model& model, std::size_t row, sim::EmbodimentKind kind,
                                                    const ProbeConfig& config) {
    const auto id = sim::to_string(kind);
    const auto& head = model.head(id);
    const auto features_of = [&](const sim::WorldState& s) {
        const auto obs = sim::observe(kind, s);
        return model.extractor().encode_obs_features(obs);
    };
    double dx = 0.0, dy = 0.0;
    for (std::size_t i = 0; i < config.n_starts; ++i) {
        const auto start = centered_start(kind, config, i);
        auto s = start;
        for (std::size_t t = 0; t < config.horizon; ++t) {
            const auto decoded = head.decode(model.codebook().row(row), features_of(s));
            s = sim::step(kind, s, head.to_action(decoded));
        }
        dx += s.x - start.x;
        dy += s.y - start.y;
    }
    const double norm = std::hypot(dx, dy);
    if (!(norm > 1e-12)) return std::nullopt;
    return std::array<double, 2>{dx / norm, dy / norm};
}

std::vector<std::vector<std::size_t>> control_mapping(std::size_t n_codes, std::size_t n_embodiments,
                                                      std::uint64_t seed, std::uint64_t control) {
    std::vector<std::vector<std::size_t>> out(n_embodiments);
    for (std::size_t e = 0; e < n_embodiments; ++e) {
        auto& perm = out[e];
        perm.resize(n_codes);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        Rng rng(seed, {kControlTag, control, e});
        for (std::size_t i = n_codes - 1; i > 0; --i) std::swap(perm[i], perm[rng.index(i + 1)]);
    }
    return out;
}

double fraction_consistent(const Model& model, std::span<const sim::EmbodimentKind> embodiments,
                           const ProbeConfig& config, const std::vector<std::vector<std::size_t>>* mapping,
                           std::vector<CodeConsistency>* keep) {
    const std::size_t n = model.codebook().n_codes();
    std::size_t hits = 0;
    for (std::size_t c = 0; c < n; ++c) {
        auto r = consistency_probe(model, c, embodiments, config, mapping);
        hits += r.consistent ? 1 : 0;
        if (keep) keep->push_back(std::move(r));
    }
    return static_cast<double>(hits) / static_cast<double>(n);
}

double target_distance(const sim::WorldState& s) {
    if (sim::success(s, s.goal)) return -1.0;
    if (s.goal.task == sim::TaskKind::reach) return sim::distance(s.x, s.y, s.goal.target[0], s.goal.target[1]);
    const double carry = sim::distance(s.object_x, s.object_y, s.goal.target[0], s.goal.target[1]);
    if (s.carried) return carry;
    // not carried: approach the object, then the remaining carry distance
    return 2.0 + sim::distance(s.x, s.y, s.object_x, s.object_y) + carry;
}

nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace

std::string UtilizationProfile::label() const { return domain_id + "/" + sim::to_string(task); }

UtilizationProfile profile_utilization(const Model& model, const sim::Dataset& dataset) {
    if (dataset.sample_count() == 0) throw std::invalid_argument("cannot profile an empty dataset");
    const std::size_t n = model.codebook().n_codes();
    UtilizationProfile p;
    p.domain_id = dataset.header.domain_id;
    p.task = dataset.header.task;
    p.histogram.assign(n, 0.0);
    for (const auto& t : dataset.trajectories)
        for (const auto& obs : t.observations) {
            const auto logits = model.extractor().extract_logits(obs, t.goal);
            p.histogram[codebook::argmax(logits)] += 1.0;
            ++p.n_samples;
        }
    for (auto& h : p.histogram) h /= static_cast<double>(p.n_samples);
    return p;
}

double js_divergence(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size())
        throw std::invalid_argument("js_divergence: lengths differ (" + std::to_string(p.size()) + " vs " +
                                    std::to_string(q.size()) + ")");
    check_simplex(p, "p");
    check_simplex(q, "q");
    return std::max(0.0, 0.5 * kl_to_mid(p, q) + 0.5 * kl_to_mid(q, p));
}

DivergenceMatrix divergence_matrix(std::span<const UtilizationProfile> profiles) {
    if (profiles.size() < 2) throw std::invalid_argument("divergence_matrix needs at least two profiles");
    const std::size_t n = profiles.size();
    DivergenceMatrix m;
    m.values.assign(n, std::vector<double>(n, 0.0));
    for (const auto& p : profiles) {
        if (p.histogram.size() != profiles[0].histogram.size())
            throw std::invalid_argument("profiles come from codebooks of different sizes (" +
                                        std::to_string(p.histogram.size()) + " vs " +
                                        std::to_string(profiles[0].histogram.size()) + ")");
        m.labels.push_back(p.label());
    }
    double same_task = 0.0, same_body = 0.0;
    std::size_t n_task = 0, n_body = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double js = js_divergence(profiles[i].histogram, profiles[j].histogram);
            m.values[i][j] = m.values[j][i] = js;
            const bool task_eq = profiles[i].task == profiles[j].task;
            const bool body_eq = profiles[i].domain_id == profiles[j].domain_id;
            if (task_eq && !body_eq) {
                same_task += js;
                ++n_task;
            } else if (!task_eq && body_eq) {
                same_body += js;
                ++n_body;
            }
        }
    const double nan = std::numeric_limits<double>::quiet_NaN();
    m.same_task_cross_embodiment = n_task ? same_task / static_cast<double>(n_task) : nan;
    m.cross_task_same_embodiment = n_body ? same_body / static_cast<double>(n_body) : nan;
    return m;
}

CodeConsistency consistency_probe(const Model& model, std::size_t code_id,
                                  std::span<const sim::EmbodimentKind> embodiments, const ProbeConfig& config,
                                  const std::vector<std::vector<std::size_t>>* mapping) {
    const std::size_t n = model.codebook().n_codes();
    if (code_id >= n)
        throw std::out_of_range("code_id " + std::to_string(code_id) + " outside [0, " + std::to_string(n) + ")");
    if (embodiments.empty()) throw std::invalid_argument("consistency_probe needs at least one embodiment");
    if (config.horizon == 0 || config.n_starts == 0) throw std::invalid_argument("horizon and n_starts must be positive");
    if (mapping && mapping->size() != embodiments.size())
        throw std::invalid_argument("one code mapping per embodiment is required");

    CodeConsistency r;
    r.code = code_id;
    for (std::size_t e = 0; e < embodiments.size(); ++e) {
        const std::size_t row = mapping ? (*mapping)[e].at(code_id) : code_id;
        r.embodiments.push_back(sim::to_string(embodiments[e]));
        r.directions.push_back(mean_direction(model, row, embodiments[e], config));
    }
    const bool defined =
        std::all_of(r.directions.begin(), r.directions.end(), [](const auto& d) { return d.has_value(); });
    if (!defined) return r;
    double lowest = 1.0;
    for (std::size_t i = 0; i < r.directions.size(); ++i)
        for (std::size_t j = i + 1; j < r.directions.size(); ++j) {
            const auto& a = *r.directions[i];
            const auto& b = *r.directions[j];
            lowest = std::min(lowest, a[0] * b[0] + a[1] * b[1]);
        }
    r.min_cosine = lowest;
    r.consistent = lowest > config.cosine_threshold;
    return r;
}

ConsistencyReport consistency_report(const Model& model, std::span<const sim::EmbodimentKind> embodiments,
                                     const ProbeConfig& config) {
    if (config.control_seeds == 0) throw std::invalid_argument("control_seeds must be positive");
    ConsistencyReport r;
    r.consistent_fraction = fraction_consistent(model, embodiments, config, nullptr, &r.codes);
    for (std::size_t c = 0; c < config.control_seeds; ++c) {
        const auto mapping = control_mapping(model.codebook().n_codes(), embodiments.size(), config.seed, c);
        r.control_fractions.push_back(fraction_consistent(model, embodiments, config, &mapping, nullptr));
    }
    r.control_fraction = std::accumulate(r.control_fractions.begin(), r.control_fractions.end(), 0.0) /
                         static_cast<double>(r.control_fractions.size());
    return r;
}

CodeSearch greedy_code_search(const Model& model, sim::EmbodimentKind kind, const sim::WorldState& initial,
                              std::size_t max_steps, std::size_t beam_width) {
    if (beam_width == 0) throw std::invalid_argument("beam_width must be positive");
    const auto& head = model.head(sim::to_string(kind));
    struct Node {
        sim::WorldState state;
        std::vector<std::size_t> codes;
        double score;
    };
    std::vector<Node> beam{{initial, {}, target_distance(initial)}};
    for (std::size_t t = 0; t < max_steps && !sim::success(beam.front().state, initial.goal); ++t) {
        std::vector<Node> next;
        for (const auto& node : beam) {
            const auto features = model.extractor().encode_obs_features(sim::observe(kind, node.state));
            for (std::size_t c = 0; c < model.codebook().n_codes(); ++c) {
                auto s = sim::step(kind, node.state, head.to_action(head.decode(model.codebook().row(c), features)));
                const double score = target_distance(s);
                // codes that land on the same state are interchangeable; keep the first
                const bool seen = std::any_of(next.begin(), next.end(), [&](const Node& n) { return n.state == s; });
                if (seen) continue;
                auto codes = node.codes;
                codes.push_back(c);
                next.push_back({std::move(s), std::move(codes), score});
            }
        }
        std::stable_sort(next.begin(), next.end(), [](const Node& a, const Node& b) { return a.score < b.score; });
        if (next.size() > beam_width) next.resize(beam_width);
        beam = std::move(next);
    }
    CodeSearch out;
    out.codes = std::move(beam.front().codes);
    out.final_state = beam.front().state;
    out.success = sim::success(out.final_state, out.final_state.goal);
    return out;
}

nlohmann::json to_json(const UtilizationProfile& p) {
    return {{"domain_id", p.domain_id},
            {"task", sim::to_string(p.task)},
            {"histogram", p.histogram},
            {"n_samples", p.n_samples}};
}

nlohmann::json to_json(const DivergenceMatrix& m) {
    return {{"labels", m.labels},
            {"values", m.values},
            {"same_task_cross_embodiment", finite_or_null(m.same_task_cross_embodiment)},
            {"cross_task_same_embodiment", finite_or_null(m.cross_task_same_embodiment)}};
}

nlohmann::json to_json(const ConsistencyReport& r) {
    auto codes = nlohmann::json::array();
    for (const auto& c : r.codes) {
        nlohmann::json dirs = nlohmann::json::object();
        for (std::size_t i = 0; i < c.embodiments.size(); ++i)
            dirs[c.embodiments[i]] = c.directions[i] ? nlohmann::json(*c.directions[i]) : nlohmann::json(nullptr);
        codes.push_back({{"code", c.code}, {"directions", dirs}, {"min_cosine", c.min_cosine}, {"consistent", c.consistent}});
    }
    return {{"codes", codes},
            {"consistent_fraction", r.consistent_fraction},
            {"control_fraction", r.control_fraction},
            {"control_fractions", r.control_fractions}};
}

std::string render_matrix(const DivergenceMatrix& m) {
    std::size_t width = 8;
    for (const auto& l : m.labels) width = std::max(width, l.size() + 2);
    std::ostringstream out;
    out << std::setw(static_cast<int>(width)) << "";
    for (std::size_t j = 0; j < m.labels.size(); ++j) out << std::setw(7) << j;
    out << "\n";
    for (std::size_t i = 0; i < m.labels.size(); ++i) {
        out << std::left << std::setw(static_cast<int>(width)) << (std::to_string(i) + " " + m.labels[i])
            << std::right;
        for (double v : m.values[i]) out << std::setw(7) << std::fixed << std::setprecision(3) << v;
        out << "\n";
    }
    out << std::fixed << std::setprecision(4);
    out << "same task, cross embodiment: " << m.same_task_cross_embodiment << "\n";
    out << "cross task, same embodiment: " << m.cross_task_same_embodiment << "\n";
    return out.str();
}

std::string render_consistency(const ConsistencyReport& r) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(4);
    out << "consistent_fraction " << r.consistent_fraction << "  control_fraction " << r.control_fraction << "\n";
    for (const auto& c : r.codes)
        if (c.consistent) out << "  code " << c.code << " min cosine " << c.min_cosine << "\n";
    return out.str();
}

}  // namespace actvocab::analysis
