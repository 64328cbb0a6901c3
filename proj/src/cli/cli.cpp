#include "actvocab/cli.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <iostream>
#include <set>
#include <sstream>

#include "actvocab/analysis.hpp"
#include "actvocab/checkpoint.hpp"
#include "actvocab/server.hpp"
#include "actvocab/trainer.hpp"

namespace actvocab::cli {

namespace {

struct Failure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::vector<std::string> split(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

std::string error_line(const std::string& command, const std::string& message) {
    return nlohmann::json{{"error", message}, {"command", command}}.dump();
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& path) {
    const std::filesystem::path p(path);
    return p.is_absolute() ? p : base / p;
}

std::string fixed(double v, int digits = 4) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(digits) << v;
    return s.str();
}

std::atomic<server::HttpServer*> g_server{nullptr};

extern "C" void on_interrupt(int) {
    if (auto* s = g_server.load()) s->stop();
}

// ----------------------------------------------------------------- options

struct GenData {
    std::string embodiment = "point_velocity";
    std::string task = "reach";
    std::uint64_t n = 100;
    std::uint64_t seed = 0;
    std::uint64_t max_steps = sim::kDefaultMaxSteps;
    unsigned workers = 1;
    std::string out;
};

struct Train {
    std::string config;
    std::string out;
    std::string mode;
    std::string metrics;
    std::optional<std::uint64_t> seed;
    std::size_t codes = 32;
    std::size_t code_dim = 16;
};

struct Adapt {
    std::string ckpt;
    std::string embodiment = "accel_point";
    std::string data;
    std::uint64_t steps = 5000;
    std::size_t batch = 64;
    double lr = 3e-4;
    std::uint64_t seed = 0;
    std::string out;
};

struct Eval {
    std::string ckpt;
    std::string embodiment = "point_velocity";
    std::string task = "reach";
    std::uint64_t episodes = 100;
    std::uint64_t seed = 0;
    std::uint64_t max_steps = sim::kDefaultMaxSteps;
    bool json = false;
};

struct Probe {
    std::string ckpt;
    std::string embodiments;
    std::size_t horizon = 5;
    std::size_t starts = 20;
    double threshold = 0.7;
    std::size_t controls = 5;
    std::uint64_t seed = 0;
    std::string out;
};

struct Analyze {
    std::string ckpt;
    std::string datasets;
    std::string out = "analysis.json";
    std::string text;
    Probe probe;
};

struct Serve {
    std::string ckpt;
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string stats;
    std::uint64_t seed = 0;
};

// ---------------------------------------------------------------- commands

void gen_data(const GenData& o, std::ostream& out) {
    sim::GeneratorConfig g;
    g.n_trajectories = o.n;
    g.seed = o.seed;
    g.max_steps = o.max_steps;
    const auto ds = sim::generate_dataset(sim::parse_embodiment(o.embodiment), sim::parse_task(o.task), g, o.workers);
    sim::validate_dataset(ds);
    sim::write_dataset(ds, o.out);
    out << "wrote " << ds.trajectories.size() << " trajectories (" << ds.sample_count() << " samples) to " << o.out
        << "\n";
}

void train(const Train& o, std::ostream& out) {
    auto config = read_train_config(o.config);
    if (o.seed) config.seed = *o.seed;
    if (!o.mode.empty()) {
        if (o.mode == "gumbel") config.selection_mode = codebook::SelectionMode::soft;
        else if (o.mode == "ste") config.selection_mode = codebook::SelectionMode::ste;
        else throw Failure("--mode must be gumbel or ste, got '" + o.mode + "'");
    }
    const auto base = std::filesystem::path(o.config).parent_path();
    std::vector<sim::Dataset> datasets;
    for (const auto& d : config.domains) {
        datasets.push_back(sim::read_dataset(resolve(base, d.path)));
        sim::validate_dataset(datasets.back());
    }

    ModelConfig mc;
    mc.n_codes = o.codes;
    mc.code_dim = o.code_dim;
    mc.seed = config.seed;
    auto model = Model::init(mc);
    for (const auto& ds : datasets)
        if (!model.has_head(ds.header.domain_id)) model.add_head(sim::domain_spec(ds.embodiment()), config.seed);
    model.check_head_budget();

    Trainer trainer(model, config, datasets);
    std::ostringstream metrics;
    StepResult last;
    trainer.run(config.total_steps, &metrics, [&](const StepResult& r) { last = r; });
    if (!o.metrics.empty()) sim::write_file_atomic(o.metrics, metrics.str());

    const auto u = mixture_utilization(model, datasets, config.normalized_rates());
    Checkpoint ck(model.clone());
    ck.step = trainer.step();
    ck.rng = {config.seed, trainer.step()};
    ck.moments = trainer.optimizer().moments();
    ck.train_config = to_json(config);
    ck.notes = {{"mode", o.mode.empty() ? codebook::to_string(config.selection_mode) : o.mode},
                {"utilization_entropy", u.entropy},
                {"perplexity", u.perplexity}};
    save_checkpoint(ck, o.out);
    out << "steps " << trainer.step() << " loss " << last.total_loss << " utilization_entropy " << fixed(u.entropy)
        << " perplexity " << fixed(u.perplexity) << "\n";
}

void adapt_cmd(const Adapt& o, std::ostream& out) {
    auto base = load_checkpoint(o.ckpt);
    std::vector<sim::Dataset> datasets;
    for (const auto& path : split(o.data)) datasets.push_back(sim::read_dataset(path));
    if (datasets.empty()) throw Failure("--data needs at least one dataset");
    AdaptConfig ac;
    ac.steps = o.steps;
    ac.batch_size = o.batch;
    ac.optimizer.learning_rate = o.lr;
    ac.seed = o.seed;
    auto result = adapt(base.model, sim::domain_spec(sim::parse_embodiment(o.embodiment)), std::move(datasets), ac);

    Checkpoint ck(result.model.clone());
    ck.step = base.step;
    ck.rng = base.rng;
    ck.moments = base.moments;
    for (auto& [name, m] : result.head_moments) ck.moments[name] = m;
    ck.train_config = base.train_config;
    ck.notes = base.notes;
    ck.notes["adapted"] = {{"embodiment", o.embodiment}, {"steps", o.steps}, {"seed", o.seed},
                           {"trainable_fraction", result.trainable_fraction}};
    save_checkpoint(ck, o.out);
    out << "trainable " << result.trainable_parameters << " of " << result.total_parameters << " ("
        << fixed(100.0 * result.trainable_fraction, 2) << "%)\n";
}

void eval_cmd(const Eval& o, std::ostream& out) {
    const auto ck = load_checkpoint(o.ckpt);
    const auto r = evaluate(ck.model, sim::parse_embodiment(o.embodiment), sim::parse_task(o.task), o.episodes, o.seed,
                            o.max_steps);
    if (o.json)
        out << nlohmann::json{{"episodes", r.episodes}, {"successes", r.successes}, {"success_rate", r.success_rate},
                              {"mean_length", r.mean_length}}
                   .dump()
            << "\n";
    else
        out << r.success_rate << "\n";
}

std::vector<sim::EmbodimentKind> probe_embodiments(const Model& model, const std::string& list) {
    std::vector<sim::EmbodimentKind> kinds;
    if (list.empty()) {
        for (auto k : sim::pretraining_embodiments())
            if (model.has_head(sim::to_string(k))) kinds.push_back(k);
    } else {
        for (const auto& name : split(list)) kinds.push_back(sim::parse_embodiment(name));
    }
    if (kinds.empty()) throw Failure("no embodiments to probe");
    return kinds;
}

analysis::ProbeConfig probe_config(const Probe& o) {
    analysis::ProbeConfig c;
    c.horizon = o.horizon;
    c.n_starts = o.starts;
    c.cosine_threshold = o.threshold;
    c.control_seeds = o.controls;
    c.seed = o.seed;
    return c;
}

void probe_cmd(const Probe& o, std::ostream& out) {
    const auto ck = load_checkpoint(o.ckpt);
    const auto report = analysis::consistency_report(ck.model, probe_embodiments(ck.model, o.embodiments), probe_config(o));
    if (!o.out.empty()) sim::write_file_atomic(o.out, analysis::to_json(report).dump(2) + "\n");
    out << "consistent_fraction " << fixed(report.consistent_fraction) << "  control_fraction "
        << fixed(report.control_fraction) << "\n";
}

void analyze_cmd(const Analyze& o, std::ostream& out) {
    const auto ck = load_checkpoint(o.ckpt);
    std::vector<analysis::UtilizationProfile> profiles;
    for (const auto& path : split(o.datasets)) profiles.push_back(analysis::profile_utilization(ck.model, sim::read_dataset(path)));
    const auto matrix = analysis::divergence_matrix(profiles);
    const auto report =
        analysis::consistency_report(ck.model, probe_embodiments(ck.model, o.probe.embodiments), probe_config(o.probe));

    nlohmann::json j = {{"codebook", {{"n_codes", ck.model.codebook().n_codes()}, {"code_dim", ck.model.codebook().dim()}}},
                        {"utilization", nlohmann::json::array()},
                        {"divergence", analysis::to_json(matrix)},
                        {"consistency", analysis::to_json(report)}};
    for (const auto& p : profiles) j["utilization"].push_back(analysis::to_json(p));
    sim::write_file_atomic(o.out, j.dump(2) + "\n");
    const auto text = analysis::render_matrix(matrix) + analysis::render_consistency(report);
    if (!o.text.empty()) sim::write_file_atomic(o.text, text);
    out << text;
}

void serve_cmd(const Serve& o, std::ostream& out) {
    auto ck = load_checkpoint(o.ckpt);
    std::optional<nlohmann::json> stats;
    if (!o.stats.empty()) stats = nlohmann::json::parse(sim::read_file(o.stats));
    server::Service service(std::move(ck.model), std::move(stats));
    server::HttpServer http(service);
    const int port = http.bind(o.host, o.port);
    g_server = &http;
    std::signal(SIGINT, on_interrupt);
    std::signal(SIGTERM, on_interrupt);
    out << "listening on http://" << o.host << ":" << port << std::endl;
    http.listen();
    g_server = nullptr;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Shared discrete action codes across heterogeneous embodiments", "actvocab"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);

    GenData gd;
    auto* c_gen = app.add_subcommand("gen-data", "Generate expert demonstrations");
    c_gen->add_option("--embodiment", gd.embodiment, "Embodiment name");
    c_gen->add_option("--task", gd.task, "reach or pick_place");
    c_gen->add_option("--n", gd.n, "Number of successful trajectories");
    c_gen->add_option("--seed", gd.seed, "Random seed");
    c_gen->add_option("--max-steps", gd.max_steps, "Episode step limit");
    c_gen->add_option("--workers", gd.workers, "Worker threads (output does not depend on this)");
    c_gen->add_option("--out", gd.out, "Output dataset path")->required();

    Train tr;
    auto* c_train = app.add_subcommand("train", "Train the shared codebook, extractor and heads");
    c_train->add_option("--config", tr.config, "Training config (JSON)")->required();
    c_train->add_option("--out", tr.out, "Output checkpoint path")->required();
    c_train->add_option("--mode", tr.mode, "gumbel or ste (default: from config)");
    c_train->add_option("--metrics", tr.metrics, "Write the metrics log (JSON lines) here");
    c_train->add_option("--seed", tr.seed, "Override the config seed");
    c_train->add_option("--codes", tr.codes, "Codebook size");
    c_train->add_option("--code-dim", tr.code_dim, "Code dimension");

    Adapt ad;
    auto* c_adapt = app.add_subcommand("adapt", "Add and train a head for a new embodiment with everything else frozen");
    c_adapt->add_option("--ckpt", ad.ckpt, "Base checkpoint")->required();
    c_adapt->add_option("--embodiment", ad.embodiment, "New embodiment");
    c_adapt->add_option("--data", ad.data, "Comma-separated datasets for the new embodiment")->required();
    c_adapt->add_option("--steps", ad.steps, "Optimizer steps");
    c_adapt->add_option("--batch", ad.batch, "Batch size");
    c_adapt->add_option("--lr", ad.lr, "Learning rate");
    c_adapt->add_option("--seed", ad.seed, "Random seed");
    c_adapt->add_option("--out", ad.out, "Output checkpoint path")->required();

    Eval ev;
    auto* c_eval = app.add_subcommand("eval", "Closed-loop success rate");
    c_eval->add_option("--ckpt", ev.ckpt, "Checkpoint")->required();
    c_eval->add_option("--embodiment", ev.embodiment, "Embodiment name");
    c_eval->add_option("--task", ev.task, "reach or pick_place");
    c_eval->add_option("--episodes", ev.episodes, "Number of episodes");
    c_eval->add_option("--seed", ev.seed, "Random seed");
    c_eval->add_option("--max-steps", ev.max_steps, "Episode step limit");
    c_eval->add_flag("--json", ev.json, "Print a JSON record instead of the bare rate");

    const auto add_probe_options = [](CLI::App* c, Probe& p) {
        c->add_option("--embodiments", p.embodiments, "Comma-separated embodiments (default: pretrained heads)");
        c->add_option("--horizon", p.horizon, "Steps per replay");
        c->add_option("--starts", p.starts, "Centered starts per embodiment");
        c->add_option("--threshold", p.threshold, "Minimum pairwise cosine for a consistent code");
        c->add_option("--controls", p.controls, "Shuffled-code control seeds");
        c->add_option("--seed", p.seed, "Random seed");
    };

    Analyze an;
    auto* c_analyze = app.add_subcommand("analyze", "Utilization profiles, JS divergence matrix and consistency probe");
    c_analyze->add_option("--ckpt", an.ckpt, "Checkpoint")->required();
    c_analyze->add_option("--datasets", an.datasets, "Comma-separated datasets")->required();
    c_analyze->add_option("--out", an.out, "JSON report path");
    c_analyze->add_option("--text", an.text, "Also write the plain-text report here");
    add_probe_options(c_analyze, an.probe);

    Probe pr;
    auto* c_probe = app.add_subcommand("probe", "Cross-embodiment code consistency against a shuffled control");
    c_probe->add_option("--ckpt", pr.ckpt, "Checkpoint")->required();
    c_probe->add_option("--out", pr.out, "Write the JSON report here");
    add_probe_options(c_probe, pr);

    Serve sv;
    auto* c_serve = app.add_subcommand("serve", "Serve sessions and analysis over HTTP");
    c_serve->add_option("--ckpt", sv.ckpt, "Checkpoint")->required();
    c_serve->add_option("--host", sv.host, "Bind address");
    c_serve->add_option("--port", sv.port, "Port (0 picks a free one)");
    c_serve->add_option("--stats", sv.stats, "Analysis report from the analyze command");
    c_serve->add_option("--seed", sv.seed, "Accepted for uniformity; sessions take their own seeds");

    std::string command = "actvocab";
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        for (auto* sub : app.get_subcommands()) command = sub->get_name();
        err << error_line(command, e.what()) << "\n";
        const auto* target = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
        err << target->help();
        return 2;
    }

    auto* chosen = app.get_subcommands().front();
    command = chosen->get_name();
    try {
        if (chosen == c_gen) gen_data(gd, out);
        else if (chosen == c_train) train(tr, out);
        else if (chosen == c_adapt) adapt_cmd(ad, out);
        else if (chosen == c_eval) eval_cmd(ev, out);
        else if (chosen == c_analyze) analyze_cmd(an, out);
        else if (chosen == c_probe) probe_cmd(pr, out);
        else if (chosen == c_serve) serve_cmd(sv, out);
    } catch (const std::exception& e) {
        err << error_line(command, e.what()) << "\n";
        return 1;
    }
    return 0;
}

}  // namespace actvocab::cli
