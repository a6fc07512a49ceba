#include <chrono>
#include <ctime>
#include <filesystem>
#include <map>
#include <ostream>

#include <CLI11.hpp>

#include "cli.hpp"
#include "spft/checkpoint.hpp"
#include "spft/csv.hpp"
#include "spft/fisher.hpp"
#include "spft/theory.hpp"

#ifndef SPFT_VERSION
#define SPFT_VERSION "0.0.0"
#endif

namespace spft::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Context {
    std::string command;
    ExperimentConfig cfg;
    bool fisher = false;
    std::ostream& out;
};

// Collects the files of one run; the manifest lists each with its hash.
class RunDir {
public:
    RunDir(const Context& ctx) : ctx_(ctx), dir_(ctx.cfg.output_dir) { fs::create_directories(dir_); }

    [[nodiscard]] fs::path path(const std::string& name) const { return dir_ / name; }

    void write(const std::string& name, const std::string& bytes) {
        write_file_atomic(dir_ / name, bytes);
        files_[name] = fnv1a_hex(bytes);
    }

    void finish() {
        const std::string config = ctx_.cfg.document.dump(2) + "\n";
        write("config.json", config);
        json m;
        m["tool"] = "spft";
        m["version"] = SPFT_VERSION;
        m["schema_version"] = schema().at("version");
        m["command"] = ctx_.command;
        m["config_hash"] = fnv1a_hex(ctx_.cfg.document.dump());
        m["seeds"] = ctx_.cfg.seeds;
        m["jobs"] = ctx_.cfg.jobs;
        m["compiler"] = std::string(__VERSION__);
        m["outputs"] = files_;
        char stamp[32];
        const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        std::tm tm{};
        gmtime_r(&now, &tm);
        std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &tm);
        m["timestamp_utc"] = stamp;
        write_file_atomic(dir_ / "manifest.json", m.dump(2) + "\n");
    }

private:
    const Context& ctx_;
    fs::path dir_;
    std::map<std::string, std::string> files_;
};

Network load_source(const ExperimentConfig& cfg) {
    if (cfg.checkpoint.empty()) throw ConfigError("checkpoint: required for this command");
    if (!fs::exists(cfg.checkpoint)) throw ConfigError("checkpoint: file not found: " + cfg.checkpoint);
    return load_checkpoint(cfg.checkpoint);
}

std::optional<FisherDiag> load_fisher_for(const ExperimentConfig& cfg, const std::vector<PenaltyKind>& kinds) {
    bool needed = false;
    for (PenaltyKind k : kinds) needed = needed || uses_fisher(k);
    if (!needed) return std::nullopt;
    const fs::path p = fisher_sidecar_path(cfg.checkpoint);
    if (!fs::exists(p)) throw ConfigError("fisher sidecar not found: " + p.string() + " (run pretrain with --fisher)");
    FisherSidecar s = load_fisher(p);
    return FisherDiag{std::move(s.values), s.sample_count, cfg.checkpoint};
}

FinetuneSpec base_spec(const ExperimentConfig& cfg, PenaltyKind kind) {
    FinetuneSpec s;
    s.kind = kind;
    s.alpha = cfg.alpha;
    s.beta = cfg.beta;
    s.epsilon = cfg.epsilon;
    s.train = cfg.train;
    return with_seed(s, cfg.seeds.front());
}

std::vector<Network> load_finetuned(const ExperimentConfig& cfg, std::vector<std::string>& names) {
    if (cfg.finetuned.empty()) throw ConfigError("finetuned: at least one checkpoint is required");
    std::vector<Network> nets;
    for (const std::string& p : cfg.finetuned) {
        if (!fs::exists(p)) throw ConfigError("finetuned: file not found: " + p);
        nets.push_back(load_checkpoint(p));
        names.push_back(fs::path(p).stem().string());
    }
    return nets;
}

int cmd_pretrain(const Context& ctx) {
    const ExperimentConfig& cfg = ctx.cfg;
    const TransferTaskPair task = build_task(cfg.task);
    TrainConfig tc = cfg.pretrain_train;
    tc.seed = cfg.seeds.front();
    const PretrainResult r = pretrain(task.source, task.source_test,
                                      make_desknet(task.source.example_shape(), task.source.num_classes), tc,
                                      cfg.pretrain_l2_alpha);
    RunDir run(ctx);
    run.write("checkpoint.spft", encode_checkpoint(r.net));
    if (ctx.fisher) {
        const FisherDiag f = estimate_fisher_diag(r.net, task.source, cfg.fisher_samples, cfg.fisher_seed);
        const FisherSidecar side{static_cast<std::uint32_t>(f.sample_count), f.values};
        run.write(fisher_sidecar_path("checkpoint.spft").string(), encode_fisher(side));
    }
    CsvTable t({"seed", "source_test_acc"});
    t.row().add(static_cast<unsigned long long>(tc.seed)).add(r.source_test_accuracy);
    run.write("pretrain.csv", t.str());
    run.write("pretrain_iterations.csv", r.history.iterations_csv());
    run.finish();
    ctx.out << "pretrain: source test accuracy " << format_double(r.source_test_accuracy) << "\n";
    return 0;
}

int cmd_finetune(const Context& ctx) {
    const ExperimentConfig& cfg = ctx.cfg;
    const TransferTaskPair task = build_task(cfg.task);
    const Network source = load_source(cfg);
    const std::optional<FisherDiag> fisher = load_fisher_for(cfg, {cfg.kind});
    RunDir run(ctx);
    CsvTable t({"penalty", "alpha", "beta", "seed", "test_acc"});
    for (std::uint64_t seed : cfg.seeds) {
        const FinetuneSpec spec = with_seed(base_spec(cfg, cfg.kind), seed);
        const FinetuneResult r = finetune(task, source, spec, fisher ? &*fisher : nullptr);
        const std::string tag = "seed" + std::to_string(seed);
        run.write("finetuned_" + tag + ".spft", encode_checkpoint(r.net));
        run.write("finetune_" + tag + "_iterations.csv", r.history.iterations_csv());
        t.row().add(to_string(cfg.kind)).add(cfg.alpha).add(cfg.beta).add(static_cast<unsigned long long>(seed)).add(
            r.test_accuracy);
        ctx.out << "finetune: seed " << seed << " test accuracy " << format_double(r.test_accuracy) << "\n";
    }
    run.write("finetune.csv", t.str());
    run.finish();
    return 0;
}

int cmd_sweep(const Context& ctx) {
    const ExperimentConfig& cfg = ctx.cfg;
    const TransferTaskPair task = build_task(cfg.task);
    const Network source = load_source(cfg);
    const std::optional<FisherDiag> fisher = load_fisher_for(cfg, {cfg.kind});
    const SweepResult r = sweep(task, source, base_spec(cfg, cfg.kind), cfg.alpha_grid, cfg.beta_grid, cfg.sweep,
                                fisher ? &*fisher : nullptr);
    RunDir run(ctx);
    run.write("surface.csv", r.surface_csv());
    CsvTable cells({"alpha", "beta", "mean_val_acc", "std_val_acc", "best"});
    for (const SweepCell& c : r.cells)
        cells.row().add(c.alpha).add(c.beta).add(c.mean).add(c.stddev).add(c.alpha == r.best_alpha && c.beta == r.best_beta);
    run.write("cells.csv", cells.str());
    if (r.test_accuracy) {
        CsvTable best({"alpha", "beta", "test_acc"});
        best.row().add(r.best_alpha).add(r.best_beta).add(*r.test_accuracy);
        run.write("best.csv", best.str());
    }
    run.finish();
    ctx.out << "sweep: best alpha " << format_double(r.best_alpha) << " beta " << format_double(r.best_beta) << "\n";
    return 0;
}

int cmd_ablate(const Context& ctx) {
    const ExperimentConfig& cfg = ctx.cfg;
    const TransferTaskPair task = build_task(cfg.task);
    const Network source = load_source(cfg);
    const std::optional<FisherDiag> fisher = load_fisher_for(cfg, cfg.ablation_kinds);
    std::vector<AblationRow> rows;
    for (PenaltyKind kind : cfg.ablation_kinds) {
        const std::vector<AblationRow> part = freezing_ablation(task, source, base_spec(cfg, kind), cfg.k_values,
                                                                cfg.seeds, fisher ? &*fisher : nullptr, cfg.jobs);
        rows.insert(rows.end(), part.begin(), part.end());
    }
    RunDir run(ctx);
    run.write("ablation.csv", ablation_csv(rows));
    run.finish();
    ctx.out << "ablate-freeze: " << rows.size() << " runs\n";
    return 0;
}

int cmd_forgetting(const Context& ctx) {
    const ExperimentConfig& cfg = ctx.cfg;
    const TransferTaskPair task = build_task(cfg.task);
    const Network source = load_source(cfg);
    std::vector<std::string> names;
    const std::vector<Network> nets = load_finetuned(cfg, names);
    CsvTable t({"model", "source_acc_pretrained", "source_acc_after_finetune", "drop"});
    for (std::size_t i = 0; i < nets.size(); ++i) {
        const ForgettingReport r = forgetting(nets[i], source, task.source_test);
        t.row().add(names[i]).add(r.source_acc_pretrained).add(r.source_acc_after_finetune).add(r.drop);
        ctx.out << "forgetting: " << names[i] << " drop " << format_double(r.drop) << "\n";
    }
    RunDir run(ctx);
    run.write("forgetting.csv", t.str());
    run.finish();
    return 0;
}

int cmd_r2(const Context& ctx) {
    const ExperimentConfig& cfg = ctx.cfg;
    const TransferTaskPair task = build_task(cfg.task);
    const Network source = load_source(cfg);
    std::vector<std::string> names;
    const std::vector<Network> nets = load_finetuned(cfg, names);
    CsvTable units({"model", "layer", "unit", "r2", "defined_flag"});
    CsvTable summary({"model", "layer", "median_r2", "defined_units", "units"});
    for (std::size_t i = 0; i < nets.size(); ++i) {
        const R2Report rep = r2_analysis(source, nets[i], task.target_test);
        for (const LayerR2& l : rep.layers) {
            for (std::size_t u = 0; u < l.r2.size(); ++u)
                units.row().add(names[i]).add(l.name).add(u).add(l.r2[u]).add(static_cast<bool>(l.defined[u]));
            summary.row().add(names[i]).add(l.name).add(l.median()).add(l.defined_count()).add(l.r2.size());
            ctx.out << "r2: " << names[i] << " " << l.name << " median " << format_double(l.median()) << "\n";
        }
    }
    RunDir run(ctx);
    run.write("r2.csv", units.str());
    run.write("r2_summary.csv", summary.str());
    run.finish();
    return 0;
}

int cmd_theory(const Context& ctx) {
    const ExperimentConfig& cfg = ctx.cfg;
    const std::vector<TheoryTrial> trials =
        run_theory_trials(cfg.theory_trials, cfg.theory_max_dim, cfg.theory_seed, cfg.jobs);
    RunDir run(ctx);
    run.write("theory.csv", theory_csv(trials));
    run.finish();
    double worst = 0.0;
    bool ok = true;
    for (const TheoryTrial& t : trials) {
        worst = std::max(worst, t.residual);
        ok = ok && t.residual < 1e-8 && t.min_coeff >= 0.0 && t.max_coeff <= 1.0 && t.monotone;
    }
    ctx.out << "theory: " << trials.size() << " trials, max residual " << format_double(worst) << "\n";
    if (!ok) {
        ctx.out << "theory: verification failed\n";
        return 2;
    }
    return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Starting-point regularized fine-tuning experiments", "spft"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string config_path;
    Overrides overrides;
    bool fisher = false;
    app.add_option("--config", config_path, "experiment config (JSON)")->required();
    app.add_option("--out", overrides.out, "output directory, overrides output_dir");
    app.add_option("--seed", overrides.seed, "single seed, overrides seeds");
    app.add_option("--jobs", overrides.jobs, "worker threads for sweep, ablate-freeze and theory")
        ->check(CLI::PositiveNumber);
    app.add_flag("--fisher", fisher, "pretrain: also write the Fisher sidecar");

    struct Command {
        const char* name;
        const char* help;
        int (*handler)(const Context&);
    };
    const std::vector<Command> commands = {
        {"pretrain", "train the source network, optionally with its Fisher diagonal", cmd_pretrain},
        {"finetune", "fine-tune the checkpoint on the target task for each seed", cmd_finetune},
        {"sweep", "cross-validate the alpha x beta grid", cmd_sweep},
        {"ablate-freeze", "freeze the first k shared layers for each kind", cmd_ablate},
        {"forgetting", "source accuracy before and after fine-tuning", cmd_forgetting},
        {"r2", "per-unit R2 of activations against the pretrained network", cmd_r2},
        {"theory", "closed-form minimizer checks on random quadratics", cmd_theory}};
    for (const auto& c : commands) app.add_subcommand(c.name, c.help);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }
    try {
        for (const auto& c : commands) {
            if (!app.got_subcommand(c.name)) continue;
            const Context ctx{c.name, load_config(config_path, overrides), fisher, out};
            return c.handler(ctx);
        }
    } catch (const std::exception& e) {
        err << "spft: error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

}  // namespace spft::cli
