#include "spft/transfer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "spft/csv.hpp"
#include "spft/parallel.hpp"

namespace spft {

void normalize_task(TransferTaskPair& task) {
    const std::vector<double> src = compute_channel_means(task.source);
    apply_channel_means(task.source, src);
    if (!task.source_test.empty()) apply_channel_means(task.source_test, src);
    const std::vector<double> tgt = compute_channel_means(task.target_train);
    apply_channel_means(task.target_train, tgt);
    if (!task.target_val.empty()) apply_channel_means(task.target_val, tgt);
    if (!task.target_test.empty()) apply_channel_means(task.target_test, tgt);
}

PretrainResult pretrain(const Dataset& source, const Dataset& source_test, const Network& arch,
                        const TrainConfig& cfg, double l2_alpha) {
    if (source.empty()) throw std::invalid_argument("pretrain: empty source dataset");
    if (arch.num_classes() != source.num_classes) {
        throw std::invalid_argument("pretrain: architecture head has " + std::to_string(arch.num_classes()) +
                                    " classes, source task has " + std::to_string(source.num_classes));
    }
    Network net = arch;
    net.initialize(cfg.seed);
    PenaltyConfig pen;
    pen.kind = PenaltyKind::L2;
    pen.alpha = l2_alpha;
    TrainResult tr = train(std::move(net), source, cfg.early_stop ? &source_test : nullptr, pen, cfg);
    PretrainResult out{std::move(tr.net), std::move(tr.history), 0.0};
    if (!source_test.empty()) out.source_test_accuracy = evaluate(out.net, source_test);
    return out;
}

FinetuneSpec with_seed(FinetuneSpec spec, std::uint64_t seed) {
    spec.train.seed = seed;
    spec.head_seed = seed;
    return spec;
}

PenaltyConfig make_penalty_config(const Network& net, const Network& source, const FinetuneSpec& spec,
                                  const FisherDiag* fisher) {
    PenaltyConfig cfg;
    cfg.kind = spec.kind;
    cfg.alpha = spec.alpha;
    cfg.beta = spec.beta;
    cfg.epsilon = spec.epsilon;
    if (uses_reference(spec.kind)) cfg.reference = source.params().shared_values();
    if (uses_fisher(spec.kind)) {
        if (fisher == nullptr) {
            throw std::invalid_argument("finetune: " + std::string(to_string(spec.kind)) +
                                        " needs the Fisher sidecar of the source checkpoint");
        }
        cfg.fisher_diag = fisher->values;
    }
    if (uses_groups(spec.kind)) cfg.groups = build_channel_groups(net);
    return cfg;
}

TrainResult finetune_on(const Dataset& train_set, const Dataset* val_set, int num_classes, const Network& source,
                        const FinetuneSpec& spec, const FisherDiag* fisher) {
    Network net = source.replace_head(num_classes, spec.head_seed);
    const PenaltyConfig pen = make_penalty_config(net, source, spec, fisher);
    return train(std::move(net), train_set, val_set, pen, spec.train);
}

FinetuneResult finetune(const TransferTaskPair& task, const Network& source, const FinetuneSpec& spec,
                        const FisherDiag* fisher) {
    const Dataset* val = spec.train.early_stop ? &task.target_val : nullptr;
    TrainResult tr = finetune_on(task.target_train, val, task.target_train.num_classes, source, spec, fisher);
    FinetuneResult out{std::move(tr.net), std::move(tr.history), 0.0};
    out.test_accuracy = evaluate(out.net, task.target_test);
    return out;
}

std::string SweepResult::surface_csv() const {
    CsvTable t({"alpha", "beta", "fold", "val_acc"});
    for (const SweepRow& r : rows) t.row().add(r.alpha).add(r.beta).add(r.fold).add(r.val_accuracy);
    return t.str();
}

SweepResult sweep(const TransferTaskPair& task, const Network& source, const FinetuneSpec& base,
                  const std::vector<double>& alpha_grid, const std::vector<double>& beta_grid,
                  const SweepOptions& opts, const FisherDiag* fisher) {
    if (alpha_grid.empty() || beta_grid.empty()) throw std::invalid_argument("sweep: empty grid");
    const Dataset merged = concat(task.target_train, task.target_val);
    const auto folds = stratified_folds(merged, opts.folds, opts.fold_seed);

    std::vector<Dataset> fold_train(folds.size()), fold_val(folds.size());
    for (std::size_t f = 0; f < folds.size(); ++f) {
        std::vector<std::size_t> rest;
        for (std::size_t g = 0; g < folds.size(); ++g)
            if (g != f) rest.insert(rest.end(), folds[g].begin(), folds[g].end());
        std::sort(rest.begin(), rest.end());
        fold_train[f] = merged.subset(rest);
        fold_val[f] = merged.subset(folds[f]);
    }

    FinetuneSpec cv = base;
    cv.train.early_stop.reset();
    const std::size_t n_cells = alpha_grid.size() * beta_grid.size();
    SweepResult result;
    result.rows.resize(n_cells * folds.size());
    parallel_for(result.rows.size(), opts.jobs, [&](std::size_t job) {
        const std::size_t cell = job / folds.size();
        const std::size_t f = job % folds.size();
        FinetuneSpec s = cv;
        s.alpha = alpha_grid[cell / beta_grid.size()];
        s.beta = beta_grid[cell % beta_grid.size()];
        const TrainResult tr = finetune_on(fold_train[f], nullptr, merged.num_classes, source, s, fisher);
        result.rows[job] = {s.alpha, s.beta, f, evaluate(tr.net, fold_val[f])};
    });

    double best = -1.0;
    for (std::size_t cell = 0; cell < n_cells; ++cell) {
        SweepCell c;
        c.alpha = alpha_grid[cell / beta_grid.size()];
        c.beta = beta_grid[cell % beta_grid.size()];
        double sum = 0.0;
        for (std::size_t f = 0; f < folds.size(); ++f) sum += result.rows[cell * folds.size() + f].val_accuracy;
        c.mean = sum / static_cast<double>(folds.size());
        double ss = 0.0;
        for (std::size_t f = 0; f < folds.size(); ++f) {
            const double d = result.rows[cell * folds.size() + f].val_accuracy - c.mean;
            ss += d * d;
        }
        c.stddev = folds.size() > 1 ? std::sqrt(ss / static_cast<double>(folds.size() - 1)) : 0.0;
        const bool better = c.mean > best ||
                            (c.mean == best && (c.alpha > result.best_alpha ||
                                                (c.alpha == result.best_alpha && c.beta > result.best_beta)));
        if (better) {
            best = c.mean;
            result.best_alpha = c.alpha;
            result.best_beta = c.beta;
        }
        result.cells.push_back(c);
    }

    if (opts.retrain_best) {
        FinetuneSpec s = cv;
        s.alpha = result.best_alpha;
        s.beta = result.best_beta;
        const TrainResult tr = finetune_on(merged, nullptr, merged.num_classes, source, s, fisher);
        result.test_accuracy = evaluate(tr.net, task.target_test);
    }
    return result;
}

std::vector<AblationRow> freezing_ablation(const TransferTaskPair& task, const Network& source,
                                           const FinetuneSpec& spec, const std::vector<std::size_t>& k_values,
                                           const std::vector<std::uint64_t>& seeds, const FisherDiag* fisher,
                                           std::size_t jobs) {
    std::vector<AblationRow> rows(k_values.size() * seeds.size());
    parallel_for(rows.size(), jobs, [&](std::size_t job) {
        const std::size_t k = k_values[job / seeds.size()];
        const std::uint64_t seed = seeds[job % seeds.size()];
        FinetuneSpec s = with_seed(spec, seed);
        s.train.frozen_layers = k;
        rows[job] = {spec.kind, k, seed, finetune(task, source, s, fisher).test_accuracy};
    });
    return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
    CsvTable t({"penalty", "k", "seed", "test_acc"});
    for (const AblationRow& r : rows) {
        t.row().add(to_string(r.kind)).add(r.k).add(static_cast<unsigned long long>(r.seed)).add(r.test_accuracy);
    }
    return t.str();
}

namespace {

void check_shared_architecture(const Network& a, const Network& b) {
    const auto& la = a.layers();
    const auto& lb = b.layers();
    if (a.input_shape() != b.input_shape() || la.size() != lb.size() ||
        !std::equal(la.begin(), la.end() - 1, lb.begin())) {
        throw std::invalid_argument("networks do not share the architecture below the head");
    }
}

}  // namespace

Network graft_source_head(const Network& finetuned, const Network& source) {
    check_shared_architecture(finetuned, source);
    Network out = source;
    const std::size_t n_shared = source.head_slice().offset;
    std::copy(finetuned.params().values.begin(), finetuned.params().values.begin() + static_cast<std::ptrdiff_t>(n_shared),
              out.params().values.begin());
    return out;
}

ForgettingReport forgetting(const Network& finetuned, const Network& source, const Dataset& source_test) {
    ForgettingReport r;
    r.source_acc_pretrained = evaluate(source, source_test);
    r.source_acc_after_finetune = evaluate(graft_source_head(finetuned, source), source_test);
    r.drop = r.source_acc_pretrained - r.source_acc_after_finetune;
    return r;
}

std::size_t LayerR2::defined_count() const {
    return static_cast<std::size_t>(std::count(defined.begin(), defined.end(), true));
}

double LayerR2::median() const {
    std::vector<double> v;
    for (std::size_t i = 0; i < r2.size(); ++i)
        if (defined[i]) v.push_back(r2[i]);
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

std::string R2Report::csv() const {
    CsvTable t({"layer", "unit", "r2", "defined_flag"});
    for (const LayerR2& l : layers)
        for (std::size_t u = 0; u < l.r2.size(); ++u) {
            t.row().add(l.name).add(u).add(l.defined[u] ? l.r2[u] : 0.0).add(static_cast<bool>(l.defined[u]));
        }
    return t.str();
}

R2Report r2_analysis(const Network& pretrained, const Network& finetuned, const Dataset& probe) {
    check_shared_architecture(pretrained, finetuned);
    if (probe.empty()) throw std::invalid_argument("r2: empty probe set");
    const auto& layers = pretrained.layers();

    struct Unit {
        double sum_a = 0, sum_b = 0, ca = 0, cb = 0, cab = 0;
        double min_a = std::numeric_limits<double>::infinity(), max_a = -std::numeric_limits<double>::infinity();
        double min_b = std::numeric_limits<double>::infinity(), max_b = -std::numeric_limits<double>::infinity();
    };
    struct Tap {
        std::size_t param_layer, act_layer, units, spatial;
        std::vector<Unit> stats;
        double count = 0;
    };
    std::vector<Tap> taps;
    for (const ParamSlice& s : pretrained.shared_slices()) {
        const std::size_t act = s.layer + 1 < layers.size() && std::holds_alternative<ReLU>(layers[s.layer + 1])
                                    ? s.layer + 1
                                    : s.layer;
        const Shape3& os = pretrained.output_shapes()[act];
        taps.push_back({s.layer, act, os.channels, os.height * os.width, std::vector<Unit>(os.channels), 0});
    }

    constexpr std::size_t kChunk = 64;
    for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t start = 0; start < probe.size(); start += kChunk) {
            std::vector<std::size_t> idx;
            for (std::size_t i = start; i < std::min(probe.size(), start + kChunk); ++i) idx.push_back(i);
            const Tensor x = probe.gather(idx);
            const ForwardResult fa = pretrained.forward(x);
            const ForwardResult fb = finetuned.forward(x);
            for (Tap& tap : taps) {
                const Tensor& A = fa.activations[tap.act_layer];
                const Tensor& B = fb.activations[tap.act_layer];
                for (std::size_t n = 0; n < idx.size(); ++n) {
                    auto sa = A.sample(n);
                    auto sb = B.sample(n);
                    for (std::size_t u = 0; u < tap.units; ++u) {
                        Unit& st = tap.stats[u];
                        for (std::size_t p = 0; p < tap.spatial; ++p) {
                            const double a = sa[u * tap.spatial + p];
                            const double b = sb[u * tap.spatial + p];
                            if (pass == 0) {
                                st.sum_a += a;
                                st.sum_b += b;
                                st.min_a = std::min(st.min_a, a);
                                st.max_a = std::max(st.max_a, a);
                                st.min_b = std::min(st.min_b, b);
                                st.max_b = std::max(st.max_b, b);
                            } else {
                                const double da = a - st.sum_a;  // holds the mean after pass 0
                                const double db = b - st.sum_b;
                                st.ca += da * da;
                                st.cb += db * db;
                                st.cab += da * db;
                            }
                        }
                    }
                }
                if (pass == 0) tap.count += static_cast<double>(idx.size() * tap.spatial);
            }
        }
        if (pass == 0) {
            for (Tap& tap : taps)
                for (Unit& st : tap.stats) {
                    st.sum_a /= tap.count;
                    st.sum_b /= tap.count;
                }
        }
    }

    R2Report report;
    for (const Tap& tap : taps) {
        LayerR2 l;
        l.layer = tap.param_layer;
        l.name = layer_name(layers[tap.param_layer]) + std::to_string(report.layers.size() + 1);
        for (const Unit& st : tap.stats) {
            const bool ok = st.max_a > st.min_a && st.max_b > st.min_b && st.ca > 0.0 && st.cb > 0.0;
            l.defined.push_back(ok);
            l.r2.push_back(ok ? std::min(1.0, (st.cab * st.cab) / (st.ca * st.cb)) : 0.0);
        }
        report.layers.push_back(std::move(l));
    }
    return report;
}

}  // namespace spft
