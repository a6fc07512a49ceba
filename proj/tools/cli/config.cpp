#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "spft/checkpoint.hpp"

namespace spft::cli {

using nlohmann::json;

namespace {

template <typename T>
void read(const json& obj, const char* key, T& dst) {
    if (obj.contains(key)) dst = obj[key].get<T>();
}

TrainConfig parse_train(const json& j, TrainConfig cfg) {
    read(j, "base_lr", cfg.base_lr);
    read(j, "momentum", cfg.momentum);
    read(j, "total_iters", cfg.total_iters);
    read(j, "decay_at", cfg.decay_at);
    read(j, "decay_factor", cfg.decay_factor);
    read(j, "batch_size", cfg.batch_size);
    read(j, "frozen_layers", cfg.frozen_layers);
    if (j.contains("mode")) cfg.mode = j["mode"] == "prox_split" ? UpdateMode::ProxSplit : UpdateMode::Smoothed;
    if (j.contains("early_stop")) {
        EarlyStop es;
        read(j["early_stop"], "eval_every", es.eval_every);
        read(j["early_stop"], "patience", es.patience);
        cfg.early_stop = es;
    }
    if (j.contains("augment")) {
        read(j["augment"], "mirror", cfg.augment.mirror);
        read(j["augment"], "crop_pad", cfg.augment.crop_pad);
        read(j["augment"], "blur_prob", cfg.augment.blur_prob);
    }
    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("train: ") + e.what());
    }
    return cfg;
}

}  // namespace

ExperimentConfig parse_config(json doc, const Overrides& overrides) {
    if (overrides.out) doc["output_dir"] = *overrides.out;
    if (overrides.seed) doc["seeds"] = json::array({*overrides.seed});
    if (overrides.jobs) doc["jobs"] = *overrides.jobs;
    const std::vector<std::string> errors = schema_violations(doc);
    if (!errors.empty()) {
        std::string msg = "config: " + errors.front();
        if (errors.size() > 1) msg += " (+" + std::to_string(errors.size() - 1) + " more)";
        throw ConfigError(msg);
    }

    ExperimentConfig c;
    const json& t = doc["task"];
    TaskSpec& task = c.task;
    read(t, "kind", task.kind);
    read(t, "images", task.images);
    read(t, "labels", task.labels);
    read(t, "source_classes", task.source_classes);
    read(t, "target_classes", task.target_classes);
    read(t, "per_class_train", task.per_class_train);
    read(t, "val_fraction", task.val_fraction);
    read(t, "source_test_fraction", task.source_test_fraction);
    read(t, "split_seed", task.split_seed);
    read(t, "downsample", task.downsample);
    if (t.contains("synthetic")) {
        const json& s = t["synthetic"];
        SyntheticSpec& syn = task.synthetic;
        read(s, "seed", syn.seed);
        read(s, "channels", syn.dims.channels);
        read(s, "height", syn.dims.height);
        read(s, "width", syn.dims.width);
        read(s, "source_classes", syn.source_classes);
        read(s, "target_classes", syn.target_classes);
        read(s, "shift", syn.shift);
        read(s, "noise", syn.options.noise);
        read(s, "blobs", syn.options.blobs);
        read(s, "source_per_class", syn.options.source_per_class);
        read(s, "source_test_per_class", syn.options.source_test_per_class);
        read(s, "per_class_val", syn.options.per_class_val);
        read(s, "per_class_test", syn.options.per_class_test);
        syn.options.per_class_train = task.per_class_train;
    } else {
        task.synthetic.options.per_class_train = task.per_class_train;
    }
    if (task.kind == "idx") {
        if (task.images.empty()) throw ConfigError("config: task.images: required for kind idx");
        if (task.labels.empty()) throw ConfigError("config: task.labels: required for kind idx");
    }

    read(doc, "checkpoint", c.checkpoint);
    if (doc.contains("train")) c.train = parse_train(doc["train"], c.train);
    if (doc.contains("pretrain")) {
        const json& p = doc["pretrain"];
        read(p, "l2_alpha", c.pretrain_l2_alpha);
        read(p, "fisher_samples", c.fisher_samples);
        read(p, "fisher_seed", c.fisher_seed);
        if (p.contains("train")) c.pretrain_train = parse_train(p["train"], c.pretrain_train);
    }
    if (doc.contains("penalty")) {
        const json& p = doc["penalty"];
        if (p.contains("kind")) c.kind = parse_penalty_kind(p["kind"].get<std::string>());
        read(p, "alpha", c.alpha);
        read(p, "beta", c.beta);
        read(p, "epsilon", c.epsilon);
        read(p, "alpha_grid", c.alpha_grid);
        read(p, "beta_grid", c.beta_grid);
        if (c.alpha_grid.empty() || c.beta_grid.empty()) throw ConfigError("config: penalty grids must be non-empty");
    }
    if (doc.contains("sweep")) {
        read(doc["sweep"], "folds", c.sweep.folds);
        read(doc["sweep"], "fold_seed", c.sweep.fold_seed);
        read(doc["sweep"], "retrain_best", c.sweep.retrain_best);
    }
    if (doc.contains("ablation")) {
        const json& a = doc["ablation"];
        if (a.contains("kinds")) {
            c.ablation_kinds.clear();
            for (const json& k : a["kinds"]) c.ablation_kinds.push_back(parse_penalty_kind(k.get<std::string>()));
        }
        read(a, "k_values", c.k_values);
    }
    read(doc, "finetuned", c.finetuned);
    if (doc.contains("theory")) {
        read(doc["theory"], "trials", c.theory_trials);
        read(doc["theory"], "max_dim", c.theory_max_dim);
        read(doc["theory"], "seed", c.theory_seed);
    }
    read(doc, "seeds", c.seeds);
    if (c.seeds.empty()) throw ConfigError("config: seeds: must not be empty");
    read(doc, "jobs", c.jobs);
    read(doc, "output_dir", c.output_dir);
    c.sweep.jobs = c.jobs;
    c.document = std::move(doc);
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path, const Overrides& overrides) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config: " + path.string() + ": " + e.what());
    }
    return parse_config(std::move(doc), overrides);
}

std::filesystem::path resolve_data_path(const std::string& value, const std::string& field) {
    namespace fs = std::filesystem;
    const fs::path p(value);
    if (fs::exists(p)) return p;
    if (const char* root = std::getenv("SPFT_DATA_DIR"); root != nullptr && *root != '\0' && p.is_relative()) {
        if (fs::exists(fs::path(root) / p)) return fs::path(root) / p;
        if (fs::exists(fs::path(root) / p.filename())) return fs::path(root) / p.filename();
    }
    throw ConfigError(field + ": file not found: " + value);
}

TransferTaskPair build_task(const TaskSpec& spec) {
    TransferTaskPair task;
    if (spec.kind == "synthetic") {
        const SyntheticSpec& s = spec.synthetic;
        task = generate_synthetic_pair(s.seed, s.dims, s.source_classes, s.target_classes, s.shift, s.options);
    } else {
        const std::filesystem::path images = resolve_data_path(spec.images, "task.images");
        const std::filesystem::path labels = resolve_data_path(spec.labels, "task.labels");
        Dataset all = load_idx(images, labels);
        for (int i = 0; i < spec.downsample; ++i) all = downsample2(all);
        task = make_split_transfer(all, spec.source_classes, spec.target_classes, spec.per_class_train,
                                   spec.val_fraction, spec.split_seed, spec.source_test_fraction);
    }
    normalize_task(task);
    return task;
}

std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char ch : bytes) {
        h ^= ch;
        h *= 0x100000001b3ull;
    }
    std::ostringstream os;
    os << std::hex;
    os.width(16);
    os.fill('0');
    os << h;
    return os.str();
}

}  // namespace spft::cli
