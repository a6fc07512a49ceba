#include "spft/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "spft/csv.hpp"

namespace spft {

void TrainConfig::validate() const {
    if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("train: momentum must be in [0, 1)");
    if (!(base_lr > 0.0)) throw std::invalid_argument("train: base_lr must be positive");
    if (decay_at > total_iters) throw std::invalid_argument("train: decay_at exceeds total_iters");
    if (!(decay_factor > 0.0)) throw std::invalid_argument("train: decay_factor must be positive");
    if (batch_size == 0) throw std::invalid_argument("train: batch_size must be positive");
    if (early_stop && early_stop->eval_every == 0) throw std::invalid_argument("train: eval_every must be positive");
}

std::string TrainHistory::iterations_csv() const {
    CsvTable t({"iter", "loss", "penalty", "objective", "lr"});
    for (const IterationLog& l : iterations) t.row().add(l.iter).add(l.loss).add(l.penalty).add(l.objective).add(l.lr);
    return t.str();
}

std::string TrainHistory::evaluations_csv() const {
    CsvTable t({"iter", "val_accuracy"});
    for (const EvalLog& e : evaluations) t.row().add(e.iter).add(e.val_accuracy);
    return t.str();
}

double lr_schedule(const TrainConfig& cfg, std::size_t t) {
    return t >= cfg.decay_at ? cfg.base_lr * cfg.decay_factor : cfg.base_lr;
}

std::vector<bool> frozen_mask(const Network& net, std::size_t k) {
    const std::vector<ParamSlice> shared = net.shared_slices();
    if (k > shared.size()) {
        throw std::invalid_argument("train: frozen_layers = " + std::to_string(k) + " but the network has only " +
                                    std::to_string(shared.size()) + " shared parameterized layers");
    }
    std::vector<bool> mask(net.params().size(), false);
    for (std::size_t l = 0; l < k; ++l)
        for (std::size_t j = shared[l].offset; j < shared[l].offset + shared[l].length; ++j) mask[j] = true;
    return mask;
}

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t t) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (t + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

bool augmentation_enabled(const AugmentOptions& a) { return a.mirror || a.crop_pad > 0 || a.blur_prob > 0.0; }

}  // namespace

TrainResult train(Network net, const Dataset& data, const Dataset* val, const PenaltyConfig& penalty_cfg,
                  const TrainConfig& cfg) {
    cfg.validate();
    if (data.empty()) throw std::invalid_argument("train: empty training set");
    if (cfg.early_stop && (val == nullptr || val->empty())) {
        throw std::invalid_argument("train: early stopping requires a validation set");
    }
    const Penalty penalty(penalty_cfg, net.params());
    if (cfg.mode == UpdateMode::ProxSplit && !has_prox(penalty.kind())) {
        throw std::invalid_argument("train: PROX_SPLIT needs a penalty with a closed-form prox, got " +
                                    std::string(to_string(penalty.kind())));
    }
    const std::vector<bool> frozen = frozen_mask(net, cfg.frozen_layers);
    std::vector<double>& w = net.params().values;
    const std::size_t n = w.size();
    std::vector<double> velocity(n, 0.0);
    std::vector<double> frozen_values;
    for (std::size_t j = 0; j < n; ++j)
        if (frozen[j]) frozen_values.push_back(w[j]);

    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t cursor = 0;
    std::vector<std::size_t> batch_idx(cfg.batch_size);

    TrainResult result{net, {}};
    TrainHistory& hist = result.history;
    hist.iterations.reserve(cfg.total_iters);
    double best_acc = -1.0;
    std::vector<double> best_w;
    std::size_t evals_since_best = 0;
    hist.stop_reason = "completed";

    for (std::size_t t = 0; t < cfg.total_iters; ++t) {
        for (std::size_t b = 0; b < cfg.batch_size; ++b) {
            if (cursor == order.size()) {
                std::shuffle(order.begin(), order.end(), rng);
                cursor = 0;
            }
            batch_idx[b] = order[cursor++];
        }
        Tensor x = data.gather(batch_idx);
        if (augmentation_enabled(cfg.augment)) x = augment(x, mix_seed(cfg.seed, t), cfg.augment);
        const std::vector<int> y = data.gather_labels(batch_idx);

        LossGrad lg = net.loss_and_grad(x, y);
        const double omega = penalty.value(w);
        const double lr = lr_schedule(cfg, t);
        hist.iterations.push_back({t, lg.loss, omega, lg.loss + omega, lr});

        std::vector<double>& g = lg.grad;
        if (cfg.mode == UpdateMode::Smoothed) {
            penalty.add_grad(w, g);
        } else {
            penalty.add_fresh_grad(w, g);
        }
        for (std::size_t j = 0; j < n; ++j) {
            if (frozen[j]) continue;
            velocity[j] = cfg.momentum * velocity[j] - lr * g[j];
            w[j] += velocity[j];
        }
        if (cfg.mode == UpdateMode::ProxSplit) {
            penalty.prox_inplace(w, lr);
            std::size_t f = 0;
            for (std::size_t j = 0; j < n; ++j)
                if (frozen[j]) w[j] = frozen_values[f++];
        }
        for (std::size_t j = 0; j < n; ++j) {
            if (!std::isfinite(w[j])) {
                throw std::runtime_error("train: parameters diverged at iteration " + std::to_string(t));
            }
        }

        if (cfg.early_stop && ((t + 1) % cfg.early_stop->eval_every == 0 || t + 1 == cfg.total_iters)) {
            const double acc = evaluate(net, *val, CropMode::Central);
            hist.evaluations.push_back({t + 1, acc});
            if (acc > best_acc) {
                best_acc = acc;
                best_w = w;
                hist.best_iter = t + 1;
                evals_since_best = 0;
            } else if (++evals_since_best >= cfg.early_stop->patience) {
                hist.stop_reason = "early_stop";
                break;
            }
        }
    }
    if (cfg.early_stop && !best_w.empty()) w = best_w;
    result.net = std::move(net);
    return result;
}

double evaluate(const Network& net, const Dataset& data, CropMode mode) {
    if (data.empty()) throw std::invalid_argument("evaluate: empty dataset");
    const Shape3 in = net.input_shape();
    const Shape3 s = data.example_shape();
    if (s.channels != in.channels || s.height < in.height || s.width < in.width) {
        throw std::invalid_argument("evaluate: images smaller than the network input");
    }
    struct Crop {
        std::size_t y, x;
        bool mirror;
    };
    const std::size_t cy = (s.height - in.height) / 2, cx = (s.width - in.width) / 2;
    std::vector<Crop> crops;
    if (mode == CropMode::Central) {
        crops.push_back({cy, cx, false});
    } else {
        const std::size_t by = s.height - in.height, bx = s.width - in.width;
        for (bool m : {false, true}) {
            crops.push_back({0, 0, m});
            crops.push_back({0, bx, m});
            crops.push_back({by, 0, m});
            crops.push_back({by, bx, m});
            crops.push_back({cy, cx, m});
        }
    }
    const auto K = static_cast<std::size_t>(net.num_classes());
    constexpr std::size_t kChunk = 256;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < data.size(); start += kChunk) {
        const std::size_t B = std::min(kChunk, data.size() - start);
        std::vector<double> avg(B * K, 0.0);
        for (const Crop& c : crops) {
            Tensor x({B, in.channels, in.height, in.width});
            for (std::size_t b = 0; b < B; ++b) {
                auto src = data.images.sample(start + b);
                auto dst = x.sample(b);
                for (std::size_t ch = 0; ch < in.channels; ++ch)
                    for (std::size_t yy = 0; yy < in.height; ++yy)
                        for (std::size_t xx = 0; xx < in.width; ++xx)
                            dst[(ch * in.height + yy) * in.width + xx] =
                                src[(ch * s.height + c.y + yy) * s.width + c.x + xx];
                if (c.mirror) mirror_horizontal(dst, in);
            }
            const Tensor p = net.predict(x);
            for (std::size_t j = 0; j < B * K; ++j) avg[j] += p[j];
        }
        for (std::size_t b = 0; b < B; ++b) {
            const auto first = avg.begin() + static_cast<std::ptrdiff_t>(b * K);
            const auto pred = static_cast<int>(std::max_element(first, first + static_cast<std::ptrdiff_t>(K)) - first);
            if (pred == data.labels[start + b]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace spft
