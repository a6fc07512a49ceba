#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "spft/data.hpp"
#include "spft/network.hpp"
#include "spft/penalties.hpp"

namespace spft {

enum class UpdateMode {
    Smoothed,   // gradient of the smoothed penalty joins the data gradient before momentum
    ProxSplit,  // momentum step on data + fresh term, then the closed-form prox of the shared term
};

enum class CropMode { Central, TenCrop };

struct EarlyStop {
    std::size_t eval_every = 100;
    std::size_t patience = 10;
};

struct TrainConfig {
    double base_lr = 0.01;
    double momentum = 0.9;
    std::size_t total_iters = 3000;
    std::size_t decay_at = 2000;
    double decay_factor = 0.1;
    std::size_t batch_size = 64;
    UpdateMode mode = UpdateMode::Smoothed;
    std::size_t frozen_layers = 0;
    std::optional<EarlyStop> early_stop;
    AugmentOptions augment;
    std::uint64_t seed = 0;

    void validate() const;
};

struct IterationLog {
    std::size_t iter = 0;
    double loss = 0.0;
    double penalty = 0.0;
    double objective = 0.0;
    double lr = 0.0;
};

struct EvalLog {
    std::size_t iter = 0;
    double val_accuracy = 0.0;
};

struct TrainHistory {
    std::vector<IterationLog> iterations;
    std::vector<EvalLog> evaluations;
    std::string stop_reason;
    std::optional<std::size_t> best_iter;

    /// iter,loss,penalty,objective,lr
    [[nodiscard]] std::string iterations_csv() const;
    /// iter,val_accuracy
    [[nodiscard]] std::string evaluations_csv() const;
};

struct TrainResult {
    Network net;
    TrainHistory history;
};

[[nodiscard]] double lr_schedule(const TrainConfig& cfg, std::size_t t);

/// Mask of the parameters of the first `k` shared parameterized layers.
[[nodiscard]] std::vector<bool> frozen_mask(const Network& net, std::size_t k);

/// SGD with momentum on J + Omega. With early stopping, `val` must be non-null
/// and the returned network holds the parameters of the best evaluation.
[[nodiscard]] TrainResult train(Network net, const Dataset& data, const Dataset* val, const PenaltyConfig& penalty,
                                const TrainConfig& cfg);

/// Fraction of correct argmax predictions. Crops of the network input size are
/// taken from the (possibly larger) images; TenCrop averages the probabilities
/// of the four corner crops, the center crop and their mirrors.
[[nodiscard]] double evaluate(const Network& net, const Dataset& data, CropMode mode = CropMode::Central);

}  // namespace spft
