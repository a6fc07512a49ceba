#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "spft/data.hpp"
#include "spft/fisher.hpp"
#include "spft/network.hpp"
#include "spft/optim.hpp"
#include "spft/penalties.hpp"

namespace spft {

/// Subtracts the source-train channel means from both source splits and the
/// target-train channel means from the three target splits.
void normalize_task(TransferTaskPair& task);

struct PretrainResult {
    Network net;
    TrainHistory history;
    double source_test_accuracy = 0.0;
};

/// Trains `arch` (initialized with cfg.seed) on the source task under weight decay `l2_alpha`.
[[nodiscard]] PretrainResult pretrain(const Dataset& source, const Dataset& source_test, const Network& arch,
                                      const TrainConfig& cfg, double l2_alpha);

struct FinetuneSpec {
    PenaltyKind kind = PenaltyKind::L2SP;
    double alpha = 0.0;
    double beta = 0.0;
    double epsilon = 1e-6;
    TrainConfig train;
    std::uint64_t head_seed = 0;
};

/// Copy of `spec` whose training and head seeds are both `seed`.
[[nodiscard]] FinetuneSpec with_seed(FinetuneSpec spec, std::uint64_t seed);

/// Penalty for fine-tuning `net` (already carrying the new head) from `source`.
[[nodiscard]] PenaltyConfig make_penalty_config(const Network& net, const Network& source, const FinetuneSpec& spec,
                                                const FisherDiag* fisher);

struct FinetuneResult {
    Network net;
    TrainHistory history;
    double test_accuracy = 0.0;
};

/// Replaces the head of `source` for the target classes, trains on target_train
/// (target_val drives early stopping when configured) and evaluates once on target_test.
[[nodiscard]] FinetuneResult finetune(const TransferTaskPair& task, const Network& source, const FinetuneSpec& spec,
                                      const FisherDiag* fisher = nullptr);

/// Same protocol on explicit train/val sets without a test evaluation; used by the sweep.
[[nodiscard]] TrainResult finetune_on(const Dataset& train_set, const Dataset* val_set, int num_classes,
                                      const Network& source, const FinetuneSpec& spec, const FisherDiag* fisher);

struct SweepRow {
    double alpha = 0.0;
    double beta = 0.0;
    std::size_t fold = 0;
    double val_accuracy = 0.0;
};

struct SweepCell {
    double alpha = 0.0;
    double beta = 0.0;
    double mean = 0.0;
    double stddev = 0.0;
};

struct SweepResult {
    std::vector<SweepRow> rows;
    std::vector<SweepCell> cells;  // alpha-major grid order
    double best_alpha = 0.0;
    double best_beta = 0.0;
    std::string selection_rule = "max mean val accuracy; ties prefer larger alpha, then larger beta";
    std::optional<double> test_accuracy;  // set when the best cell is retrained on train+val

    /// alpha,beta,fold,val_acc
    [[nodiscard]] std::string surface_csv() const;
};

struct SweepOptions {
    std::size_t folds = 5;
    std::uint64_t fold_seed = 0;
    std::size_t jobs = 1;
    bool retrain_best = false;
};

/// k-fold cross-validation of every (alpha, beta) on target_train + target_val.
/// Early stopping is disabled inside the folds.
[[nodiscard]] SweepResult sweep(const TransferTaskPair& task, const Network& source, const FinetuneSpec& base,
                                const std::vector<double>& alpha_grid, const std::vector<double>& beta_grid,
                                const SweepOptions& opts, const FisherDiag* fisher = nullptr);

struct AblationRow {
    PenaltyKind kind = PenaltyKind::L2;
    std::size_t k = 0;
    std::uint64_t seed = 0;
    double test_accuracy = 0.0;
};

/// Fine-tunes with the first k shared layers frozen, for every k and seed.
[[nodiscard]] std::vector<AblationRow> freezing_ablation(const TransferTaskPair& task, const Network& source,
                                                         const FinetuneSpec& spec, const std::vector<std::size_t>& k_values,
                                                         const std::vector<std::uint64_t>& seeds,
                                                         const FisherDiag* fisher = nullptr, std::size_t jobs = 1);

/// penalty,k,seed,test_acc
[[nodiscard]] std::string ablation_csv(const std::vector<AblationRow>& rows);

struct ForgettingReport {
    double source_acc_pretrained = 0.0;
    double source_acc_after_finetune = 0.0;
    double drop = 0.0;
};

/// Source head grafted onto the fine-tuned shared parameters.
[[nodiscard]] Network graft_source_head(const Network& finetuned, const Network& source);

[[nodiscard]] ForgettingReport forgetting(const Network& finetuned, const Network& source, const Dataset& source_test);

struct LayerR2 {
    std::size_t layer = 0;  // index of the parameterized layer
    std::string name;
    std::vector<double> r2;
    std::vector<bool> defined;

    [[nodiscard]] std::size_t defined_count() const;
    /// Median of the defined values; NaN when none is defined.
    [[nodiscard]] double median() const;
};

struct R2Report {
    std::vector<LayerR2> layers;

    /// layer,unit,r2,defined_flag
    [[nodiscard]] std::string csv() const;
};

/// Per unit of every shared parameterized layer (after its ReLU when one follows):
/// squared Pearson correlation between pre-trained and fine-tuned activations over
/// the probe set, with conv spatial positions pooled as samples. Units constant in
/// either network are flagged undefined.
[[nodiscard]] R2Report r2_analysis(const Network& pretrained, const Network& finetuned, const Dataset& probe);

}  // namespace spft
