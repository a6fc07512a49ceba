#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spft/data.hpp"
#include "spft/optim.hpp"
#include "spft/penalties.hpp"
#include "spft/transfer.hpp"

namespace spft::cli {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The schema shipped as configs/schema.json, embedded at build time.
[[nodiscard]] const nlohmann::json& schema();

/// Every violation as "path: message"; empty when the document conforms.
[[nodiscard]] std::vector<std::string> schema_violations(const nlohmann::json& doc);

struct SyntheticSpec {
    std::uint64_t seed = 0;
    Shape3 dims{1, 14, 14};
    int source_classes = 5;
    int target_classes = 5;
    double shift = 0.5;
    SyntheticOptions options;
};

struct TaskSpec {
    std::string kind = "idx";
    std::string images;
    std::string labels;
    std::vector<int> source_classes{0, 1, 2, 3, 4};
    std::vector<int> target_classes{5, 6, 7, 8, 9};
    std::size_t per_class_train = 30;
    double val_fraction = 0.2;
    double source_test_fraction = 0.2;
    std::uint64_t split_seed = 0;
    int downsample = 0;
    SyntheticSpec synthetic;
};

struct ExperimentConfig {
    nlohmann::json document;  // the validated config with command-line overrides applied
    TaskSpec task;
    std::string checkpoint;
    TrainConfig train;
    TrainConfig pretrain_train;
    double pretrain_l2_alpha = 1e-4;
    std::size_t fisher_samples = 2000;
    std::uint64_t fisher_seed = 0;
    PenaltyKind kind = PenaltyKind::L2SP;
    double alpha = 0.01;
    double beta = 0.01;
    double epsilon = 1e-6;
    std::vector<double> alpha_grid{0.001, 0.01, 0.1};
    std::vector<double> beta_grid{0.001, 0.01, 0.1};
    SweepOptions sweep{5, 0, 1, true};
    std::vector<PenaltyKind> ablation_kinds{PenaltyKind::L2, PenaltyKind::L2SP};
    std::vector<std::size_t> k_values{0, 1, 2};
    std::vector<std::string> finetuned;
    std::size_t theory_trials = 100;
    std::size_t theory_max_dim = 50;
    std::uint64_t theory_seed = 0;
    std::vector<std::uint64_t> seeds{0};
    std::size_t jobs = 1;
    std::string output_dir = "runs/default";
};

struct Overrides {
    std::optional<std::string> out;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> jobs;
};

/// Validates `doc` against the schema, applies overrides and fills defaults.
[[nodiscard]] ExperimentConfig parse_config(nlohmann::json doc, const Overrides& overrides = {});
[[nodiscard]] ExperimentConfig load_config(const std::filesystem::path& path, const Overrides& overrides = {});

/// Finds a dataset file: as given, then under $SPFT_DATA_DIR. `field` names the config key in errors.
[[nodiscard]] std::filesystem::path resolve_data_path(const std::string& value, const std::string& field);

/// Builds and normalizes the transfer task described by the config.
[[nodiscard]] TransferTaskPair build_task(const TaskSpec& spec);

/// 64-bit FNV-1a, hex encoded.
[[nodiscard]] std::string fnv1a_hex(const std::string& bytes);

/// Parses argv and runs one subcommand. Returns the process exit code; errors
/// are reported on `err` as a single line.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace spft::cli
