#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "spft/checkpoint.hpp"

namespace spft::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

json small_config(const fs::path& root) {
    json c = json::parse(R"({
      "schema_version": 1,
      "task": {"kind": "synthetic", "per_class_train": 8,
               "synthetic": {"seed": 2, "height": 8, "width": 8, "source_classes": 3, "target_classes": 3,
                             "source_per_class": 30, "source_test_per_class": 10, "per_class_val": 4, "per_class_test": 12}},
      "pretrain": {"train": {"total_iters": 30, "decay_at": 20, "batch_size": 16}, "fisher_samples": 20},
      "train": {"total_iters": 10, "decay_at": 5, "batch_size": 8},
      "penalty": {"kind": "L2SP", "alpha": 0.1, "beta": 0.01,
                  "alpha_grid": [0.001, 0.01, 0.1], "beta_grid": [0.001, 0.01, 0.1]},
      "sweep": {"folds": 5, "retrain_best": false},
      "theory": {"trials": 100, "max_dim": 20},
      "seeds": [3]
    })");
    c["checkpoint"] = (root / "pre" / "checkpoint.spft").string();
    c["finetuned"] = {(root / "ft" / "finetuned_seed3.spft").string()};
    return c;
}

class Cli : public ::testing::Test {
protected:
    fs::path root;
    void SetUp() override {
        root = fs::temp_directory_path() /
               ("spft_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(root);
        fs::create_directories(root);
    }
    void TearDown() override { fs::remove_all(root); }

    fs::path write_config(const json& c, const std::string& name = "config.json") const {
        std::ofstream(root / name) << c.dump(2);
        return root / name;
    }

    int call(std::vector<std::string> args, std::string* err_text = nullptr) const {
        std::vector<const char*> argv{"spft"};
        for (const std::string& a : args) argv.push_back(a.c_str());
        std::ostringstream out, err;
        const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
        if (err_text) *err_text = err.str();
        return code;
    }
};

TEST_F(Cli, SchemaFileMatchesEmbeddedSchema) {
    std::ifstream in(std::string(SPFT_SOURCE_DIR) + "/configs/schema.json");
    EXPECT_EQ(json::parse(in), schema());
}

TEST_F(Cli, ShippedConfigsValidate) {
    for (const auto& e : fs::directory_iterator(std::string(SPFT_SOURCE_DIR) + "/configs")) {
        if (e.path().filename() == "schema.json") continue;
        std::ifstream in(e.path());
        EXPECT_TRUE(schema_violations(json::parse(in)).empty()) << e.path();
    }
}

TEST_F(Cli, UnknownAndMistypedKeysAreRejected) {
    json c = small_config(root);
    c["train"]["learning_rate"] = 0.1;
    EXPECT_EQ(schema_violations(c), std::vector<std::string>{"train.learning_rate: unknown key"});
    c = small_config(root);
    c["seeds"] = {1, -2};
    EXPECT_EQ(schema_violations(c).front(), "seeds[1]: must be >= 0");
    c = small_config(root);
    c["penalty"]["kind"] = "L3";
    EXPECT_FALSE(schema_violations(c).empty());
    c = small_config(root);
    c.erase("task");
    EXPECT_EQ(schema_violations(c).front(), "task: required");
    c = small_config(root);
    c["train"]["decay_at"] = 50;
    EXPECT_THROW((void)parse_config(c), ConfigError);
}

TEST_F(Cli, OverridesReachTheSavedConfig) {
    const ExperimentConfig c = parse_config(small_config(root), {std::string("elsewhere"), 9u, 2u});
    EXPECT_EQ(c.output_dir, "elsewhere");
    EXPECT_EQ(c.seeds, std::vector<std::uint64_t>{9});
    EXPECT_EQ(c.jobs, 2u);
    EXPECT_EQ(c.document["seeds"], json::array({9}));
    EXPECT_EQ(parse_config(c.document).document, c.document);
}

TEST_F(Cli, MissingDatasetNamesTheField) {
    json c = small_config(root);
    c["task"] = {{"kind", "idx"}, {"images", "absent-images"}, {"labels", "absent-labels"}};
    std::string err;
    EXPECT_NE(call({"pretrain", "--config", write_config(c).string(), "--out", (root / "o").string()}, &err), 0);
    EXPECT_NE(err.find("task.images"), std::string::npos) << err;
    EXPECT_EQ(std::count(err.begin(), err.end(), '\n'), 1);
}

TEST_F(Cli, DataDirectoryFallback) {
    const char* old = std::getenv("SPFT_DATA_DIR");
    ::setenv("SPFT_DATA_DIR", SPFT_TEST_DATA_DIR, 1);
    EXPECT_TRUE(fs::exists(resolve_data_path("digits5k-images-idx3-ubyte", "task.images")));
    EXPECT_TRUE(fs::exists(resolve_data_path("somewhere/digits5k-labels-idx1-ubyte", "task.labels")));
    if (old) ::setenv("SPFT_DATA_DIR", old, 1);
    else ::unsetenv("SPFT_DATA_DIR");
}

TEST_F(Cli, PretrainWritesCheckpointSidecarAndManifest) {
    const fs::path cfg = write_config(small_config(root));
    ASSERT_EQ(call({"pretrain", "--config", cfg.string(), "--out", (root / "pre").string(), "--fisher"}), 0);
    const Network net = load_checkpoint(root / "pre" / "checkpoint.spft");
    EXPECT_EQ(encode_checkpoint(net), read_file(root / "pre" / "checkpoint.spft"));
    EXPECT_EQ(read_file(root / "pre" / "checkpoint.spft.fisher").substr(0, 4), "SPFI");
    const json manifest = json::parse(read_file(root / "pre" / "manifest.json"));
    EXPECT_EQ(manifest["command"], "pretrain");
    EXPECT_EQ(manifest["seeds"], json::array({3}));
    EXPECT_EQ(manifest["outputs"]["pretrain.csv"], fnv1a_hex(read_file(root / "pre" / "pretrain.csv")));
    // the saved config reproduces the run
    const json saved = json::parse(read_file(root / "pre" / "config.json"));
    EXPECT_EQ(manifest["config_hash"], fnv1a_hex(saved.dump()));
}

TEST_F(Cli, FinetuneNeedsCheckpointAndSidecar) {
    json c = small_config(root);
    std::string err;
    EXPECT_NE(call({"finetune", "--config", write_config(c).string(), "--out", (root / "ft").string()}, &err), 0);
    EXPECT_NE(err.find("checkpoint"), std::string::npos);
    ASSERT_EQ(call({"pretrain", "--config", write_config(c).string(), "--out", (root / "pre").string()}), 0);
    c["penalty"]["kind"] = "GLSP_FISHER";
    EXPECT_NE(call({"finetune", "--config", write_config(c).string(), "--out", (root / "ft").string()}, &err), 0);
    EXPECT_NE(err.find("sidecar"), std::string::npos);
}

TEST_F(Cli, SweepSurfaceHasOneRowPerCellAndFold) {
    const fs::path cfg = write_config(small_config(root));
    ASSERT_EQ(call({"pretrain", "--config", cfg.string(), "--out", (root / "pre").string()}), 0);
    ASSERT_EQ(call({"sweep", "--config", cfg.string(), "--out", (root / "sw").string(), "--jobs", "2"}), 0);
    const std::string surface = read_file(root / "sw" / "surface.csv");
    EXPECT_EQ(std::count(surface.begin(), surface.end(), '\n'), 46);
    EXPECT_EQ(surface.substr(0, 24), "alpha,beta,fold,val_acc\n");
    EXPECT_FALSE(fs::exists(root / "sw" / "best.csv"));
}

TEST_F(Cli, TheoryDefaultsTo100PassingTrials) {
    json c = small_config(root);
    c.erase("theory");
    ASSERT_EQ(call({"theory", "--config", write_config(c).string(), "--out", (root / "th").string()}), 0);
    std::istringstream csv(read_file(root / "th" / "theory.csv"));
    std::string line;
    std::getline(csv, line);
    EXPECT_EQ(line, "trial,d,alpha,residual,min_coeff,max_coeff");
    int rows = 0;
    while (std::getline(csv, line)) {
        ++rows;
        std::stringstream fields(line);
        std::string cell;
        for (int i = 0; i < 4; ++i) std::getline(fields, cell, ',');
        EXPECT_LT(std::stod(cell), 1e-8);
    }
    EXPECT_EQ(rows, 100);
}

TEST_F(Cli, PipelineRerunIsByteIdentical) {
    const fs::path cfg = write_config(small_config(root));
    for (const char* dir : {"a", "b"}) {
        const fs::path out = root / dir;
        // both runs read the same checkpoint and fine-tuned model
        ASSERT_EQ(call({"pretrain", "--config", cfg.string(), "--out", (root / "pre").string()}), 0);
        ASSERT_EQ(call({"finetune", "--config", cfg.string(), "--out", (root / "ft").string()}), 0);
        for (const char* cmd : {"ablate-freeze", "forgetting", "r2"})
            ASSERT_EQ(call({cmd, "--config", cfg.string(), "--out", (out / cmd).string()}), 0) << cmd;
        fs::copy(root / "ft", out / "ft", fs::copy_options::recursive);
    }
    for (const char* file : {"ablate-freeze/ablation.csv", "forgetting/forgetting.csv", "r2/r2.csv", "r2/r2_summary.csv",
                             "ft/finetune.csv", "ft/finetuned_seed3.spft"})
        EXPECT_EQ(read_file(root / "a" / file), read_file(root / "b" / file)) << file;
}

TEST_F(Cli, UsageErrorsExitNonzero) {
    EXPECT_NE(call({}), 0);
    EXPECT_NE(call({"pretrain"}), 0);
    EXPECT_NE(call({"launch", "--config", "x"}), 0);
    EXPECT_NE(call({"theory", "--config", (root / "missing.json").string()}), 0);
    std::ofstream(root / "broken.json") << "{ not json";
    std::string err;
    EXPECT_NE(call({"theory", "--config", (root / "broken.json").string()}, &err), 0);
    EXPECT_NE(err.find("config"), std::string::npos);
}

}  // namespace
}  // namespace spft::cli
