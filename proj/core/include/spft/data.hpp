#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "spft/network.hpp"
#include "spft/tensor.hpp"

namespace spft {

struct Dataset {
    Tensor images;  // (N, C, H, W)
    std::vector<int> labels;
    int num_classes = 0;
    std::vector<double> channel_means;  // set once normalized
    std::string id;

    [[nodiscard]] std::size_t size() const noexcept { return labels.size(); }
    [[nodiscard]] bool empty() const noexcept { return labels.empty(); }
    [[nodiscard]] Shape3 example_shape() const;
    /// Throws unless shapes agree and every label lies in [0, num_classes).
    void validate() const;

    [[nodiscard]] Dataset subset(std::span<const std::size_t> indices) const;
    [[nodiscard]] Tensor gather(std::span<const std::size_t> indices) const;
    [[nodiscard]] std::vector<int> gather_labels(std::span<const std::size_t> indices) const;
};

/// Examples of `a` followed by the examples of `b`; both must share shape and classes.
[[nodiscard]] Dataset concat(const Dataset& a, const Dataset& b);

struct TransferTaskPair {
    Dataset source;       // training part of the source task
    Dataset source_test;  // held-out source examples
    Dataset target_train;
    Dataset target_val;
    Dataset target_test;
    std::size_t per_class_train = 0;
};

/// Reads an IDX image file (magic 0x00000803) and label file (magic 0x00000801).
/// Pixels are scaled to [0, 1]; grayscale images get C = 1.
[[nodiscard]] Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);

/// Source = examples of `source_classes` relabeled 0.. (minus a seeded held-out
/// fraction kept as source_test). Each target class gets `per_class_train`
/// training examples; `val_fraction` of the rest goes to validation, the
/// remainder is test.
[[nodiscard]] TransferTaskPair make_split_transfer(const Dataset& dataset, const std::vector<int>& source_classes,
                                                   const std::vector<int>& target_classes,
                                                   std::size_t per_class_train, double val_fraction,
                                                   std::uint64_t seed, double source_test_fraction = 0.2);

struct SyntheticOptions {
    double noise = 3.0;  // per-pixel standard deviation around the class prototype
    std::size_t blobs = 4;
    std::size_t source_per_class = 200;
    std::size_t source_test_per_class = 50;
    std::size_t per_class_train = 30;
    std::size_t per_class_val = 20;
    std::size_t per_class_test = 100;
};

struct SyntheticPrototypes {
    std::vector<std::vector<double>> source;  // one unit-RMS image per source class
    std::vector<std::vector<double>> target;
};

/// Class prototypes are sums of Gaussian blobs normalized to unit RMS. Target
/// class k starts from source prototype (k mod source_K) and moves by `shift`
/// along a unit-RMS blob direction.
[[nodiscard]] SyntheticPrototypes synthetic_prototypes(std::uint64_t seed, Shape3 dims, int source_K, int target_K,
                                                       double shift, const SyntheticOptions& opts = {});

[[nodiscard]] TransferTaskPair generate_synthetic_pair(std::uint64_t seed, Shape3 dims, int source_K, int target_K,
                                                       double shift, const SyntheticOptions& opts = {});

/// Per-channel mean over all pixels of `train`.
[[nodiscard]] std::vector<double> compute_channel_means(const Dataset& train);
/// Subtracts `means` per channel and records them in channel_means.
void apply_channel_means(Dataset& data, const std::vector<double>& means);

/// 2x2 average pooling of every image.
[[nodiscard]] Dataset downsample2(const Dataset& data);

struct AugmentOptions {
    bool mirror = false;
    int crop_pad = 0;
    double blur_prob = 0.0;
};

/// Per image: mirror with probability 0.5, zero-pad by crop_pad and crop back at
/// a random offset, then a 3x3 box blur with probability blur_prob.
[[nodiscard]] Tensor augment(const Tensor& batch, std::uint64_t seed, const AugmentOptions& opts);

void mirror_horizontal(std::span<double> image, Shape3 shape);

/// Stratified k-fold assignment: folds[f] lists the indices of fold f.
/// Throws when some class has fewer than k examples.
[[nodiscard]] std::vector<std::vector<std::size_t>> stratified_folds(const Dataset& data, std::size_t k,
                                                                     std::uint64_t seed);

}  // namespace spft
