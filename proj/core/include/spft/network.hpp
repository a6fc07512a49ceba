#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "spft/tensor.hpp"

namespace spft {

struct Shape3 {
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;

    [[nodiscard]] std::size_t size() const noexcept { return channels * height * width; }
    friend bool operator==(const Shape3&, const Shape3&) = default;
};

struct Conv2D {
    int out_channels = 0;
    int kernel_h = 3;
    int kernel_w = 3;
    int stride = 1;
    int padding = 0;
    friend bool operator==(const Conv2D&, const Conv2D&) = default;
};
struct FullyConnected {
    int out_dim = 0;
    friend bool operator==(const FullyConnected&, const FullyConnected&) = default;
};
struct ReLU {
    friend bool operator==(const ReLU&, const ReLU&) = default;
};
struct MaxPool {
    int k = 2;
    int stride = 2;
    friend bool operator==(const MaxPool&, const MaxPool&) = default;
};
struct GlobalAvgPool {
    friend bool operator==(const GlobalAvgPool&, const GlobalAvgPool&) = default;
};
/// Affine map to `num_classes` logits followed by a softmax.
struct SoftmaxHead {
    int num_classes = 0;
    friend bool operator==(const SoftmaxHead&, const SoftmaxHead&) = default;
};

using LayerSpec = std::variant<Conv2D, FullyConnected, ReLU, MaxPool, GlobalAvgPool, SoftmaxHead>;

std::string layer_name(const LayerSpec& spec);

/// Location of one parameterized layer inside the flat parameter vector.
/// Weights are stored unit-major ([out][fan_in]) and followed by one bias per unit.
struct ParamSlice {
    std::size_t layer = 0;
    std::size_t offset = 0;
    std::size_t length = 0;
    std::size_t out_units = 0;
    std::size_t fan_in = 0;
    std::vector<std::size_t> kernel_dims;  // {out, in, kh, kw} for conv, {out, in} otherwise

    [[nodiscard]] std::size_t weight_index(std::size_t unit, std::size_t j) const noexcept {
        return offset + unit * fan_in + j;
    }
    [[nodiscard]] std::size_t bias_index(std::size_t unit) const noexcept {
        return offset + out_units * fan_in + unit;
    }
    friend bool operator==(const ParamSlice&, const ParamSlice&) = default;
};

/// Flat parameter vector with its layer layout and the shared/fresh partition.
/// The shared part holds everything inherited from the source architecture;
/// the fresh part is the classification head.
struct ParamVector {
    std::vector<double> values;
    std::vector<ParamSlice> layout;
    std::vector<bool> shared_mask;

    [[nodiscard]] std::size_t size() const noexcept { return values.size(); }
    [[nodiscard]] std::vector<std::size_t> shared_indices() const;
    [[nodiscard]] std::vector<std::size_t> fresh_indices() const;
    [[nodiscard]] std::vector<double> shared_values() const;
};

struct ForwardResult {
    std::vector<Tensor> activations;  // output of every layer, shape (B, C, H, W)
    Tensor probs;                     // (B, K)
};

struct LossGrad {
    double loss = 0.0;
    std::vector<double> grad;
};

class Network {
public:
    Network(Shape3 input_shape, std::vector<LayerSpec> layers);

    [[nodiscard]] const Shape3& input_shape() const noexcept { return input_shape_; }
    [[nodiscard]] const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
    /// Output shape of layer i; the head reports (K, 1, 1).
    [[nodiscard]] const std::vector<Shape3>& output_shapes() const noexcept { return shapes_; }
    [[nodiscard]] ParamVector& params() noexcept { return params_; }
    [[nodiscard]] const ParamVector& params() const noexcept { return params_; }
    [[nodiscard]] int num_classes() const;
    [[nodiscard]] const ParamSlice& head_slice() const { return params_.layout.back(); }
    /// Parameterized layers other than the head, in input-to-output order.
    [[nodiscard]] std::vector<ParamSlice> shared_slices() const;

    /// He-uniform for hidden layers, Glorot-uniform head, zero biases.
    void initialize(std::uint64_t seed);

    [[nodiscard]] ForwardResult forward(const Tensor& batch) const;
    [[nodiscard]] Tensor predict(const Tensor& batch) const;

    /// Mean negative log-likelihood over the batch and its exact gradient.
    [[nodiscard]] LossGrad loss_and_grad(const Tensor& batch, std::span<const int> labels) const;

    /// Gradient of log f_k(x; w) for a single example x of shape (C, H, W) or (1, C, H, W).
    [[nodiscard]] std::vector<double> per_class_logprob_grad(const Tensor& x, int k) const;

    /// One forward pass on `x` followed by one backward pass per class.
    /// The visitor sees (k, f_k(x), d log f_k / dw); classes with f_k == 0 are skipped.
    void visit_class_logprob_grads(
        std::span<const double> x,
        const std::function<void(int, double, std::span<const double>)>& visitor) const;

    /// Copy with a freshly initialized head for `num_classes` outputs.
    [[nodiscard]] Network replace_head(int num_classes, std::uint64_t seed) const;

private:
    struct Workspace;

    void forward_one(std::span<const double> x, Workspace& ws) const;
    void backward_one(Workspace& ws, std::span<const double> dlogits, std::span<double> grad) const;

    Shape3 input_shape_;
    std::vector<LayerSpec> layers_;
    std::vector<Shape3> shapes_;
    std::vector<std::size_t> slice_of_layer_;  // layer -> layout index, npos if none
    ParamVector params_;
};

/// Conv(16,3x3,pad 1)-ReLU-MaxPool2 - Conv(32,3x3,pad 1)-ReLU-MaxPool2 - GlobalAvgPool - SoftmaxHead.
[[nodiscard]] Network make_desknet(Shape3 input_shape, int num_classes);

}  // namespace spft
