#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace spft {

/// Dense row-major tensor of doubles.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0)
        : shape_(std::move(shape)), data_(count(shape_), fill) {}
    Tensor(std::vector<std::size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (count(shape_) != data_.size()) {
            throw std::invalid_argument("tensor: data length " + std::to_string(data_.size()) +
                                        " does not match shape product " +
                                        std::to_string(count(shape_)));
        }
    }

    [[nodiscard]] const std::vector<std::size_t>& shape() const noexcept { return shape_; }
    [[nodiscard]] std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    [[nodiscard]] std::size_t rank() const noexcept { return shape_.size(); }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }

    [[nodiscard]] std::span<double> data() noexcept { return data_; }
    [[nodiscard]] std::span<const double> data() const noexcept { return data_; }
    [[nodiscard]] std::vector<double>& storage() noexcept { return data_; }
    [[nodiscard]] const std::vector<double>& storage() const noexcept { return data_; }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    /// Element count of the trailing axes starting at `axis` (the stride of axis-1).
    [[nodiscard]] std::size_t inner_size(std::size_t axis) const {
        std::size_t n = 1;
        for (std::size_t i = axis; i < shape_.size(); ++i) n *= shape_[i];
        return n;
    }

    /// View of sample `i` along the leading axis.
    [[nodiscard]] std::span<const double> sample(std::size_t i) const {
        const std::size_t stride = inner_size(1);
        return std::span<const double>(data_).subspan(i * stride, stride);
    }
    [[nodiscard]] std::span<double> sample(std::size_t i) {
        const std::size_t stride = inner_size(1);
        return std::span<double>(data_).subspan(i * stride, stride);
    }

    void reshape(std::vector<std::size_t> shape) {
        if (count(shape) != data_.size()) throw std::invalid_argument("tensor: reshape changes size");
        shape_ = std::move(shape);
    }

    [[nodiscard]] bool all_finite() const noexcept;

    static std::size_t count(const std::vector<std::size_t>& shape) {
        return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                               [](std::size_t a, std::size_t b) { return a * b; });
    }

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

}  // namespace spft
