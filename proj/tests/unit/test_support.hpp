#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "spft/data.hpp"
#include "spft/network.hpp"
#include "spft/penalties.hpp"

namespace spft::test {

inline std::vector<double> normal_vector(std::size_t n, std::uint64_t seed, double scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, scale);
    std::vector<double> v(n);
    for (double& x : v) x = dist(rng);
    return v;
}

inline Tensor normal_tensor(std::vector<std::size_t> shape, std::uint64_t seed) {
    Tensor t(std::move(shape));
    t.storage() = normal_vector(t.size(), seed);
    return t;
}

/// Layout of n parameters whose first n_shared entries form S.
inline ParamVector flat_layout(std::size_t n_shared, std::size_t n_fresh) {
    ParamVector p;
    p.values.assign(n_shared + n_fresh, 0.0);
    p.shared_mask.assign(n_shared + n_fresh, false);
    std::fill_n(p.shared_mask.begin(), n_shared, true);
    return p;
}

/// Conv - ReLU - MaxPool - Conv - ReLU - GAP - FC - ReLU - head: every layer kind on a tiny input.
inline Network tiny_net(int num_classes = 3) {
    return Network({2, 6, 6}, {Conv2D{3, 3, 3, 1, 1}, ReLU{}, MaxPool{2, 2}, Conv2D{4, 2, 2, 1, 0}, ReLU{},
                               GlobalAvgPool{}, FullyConnected{5}, ReLU{}, SoftmaxHead{num_classes}});
}

/// Central differences of f at w, one coordinate at a time.
inline std::vector<double> numeric_gradient(const std::function<double(const std::vector<double>&)>& f,
                                            std::vector<double> w, double h) {
    std::vector<double> g(w.size());
    for (std::size_t j = 0; j < w.size(); ++j) {
        const double keep = w[j];
        w[j] = keep + h;
        const double up = f(w);
        w[j] = keep - h;
        const double down = f(w);
        w[j] = keep;
        g[j] = (up - down) / (2.0 * h);
    }
    return g;
}

/// max_j |a_j - b_j| / max(|a_j|, |b_j|, floor)
inline double max_relative_error(const std::vector<double>& a, const std::vector<double>& b, double floor = 1e-3) {
    double worst = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        const double scale = std::max({std::abs(a[j]), std::abs(b[j]), floor});
        worst = std::max(worst, std::abs(a[j] - b[j]) / scale);
    }
    return worst;
}

inline Dataset random_dataset(std::size_t n, Shape3 shape, int num_classes, std::uint64_t seed) {
    Dataset d;
    d.images = normal_tensor({n, shape.channels, shape.height, shape.width}, seed);
    d.num_classes = num_classes;
    d.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) d.labels[i] = static_cast<int>(i % static_cast<std::size_t>(num_classes));
    return d;
}

}  // namespace spft::test
