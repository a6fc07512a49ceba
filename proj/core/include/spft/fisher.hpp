#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "spft/data.hpp"
#include "spft/network.hpp"

namespace spft {

/// Diagonal Fisher information over the shared parameters, in shared-index order.
struct FisherDiag {
    std::vector<double> values;
    std::size_t sample_count = 0;
    std::string source_checkpoint_id;
};

struct FisherOptions {
    std::size_t jobs = 1;
    /// Examples per reduction chunk. Partial sums are formed per chunk and added
    /// in chunk order, so the result does not depend on `jobs`.
    std::size_t chunk = 64;
};

/// F_jj = (1/m) sum_i sum_k f_k(x_i) (d/dw_j log f_k(x_i))^2 over m inputs drawn
/// without replacement with `seed`. The inner sum is the exact expectation over
/// all K classes.
[[nodiscard]] FisherDiag estimate_fisher_diag(const Network& net, const Dataset& data, std::size_t m,
                                              std::uint64_t seed, const FisherOptions& opts = {});

/// Same estimator over an explicit list of example indices.
[[nodiscard]] FisherDiag fisher_diag_over(const Network& net, const Dataset& data,
                                          const std::vector<std::size_t>& indices, const FisherOptions& opts = {});

}  // namespace spft
