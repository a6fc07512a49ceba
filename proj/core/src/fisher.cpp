#include "spft/fisher.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <stdexcept>

#include "spft/parallel.hpp"

namespace spft {

FisherDiag fisher_diag_over(const Network& net, const Dataset& data, const std::vector<std::size_t>& indices,
                            const FisherOptions& opts) {
    if (indices.empty()) throw std::invalid_argument("fisher: sample count must be positive");
    const std::vector<std::size_t> shared = net.params().shared_indices();
    const std::size_t chunk = std::max<std::size_t>(1, opts.chunk);
    const std::size_t n_chunks = (indices.size() + chunk - 1) / chunk;
    std::vector<std::vector<double>> partial(n_chunks);

    parallel_for(n_chunks, opts.jobs, [&](std::size_t c) {
        std::vector<double> acc(shared.size(), 0.0);
        const std::size_t end = std::min(indices.size(), (c + 1) * chunk);
        for (std::size_t i = c * chunk; i < end; ++i) {
            net.visit_class_logprob_grads(data.images.sample(indices[i]),
                                          [&](int, double prob, std::span<const double> grad) {
                                              for (std::size_t s = 0; s < shared.size(); ++s) {
                                                  const double g = grad[shared[s]];
                                                  acc[s] += prob * (g * g);
                                              }
                                          });
        }
        partial[c] = std::move(acc);
    });

    FisherDiag out;
    out.values.assign(shared.size(), 0.0);
    for (const auto& p : partial)
        for (std::size_t s = 0; s < shared.size(); ++s) out.values[s] += p[s];
    const double inv = 1.0 / static_cast<double>(indices.size());
    for (double& v : out.values) v *= inv;
    out.sample_count = indices.size();
    return out;
}

FisherDiag estimate_fisher_diag(const Network& net, const Dataset& data, std::size_t m, std::uint64_t seed,
                                const FisherOptions& opts) {
    if (m == 0) throw std::invalid_argument("fisher: m must be positive");
    if (m > data.size()) {
        throw std::invalid_argument("fisher: m = " + std::to_string(m) + " exceeds dataset size " +
                                    std::to_string(data.size()));
    }
    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(m);
    FisherDiag out = fisher_diag_over(net, data, idx, opts);
    return out;
}

}  // namespace spft
