#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spft/network.hpp"

namespace spft {

enum class PenaltyKind { L2, L2SP, L2SPFisher, L1SP, GLSP, GLSPFisher };

[[nodiscard]] std::string_view to_string(PenaltyKind kind) noexcept;
/// Accepts "L2", "L2SP", "L2SP_FISHER", "L1SP", "GLSP", "GLSP_FISHER".
[[nodiscard]] PenaltyKind parse_penalty_kind(std::string_view name);

[[nodiscard]] constexpr bool uses_fisher(PenaltyKind k) noexcept {
    return k == PenaltyKind::L2SPFisher || k == PenaltyKind::GLSPFisher;
}
[[nodiscard]] constexpr bool uses_groups(PenaltyKind k) noexcept {
    return k == PenaltyKind::GLSP || k == PenaltyKind::GLSPFisher;
}
[[nodiscard]] constexpr bool uses_reference(PenaltyKind k) noexcept { return k != PenaltyKind::L2; }
[[nodiscard]] constexpr bool has_prox(PenaltyKind k) noexcept {
    return k == PenaltyKind::L1SP || k == PenaltyKind::GLSP;
}

struct GroupProvenance {
    std::size_t layer = 0;  // index in Network::layers()
    std::size_t unit = 0;   // output channel or unit
};

/// Partition of the shared parameters into fan-in groups.
struct GroupStructure {
    std::vector<std::vector<std::size_t>> groups;  // global parameter indices
    std::vector<double> weights;                   // s_g
    std::vector<GroupProvenance> provenance;

    [[nodiscard]] std::size_t count() const noexcept { return groups.size(); }
    [[nodiscard]] std::vector<std::size_t> sizes() const;
};

/// One group per output channel of every shared conv layer and per output unit
/// of every shared fully-connected layer. The unit's bias joins its group and
/// s_g = sqrt(p_g).
[[nodiscard]] GroupStructure build_channel_groups(const Network& net);

struct PenaltyConfig {
    PenaltyKind kind = PenaltyKind::L2SP;
    double alpha = 0.0;
    double beta = 0.0;
    std::vector<double> reference;               // w0 on S, in shared-index order
    std::optional<std::vector<double>> fisher_diag;  // F_jj on S, in shared-index order
    std::optional<GroupStructure> groups;
    double epsilon = 1e-6;
};

/// A penalty bound to a parameter layout. Precomputes the shared/fresh index
/// sets and validates the configuration against the layout.
///
/// Every kind is the sum of a term on the shared part S and the smooth term
/// (c/2)||w_fresh||^2, with c = beta, except for L2 where c = alpha and the
/// shared reference is the origin.
class Penalty {
public:
    Penalty(PenaltyConfig cfg, const ParamVector& layout);

    [[nodiscard]] const PenaltyConfig& config() const noexcept { return cfg_; }
    [[nodiscard]] PenaltyKind kind() const noexcept { return cfg_.kind; }

    /// Exact (unsmoothed) penalty.
    [[nodiscard]] double value(std::span<const double> w) const;
    /// Penalty with |x| -> sqrt(x^2 + eps^2) and ||v|| -> sqrt(||v||^2 + eps^2).
    [[nodiscard]] double surrogate_value(std::span<const double> w) const;
    /// Gradient of the surrogate (exact gradient for the quadratic kinds).
    [[nodiscard]] std::vector<double> grad(std::span<const double> w) const;
    void add_grad(std::span<const double> w, std::span<double> out) const;
    /// Gradient of the fresh-part term only; the smooth part in forward-backward splitting.
    void add_fresh_grad(std::span<const double> w, std::span<double> out) const;
    /// argmin_u ||u - w||^2 / (2 eta) + shared-part penalty(u). Fresh coordinates are untouched.
    void prox_inplace(std::span<double> w, double eta) const;

private:
    [[nodiscard]] double shared_term(std::span<const double> w, bool smoothed) const;
    [[nodiscard]] double fresh_term(std::span<const double> w) const;
    [[nodiscard]] double fresh_coefficient() const noexcept;

    PenaltyConfig cfg_;
    std::size_t n_ = 0;
    std::vector<std::size_t> shared_;
    std::vector<std::size_t> fresh_;
    std::vector<double> ref_;     // full length, zero on the fresh part
    std::vector<double> fisher_;  // full length, empty unless a Fisher kind
};

[[nodiscard]] double penalty_value(const PenaltyConfig& cfg, const ParamVector& w);
[[nodiscard]] std::vector<double> penalty_grad(const PenaltyConfig& cfg, const ParamVector& w);
/// Closed-form proximal step; only for L1SP and GLSP.
[[nodiscard]] ParamVector prox_step(const PenaltyConfig& cfg, const ParamVector& w, double eta);

}  // namespace spft
