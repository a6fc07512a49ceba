#include "spft/penalties.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <utility>

namespace spft {

namespace {

constexpr std::array<std::pair<PenaltyKind, std::string_view>, 6> kNames{{
    {PenaltyKind::L2, "L2"},
    {PenaltyKind::L2SP, "L2SP"},
    {PenaltyKind::L2SPFisher, "L2SP_FISHER"},
    {PenaltyKind::L1SP, "L1SP"},
    {PenaltyKind::GLSP, "GLSP"},
    {PenaltyKind::GLSPFisher, "GLSP_FISHER"},
}};

}  // namespace

std::string_view to_string(PenaltyKind kind) noexcept {
    for (const auto& [k, name] : kNames)
        if (k == kind) return name;
    return "?";
}

PenaltyKind parse_penalty_kind(std::string_view name) {
    for (const auto& [k, n] : kNames)
        if (n == name) return k;
    throw std::invalid_argument("unknown penalty kind '" + std::string(name) + "'");
}

std::vector<std::size_t> GroupStructure::sizes() const {
    std::vector<std::size_t> out;
    out.reserve(groups.size());
    for (const auto& g : groups) out.push_back(g.size());
    return out;
}

GroupStructure build_channel_groups(const Network& net) {
    GroupStructure gs;
    for (const ParamSlice& s : net.shared_slices()) {
        for (std::size_t u = 0; u < s.out_units; ++u) {
            std::vector<std::size_t> g;
            g.reserve(s.fan_in + 1);
            for (std::size_t j = 0; j < s.fan_in; ++j) g.push_back(s.weight_index(u, j));
            g.push_back(s.bias_index(u));
            gs.weights.push_back(std::sqrt(static_cast<double>(g.size())));
            gs.groups.push_back(std::move(g));
            gs.provenance.push_back({s.layer, u});
        }
    }
    if (gs.groups.empty()) throw std::invalid_argument("build_channel_groups: network has no shared parameters");
    return gs;
}

Penalty::Penalty(PenaltyConfig cfg, const ParamVector& layout)
    : cfg_(std::move(cfg)), n_(layout.size()), shared_(layout.shared_indices()), fresh_(layout.fresh_indices()) {
    auto finite_nonneg = [](double v) { return std::isfinite(v) && v >= 0.0; };
    if (!finite_nonneg(cfg_.alpha) || !finite_nonneg(cfg_.beta)) {
        throw std::invalid_argument("penalty: alpha and beta must be finite and nonnegative");
    }
    if (!(cfg_.epsilon > 0.0) || !std::isfinite(cfg_.epsilon)) {
        throw std::invalid_argument("penalty: epsilon must be positive");
    }
    ref_.assign(n_, 0.0);
    if (uses_reference(cfg_.kind)) {
        if (cfg_.reference.size() != shared_.size()) {
            throw std::invalid_argument("penalty: " + std::string(to_string(cfg_.kind)) + " requires a reference of length " +
                                        std::to_string(shared_.size()) + ", got " +
                                        std::to_string(cfg_.reference.size()));
        }
        for (std::size_t i = 0; i < shared_.size(); ++i) ref_[shared_[i]] = cfg_.reference[i];
    }
    if (uses_fisher(cfg_.kind)) {
        if (!cfg_.fisher_diag) throw std::invalid_argument("penalty: Fisher kind requires fisher_diag");
        if (cfg_.fisher_diag->size() != shared_.size()) {
            throw std::invalid_argument("penalty: fisher_diag length does not match the shared part");
        }
        if (!std::all_of(cfg_.fisher_diag->begin(), cfg_.fisher_diag->end(), finite_nonneg)) {
            throw std::invalid_argument("penalty: fisher_diag entries must be finite and nonnegative");
        }
        fisher_.assign(n_, 0.0);
        for (std::size_t i = 0; i < shared_.size(); ++i) fisher_[shared_[i]] = (*cfg_.fisher_diag)[i];
    }
    if (uses_groups(cfg_.kind)) {
        if (!cfg_.groups) throw std::invalid_argument("penalty: group kind requires a group structure");
        const GroupStructure& gs = *cfg_.groups;
        if (gs.weights.size() != gs.groups.size()) throw std::invalid_argument("penalty: one weight per group required");
        std::vector<char> seen(n_, 0);
        std::size_t covered = 0;
        for (std::size_t g = 0; g < gs.groups.size(); ++g) {
            if (gs.groups[g].empty()) throw std::invalid_argument("penalty: empty group");
            if (!(gs.weights[g] > 0.0)) throw std::invalid_argument("penalty: group weights must be positive");
            for (std::size_t j : gs.groups[g]) {
                if (j >= n_ || !layout.shared_mask[j]) throw std::invalid_argument("penalty: group index outside S");
                if (seen[j]) throw std::invalid_argument("penalty: groups overlap");
                seen[j] = 1;
                ++covered;
            }
        }
        if (covered != shared_.size()) throw std::invalid_argument("penalty: groups do not cover S");
    }
}

double Penalty::fresh_coefficient() const noexcept {
    return cfg_.kind == PenaltyKind::L2 ? cfg_.alpha : cfg_.beta;
}

double Penalty::fresh_term(std::span<const double> w) const {
    double sum = 0.0;
    for (std::size_t j : fresh_) sum += w[j] * w[j];
    return 0.5 * fresh_coefficient() * sum;
}

double Penalty::shared_term(std::span<const double> w, bool smoothed) const {
    const double eps2 = cfg_.epsilon * cfg_.epsilon;
    switch (cfg_.kind) {
        case PenaltyKind::L2:
        case PenaltyKind::L2SP: {
            double sum = 0.0;
            for (std::size_t j : shared_) {
                const double d = w[j] - ref_[j];
                sum += d * d;
            }
            return 0.5 * cfg_.alpha * sum;
        }
        case PenaltyKind::L2SPFisher: {
            double sum = 0.0;
            for (std::size_t j : shared_) {
                const double d = w[j] - ref_[j];
                sum += fisher_[j] * (d * d);
            }
            return 0.5 * cfg_.alpha * sum;
        }
        case PenaltyKind::L1SP: {
            double sum = 0.0;
            for (std::size_t j : shared_) {
                const double d = w[j] - ref_[j];
                sum += smoothed ? std::sqrt(d * d + eps2) : std::abs(d);
            }
            return cfg_.alpha * sum;
        }
        case PenaltyKind::GLSP:
        case PenaltyKind::GLSPFisher: {
            const bool fisher = cfg_.kind == PenaltyKind::GLSPFisher;
            const GroupStructure& gs = *cfg_.groups;
            double sum = 0.0;
            for (std::size_t g = 0; g < gs.groups.size(); ++g) {
                double sq = 0.0;
                for (std::size_t j : gs.groups[g]) {
                    const double d = w[j] - ref_[j];
                    sq += fisher ? fisher_[j] * (d * d) : d * d;
                }
                sum += gs.weights[g] * (smoothed ? std::sqrt(sq + eps2) : std::sqrt(sq));
            }
            return cfg_.alpha * sum;
        }
    }
    return 0.0;
}

double Penalty::value(std::span<const double> w) const {
    if (w.size() != n_) throw std::invalid_argument("penalty: parameter length mismatch");
    return shared_term(w, false) + fresh_term(w);
}

double Penalty::surrogate_value(std::span<const double> w) const {
    if (w.size() != n_) throw std::invalid_argument("penalty: parameter length mismatch");
    return shared_term(w, true) + fresh_term(w);
}

void Penalty::add_fresh_grad(std::span<const double> w, std::span<double> out) const {
    const double c = fresh_coefficient();
    for (std::size_t j : fresh_) out[j] += c * w[j];
}

void Penalty::add_grad(std::span<const double> w, std::span<double> out) const {
    if (w.size() != n_ || out.size() != n_) throw std::invalid_argument("penalty: parameter length mismatch");
    const double a = cfg_.alpha;
    const double eps2 = cfg_.epsilon * cfg_.epsilon;
    switch (cfg_.kind) {
        case PenaltyKind::L2:
        case PenaltyKind::L2SP:
            for (std::size_t j : shared_) out[j] += a * (w[j] - ref_[j]);
            break;
        case PenaltyKind::L2SPFisher:
            for (std::size_t j : shared_) out[j] += a * (fisher_[j] * (w[j] - ref_[j]));
            break;
        case PenaltyKind::L1SP:
            for (std::size_t j : shared_) {
                const double d = w[j] - ref_[j];
                out[j] += (a / std::sqrt(d * d + eps2)) * d;
            }
            break;
        case PenaltyKind::GLSP:
        case PenaltyKind::GLSPFisher: {
            const bool fisher = cfg_.kind == PenaltyKind::GLSPFisher;
            const GroupStructure& gs = *cfg_.groups;
            for (std::size_t g = 0; g < gs.groups.size(); ++g) {
                double sq = 0.0;
                for (std::size_t j : gs.groups[g]) {
                    const double d = w[j] - ref_[j];
                    sq += fisher ? fisher_[j] * (d * d) : d * d;
                }
                const double coef = a * gs.weights[g] / std::sqrt(sq + eps2);
                for (std::size_t j : gs.groups[g]) {
                    const double d = w[j] - ref_[j];
                    out[j] += fisher ? coef * (fisher_[j] * d) : coef * d;
                }
            }
            break;
        }
    }
    add_fresh_grad(w, out);
}

std::vector<double> Penalty::grad(std::span<const double> w) const {
    std::vector<double> out(n_, 0.0);
    add_grad(w, out);
    return out;
}

void Penalty::prox_inplace(std::span<double> w, double eta) const {
    if (!has_prox(cfg_.kind)) {
        throw std::invalid_argument("prox_step: no closed-form prox for " + std::string(to_string(cfg_.kind)));
    }
    if (!(eta > 0.0)) throw std::invalid_argument("prox_step: eta must be positive");
    if (w.size() != n_) throw std::invalid_argument("penalty: parameter length mismatch");
    const double t = eta * cfg_.alpha;
    if (cfg_.kind == PenaltyKind::L1SP) {
        for (std::size_t j : shared_) {
            const double d = w[j] - ref_[j];
            if (std::abs(d) > t) {
                w[j] -= d > 0.0 ? t : -t;
            } else {
                w[j] = ref_[j];
            }
        }
        return;
    }
    const GroupStructure& gs = *cfg_.groups;
    for (std::size_t g = 0; g < gs.groups.size(); ++g) {
        double sq = 0.0;
        for (std::size_t j : gs.groups[g]) {
            const double d = w[j] - ref_[j];
            sq += d * d;
        }
        const double norm = std::sqrt(sq);
        const double thresh = t * gs.weights[g];
        if (norm > thresh) {
            const double shrink = thresh / norm;
            for (std::size_t j : gs.groups[g]) w[j] -= shrink * (w[j] - ref_[j]);
        } else {
            for (std::size_t j : gs.groups[g]) w[j] = ref_[j];
        }
    }
}

double penalty_value(const PenaltyConfig& cfg, const ParamVector& w) { return Penalty(cfg, w).value(w.values); }

std::vector<double> penalty_grad(const PenaltyConfig& cfg, const ParamVector& w) {
    return Penalty(cfg, w).grad(w.values);
}

ParamVector prox_step(const PenaltyConfig& cfg, const ParamVector& w, double eta) {
    ParamVector out = w;
    Penalty(cfg, w).prox_inplace(out.values, eta);
    return out;
}

}  // namespace spft
