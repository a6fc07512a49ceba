#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "spft/penalties.hpp"
#include "test_support.hpp"

namespace spft {
namespace {

using test::flat_layout;
using test::normal_vector;

ParamVector with_values(ParamVector p, std::vector<double> v) {
    p.values = std::move(v);
    return p;
}

TEST(PenaltyValue, L2SPIsZeroAtReference) {
    PenaltyConfig cfg{PenaltyKind::L2SP, 1.0, 1.0, {0.3, -0.7}, {}, {}, 1e-6};
    EXPECT_EQ(penalty_value(cfg, with_values(flat_layout(2, 1), {0.3, -0.7, 0.0})), 0.0);
}

TEST(PenaltyValue, L2SPHandValue) {
    PenaltyConfig cfg{PenaltyKind::L2SP, 2.0, 0.0, {1.0, 0.0}, {}, {}, 1e-6};
    EXPECT_DOUBLE_EQ(penalty_value(cfg, with_values(flat_layout(2, 0), {1.0, 2.0})), 4.0);
}

TEST(PenaltyValue, L1SPHandValue) {
    PenaltyConfig cfg{PenaltyKind::L1SP, 1.0, 0.0, {0.0, 0.0}, {}, {}, 1e-6};
    EXPECT_DOUBLE_EQ(penalty_value(cfg, with_values(flat_layout(2, 0), {0.5, -1.5})), 2.0);
}

TEST(PenaltyValue, GLSPHandValue) {
    GroupStructure gs{{{0, 1, 2, 3}}, {2.0}, {{}}};
    PenaltyConfig cfg{PenaltyKind::GLSP, 1.0, 0.0, {0, 0, 0, 0}, {}, gs, 1e-6};
    EXPECT_DOUBLE_EQ(penalty_value(cfg, with_values(flat_layout(4, 0), {1, 1, 1, 1})), 4.0);
}

TEST(PenaltyValue, L2SPFisherHandValue) {
    PenaltyConfig cfg{PenaltyKind::L2SPFisher, 2.0, 0.0, {0.0, 0.0}, std::vector<double>{1.0, 4.0}, {}, 1e-6};
    EXPECT_DOUBLE_EQ(penalty_value(cfg, with_values(flat_layout(2, 0), {1.0, 1.0})), 5.0);
}

TEST(PenaltyValue, FreshPartUsesBeta) {
    PenaltyConfig cfg{PenaltyKind::L2SP, 5.0, 0.5, {0.0}, {}, {}, 1e-6};
    EXPECT_DOUBLE_EQ(penalty_value(cfg, with_values(flat_layout(1, 2), {0.0, 2.0, 2.0})), 0.5 / 2.0 * 8.0);
}

TEST(PenaltyValue, MissingInputsAreErrors) {
    const ParamVector p = flat_layout(2, 1);
    EXPECT_THROW((void)penalty_value({PenaltyKind::L2SP, 1, 1, {}, {}, {}, 1e-6}, p), std::invalid_argument);
    EXPECT_THROW((void)penalty_value({PenaltyKind::L2SPFisher, 1, 1, {0, 0}, {}, {}, 1e-6}, p), std::invalid_argument);
    EXPECT_THROW((void)penalty_value({PenaltyKind::GLSP, 1, 1, {0, 0}, {}, {}, 1e-6}, p), std::invalid_argument);
    EXPECT_THROW((void)penalty_value({PenaltyKind::L2SPFisher, 1, 1, {0, 0}, std::vector<double>{1, -1}, {}, 1e-6}, p),
                 std::invalid_argument);
    EXPECT_THROW((void)penalty_value({PenaltyKind::L2SP, -1, 1, {0, 0}, {}, {}, 1e-6}, p), std::invalid_argument);
    GroupStructure overlapping{{{0, 1}, {1}}, {1.0, 1.0}, {{}, {}}};
    EXPECT_THROW((void)penalty_value({PenaltyKind::GLSP, 1, 1, {0, 0}, {}, overlapping, 1e-6}, p),
                 std::invalid_argument);
    GroupStructure partial{{{0}}, {1.0}, {{}}};
    EXPECT_THROW((void)penalty_value({PenaltyKind::GLSP, 1, 1, {0, 0}, {}, partial, 1e-6}, p), std::invalid_argument);
}

TEST(PenaltyGrad, L2HandValue) {
    PenaltyConfig cfg{PenaltyKind::L2, 0.1, 0.0, {}, {}, {}, 1e-6};
    const std::vector<double> g = penalty_grad(cfg, with_values(flat_layout(1, 1), {1.0, -2.0}));
    EXPECT_DOUBLE_EQ(g[0], 0.1);
    EXPECT_DOUBLE_EQ(g[1], -0.2);
}

// Random instance on 40 shared + 10 fresh coordinates with a random group partition.
struct Instance {
    ParamVector layout;
    std::vector<double> w;
    std::vector<double> reference;
    std::vector<double> fisher;
    GroupStructure groups;
};

Instance random_instance(std::uint64_t seed, std::size_t n_shared = 40, std::size_t n_fresh = 10) {
    Instance in;
    in.layout = flat_layout(n_shared, n_fresh);
    in.w = normal_vector(n_shared + n_fresh, seed);
    in.reference = normal_vector(n_shared, seed + 1000);
    std::mt19937_64 rng(seed + 2000);
    std::uniform_real_distribution<double> u(0.1, 3.0);
    for (std::size_t j = 0; j < n_shared; ++j) in.fisher.push_back(u(rng));
    std::vector<std::size_t> perm(n_shared);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    std::uniform_int_distribution<std::size_t> size(1, 5);
    for (std::size_t at = 0; at < n_shared;) {
        const std::size_t p = std::min(size(rng), n_shared - at);
        in.groups.groups.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(at),
                                      perm.begin() + static_cast<std::ptrdiff_t>(at + p));
        in.groups.weights.push_back(std::sqrt(static_cast<double>(p)));
        in.groups.provenance.push_back({0, in.groups.groups.size() - 1});
        at += p;
    }
    return in;
}

PenaltyConfig config_for(const Instance& in, PenaltyKind kind, double alpha, double beta, double eps = 1e-6) {
    PenaltyConfig cfg{kind, alpha, beta, {}, {}, {}, eps};
    if (uses_reference(kind)) cfg.reference = in.reference;
    if (uses_fisher(kind)) cfg.fisher_diag = in.fisher;
    if (uses_groups(kind)) cfg.groups = in.groups;
    return cfg;
}

constexpr PenaltyKind kAllKinds[] = {PenaltyKind::L2,   PenaltyKind::L2SP, PenaltyKind::L2SPFisher,
                                     PenaltyKind::L1SP, PenaltyKind::GLSP, PenaltyKind::GLSPFisher};

class EveryKind : public ::testing::TestWithParam<PenaltyKind> {};

TEST_P(EveryKind, SmoothedGradientMatchesFiniteDifferences) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Instance in = random_instance(seed);
        const Penalty pen(config_for(in, GetParam(), 0.7, 0.3), in.layout);
        const auto f = [&](const std::vector<double>& w) { return pen.surrogate_value(w); };
        const std::vector<double> numeric = test::numeric_gradient(f, in.w, 1e-5);
        EXPECT_LT(test::max_relative_error(pen.grad(in.w), numeric), 1e-6) << "seed " << seed;
    }
}

TEST_P(EveryKind, ValueIsNonnegativeAndZeroOnlyAtReference) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const Instance in = random_instance(seed);
        const Penalty pen(config_for(in, GetParam(), 0.5, 0.5), in.layout);
        EXPECT_GT(pen.value(in.w), 0.0);
        std::vector<double> at_ref(in.w.size(), 0.0);
        if (uses_reference(GetParam()))
            for (std::size_t i = 0; i < in.reference.size(); ++i) at_ref[i] = in.reference[i];
        EXPECT_EQ(pen.value(at_ref), 0.0);
        for (double g : pen.grad(at_ref)) EXPECT_EQ(g, 0.0);
    }
}

TEST_P(EveryKind, SurrogateConvergesMonotonicallyInEpsilon) {
    const Instance in = random_instance(7);
    const double exact = Penalty(config_for(in, GetParam(), 0.5, 0.5), in.layout).value(in.w);
    double previous_gap = std::numeric_limits<double>::infinity();
    for (double eps : {1e-2, 1e-4, 1e-6}) {
        const double gap = Penalty(config_for(in, GetParam(), 0.5, 0.5, eps), in.layout).surrogate_value(in.w) - exact;
        EXPECT_GE(gap, 0.0);
        EXPECT_LE(gap, previous_gap);
        previous_gap = gap;
    }
    EXPECT_LT(previous_gap, 1e-4);
}

INSTANTIATE_TEST_SUITE_P(Kinds, EveryKind, ::testing::ValuesIn(kAllKinds),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(PenaltyReduction, L2SPWithZeroReferenceAndBetaEqualAlphaIsL2) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const Instance in = random_instance(seed);
        const Penalty l2(config_for(in, PenaltyKind::L2, 0.37, 0.0), in.layout);
        PenaltyConfig sp = config_for(in, PenaltyKind::L2SP, 0.37, 0.37);
        sp.reference.assign(sp.reference.size(), 0.0);
        const Penalty l2sp(sp, in.layout);
        EXPECT_EQ(l2.value(in.w), l2sp.value(in.w));
        EXPECT_EQ(l2.grad(in.w), l2sp.grad(in.w));
    }
}

TEST(PenaltyReduction, UnitFisherIsPlainStartingPoint) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const Instance in = random_instance(seed);
        for (auto [fk, plain] : {std::pair{PenaltyKind::L2SPFisher, PenaltyKind::L2SP},
                                 std::pair{PenaltyKind::GLSPFisher, PenaltyKind::GLSP}}) {
            PenaltyConfig fcfg = config_for(in, fk, 0.8, 0.2);
            fcfg.fisher_diag->assign(in.reference.size(), 1.0);
            const Penalty a(fcfg, in.layout);
            const Penalty b(config_for(in, plain, 0.8, 0.2), in.layout);
            EXPECT_EQ(a.value(in.w), b.value(in.w));
            EXPECT_EQ(a.surrogate_value(in.w), b.surrogate_value(in.w));
            EXPECT_EQ(a.grad(in.w), b.grad(in.w));
        }
    }
}

TEST(PenaltyReduction, SingletonGroupsWithUnitWeightsAreL1SP) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Instance in = random_instance(seed);
        GroupStructure singletons;
        for (std::size_t j = 0; j < in.reference.size(); ++j) {
            singletons.groups.push_back({j});
            singletons.weights.push_back(1.0);
            singletons.provenance.push_back({0, j});
        }
        in.groups = singletons;
        const Penalty gl(config_for(in, PenaltyKind::GLSP, 0.6, 0.1), in.layout);
        const Penalty l1(config_for(in, PenaltyKind::L1SP, 0.6, 0.1), in.layout);
        EXPECT_EQ(gl.value(in.w), l1.value(in.w));
        EXPECT_EQ(gl.surrogate_value(in.w), l1.surrogate_value(in.w));
        EXPECT_EQ(gl.grad(in.w), l1.grad(in.w));
        std::vector<double> a = in.w, b = in.w;
        gl.prox_inplace(a, 0.3);
        l1.prox_inplace(b, 0.3);
        // d * (t / |d|) and sign(d) * t agree up to rounding only
        for (std::size_t j = 0; j < a.size(); ++j) EXPECT_NEAR(a[j], b[j], 1e-14);
    }
}

// Minimizes a convex scalar function on [lo, hi] by ternary search.
double argmin_1d(const std::function<double(double)>& f, double lo, double hi) {
    for (int it = 0; it < 200; ++it) {
        const double m1 = lo + (hi - lo) / 3.0, m2 = hi - (hi - lo) / 3.0;
        if (f(m1) < f(m2)) hi = m2; else lo = m1;
    }
    return 0.5 * (lo + hi);
}

TEST(Prox, L1SPMatchesBruteForceArgmin) {
    PenaltyConfig cfg{PenaltyKind::L1SP, 1.0, 0.0, {0.0, 0.0}, {}, {}, 1e-6};
    const ParamVector out = prox_step(cfg, with_values(flat_layout(2, 0), {2.0, -0.5}), 1.0);
    EXPECT_NEAR(out.values[0], 1.0, 1e-12);
    EXPECT_NEAR(out.values[1], 0.0, 1e-12);
    for (std::size_t j = 0; j < 2; ++j) {
        const double w = j == 0 ? 2.0 : -0.5;
        const auto objective = [w](double u) { return 0.5 * (u - w) * (u - w) + std::abs(u); };
        // Dense grid first, then refinement around the best grid point.
        double best = -5.0;
        for (double u = -5.0; u <= 5.0; u += 1e-3)
            if (objective(u) < objective(best)) best = u;
        EXPECT_NEAR(out.values[j], argmin_1d(objective, best - 1e-3, best + 1e-3), 1e-6);
    }
}

TEST(Prox, GLSPScalesDisplacementByHalf) {
    GroupStructure gs{{{0, 1}}, {1.0}, {{}}};
    PenaltyConfig cfg{PenaltyKind::GLSP, 1.0, 0.0, {1.0, 1.0}, {}, gs, 1e-6};
    // displacement (1.2, 1.6) has norm 2 and eta*alpha*s_g = 1
    const ParamVector out = prox_step(cfg, with_values(flat_layout(2, 0), {2.2, 2.6}), 1.0);
    const auto objective = [](double t) {
        const double dx = 1.2 * t - 1.2, dy = 1.6 * t - 1.6;
        return 0.5 * (dx * dx + dy * dy) + 2.0 * t;
    };
    const double t = argmin_1d(objective, 0.0, 1.0);
    EXPECT_NEAR(t, 0.5, 1e-6);
    EXPECT_NEAR(out.values[0], 1.0 + 0.5 * 1.2, 1e-12);
    EXPECT_NEAR(out.values[1], 1.0 + 0.5 * 1.6, 1e-12);
}

TEST(Prox, GLSPAtReferenceStaysAtReference) {
    GroupStructure gs{{{0, 1}}, {1.0}, {{}}};
    PenaltyConfig cfg{PenaltyKind::GLSP, 1.0, 0.0, {0.5, -0.5}, {}, gs, 1e-6};
    const ParamVector out = prox_step(cfg, with_values(flat_layout(2, 0), {0.5, -0.5}), 1.0);
    EXPECT_EQ(out.values, (std::vector<double>{0.5, -0.5}));
}

TEST(Prox, ZeroAlphaIsIdentityAndFreshUntouched) {
    for (PenaltyKind kind : {PenaltyKind::L1SP, PenaltyKind::GLSP}) {
        const Instance in = random_instance(3);
        const ParamVector w = with_values(in.layout, in.w);
        EXPECT_EQ(prox_step(config_for(in, kind, 0.0, 0.5), w, 0.7).values, in.w);
        EXPECT_THROW((void)prox_step(config_for(in, kind, 0.5, 0.5), w, 0.0), std::invalid_argument);
        const ParamVector moved = prox_step(config_for(in, kind, 0.5, 0.5), w, 0.7);
        for (std::size_t j = 40; j < 50; ++j) EXPECT_EQ(moved.values[j], in.w[j]);
    }
}

TEST(Prox, UnsupportedKindsThrow) {
    const Instance in = random_instance(1);
    for (PenaltyKind kind : {PenaltyKind::L2, PenaltyKind::L2SP, PenaltyKind::L2SPFisher, PenaltyKind::GLSPFisher}) {
        EXPECT_THROW((void)prox_step(config_for(in, kind, 0.5, 0.5), with_values(in.layout, in.w), 0.1),
                     std::invalid_argument);
    }
}

double prox_objective(const Penalty& pen, const std::vector<double>& u, const std::vector<double>& w, double eta,
                      std::size_t n_shared) {
    double q = 0.0;
    for (std::size_t j = 0; j < n_shared; ++j) q += (u[j] - w[j]) * (u[j] - w[j]);
    std::vector<double> shared_only = u;
    std::fill(shared_only.begin() + static_cast<std::ptrdiff_t>(n_shared), shared_only.end(), 0.0);
    return q / (2.0 * eta) + pen.value(shared_only);
}

TEST(Prox, BeatsPerturbationGridOnRandomInstances) {
    for (PenaltyKind kind : {PenaltyKind::L1SP, PenaltyKind::GLSP}) {
        for (std::uint64_t seed = 0; seed < 30; ++seed) {
            const Instance in = random_instance(seed, 6, 0);
            const Penalty pen(config_for(in, kind, 0.9, 0.0), in.layout);
            std::vector<double> u = in.w;
            pen.prox_inplace(u, 0.8);
            const double best = prox_objective(pen, u, in.w, 0.8, 6);
            for (std::size_t j = 0; j < 6; ++j) {
                for (double delta = -0.5; delta <= 0.5; delta += 1.0 / 64.0) {
                    std::vector<double> c = u;
                    c[j] += delta;
                    EXPECT_GE(prox_objective(pen, c, in.w, 0.8, 6), best - 1e-6);
                }
            }
        }
    }
}

TEST(Groups, ConvLayerGivesOneGroupPerChannel) {
    const Network net({3, 8, 8}, {Conv2D{16, 3, 3, 1, 1}, ReLU{}, GlobalAvgPool{}, SoftmaxHead{2}});
    const GroupStructure gs = build_channel_groups(net);
    ASSERT_EQ(gs.count(), 16u);
    for (std::size_t g = 0; g < 16; ++g) {
        EXPECT_EQ(gs.sizes()[g], 28u);
        EXPECT_DOUBLE_EQ(gs.weights[g], std::sqrt(28.0));
        EXPECT_EQ(gs.provenance[g].layer, 0u);
        EXPECT_EQ(gs.provenance[g].unit, g);
    }
}

TEST(Groups, FullyConnectedLayerGivesOneGroupPerUnit) {
    const Network net({10, 1, 1}, {FullyConnected{5}, SoftmaxHead{2}});
    const GroupStructure gs = build_channel_groups(net);
    ASSERT_EQ(gs.count(), 5u);
    for (std::size_t s : gs.sizes()) EXPECT_EQ(s, 11u);
}

TEST(Groups, PartitionCoversSharedPartExactly) {
    const Network net = make_desknet({1, 14, 14}, 5);
    const GroupStructure gs = build_channel_groups(net);
    EXPECT_EQ(gs.count(), 16u + 32u);
    std::set<std::size_t> seen;
    std::size_t total = 0;
    for (const auto& g : gs.groups) {
        seen.insert(g.begin(), g.end());
        total += g.size();
    }
    const std::vector<std::size_t> shared = net.params().shared_indices();
    EXPECT_EQ(total, shared.size());
    EXPECT_EQ(std::vector<std::size_t>(seen.begin(), seen.end()), shared);
}

TEST(Groups, EmptySharedPartThrows) {
    const Network net({4, 1, 1}, {SoftmaxHead{3}});
    EXPECT_THROW((void)build_channel_groups(net), std::invalid_argument);
}

TEST(PenaltyKindNames, RoundTrip) {
    for (PenaltyKind k : kAllKinds) EXPECT_EQ(parse_penalty_kind(to_string(k)), k);
    EXPECT_THROW((void)parse_penalty_kind("L3"), std::invalid_argument);
}

}  // namespace
}  // namespace spft
