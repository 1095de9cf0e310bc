#include "kbc/dynamics.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace kbc;

namespace {

const MotherKernel& mother()
{
    static const MotherKernel m = build_mother_kernel();
    return m;
}

struct Setup {
    ScalingParameters sc;
    KacKernel k;
    ModelParams p;
};

Setup phi4_setup(double gamma)
{
    Setup s;
    s.sc = derive_scaling(RegimeKind::Phi4, gamma);
    s.k = build_kac_kernel(gamma, s.sc.torus(), mother());
    double c = renormalization_constant(s.k, RegimeKind::Phi4, 1.5).c_gamma;
    s.p = tune_phi4(gamma, 1.0, 0.0, c);
    return s;
}

ModelParams flat_params(double theta, double theta_c)
{
    ModelParams p;
    p.beta = 0.0;
    p.theta = theta;
    p.a = std::exp(theta);
    p.theta_c = theta_c;
    p.a_c = std::exp(theta_c);
    p.beta_c = critical_beta(p.a_c);
    return p;
}

} // namespace

TEST(Dynamics, IncrementalFieldMatchesFft)
{
    auto s = phi4_setup(0.1);
    SimulatorOptions o;
    o.refresh_interval = 0;
    Simulator sim(s.k, s.p, s.sc, 1, 0, o);
    for (int i = 0; i < 100000; ++i) sim.step_event();
    RArray fresh = convolve_spins(sim.state().spins, s.k);
    double d = 0.0, hmax = 0.0;
    for (std::size_t i = 0; i < fresh.size(); ++i) {
        d = std::max(d, std::abs(fresh[i] - sim.state().local_field[i]));
        hmax = std::max(hmax, std::abs(sim.state().local_field[i]));
    }
    EXPECT_LE(d, 1e-8);
    EXPECT_LE(hmax, 1.0 + 1e-12);
    EXPECT_GT(sim.real_changes(), 10000u);
}

TEST(Dynamics, StationaryMarginalAtZeroField)
{
    auto sc = derive_scaling(RegimeKind::Phi4, 0.3);
    auto k = build_kac_kernel(0.3, sc.torus(), mother());
    auto p = flat_params(std::log(0.25), std::log(0.25));
    Simulator sim(k, p, sc, 2, 0);
    const int S = 1000000;
    int cnt[3] = {0, 0, 0};
    for (int i = 0; i < S; ++i) cnt[sim.step_event().new_spin + 1]++;
    const double target[3] = {1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0};
    for (int j = 0; j < 3; ++j) {
        double f = static_cast<double>(cnt[j]) / S;
        EXPECT_LE(std::abs(f - target[j]), 3.0 * std::sqrt(target[j] * (1.0 - target[j]) / S)) << j;
    }
}

TEST(Dynamics, ZeroTimeAndPoissonEventCount)
{
    auto sc = derive_scaling(RegimeKind::Phi4, 0.3);
    auto k = build_kac_kernel(0.3, sc.torus(), mother());
    auto p = flat_params(0.0, 0.0);
    Simulator sim(k, p, sc, 3, 0);
    auto before = sim.snapshot();
    auto r0 = sim.run_to_macro_time(0.0);
    EXPECT_EQ(r0.events, 0u);
    auto after = sim.snapshot();
    EXPECT_EQ(before.fourier, after.fourier);
    const double T = 0.9;
    auto r = sim.run_to_macro_time(T);
    double expect = static_cast<double>(sc.torus().size()) * T / sc.alpha;
    EXPECT_LE(std::abs(static_cast<double>(r.events) - expect), 3.0 * std::sqrt(expect));
    EXPECT_NEAR(r.reached_macro_time, T, 1e-12);
    EXPECT_THROW(sim.run_to_macro_time(-1.0), std::invalid_argument);
}

TEST(Dynamics, SymmetricProductMeasureAtBetaZero)
{
    auto sc = derive_scaling(RegimeKind::Phi4, 0.2);
    auto k = build_kac_kernel(0.2, sc.torus(), mother());
    auto p = flat_params(0.0, 0.0);
    SimulatorOptions o;
    o.init.kind = InitKind::iid_probabilities;
    o.init.probabilities = {0.0, 0.0, 1.0};
    Simulator sim(k, p, sc, 4, 0, o);
    sim.run_to_macro_time(20.0 * sc.alpha);
    double mean = 0.0;
    for (auto s : sim.state().spins) mean += s;
    const double n = static_cast<double>(sim.state().spins.size());
    mean /= n;
    // All-plus start decays as e^{-t}; at t = 20 the bias is 2e-9.
    EXPECT_LE(std::abs(mean), 3.0 / std::sqrt(n));
}

TEST(Coupling, MixtureIdentity)
{
    Rng rng(5, 0);
    for (int i = 0; i < 10000; ++i) {
        auto P = jump_rates(2.0 * rng.uniform() - 1.0, 5.0 * rng.uniform(), 4.0 * rng.uniform() - 2.0);
        auto ref = reference_rates(4.0 * rng.uniform() - 2.0);
        auto c = coupling_split(P, ref);
        ASSERT_GE(c.q, 0.0);
        ASSERT_LE(c.q, 1.0);
        const double pr[3] = {ref.p_minus, ref.p_zero, ref.p_plus};
        const double pp[3] = {P.p_minus, P.p_zero, P.p_plus};
        for (int j = 0; j < 3; ++j) EXPECT_NEAR(c.q * pr[j] + (1.0 - c.q) * c.residual[j], pp[j], 1e-14);
    }
    auto same = coupling_split(reference_rates(0.3), reference_rates(0.3));
    EXPECT_EQ(same.q, 1.0);
}

TEST(Coupling, IdenticalLawsAlwaysAgree)
{
    auto sc = derive_scaling(RegimeKind::Phi4, 0.3);
    auto k = build_kac_kernel(0.3, sc.torus(), mother());
    auto p = flat_params(std::log(0.25), std::log(0.25));
    SimulatorOptions o;
    o.coupled = true;
    Simulator sim(k, p, sc, 6, 0, o);
    EXPECT_GT(sim.coupling().initial_mismatch, 0u);
    sim.run_to_macro_time(40.0 * sc.alpha);
    EXPECT_EQ(sim.coupling().coin_failures, 0u);
    EXPECT_EQ(sim.state().spins, sim.sigma_tilde());
}

TEST(Coupling, MismatchSmallNearTricriticalPoint)
{
    auto sc = derive_scaling(RegimeKind::Phi6, 0.3);
    auto k = build_kac_kernel(0.3, sc.torus(), mother());
    auto p = tune_phi6(0.3, 0.0, 0.0, 0.0);
    SimulatorOptions o;
    o.coupled = true;
    Simulator sim(k, p, sc, 7, 0, o);
    sim.run_to_macro_time(2.0 * sc.alpha);
    const auto& c = sim.coupling();
    EXPECT_GT(c.rings, 0u);
    EXPECT_LE(c.mismatch_count, c.coin_failures);
    EXPECT_GT(c.q_sum / static_cast<double>(c.rings), 0.5);
}

TEST(Dynamics, DeterministicAndCheckpointResume)
{
    auto s = phi4_setup(0.2);
    TrackerConfig tc;
    tc.probes = {{0, 0}, {7, -3}};
    auto make = [&] {
        SimulatorOptions o;
        o.coupled = true;
        Simulator sim(s.k, s.p, s.sc, 8, 3, o);
        sim.attach_tracker(tc);
        return sim;
    };
    Simulator a = make();
    a.run_to_macro_time(0.05);
    auto cp = a.checkpoint();
    a.run_to_macro_time(0.1);

    Simulator b = make();
    b.restore(cp);
    b.run_to_macro_time(0.1);
    EXPECT_EQ(a.state().spins, b.state().spins);
    EXPECT_EQ(a.state().local_field, b.state().local_field);
    EXPECT_EQ(a.state().event_count, b.state().event_count);
    EXPECT_EQ(a.tracker().Zhat(), b.tracker().Zhat());
    EXPECT_EQ(a.integral_A_tilde(), b.integral_A_tilde());
    ASSERT_EQ(a.tracker().probes().size(), 2u);
    for (std::size_t i = 0; i < 2; ++i) {
        EXPECT_EQ(a.tracker().probes()[i].R.y[3], b.tracker().probes()[i].R.y[3]);
        EXPECT_EQ(a.tracker().probes()[i].angle_R, b.tracker().probes()[i].angle_R);
    }

    Simulator c = make();
    c.run_to_macro_time(0.1);
    EXPECT_EQ(a.state().spins, c.state().spins);
    EXPECT_EQ(a.tracker().Zhat(), c.tracker().Zhat());
}

TEST(Tracker, ResidualIdentityAndMonotoneBrackets)
{
    auto s = phi4_setup(0.2);
    Simulator sim(s.k, s.p, s.sc, 9, 0);
    TrackerConfig tc;
    tc.probes = {{0, 0}, {3, 5}, {-10, 2}};
    sim.attach_tracker(tc);
    std::vector<double> last(3, 0.0), last_sq(3, 0.0);
    for (int i = 1; i <= 10; ++i) {
        sim.run_to_macro_time(0.01 * i);
        EXPECT_LE(sim.tracker().residual_identity(), 1e-10);
        for (std::size_t j = 0; j < 3; ++j) {
            const auto& p = sim.tracker().probes()[j];
            EXPECT_GE(p.angle_M, last[j]);
            EXPECT_GE(p.R.square_bracket, last_sq[j]);
            last[j] = p.angle_M;
            last_sq[j] = p.R.square_bracket;
        }
    }
    EXPECT_GT(last[0], 0.0);
}

TEST(Dynamics, StopSwitchFreezesRates)
{
    auto s = phi4_setup(0.2);
    SimulatorOptions o;
    o.stop_switch.enabled = true;
    o.stop_switch.mfrak = 1e-6;
    Simulator sim(s.k, s.p, s.sc, 10, 0, o);
    sim.run_to_macro_time(0.05);
    ASSERT_TRUE(sim.switched());
    auto ref = reference_rates(s.p.theta_c);
    for (std::size_t j : {0ul, 17ul, 300ul}) {
        auto r = sim.rates_at(j);
        EXPECT_EQ(r.p_minus, ref.p_minus);
        EXPECT_EQ(r.p_zero, ref.p_zero);
        EXPECT_EQ(r.p_plus, ref.p_plus);
    }
    EXPECT_LE(*sim.stop_switch().triggered_at, 0.05);
}

TEST(Dynamics, InitialConditions)
{
    auto s = phi4_setup(0.2);
    SimulatorOptions o;
    o.init.kind = InitKind::all_zero;
    Simulator z(s.k, s.p, s.sc, 11, 0, o);
    for (auto v : z.state().spins) EXPECT_EQ(v, 0);
    o.init.kind = InitKind::profile;
    o.init.profile = [](double, double) { return 2.0; };
    Simulator pr(s.k, s.p, s.sc, 11, 0, o);
    double mean = 0.0;
    for (auto v : pr.state().spins) mean += v;
    mean /= static_cast<double>(pr.state().spins.size());
    EXPECT_NEAR(mean, 2.0 * s.sc.delta, 5.0 * std::sqrt(1.0 / pr.state().spins.size()));
    o.init.kind = InitKind::iid_probabilities;
    o.init.probabilities = {-1.0, 1.0, 1.0};
    EXPECT_THROW(Simulator(s.k, s.p, s.sc, 11, 0, o), std::invalid_argument);
    EXPECT_THROW(init_kind_from_string("bogus"), std::invalid_argument);
}
