#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "dense_oracle.hpp"
#include "qcflaw/error.hpp"
#include "qcflaw/model.hpp"
#include "qcflaw/propagate.hpp"

using namespace qcflaw;

namespace {

StateVector random_state(std::size_t dim, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    StateVector v(static_cast<Eigen::Index>(dim));
    for (auto& a : v) a = Complex(g(rng), g(rng));
    return v.normalized();
}

FlawRealization small_realization(double jx = 0.5, double lambda = 0.05) {
    BathParams p;
    p.n_bath = 2;
    p.jx = jx;
    p.lambda = lambda;
    return sample_flaws(21, p);
}

}  // namespace

TEST(Propagate, ZeroHamiltonianLeavesStateUnchanged) {
    std::mt19937_64 rng(1);
    const StateVector psi = random_state(8, rng);
    OperatorSum zero;
    zero.add(PauliString::single(Pauli::Z, 3, 0.0));
    const StateVector out = evolve_segment(psi, zero, 7.3, IntegratorConfig{});
    EXPECT_LT((out - psi).norm(), 1e-14);
}

TEST(Propagate, ZFieldPhase) {
    const OperatorSum h{PauliString::single(Pauli::Z, 1, -0.5)};
    StateVector zero = StateVector::Zero(2);
    zero(0) = 1;
    const double t = 3.7;
    const StateVector out = evolve_segment(zero, h, t, IntegratorConfig{});
    EXPECT_NEAR(std::abs(out(0)), 1.0, 1e-10);
    EXPECT_LT(std::abs(out(0) - std::exp(Complex(0, t / 2))), 1e-9);
}

TEST(Propagate, TransverseFieldClosedForm) {
    // exp(i t (X + Z) / 2) = cos(t / sqrt2) + i sin(t / sqrt2) (X + Z) / sqrt2.
    const OperatorSum h{PauliString::single(Pauli::X, 1, -0.5), PauliString::single(Pauli::Z, 1, -0.5)};
    const double t = std::numbers::pi;
    std::mt19937_64 rng(2);
    const StateVector psi = random_state(2, rng);
    const double c = std::cos(t / std::sqrt(2.0)), s = std::sin(t / std::sqrt(2.0));
    const oracle::Mat n = (oracle::pauli('X') + oracle::pauli('Z')) / std::sqrt(2.0);
    const oracle::Mat u = c * oracle::Mat::Identity(2, 2) + Complex(0, s) * n;
    EXPECT_LT((evolve_segment(psi, h, t, IntegratorConfig{}) - u * psi).norm(), 1e-9);
}

TEST(Propagate, TimeReversal) {
    const auto fr = small_realization(1.0, 0.3);
    const OperatorSum h = build_bath_hamiltonian(fr) + build_coupling(CouplingKind::XX, fr).interaction +
                          OperatorSum{PauliString::single(Pauli::Z, 2, 0.7)};
    std::mt19937_64 rng(3);
    const StateVector psi = random_state(16, rng);
    const StateVector fwd = evolve_segment(psi, h, 12.0, IntegratorConfig{});
    const StateVector back = evolve_segment(fwd, h.scaled(-1.0), 12.0, IntegratorConfig{});
    EXPECT_GT(std::norm(psi.dot(back)), 1 - 1e-7);
}

TEST(Propagate, SamplesComeFromContinuousExtension) {
    const auto fr = small_realization(1.0, 0.3);
    const OperatorSum h = build_bath_hamiltonian(fr) + build_coupling(CouplingKind::ZZ, fr).interaction;
    const oracle::Mat dense = CompiledOperator(h, 4).to_dense();
    std::mt19937_64 rng(4);
    StateBlock psi(16, 2);
    psi.col(0) = random_state(16, rng);
    psi.col(1) = random_state(16, rng);
    std::vector<double> times;
    for (int k = 0; k <= 50; ++k) times.push_back(0.2 * k);
    std::size_t seen = 0;
    double worst = 0.0;
    evolve_segment(psi, CompiledOperator(h, 4), 10.0, IntegratorConfig{}, times,
                   [&](double t, const StateBlock& b) {
                       const oracle::Mat expect = oracle::expm_hermitian(dense, t) * oracle::Mat(psi);
                       worst = std::max(worst, (oracle::Mat(b) - expect).norm());
                       ++seen;
                   });
    EXPECT_EQ(seen, times.size());
    EXPECT_LT(worst, 1e-9);
}

TEST(Propagate, PerColumnShiftsOnlyChangePhases) {
    const auto fr = small_realization(1.0, 0.3);
    const OperatorSum h = build_bath_hamiltonian(fr) + build_coupling(CouplingKind::XX, fr).interaction;
    std::mt19937_64 rng(5);
    StateBlock psi(16, 2);
    psi.col(0) = random_state(16, rng);
    psi.col(1) = random_state(16, rng);
    IntegratorConfig plain;
    IntegratorConfig shifted;
    shifted.column_shifts = {-1.3, 0.8};
    const double t = 6.0;
    const StateBlock a = evolve_segment(psi, CompiledOperator(h, 4), t, plain);
    const StateBlock b = evolve_segment(psi, CompiledOperator(h, 4), t, shifted);
    for (int k = 0; k < 2; ++k) {
        const Complex phase = std::exp(Complex(0, shifted.column_shifts[static_cast<std::size_t>(k)] * t));
        EXPECT_LT((StateVector(a.col(k)) * phase - StateVector(b.col(k))).norm(), 1e-9);
    }
}

TEST(Propagate, BadInputsAreRejected) {
    const OperatorSum h{PauliString::single(Pauli::Z, 1)};
    StateVector psi = StateVector::Zero(2);
    psi(0) = 1;
    EXPECT_THROW(evolve_segment(psi, h, 0.0, IntegratorConfig{}), ConfigError);
    IntegratorConfig bad;
    bad.rtol = 0.0;
    EXPECT_THROW(evolve_segment(psi, h, 1.0, bad), ConfigError);
}

TEST(Propagate, IdealPropagatorIsUnitaryAndStartsAtIdentity) {
    const PulseSchedule sched = build_pulse_schedule(ControlParams{});
    const IdealPropagator ideal(sched);
    EXPECT_LT((ideal.at(0.0) - oracle::Mat::Identity(4, 4)).norm(), 1e-14);
    for (double t : {0.3, 5.0, 11.1, 20.0, ideal.total_time()}) {
        const auto u = ideal.at(t);
        EXPECT_LT((u * u.adjoint() - oracle::Mat::Identity(4, 4)).norm(), 1e-10);
    }
    EXPECT_THROW(ideal.at(ideal.total_time() + 1.0), DomainError);
}

TEST(Propagate, IdealPropagatorMatchesDenseOracle) {
    const ControlParams cp;
    const PulseSchedule sched = build_pulse_schedule(cp);
    const auto pulses = oracle::cnot_pulses(cp, 2);
    const oracle::Mat zero = oracle::Mat::Zero(4, 4);
    for (double t : {1.0, 7.5, 16.0, sched.total_time()})
        EXPECT_LT((ideal_propagator(sched, t) - oracle::schedule_propagator(pulses, zero, t)).norm(), 1e-10);
}

TEST(Propagate, SequenceRealizesCnotUpToGlobalPhase) {
    const PulseSchedule sched = build_pulse_schedule(ControlParams{});
    const auto u = ideal_propagator(sched, sched.total_time());
    EXPECT_NEAR(std::abs((oracle::cnot().adjoint() * u).trace()) / 4.0, 1.0, 1e-8);
}

TEST(Propagate, SmallBathScheduleMatchesDenseOracle) {
    const auto fr = small_realization(1.0, 0.3);
    const ControlParams cp;
    const PulseSchedule sched = build_pulse_schedule(cp);
    for (CouplingKind kind : {CouplingKind::XX, CouplingKind::ZZ}) {
        const OperatorSum stat = build_bath_hamiltonian(fr) + build_coupling(kind, fr).interaction;
        std::mt19937_64 rng(6);
        StateBlock psi(16, 1);
        psi.col(0) = random_state(16, rng);
        const Trajectory tr = evolve_schedule(psi, sched, stat, 4, IntegratorConfig{}, {});
        const oracle::Mat st = oracle::bath_hamiltonian(fr, 4, 3) + oracle::coupling(fr, kind, 4);
        const StateVector expect = oracle::schedule_propagator(oracle::cnot_pulses(cp, 4), st, sched.total_time()) *
                                   StateVector(psi.col(0));
        EXPECT_GT(std::norm(expect.dot(StateVector(tr.final_state.col(0)))), 1 - 1e-8);
        EXPECT_LT(tr.max_norm_drift(), 1e-8);
    }
}

TEST(Propagate, SampleGridContainsSwitchingTimes) {
    const PulseSchedule sched = build_pulse_schedule(ControlParams{});
    const auto grid = sample_grid(sched, 600);
    for (double tau : sched.switching_times())
        EXPECT_TRUE(std::any_of(grid.begin(), grid.end(), [&](double t) { return std::abs(t - tau) < 1e-12; }));
    EXPECT_TRUE(std::is_sorted(grid.begin(), grid.end()));
    EXPECT_DOUBLE_EQ(grid.front(), 0.0);
    EXPECT_DOUBLE_EQ(grid.back(), sched.total_time());
}

TEST(Propagate, Deterministic) {
    const auto fr = small_realization();
    const PulseSchedule sched = build_pulse_schedule(ControlParams{});
    const OperatorSum stat = build_bath_hamiltonian(fr) + build_coupling(CouplingKind::XX, fr).interaction;
    std::mt19937_64 rng(8);
    StateBlock psi(16, 3);
    for (int k = 0; k < 3; ++k) psi.col(k) = random_state(16, rng);
    const auto a = evolve_schedule(psi, sched, stat, 4, IntegratorConfig{}, {});
    const auto b = evolve_schedule(psi, sched, stat, 4, IntegratorConfig{}, {});
    EXPECT_TRUE((a.final_state.array() == b.final_state.array()).all());
}

TEST(Propagate, EchoWithoutPerturbationIsFlat) {
    const OperatorSum h0{PauliString::single(Pauli::Z, 1, -0.5), PauliString::single(Pauli::Z, 2, -0.5)};
    OperatorSum v;
    v.add(PauliString::single(Pauli::X, 1, 0.0).with(Pauli::X, 2));
    StateVector psi0 = StateVector::Zero(4);
    psi0(0) = 1;
    const std::vector<double> times{0.0, 1.0, 5.0, 20.0};
    for (double m : loschmidt_echo(h0, v, psi0, times, 2, 1, IntegratorConfig{})) EXPECT_NEAR(m, 1.0, 1e-9);
}

TEST(Propagate, EchoMatchesDenseOracle) {
    const OperatorSum h0{PauliString::single(Pauli::Z, 1, -0.5), PauliString::single(Pauli::Z, 2, -0.5)};
    const OperatorSum v{PauliString::single(Pauli::X, 1, 0.1).with(Pauli::X, 2)};
    StateVector psi0 = StateVector::Zero(4);
    psi0(0) = 1;  // ground state of h0
    std::vector<double> times;
    for (int k = 0; k <= 40; ++k) times.push_back(0.5 * k);
    const auto m = loschmidt_echo(h0, v, psi0, times, 2, 1, IntegratorConfig{});
    const oracle::Mat d0 = -0.5 * (oracle::op(2, 'Z', 1) + oracle::op(2, 'Z', 2));
    const oracle::Mat dv = 0.1 * oracle::op(2, 'X', 1, 'X', 2);
    EXPECT_NEAR(m[0], 1.0, 1e-12);
    for (std::size_t k = 0; k < times.size(); ++k) {
        const StateVector a = oracle::expm_hermitian(d0, times[k]) * psi0;
        const StateVector b = oracle::expm_hermitian(d0 + dv, times[k]) * psi0;
        EXPECT_NEAR(m[k], std::norm(a.dot(b)), 1e-9);
        EXPECT_LE(m[k], 1 + 1e-9);
    }
}
