#include <random>

#include <gtest/gtest.h>

#include "dense_oracle.hpp"
#include "qcflaw/error.hpp"
#include "qcflaw/hilbert.hpp"

using namespace qcflaw;

namespace {

StateVector basis(int n, std::size_t index) {
    StateVector v = StateVector::Zero(Eigen::Index{1} << n);
    v(static_cast<Eigen::Index>(index)) = 1.0;
    return v;
}

StateVector random_state(std::size_t dim, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    StateVector v(static_cast<Eigen::Index>(dim));
    for (auto& a : v) a = Complex(g(rng), g(rng));
    return v.normalized();
}

OperatorSum random_operator(int n, int terms, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> label(1, n);
    std::uniform_int_distribution<int> pauli(0, 2);
    std::uniform_real_distribution<double> coeff(-1, 1);
    OperatorSum op;
    for (int t = 0; t < terms; ++t) {
        PauliString s = PauliString::single(static_cast<Pauli>(pauli(rng)), label(rng), coeff(rng));
        s.with(static_cast<Pauli>(pauli(rng)), label(rng));
        op.add(s);
    }
    return op;
}

oracle::Mat dense_of(const OperatorSum& op, int n) {
    oracle::Mat m = oracle::Mat::Zero(Eigen::Index{1} << n, Eigen::Index{1} << n);
    for (const auto& t : op.terms()) {
        std::vector<char> ops(static_cast<std::size_t>(n), 'I');
        for (const auto& [label, p] : t.factors) ops[static_cast<std::size_t>(label - 1)] = "XYZ"[static_cast<int>(p)];
        m += t.coefficient * oracle::chain(ops);
    }
    return m;
}

}  // namespace

TEST(Hilbert, PauliActionOnBasisStates) {
    const QubitIndexing ix{1, 0};
    const OperatorSum x1{PauliString::single(Pauli::X, 1)};
    const OperatorSum z1{PauliString::single(Pauli::Z, 1)};
    EXPECT_TRUE(apply_operator(x1, basis(1, 0), ix).isApprox(basis(1, 1)));
    EXPECT_TRUE(apply_operator(z1, basis(1, 1), ix).isApprox(-basis(1, 1)));

    const QubitIndexing ix2{2, 0};
    const OperatorSum xx{PauliString::single(Pauli::X, 1).with(Pauli::X, 2)};
    EXPECT_TRUE(apply_operator(xx, basis(2, 0), ix2).isApprox(basis(2, 3)));
}

TEST(Hilbert, LabelOneIsMostSignificant) {
    const QubitIndexing ix{3, 0};
    const OperatorSum x1{PauliString::single(Pauli::X, 1)};
    EXPECT_TRUE(apply_operator(x1, basis(3, 0), ix).isApprox(basis(3, 4)));
}

TEST(Hilbert, LabelOutOfRangeIsConfigurationError) {
    const QubitIndexing ix{2, 0};
    const OperatorSum x5{PauliString::single(Pauli::X, 5)};
    EXPECT_THROW(apply_operator(x5, basis(2, 0), ix), ConfigError);
}

TEST(Hilbert, DimensionMismatchIsShapeError) {
    const QubitIndexing ix{2, 1};
    const OperatorSum x1{PauliString::single(Pauli::X, 1)};
    EXPECT_THROW(apply_operator(x1, basis(2, 0), ix), ShapeError);
}

TEST(Hilbert, PauliInvolution) {
    std::mt19937_64 rng(3);
    const QubitIndexing ix{2, 2};
    const StateVector psi = random_state(ix.dim(), rng);
    for (Pauli p : {Pauli::X, Pauli::Y, Pauli::Z}) {
        const OperatorSum op{PauliString::single(p, 2).with(p, 4)};
        const StateVector twice = apply_operator(op, apply_operator(op, psi, ix), ix);
        EXPECT_LT((twice - psi).norm(), 1e-12);
    }
}

TEST(Hilbert, MatchesDenseOracle) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 5; ++trial) {
        const int n = 3 + trial % 3;
        const OperatorSum op = random_operator(n, 12, rng);
        const StateVector psi = random_state(std::size_t{1} << n, rng);
        const StateVector got = apply_operator(op, psi, QubitIndexing{n, 0});
        EXPECT_LT((got - dense_of(op, n) * psi).norm(), 1e-12);
        EXPECT_LT((CompiledOperator(op, n).to_dense() - dense_of(op, n)).norm(), 1e-12);
    }
}

TEST(Hilbert, HermitianWithRealCoefficients) {
    std::mt19937_64 rng(5);
    const OperatorSum op = random_operator(4, 20, rng);
    const auto m = CompiledOperator(op, 4).to_dense();
    EXPECT_LT((m - m.adjoint()).norm(), 1e-12);
    const StateVector psi = random_state(16, rng);
    EXPECT_LT(std::abs(psi.dot(m * psi).imag()), 1e-10);
}

TEST(Hilbert, Linearity) {
    std::mt19937_64 rng(7);
    const QubitIndexing ix{2, 2};
    const OperatorSum op = random_operator(4, 10, rng);
    const StateVector a = random_state(16, rng), b = random_state(16, rng);
    const Complex alpha(0.3, -1.2), beta(-0.7, 0.4);
    const StateVector lhs = apply_operator(op, alpha * a + beta * b, ix);
    const StateVector rhs = alpha * apply_operator(op, a, ix) + beta * apply_operator(op, b, ix);
    EXPECT_LT((lhs - rhs).norm(), 1e-12);
}

TEST(Hilbert, BlockApplyAndShiftedSchrodinger) {
    std::mt19937_64 rng(13);
    const int n = 5;
    const OperatorSum op = random_operator(n, 15, rng);
    const CompiledOperator c(op, n);
    const auto dense = dense_of(op, n);
    for (Eigen::Index width : {1, 2, 3, 40}) {
        StateBlock in(32, width);
        for (Eigen::Index k = 0; k < width; ++k) in.col(k) = random_state(32, rng);
        StateBlock out;
        c.apply(in, out);
        EXPECT_LT((oracle::Mat(out) - dense * oracle::Mat(in)).norm(), 1e-11);

        std::vector<double> shifts(static_cast<std::size_t>(width));
        for (auto& s : shifts) s = std::uniform_real_distribution<double>(-2, 2)(rng);
        c.apply_schrodinger(in, out, shifts);
        for (Eigen::Index k = 0; k < width; ++k) {
            const StateVector expect =
                Complex(0, -1) * (dense * in.col(k) - shifts[static_cast<std::size_t>(k)] * StateVector(in.col(k)));
            EXPECT_LT((StateVector(out.col(k)) - expect).norm(), 1e-11);
        }
    }
}

TEST(Hilbert, PartialTraceProductState) {
    const StateVector s = (basis(2, 1) + basis(2, 2)) / std::sqrt(2.0);
    std::mt19937_64 rng(1);
    const StateVector b = random_state(8, rng);
    const StateVector full = oracle::kron(s, b);
    const std::vector<double> w{1.0};
    const std::vector<StateVector> states{full};
    const DensityMatrix rho = partial_trace_bath(w, states, 2);
    EXPECT_LT((rho - s * s.adjoint()).norm(), 1e-12);
}

TEST(Hilbert, PartialTraceBellWithBath) {
    // (|0...0> + |1...1>)/sqrt(2) on 2 + 2 qubits, keep qubit 1 only.
    StateVector psi = (basis(4, 0) + basis(4, 15)) / std::sqrt(2.0);
    const std::vector<double> w{1.0};
    const std::vector<StateVector> states{psi};
    const DensityMatrix rho = partial_trace_bath(w, states, 1);
    EXPECT_LT((rho - 0.5 * DensityMatrix::Identity(2, 2)).norm(), 1e-12);
}

TEST(Hilbert, PartialTraceMatchesBruteForce) {
    std::mt19937_64 rng(17);
    for (int n_bath : {1, 2, 10}) {
        const std::size_t dim = std::size_t{1} << (2 + n_bath);
        std::vector<StateVector> states{random_state(dim, rng), random_state(dim, rng)};
        const std::vector<double> w{0.3, 0.7};
        const DensityMatrix got = partial_trace_bath(w, states, 2);
        oracle::Mat full = oracle::Mat::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
        for (std::size_t k = 0; k < 2; ++k) full += w[k] * states[k] * states[k].adjoint();
        EXPECT_LT((got - oracle::trace_out(full, 2)).norm(), 1e-10);
        EXPECT_NEAR(got.trace().real(), 1.0, 1e-10);
    }
}

TEST(Hilbert, PartialTraceRejectsBadWeights) {
    const std::vector<double> w{0.5, 0.4};
    const std::vector<StateVector> states{basis(3, 0), basis(3, 1)};
    EXPECT_THROW(partial_trace_bath(w, states, 2), NormalizationError);
}

TEST(Hilbert, RegisterTransferMatchesDirectTrace) {
    std::mt19937_64 rng(23);
    const int n_bath = 3;
    const std::size_t bd = std::size_t{1} << n_bath;
    const std::vector<double> w{0.6, 0.4};
    // Column n * 4 + r holds U (|r> x |phi_n>) for a random unitary U.
    const oracle::Mat h = dense_of(random_operator(2 + n_bath, 20, rng), 2 + n_bath);
    const oracle::Mat u = oracle::expm_hermitian(h, 0.8);
    std::vector<StateVector> phi{random_state(bd, rng), random_state(bd, rng)};
    StateBlock block(static_cast<Eigen::Index>(4 * bd), 8);
    for (int m = 0; m < 2; ++m)
        for (int r = 0; r < 4; ++r) block.col(m * 4 + r) = u * oracle::kron(basis(2, static_cast<std::size_t>(r)), phi[static_cast<std::size_t>(m)]);
    const RegisterTransfer transfer(block, w, 2);
    EXPECT_NEAR(transfer.trace_weight(), 1.0, 1e-12);
    const StateVector a = random_state(4, rng);
    std::vector<StateVector> direct;
    for (int m = 0; m < 2; ++m) direct.push_back(u * oracle::kron(a, phi[static_cast<std::size_t>(m)]));
    EXPECT_LT((transfer.reduce(a) - partial_trace_bath(w, direct, 2)).norm(), 1e-12);
}

TEST(Hilbert, Expectations) {
    const OperatorSum z{PauliString::single(Pauli::Z, 1)};
    const OperatorSum x{PauliString::single(Pauli::X, 1)};
    const StateVector zero = basis(1, 0);
    const DensityMatrix rho = zero * zero.adjoint();
    EXPECT_NEAR(expectation(z, rho, 1).value, 1.0, 1e-15);
    EXPECT_NEAR(expectation(x, rho, 1).value, 0.0, 1e-15);

    std::mt19937_64 rng(29);
    const OperatorSum op = random_operator(3, 8, rng);
    const StateVector a = random_state(8, rng), b = random_state(8, rng);
    const DensityMatrix mixed = 0.25 * a * a.adjoint() + 0.75 * b * b.adjoint();
    const double expect = (dense_of(op, 3) * mixed).trace().real();
    const Expectation e = expectation(op, mixed, 3);
    EXPECT_NEAR(e.value, expect, 1e-12);
    EXPECT_LT(e.imaginary_residual, 1e-10);
    const std::vector<double> w{0.25, 0.75};
    const std::vector<StateVector> states{a, b};
    EXPECT_NEAR(expectation(op, w, states, 3).value, expect, 1e-12);
}

TEST(Hilbert, QubitsForDimension) {
    EXPECT_EQ(qubits_for_dimension(4096), 12);
    EXPECT_THROW(qubits_for_dimension(12), ShapeError);
}
