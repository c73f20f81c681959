#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qcflaw/hilbert.hpp"
#include "qcflaw/model.hpp"
#include "qcflaw/spectral.hpp"

namespace qcflaw {

struct GateMetrics {
    std::vector<double> times;
    std::vector<double> purity;
    std::vector<double> fidelity;

    int state_id = 0;
    CouplingKind kind = CouplingKind::XX;
    double jx = 0.0;
    std::uint64_t seed = 0;
};

struct CanonicalVariance {
    double value = 0.0;      // clamped to >= 0
    double raw = 0.0;        // <Sigma^2> - <Sigma>^2 as computed
    bool clamped = false;    // raw was negative (roundoff)
};

struct BathStatistics {
    double average = 0.0;
    CanonicalVariance variance;
    std::vector<double> times;
    std::vector<double> memory;      // W(t)
    double shift_magnitude = 0.0;    // |average| * ||S||
};

// Tr(rho^2).
double purity(const DensityMatrix& rho);
// Tr(rho rho_ideal).
double fidelity(const DensityMatrix& rho, const DensityMatrix& ideal);

// sum_n w_n <phi_n|Sigma|phi_n> for a bath operator on labels
// first_label .. first_label + n_bath - 1.
double canonical_average(const OperatorSum& sigma, const ThermalEnsemble& ens, int n_bath, int first_label = 3);
CanonicalVariance canonical_variance(const OperatorSum& sigma, const ThermalEnsemble& ens, int n_bath,
                                     int first_label = 3);

// Variance-normalized canonical autocorrelation of dSigma = Sigma - <Sigma>:
//   W(t) = Re Tr[dSigma(t) dSigma(0) rho_B] / Tr[dSigma^2 rho_B]
// evaluated in the eigenbasis `es` as
//   sum_{n <= n_cut} w_n sum_m |<m|dSigma|n>|^2 cos((E_n - E_m) t)
// divided by its t = 0 value. The ensemble must be built from `es`.
std::vector<double> memory_proxy(const OperatorSum& sigma, const EigenSolution& es, const ThermalEnsemble& ens,
                                 std::span<const double> times, int n_bath, int first_label = 3);

// S * average, the static shift a nonzero bath average adds to the register
// Hamiltonian. Analysis output only.
OperatorSum coherent_shift_hamiltonian(const OperatorSum& system_operator, double average);

// Largest |eigenvalue| of an operator on `n_qubits` qubits (dense).
double operator_norm(const OperatorSum& op, int n_qubits, int first_label = 1);

// Linear-interpolated time at which `values` first drops to `level` or below;
// +infinity when it never does.
double first_crossing_below(std::span<const double> times, std::span<const double> values, double level);

}  // namespace qcflaw
