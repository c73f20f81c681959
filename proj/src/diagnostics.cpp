#include "qcflaw/diagnostics.hpp"

#include <cmath>
#include <limits>

#include "qcflaw/error.hpp"

namespace qcflaw {

namespace {

constexpr double kMinVariance = 1e-14;

StateBlock apply_to_members(const OperatorSum& sigma, const ThermalEnsemble& ens, int n_bath, int first_label) {
    const CompiledOperator op(sigma, n_bath, first_label);
    if (static_cast<std::size_t>(ens.states.rows()) != op.dim()) throw ShapeError("ensemble does not match bath size");
    StateBlock in = ens.states;
    StateBlock out;
    op.apply(in, out);
    return out;
}

}  // namespace

double purity(const DensityMatrix& rho) {
    if (rho.rows() != rho.cols()) throw ShapeError("density matrix must be square");
    return (rho * rho).trace().real();
}

double fidelity(const DensityMatrix& rho, const DensityMatrix& ideal) {
    if (rho.rows() != ideal.rows() || rho.cols() != ideal.cols()) throw ShapeError("density matrices differ in shape");
    return (rho * ideal).trace().real();
}

double canonical_average(const OperatorSum& sigma, const ThermalEnsemble& ens, int n_bath, int first_label) {
    const StateBlock applied = apply_to_members(sigma, ens, n_bath, first_label);
    double avg = 0.0;
    for (std::size_t n = 0; n < ens.size(); ++n) {
        const auto col = static_cast<Eigen::Index>(n);
        avg += ens.weights[n] * ens.states.col(col).dot(applied.col(col)).real();
    }
    return avg;
}

CanonicalVariance canonical_variance(const OperatorSum& sigma, const ThermalEnsemble& ens, int n_bath,
                                     int first_label) {
    const StateBlock applied = apply_to_members(sigma, ens, n_bath, first_label);
    double avg = 0.0;
    double second = 0.0;
    for (std::size_t n = 0; n < ens.size(); ++n) {
        const auto col = static_cast<Eigen::Index>(n);
        avg += ens.weights[n] * ens.states.col(col).dot(applied.col(col)).real();
        second += ens.weights[n] * applied.col(col).squaredNorm();
    }
    CanonicalVariance v;
    v.raw = second - avg * avg;
    v.clamped = v.raw < 0.0;
    v.value = v.clamped ? 0.0 : v.raw;
    return v;
}

std::vector<double> memory_proxy(const OperatorSum& sigma, const EigenSolution& es, const ThermalEnsemble& ens,
                                 std::span<const double> times, int n_bath, int first_label) {
    if (ens.size() > es.size()) throw ShapeError("ensemble larger than eigen solution");
    for (std::size_t n = 0; n < ens.size(); ++n)
        if (ens.energies[n] != es.energies(static_cast<Eigen::Index>(n)))
            throw ContractError("ensemble was not built from this eigen solution");

    const double avg = canonical_average(sigma, ens, n_bath, first_label);
    const StateBlock applied = apply_to_members(sigma, ens, n_bath, first_label);
    // elements(m, n) = <m|Sigma|n> for every eigenstate m and member n.
    Eigen::MatrixXcd elements = es.states.adjoint() * Eigen::MatrixXcd(applied);
    for (std::size_t n = 0; n < ens.size(); ++n) {
        const auto i = static_cast<Eigen::Index>(n);
        elements(i, i) -= avg;
    }

    struct Term {
        double amplitude;
        double frequency;
    };
    std::vector<Term> terms;
    terms.reserve(static_cast<std::size_t>(elements.size()));
    for (Eigen::Index n = 0; n < elements.cols(); ++n)
        for (Eigen::Index m = 0; m < elements.rows(); ++m)
            terms.push_back({ens.weights[static_cast<std::size_t>(n)] * std::norm(elements(m, n)),
                             es.energies(n) - es.energies(m)});

    auto correlation = [&](double t) {
        double acc = 0.0;
        for (const auto& term : terms) acc += term.amplitude * std::cos(term.frequency * t);
        return acc;
    };
    const double c0 = correlation(0.0);
    if (!(c0 >= kMinVariance))
        throw NormalizationError("memory function undefined: canonical variance " + std::to_string(c0));
    std::vector<double> w;
    w.reserve(times.size());
    for (double t : times) w.push_back(correlation(t) / c0);
    return w;
}

OperatorSum coherent_shift_hamiltonian(const OperatorSum& system_operator, double average) {
    if (average == 0.0) return {};
    return system_operator.scaled(average);
}

double operator_norm(const OperatorSum& op, int n_qubits, int first_label) {
    if (op.empty()) return 0.0;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(CompiledOperator(op, n_qubits, first_label).to_dense(),
                                                           Eigen::EigenvaluesOnly);
    return solver.eigenvalues().cwiseAbs().maxCoeff();
}

double first_crossing_below(std::span<const double> times, std::span<const double> values, double level) {
    if (times.size() != values.size()) throw ShapeError("times and values differ in length");
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (values[i] > level) continue;
        if (i == 0) return times[0];
        const double f = (values[i - 1] - level) / (values[i - 1] - values[i]);
        return times[i - 1] + f * (times[i] - times[i - 1]);
    }
    return std::numeric_limits<double>::infinity();
}

}  // namespace qcflaw
