#include "qcflaw/hilbert.hpp"

#include <bit>
#include <vector>
#include <cmath>
#include <string>

#include "qcflaw/error.hpp"

namespace qcflaw {

namespace {

constexpr double kWeightSumTolerance = 1e-9;
constexpr double kImaginaryContractLimit = 1e-8;

}  // namespace

OperatorSum& OperatorSum::operator+=(const OperatorSum& other) {
    terms_.insert(terms_.end(), other.terms_.begin(), other.terms_.end());
    return *this;
}

OperatorSum OperatorSum::scaled(double factor) const {
    OperatorSum out = *this;
    for (auto& t : out.terms_) t.coefficient *= factor;
    return out;
}

OperatorSum OperatorSum::relabeled(int offset) const {
    OperatorSum out;
    for (const auto& t : terms_) {
        PauliString s;
        s.coefficient = t.coefficient;
        for (const auto& [label, p] : t.factors) s.factors.emplace(label + offset, p);
        out.add(std::move(s));
    }
    return out;
}

std::pair<int, int> OperatorSum::label_range() const {
    int lo = 0;
    int hi = 0;
    for (const auto& t : terms_) {
        if (t.factors.empty()) continue;
        const int a = t.factors.begin()->first;
        const int b = t.factors.rbegin()->first;
        lo = (lo == 0) ? a : std::min(lo, a);
        hi = std::max(hi, b);
    }
    return {lo, hi};
}

bool OperatorSum::has_multi_qubit_terms() const {
    for (const auto& t : terms_)
        if (t.factors.size() > 1) return true;
    return false;
}

bool OperatorSum::all_coefficients_finite() const {
    for (const auto& t : terms_)
        if (!std::isfinite(t.coefficient)) return false;
    return true;
}

int qubits_for_dimension(std::size_t dim) {
    if (dim == 0 || !std::has_single_bit(dim))
        throw ShapeError("state dimension " + std::to_string(dim) + " is not a power of two");
    return std::countr_zero(dim);
}

CompiledOperator::CompiledOperator(const OperatorSum& op, int n_qubits, int first_label) : n_qubits_(n_qubits) {
    if (n_qubits < 0 || n_qubits > 30) throw ConfigError("unsupported qubit count " + std::to_string(n_qubits));
    const int last_label = first_label + n_qubits - 1;
    const std::size_t d = dim();

    struct Builder {
        double scalar = 0.0;
        std::vector<const PauliString*> table_terms;
        bool complex = false;
    };
    std::map<std::uint64_t, Builder> builders;

    auto bit_of = [&](int label) -> std::uint64_t {
        if (label < first_label || label > last_label)
            throw ConfigError("qubit label " + std::to_string(label) + " outside [" + std::to_string(first_label) +
                              ", " + std::to_string(last_label) + "]");
        return std::uint64_t{1} << (n_qubits - 1 - (label - first_label));
    };

    for (const auto& term : op.terms()) {
        if (!std::isfinite(term.coefficient)) throw ContractError("non-finite Pauli coefficient");
        std::uint64_t flip = 0;
        std::uint64_t zmask = 0;
        int n_y = 0;
        for (const auto& [label, p] : term.factors) {
            const std::uint64_t b = bit_of(label);
            if (p == Pauli::X || p == Pauli::Y) flip |= b;
            if (p == Pauli::Z || p == Pauli::Y) zmask |= b;
            if (p == Pauli::Y) ++n_y;
        }
        if (flip == 0) {
            if (diagonal_.empty()) diagonal_.assign(d, 0.0);
            for (std::size_t j = 0; j < d; ++j)
                diagonal_[j] += (std::popcount(j & zmask) & 1) ? -term.coefficient : term.coefficient;
            continue;
        }
        auto& b = builders[flip];
        if (zmask == 0) {
            b.scalar += term.coefficient;
        } else {
            b.table_terms.push_back(&term);
            if (n_y % 2 == 1) b.complex = true;
        }
    }

    for (auto& [flip, b] : builders) {
        FlipGroup g;
        g.flip = flip;
        if (b.table_terms.empty()) {
            if (b.scalar == 0.0) continue;
            g.kind = GroupKind::Scalar;
            g.scalar = b.scalar;
        } else {
            // Entry j multiplies in[j ^ flip]; the phase is evaluated on the
            // source index j ^ flip.
            std::vector<Complex> table(d, Complex{b.scalar, 0.0});
            for (const PauliString* t : b.table_terms) {
                std::uint64_t zmask = 0;
                int n_y = 0;
                for (const auto& [label, p] : t->factors) {
                    if (p == Pauli::Z || p == Pauli::Y) zmask |= bit_of(label);
                    if (p == Pauli::Y) ++n_y;
                }
                static constexpr Complex kIPow[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
                const Complex phase = kIPow[n_y % 4] * t->coefficient;
                for (std::size_t j = 0; j < d; ++j) {
                    const std::size_t src = j ^ flip;
                    table[j] += (std::popcount(src & zmask) & 1) ? -phase : phase;
                }
            }
            if (b.complex) {
                g.kind = GroupKind::ComplexTable;
                g.complex_table = std::move(table);
                real_ = false;
            } else {
                g.kind = GroupKind::RealTable;
                g.real_table.resize(d);
                for (std::size_t j = 0; j < d; ++j) g.real_table[j] = table[j].real();
            }
        }
        groups_.push_back(std::move(g));
    }
}

// Accumulates each output row over all flip groups before storing it. Rows
// hold `stride` doubles, processed in column chunks of C doubles.
template <std::size_t C, bool Schrodinger>
void CompiledOperator::apply_rows(const double* src, double* dst, std::size_t stride, const double* shift) const {
    for (std::size_t c0 = 0; c0 < stride; c0 += C) {
        const double* cs = shift ? shift + c0 : nullptr;
        for (std::size_t j = 0; j < dim(); ++j) {
            double acc[C];
            const double* __restrict x = src + j * stride + c0;
            const double dj = diagonal_.empty() ? 0.0 : diagonal_[j];
            if (cs)
                for (std::size_t c = 0; c < C; ++c) acc[c] = (dj - cs[c]) * x[c];
            else
                for (std::size_t c = 0; c < C; ++c) acc[c] = dj * x[c];

            for (const auto& g : groups_) {
                const double* __restrict y = src + (j ^ g.flip) * stride + c0;
                switch (g.kind) {
                    case GroupKind::Scalar: {
                        const double s = g.scalar;
                        for (std::size_t c = 0; c < C; ++c) acc[c] += s * y[c];
                        break;
                    }
                    case GroupKind::RealTable: {
                        const double s = g.real_table[j];
                        if (s == 0.0) break;
                        for (std::size_t c = 0; c < C; ++c) acc[c] += s * y[c];
                        break;
                    }
                    case GroupKind::ComplexTable: {
                        const double a = g.complex_table[j].real();
                        const double b = g.complex_table[j].imag();
                        for (std::size_t c = 0; c < C; c += 2) {
                            acc[c] += a * y[c] - b * y[c + 1];
                            acc[c + 1] += a * y[c + 1] + b * y[c];
                        }
                        break;
                    }
                }
            }

            double* __restrict o = dst + j * stride + c0;
            if constexpr (Schrodinger) {
                for (std::size_t c = 0; c < C; c += 2) {
                    o[c] = acc[c + 1];
                    o[c + 1] = -acc[c];
                }
            } else {
                for (std::size_t c = 0; c < C; ++c) o[c] = acc[c];
            }
        }
    }
}

template <bool Schrodinger>
void CompiledOperator::apply_impl(const StateBlock& in, StateBlock& out, std::span<const double> shifts) const {
    const std::size_t d = dim();
    if (static_cast<std::size_t>(in.rows()) != d)
        throw ShapeError("block has " + std::to_string(in.rows()) + " rows, operator dimension is " + std::to_string(d));
    out.resize(in.rows(), in.cols());
    const std::size_t n2 = 2 * static_cast<std::size_t>(in.cols());
    const double* src = reinterpret_cast<const double*>(in.data());
    double* dst = reinterpret_cast<double*>(out.data());

    // Per-double copy of the column shifts (real and imaginary slots).
    std::vector<double> expanded;
    if (!shifts.empty()) {
        if (shifts.size() != static_cast<std::size_t>(in.cols()))
            throw ShapeError("expected one energy shift per block column");
        expanded.resize(n2);
        for (std::size_t c = 0; c < shifts.size(); ++c) expanded[2 * c] = expanded[2 * c + 1] = shifts[c];
    }
    const double* shift = expanded.empty() ? nullptr : expanded.data();

    // Full-width rows for a single state and for the 20-member ensemble
    // blocks (one register state, or four register basis states per member).
    switch (n2) {
        case 2: apply_rows<2, Schrodinger>(src, dst, n2, shift); break;
        case 40: apply_rows<40, Schrodinger>(src, dst, n2, shift); break;
        case 160: apply_rows<160, Schrodinger>(src, dst, n2, shift); break;
        default:
            if (n2 % 16 == 0) apply_rows<16, Schrodinger>(src, dst, n2, shift);
            else if (n2 % 8 == 0) apply_rows<8, Schrodinger>(src, dst, n2, shift);
            else if (n2 % 4 == 0) apply_rows<4, Schrodinger>(src, dst, n2, shift);
            else apply_rows<2, Schrodinger>(src, dst, n2, shift);
    }
}

void CompiledOperator::apply(const StateBlock& in, StateBlock& out) const { apply_impl<false>(in, out, {}); }

void CompiledOperator::apply_schrodinger(const StateBlock& in, StateBlock& out, double energy_shift) const {
    if (energy_shift == 0.0) {
        apply_impl<true>(in, out, {});
        return;
    }
    const std::vector<double> shifts(static_cast<std::size_t>(in.cols()), energy_shift);
    apply_impl<true>(in, out, shifts);
}

void CompiledOperator::apply_schrodinger(const StateBlock& in, StateBlock& out,
                                         std::span<const double> column_shifts) const {
    apply_impl<true>(in, out, column_shifts);
}

StateVector CompiledOperator::apply(const StateVector& psi) const {
    StateBlock in = psi;
    StateBlock out;
    apply(in, out);
    return out.col(0);
}

Complex CompiledOperator::element(std::size_t row, const FlipGroup& g) const {
    switch (g.kind) {
        case GroupKind::Scalar:
            return {g.scalar, 0.0};
        case GroupKind::RealTable:
            return {g.real_table[row], 0.0};
        case GroupKind::ComplexTable:
            return g.complex_table[row];
    }
    return {};
}

Eigen::MatrixXcd CompiledOperator::to_dense() const {
    const std::size_t d = dim();
    Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(d, d);
    for (std::size_t j = 0; j < d; ++j) {
        if (!diagonal_.empty()) m(j, j) += diagonal_[j];
        for (const auto& g : groups_) m(j, j ^ g.flip) += element(j, g);
    }
    return m;
}

Eigen::MatrixXd CompiledOperator::to_dense_real() const {
    if (!real_) throw ContractError("operator has imaginary matrix elements");
    const std::size_t d = dim();
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(d, d);
    for (std::size_t j = 0; j < d; ++j) {
        if (!diagonal_.empty()) m(j, j) += diagonal_[j];
        for (const auto& g : groups_) m(j, j ^ g.flip) += element(j, g).real();
    }
    return m;
}

StateVector apply_operator(const OperatorSum& op, const StateVector& psi, const QubitIndexing& indexing) {
    if (static_cast<std::size_t>(psi.size()) != indexing.dim())
        throw ShapeError("state length " + std::to_string(psi.size()) + " does not match dimension " +
                         std::to_string(indexing.dim()));
    return CompiledOperator(op, indexing.n_qubits()).apply(psi);
}

namespace {

void check_weights(std::span<const double> weights, std::size_t n_states) {
    if (weights.size() != n_states)
        throw ShapeError("got " + std::to_string(weights.size()) + " weights for " + std::to_string(n_states) +
                         " states");
    if (weights.empty()) throw ShapeError("empty ensemble");
    double sum = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0)) throw NormalizationError("negative or NaN ensemble weight");
        sum += w;
    }
    if (std::abs(sum - 1.0) > kWeightSumTolerance)
        throw NormalizationError("ensemble weights sum to " + std::to_string(sum));
}

}  // namespace

DensityMatrix partial_trace_bath(std::span<const double> weights, std::span<const StateVector> states, int n_system) {
    check_weights(weights, states.size());
    const std::size_t d = states.front().size();
    const int n = qubits_for_dimension(d);
    if (n_system < 1 || n_system > n) throw ConfigError("register larger than state space");
    const Eigen::Index ds = Eigen::Index{1} << n_system;
    const Eigen::Index db = static_cast<Eigen::Index>(d) / ds;

    DensityMatrix rho = DensityMatrix::Zero(ds, ds);
    for (std::size_t i = 0; i < states.size(); ++i) {
        if (static_cast<std::size_t>(states[i].size()) != d) throw ShapeError("ensemble states differ in length");
        // Column r holds the bath amplitudes paired with register index r.
        Eigen::Map<const Eigen::MatrixXcd> m(states[i].data(), db, ds);
        rho.noalias() += weights[i] * (m.adjoint() * m).transpose();
    }
    return rho;
}

RegisterTransfer::RegisterTransfer(const StateBlock& block, std::span<const double> weights, int n_system)
    : n_system_(n_system) {
    const Eigen::Index ds = Eigen::Index{1} << n_system;
    if (block.cols() % ds != 0 || static_cast<Eigen::Index>(weights.size()) * ds != block.cols())
        throw ShapeError("block columns do not match members x register basis");
    const int n = qubits_for_dimension(block.rows());
    if (n < n_system) throw ConfigError("register larger than state space");
    const Eigen::Index db = block.rows() / ds;

    tensor_ = Eigen::MatrixXcd::Zero(ds * ds, ds * ds);
    Eigen::MatrixXcd q(db, ds * ds);
    for (std::size_t member = 0; member < weights.size(); ++member) {
        for (Eigen::Index r = 0; r < ds; ++r) {
            const Eigen::Index col = static_cast<Eigen::Index>(member) * ds + r;
            for (Eigen::Index rp = 0; rp < ds; ++rp)
                for (Eigen::Index b = 0; b < db; ++b) q(b, r * ds + rp) = block(rp * db + b, col);
        }
        tensor_.noalias() += weights[member] * (q.adjoint() * q).transpose();
    }
}

DensityMatrix RegisterTransfer::reduce(const StateVector& a) const {
    const Eigen::Index ds = Eigen::Index{1} << n_system_;
    if (a.size() != ds) throw ShapeError("register state has wrong length");
    DensityMatrix rho = DensityMatrix::Zero(ds, ds);
    for (Eigen::Index r = 0; r < ds; ++r) {
        if (a(r) == Complex{}) continue;
        for (Eigen::Index s = 0; s < ds; ++s) {
            if (a(s) == Complex{}) continue;
            const Complex coeff = a(r) * std::conj(a(s));
            rho += coeff * tensor_.block(r * ds, s * ds, ds, ds);
        }
    }
    return rho;
}

double RegisterTransfer::trace_weight() const { return tensor_.trace().real() / static_cast<double>(1 << n_system_); }

Expectation expectation(const OperatorSum& op, const DensityMatrix& rho, int n_qubits, int first_label) {
    if (rho.rows() != rho.cols() || static_cast<std::size_t>(rho.rows()) != (std::size_t{1} << n_qubits))
        throw ShapeError("density matrix does not match qubit count");
    if (!op.all_coefficients_finite()) throw ContractError("operator is not Hermitian (non-finite coefficient)");
    const CompiledOperator compiled(op, n_qubits, first_label);
    StateBlock in = rho;
    StateBlock out;
    compiled.apply(in, out);
    const Complex tr = out.trace();
    if (std::abs(tr.imag()) > kImaginaryContractLimit)
        throw ContractError("Tr(op rho) has imaginary part " + std::to_string(tr.imag()));
    return {tr.real(), std::abs(tr.imag())};
}

Expectation expectation(const OperatorSum& op, std::span<const double> weights, std::span<const StateVector> states,
                        int n_qubits, int first_label) {
    if (weights.size() != states.size()) throw ShapeError("weights and states differ in count");
    if (!op.all_coefficients_finite()) throw ContractError("operator is not Hermitian (non-finite coefficient)");
    const CompiledOperator compiled(op, n_qubits, first_label);
    Complex total{};
    for (std::size_t i = 0; i < states.size(); ++i) {
        if (static_cast<std::size_t>(states[i].size()) != compiled.dim()) throw ShapeError("state length mismatch");
        total += weights[i] * states[i].dot(compiled.apply(states[i]));
    }
    if (std::abs(total.imag()) > kImaginaryContractLimit)
        throw ContractError("expectation has imaginary part " + std::to_string(total.imag()));
    return {total.real(), std::abs(total.imag())};
}

}  // namespace qcflaw
