#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <map>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace qcflaw {

using Complex = std::complex<double>;
using StateVector = Eigen::VectorXcd;
using DensityMatrix = Eigen::MatrixXcd;

// A set of states stored one per column with rows contiguous, so the
// matrix-free kernels stream over all columns of a basis index at once.
using StateBlock = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Qubit labels are 1-based: 1..n_system are the register, the next n_bath
// labels are the idle bath qubits. Label 1 is the most significant bit of the
// basis index.
struct QubitIndexing {
    int n_system = 2;
    int n_bath = 10;

    int n_qubits() const { return n_system + n_bath; }
    std::size_t dim() const { return std::size_t{1} << n_qubits(); }
    std::size_t system_dim() const { return std::size_t{1} << n_system; }
    std::size_t bath_dim() const { return std::size_t{1} << n_bath; }
    int first_bath_label() const { return n_system + 1; }
    int last_bath_label() const { return n_system + n_bath; }
};

enum class Pauli : std::uint8_t { X, Y, Z };

struct PauliString {
    double coefficient = 1.0;
    std::map<int, Pauli> factors;  // absent label = identity

    static PauliString single(Pauli p, int label, double coefficient = 1.0) {
        PauliString s;
        s.coefficient = coefficient;
        s.factors.emplace(label, p);
        return s;
    }

    // Appends a factor; an existing factor on the same label is replaced.
    PauliString& with(Pauli p, int label) {
        factors[label] = p;
        return *this;
    }
};

class OperatorSum {
public:
    OperatorSum() = default;
    OperatorSum(std::initializer_list<PauliString> terms) : terms_(terms) {}

    void add(PauliString term) { terms_.push_back(std::move(term)); }
    OperatorSum& operator+=(const OperatorSum& other);
    friend OperatorSum operator+(OperatorSum lhs, const OperatorSum& rhs) { return lhs += rhs; }

    OperatorSum scaled(double factor) const;
    // Shifts every qubit label by `offset`.
    OperatorSum relabeled(int offset) const;

    const std::vector<PauliString>& terms() const { return terms_; }
    bool empty() const { return terms_.empty(); }
    std::size_t size() const { return terms_.size(); }

    // Smallest and largest label referenced; {0, 0} for the zero operator or
    // pure identity terms.
    std::pair<int, int> label_range() const;
    // True when at least one term carries a two-qubit (or larger) factor set.
    bool has_multi_qubit_terms() const;
    bool all_coefficients_finite() const;

private:
    std::vector<PauliString> terms_;
};

// An OperatorSum lowered onto `n_qubits` consecutive labels starting at
// `first_label`. Terms are grouped by their bit-flip pattern: the diagonal
// part is a table, X-only patterns collapse to one scalar, and anything with
// Z or Y factors keeps a per-index table.
class CompiledOperator {
public:
    CompiledOperator() = default;
    CompiledOperator(const OperatorSum& op, int n_qubits, int first_label = 1);

    int n_qubits() const { return n_qubits_; }
    std::size_t dim() const { return std::size_t{1} << n_qubits_; }
    bool is_real() const { return real_; }
    std::size_t flip_groups() const { return groups_.size(); }

    StateVector apply(const StateVector& psi) const;
    // out = op * in; `out` is resized as needed and must not alias `in`.
    void apply(const StateBlock& in, StateBlock& out) const;
    // out = -i (op - shift) in, the Schrodinger right-hand side.
    void apply_schrodinger(const StateBlock& in, StateBlock& out, double energy_shift) const;
    // As above with one shift per block column.
    void apply_schrodinger(const StateBlock& in, StateBlock& out, std::span<const double> column_shifts) const;

    Eigen::MatrixXcd to_dense() const;
    // Only valid when is_real().
    Eigen::MatrixXd to_dense_real() const;

private:
    enum class GroupKind : std::uint8_t { Scalar, RealTable, ComplexTable };
    struct FlipGroup {
        std::uint64_t flip = 0;
        GroupKind kind = GroupKind::Scalar;
        double scalar = 0.0;
        std::vector<double> real_table;
        std::vector<Complex> complex_table;
    };

    template <bool Schrodinger>
    void apply_impl(const StateBlock& in, StateBlock& out, std::span<const double> shifts) const;
    template <std::size_t C, bool Schrodinger>
    void apply_rows(const double* src, double* dst, std::size_t stride, const double* shift) const;
    Complex element(std::size_t row, const FlipGroup& g) const;

    int n_qubits_ = 0;
    bool real_ = true;
    std::vector<double> diagonal_;
    std::vector<FlipGroup> groups_;
};

StateVector apply_operator(const OperatorSum& op, const StateVector& psi, const QubitIndexing& indexing);

// rho_S = sum_n w_n Tr_B |psi_n><psi_n| for the leading `n_system` qubits.
DensityMatrix partial_trace_bath(std::span<const double> weights, std::span<const StateVector> states,
                                 int n_system = 2);

// Reduced dynamics of an ensemble propagated in the register basis.
//
// The block holds, for every ensemble member n and register basis state r,
// the evolved |r> (x) |phi_n> in column n * system_dim + r. By linearity the
// register density for any initial register state a is
//   rho[r', s'] = sum_{r,s} a_r conj(a_s) T[(r, r'), (s, s')]
// with T the weighted Gram tensor accumulated here.
class RegisterTransfer {
public:
    RegisterTransfer(const StateBlock& block, std::span<const double> weights, int n_system = 2);

    DensityMatrix reduce(const StateVector& register_state) const;
    double trace_weight() const;

private:
    int n_system_;
    Eigen::MatrixXcd tensor_;
};

struct Expectation {
    double value = 0.0;
    double imaginary_residual = 0.0;
};

// Tr(op rho) for a density matrix on the full space of `n_qubits` qubits.
Expectation expectation(const OperatorSum& op, const DensityMatrix& rho, int n_qubits, int first_label = 1);
// sum_n w_n <psi_n|op|psi_n>.
Expectation expectation(const OperatorSum& op, std::span<const double> weights, std::span<const StateVector> states,
                        int n_qubits, int first_label = 1);

// Number of qubits for a state of length `dim`; throws ShapeError unless dim
// is a power of two.
int qubits_for_dimension(std::size_t dim);

}  // namespace qcflaw
