#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "qcflaw/hilbert.hpp"

namespace qcflaw {

// Control field strengths of the two-qubit register (units of eps).
struct ControlParams {
    double bx = 1.0;
    double bz = 1.0;
    double jx = 0.05;

    void validate() const;
};

struct BathParams {
    int n_bath = 10;
    double b0x = 1.0;
    double b0z = 1.0;
    double delta = 0.4;     // full width of the one-body field detuning
    double jx = 0.05;       // intra-bath xx couplings drawn from [-jx, jx]
    double lambda = 0.05;   // system-bath couplings drawn from [-lambda, lambda]
    double kT = 0.25;

    void validate() const;
};

// One seeded draw of the static flaws of the idle qubits. Indices are
// zero-based over the bath (bath qubit i carries label i + 3).
struct FlawRealization {
    std::uint64_t seed = 0;
    int n_bath = 0;
    std::vector<double> bx;
    std::vector<double> bz;
    std::vector<double> jxx;  // upper triangle, row-major over (i < j)
    std::vector<double> lambda;

    double coupling(int i, int j) const;
    static std::size_t pair_index(int i, int j, int n_bath);

    // key=value lines with 17 significant digits; round-trips bit-exactly.
    void write(std::ostream& os) const;
    static FlawRealization read(std::istream& is);

    bool operator==(const FlawRealization&) const = default;
};

// Draws are taken from std::mt19937_64 seeded with `seed`; each raw 64-bit
// output u maps to the unit interval as (u >> 11) * 2^-53. Draw order is
// fixed: bx ascending, bz ascending, jxx over (i < j) lexicographically, then
// lambda ascending. Every quantity consumes one draw regardless of its
// interval width, so changing jx only rescales the jxx values.
FlawRealization sample_flaws(std::uint64_t seed, const BathParams& params);

// H_B = -1/2 sum_i (Bx_i X_i + Bz_i Z_i) + sum_{i<j} J_ij X_i X_j on labels
// first_label .. first_label + N - 1.
OperatorSum build_bath_hamiltonian(const FlawRealization& fr, int first_label = 3);

// The fields-only part of the bath Hamiltonian (J = 0) and the pair-coupling
// part, used by the echo analysis.
OperatorSum build_bath_fields(const FlawRealization& fr, int first_label = 3);
OperatorSum build_bath_pair_couplings(const FlawRealization& fr, int first_label = 3);

enum class CouplingKind { XX, ZZ };

std::string_view to_string(CouplingKind kind);
CouplingKind parse_coupling_kind(std::string_view text);

struct CouplingSpec {
    CouplingKind kind = CouplingKind::XX;
    OperatorSum system;       // S = P_1 + P_2 (or P_1 for a one-qubit register)
    OperatorSum bath;         // Sigma = sum_i lambda_i P_i
    OperatorSum interaction;  // S * Sigma
};

CouplingSpec build_coupling(CouplingKind kind, const FlawRealization& fr, int n_system = 2);

struct PulseSegment {
    double t_start = 0.0;
    double t_end = 0.0;
    OperatorSum hamiltonian;

    double duration() const { return t_end - t_start; }
};

struct PulseSchedule {
    std::vector<PulseSegment> segments;

    double total_time() const { return segments.empty() ? 0.0 : segments.back().t_end; }
    std::vector<double> switching_times() const;  // tau_0 .. tau_n
    // Index of the segment containing t (boundary times belong to the later
    // segment, the final time to the last one).
    std::size_t segment_at(double t) const;
};

// The nine square pulses realizing CNOT on qubits 1 (control) and 2 (target).
PulseSchedule build_pulse_schedule(const ControlParams& cp);

inline constexpr int kRegisterStateCount = 8;

// |00>, |01>, |10>, |11>, Phi+, Phi-, Psi+, Psi-.
std::array<StateVector, kRegisterStateCount> register_initial_states();
std::string_view register_state_name(int index);

}  // namespace qcflaw
