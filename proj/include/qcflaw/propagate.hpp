#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "qcflaw/hilbert.hpp"
#include "qcflaw/model.hpp"

namespace qcflaw {

struct IntegratorConfig {
    double rtol = 1e-10;
    double atol = 1e-12;
    double initial_step = 0.0;  // 0 selects a step from the initial derivative
    double max_step = 0.0;      // 0 caps the step at the segment length
    // Subtracted from the Hamiltonian. It only changes the global phase of
    // every state, but removes the fast carrier oscillation when set near the
    // populated energies.
    double energy_shift = 0.0;
    // Per block column; overrides energy_shift when nonempty. Columns that
    // are never combined with each other may carry different phase gauges.
    std::vector<double> column_shifts;
    double max_norm_drift = 1e-6;
    double min_step = 1e-14;

    void validate() const;
    IntegratorConfig with_tolerance_scaled(double factor) const;
};

struct IntegratorStats {
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    std::size_t evaluations = 0;
    double max_norm_drift = 0.0;

    IntegratorStats& operator+=(const IntegratorStats& other);
};

// Called with the absolute sample time and the current block.
using SampleObserver = std::function<void(double, const StateBlock&)>;

// Integrates d psi / dt = -i (H - shift) psi over [0, duration] with an
// embedded 8(5,3) Dormand-Prince pair and PI step control. Requested sample
// times (relative to the segment start, ascending, inside [0, duration]) are
// read from the order-7 continuous extension, so they do not constrain the
// step size; `observer` sees each of them. The state is never
// renormalized; drift beyond cfg.max_norm_drift raises IntegrationError.
StateBlock evolve_segment(const StateBlock& psi0, const CompiledOperator& h, double duration,
                          const IntegratorConfig& cfg, std::span<const double> sample_times = {},
                          const SampleObserver& observer = {}, IntegratorStats* stats = nullptr);

StateVector evolve_segment(const StateVector& psi0, const OperatorSum& h, double duration,
                           const IntegratorConfig& cfg);

struct Trajectory {
    std::vector<double> times;
    std::vector<double> norm_drift;  // max over columns at each sample
    std::vector<StateBlock> states;  // only filled when requested
    StateBlock final_state;
    IntegratorStats stats;

    double max_norm_drift() const;
};

// Uniform grid of `intervals` steps over the schedule merged with every
// switching time.
std::vector<double> sample_grid(const PulseSchedule& schedule, std::size_t intervals = 600);

// Runs every segment with H = segment Hamiltonian + `static_part`, restarting
// the integrator at each switching time.
Trajectory evolve_schedule(const StateBlock& psi0, const PulseSchedule& schedule, const OperatorSum& static_part,
                           int n_qubits, const IntegratorConfig& cfg, std::span<const double> sample_times,
                           const SampleObserver& observer = {}, bool keep_states = false);

// Exact register propagator of the bath-free schedule.
class IdealPropagator {
public:
    explicit IdealPropagator(const PulseSchedule& schedule, int n_system = 2);

    Eigen::MatrixXcd at(double t) const;
    double total_time() const { return total_; }

private:
    struct Segment {
        double t_start;
        double t_end;
        Eigen::VectorXd eigenvalues;
        Eigen::MatrixXcd eigenvectors;
        Eigen::MatrixXcd before;  // product of all earlier segments
    };
    Eigen::MatrixXcd segment_exp(const Segment& s, double tau) const;

    std::vector<Segment> segments_;
    Eigen::MatrixXcd full_;
    double total_ = 0.0;
};

Eigen::MatrixXcd ideal_propagator(const PulseSchedule& schedule, double t);

// M(t) = |<psi0| e^{i H0 t} e^{-i (H0 + V) t} |psi0>|^2 from two forward
// evolutions. The integrator shift is set to <psi0|H0|psi0>.
std::vector<double> loschmidt_echo(const OperatorSum& h0, const OperatorSum& v, const StateVector& psi0,
                                   std::span<const double> times, int n_qubits, int first_label,
                                   const IntegratorConfig& cfg);

}  // namespace qcflaw
