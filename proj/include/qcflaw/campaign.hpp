#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "qcflaw/config.hpp"
#include "qcflaw/diagnostics.hpp"
#include "qcflaw/io.hpp"
#include "qcflaw/model.hpp"
#include "qcflaw/propagate.hpp"
#include "qcflaw/spectral.hpp"

namespace qcflaw {

inline constexpr const char* kCodeVersion = "qcflaw 1.0.0";

// ---------------------------------------------------------------------------
// Single-realization computations.

struct GateSetup {
    ControlParams control;
    BathParams bath;  // bath.jx is the intra-bath coupling of this run
    CouplingKind kind = CouplingKind::XX;
    std::size_t n_cut = 20;
    IntegratorConfig integrator;
    std::size_t samples = 600;
};

// Purity and fidelity of all eight register states on the sample grid. The
// four register basis states times each ensemble member are propagated once
// and every initial state is assembled from them by linearity.
struct GateSimulation {
    std::vector<double> times;
    std::vector<double> switching_times;
    std::array<std::vector<double>, kRegisterStateCount> purity;
    std::array<std::vector<double>, kRegisterStateCount> fidelity;
    IntegratorStats stats;
    double max_norm_drift = 0.0;
    double next_weight = 0.0;
    bool truncation_warning = false;

    GateMetrics metrics(int state, CouplingKind kind, double jx, std::uint64_t seed) const;
    // Average over the eight initial states at every sample.
    std::vector<double> mean_fidelity() const;
};

GateSimulation simulate_gate(const FlawRealization& fr, const GateSetup& setup);

struct RabiSetup {
    int n_register = 2;
    double bz = 1.0;
    BathParams bath;
    std::size_t n_cut = 20;
    IntegratorConfig integrator;
    double duration = 800.0;
    std::size_t samples = 1600;
};

// Register under H_S = -1/2 Bz sum_q Z_q from |+>^n, xx coupled to the bath;
// fidelity is taken against the bath-free closed form.
GateMetrics simulate_rabi(const FlawRealization& fr, const RabiSetup& setup);

struct LevelStatistics {
    UnfoldedSpectrum spectrum;
    SpacingStatistics spacings;
};

LevelStatistics level_statistics(const FlawRealization& fr, const SpectralConfig& cfg);

struct EchoSeries {
    std::vector<double> times;
    std::vector<double> echo;
};

// M(t) with H0 the fields-only bath, V its pair couplings and psi0 the
// ground state of H0.
EchoSeries echo_series(const FlawRealization& fr, double t_max, std::size_t samples, const IntegratorConfig& cfg);

// Canonical average, variance and memory proxy of Sigma for one coupling
// kind. `es` must hold the full bath spectrum of `fr`.
BathStatistics bath_statistics(const FlawRealization& fr, CouplingKind kind, const EigenSolution& es, double kT,
                               std::size_t n_cut, std::span<const double> memory_times);

std::vector<double> uniform_times(double t_max, std::size_t intervals);

// ---------------------------------------------------------------------------
// Campaign orchestration.

struct JobReport {
    std::string id;
    bool ok = false;
    bool skipped = false;  // outputs already present with matching digests
    std::string error;
    std::vector<std::string> warnings;
    std::vector<std::pair<std::string, std::string>> info;  // extra manifest keys
    std::vector<std::string> files;
    std::vector<std::string> digests;  // sha-256 of each file, same order
};

struct CampaignReport {
    std::vector<JobReport> jobs;

    std::size_t failures() const;
    std::size_t skipped() const;
    CampaignReport& operator+=(const CampaignReport& other);
};

std::string gate_file_name(CouplingKind kind, double jx, int state, std::uint64_t seed);
std::string rabi_file_name(int n_register, double jx, std::uint64_t seed);

// One job per (seed, kind, J_x); each writes one CSV per requested state.
CampaignReport run_gate_campaign(const CampaignConfig& cfg);

struct ChaosSelection {
    bool levelstats = true;
    bool echo = true;
    bool variance = true;
};

// Level statistics and echo per (seed, chaos J_x); variances, averages and
// memory functions per seed over the gate J_x grid.
CampaignReport run_chaos_analyses(const CampaignConfig& cfg, const ChaosSelection& which);

// One job per (first seed, J_x) of the Rabi grid.
CampaignReport run_rabi_detector(const CampaignConfig& cfg, int n_register);

// Runs `jobs` on `workers` threads; reports come back in job order.
std::vector<JobReport> run_jobs(const std::vector<std::function<JobReport()>>& jobs, unsigned workers);

}  // namespace qcflaw
