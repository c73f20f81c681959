#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "qcflaw/hilbert.hpp"

namespace qcflaw {

// Lowest eigenpairs of a bath Hamiltonian; states are the columns of
// `states`, energies ascend.
struct EigenSolution {
    Eigen::VectorXd energies;
    Eigen::MatrixXcd states;
    double max_residual = 0.0;

    std::size_t size() const { return static_cast<std::size_t>(energies.size()); }
    StateVector state(std::size_t n) const { return states.col(static_cast<Eigen::Index>(n)); }
};

enum class EigenMethod { Dense, Lanczos };

struct EigenOptions {
    EigenMethod method = EigenMethod::Dense;
    double residual_tolerance = 1e-8;
    // Lanczos only: Krylov dimension cap (0 = full space).
    std::size_t max_krylov = 0;
};

// Degenerate levels (within 1e-12 relative) are ordered by the index of the
// largest-magnitude amplitude; each eigenvector is phased so that amplitude is
// real and positive.
//
// The Lanczos path uses full reorthogonalization and returns one vector per
// distinct eigenvalue it resolves; exact degeneracies need the dense path.
EigenSolution eigendecompose_bath(const OperatorSum& h, int n_bath, std::size_t k, int first_label = 3,
                                  const EigenOptions& options = {});

struct ThermalEnsemble {
    double kT = 0.0;
    std::vector<double> energies;
    std::vector<double> weights;     // exp(-E_n / kT) / Q', descending
    Eigen::MatrixXcd states;         // member states as columns
    double partition_sum = 0.0;      // Q' relative to exp(-E_1 / kT)
    double truncation_weight = 0.0;  // exp(-(E_ncut - E_1) / kT)
    double next_weight = 0.0;        // normalized weight of level n_cut + 1, 0 if unknown
    bool truncation_warning = false; // next_weight > 1e-9

    std::size_t size() const { return weights.size(); }
    StateVector state(std::size_t n) const { return states.col(static_cast<Eigen::Index>(n)); }
    std::vector<StateVector> member_states() const;
};

ThermalEnsemble thermal_ensemble(const EigenSolution& es, double kT, std::size_t n_cut);

struct UnfoldedSpectrum {
    int requested_degree = 0;
    int degree = 0;  // highest degree <= requested whose fit is nondecreasing
    std::vector<double> energies;
    std::vector<double> unfolded;
    std::vector<double> spacings;
    // Chebyshev coefficients of the staircase fit in the scaled variable
    // x = (E - center) / half_width.
    std::vector<double> coefficients;
    double center = 0.0;
    double half_width = 0.0;
    double condition_number = 0.0;
    // Mean of the raw unfolded spacings before rescaling to 1.
    double raw_mean_spacing = 0.0;
};

inline constexpr int kDefaultUnfoldingDegree = 7;
inline constexpr std::size_t kDefaultSpectrumLevels = 200;

UnfoldedSpectrum unfold_spectrum(std::span<const double> energies, int degree = kDefaultUnfoldingDegree);

struct SpacingStatistics {
    double s_max = 4.0;
    std::vector<double> density;  // per bin, normalized over in-range spacings
    std::size_t in_range = 0;
    std::size_t overflow = 0;
    double ks_poisson = 0.0;
    double ks_wigner_dyson = 0.0;

    double bin_width() const { return s_max / static_cast<double>(density.size()); }
};

SpacingStatistics spacing_statistics(std::span<const double> spacings, int bins = 20, double s_max = 4.0);
inline SpacingStatistics spacing_statistics(const UnfoldedSpectrum& us, int bins = 20, double s_max = 4.0) {
    return spacing_statistics(us.spacings, bins, s_max);
}

double poisson_pdf(double s);
double poisson_cdf(double s);
double wigner_dyson_pdf(double s);
double wigner_dyson_cdf(double s);

// Kolmogorov-Smirnov distance between the empirical distribution of
// `samples` and a continuous cumulative distribution.
template <class Cdf>
double ks_distance(std::span<const double> samples, Cdf cdf);

}  // namespace qcflaw

#include <algorithm>

template <class Cdf>
double qcflaw::ks_distance(std::span<const double> samples, Cdf cdf) {
    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(sorted.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        const double f = cdf(sorted[i]);
        d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
    }
    return d;
}
