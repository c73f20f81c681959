#include "qcflaw/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

#include <fmt/format.h>

#include "qcflaw/error.hpp"

namespace qcflaw {

namespace {

constexpr double kDegeneracyTolerance = 1e-12;
constexpr double kMaxFitCondition = 1e12;
constexpr double kNextWeightWarning = 1e-9;

Eigen::Index dominant_index(const Eigen::Ref<const Eigen::VectorXcd>& v) {
    Eigen::Index best = 0;
    v.cwiseAbs().maxCoeff(&best);
    return best;
}

// Orders degenerate runs by dominant amplitude index and fixes phases.
void canonicalize(Eigen::VectorXd& energies, Eigen::MatrixXcd& states) {
    const Eigen::Index k = energies.size();
    std::vector<Eigen::Index> dominant(k);
    for (Eigen::Index n = 0; n < k; ++n) {
        dominant[n] = dominant_index(states.col(n));
        const Complex a = states(dominant[n], n);
        states.col(n) *= std::conj(a) / std::abs(a);
    }
    std::vector<Eigen::Index> order(k);
    std::iota(order.begin(), order.end(), 0);
    Eigen::Index run_start = 0;
    for (Eigen::Index n = 1; n <= k; ++n) {
        const bool breaks = n == k || energies(n) - energies(n - 1) >
                                          kDegeneracyTolerance * std::max(1.0, std::abs(energies(n)));
        if (!breaks) continue;
        std::stable_sort(order.begin() + run_start, order.begin() + n,
                         [&](Eigen::Index a, Eigen::Index b) { return dominant[a] < dominant[b]; });
        run_start = n;
    }
    Eigen::VectorXd e(k);
    Eigen::MatrixXcd s(states.rows(), k);
    for (Eigen::Index n = 0; n < k; ++n) {
        e(n) = energies(order[n]);
        s.col(n) = states.col(order[n]);
    }
    energies = std::move(e);
    states = std::move(s);
}

EigenSolution dense_lowest(const CompiledOperator& h, std::size_t k) {
    EigenSolution es;
    const auto kk = static_cast<Eigen::Index>(k);
    if (h.is_real()) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(h.to_dense_real());
        if (solver.info() != Eigen::Success) throw SolverError("dense eigensolver did not converge");
        es.energies = solver.eigenvalues().head(kk);
        es.states = solver.eigenvectors().leftCols(kk).cast<Complex>();
    } else {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(h.to_dense());
        if (solver.info() != Eigen::Success) throw SolverError("dense eigensolver did not converge");
        es.energies = solver.eigenvalues().head(kk);
        es.states = solver.eigenvectors().leftCols(kk);
    }
    return es;
}

EigenSolution lanczos_lowest(const CompiledOperator& h, std::size_t k, const EigenOptions& options) {
    const auto d = static_cast<Eigen::Index>(h.dim());
    const Eigen::Index m_max =
        options.max_krylov == 0 ? d : std::min<Eigen::Index>(d, static_cast<Eigen::Index>(options.max_krylov));
    const auto kk = static_cast<Eigen::Index>(k);

    std::mt19937_64 rng(0x5eed);
    Eigen::MatrixXcd basis(d, std::min<Eigen::Index>(m_max, 64));
    StateBlock v(d, 1);
    for (Eigen::Index i = 0; i < d; ++i) v(i, 0) = static_cast<double>(rng() >> 11) * 0x1.0p-53 - 0.5;
    v /= v.norm();

    std::vector<double> alpha;
    std::vector<double> beta;
    StateBlock w;
    Eigen::VectorXd ritz;
    Eigen::MatrixXd ritz_vectors;
    Eigen::Index m = 0;
    for (;;) {
        if (m == basis.cols()) basis.conservativeResize(Eigen::NoChange, std::min(m_max, 2 * basis.cols()));
        basis.col(m) = v.col(0);
        h.apply(v, w);
        alpha.push_back(basis.col(m).dot(w.col(0)).real());
        Eigen::VectorXcd r = w.col(0);
        for (int pass = 0; pass < 2; ++pass) r -= basis.leftCols(m + 1) * (basis.leftCols(m + 1).adjoint() * r);
        const double b = r.norm();
        ++m;

        const bool exhausted = m == m_max || b < 1e-12;
        if (m >= kk && (m % 8 == 0 || exhausted)) {
            Eigen::VectorXd diag = Eigen::Map<Eigen::VectorXd>(alpha.data(), m);
            Eigen::VectorXd sub = Eigen::Map<Eigen::VectorXd>(beta.data(), m - 1);
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> tri;
            tri.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
            ritz = tri.eigenvalues();
            ritz_vectors = tri.eigenvectors();
            double worst = 0.0;
            for (Eigen::Index i = 0; i < kk; ++i) worst = std::max(worst, std::abs(b * ritz_vectors(m - 1, i)));
            if (worst < 0.1 * options.residual_tolerance || exhausted) break;
        }
        if (exhausted) break;
        beta.push_back(b);
        v.col(0) = r / b;
    }
    if (ritz.size() < kk)
        throw SolverError("Lanczos found " + std::to_string(ritz.size()) + " of " + std::to_string(k) + " eigenpairs");
    EigenSolution es;
    es.energies = ritz.head(kk);
    es.states = basis.leftCols(m) * ritz_vectors.leftCols(kk).cast<Complex>();
    for (Eigen::Index n = 0; n < kk; ++n) es.states.col(n).normalize();
    return es;
}

}  // namespace

EigenSolution eigendecompose_bath(const OperatorSum& h, int n_bath, std::size_t k, int first_label,
                                  const EigenOptions& options) {
    const CompiledOperator op(h, n_bath, first_label);
    if (k == 0 || k > op.dim())
        throw ConfigError("requested " + std::to_string(k) + " eigenpairs of a " + std::to_string(op.dim()) +
                          "-dimensional space");
    EigenSolution es = options.method == EigenMethod::Dense ? dense_lowest(op, k) : lanczos_lowest(op, k, options);
    canonicalize(es.energies, es.states);

    StateBlock block = es.states;
    StateBlock applied;
    op.apply(block, applied);
    for (Eigen::Index n = 0; n < es.energies.size(); ++n) {
        const double res = (applied.col(n) - es.energies(n) * block.col(n)).norm();
        es.max_residual = std::max(es.max_residual, res);
    }
    if (!(es.max_residual < options.residual_tolerance))
        throw SolverError("eigenpair residual " + fmt::format("{:.3g}", es.max_residual) + " exceeds tolerance");
    return es;
}

std::vector<StateVector> ThermalEnsemble::member_states() const {
    std::vector<StateVector> out;
    out.reserve(size());
    for (std::size_t n = 0; n < size(); ++n) out.push_back(state(n));
    return out;
}

ThermalEnsemble thermal_ensemble(const EigenSolution& es, double kT, std::size_t n_cut) {
    if (!(kT > 0)) throw ConfigError("temperature must be positive");
    if (n_cut == 0 || n_cut > es.size())
        throw ConfigError("n_cut " + std::to_string(n_cut) + " exceeds the " + std::to_string(es.size()) +
                          " available eigenpairs");
    ThermalEnsemble ens;
    ens.kT = kT;
    const double e0 = es.energies(0);
    double q = 0.0;
    for (std::size_t n = 0; n < n_cut; ++n) {
        const double e = es.energies(static_cast<Eigen::Index>(n));
        ens.energies.push_back(e);
        ens.weights.push_back(std::exp(-(e - e0) / kT));
        q += ens.weights.back();
    }
    for (double& w : ens.weights) w /= q;
    ens.partition_sum = q;
    ens.states = es.states.leftCols(static_cast<Eigen::Index>(n_cut));
    ens.truncation_weight = std::exp(-(ens.energies.back() - e0) / kT);
    if (es.size() > n_cut) {
        const double next = std::exp(-(es.energies(static_cast<Eigen::Index>(n_cut)) - e0) / kT);
        ens.next_weight = next / (q + next);
        ens.truncation_warning = ens.next_weight > kNextWeightWarning;
    }
    return ens;
}

UnfoldedSpectrum unfold_spectrum(std::span<const double> energies, int degree) {
    const std::size_t n = energies.size();
    if (n < 50) throw ConfigError("unfolding needs at least 50 levels, got " + std::to_string(n));
    if (degree < 1 || static_cast<std::size_t>(degree) >= n) throw ConfigError("invalid unfolding degree");
    if (!std::is_sorted(energies.begin(), energies.end())) throw ConfigError("energies must be ascending");

    UnfoldedSpectrum us;
    us.requested_degree = degree;
    us.energies.assign(energies.begin(), energies.end());
    const double lo = energies.front();
    const double hi = energies.back();
    us.center = 0.5 * (lo + hi);
    us.half_width = 0.5 * (hi - lo);
    if (!(us.half_width > 0)) throw FitError("spectrum has zero width");

    // Staircase N(E_i) = #{j : E_j <= E_i}.
    Eigen::VectorXd target(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t count = i + 1;
        while (count < n && energies[count] <= energies[i]) ++count;
        target(static_cast<Eigen::Index>(i)) = static_cast<double>(count);
    }

    // The requested degree is lowered until the fitted staircase is
    // nondecreasing over the levels; banded spectra need this.
    const auto fit = [&](int deg) {
        const Eigen::Index cols = deg + 1;
        Eigen::MatrixXd design(static_cast<Eigen::Index>(n), cols);
        for (std::size_t i = 0; i < n; ++i) {
            const double x = (energies[i] - us.center) / us.half_width;
            auto row = design.row(static_cast<Eigen::Index>(i));
            row(0) = 1.0;
            if (cols > 1) row(1) = x;
            for (Eigen::Index c = 2; c < cols; ++c) row(c) = 2.0 * x * row(c - 1) - row(c - 2);
        }
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(design, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const auto& sv = svd.singularValues();
        us.condition_number = sv(0) / sv(sv.size() - 1);
        if (!(us.condition_number <= kMaxFitCondition))
            throw FitError("staircase fit is ill-conditioned (condition number " +
                           std::to_string(us.condition_number) + "); lower the polynomial degree");
        const Eigen::VectorXd coeffs = svd.solve(target);
        us.degree = deg;
        us.coefficients.assign(coeffs.data(), coeffs.data() + coeffs.size());
        const Eigen::VectorXd smooth = design * coeffs;
        us.unfolded.assign(smooth.data(), smooth.data() + smooth.size());
        return std::is_sorted(us.unfolded.begin(), us.unfolded.end());
    };
    int deg = degree;
    while (!fit(deg)) {
        if (deg == 1) throw FitError("unfolded spectrum is not monotone even for a linear fit");
        --deg;
    }
    us.raw_mean_spacing = (us.unfolded.back() - us.unfolded.front()) / static_cast<double>(n - 1);
    if (!(us.raw_mean_spacing > 0)) throw FitError("unfolded spectrum has no extent");
    const double first = us.unfolded.front();
    for (double& e : us.unfolded) e = first + (e - first) / us.raw_mean_spacing;
    us.spacings.resize(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) us.spacings[i] = us.unfolded[i + 1] - us.unfolded[i];
    return us;
}

double poisson_pdf(double s) { return s < 0 ? 0.0 : std::exp(-s); }
double poisson_cdf(double s) { return s < 0 ? 0.0 : -std::expm1(-s); }

double wigner_dyson_pdf(double s) {
    using std::numbers::pi;
    return s < 0 ? 0.0 : 0.5 * pi * s * std::exp(-0.25 * pi * s * s);
}

double wigner_dyson_cdf(double s) { return s < 0 ? 0.0 : -std::expm1(-0.25 * std::numbers::pi * s * s); }

SpacingStatistics spacing_statistics(std::span<const double> spacings, int bins, double s_max) {
    if (bins < 1 || !(s_max > 0)) throw ConfigError("invalid histogram layout");
    SpacingStatistics st;
    st.s_max = s_max;
    st.density.assign(static_cast<std::size_t>(bins), 0.0);
    const double width = s_max / bins;
    for (double s : spacings) {
        if (s < 0 || s >= s_max) {
            ++st.overflow;
            continue;
        }
        const auto bin = std::min(static_cast<std::size_t>(s / width), st.density.size() - 1);
        st.density[bin] += 1.0;
        ++st.in_range;
    }
    if (st.in_range > 0)
        for (double& v : st.density) v /= static_cast<double>(st.in_range) * width;
    if (!spacings.empty()) {
        st.ks_poisson = ks_distance(spacings, poisson_cdf);
        st.ks_wigner_dyson = ks_distance(spacings, wigner_dyson_cdf);
    }
    return st;
}

}  // namespace qcflaw
