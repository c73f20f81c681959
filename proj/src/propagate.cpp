#include "qcflaw/propagate.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include <fmt/format.h>

#include "dop853_tableau.hpp"
#include "qcflaw/error.hpp"

namespace qcflaw {

namespace {

constexpr double kSafety = 0.9;
constexpr double kMinFactor = 0.2;
constexpr double kMaxFactor = 10.0;
// PI controller exponents for an order-8 error estimate.
constexpr double kAlpha = 0.7 / 8.0;
constexpr double kBeta = 0.4 / 8.0;
constexpr std::size_t kChunk = 512;

double* raw(StateBlock& b) { return reinterpret_cast<double*>(b.data()); }
const double* raw(const StateBlock& b) { return reinterpret_cast<const double*>(b.data()); }

// out = base + sum_j c_j * terms_j over n doubles, chunked to stay in cache.
void combine(double* out, const double* base, std::span<const double> c, std::span<const double* const> terms,
             std::size_t n) {
    for (std::size_t start = 0; start < n; start += kChunk) {
        const std::size_t len = std::min(kChunk, n - start);
        double* __restrict o = out + start;
        const double* __restrict b = base + start;
        for (std::size_t i = 0; i < len; ++i) o[i] = b[i];
        for (std::size_t j = 0; j < c.size(); ++j) {
            const double cj = c[j];
            const double* __restrict t = terms[j] + start;
            for (std::size_t i = 0; i < len; ++i) o[i] += cj * t[i];
        }
    }
}

Eigen::VectorXd column_norms(const StateBlock& b) { return b.colwise().norm().transpose(); }

class Dop853 {
public:
    Dop853(const CompiledOperator& h, const IntegratorConfig& cfg, Eigen::Index rows, Eigen::Index cols)
        : h_(h), cfg_(cfg) {
        for (int s = 0; s <= dop853::kStages; ++s) k_[s].resize(rows, cols);
        tmp_.resize(rows, cols);
        y_new_.resize(rows, cols);
    }

    void rhs(const StateBlock& y, StateBlock& out) {
        if (cfg_.column_shifts.empty())
            h_.apply_schrodinger(y, out, cfg_.energy_shift);
        else
            h_.apply_schrodinger(y, out, std::span<const double>(cfg_.column_shifts));
        ++evaluations_;
    }

    // One trial step of size dt from y with k_[0] = f(y). Returns the scaled
    // error norm; the candidate is left in y_new_.
    double attempt(const StateBlock& y, double dt) {
        const std::size_t n = static_cast<std::size_t>(y.size()) * 2;
        std::array<double, dop853::kStages> coeff{};
        std::array<const double*, dop853::kStages> terms{};
        for (int s = 1; s < dop853::kStages; ++s) {
            std::size_t m = 0;
            for (int j = 0; j < s; ++j) {
                if (dop853::kA[s][j] == 0.0) continue;
                coeff[m] = dt * dop853::kA[s][j];
                terms[m] = raw(k_[j]);
                ++m;
            }
            combine(raw(tmp_), raw(y), std::span(coeff.data(), m), std::span(terms.data(), m), n);
            rhs(tmp_, k_[s]);
        }
        std::size_t m = 0;
        for (int j = 0; j < dop853::kStages; ++j) {
            if (dop853::kB[j] == 0.0) continue;
            coeff[m] = dt * dop853::kB[j];
            terms[m] = raw(k_[j]);
            ++m;
        }
        combine(raw(y_new_), raw(y), std::span(coeff.data(), m), std::span(terms.data(), m), n);
        return error_norm(y, dt);
    }

    double error_norm(const StateBlock& y, double dt) const {
        const std::size_t count = static_cast<std::size_t>(y.size());
        const Complex* yv = y.data();
        const Complex* yn = y_new_.data();
        double e5 = 0.0;
        double e3 = 0.0;
        for (std::size_t i = 0; i < count; ++i) {
            Complex a5{};
            Complex a3{};
            for (int j = 0; j < dop853::kStages; ++j) {
                const Complex kj = k_[j].data()[i];
                a5 += dop853::kE5[j] * kj;
                a3 += dop853::kE3[j] * kj;
            }
            const double scale = cfg_.atol + cfg_.rtol * std::sqrt(std::max(std::norm(yv[i]), std::norm(yn[i])));
            e5 += std::norm(a5) / (scale * scale);
            e3 += std::norm(a3) / (scale * scale);
        }
        if (e5 == 0.0 && e3 == 0.0) return 0.0;
        return std::abs(dt) * e5 / std::sqrt((e5 + 0.01 * e3) * static_cast<double>(count));
    }

    // Builds the continuous extension over the accepted step y -> y_new_ of
    // size dt. Requires k_[kStages] = f(y_new_).
    void prepare_dense(const StateBlock& y, double dt) {
        const std::size_t n = static_cast<std::size_t>(y.size()) * 2;
        std::array<double, dop853::kExtendedStages> coeff{};
        std::array<const double*, dop853::kExtendedStages> terms{};
        for (int e = 0; e < 3; ++e) {
            const int s = dop853::kStages + 1 + e;
            if (k_[s].size() != y.size()) k_[s].resize(y.rows(), y.cols());
            std::size_t m = 0;
            for (int j = 0; j < s; ++j) {
                if (dop853::kAExtra[e][j] == 0.0) continue;
                coeff[m] = dt * dop853::kAExtra[e][j];
                terms[m] = raw(k_[j]);
                ++m;
            }
            combine(raw(tmp_), raw(y), std::span(coeff.data(), m), std::span(terms.data(), m), n);
            rhs(tmp_, k_[s]);
        }
        for (auto& f : dense_)
            if (f.size() != y.size()) f.resize(y.rows(), y.cols());
        const double* yo = raw(y);
        const double* yn = raw(y_new_);
        const double* f_old = raw(k_[0]);
        const double* f_new = raw(k_[dop853::kStages]);
        double* f0 = raw(dense_[0]);
        double* f1 = raw(dense_[1]);
        double* f2 = raw(dense_[2]);
        for (std::size_t i = 0; i < n; ++i) {
            const double dy = yn[i] - yo[i];
            f0[i] = dy;
            f1[i] = dt * f_old[i] - dy;
            f2[i] = 2.0 * dy - dt * (f_new[i] + f_old[i]);
        }
        for (int r = 0; r < 4; ++r) {
            double* __restrict out = raw(dense_[3 + r]);
            for (std::size_t i = 0; i < n; ++i) out[i] = 0.0;
            for (int j = 0; j < dop853::kExtendedStages; ++j) {
                if (dop853::kD[r][j] == 0.0) continue;
                const double c = dt * dop853::kD[r][j];
                const double* __restrict kj = raw(k_[j]);
                for (std::size_t i = 0; i < n; ++i) out[i] += c * kj[i];
            }
        }
    }

    // Interpolated state at fraction x of the step prepared above.
    void interpolate(const StateBlock& y, double x, StateBlock& out) const {
        out.resize(y.rows(), y.cols());
        const std::size_t n = static_cast<std::size_t>(y.size()) * 2;
        const double* yo = raw(y);
        std::array<const double*, 7> f{};
        for (int r = 0; r < 7; ++r) f[r] = raw(dense_[r]);
        double* o = raw(out);
        const double u = 1.0 - x;
        for (std::size_t i = 0; i < n; ++i) {
            double acc = f[6][i] * x;
            acc = (acc + f[5][i]) * u;
            acc = (acc + f[4][i]) * x;
            acc = (acc + f[3][i]) * u;
            acc = (acc + f[2][i]) * x;
            acc = (acc + f[1][i]) * u;
            acc = (acc + f[0][i]) * x;
            o[i] = yo[i] + acc;
        }
    }

    // Stages 0..11, the FSAL derivative at 12 and the dense-output stages.
    std::array<StateBlock, dop853::kExtendedStages> k_;
    std::array<StateBlock, 7> dense_;
    StateBlock tmp_;
    StateBlock y_new_;
    std::size_t evaluations_ = 0;

private:
    const CompiledOperator& h_;
    const IntegratorConfig& cfg_;
};

double initial_step(Dop853& rk, const StateBlock& y, const IntegratorConfig& cfg) {
    const StateBlock& f = rk.k_[0];
    auto rms_scaled = [&](const StateBlock& v) {
        double acc = 0.0;
        for (Eigen::Index i = 0; i < v.size(); ++i) {
            const double scale = cfg.atol + cfg.rtol * std::abs(y.data()[i]);
            acc += std::norm(v.data()[i]) / (scale * scale);
        }
        return std::sqrt(acc / static_cast<double>(v.size()));
    };
    const double d0 = rms_scaled(y);
    const double d1 = rms_scaled(f);
    const double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    rk.tmp_ = y + h0 * f;
    rk.rhs(rk.tmp_, rk.y_new_);
    rk.tmp_ = rk.y_new_ - f;
    const double d2 = rms_scaled(rk.tmp_) / h0;
    const double h1 = std::max(d1, d2) <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / std::max(d1, d2), 1.0 / 9.0);
    return std::min(100 * h0, h1);
}

}  // namespace

void IntegratorConfig::validate() const {
    if (!(rtol > 0) || !(atol > 0)) throw ConfigError("integrator tolerances must be positive");
    if (initial_step < 0 || max_step < 0) throw ConfigError("integrator step bounds must be nonnegative");
    if (!std::isfinite(energy_shift)) throw ConfigError("energy shift must be finite");
    for (double s : column_shifts)
        if (!std::isfinite(s)) throw ConfigError("energy shift must be finite");
}

IntegratorConfig IntegratorConfig::with_tolerance_scaled(double factor) const {
    IntegratorConfig c = *this;
    c.rtol *= factor;
    c.atol *= factor;
    return c;
}

IntegratorStats& IntegratorStats::operator+=(const IntegratorStats& other) {
    accepted += other.accepted;
    rejected += other.rejected;
    evaluations += other.evaluations;
    max_norm_drift = std::max(max_norm_drift, other.max_norm_drift);
    return *this;
}

StateBlock evolve_segment(const StateBlock& psi0, const CompiledOperator& h, double duration,
                          const IntegratorConfig& cfg, std::span<const double> sample_times,
                          const SampleObserver& observer, IntegratorStats* stats) {
    cfg.validate();
    if (!(duration > 0)) throw ConfigError("segment duration must be positive");
    if (static_cast<std::size_t>(psi0.rows()) != h.dim()) throw ShapeError("state block does not match operator");
    for (std::size_t i = 0; i < sample_times.size(); ++i) {
        if (sample_times[i] < 0 || sample_times[i] > duration || (i > 0 && sample_times[i] < sample_times[i - 1]))
            throw ConfigError("sample times must be ascending within the segment");
    }

    const Eigen::VectorXd norms0 = column_norms(psi0);
    IntegratorStats local;
    auto check_drift = [&](const StateBlock& y, double t) {
        const double drift = (column_norms(y) - norms0).cwiseAbs().maxCoeff();
        local.max_norm_drift = std::max(local.max_norm_drift, drift);
        if (drift > cfg.max_norm_drift)
            throw IntegrationError(fmt::format("norm drift {:.3g} at t={:.6g} exceeds {:.3g}", drift, t,
                                               cfg.max_norm_drift));
    };

    StateBlock y = psi0;
    std::size_t next_sample = 0;
    while (next_sample < sample_times.size() && sample_times[next_sample] == 0.0) {
        if (observer) observer(0.0, y);
        ++next_sample;
    }

    Dop853 rk(h, cfg, psi0.rows(), psi0.cols());
    rk.rhs(y, rk.k_[0]);
    const double max_step = cfg.max_step > 0 ? std::min(cfg.max_step, duration) : duration;
    double step = cfg.initial_step > 0 ? cfg.initial_step : initial_step(rk, y, cfg);
    step = std::min(step, max_step);
    double previous_error = 1e-4;
    double t = 0.0;

    StateBlock sample;
    while (t < duration) {
        double dt = std::min(step, max_step);
        bool clipped = false;
        if (t + dt >= duration || duration - (t + dt) < 1e-12 * std::max(1.0, duration)) {
            dt = duration - t;
            clipped = true;
        }
        if (dt < cfg.min_step && duration - t >= cfg.min_step)
            throw IntegrationError(fmt::format("step size underflow ({:.3g}) at t={:.6g}", dt, t));

        const double err = rk.attempt(y, dt);
        if (!std::isfinite(err)) throw IntegrationError("non-finite error estimate at t=" + std::to_string(t));
        if (err <= 1.0) {
            ++local.accepted;
            const double t_new = clipped ? duration : t + dt;
            rk.rhs(rk.y_new_, rk.k_[dop853::kStages]);

            // Samples inside the step come from the continuous extension;
            // one on the step end takes the step result itself.
            bool dense_ready = false;
            while (next_sample < sample_times.size() && sample_times[next_sample] <= t_new) {
                const double ts = sample_times[next_sample];
                if (ts == t_new) {
                    check_drift(rk.y_new_, ts);
                    if (observer) observer(ts, rk.y_new_);
                } else {
                    if (!dense_ready) {
                        rk.prepare_dense(y, dt);
                        dense_ready = true;
                    }
                    rk.interpolate(y, (ts - t) / dt, sample);
                    check_drift(sample, ts);
                    if (observer) observer(ts, sample);
                }
                ++next_sample;
            }

            t = t_new;
            std::swap(y, rk.y_new_);
            std::swap(rk.k_[0], rk.k_[dop853::kStages]);
            double factor = err == 0.0 ? kMaxFactor
                                       : kSafety * std::pow(err, -kAlpha) * std::pow(previous_error, kBeta);
            factor = std::clamp(factor, kMinFactor, kMaxFactor);
            previous_error = std::max(err, 1e-4);
            step = dt * factor;
        } else {
            ++local.rejected;
            step = dt * std::max(kMinFactor, kSafety * std::pow(err, -1.0 / 8.0));
            if (step < cfg.min_step)
                throw IntegrationError(fmt::format("step size underflow ({:.3g}) at t={:.6g}", step, t));
        }
    }
    check_drift(y, duration);
    local.evaluations = rk.evaluations_;
    if (stats) *stats += local;
    return y;
}

StateVector evolve_segment(const StateVector& psi0, const OperatorSum& h, double duration,
                           const IntegratorConfig& cfg) {
    const int n = qubits_for_dimension(static_cast<std::size_t>(psi0.size()));
    const CompiledOperator op(h, n);
    const StateBlock block = psi0;
    return evolve_segment(block, op, duration, cfg).col(0);
}

double Trajectory::max_norm_drift() const {
    double m = stats.max_norm_drift;
    for (double d : norm_drift) m = std::max(m, d);
    return m;
}

std::vector<double> sample_grid(const PulseSchedule& schedule, std::size_t intervals) {
    if (intervals == 0) throw ConfigError("sample grid needs at least one interval");
    const double total = schedule.total_time();
    std::vector<double> grid;
    for (std::size_t i = 0; i <= intervals; ++i)
        grid.push_back(i == intervals ? total : total * static_cast<double>(i) / static_cast<double>(intervals));
    for (double tau : schedule.switching_times()) grid.push_back(tau);
    std::sort(grid.begin(), grid.end());
    std::vector<double> merged;
    const double tol = 1e-12 * std::max(1.0, total);
    for (double t : grid) {
        if (!merged.empty() && t - merged.back() <= tol) {
            // Prefer the exact switching time when a grid point lands on it.
            for (double tau : schedule.switching_times())
                if (tau == t) merged.back() = t;
            continue;
        }
        merged.push_back(t);
    }
    return merged;
}

Trajectory evolve_schedule(const StateBlock& psi0, const PulseSchedule& schedule, const OperatorSum& static_part,
                           int n_qubits, const IntegratorConfig& cfg, std::span<const double> sample_times,
                           const SampleObserver& observer, bool keep_states) {
    if (schedule.segments.empty()) throw ConfigError("empty pulse schedule");
    const double total = schedule.total_time();
    const double tol = 1e-12 * std::max(1.0, total);
    for (std::size_t i = 0; i < sample_times.size(); ++i)
        if (sample_times[i] < -tol || sample_times[i] > total + tol || (i > 0 && sample_times[i] < sample_times[i - 1]))
            throw ConfigError("sample times must be ascending within the schedule");

    Trajectory traj;
    const Eigen::VectorXd norms0 = column_norms(psi0);
    auto record = [&](double t, const StateBlock& y) {
        traj.times.push_back(t);
        traj.norm_drift.push_back((column_norms(y) - norms0).cwiseAbs().maxCoeff());
        if (keep_states) traj.states.push_back(y);
        if (observer) observer(t, y);
    };

    StateBlock y = psi0;
    std::size_t next = 0;
    for (std::size_t k = 0; k < schedule.segments.size(); ++k) {
        const PulseSegment& seg = schedule.segments[k];
        const double duration = seg.duration();
        std::vector<double> local;
        std::vector<double> absolute;
        while (next < sample_times.size()) {
            const double ts = sample_times[next];
            const bool first_point = k == 0 && ts <= seg.t_start + tol;
            if (!first_point && ts <= seg.t_start + tol && k > 0) {
                // Already emitted as the previous segment's end point.
                ++next;
                continue;
            }
            if (ts > seg.t_end + tol) break;
            const bool at_end = std::abs(ts - seg.t_end) <= tol;
            local.push_back(first_point ? 0.0 : at_end ? duration : std::clamp(ts - seg.t_start, 0.0, duration));
            absolute.push_back(first_point ? seg.t_start : at_end ? seg.t_end : ts);
            ++next;
        }

        std::size_t emitted = 0;
        const CompiledOperator h(seg.hamiltonian + static_part, n_qubits);
        try {
            y = evolve_segment(y, h, duration, cfg, local,
                               [&](double, const StateBlock& block) { record(absolute[emitted++], block); },
                               &traj.stats);
        } catch (const IntegrationError& e) {
            throw IntegrationError("segment " + std::to_string(k + 1) + ": " + e.what());
        }
    }
    traj.final_state = std::move(y);
    return traj;
}

IdealPropagator::IdealPropagator(const PulseSchedule& schedule, int n_system) {
    const Eigen::Index d = Eigen::Index{1} << n_system;
    Eigen::MatrixXcd acc = Eigen::MatrixXcd::Identity(d, d);
    for (const auto& seg : schedule.segments) {
        Segment s;
        s.t_start = seg.t_start;
        s.t_end = seg.t_end;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(CompiledOperator(seg.hamiltonian, n_system).to_dense());
        s.eigenvalues = solver.eigenvalues();
        s.eigenvectors = solver.eigenvectors();
        s.before = acc;
        acc = segment_exp(s, seg.duration()) * acc;
        segments_.push_back(std::move(s));
    }
    full_ = acc;
    total_ = schedule.total_time();
}

Eigen::MatrixXcd IdealPropagator::segment_exp(const Segment& s, double tau) const {
    Eigen::VectorXcd phases(s.eigenvalues.size());
    for (Eigen::Index i = 0; i < phases.size(); ++i) phases(i) = std::polar(1.0, -s.eigenvalues(i) * tau);
    return s.eigenvectors * phases.asDiagonal() * s.eigenvectors.adjoint();
}

Eigen::MatrixXcd IdealPropagator::at(double t) const {
    const double tol = 1e-12 * std::max(1.0, total_);
    if (!(t >= -tol && t <= total_ + tol))
        throw DomainError("time " + std::to_string(t) + " outside [0, " + std::to_string(total_) + "]");
    if (segments_.empty()) return Eigen::MatrixXcd::Identity(1, 1);
    if (t >= total_) return full_;
    std::size_t k = 0;
    while (k + 1 < segments_.size() && t >= segments_[k].t_end) ++k;
    const Segment& s = segments_[k];
    return segment_exp(s, std::max(0.0, t - s.t_start)) * s.before;
}

Eigen::MatrixXcd ideal_propagator(const PulseSchedule& schedule, double t) { return IdealPropagator(schedule).at(t); }

std::vector<double> loschmidt_echo(const OperatorSum& h0, const OperatorSum& v, const StateVector& psi0,
                                   std::span<const double> times, int n_qubits, int first_label,
                                   const IntegratorConfig& cfg) {
    if (std::abs(psi0.norm() - 1.0) > 1e-8) throw NormalizationError("echo initial state is not normalized");
    for (std::size_t i = 0; i < times.size(); ++i)
        if (times[i] < 0 || (i > 0 && times[i] < times[i - 1])) throw ConfigError("echo times must be ascending");
    std::vector<double> echo;
    if (times.empty()) return echo;
    const double t_end = times.back();
    if (t_end == 0.0) return std::vector<double>(times.size(), 1.0);

    const CompiledOperator reference(h0, n_qubits, first_label);
    const CompiledOperator perturbed(h0 + v, n_qubits, first_label);
    IntegratorConfig local = cfg;
    local.energy_shift = psi0.dot(reference.apply(psi0)).real();
    local.column_shifts.clear();

    const StateBlock start = psi0;
    std::vector<StateVector> ref_states;
    ref_states.reserve(times.size());
    evolve_segment(start, reference, t_end, local, times,
                   [&](double, const StateBlock& y) { ref_states.push_back(y.col(0)); });
    std::size_t idx = 0;
    echo.reserve(times.size());
    evolve_segment(start, perturbed, t_end, local, times,
                   [&](double, const StateBlock& y) { echo.push_back(std::norm(ref_states[idx++].dot(y.col(0)))); });
    return echo;
}

}  // namespace qcflaw
