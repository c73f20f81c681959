#include "qcflaw/campaign.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <mutex>
#include <sstream>
#include <thread>

#include <fmt/chrono.h>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "qcflaw/error.hpp"
#include "qcflaw/units.hpp"

namespace qcflaw {

namespace {

// rho(r, r') = sum_n w_n sum_b psi_n(r, b) conj(psi_n(r', b)) for a block
// whose column n holds member n.
DensityMatrix reduce_members(const StateBlock& block, std::span<const double> weights, Eigen::Index ds) {
    const Eigen::Index db = block.rows() / ds;
    DensityMatrix rho = DensityMatrix::Zero(ds, ds);
    for (std::size_t n = 0; n < weights.size(); ++n) {
        const Eigen::VectorXcd psi = block.col(static_cast<Eigen::Index>(n));
        const Eigen::Map<const Eigen::MatrixXcd> q(psi.data(), db, ds);  // q(b, r)
        rho.noalias() += weights[n] * (q.transpose() * q.conjugate());
    }
    return rho;
}

std::string now_utc() {
    return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(std::chrono::system_clock::to_time_t(
                                                      std::chrono::system_clock::now())));
}

// ---------------------------------------------------------------------------
// Output session: owns the manifest of one output directory.

class Session {
public:
    Session(const CampaignConfig& cfg, std::string command) : dir_(cfg.output), command_(std::move(command)) {
        std::filesystem::create_directories(dir_);
        const auto path = dir_ / "manifest.txt";
        if (std::filesystem::exists(path)) manifest_ = Manifest::load(path);

        std::ostringstream snapshot;
        write_config(snapshot, cfg);
        write_file_atomic(dir_ / "config.txt", snapshot.str());
        manifest_.set("code.version", kCodeVersion);
        manifest_.set("config.file", "config.txt");
        manifest_.set("config.sha256", sha256_hex(snapshot.str()));
        manifest_.set("units.energy", "k_B * 0.2 K");
        manifest_.set("units.time_ns", format_number(units::kTimeUnitNs));
        manifest_.set("run." + command_ + ".started", now_utc());
        save();
    }

    const std::filesystem::path& dir() const { return dir_; }

    // Reuses a finished job when its fingerprint matches and every output
    // file still carries its recorded digest.
    bool reusable(const std::string& id, const std::string& fingerprint, JobReport& report) const {
        std::lock_guard lock(mutex_);
        const std::string key = "job." + id;
        if (manifest_.get_or(key + ".status", "") != "ok") return false;
        if (manifest_.get_or(key + ".fingerprint", "") != fingerprint) return false;
        std::vector<std::string> files;
        std::istringstream is(manifest_.get_or(key + ".files", ""));
        std::string name;
        while (std::getline(is, name, ';'))
            if (!name.empty()) files.push_back(name);
        for (const auto& f : files)
            if (!manifest_.file_intact(dir_, f)) return false;
        report.id = id;
        report.ok = true;
        report.skipped = true;
        report.files = files;
        for (const auto& f : files) report.digests.push_back(manifest_.get("file." + f));
        return true;
    }

    void record(const JobReport& r, const std::string& fingerprint, const std::string& seed) {
        std::lock_guard lock(mutex_);
        const std::string key = "job." + r.id;
        manifest_.erase_prefix(key + ".");
        manifest_.set(key + ".status", r.ok ? "ok" : "failed");
        manifest_.set(key + ".fingerprint", fingerprint);
        manifest_.set(key + ".seed", seed);
        if (!r.ok) manifest_.set(key + ".error", r.error);
        std::string files;
        for (std::size_t i = 0; i < r.files.size(); ++i) {
            if (i) files += ';';
            files += r.files[i];
            manifest_.set("file." + r.files[i], r.digests[i]);
        }
        manifest_.set(key + ".files", files);
        for (std::size_t i = 0; i < r.warnings.size(); ++i)
            manifest_.set(fmt::format("{}.warning.{}", key, i), r.warnings[i]);
        for (const auto& [k, v] : r.info) manifest_.set(key + "." + k, v);
        save_locked();
    }

    void mark(const std::string& key, const std::string& value) {
        std::lock_guard lock(mutex_);
        manifest_.set(key, value);
    }

    void finish() {
        std::lock_guard lock(mutex_);
        manifest_.set("run." + command_ + ".finished", now_utc());
        save_locked();
    }

private:
    void save() {
        std::lock_guard lock(mutex_);
        save_locked();
    }
    void save_locked() { write_file_atomic(dir_ / "manifest.txt", manifest_.serialize()); }

    std::filesystem::path dir_;
    std::string command_;
    Manifest manifest_;
    mutable std::mutex mutex_;
};

void write_output(const std::filesystem::path& dir, const std::string& name, const std::string& content,
                  JobReport& report) {
    write_file_atomic(dir / name, content);
    report.files.push_back(name);
    report.digests.push_back(sha256_hex(content));
}

using JobBody = std::function<void(JobReport&)>;

// Wraps a job body with reuse, error isolation, logging and manifest
// recording.
std::function<JobReport()> make_job(Session& session, std::string id, std::string fingerprint, std::string seed,
                                    JobBody body) {
    return [&session, id = std::move(id), fingerprint = sha256_hex(fingerprint), seed = std::move(seed),
            body = std::move(body)]() {
        JobReport report;
        if (session.reusable(id, fingerprint, report)) {
            spdlog::info("{}: outputs intact, skipped", id);
            return report;
        }
        report.id = id;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            body(report);
            report.ok = true;
        } catch (const std::exception& e) {
            report.ok = false;
            report.error = e.what();
            report.files.clear();
            report.digests.clear();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (report.ok)
            spdlog::info("{}: done in {:.1f} s", id, secs);
        else
            spdlog::error("{}: failed after {:.1f} s: {}", id, secs, report.error);
        for (const auto& w : report.warnings) spdlog::warn("{}: {}", id, w);
        session.record(report, fingerprint, seed);
        return report;
    };
}

std::string fingerprint_of(const ControlParams& c) { return fmt::format("control:{},{},{}", c.bx, c.bz, c.jx); }
std::string fingerprint_of(const BathParams& b) {
    return fmt::format("bath:{},{},{},{},{},{},{}", b.n_bath, b.b0x, b.b0z, b.delta, b.jx, b.lambda, b.kT);
}
std::string fingerprint_of(const IntegratorConfig& i) {
    return fmt::format("integrator:{},{},{},{},{}", i.rtol, i.atol, i.initial_step, i.max_step, i.max_norm_drift);
}

BathParams bath_at(const CampaignConfig& cfg, double jx) {
    BathParams b = cfg.bath;
    b.jx = jx;
    return b;
}

std::string gate_csv(const GateSimulation& sim, int state) {
    CsvTable t;
    t.header = {"t_scaled", "t_ns", "purity", "fidelity"};
    for (std::size_t i = 0; i < sim.times.size(); ++i)
        t.rows.push_back({format_number(sim.times[i]), format_number(units::to_ns(sim.times[i])),
                          format_number(sim.purity[state][i]), format_number(sim.fidelity[state][i])});
    return to_csv(t);
}

std::string metrics_csv(const GateMetrics& m) {
    CsvTable t;
    t.header = {"t_scaled", "t_ns", "purity", "fidelity"};
    for (std::size_t i = 0; i < m.times.size(); ++i)
        t.rows.push_back({format_number(m.times[i]), format_number(units::to_ns(m.times[i])),
                          format_number(m.purity[i]), format_number(m.fidelity[i])});
    return to_csv(t);
}

}  // namespace

// ---------------------------------------------------------------------------

GateMetrics GateSimulation::metrics(int state, CouplingKind kind, double jx, std::uint64_t seed) const {
    if (state < 0 || state >= kRegisterStateCount) throw ConfigError("initial state id out of range");
    GateMetrics m;
    m.times = times;
    m.purity = purity[static_cast<std::size_t>(state)];
    m.fidelity = fidelity[static_cast<std::size_t>(state)];
    m.state_id = state;
    m.kind = kind;
    m.jx = jx;
    m.seed = seed;
    return m;
}

std::vector<double> GateSimulation::mean_fidelity() const {
    std::vector<double> mean(times.size(), 0.0);
    for (const auto& f : fidelity)
        for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += f[i] / kRegisterStateCount;
    return mean;
}

GateSimulation simulate_gate(const FlawRealization& fr, const GateSetup& setup) {
    setup.control.validate();
    setup.bath.validate();
    const int n_bath = fr.n_bath;
    const QubitIndexing idx{2, n_bath};
    const auto db = static_cast<Eigen::Index>(idx.bath_dim());
    constexpr Eigen::Index ds = 4;

    const OperatorSum hb = build_bath_hamiltonian(fr);
    const std::size_t want = std::min<std::size_t>(setup.n_cut + 1, idx.bath_dim());
    const EigenSolution es = eigendecompose_bath(hb, n_bath, want);
    const ThermalEnsemble ens = thermal_ensemble(es, setup.bath.kT, setup.n_cut);
    const CouplingSpec coupling = build_coupling(setup.kind, fr);
    const PulseSchedule schedule = build_pulse_schedule(setup.control);

    // Column n * 4 + r holds |r> (x) phi_n.
    const auto members = static_cast<Eigen::Index>(ens.size());
    StateBlock block = StateBlock::Zero(static_cast<Eigen::Index>(idx.dim()), members * ds);
    IntegratorConfig icfg = setup.integrator;
    icfg.column_shifts.clear();
    for (Eigen::Index n = 0; n < members; ++n)
        for (Eigen::Index r = 0; r < ds; ++r) {
            block.col(n * ds + r).segment(r * db, db) = ens.states.col(n);
            icfg.column_shifts.push_back(ens.energies[static_cast<std::size_t>(n)]);
        }

    GateSimulation sim;
    sim.switching_times = schedule.switching_times();
    sim.next_weight = ens.next_weight;
    sim.truncation_warning = ens.truncation_warning;
    const auto grid = sample_grid(schedule, setup.samples);
    const IdealPropagator ideal(schedule);
    const auto states = register_initial_states();
    for (auto& v : sim.purity) v.reserve(grid.size());
    for (auto& v : sim.fidelity) v.reserve(grid.size());

    auto observe = [&](double t, const StateBlock& y) {
        const RegisterTransfer transfer(y, ens.weights);
        const Eigen::MatrixXcd u = ideal.at(std::min(t, ideal.total_time()));
        sim.times.push_back(t);
        for (std::size_t s = 0; s < states.size(); ++s) {
            const DensityMatrix rho = transfer.reduce(states[s]);
            const StateVector target = u * states[s];
            sim.purity[s].push_back(purity(rho));
            sim.fidelity[s].push_back(target.dot(rho * target).real());
        }
    };
    const Trajectory traj =
        evolve_schedule(block, schedule, coupling.interaction + hb, idx.n_qubits(), icfg, grid, observe);
    sim.stats = traj.stats;
    sim.max_norm_drift = traj.max_norm_drift();
    return sim;
}

GateMetrics simulate_rabi(const FlawRealization& fr, const RabiSetup& setup) {
    if (setup.n_register != 1 && setup.n_register != 2) throw ConfigError("Rabi register must have 1 or 2 qubits");
    if (!(setup.bz > 0)) throw ConfigError("Rabi field must be positive");
    if (!(setup.duration > 0) || setup.samples == 0) throw ConfigError("Rabi window must be positive");
    setup.bath.validate();
    const int nr = setup.n_register;
    const int n_bath = fr.n_bath;
    const int n_qubits = nr + n_bath;
    const auto ds = Eigen::Index{1} << nr;
    const auto db = Eigen::Index{1} << n_bath;

    const OperatorSum hb = build_bath_hamiltonian(fr, nr + 1);
    const std::size_t want = std::min<std::size_t>(setup.n_cut + 1, static_cast<std::size_t>(db));
    const EigenSolution es = eigendecompose_bath(hb, n_bath, want, nr + 1);
    const ThermalEnsemble ens = thermal_ensemble(es, setup.bath.kT, setup.n_cut);
    const CouplingSpec coupling = build_coupling(CouplingKind::XX, fr, nr);
    OperatorSum hs;
    for (int q = 1; q <= nr; ++q) hs.add(PauliString::single(Pauli::Z, q, -0.5 * setup.bz));

    // |+>^n (x) phi_n for every member.
    const double amp = 1.0 / std::sqrt(static_cast<double>(ds));
    const auto members = static_cast<Eigen::Index>(ens.size());
    StateBlock block = StateBlock::Zero(ds * db, members);
    IntegratorConfig icfg = setup.integrator;
    icfg.column_shifts.clear();
    for (Eigen::Index n = 0; n < members; ++n) {
        for (Eigen::Index r = 0; r < ds; ++r) block.col(n).segment(r * db, db) = amp * ens.states.col(n);
        icfg.column_shifts.push_back(ens.energies[static_cast<std::size_t>(n)]);
    }

    // Bath-free closed form: each qubit (|0> e^{i Bz t/2} + |1> e^{-i Bz t/2}) / sqrt 2.
    auto ideal = [&](double t) {
        StateVector v(ds);
        for (Eigen::Index r = 0; r < ds; ++r) {
            double phase = 0.0;
            for (int q = 0; q < nr; ++q) phase += ((r >> q) & 1) ? -0.5 * setup.bz * t : 0.5 * setup.bz * t;
            v(r) = amp * std::polar(1.0, phase);
        }
        return v;
    };

    GateMetrics m;
    m.kind = CouplingKind::XX;
    m.jx = setup.bath.jx;
    m.seed = fr.seed;
    m.state_id = -1;
    const auto times = uniform_times(setup.duration, setup.samples);
    auto observe = [&](double t, const StateBlock& y) {
        const DensityMatrix rho = reduce_members(y, ens.weights, ds);
        const StateVector target = ideal(t);
        m.times.push_back(t);
        m.purity.push_back(purity(rho));
        m.fidelity.push_back(target.dot(rho * target).real());
    };
    const CompiledOperator h(hs + coupling.interaction + hb, n_qubits);
    evolve_segment(block, h, setup.duration, icfg, times, observe);
    return m;
}

LevelStatistics level_statistics(const FlawRealization& fr, const SpectralConfig& cfg) {
    const OperatorSum hb = build_bath_hamiltonian(fr);
    const EigenSolution es = eigendecompose_bath(hb, fr.n_bath, cfg.levels);
    const std::vector<double> energies(es.energies.data(), es.energies.data() + es.energies.size());
    LevelStatistics out;
    out.spectrum = unfold_spectrum(energies, cfg.degree);
    out.spacings = spacing_statistics(out.spectrum, static_cast<int>(cfg.bins), cfg.s_max);
    return out;
}

EchoSeries echo_series(const FlawRealization& fr, double t_max, std::size_t samples, const IntegratorConfig& cfg) {
    const OperatorSum h0 = build_bath_fields(fr);
    const OperatorSum v = build_bath_pair_couplings(fr);
    const EigenSolution ground = eigendecompose_bath(h0, fr.n_bath, 1);
    EchoSeries out;
    out.times = uniform_times(t_max, samples);
    if (v.empty()) {
        out.echo.assign(out.times.size(), 1.0);
        return out;
    }
    out.echo = loschmidt_echo(h0, v, ground.state(0), out.times, fr.n_bath, 3, cfg);
    return out;
}

BathStatistics bath_statistics(const FlawRealization& fr, CouplingKind kind, const EigenSolution& es, double kT,
                               std::size_t n_cut, std::span<const double> memory_times) {
    const ThermalEnsemble ens = thermal_ensemble(es, kT, n_cut);
    const CouplingSpec coupling = build_coupling(kind, fr);
    BathStatistics out;
    out.average = canonical_average(coupling.bath, ens, fr.n_bath);
    out.variance = canonical_variance(coupling.bath, ens, fr.n_bath);
    out.shift_magnitude = std::abs(out.average) * operator_norm(coupling.system, 2);
    out.times.assign(memory_times.begin(), memory_times.end());
    out.memory = memory_proxy(coupling.bath, es, ens, memory_times, fr.n_bath);
    return out;
}

std::vector<double> uniform_times(double t_max, std::size_t intervals) {
    if (!(t_max > 0) || intervals == 0) throw ConfigError("time window must be positive");
    std::vector<double> t(intervals + 1);
    for (std::size_t i = 0; i <= intervals; ++i)
        t[i] = i == intervals ? t_max : t_max * static_cast<double>(i) / static_cast<double>(intervals);
    return t;
}

// ---------------------------------------------------------------------------

std::size_t CampaignReport::failures() const {
    std::size_t n = 0;
    for (const auto& j : jobs) n += j.ok ? 0 : 1;
    return n;
}

std::size_t CampaignReport::skipped() const {
    std::size_t n = 0;
    for (const auto& j : jobs) n += j.skipped ? 1 : 0;
    return n;
}

CampaignReport& CampaignReport::operator+=(const CampaignReport& other) {
    jobs.insert(jobs.end(), other.jobs.begin(), other.jobs.end());
    return *this;
}

std::string gate_file_name(CouplingKind kind, double jx, int state, std::uint64_t seed) {
    return fmt::format("gate_{}_J{}_s{}_r{}.csv", to_string(kind), format_jx(jx), state, seed);
}

std::string rabi_file_name(int n_register, double jx, std::uint64_t seed) {
    return fmt::format("rabi{}_J{}_r{}.csv", n_register, format_jx(jx), seed);
}

std::vector<JobReport> run_jobs(const std::vector<std::function<JobReport()>>& jobs, unsigned workers) {
    std::vector<JobReport> reports(jobs.size());
    if (workers <= 1 || jobs.size() <= 1) {
        for (std::size_t i = 0; i < jobs.size(); ++i) reports[i] = jobs[i]();
        return reports;
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) reports[i] = jobs[i]();
    };
    std::vector<std::jthread> pool;
    const unsigned n = std::min<unsigned>(workers, static_cast<unsigned>(jobs.size()));
    for (unsigned w = 0; w < n; ++w) pool.emplace_back(worker);
    pool.clear();
    return reports;
}

CampaignReport run_gate_campaign(const CampaignConfig& cfg) {
    cfg.validate();
    Session session(cfg, "gate");
    std::vector<std::function<JobReport()>> jobs;
    std::vector<std::string> states_key;
    for (int s : cfg.states) states_key.push_back(std::to_string(s));

    for (std::uint64_t seed : cfg.seeds)
        for (CouplingKind kind : cfg.kinds)
            for (double jx : cfg.jx) {
                const std::string id = fmt::format("gate.{}.J{}.r{}", to_string(kind), format_jx(jx), seed);
                GateSetup setup;
                setup.control = cfg.control;
                setup.bath = bath_at(cfg, jx);
                setup.kind = kind;
                setup.n_cut = cfg.n_cut;
                setup.integrator = cfg.integrator;
                setup.samples = cfg.samples;
                const std::string fp =
                    fmt::format("{}|{}|{}|{}|{}|{}|{}|{}|{}", kCodeVersion, fingerprint_of(setup.control),
                                fingerprint_of(setup.bath), fingerprint_of(setup.integrator), to_string(kind),
                                setup.n_cut, setup.samples, seed, fmt::join(states_key, ","));
                const auto states = cfg.states;
                jobs.push_back(make_job(session, id, fp, std::to_string(seed), [=, &session](JobReport& report) {
                    const FlawRealization fr = sample_flaws(seed, setup.bath);
                    std::ostringstream flaws;
                    fr.write(flaws);
                    const GateSimulation sim = simulate_gate(fr, setup);
                    if (sim.truncation_warning)
                        report.warnings.push_back(
                            fmt::format("ensemble cutoff leaves Boltzmann weight {:.3g}", sim.next_weight));
                    write_output(session.dir(), fmt::format("flaws_J{}_r{}.txt", format_jx(jx), seed), flaws.str(),
                                 report);
                    for (int s : states) write_output(session.dir(), gate_file_name(kind, jx, s, seed),
                                                      gate_csv(sim, s), report);
                    report.info = {{"steps", std::to_string(sim.stats.accepted)},
                                   {"rejected", std::to_string(sim.stats.rejected)},
                                   {"evaluations", std::to_string(sim.stats.evaluations)},
                                   {"norm_drift", format_number(sim.max_norm_drift)}};
                }));
            }

    CampaignReport out;
    out.jobs = run_jobs(jobs, cfg.workers);
    // One entry per grid point.
    std::size_t j = 0;
    for (std::uint64_t seed : cfg.seeds)
        for (CouplingKind kind : cfg.kinds)
            for (double jx : cfg.jx) {
                const bool ok = out.jobs[j++].ok;
                for (int s : cfg.states) {
                    const std::string name = gate_file_name(kind, jx, s, seed);
                    session.mark("gate." + name.substr(5, name.size() - 9), ok ? "ok" : "failed");
                }
            }
    session.finish();
    return out;
}

CampaignReport run_chaos_analyses(const CampaignConfig& cfg, const ChaosSelection& which) {
    cfg.validate();
    Session session(cfg, "chaos");
    std::vector<std::function<JobReport()>> jobs;

    for (std::uint64_t seed : cfg.seeds) {
        if (which.levelstats)
            for (double jx : cfg.chaos_jx) {
                const std::string id = fmt::format("levels.J{}.r{}", format_jx(jx), seed);
                const BathParams bath = bath_at(cfg, jx);
                const SpectralConfig spec = cfg.spectral;
                const std::string fp = fmt::format("{}|{}|{}|{}|{}|{}|{}", kCodeVersion, fingerprint_of(bath),
                                                   spec.levels, spec.degree, spec.bins, spec.s_max, seed);
                jobs.push_back(make_job(session, id, fp, std::to_string(seed), [=, &session](JobReport& report) {
                    const FlawRealization fr = sample_flaws(seed, bath);
                    const LevelStatistics ls = level_statistics(fr, spec);
                    const auto& us = ls.spectrum;
                    CsvTable t;
                    t.header = {"index", "energy", "unfolded_energy", "spacing"};
                    for (std::size_t i = 0; i < us.energies.size(); ++i)
                        t.rows.push_back({std::to_string(i), format_number(us.energies[i]),
                                          format_number(us.unfolded[i]),
                                          i < us.spacings.size() ? format_number(us.spacings[i]) : "nan"});
                    const std::string stem = fmt::format("levels_J{}_r{}", format_jx(jx), seed);
                    write_output(session.dir(), stem + ".csv", to_csv(t), report);

                    const auto& st = ls.spacings;
                    std::string summary;
                    summary += fmt::format("seed={}\njx={}\nlevels={}\nrequested_degree={}\ndegree={}\n", seed,
                                           format_number(jx), us.energies.size(), us.requested_degree, us.degree);
                    summary += fmt::format("condition_number={}\nraw_mean_spacing={}\n",
                                           format_number(us.condition_number), format_number(us.raw_mean_spacing));
                    summary += fmt::format("bins={}\ns_max={}\nin_range={}\noverflow={}\n", st.density.size(),
                                           format_number(st.s_max), st.in_range, st.overflow);
                    summary += fmt::format("ks_poisson={}\nks_wigner_dyson={}\ncloser={}\n",
                                           format_number(st.ks_poisson), format_number(st.ks_wigner_dyson),
                                           st.ks_poisson < st.ks_wigner_dyson ? "poisson" : "wigner_dyson");
                    for (std::size_t b = 0; b < st.density.size(); ++b)
                        summary += fmt::format("density.{}={}\n", b, format_number(st.density[b]));
                    write_output(session.dir(), stem + ".summary.txt", summary, report);
                }));
            }

        if (which.echo)
            for (double jx : cfg.chaos_jx) {
                const std::string id = fmt::format("echo.J{}.r{}", format_jx(jx), seed);
                const BathParams bath = bath_at(cfg, jx);
                const auto icfg = cfg.integrator;
                const auto ec = cfg.echo;
                const std::string fp = fmt::format("{}|{}|{}|{}|{}|{}", kCodeVersion, fingerprint_of(bath),
                                                   fingerprint_of(icfg), ec.t_max, ec.samples, seed);
                jobs.push_back(make_job(session, id, fp, std::to_string(seed), [=, &session](JobReport& report) {
                    const FlawRealization fr = sample_flaws(seed, bath);
                    const EchoSeries es = echo_series(fr, ec.t_max, ec.samples, icfg);
                    CsvTable t;
                    t.header = {"t_scaled", "t_ns", "M"};
                    for (std::size_t i = 0; i < es.times.size(); ++i)
                        t.rows.push_back({format_number(es.times[i]), format_number(units::to_ns(es.times[i])),
                                          format_number(es.echo[i])});
                    write_output(session.dir(), fmt::format("echo_J{}_r{}.csv", format_jx(jx), seed), to_csv(t),
                                 report);
                }));
            }

        if (which.variance) {
            const std::string id = fmt::format("variance.r{}", seed);
            const auto mem = cfg.memory;
            const auto grid = cfg.jx;
            const auto base = cfg.bath;
            const std::size_t n_cut = cfg.n_cut;
            const std::string fp = fmt::format("{}|{}|{}|{}|{}|{}|{}", kCodeVersion, fingerprint_of(base),
                                               fmt::join(grid, ","), n_cut, mem.t_max, mem.samples, seed);
            jobs.push_back(make_job(session, id, fp, std::to_string(seed), [=, &session](JobReport& report) {
                const auto times = uniform_times(mem.t_max, mem.samples);
                CsvTable var;
                var.header = {"J_x", "kind", "avg", "variance"};
                for (double jx : grid) {
                    BathParams bath = base;
                    bath.jx = jx;
                    const FlawRealization fr = sample_flaws(seed, bath);
                    const OperatorSum hb = build_bath_hamiltonian(fr);
                    const EigenSolution es = eigendecompose_bath(hb, fr.n_bath, std::size_t{1} << fr.n_bath);
                    for (CouplingKind kind : {CouplingKind::XX, CouplingKind::ZZ}) {
                        BathStatistics bs;
                        try {
                            bs = bath_statistics(fr, kind, es, bath.kT, n_cut, times);
                        } catch (const NormalizationError& e) {
                            // Zero variance: averages are still meaningful.
                            const ThermalEnsemble ens = thermal_ensemble(es, bath.kT, n_cut);
                            const CouplingSpec c = build_coupling(kind, fr);
                            bs.average = canonical_average(c.bath, ens, fr.n_bath);
                            bs.variance = canonical_variance(c.bath, ens, fr.n_bath);
                            report.warnings.push_back(fmt::format("J_x={} {}: {}", format_number(jx),
                                                                  to_string(kind), e.what()));
                        }
                        if (bs.variance.clamped)
                            report.warnings.push_back(fmt::format("J_x={} {}: variance {} clamped to 0",
                                                                  format_number(jx), to_string(kind),
                                                                  format_number(bs.variance.raw)));
                        var.rows.push_back({format_number(jx), std::string(to_string(kind)),
                                            format_number(bs.average), format_number(bs.variance.value)});
                        if (bs.memory.empty()) continue;
                        CsvTable m;
                        m.header = {"t", "W", "C_times_W"};
                        for (std::size_t i = 0; i < times.size(); ++i)
                            m.rows.push_back({format_number(times[i]), format_number(bs.memory[i]),
                                              format_number(bs.variance.value * bs.memory[i])});
                        write_output(session.dir(),
                                     fmt::format("memory_{}_J{}_r{}.csv", to_string(kind), format_jx(jx), seed),
                                     to_csv(m), report);
                    }
                }
                write_output(session.dir(), fmt::format("variance_r{}.csv", seed), to_csv(var), report);
            }));
        }
    }

    CampaignReport out;
    out.jobs = run_jobs(jobs, cfg.workers);
    session.finish();
    return out;
}

CampaignReport run_rabi_detector(const CampaignConfig& cfg, int n_register) {
    cfg.validate();
    if (n_register != 1 && n_register != 2) throw ConfigError("Rabi register must have 1 or 2 qubits");
    Session session(cfg, fmt::format("rabi{}", n_register));
    std::vector<std::function<JobReport()>> jobs;
    const std::uint64_t seed = cfg.seeds.front();
    for (double jx : cfg.rabi_jx()) {
        RabiSetup setup;
        setup.n_register = n_register;
        setup.bz = cfg.control.bz;
        setup.bath = bath_at(cfg, jx);
        setup.n_cut = cfg.n_cut;
        setup.integrator = cfg.integrator;
        setup.duration = cfg.rabi.duration;
        setup.samples = cfg.rabi.samples;
        const std::string id = fmt::format("rabi{}.J{}.r{}", n_register, format_jx(jx), seed);
        const std::string fp =
            fmt::format("{}|{}|{}|{}|{}|{}|{}|{}|{}", kCodeVersion, n_register, setup.bz, fingerprint_of(setup.bath),
                        fingerprint_of(setup.integrator), setup.n_cut, setup.duration, setup.samples, seed);
        jobs.push_back(make_job(session, id, fp, std::to_string(seed), [=, &session](JobReport& report) {
            const FlawRealization fr = sample_flaws(seed, setup.bath);
            const GateMetrics m = simulate_rabi(fr, setup);
            write_output(session.dir(), rabi_file_name(n_register, jx, seed), metrics_csv(m), report);
        }));
    }
    CampaignReport out;
    out.jobs = run_jobs(jobs, cfg.workers);
    session.finish();
    return out;
}

}  // namespace qcflaw
