#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "dense_oracle.hpp"
#include "qcflaw/campaign.hpp"
#include "qcflaw/config.hpp"
#include "qcflaw/error.hpp"
#include "qcflaw/io.hpp"
#include "qcflaw/plot.hpp"
#include "qcflaw/units.hpp"

using namespace qcflaw;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("qcflaw_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// A campaign small enough to run in seconds: six bath qubits, one seed.
CampaignConfig small_config(const fs::path& out) {
    CampaignConfig cfg;
    cfg.bath.n_bath = 6;
    cfg.n_cut = 6;
    cfg.kinds = {CouplingKind::XX, CouplingKind::ZZ};
    cfg.jx = {0.05, 1.0};
    cfg.chaos_jx = {0.0, 1.0};
    cfg.states = {1, 4};
    cfg.seeds = {3};
    cfg.samples = 60;
    cfg.spectral.levels = 60;
    cfg.echo = {20.0, 40};
    cfg.memory = {10.0, 50};
    cfg.rabi = {20.0, 40, {}};
    cfg.output = out;
    return cfg;
}

std::map<std::string, std::string> digests_of(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".csv") out[e.path().filename().string()] = sha256_file(e.path());
    return out;
}

}  // namespace

TEST(Config, DefaultsMatchTheExperimentGrid) {
    const CampaignConfig cfg;
    EXPECT_EQ(cfg.jx, (std::vector<double>{0.05, 0.25, 0.50, 1.00, 2.00}));
    EXPECT_EQ(cfg.chaos_jx.size(), 6u);
    EXPECT_EQ(cfg.states.size(), 8u);
    EXPECT_EQ(cfg.seeds.size(), 10u);
    EXPECT_EQ(cfg.n_cut, 20u);
    EXPECT_EQ(cfg.samples, 600u);
    EXPECT_NO_THROW(cfg.validate());
}

TEST(Config, ParsesSectionsAndLists) {
    std::istringstream is(R"(# comment
[bath]
n_bath = 8
kT = 0.5
[grid]
kinds = zz
jx = 0.1, 0.2
states = 0,7
seeds = 11, 12
[integrator]
rtol = 1e-9
[output]
dir = somewhere
)");
    const CampaignConfig cfg = parse_config(is, "test.cfg");
    EXPECT_EQ(cfg.bath.n_bath, 8);
    EXPECT_EQ(cfg.bath.kT, 0.5);
    EXPECT_EQ(cfg.kinds, std::vector<CouplingKind>{CouplingKind::ZZ});
    EXPECT_EQ(cfg.jx, (std::vector<double>{0.1, 0.2}));
    EXPECT_EQ(cfg.states, (std::vector<int>{0, 7}));
    EXPECT_EQ(cfg.seeds, (std::vector<std::uint64_t>{11, 12}));
    EXPECT_EQ(cfg.integrator.rtol, 1e-9);
    EXPECT_EQ(cfg.output, fs::path("somewhere"));
}

TEST(Config, RoundTrips) {
    CampaignConfig cfg = small_config("x");
    cfg.rabi.jx = {0.3, 0.7};
    cfg.integrator.rtol = 3.3e-11;
    std::stringstream ss;
    write_config(ss, cfg);
    const CampaignConfig back = parse_config(ss);
    std::stringstream again;
    write_config(again, back);
    EXPECT_EQ(ss.str(), again.str());
    EXPECT_EQ(back.integrator.rtol, 3.3e-11);
    EXPECT_EQ(back.rabi.jx, cfg.rabi.jx);
}

TEST(Config, ErrorsNameTheLine) {
    auto fails = [](const std::string& text, const std::string& fragment) {
        std::istringstream is(text);
        try {
            parse_config(is, "bad.cfg");
        } catch (const ConfigError& e) {
            EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
            return;
        }
        ADD_FAILURE() << "accepted: " << text;
    };
    fails("[bath]\nnbath = 3\n", "bad.cfg:2");
    fails("[nowhere]\n", "bad.cfg:1");
    fails("[grid]\nseeds = 1, 1\n", "distinct");
    fails("[grid]\nstates = 9\n", "state");
    fails("[bath]\nkT = 0\n", "temperature");
    fails("[grid]\njx = 0.1\njx = 0.2\n", "bad.cfg:3");
    fails("kinds = xx\n", "bad.cfg:1");
    fails("[grid]\nkinds = xy\n", "bad.cfg:2");
}

TEST(Config, JxLabels) {
    EXPECT_EQ(format_jx(0.05), "0.05");
    EXPECT_EQ(format_jx(1.0), "1.00");
    EXPECT_EQ(format_jx(0.15), "0.15");
}

TEST(Io, CsvRoundTripAndErrors) {
    CsvTable t;
    t.header = {"a", "b"};
    t.rows = {{"1", "2.5"}, {"nan", "-inf"}};
    const CsvTable back = parse_csv(to_csv(t), "mem");
    EXPECT_EQ(back.header, t.header);
    EXPECT_EQ(back.numbers("b")[0], 2.5);
    EXPECT_TRUE(std::isnan(back.numbers("a")[1]));
    EXPECT_THROW(back.column("c"), ParseError);

    try {
        parse_csv("a,b\n1,2\n3\n", "f.csv");
        ADD_FAILURE();
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("f.csv:3"), std::string::npos);
    }
    EXPECT_THROW(parse_csv("", "empty.csv"), ParseError);
    EXPECT_THROW(parse_csv("a,b\n", "header_only.csv"), ParseError);
    EXPECT_THROW(parse_csv("a\nx\n", "m.csv").numbers("a"), ParseError);
}

TEST(Io, Sha256KnownVector) {
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Io, ManifestRoundTrip) {
    Manifest m;
    m.set("b.key", "two");
    m.set("a.key", "one\nline");
    const Manifest back = Manifest::parse(m.serialize(), "m");
    EXPECT_EQ(back.get("b.key"), "two");
    EXPECT_EQ(back.get("a.key"), "one line");
    EXPECT_EQ(back.get_or("c", "x"), "x");
    EXPECT_THROW(Manifest::parse("novalue\n", "m"), ParseError);
}

TEST(Campaign, NoCouplingGivesIdealGate) {
    GateSetup setup;
    setup.bath.n_bath = 4;
    setup.bath.lambda = 0.0;
    setup.bath.jx = 1.0;
    setup.n_cut = 5;
    const FlawRealization fr = sample_flaws(2, setup.bath);
    const GateSimulation sim = simulate_gate(fr, setup);
    EXPECT_EQ(sim.times.size(), sample_grid(build_pulse_schedule(setup.control), 600).size());
    for (int s = 0; s < kRegisterStateCount; ++s)
        for (std::size_t i = 0; i < sim.times.size(); ++i) {
            EXPECT_NEAR(sim.purity[s][i], 1.0, 1e-9);
            EXPECT_NEAR(sim.fidelity[s][i], 1.0, 1e-9);
        }
}

TEST(Campaign, GateMatchesDenseDensityMatrix) {
    GateSetup setup;
    setup.bath.n_bath = 2;
    setup.bath.jx = 1.0;
    setup.bath.lambda = 0.3;
    setup.bath.kT = 0.5;
    setup.n_cut = 4;
    setup.samples = 40;
    const FlawRealization fr = sample_flaws(5, setup.bath);
    for (CouplingKind kind : {CouplingKind::XX, CouplingKind::ZZ}) {
        setup.kind = kind;
        const GateSimulation sim = simulate_gate(fr, setup);
        // Full Gibbs state of the bath: n_cut equals the bath dimension.
        const oracle::Mat hb = oracle::bath_hamiltonian(fr, 2, 1);
        oracle::Mat gibbs = oracle::expm_hermitian(hb, 0.0);
        {
            Eigen::SelfAdjointEigenSolver<oracle::Mat> es(hb);
            const Eigen::VectorXd w = (-(es.eigenvalues().array() - es.eigenvalues()(0)) / 0.5).exp();
            gibbs = es.eigenvectors() * (w / w.sum()).cast<Complex>().asDiagonal() * es.eigenvectors().adjoint();
        }
        const oracle::Mat stat = oracle::bath_hamiltonian(fr, 4, 3) + oracle::coupling(fr, kind, 4);
        const auto pulses = oracle::cnot_pulses(setup.control, 4);
        const auto ideal_pulses = oracle::cnot_pulses(setup.control, 2);
        const auto states = register_initial_states();
        for (std::size_t i = 0; i < sim.times.size(); i += 7) {
            const oracle::Mat u = oracle::schedule_propagator(pulses, stat, sim.times[i]);
            const oracle::Mat u0 = oracle::schedule_propagator(ideal_pulses, oracle::Mat::Zero(4, 4), sim.times[i]);
            for (int s = 0; s < kRegisterStateCount; ++s) {
                const StateVector a = states[static_cast<std::size_t>(s)];
                const oracle::Mat rho = oracle::trace_out(u * oracle::kron(a * a.adjoint(), gibbs) * u.adjoint(), 2);
                const StateVector target = u0 * a;
                EXPECT_NEAR(sim.purity[s][i], (rho * rho).trace().real(), 1e-8);
                EXPECT_NEAR(sim.fidelity[s][i], target.dot(rho * target).real(), 1e-8);
            }
        }
    }
}

TEST(Campaign, RabiWithoutCouplingIsFlat) {
    RabiSetup setup;
    setup.bath.n_bath = 3;
    setup.bath.lambda = 0.0;
    setup.n_cut = 4;
    setup.duration = 30.0;
    setup.samples = 30;
    const FlawRealization fr = sample_flaws(1, setup.bath);
    for (int nr : {1, 2}) {
        setup.n_register = nr;
        const GateMetrics m = simulate_rabi(fr, setup);
        ASSERT_EQ(m.times.size(), 31u);
        for (std::size_t i = 0; i < m.times.size(); ++i) {
            EXPECT_NEAR(m.fidelity[i], 1.0, 1e-9);
            EXPECT_NEAR(m.purity[i], 1.0, 1e-9);
        }
    }
}

TEST(Campaign, EchoFlatWithoutBathCouplings) {
    BathParams p;
    p.n_bath = 4;
    p.jx = 0.0;
    const auto es = echo_series(sample_flaws(1, p), 10.0, 20, IntegratorConfig{});
    for (double m : es.echo) EXPECT_EQ(m, 1.0);
}

TEST(Campaign, GateCampaignWritesResumableOutputs) {
    const fs::path dir = scratch("gate");
    CampaignConfig cfg = small_config(dir);
    const CampaignReport first = run_gate_campaign(cfg);
    EXPECT_EQ(first.jobs.size(), 4u);
    EXPECT_EQ(first.failures(), 0u);
    EXPECT_EQ(first.skipped(), 0u);

    const Manifest m = Manifest::load(dir / "manifest.txt");
    std::size_t entries = 0;
    for (CouplingKind kind : cfg.kinds)
        for (double jx : cfg.jx)
            for (int s : cfg.states) {
                const std::string name = gate_file_name(kind, jx, s, 3);
                ASSERT_TRUE(fs::exists(dir / name)) << name;
                EXPECT_TRUE(m.file_intact(dir, name));
                EXPECT_EQ(m.get("gate." + name.substr(5, name.size() - 9)), "ok");
                ++entries;
            }
    EXPECT_EQ(entries, 8u);
    EXPECT_EQ(m.get("code.version"), kCodeVersion);
    EXPECT_TRUE(m.has("units.time_ns"));

    const CsvTable t = read_csv(dir / gate_file_name(CouplingKind::XX, 0.05, 1, 3));
    EXPECT_EQ(t.header, (std::vector<std::string>{"t_scaled", "t_ns", "purity", "fidelity"}));
    const auto ts = t.numbers("t_scaled");
    const auto tn = t.numbers("t_ns");
    EXPECT_NEAR(tn.back(), ts.back() * units::kTimeUnitNs, 1e-12);
    EXPECT_NEAR(t.numbers("purity").front(), 1.0, 1e-9);

    const auto before = digests_of(dir);
    const CampaignReport second = run_gate_campaign(cfg);
    EXPECT_EQ(second.skipped(), 4u);
    EXPECT_EQ(digests_of(dir), before);

    // A damaged output is recomputed and comes back byte-identical.
    const fs::path victim = dir / gate_file_name(CouplingKind::ZZ, 1.0, 4, 3);
    std::ofstream(victim) << "garbage";
    const CampaignReport third = run_gate_campaign(cfg);
    EXPECT_EQ(third.skipped(), 3u);
    EXPECT_EQ(digests_of(dir), before);
}

TEST(Campaign, WorkersDoNotChangeResults) {
    const fs::path a = scratch("serial"), b = scratch("parallel");
    CampaignConfig cfg = small_config(a);
    cfg.states = {0};
    run_gate_campaign(cfg);
    cfg.output = b;
    cfg.workers = 3;
    run_gate_campaign(cfg);
    EXPECT_EQ(digests_of(a), digests_of(b));
}

TEST(Campaign, FailedPointDoesNotAbortCampaign) {
    const fs::path dir = scratch("fail");
    CampaignConfig cfg = small_config(dir);
    cfg.states = {0};
    cfg.integrator.max_norm_drift = 1e-300;  // every run trips the drift guard
    cfg.integrator.rtol = 1e-3;
    cfg.integrator.atol = 1e-3;
    const CampaignReport r = run_gate_campaign(cfg);
    EXPECT_EQ(r.failures(), r.jobs.size());
    const Manifest m = Manifest::load(dir / "manifest.txt");
    EXPECT_EQ(m.get("gate.xx_J0.05_s0_r3"), "failed");
    EXPECT_FALSE(fs::exists(dir / gate_file_name(CouplingKind::XX, 0.05, 0, 3)));
}

TEST(Campaign, ChaosAnalysesAndPlots) {
    const fs::path dir = scratch("chaos");
    CampaignConfig cfg = small_config(dir);
    const CampaignReport r = run_chaos_analyses(cfg, {true, true, true});
    EXPECT_EQ(r.failures(), 0u);
    EXPECT_TRUE(fs::exists(dir / "levels_J1.00_r3.csv"));
    EXPECT_TRUE(fs::exists(dir / "levels_J1.00_r3.summary.txt"));
    EXPECT_TRUE(fs::exists(dir / "variance_r3.csv"));
    EXPECT_TRUE(fs::exists(dir / "memory_zz_J1.00_r3.csv"));

    const CsvTable echo0 = read_csv(dir / "echo_J0.00_r3.csv");
    for (double m : echo0.numbers("M")) EXPECT_EQ(m, 1.0);

    const CsvTable var = read_csv(dir / "variance_r3.csv");
    EXPECT_EQ(var.rows.size(), 4u);
    for (double c : var.numbers("variance")) EXPECT_GE(c, 0.0);

    const CsvTable mem = read_csv(dir / "memory_xx_J0.05_r3.csv");
    EXPECT_NEAR(mem.numbers("W").front(), 1.0, 1e-10);

    const CampaignReport rabi = run_rabi_detector(cfg, 2);
    EXPECT_EQ(rabi.failures(), 0u);
    EXPECT_TRUE(fs::exists(dir / rabi_file_name(2, 1.0, 3)));

    const PlotReport plots = emit_plots(dir, cfg);
    EXPECT_TRUE(plots.errors.empty());
    EXPECT_TRUE(fs::exists(dir / "plots" / "levels_J1.00_r3.svg"));
    EXPECT_TRUE(fs::exists(dir / "plots" / "fig_echo_r3.svg"));
    EXPECT_TRUE(fs::exists(dir / "plots" / "fig_rabi2_r3.svg"));
}

TEST(Plot, GateFigureHasSwitchingMarksAndBothAxes) {
    const fs::path dir = scratch("plot");
    CsvTable t;
    t.header = {"t_scaled", "t_ns", "purity", "fidelity"};
    for (int i = 0; i <= 10; ++i) {
        const double x = 3.0 * i;
        t.rows.push_back({format_number(x), format_number(units::to_ns(x)), format_number(1 - 0.001 * i),
                          format_number(1 - 0.05 * i)});
    }
    write_file_atomic(dir / "g.csv", to_csv(t));
    const auto tau = build_pulse_schedule(ControlParams{}).switching_times();
    plot_gate_csv(dir / "g.csv", dir / "g.svg", tau);
    const std::string svg = read_file(dir / "g.svg");
    EXPECT_EQ(svg.rfind("<svg", 0), 0u);
    EXPECT_NE(svg.find(">ns<"), std::string::npos);
    std::size_t dashes = 0;
    for (std::size_t p = svg.find("stroke-dasharray"); p != std::string::npos; p = svg.find("stroke-dasharray", p + 1))
        ++dashes;
    EXPECT_EQ(dashes, 2 * tau.size());  // both panels

    plot_gate_csv(dir / "g.csv", dir / "g2.svg", tau);
    EXPECT_EQ(read_file(dir / "g2.svg"), svg);
}

TEST(Plot, SpacingHistogramHasReferenceCurves) {
    const fs::path dir = scratch("levels");
    CsvTable t;
    t.header = {"index", "energy", "unfolded_energy", "spacing"};
    double e = 0.0;
    for (int i = 0; i < 100; ++i) {
        const double s = 0.5 + 0.01 * i;
        t.rows.push_back({std::to_string(i), format_number(e), format_number(e), i == 99 ? "nan" : format_number(s)});
        e += s;
    }
    write_file_atomic(dir / "l.csv", to_csv(t));
    plot_levels_csv(dir / "l.csv", dir / "l.svg");
    const std::string svg = read_file(dir / "l.svg");
    EXPECT_NE(svg.find("exp(-s)"), std::string::npos);
    EXPECT_NE(svg.find("Wigner-Dyson"), std::string::npos);
}

TEST(Plot, MalformedCsvWritesNothing) {
    const fs::path dir = scratch("badplot");
    write_file_atomic(dir / "empty.csv", "");
    EXPECT_THROW(plot_echo_csv(dir / "empty.csv", dir / "empty.svg"), ParseError);
    EXPECT_FALSE(fs::exists(dir / "empty.svg"));
    write_file_atomic(dir / "ragged.csv", "t_scaled,t_ns,M\n0,0,1\n1,2\n");
    try {
        plot_echo_csv(dir / "ragged.csv", dir / "ragged.svg");
        ADD_FAILURE();
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("ragged.csv:3"), std::string::npos);
    }
    EXPECT_FALSE(fs::exists(dir / "ragged.svg"));
}
