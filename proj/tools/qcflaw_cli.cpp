#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "qcflaw/campaign.hpp"
#include "qcflaw/config.hpp"
#include "qcflaw/error.hpp"
#include "qcflaw/plot.hpp"

namespace {

constexpr int kExitPartial = 1;
constexpr int kExitConfig = 2;

struct Overrides {
    std::string config;
    std::string seeds;
    std::string jx;
    std::string kinds;
    std::string states;
    std::string out;
    std::optional<double> tol;
    std::optional<unsigned> workers;
    std::optional<int> qubits;
};

qcflaw::CampaignConfig build_config(const Overrides& o, bool chaos_grid) {
    qcflaw::CampaignConfig cfg = o.config.empty() ? qcflaw::CampaignConfig{} : qcflaw::load_config(o.config);
    if (!o.seeds.empty()) cfg.seeds = qcflaw::parse_seed_list(o.seeds);
    if (!o.jx.empty()) {
        cfg.jx = qcflaw::parse_double_list(o.jx);
        if (chaos_grid) cfg.chaos_jx = cfg.jx;
    }
    if (!o.kinds.empty()) cfg.kinds = qcflaw::parse_kind_list(o.kinds);
    if (!o.states.empty()) cfg.states = qcflaw::parse_state_list(o.states);
    if (!o.out.empty()) cfg.output = o.out;
    if (o.tol) {
        cfg.integrator.rtol = *o.tol;
        cfg.integrator.atol = *o.tol * 1e-2;
    }
    if (o.workers) cfg.workers = *o.workers;
    cfg.validate();
    return cfg;
}

int summarize(const qcflaw::CampaignReport& report) {
    const std::size_t failed = report.failures();
    spdlog::info("{} jobs, {} reused, {} failed", report.jobs.size(), report.skipped(), failed);
    for (const auto& job : report.jobs)
        if (!job.ok) spdlog::error("failed: {}: {}", job.id, job.error);
    return failed ? kExitPartial : 0;
}

int run_plots(const qcflaw::CampaignConfig& cfg) {
    const auto report = qcflaw::emit_plots(cfg.output, cfg);
    spdlog::info("{} figures written to {}", report.written.size(), (cfg.output / "plots").string());
    for (const auto& e : report.errors) spdlog::error("plot: {}", e);
    return report.errors.empty() ? 0 : kExitPartial;
}

qcflaw::CampaignReport run_rabi(const qcflaw::CampaignConfig& cfg, std::optional<int> qubits) {
    qcflaw::CampaignReport report;
    if (qubits) return qcflaw::run_rabi_detector(cfg, *qubits);
    if (cfg.analyses.rabi2) report += qcflaw::run_rabi_detector(cfg, 2);
    if (cfg.analyses.rabi1) report += qcflaw::run_rabi_detector(cfg, 1);
    return report;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Flawed-CNOT spin-bath simulator"};
    app.require_subcommand(1);
    app.fallthrough();

    Overrides o;
    app.add_option("--config", o.config, "Campaign configuration file")->check(CLI::ExistingFile);
    app.add_option("--seed", o.seeds, "Comma-separated realization seeds");
    app.add_option("--jx", o.jx, "Comma-separated intra-bath couplings");
    app.add_option("--kind", o.kinds, "Coupling kinds: xx, zz or xx,zz");
    app.add_option("--states", o.states, "Comma-separated initial register states (0-7)");
    app.add_option("--out", o.out, "Output directory");
    app.add_option("--tol", o.tol, "Relative integrator tolerance (absolute is 1e-2 of it)");
    app.add_option("--workers", o.workers, "Worker threads");

    auto* gate = app.add_subcommand("gate", "Purity and fidelity through the pulse sequence");
    auto* chaos = app.add_subcommand("chaos", "Level statistics, variances and memory functions");
    auto* echo = app.add_subcommand("echo", "Loschmidt echo of the bath");
    auto* rabi = app.add_subcommand("rabi", "Rabi detector runs");
    rabi->add_option("--qubits", o.qubits, "Register size (1 or 2); default follows the config")
        ->check(CLI::Range(1, 2));
    auto* plot = app.add_subcommand("plot", "Render SVG figures from an output directory");
    auto* all = app.add_subcommand("all", "Every enabled analysis followed by the figures");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    spdlog::set_pattern("[%H:%M:%S] [%^%l%$] %v");

    try {
        const bool chaos_grid = chaos->parsed() || echo->parsed();
        const qcflaw::CampaignConfig cfg = build_config(o, chaos_grid);

        if (gate->parsed()) return summarize(qcflaw::run_gate_campaign(cfg));
        if (chaos->parsed()) return summarize(qcflaw::run_chaos_analyses(cfg, {true, false, true}));
        if (echo->parsed()) return summarize(qcflaw::run_chaos_analyses(cfg, {false, true, false}));
        if (rabi->parsed()) return summarize(run_rabi(cfg, o.qubits));
        if (plot->parsed()) return run_plots(cfg);
        if (all->parsed()) {
            qcflaw::CampaignReport report;
            if (cfg.analyses.gate) report += qcflaw::run_gate_campaign(cfg);
            const qcflaw::ChaosSelection which{cfg.analyses.levelstats, cfg.analyses.echo, cfg.analyses.variance};
            if (which.levelstats || which.echo || which.variance) report += qcflaw::run_chaos_analyses(cfg, which);
            report += run_rabi(cfg, std::nullopt);
            const int code = summarize(report);
            return std::max(code, run_plots(cfg));
        }
    } catch (const qcflaw::ConfigError& e) {
        spdlog::error("configuration: {}", e.what());
        return kExitConfig;
    } catch (const qcflaw::Error& e) {
        spdlog::error("{}", e.what());
        return kExitPartial;
    }
    return 0;
}
