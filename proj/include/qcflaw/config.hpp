#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "qcflaw/model.hpp"
#include "qcflaw/propagate.hpp"

namespace qcflaw {

struct AnalysisToggles {
    bool gate = true;
    bool levelstats = true;
    bool echo = true;
    bool variance = true;
    bool rabi2 = true;
    bool rabi1 = false;
};

struct SpectralConfig {
    std::size_t levels = 200;
    int degree = 7;
    std::size_t bins = 20;
    double s_max = 4.0;
};

struct EchoConfig {
    double t_max = 200.0;
    std::size_t samples = 2000;
};

struct MemoryConfig {
    double t_max = 40.0;
    std::size_t samples = 800;
};

struct RabiConfig {
    double duration = 800.0;
    std::size_t samples = 1600;
    std::vector<double> jx;  // empty: use the gate grid
};

// Everything a campaign needs. Grammar of the text form:
//
//   file    := { line }
//   line    := blank | comment | section | entry
//   comment := '#' ...
//   section := '[' name ']'
//   entry   := key '=' value        (value lists are comma separated)
//
// Keys are only valid inside their section; unknown sections or keys are
// rejected so typos never silently fall back to defaults.
struct CampaignConfig {
    ControlParams control;
    BathParams bath;
    std::size_t n_cut = 20;

    std::vector<CouplingKind> kinds = {CouplingKind::XX, CouplingKind::ZZ};
    std::vector<double> jx = {0.05, 0.25, 0.50, 1.00, 2.00};
    std::vector<int> states = {0, 1, 2, 3, 4, 5, 6, 7};
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    // Intra-bath couplings for level statistics and the echo.
    std::vector<double> chaos_jx = {0.05, 0.15, 0.25, 0.50, 1.00, 2.00};

    IntegratorConfig integrator;
    std::size_t samples = 600;  // uniform intervals over the gate

    AnalysisToggles analyses;
    SpectralConfig spectral;
    EchoConfig echo;
    MemoryConfig memory;
    RabiConfig rabi;

    std::filesystem::path output = "out";
    unsigned workers = 1;

    void validate() const;
    std::vector<double> rabi_jx() const { return rabi.jx.empty() ? jx : rabi.jx; }
};

CampaignConfig parse_config(std::istream& is, const std::string& source = "<config>");
CampaignConfig load_config(const std::filesystem::path& path);
// Writes every field in the text form; parse_config reads it back unchanged.
void write_config(std::ostream& os, const CampaignConfig& cfg);

// Comma-separated list helpers shared with the command line.
std::vector<double> parse_double_list(const std::string& text);
std::vector<std::uint64_t> parse_seed_list(const std::string& text);
std::vector<int> parse_state_list(const std::string& text);
std::vector<CouplingKind> parse_kind_list(const std::string& text);

// Compact label for file names: 0.05 -> "0.05", 1 -> "1.00".
std::string format_jx(double jx);

}  // namespace qcflaw
