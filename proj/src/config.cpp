#include "qcflaw/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "qcflaw/error.hpp"

namespace qcflaw {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream is(text);
    while (std::getline(is, item, ',')) {
        item = trim(item);
        if (item.empty()) throw ConfigError("empty element in list '" + text + "'");
        out.push_back(item);
    }
    if (out.empty()) throw ConfigError("empty list");
    return out;
}

double parse_double(const std::string& text) {
    double v = 0.0;
    const auto* end = text.data() + text.size();
    const auto r = std::from_chars(text.data(), end, v);
    if (r.ec != std::errc() || r.ptr != end || !std::isfinite(v)) throw ConfigError("not a number: '" + text + "'");
    return v;
}

std::uint64_t parse_u64(const std::string& text) {
    std::uint64_t v = 0;
    const auto* end = text.data() + text.size();
    const auto r = std::from_chars(text.data(), end, v);
    if (r.ec != std::errc() || r.ptr != end) throw ConfigError("not a nonnegative integer: '" + text + "'");
    return v;
}

std::size_t parse_count(const std::string& text) { return static_cast<std::size_t>(parse_u64(text)); }

bool parse_bool(const std::string& text) {
    if (text == "true" || text == "on" || text == "yes" || text == "1") return true;
    if (text == "false" || text == "off" || text == "no" || text == "0") return false;
    throw ConfigError("not a boolean: '" + text + "'");
}

template <typename T>
std::string join(const std::vector<T>& v, auto&& fmt_one) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ", ";
        out += fmt_one(v[i]);
    }
    return out;
}

std::string num(double v) { return fmt::format("{}", v); }

using Setter = std::function<void(CampaignConfig&, const std::string&)>;

const std::map<std::string, std::map<std::string, Setter>>& setters() {
    static const std::map<std::string, std::map<std::string, Setter>> table = {
        {"control",
         {
             {"bx", [](CampaignConfig& c, const std::string& v) { c.control.bx = parse_double(v); }},
             {"bz", [](CampaignConfig& c, const std::string& v) { c.control.bz = parse_double(v); }},
             {"jx", [](CampaignConfig& c, const std::string& v) { c.control.jx = parse_double(v); }},
         }},
        {"bath",
         {
             {"n_bath", [](CampaignConfig& c, const std::string& v) { c.bath.n_bath = static_cast<int>(parse_u64(v)); }},
             {"b0x", [](CampaignConfig& c, const std::string& v) { c.bath.b0x = parse_double(v); }},
             {"b0z", [](CampaignConfig& c, const std::string& v) { c.bath.b0z = parse_double(v); }},
             {"delta", [](CampaignConfig& c, const std::string& v) { c.bath.delta = parse_double(v); }},
             {"lambda", [](CampaignConfig& c, const std::string& v) { c.bath.lambda = parse_double(v); }},
             {"kT", [](CampaignConfig& c, const std::string& v) { c.bath.kT = parse_double(v); }},
             {"n_cut", [](CampaignConfig& c, const std::string& v) { c.n_cut = parse_count(v); }},
         }},
        {"grid",
         {
             {"kinds", [](CampaignConfig& c, const std::string& v) { c.kinds = parse_kind_list(v); }},
             {"jx", [](CampaignConfig& c, const std::string& v) { c.jx = parse_double_list(v); }},
             {"states", [](CampaignConfig& c, const std::string& v) { c.states = parse_state_list(v); }},
             {"seeds", [](CampaignConfig& c, const std::string& v) { c.seeds = parse_seed_list(v); }},
             {"chaos_jx", [](CampaignConfig& c, const std::string& v) { c.chaos_jx = parse_double_list(v); }},
         }},
        {"integrator",
         {
             {"rtol", [](CampaignConfig& c, const std::string& v) { c.integrator.rtol = parse_double(v); }},
             {"atol", [](CampaignConfig& c, const std::string& v) { c.integrator.atol = parse_double(v); }},
             {"initial_step",
              [](CampaignConfig& c, const std::string& v) { c.integrator.initial_step = parse_double(v); }},
             {"max_step", [](CampaignConfig& c, const std::string& v) { c.integrator.max_step = parse_double(v); }},
             {"max_norm_drift",
              [](CampaignConfig& c, const std::string& v) { c.integrator.max_norm_drift = parse_double(v); }},
             {"samples", [](CampaignConfig& c, const std::string& v) { c.samples = parse_count(v); }},
         }},
        {"analyses",
         {
             {"gate", [](CampaignConfig& c, const std::string& v) { c.analyses.gate = parse_bool(v); }},
             {"levelstats", [](CampaignConfig& c, const std::string& v) { c.analyses.levelstats = parse_bool(v); }},
             {"echo", [](CampaignConfig& c, const std::string& v) { c.analyses.echo = parse_bool(v); }},
             {"variance", [](CampaignConfig& c, const std::string& v) { c.analyses.variance = parse_bool(v); }},
             {"rabi2", [](CampaignConfig& c, const std::string& v) { c.analyses.rabi2 = parse_bool(v); }},
             {"rabi1", [](CampaignConfig& c, const std::string& v) { c.analyses.rabi1 = parse_bool(v); }},
         }},
        {"spectral",
         {
             {"levels", [](CampaignConfig& c, const std::string& v) { c.spectral.levels = parse_count(v); }},
             {"degree", [](CampaignConfig& c, const std::string& v) { c.spectral.degree = static_cast<int>(parse_u64(v)); }},
             {"bins", [](CampaignConfig& c, const std::string& v) { c.spectral.bins = parse_count(v); }},
             {"s_max", [](CampaignConfig& c, const std::string& v) { c.spectral.s_max = parse_double(v); }},
         }},
        {"echo",
         {
             {"t_max", [](CampaignConfig& c, const std::string& v) { c.echo.t_max = parse_double(v); }},
             {"samples", [](CampaignConfig& c, const std::string& v) { c.echo.samples = parse_count(v); }},
         }},
        {"memory",
         {
             {"t_max", [](CampaignConfig& c, const std::string& v) { c.memory.t_max = parse_double(v); }},
             {"samples", [](CampaignConfig& c, const std::string& v) { c.memory.samples = parse_count(v); }},
         }},
        {"rabi",
         {
             {"duration", [](CampaignConfig& c, const std::string& v) { c.rabi.duration = parse_double(v); }},
             {"samples", [](CampaignConfig& c, const std::string& v) { c.rabi.samples = parse_count(v); }},
             {"jx", [](CampaignConfig& c, const std::string& v) { c.rabi.jx = parse_double_list(v); }},
         }},
        {"output",
         {
             {"dir", [](CampaignConfig& c, const std::string& v) { c.output = v; }},
         }},
        {"run",
         {
             {"workers", [](CampaignConfig& c, const std::string& v) { c.workers = static_cast<unsigned>(parse_u64(v)); }},
         }},
    };
    return table;
}

}  // namespace

void CampaignConfig::validate() const {
    control.validate();
    bath.validate();
    integrator.validate();
    if (n_cut == 0) throw ConfigError("n_cut must be positive");
    if (bath.n_bath < 1 || bath.n_bath > 20) throw ConfigError("n_bath must lie in [1, 20]");
    if (n_cut > (std::size_t{1} << bath.n_bath)) throw ConfigError("n_cut exceeds the bath dimension");
    if (kinds.empty() || jx.empty() || states.empty() || seeds.empty()) throw ConfigError("experiment grid is empty");
    if (std::set(seeds.begin(), seeds.end()).size() != seeds.size()) throw ConfigError("seeds must be distinct");
    if (std::set(kinds.begin(), kinds.end()).size() != kinds.size()) throw ConfigError("coupling kinds repeat");
    for (int s : states)
        if (s < 0 || s >= kRegisterStateCount) throw ConfigError("initial state id out of range: " + std::to_string(s));
    for (double j : jx)
        if (!(j >= 0)) throw ConfigError("J_x values must be nonnegative");
    for (double j : chaos_jx)
        if (!(j >= 0)) throw ConfigError("J_x values must be nonnegative");
    for (double j : rabi.jx)
        if (!(j >= 0)) throw ConfigError("J_x values must be nonnegative");
    if (samples == 0) throw ConfigError("sample count must be positive");
    if (spectral.levels < 50) throw ConfigError("level statistics need at least 50 levels");
    if (spectral.levels > (std::size_t{1} << bath.n_bath)) throw ConfigError("more levels requested than exist");
    if (spectral.degree < 1) throw ConfigError("unfolding degree must be at least 1");
    if (spectral.bins == 0 || !(spectral.s_max > 0)) throw ConfigError("histogram needs bins and a positive range");
    if (!(echo.t_max > 0) || echo.samples == 0) throw ConfigError("echo window must be positive");
    if (!(memory.t_max > 0) || memory.samples == 0) throw ConfigError("memory window must be positive");
    if (!(rabi.duration > 0) || rabi.samples == 0) throw ConfigError("Rabi duration must be positive");
    if (output.empty()) throw ConfigError("output directory is empty");
    if (workers == 0) throw ConfigError("need at least one worker");
}

CampaignConfig parse_config(std::istream& is, const std::string& source) {
    CampaignConfig cfg;
    std::string line;
    std::string section;
    std::size_t lineno = 0;
    std::set<std::string> seen;
    while (std::getline(is, line)) {
        ++lineno;
        const std::string where = source + ":" + std::to_string(lineno) + ": ";
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (t.front() == '[') {
            if (t.back() != ']') throw ConfigError(where + "unterminated section header");
            section = trim(std::string_view(t).substr(1, t.size() - 2));
            if (!setters().contains(section)) throw ConfigError(where + "unknown section [" + section + "]");
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
        const std::string key = trim(std::string_view(t).substr(0, eq));
        const std::string value = trim(std::string_view(t).substr(eq + 1));
        if (section.empty()) throw ConfigError(where + "entry outside any section");
        const auto& keys = setters().at(section);
        const auto it = keys.find(key);
        if (it == keys.end()) throw ConfigError(where + "unknown key '" + key + "' in [" + section + "]");
        if (!seen.insert(section + "." + key).second) throw ConfigError(where + "duplicate key '" + key + "'");
        try {
            it->second(cfg, value);
        } catch (const Error& e) {
            throw ConfigError(where + e.what());
        }
    }
    cfg.validate();
    return cfg;
}

CampaignConfig load_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file " + path.string());
    return parse_config(is, path.string());
}

void write_config(std::ostream& os, const CampaignConfig& c) {
    auto b = [](bool v) { return v ? "true" : "false"; };
    os << "[control]\n"
       << "bx = " << num(c.control.bx) << "\n"
       << "bz = " << num(c.control.bz) << "\n"
       << "jx = " << num(c.control.jx) << "\n\n";
    os << "[bath]\n"
       << "n_bath = " << c.bath.n_bath << "\n"
       << "b0x = " << num(c.bath.b0x) << "\n"
       << "b0z = " << num(c.bath.b0z) << "\n"
       << "delta = " << num(c.bath.delta) << "\n"
       << "lambda = " << num(c.bath.lambda) << "\n"
       << "kT = " << num(c.bath.kT) << "\n"
       << "n_cut = " << c.n_cut << "\n\n";
    os << "[grid]\n"
       << "kinds = " << join(c.kinds, [](CouplingKind k) { return std::string(to_string(k)); }) << "\n"
       << "jx = " << join(c.jx, num) << "\n"
       << "states = " << join(c.states, [](int s) { return std::to_string(s); }) << "\n"
       << "seeds = " << join(c.seeds, [](std::uint64_t s) { return std::to_string(s); }) << "\n"
       << "chaos_jx = " << join(c.chaos_jx, num) << "\n\n";
    os << "[integrator]\n"
       << "rtol = " << num(c.integrator.rtol) << "\n"
       << "atol = " << num(c.integrator.atol) << "\n"
       << "initial_step = " << num(c.integrator.initial_step) << "\n"
       << "max_step = " << num(c.integrator.max_step) << "\n"
       << "max_norm_drift = " << num(c.integrator.max_norm_drift) << "\n"
       << "samples = " << c.samples << "\n\n";
    os << "[analyses]\n"
       << "gate = " << b(c.analyses.gate) << "\n"
       << "levelstats = " << b(c.analyses.levelstats) << "\n"
       << "echo = " << b(c.analyses.echo) << "\n"
       << "variance = " << b(c.analyses.variance) << "\n"
       << "rabi2 = " << b(c.analyses.rabi2) << "\n"
       << "rabi1 = " << b(c.analyses.rabi1) << "\n\n";
    os << "[spectral]\n"
       << "levels = " << c.spectral.levels << "\n"
       << "degree = " << c.spectral.degree << "\n"
       << "bins = " << c.spectral.bins << "\n"
       << "s_max = " << num(c.spectral.s_max) << "\n\n";
    os << "[echo]\n"
       << "t_max = " << num(c.echo.t_max) << "\n"
       << "samples = " << c.echo.samples << "\n\n";
    os << "[memory]\n"
       << "t_max = " << num(c.memory.t_max) << "\n"
       << "samples = " << c.memory.samples << "\n\n";
    os << "[rabi]\n"
       << "duration = " << num(c.rabi.duration) << "\n"
       << "samples = " << c.rabi.samples << "\n";
    if (!c.rabi.jx.empty()) os << "jx = " << join(c.rabi.jx, num) << "\n";
    os << "\n[output]\n"
       << "dir = " << c.output.string() << "\n\n";
    os << "[run]\n"
       << "workers = " << c.workers << "\n";
}

std::vector<double> parse_double_list(const std::string& text) {
    std::vector<double> out;
    for (const auto& item : split_list(text)) out.push_back(parse_double(item));
    return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
    std::vector<std::uint64_t> out;
    for (const auto& item : split_list(text)) out.push_back(parse_u64(item));
    return out;
}

std::vector<int> parse_state_list(const std::string& text) {
    std::vector<int> out;
    for (const auto& item : split_list(text)) {
        const auto v = parse_u64(item);
        if (v >= static_cast<std::uint64_t>(kRegisterStateCount))
            throw ConfigError("initial state id out of range: " + item);
        out.push_back(static_cast<int>(v));
    }
    return out;
}

std::vector<CouplingKind> parse_kind_list(const std::string& text) {
    std::vector<CouplingKind> out;
    for (const auto& item : split_list(text)) out.push_back(parse_coupling_kind(item));
    return out;
}

std::string format_jx(double jx) {
    const std::string fixed = fmt::format("{:.2f}", jx);
    if (parse_double(fixed) == jx) return fixed;
    return fmt::format("{}", jx);
}

}  // namespace qcflaw
