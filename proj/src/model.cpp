#include "qcflaw/model.hpp"

#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

#include "qcflaw/error.hpp"

namespace qcflaw {

namespace {

double unit_draw(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

void require(bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
}

}  // namespace

void ControlParams::validate() const {
    require(bx > 0 && bz > 0 && jx > 0, "control fields must be strictly positive");
}

void BathParams::validate() const {
    require(n_bath >= 1 && n_bath <= 24, "bath size must be in [1, 24]");
    require(delta >= 0, "delta must be nonnegative");
    require(jx >= 0, "bath coupling bound must be nonnegative");
    require(lambda >= 0, "system-bath coupling bound must be nonnegative");
    require(kT > 0, "temperature must be positive");
    require(std::isfinite(b0x) && std::isfinite(b0z), "mean fields must be finite");
}

std::size_t FlawRealization::pair_index(int i, int j, int n_bath) {
    // Offset of row i in the packed upper triangle plus column.
    return static_cast<std::size_t>(i) * (2 * n_bath - i - 1) / 2 + static_cast<std::size_t>(j - i - 1);
}

double FlawRealization::coupling(int i, int j) const {
    if (i == j) return 0.0;
    if (i > j) std::swap(i, j);
    return jxx.at(pair_index(i, j, n_bath));
}

FlawRealization sample_flaws(std::uint64_t seed, const BathParams& params) {
    params.validate();
    const int n = params.n_bath;
    FlawRealization fr;
    fr.seed = seed;
    fr.n_bath = n;
    std::mt19937_64 rng(seed);

    fr.bx.resize(n);
    fr.bz.resize(n);
    for (int i = 0; i < n; ++i) fr.bx[i] = params.b0x + params.delta * (unit_draw(rng) - 0.5);
    for (int i = 0; i < n; ++i) fr.bz[i] = params.b0z + params.delta * (unit_draw(rng) - 0.5);
    fr.jxx.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) fr.jxx.push_back(params.jx * (2.0 * unit_draw(rng) - 1.0));
    fr.lambda.resize(n);
    for (int i = 0; i < n; ++i) fr.lambda[i] = params.lambda * (2.0 * unit_draw(rng) - 1.0);
    return fr;
}

void FlawRealization::write(std::ostream& os) const {
    const auto old_precision = os.precision(17);
    os << "seed=" << seed << '\n' << "n_bath=" << n_bath << '\n';
    for (int i = 0; i < n_bath; ++i) os << "bx." << i + 3 << '=' << bx[i] << '\n';
    for (int i = 0; i < n_bath; ++i) os << "bz." << i + 3 << '=' << bz[i] << '\n';
    for (int i = 0; i < n_bath; ++i)
        for (int j = i + 1; j < n_bath; ++j) os << "jxx." << i + 3 << '.' << j + 3 << '=' << coupling(i, j) << '\n';
    for (int i = 0; i < n_bath; ++i) os << "lambda." << i + 3 << '=' << lambda[i] << '\n';
    os.precision(old_precision);
}

FlawRealization FlawRealization::read(std::istream& is) {
    FlawRealization fr;
    std::map<std::string, std::string> kv;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError("realization line " + std::to_string(line_no) + ": missing '='");
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    auto get = [&](const std::string& key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end()) throw ParseError("realization record lacks key '" + key + "'");
        return it->second;
    };
    auto number = [&](const std::string& key) {
        const std::string& text = get(key);
        char* end = nullptr;
        const double v = std::strtod(text.c_str(), &end);
        if (end == text.c_str() || *end != '\0') throw ParseError("bad number for '" + key + "': " + text);
        return v;
    };
    fr.seed = std::stoull(get("seed"));
    fr.n_bath = std::stoi(get("n_bath"));
    if (fr.n_bath < 1) throw ParseError("n_bath must be positive");
    const int n = fr.n_bath;
    for (int i = 0; i < n; ++i) fr.bx.push_back(number("bx." + std::to_string(i + 3)));
    for (int i = 0; i < n; ++i) fr.bz.push_back(number("bz." + std::to_string(i + 3)));
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            fr.jxx.push_back(number("jxx." + std::to_string(i + 3) + "." + std::to_string(j + 3)));
    for (int i = 0; i < n; ++i) fr.lambda.push_back(number("lambda." + std::to_string(i + 3)));
    return fr;
}

OperatorSum build_bath_fields(const FlawRealization& fr, int first_label) {
    OperatorSum h;
    for (int i = 0; i < fr.n_bath; ++i) {
        h.add(PauliString::single(Pauli::X, first_label + i, -0.5 * fr.bx[i]));
        h.add(PauliString::single(Pauli::Z, first_label + i, -0.5 * fr.bz[i]));
    }
    return h;
}

OperatorSum build_bath_pair_couplings(const FlawRealization& fr, int first_label) {
    OperatorSum h;
    for (int i = 0; i < fr.n_bath; ++i) {
        for (int j = i + 1; j < fr.n_bath; ++j) {
            const double c = fr.coupling(i, j);
            if (c == 0.0) continue;
            h.add(PauliString::single(Pauli::X, first_label + i, c).with(Pauli::X, first_label + j));
        }
    }
    return h;
}

OperatorSum build_bath_hamiltonian(const FlawRealization& fr, int first_label) {
    return build_bath_fields(fr, first_label) + build_bath_pair_couplings(fr, first_label);
}

std::string_view to_string(CouplingKind kind) { return kind == CouplingKind::XX ? "xx" : "zz"; }

CouplingKind parse_coupling_kind(std::string_view text) {
    if (text == "xx") return CouplingKind::XX;
    if (text == "zz") return CouplingKind::ZZ;
    throw ConfigError("unknown coupling kind '" + std::string(text) + "'");
}

CouplingSpec build_coupling(CouplingKind kind, const FlawRealization& fr, int n_system) {
    if (n_system < 1 || n_system > 2) throw ConfigError("register must have one or two qubits");
    const Pauli axis = kind == CouplingKind::XX ? Pauli::X : Pauli::Z;
    const int first_bath = n_system + 1;
    CouplingSpec spec;
    spec.kind = kind;
    for (int q = 1; q <= n_system; ++q) spec.system.add(PauliString::single(axis, q));
    for (int i = 0; i < fr.n_bath; ++i) {
        if (fr.lambda[i] == 0.0) continue;
        spec.bath.add(PauliString::single(axis, first_bath + i, fr.lambda[i]));
        for (int q = 1; q <= n_system; ++q)
            spec.interaction.add(PauliString::single(axis, q, fr.lambda[i]).with(axis, first_bath + i));
    }
    return spec;
}

std::vector<double> PulseSchedule::switching_times() const {
    std::vector<double> t;
    if (segments.empty()) return t;
    t.push_back(segments.front().t_start);
    for (const auto& s : segments) t.push_back(s.t_end);
    return t;
}

std::size_t PulseSchedule::segment_at(double t) const {
    if (segments.empty()) throw DomainError("empty pulse schedule");
    for (std::size_t k = 0; k + 1 < segments.size(); ++k)
        if (t < segments[k].t_end) return k;
    return segments.size() - 1;
}

PulseSchedule build_pulse_schedule(const ControlParams& cp) {
    cp.validate();
    using std::numbers::pi;
    using std::numbers::sqrt2;
    auto z = [](int q, double c) { return PauliString::single(Pauli::Z, q, c); };
    auto x = [](int q, double c) { return PauliString::single(Pauli::X, q, c); };

    const double hz = 0.5 * cp.bz;
    const double hx = 0.5 * cp.bx;
    const OperatorSum rot_plus{z(1, hz), z(2, hz), x(1, hz), x(2, hz)};

    struct Row {
        double duration;
        OperatorSum h;
    };
    const std::vector<Row> rows = {
        {pi / (2 * cp.bz), {z(2, -hz)}},
        {pi / (2 * cp.bx), {x(2, -hx)}},
        {pi / (2 * cp.bz), {z(2, hz)}},
        {sqrt2 * pi / (2 * cp.bz), rot_plus.scaled(-1.0)},
        {pi / (4 * cp.jx),
         {x(1, -cp.jx), x(2, -cp.jx), PauliString::single(Pauli::X, 1, cp.jx).with(Pauli::X, 2)}},
        {sqrt2 * pi / (2 * cp.bz), rot_plus},
        {pi / (2 * cp.bz), {z(2, -hz)}},
        {pi / (2 * cp.bx), {x(2, hx)}},
        {pi / (2 * cp.bz), {z(2, hz)}},
    };

    PulseSchedule schedule;
    double t = 0.0;
    for (const auto& row : rows) {
        PulseSegment seg;
        seg.t_start = t;
        seg.t_end = t + row.duration;
        seg.hamiltonian = row.h;
        t = seg.t_end;
        schedule.segments.push_back(std::move(seg));
    }
    return schedule;
}

std::array<StateVector, kRegisterStateCount> register_initial_states() {
    std::array<StateVector, kRegisterStateCount> states;
    for (auto& s : states) s = StateVector::Zero(4);
    for (int i = 0; i < 4; ++i) states[i](i) = 1.0;
    const double r = std::numbers::sqrt2 / 2.0;
    states[4](0) = r;
    states[4](3) = r;
    states[5](0) = r;
    states[5](3) = -r;
    states[6](1) = r;
    states[6](2) = r;
    states[7](1) = r;
    states[7](2) = -r;
    return states;
}

std::string_view register_state_name(int index) {
    static constexpr std::string_view kNames[kRegisterStateCount] = {"00",   "01",   "10",   "11",
                                                                      "phi+", "phi-", "psi+", "psi-"};
    if (index < 0 || index >= kRegisterStateCount) throw ConfigError("register state index out of range");
    return kNames[index];
}

}  // namespace qcflaw
