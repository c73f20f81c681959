#include "qcflaw/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <openssl/evp.h>
#include <unistd.h>

#include "qcflaw/error.hpp"

namespace qcflaw {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const auto comma = line.find(',', start);
        out.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

}  // namespace

std::size_t CsvTable::column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return i;
    throw ParseError("missing column '" + name + "'");
}

std::vector<double> CsvTable::numbers(const std::string& name) const {
    const std::size_t c = column(name);
    std::vector<double> out;
    out.reserve(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const std::string& cell = rows[r][c];
        double v = 0.0;
        const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
        if (res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
            if (cell == "inf") v = INFINITY;
            else if (cell == "-inf") v = -INFINITY;
            else if (cell == "nan") v = NAN;
            else throw ParseError("row " + std::to_string(r + 2) + ": '" + cell + "' in column '" + name +
                                  "' is not a number");
        }
        out.push_back(v);
    }
    return out;
}

std::vector<std::string> CsvTable::strings(const std::string& name) const {
    const std::size_t c = column(name);
    std::vector<std::string> out;
    for (const auto& row : rows) out.push_back(row[c]);
    return out;
}

std::string format_number(double v) { return fmt::format("{}", v); }

std::string to_csv(const CsvTable& table) {
    std::string out;
    for (std::size_t i = 0; i < table.header.size(); ++i) {
        if (i) out += ',';
        out += table.header[i];
    }
    out += '\n';
    for (const auto& row : table.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out += ',';
            out += row[i];
        }
        out += '\n';
    }
    return out;
}

CsvTable parse_csv(const std::string& text, const std::string& source) {
    CsvTable t;
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) throw ParseError(source + ":" + std::to_string(lineno) + ": empty line");
        auto fields = split_fields(line);
        if (t.header.empty()) {
            for (const auto& f : fields)
                if (f.empty()) throw ParseError(source + ":" + std::to_string(lineno) + ": empty column name");
            t.header = std::move(fields);
            continue;
        }
        if (fields.size() != t.header.size())
            throw ParseError(source + ":" + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                             " fields, found " + std::to_string(fields.size()));
        t.rows.push_back(std::move(fields));
    }
    if (t.header.empty()) throw ParseError(source + ": empty file");
    if (t.rows.empty()) throw ParseError(source + ": no data rows");
    return t;
}

CsvTable read_csv(const std::filesystem::path& path) { return parse_csv(read_file(path), path.string()); }

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = path.string() + ".tmp." + std::to_string(::getpid());
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw Error("cannot write " + tmp);
        os.write(content.data(), static_cast<std::streamsize>(content.size()));
        os.flush();
        if (!os) {
            std::filesystem::remove(tmp);
            throw Error("write failed for " + tmp);
        }
    }
    std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ParseError("cannot open " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::string sha256_hex(const std::string& data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw Error("SHA-256 computation failed");
    std::string hex;
    hex.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
    return hex;
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

const std::string& Manifest::get(const std::string& key) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) throw ParseError("manifest has no key '" + key + "'");
    return it->second;
}

std::string Manifest::get_or(const std::string& key, const std::string& fallback) const {
    const auto it = entries_.find(key);
    return it == entries_.end() ? fallback : it->second;
}

void Manifest::erase_prefix(const std::string& prefix) {
    for (auto it = entries_.lower_bound(prefix); it != entries_.end() && it->first.starts_with(prefix);)
        it = entries_.erase(it);
}

std::string Manifest::serialize() const {
    std::string out;
    for (const auto& [k, v] : entries_) {
        out += k;
        out += '=';
        for (char c : v) out += (c == '\n' || c == '\r') ? ' ' : c;
        out += '\n';
    }
    return out;
}

Manifest Manifest::parse(const std::string& text, const std::string& source) {
    Manifest m;
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos || eq == 0)
            throw ParseError(source + ":" + std::to_string(lineno) + ": expected key=value");
        m.entries_[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return m;
}

Manifest Manifest::load(const std::filesystem::path& path) { return parse(read_file(path), path.string()); }

bool Manifest::file_intact(const std::filesystem::path& dir, const std::string& name) const {
    const auto it = entries_.find("file." + name);
    if (it == entries_.end()) return false;
    const auto path = dir / name;
    if (!std::filesystem::is_regular_file(path)) return false;
    return sha256_file(path) == it->second;
}

}  // namespace qcflaw
