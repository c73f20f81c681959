#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace qcflaw {

// A numeric table with named columns. Text columns (such as the coupling
// kind) are kept as strings alongside.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(const std::string& name) const;  // throws ParseError
    std::vector<double> numbers(const std::string& name) const;
    std::vector<std::string> strings(const std::string& name) const;
};

// Shortest round-trip representation of a double.
std::string format_number(double v);

std::string to_csv(const CsvTable& table);
// Parses text; errors name `source` and the offending line.
CsvTable parse_csv(const std::string& text, const std::string& source);
CsvTable read_csv(const std::filesystem::path& path);

// Writes `content` to a sibling temporary file and renames it over `path`,
// so readers never observe a partial file.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

std::string sha256_hex(const std::string& data);
std::string sha256_file(const std::filesystem::path& path);

// Flat key=value record of a campaign run: configuration snapshot, code
// version, unit constants, per-job status and content digests of every
// output file (keys "file.<name>").
class Manifest {
public:
    void set(const std::string& key, const std::string& value) { entries_[key] = value; }
    bool has(const std::string& key) const { return entries_.contains(key); }
    const std::string& get(const std::string& key) const;
    std::string get_or(const std::string& key, const std::string& fallback) const;
    const std::map<std::string, std::string>& entries() const { return entries_; }
    void erase_prefix(const std::string& prefix);

    std::string serialize() const;
    static Manifest parse(const std::string& text, const std::string& source);
    static Manifest load(const std::filesystem::path& path);

    // True when `name` inside `dir` exists and matches its recorded digest.
    bool file_intact(const std::filesystem::path& dir, const std::string& name) const;

private:
    std::map<std::string, std::string> entries_;
};

}  // namespace qcflaw
