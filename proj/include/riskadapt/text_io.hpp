#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace riskadapt {

// Shortest decimal text that parses back to the identical double.
std::string format_double(double value);
double parse_double(std::string_view text);
long long parse_int(std::string_view text);

std::string trim(std::string_view text);
std::vector<std::string> split(std::string_view text, char sep);

// RFC-4180 style comma separated rows: quoted fields may contain commas,
// doubled quotes and newlines.
struct CsvRow {
  std::size_t line = 0;  // line on which the row starts
  std::vector<std::string> fields;
};
std::vector<CsvRow> parse_csv(std::string_view text);
std::string csv_escape(std::string_view field);

std::string read_file(const std::filesystem::path& path);

// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

enum class WriteOutcome { created, unchanged, replaced };

// Writes `content` to `path`. An existing file with identical bytes is left
// alone; an existing file with different bytes is first moved to the next free
// `<name>.~N~` backup so nothing is overwritten silently.
WriteOutcome write_artifact(const std::filesystem::path& path, std::string_view content);

}  // namespace riskadapt
