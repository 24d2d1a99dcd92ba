#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace agssl::io {

/// Writes via a sibling temp file and rename, so readers never observe a
/// partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

/// Shortest decimal form that round-trips to the same double.
std::string format_double(double v);
double parse_double(std::string_view text);
long long parse_int(std::string_view text);

std::vector<std::string_view> split(std::string_view text, char sep);
std::string_view trim(std::string_view text);

/// Lines of a text file, trailing CR stripped, empty lines kept.
std::vector<std::string> read_lines(const std::filesystem::path& path);

/// Minimal CSV: comma separated, no quoting.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};
CsvTable read_csv(const std::filesystem::path& path);
std::string to_csv(const CsvTable& table);

/// NPY v1.0, little-endian float64, C order.
std::string encode_npy(std::span<const double> data, std::span<const std::size_t> shape);
std::vector<double> decode_npy(std::string_view bytes, std::vector<std::size_t>& shape);

/// git blob hash: sha1("blob <size>\0" + content), lowercase hex.
std::string git_blob_hash(std::string_view content);

}  // namespace agssl::io
