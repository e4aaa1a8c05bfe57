#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "serec/common.hpp"

namespace serec::tsv {

// Splits on runs of tabs/spaces; a trailing '\r' is ignored.
std::vector<std::string_view> fields(std::string_view line);

std::optional<double> parse_double(std::string_view text);
std::optional<long long> parse_int(std::string_view text);

// Calls fn(line_number, fields) for every non-blank, non-comment line.
void for_each_record(const std::filesystem::path& path,
                     const std::function<void(std::size_t, const std::vector<std::string_view>&)>& fn);

std::ofstream open_out(const std::filesystem::path& path);

// Shortest round-trip decimal representation.
std::string format_double(double value);

void write_matrix(const std::filesystem::path& path, const Matrix& m);
Matrix read_matrix(const std::filesystem::path& path);
void write_vector(const std::filesystem::path& path, const Vector& v);
Vector read_vector(const std::filesystem::path& path);

}  // namespace serec::tsv
