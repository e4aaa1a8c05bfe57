#include "tsv.hpp"

#include <charconv>
#include <system_error>

namespace serec::tsv {

std::vector<std::string_view> fields(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (pos < line.size()) {
    while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) ++pos;
    if (pos >= line.size()) break;
    std::size_t end = pos;
    while (end < line.size() && line[end] != ' ' && line[end] != '\t') ++end;
    out.push_back(line.substr(pos, end - pos));
    pos = end;
  }
  return out;
}

std::optional<double> parse_double(std::string_view text) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
  return value;
}

std::optional<long long> parse_int(std::string_view text) {
  long long value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
  return value;
}

void for_each_record(const std::filesystem::path& path,
                     const std::function<void(std::size_t, const std::vector<std::string_view>&)>& fn) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), 0, "cannot open file");
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto f = fields(line);
    if (f.empty() || f.front().starts_with('#')) continue;
    fn(line_no, f);
  }
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

void write_matrix(const std::filesystem::path& path, const Matrix& m) {
  auto out = open_out(path);
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) {
      if (c) out << '\t';
      out << format_double(m(r, c));
    }
    out << '\n';
  }
}

Matrix read_matrix(const std::filesystem::path& path) {
  std::vector<std::vector<double>> rows;
  for_each_record(path, [&](std::size_t line, const std::vector<std::string_view>& f) {
    std::vector<double> row;
    row.reserve(f.size());
    for (auto field : f) {
      auto v = parse_double(field);
      if (!v) throw ParseError(path.string(), line, "not a number: '" + std::string(field) + "'");
      row.push_back(*v);
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw ParseError(path.string(), line, "ragged row");
    rows.push_back(std::move(row));
  });
  const Index cols = rows.empty() ? 0 : static_cast<Index>(rows.front().size());
  Matrix m(static_cast<Index>(rows.size()), cols);
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
  return m;
}

void write_vector(const std::filesystem::path& path, const Vector& v) {
  auto out = open_out(path);
  for (Index i = 0; i < v.size(); ++i) out << format_double(v[i]) << '\n';
}

Vector read_vector(const std::filesystem::path& path) {
  Matrix m = read_matrix(path);
  if (m.cols() > 1) throw ParseError(path.string(), 0, "expected one value per line");
  return m.rows() == 0 ? Vector() : Vector(m.col(0));
}

}  // namespace serec::tsv
