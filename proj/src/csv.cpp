#include "clab/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "clab/error.hpp"

namespace clab::csv {

std::vector<std::string> split_record(std::string_view line) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          current.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        current.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(current));
      current.clear();
    } else if (c != '\r') {
      current.push_back(c);
    }
  }
  fields.push_back(std::move(current));
  return fields;
}

std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

void read_rows(const std::filesystem::path& path,
               const std::vector<std::string>& expected_header,
               const std::function<void(const std::vector<std::string>&, std::size_t)>& fn) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  std::size_t line_number = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty() || line == "\r") continue;
    auto fields = split_record(line);
    if (!have_header) {
      if (line_number == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) {
        fields = split_record(std::string_view(line).substr(3));
      }
      if (fields.size() < expected_header.size()) {
        throw DataError(path.string() + ": header has too few columns");
      }
      for (std::size_t i = 0; i < expected_header.size(); ++i) {
        if (fields[i] != expected_header[i]) {
          throw DataError(path.string() + ": expected header column '" + expected_header[i] +
                          "', found '" + fields[i] + "'");
        }
      }
      have_header = true;
      continue;
    }
    fn(fields, line_number);
  }
  if (!have_header) throw DataError(path.string() + ": empty file");
}

std::int64_t parse_int(std::string_view text, std::size_t line) {
  std::int64_t value = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw DataError("line " + std::to_string(line) + ": expected integer, got '" +
                    std::string(text) + "'");
  }
  return value;
}

double parse_double(std::string_view text, std::size_t line) {
  // std::from_chars for double is available in libstdc++ 11.
  double value = 0.0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw DataError("line " + std::to_string(line) + ": expected number, got '" +
                    std::string(text) + "'");
  }
  return value;
}

}  // namespace clab::csv
