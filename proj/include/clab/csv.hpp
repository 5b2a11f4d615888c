#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace clab::csv {

// Splits one CSV record. Double-quoted fields may contain commas and "" escapes.
std::vector<std::string> split_record(std::string_view line);

// Quotes a field if it contains a comma, quote or newline.
std::string escape(std::string_view field);

// Calls fn(fields, line_number) for each non-empty record after the header.
// Validates that the header matches `expected_header` (prefix match on the
// listed columns). Throws DataError on a missing file or bad header.
void read_rows(const std::filesystem::path& path,
               const std::vector<std::string>& expected_header,
               const std::function<void(const std::vector<std::string>&, std::size_t)>& fn);

// Strict numeric parsing; throws DataError naming the line on failure.
std::int64_t parse_int(std::string_view text, std::size_t line);
double parse_double(std::string_view text, std::size_t line);

}  // namespace clab::csv
