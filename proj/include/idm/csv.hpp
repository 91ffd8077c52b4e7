#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace idm::csv {

/// A parsed CSV document: header plus rows, with the 1-based source line of
/// every row kept for diagnostics.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<int> lines;

  /// Column index by name, or nullopt.
  std::optional<std::size_t> column(std::string_view name) const;
};

/// RFC 4180 reader: comma separated, double-quote quoting with "" escapes,
/// CRLF or LF line ends, optional UTF-8 BOM. Throws ConfigError naming the
/// line on malformed quoting or ragged rows.
Table parse(std::string_view text);
Table read_file(const std::string& path);
/// Whole file as bytes; IoError when it cannot be read.
std::string read_text(const std::string& path);

/// Quotes a field only when it contains a comma, quote or line break.
std::string escape(std::string_view field);
void write_row(std::ostream& out, const std::vector<std::string>& fields);

/// Shortest round-trip text for a double ("" for NaN is up to the caller).
std::string format_number(double v);

}  // namespace idm::csv
