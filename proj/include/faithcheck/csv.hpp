#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace faithcheck::csv {

struct Row {
  std::size_t line = 0;  // 1-based physical line where the record starts
  std::vector<std::string> cells;
};

struct Table {
  std::filesystem::path source;
  std::vector<std::string> header;
  std::vector<Row> rows;

  // Column index by header name, or nullopt.
  std::optional<std::size_t> column(const std::string& name) const;
  const std::string& cell(const Row& row, const std::string& name) const;
};

// RFC 4180 reader: quoted fields may contain commas, doubled quotes and line
// breaks. Throws MalformedRow on unterminated quotes or ragged rows.
Table parse(const std::string& text, const std::filesystem::path& source = {});
Table read_file(const std::filesystem::path& path);

std::string escape(const std::string& field);
std::string format_row(const std::vector<std::string>& fields);

}  // namespace faithcheck::csv
