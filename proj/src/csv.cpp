#include "faithcheck/csv.hpp"

#include "faithcheck/error.hpp"
#include "faithcheck/text.hpp"

namespace faithcheck::csv {

std::optional<std::size_t> Table::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  return std::nullopt;
}

const std::string& Table::cell(const Row& row, const std::string& name) const {
  auto idx = column(name);
  if (!idx) {
    fail(ErrorKind::MalformedRow, source.string() + ": missing column '" + name + "'");
  }
  return row.cells[*idx];
}

Table parse(const std::string& text, const std::filesystem::path& source) {
  Table table;
  table.source = source;
  std::vector<std::vector<std::string>> records;
  std::vector<std::size_t> record_lines;

  std::vector<std::string> current;
  std::string field;
  bool in_quotes = false;
  bool field_quoted = false;
  std::size_t line = 1;
  std::size_t record_line = 1;
  bool record_has_content = false;

  auto end_field = [&] {
    current.push_back(std::move(field));
    field.clear();
    field_quoted = false;
  };
  auto end_record = [&] {
    end_field();
    if (record_has_content || current.size() > 1 || !current.front().empty()) {
      records.push_back(std::move(current));
      record_lines.push_back(record_line);
    }
    current.clear();
    record_has_content = false;
  };

  std::size_t i = 0;
  // Skip a UTF-8 byte order mark.
  if (text.size() >= 3 && text.compare(0, 3, "\xEF\xBB\xBF") == 0) i = 3;
  for (; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (!field.empty() || field_quoted) {
          fail(ErrorKind::MalformedRow,
               source.string() + ":" + std::to_string(line) + ": stray quote inside unquoted field");
        }
        in_quotes = true;
        field_quoted = true;
        record_has_content = true;
        break;
      case ',':
        end_field();
        record_has_content = true;
        break;
      case '\r':
        break;
      case '\n':
        end_record();
        ++line;
        record_line = line;
        break;
      default:
        field.push_back(c);
        record_has_content = true;
    }
  }
  if (in_quotes) {
    fail(ErrorKind::MalformedRow,
         source.string() + ":" + std::to_string(record_line) + ": unterminated quoted field");
  }
  if (!field.empty() || !current.empty() || record_has_content) end_record();

  if (records.empty()) {
    fail(ErrorKind::MalformedRow, source.string() + ":1: missing header row");
  }
  table.header = std::move(records.front());
  for (auto& h : table.header) h = text::trim(h);
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != table.header.size()) {
      fail(ErrorKind::MalformedRow, source.string() + ":" + std::to_string(record_lines[r]) +
                                        ": expected " + std::to_string(table.header.size()) +
                                        " fields, found " + std::to_string(records[r].size()));
    }
    table.rows.push_back(Row{record_lines[r], std::move(records[r])});
  }
  return table;
}

Table read_file(const std::filesystem::path& path) {
  return parse(text::read_file(path.string()), path);
}

std::string escape(const std::string& field) {
  const bool needs_quotes = field.find_first_of(",\"\n\r") != std::string::npos ||
                            (!field.empty() && (field.front() == ' ' || field.back() == ' '));
  if (!needs_quotes) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += '"';
  return out;
}

std::string format_row(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out.push_back(',');
    out += escape(fields[i]);
  }
  out.push_back('\n');
  return out;
}

}  // namespace faithcheck::csv
