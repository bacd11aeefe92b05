#pragma once

// Small CSV reader/writer (RFC 4180 flavor): quoted fields may contain
// commas, doubled quotes, and embedded line breaks. Rows are not required
// to share the header width; callers validate shape.

#include <cstddef>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ivmatch::csv {

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error("csv: " + what + " (line " + std::to_string(line) + ")"),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Column index by header name, -1 if absent.
  int column(const std::string& name) const {
    for (std::size_t j = 0; j < header.size(); ++j)
      if (header[j] == name) return static_cast<int>(j);
    return -1;
  }
};

namespace detail {

// Reads one logical record (possibly spanning physical lines inside quotes).
// Returns false on clean end of input before any character of a new record.
inline bool read_record(std::istream& in, std::vector<std::string>& out,
                        std::size_t& line) {
  out.clear();
  int c = in.get();
  if (c == std::char_traits<char>::eof()) return false;

  std::string field;
  bool quoted = false;
  bool any = false;  // record contains at least one field terminator or char

  auto push_field = [&] {
    out.push_back(field);
    field.clear();
  };

  while (true) {
    if (c == std::char_traits<char>::eof()) {
      if (quoted) throw ParseError("unterminated quoted field", line);
      push_field();
      return true;
    }
    char ch = static_cast<char>(c);
    if (quoted) {
      if (ch == '"') {
        int next = in.peek();
        if (next == '"') {
          field.push_back('"');
          in.get();
        } else {
          quoted = false;
        }
      } else {
        if (ch == '\n') ++line;
        field.push_back(ch);
      }
    } else if (ch == '"') {
      if (!field.empty())
        throw ParseError("quote inside unquoted field", line);
      quoted = true;
      any = true;
    } else if (ch == ',') {
      push_field();
      any = true;
    } else if (ch == '\r') {
      // Tolerate CRLF; a bare CR also terminates the record.
      if (in.peek() == '\n') in.get();
      ++line;
      push_field();
      return true;
    } else if (ch == '\n') {
      ++line;
      push_field();
      return true;
    } else {
      field.push_back(ch);
      any = true;
    }
    c = in.get();
  }
  (void)any;
}

}  // namespace detail

// Parses an entire stream. The first record is the header. Completely empty
// records (blank lines) are skipped.
inline Table read(std::istream& in) {
  Table t;
  std::size_t line = 1;
  std::vector<std::string> rec;
  bool have_header = false;
  while (detail::read_record(in, rec, line)) {
    if (rec.size() == 1 && rec[0].empty()) continue;  // blank line
    if (!have_header) {
      t.header = rec;
      have_header = true;
    } else {
      t.rows.push_back(rec);
    }
  }
  if (!have_header) throw ParseError("empty input", line);
  return t;
}

inline Table read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("csv: cannot open " + path);
  return read(in);
}

// Quotes a field only when needed so output stays diff-friendly.
inline std::string quote(const std::string& s) {
  bool need = s.find_first_of(",\"\r\n") != std::string::npos;
  if (!need) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += "\"\"";
    else q.push_back(c);
  }
  q += "\"";
  return q;
}

inline void write_row(std::ostream& out, const std::vector<std::string>& row) {
  for (std::size_t j = 0; j < row.size(); ++j) {
    if (j) out.put(',');
    out << quote(row[j]);
  }
  out.put('\n');
}

}  // namespace ivmatch::csv
