#pragma once

#include <istream>
#include <stdexcept>
#include <string>
#include <vector>

namespace explkit::detail {

struct CsvError : std::runtime_error {
  CsvError(size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line(line) {}
  size_t line;
};

// RFC 4180 reader: quoted fields may contain delimiters, doubled quotes and
// line breaks. A leading UTF-8 BOM is skipped.
class CsvReader {
 public:
  explicit CsvReader(std::istream& in, char delim = ',') : in_(in), delim_(delim) {}

  // Reads the next record. Returns false at end of input. Blank lines are skipped.
  bool next(std::vector<std::string>& fields);

  // 1-based physical line on which the last returned record started.
  size_t record_line() const { return record_line_; }

 private:
  std::istream& in_;
  char delim_;
  size_t line_ = 1;
  size_t record_line_ = 0;
  bool bom_checked_ = false;
};

}  // namespace explkit::detail
