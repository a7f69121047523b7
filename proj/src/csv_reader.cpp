#include "csv_reader.hpp"

namespace explkit::detail {

bool CsvReader::next(std::vector<std::string>& fields) {
  fields.clear();
  if (!bom_checked_) {
    bom_checked_ = true;
    if (in_.peek() == 0xEF) {
      char bom[3];
      in_.read(bom, 3);
      if (!(static_cast<unsigned char>(bom[1]) == 0xBB && static_cast<unsigned char>(bom[2]) == 0xBF)) {
        in_.clear();
        in_.seekg(0);
      }
    }
  }

  while (true) {
    int c = in_.peek();
    if (c == std::char_traits<char>::eof()) return false;
    if (c == '\n') {
      in_.get();
      ++line_;
      continue;
    }
    if (c == '\r') {
      in_.get();
      continue;
    }
    break;
  }

  record_line_ = line_;
  std::string field;
  bool quoted = false;
  bool field_was_quoted = false;
  char ch;
  while (in_.get(ch)) {
    if (quoted) {
      if (ch == '"') {
        if (in_.peek() == '"') {
          in_.get();
          field.push_back('"');
        } else {
          quoted = false;
        }
      } else {
        if (ch == '\n') ++line_;
        field.push_back(ch);
      }
      continue;
    }
    if (ch == '"' && field.empty() && !field_was_quoted) {
      quoted = true;
      field_was_quoted = true;
    } else if (ch == delim_) {
      fields.push_back(std::move(field));
      field.clear();
      field_was_quoted = false;
    } else if (ch == '\n') {
      ++line_;
      fields.push_back(std::move(field));
      return true;
    } else if (ch == '\r') {
      if (in_.peek() != '\n') field.push_back(ch);
    } else {
      field.push_back(ch);
    }
  }
  if (quoted) throw CsvError(record_line_, "unterminated quoted field");
  fields.push_back(std::move(field));
  return true;
}

}  // namespace explkit::detail
