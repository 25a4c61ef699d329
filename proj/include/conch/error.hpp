#pragma once

#include <stdexcept>
#include <string>

namespace conch {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Malformed input file; message carries "file:line: reason".
class ParseError : public Error {
public:
  ParseError(const std::string& file, std::size_t line, const std::string& reason)
      : Error(file + ":" + std::to_string(line) + ": " + reason), file_(file), line_(line) {}

  const std::string& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }

private:
  std::string file_;
  std::size_t line_;
};

}  // namespace conch
