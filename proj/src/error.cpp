#include "fgvc/error.hpp"

namespace fgvc {

namespace {

std::string with_line(std::size_t line, const std::string& what) {
  if (line == 0) return what;
  return "line " + std::to_string(line) + ": " + what;
}

}  // namespace

ParseError::ParseError(Kind kind, std::size_t line, const std::string& what)
    : Error(ErrorClass::Parse, with_line(line, what)), kind_(kind), line_(line) {}

ParseError ParseError::with_context(const std::string& prefix) const {
  return ParseError(Raw{}, kind_, line_, prefix + ": " + what());
}

}  // namespace fgvc
