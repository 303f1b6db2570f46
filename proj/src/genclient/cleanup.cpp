#include "prefdata/genclient/cleanup.hpp"

#include <array>

namespace prefdata::genclient {

namespace {

// ASCII and UTF-8 closing quotes/brackets that may follow a sentence end.
constexpr std::array<std::string_view, 9> kClosers{"\"", "'", ")", "]", "}",
                                                   "\xE2\x80\x9D",   // right double quote
                                                   "\xE2\x80\x99",   // right single quote
                                                   "\xC2\xBB",       // right guillemet
                                                   "*"};

bool is_terminator(char c) { return c == '.' || c == '!' || c == '?'; }

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

// Length of the closer starting at pos, or 0.
std::size_t closer_at(std::string_view s, std::size_t pos) {
  for (std::string_view c : kClosers) {
    if (s.substr(pos, c.size()) == c) return c.size();
  }
  return 0;
}

bool ends_with_closer(std::string_view s, std::size_t& len) {
  for (std::string_view c : kClosers) {
    if (s.size() >= c.size() && s.substr(s.size() - c.size()) == c) {
      len = c.size();
      return true;
    }
  }
  return false;
}

bool ends_complete(std::string_view s) {
  std::size_t len = 0;
  while (!s.empty() && ends_with_closer(s, len)) s.remove_suffix(len);
  return !s.empty() && is_terminator(s.back());
}

}  // namespace

std::string cleanup_truncation(std::string_view text) {
  std::string_view body = text;
  while (!body.empty() && is_space(body.back())) body.remove_suffix(1);
  if (body.empty() || ends_complete(body)) return std::string(text);

  std::size_t cut = std::string_view::npos;
  for (std::size_t i = 0; i < body.size(); ++i) {
    if (!is_terminator(body[i])) continue;
    std::size_t j = i + 1;
    while (j < body.size() && is_terminator(body[j])) ++j;
    while (j < body.size()) {
      const std::size_t n = closer_at(body, j);
      if (n == 0) break;
      j += n;
    }
    if (j < body.size() && is_space(body[j])) cut = j;
    i = j - 1;
  }
  if (cut == std::string_view::npos) return std::string(text);
  return std::string(body.substr(0, cut));
}

}  // namespace prefdata::genclient
