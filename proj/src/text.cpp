#include "cog/text.hpp"

namespace cog::text {

namespace {

// Decodes one UTF-8 code point at s[i]; returns its byte length (1 on
// malformed input so callers always make progress).
std::size_t decode(std::string_view s, std::size_t i, char32_t& cp) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  if (b0 < 0x80) {
    cp = b0;
    return 1;
  }
  std::size_t len = 0;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    cp = 0xFFFD;
    return 1;
  }
  if (i + len > s.size()) {
    cp = 0xFFFD;
    return 1;
  }
  for (std::size_t k = 1; k < len; ++k) {
    const auto b = static_cast<unsigned char>(s[i + k]);
    if ((b & 0xC0) != 0x80) {
      cp = 0xFFFD;
      return 1;
    }
    cp = (cp << 6) | (b & 0x3F);
  }
  return len;
}

bool is_space(char32_t cp) {
  switch (cp) {
    case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
    case 0x85: case 0xA0: case 0x1680:
    case 0x2028: case 0x2029: case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

bool is_ascii_punct(char32_t cp) {
  return cp < 0x80 && !(cp >= '0' && cp <= '9') && !(cp >= 'a' && cp <= 'z') &&
         !(cp >= 'A' && cp <= 'Z') && !is_space(cp);
}

template <typename IsSeparator>
std::vector<std::string> split_on(std::string_view s, IsSeparator is_sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  bool in_token = false;
  for (std::size_t i = 0; i < s.size();) {
    char32_t cp;
    const std::size_t len = decode(s, i, cp);
    if (is_sep(cp)) {
      if (in_token) out.emplace_back(s.substr(start, i - start));
      in_token = false;
    } else if (!in_token) {
      start = i;
      in_token = true;
    }
    i += len;
  }
  if (in_token) out.emplace_back(s.substr(start));
  return out;
}

}  // namespace

std::vector<std::string> split_whitespace(std::string_view s) {
  return split_on(s, is_space);
}

std::string_view trim(std::string_view s) {
  std::size_t begin = 0;
  std::size_t end = 0;
  bool seen = false;
  for (std::size_t i = 0; i < s.size();) {
    char32_t cp;
    const std::size_t len = decode(s, i, cp);
    if (!is_space(cp)) {
      if (!seen) begin = i;
      seen = true;
      end = i + len;
    }
    i += len;
  }
  return seen ? s.substr(begin, end - begin) : std::string_view{};
}

bool is_single_token(std::string_view s) { return split_whitespace(s).size() == 1; }

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

std::vector<std::string> word_tokens(std::string_view s) {
  auto tokens = split_on(s, [](char32_t cp) { return is_space(cp) || is_ascii_punct(cp); });
  for (auto& t : tokens) t = ascii_lower(t);
  return tokens;
}

std::uint64_t fnv1a(std::string_view s, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (const char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace cog::text
