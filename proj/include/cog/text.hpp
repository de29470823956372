#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace cog::text {

// Splits on any Unicode whitespace (UTF-8 input). Empty pieces are dropped.
std::vector<std::string> split_whitespace(std::string_view s);

// Strips leading and trailing Unicode whitespace.
std::string_view trim(std::string_view s);

bool is_single_token(std::string_view s);

// Lowercases ASCII letters; other bytes pass through unchanged.
std::string ascii_lower(std::string_view s);

// Lowercased word tokens. ASCII punctuation and Unicode whitespace separate
// tokens; non-ASCII bytes are kept inside tokens.
std::vector<std::string> word_tokens(std::string_view s);

// 64-bit FNV-1a. Stable across platforms and runs.
std::uint64_t fnv1a(std::string_view s, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace cog::text
