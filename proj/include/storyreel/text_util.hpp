#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace storyreel::text_util {

/// Decodes one UTF-8 code point at `pos`, advancing it. Malformed bytes decode
/// as themselves (one byte) so scanning never stalls.
char32_t next_code_point(std::string_view text, std::size_t& pos);

bool is_space(char32_t cp);
bool is_dash(char32_t cp);

std::string_view trim(std::string_view text);

/// Splits on Unicode whitespace, dropping empty tokens.
std::vector<std::string_view> split_whitespace(std::string_view text);

/// Splits on a single byte; keeps empty fields.
std::vector<std::string_view> split(std::string_view text, char sep);

/// Splits into lines on '\n', removing a trailing '\r' from each line.
std::vector<std::string_view> lines(std::string_view text);

bool is_all_dashes(std::string_view token);

std::string to_lower_ascii(std::string_view text);

/// Lowercased alphanumeric tokens (ASCII letters/digits; other bytes split).
std::vector<std::string> word_tokens(std::string_view text);

std::string to_hex(std::span<const std::uint8_t> bytes);

/// Lowercase hex SHA-256 of the given bytes.
std::string sha256_hex(std::string_view bytes);

}  // namespace storyreel::text_util
