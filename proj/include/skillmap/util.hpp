#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace skillmap {

// UTF-8 code point with its byte span in the source string.
struct CodePoint {
  char32_t value;
  std::size_t begin;
  std::size_t end;
};

// Decodes UTF-8; invalid bytes come back as U+FFFD spanning one byte.
std::vector<CodePoint> decode_utf8(std::string_view text);
std::string encode_utf8(char32_t cp);

bool is_space(char32_t cp);
bool is_cjk(char32_t cp);
bool is_ascii_alnum(char32_t cp);

std::string to_lower_ascii(std::string_view text);
// Lowercases ASCII and collapses whitespace runs to one space, trimmed.
std::string normalize_text(std::string_view text);
std::string trim(std::string_view text);

std::vector<std::string> split(std::string_view text, char delim);

// Stable 64-bit FNV-1a; used wherever a hash must survive across runs.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t basis = 14695981039346656037ULL);
// SplitMix64 finalizer, for deriving independent seeds.
std::uint64_t mix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> parts);

// Shortest round-trip representation of a double.
std::string format_double(double v);

// Tab-separated table with a header row.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Throws if the column is absent.
  std::size_t column(std::string_view name) const;
};

Table read_table(const std::filesystem::path& path, char delim = '\t');
void write_table(const std::filesystem::path& path, const Table& table, char delim = '\t');

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace skillmap
