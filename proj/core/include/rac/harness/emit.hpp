#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "rac/harness/metrics.hpp"

namespace rac::harness {

// Absent values are empty CSV fields and JSON nulls.
using Cell = std::variant<std::monostate, std::int64_t, double, std::string>;

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<Cell>> rows;

  // Throws when the width differs from the header.
  void add(std::vector<Cell> row);
  std::size_t column(std::string_view name) const;
};

enum class Format { kCsv, kJsonl };

Format format_for(const std::filesystem::path& path);

// CSV: header line then one line per row. JSONL: one object per row keyed by
// the header. Doubles use the shortest representation that round-trips.
void emit(const Table& table, const std::filesystem::path& path, Format format);
void emit(const Table& table, const std::filesystem::path& path);

// Integers stay integers; other numerals parse as doubles, the rest as strings.
Table read_table(const std::filesystem::path& path, Format format);
Table read_table(const std::filesystem::path& path);

// Seeds are written as 0x-prefixed hexadecimal strings.
inline constexpr const char* kMetricColumns =
    "episode,seed,length,reward_a,reward_b,touch_a,touch_b,drops_a,drops_b,non_toucher_collided,diverse_drop_a,"
    "diverse_drop_b";

Table metric_table(std::span<const MetricRow> rows);
std::vector<MetricRow> metric_rows(const Table& table);

std::vector<std::string> split_header(std::string_view columns);

}  // namespace rac::harness
