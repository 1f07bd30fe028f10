#include "rac/harness/emit.hpp"

#include <fmt/format.h>

#include <charconv>
#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>

namespace rac::harness {

// Ordered so JSON lines keep the header's column order.
using json = nlohmann::ordered_json;

void Table::add(std::vector<Cell> row) {
  if (row.size() != header.size()) {
    throw std::invalid_argument(fmt::format("row has {} cells for {} columns", row.size(), header.size()));
  }
  rows.push_back(std::move(row));
}

std::size_t Table::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw std::out_of_range("no column named " + std::string(name));
}

std::vector<std::string> split_header(std::string_view columns) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t cut = columns.find(',', start);
    out.emplace_back(columns.substr(start, cut - start));
    if (cut == std::string_view::npos) break;
    start = cut + 1;
  }
  return out;
}

Format format_for(const std::filesystem::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".jsonl" || ext == ".json") return Format::kJsonl;
  return Format::kCsv;
}

namespace {

std::string csv_field(const Cell& cell) {
  struct Visitor {
    std::string operator()(std::monostate) const { return {}; }
    std::string operator()(std::int64_t v) const { return fmt::format("{}", v); }
    std::string operator()(double v) const {
      // Keep a decimal mark so the value reads back as a double.
      std::string s = fmt::format("{}", v);
      if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
      return s;
    }
    std::string operator()(const std::string& s) const {
      if (s.find_first_of(",\"\n") == std::string::npos && !s.empty()) return s;
      std::string out = "\"";
      for (char c : s) {
        if (c == '"') out += '"';
        out += c;
      }
      return out + "\"";
    }
  };
  return std::visit(Visitor{}, cell);
}

json json_value(const Cell& cell) {
  struct Visitor {
    json operator()(std::monostate) const { return nullptr; }
    json operator()(std::int64_t v) const { return v; }
    json operator()(double v) const { return v; }
    json operator()(const std::string& s) const { return s; }
  };
  return std::visit(Visitor{}, cell);
}

// Splits one CSV record; `quoted` marks fields that were quoted strings.
std::vector<std::string> split_csv(std::string_view line, std::vector<bool>& quoted) {
  std::vector<std::string> out;
  quoted.clear();
  std::string field;
  bool in_quotes = false, was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (in_quotes) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        in_quotes = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      in_quotes = was_quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      quoted.push_back(was_quoted);
      field.clear();
      was_quoted = false;
    } else {
      field += c;
    }
  }
  if (in_quotes) throw std::runtime_error("unterminated quote in CSV line");
  out.push_back(std::move(field));
  quoted.push_back(was_quoted);
  return out;
}

Cell parse_field(const std::string& s, bool quoted) {
  if (quoted) return s;
  if (s.empty()) return std::monostate{};
  const char* end = s.data() + s.size();
  std::int64_t i = 0;
  if (auto [p, ec] = std::from_chars(s.data(), end, i); ec == std::errc() && p == end) return i;
  double d = 0.0;
  if (auto [p, ec] = std::from_chars(s.data(), end, d); ec == std::errc() && p == end) return d;
  return s;
}

Cell from_json(const json& v) {
  if (v.is_null()) return std::monostate{};
  if (v.is_number_integer()) return v.get<std::int64_t>();
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) return v.get<std::string>();
  throw std::runtime_error("unsupported JSON value " + v.dump());
}

}  // namespace

void emit(const Table& table, const std::filesystem::path& path, Format format) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  if (format == Format::kCsv) {
    for (std::size_t i = 0; i < table.header.size(); ++i) out << (i ? "," : "") << table.header[i];
    out << '\n';
    for (const auto& row : table.rows) {
      for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << csv_field(row[i]);
      out << '\n';
    }
  } else {
    for (const auto& row : table.rows) {
      json obj = json::object();
      for (std::size_t i = 0; i < row.size(); ++i) obj[table.header[i]] = json_value(row[i]);
      out << obj.dump() << '\n';
    }
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

void emit(const Table& table, const std::filesystem::path& path) { emit(table, path, format_for(path)); }

Table read_table(const std::filesystem::path& path, Format format) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  Table t;
  std::string line;
  if (format == Format::kCsv) {
    std::vector<bool> quoted;
    if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": missing CSV header");
    t.header = split_csv(line, quoted);
    while (std::getline(in, line)) {
      const auto fields = split_csv(line, quoted);
      std::vector<Cell> row;
      for (std::size_t i = 0; i < fields.size(); ++i) row.push_back(parse_field(fields[i], quoted[i]));
      t.add(std::move(row));
    }
    return t;
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto obj = json::parse(line);
    if (t.header.empty()) {
      for (const auto& [k, v] : obj.items()) t.header.push_back(k);
    }
    std::vector<Cell> row;
    for (const auto& name : t.header) {
      if (!obj.contains(name)) throw std::runtime_error(path.string() + ": JSON line missing key " + name);
      row.push_back(from_json(obj.at(name)));
    }
    t.add(std::move(row));
  }
  return t;
}

Table read_table(const std::filesystem::path& path) { return read_table(path, format_for(path)); }

namespace {

Cell flag(const std::optional<bool>& v) {
  if (!v) return std::monostate{};
  return std::int64_t{*v ? 1 : 0};
}

std::int64_t as_int(const Cell& c) {
  if (const auto* i = std::get_if<std::int64_t>(&c)) return *i;
  throw std::runtime_error("expected an integer cell");
}

double as_double(const Cell& c) {
  if (const auto* d = std::get_if<double>(&c)) return *d;
  if (const auto* i = std::get_if<std::int64_t>(&c)) return static_cast<double>(*i);
  throw std::runtime_error("expected a numeric cell");
}

std::uint64_t parse_seed(const Cell& c) {
  const auto* s = std::get_if<std::string>(&c);
  std::uint64_t v = 0;
  if (!s || s->size() < 3 || s->compare(0, 2, "0x") != 0 ||
      std::from_chars(s->data() + 2, s->data() + s->size(), v, 16).ptr != s->data() + s->size()) {
    throw std::runtime_error("expected a hexadecimal seed cell");
  }
  return v;
}

std::optional<bool> as_flag(const Cell& c) {
  if (std::holds_alternative<std::monostate>(c)) return std::nullopt;
  return as_int(c) != 0;
}

}  // namespace

Table metric_table(std::span<const MetricRow> rows) {
  Table t;
  t.header = split_header(kMetricColumns);
  for (const auto& r : rows) {
    t.add({static_cast<std::int64_t>(r.episode), fmt::format("{:#018x}", r.seed), static_cast<std::int64_t>(r.length),
           r.reward[0], r.reward[1], std::int64_t{r.touched[0]}, std::int64_t{r.touched[1]}, std::int64_t{r.drops[0]},
           std::int64_t{r.drops[1]}, flag(r.non_toucher_collided), flag(r.diverse_drop[0]), flag(r.diverse_drop[1])});
  }
  return t;
}

std::vector<MetricRow> metric_rows(const Table& table) {
  if (table.header != split_header(kMetricColumns)) throw std::runtime_error("not a metric table");
  std::vector<MetricRow> out;
  for (const auto& c : table.rows) {
    MetricRow r;
    r.episode = static_cast<std::size_t>(as_int(c[0]));
    r.seed = parse_seed(c[1]);
    r.length = static_cast<std::size_t>(as_int(c[2]));
    r.reward = {as_double(c[3]), as_double(c[4])};
    r.touched = {as_int(c[5]) != 0, as_int(c[6]) != 0};
    r.drops = {static_cast<int>(as_int(c[7])), static_cast<int>(as_int(c[8]))};
    r.non_toucher_collided = as_flag(c[9]);
    r.diverse_drop = {as_flag(c[10]), as_flag(c[11])};
    out.push_back(r);
  }
  return out;
}

}  // namespace rac::harness
