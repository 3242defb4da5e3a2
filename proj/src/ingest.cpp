#include "ingest.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <zlib.h>

namespace wsnad {

namespace {

template <typename T>
bool parse_number(std::string_view s, T& out) {
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t pos = 0;
  while (pos < line.size()) {
    while (pos < line.size() && std::isspace(static_cast<unsigned char>(line[pos]))) ++pos;
    std::size_t end = pos;
    while (end < line.size() && !std::isspace(static_cast<unsigned char>(line[end]))) ++end;
    if (end > pos) fields.push_back(line.substr(pos, end - pos));
    pos = end;
  }
  return fields;
}

}  // namespace

std::optional<double> parse_timestamp(std::string_view date, std::string_view time) {
  int y = 0;
  unsigned mo = 0, d = 0;
  if (date.size() != 10 || date[4] != '-' || date[7] != '-') return std::nullopt;
  if (!parse_number(date.substr(0, 4), y) || !parse_number(date.substr(5, 2), mo) ||
      !parse_number(date.substr(8, 2), d)) {
    return std::nullopt;
  }
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{mo}, std::chrono::day{d}};
  if (!ymd.ok()) return std::nullopt;

  int h = 0, mi = 0;
  double s = 0.0;
  if (time.size() < 8 || time[2] != ':' || time[5] != ':') return std::nullopt;
  if (!parse_number(time.substr(0, 2), h) || !parse_number(time.substr(3, 2), mi) ||
      !parse_number(time.substr(6), s)) {
    return std::nullopt;
  }
  if (h < 0 || h > 23 || mi < 0 || mi > 59 || !(s >= 0.0 && s < 61.0)) return std::nullopt;
  const auto days = std::chrono::sys_days(ymd).time_since_epoch().count();
  return static_cast<double>(days) * 86400.0 + h * 3600.0 + mi * 60.0 + s;
}

std::optional<RawReading> parse_reading(std::string_view line) {
  const auto f = split_fields(line);
  if (f.size() != 8) return std::nullopt;
  RawReading r;
  const auto ts = parse_timestamp(f[0], f[1]);
  if (!ts) return std::nullopt;
  r.time = *ts;
  if (!parse_number(f[2], r.epoch) || !parse_number(f[3], r.mote) || r.mote < 1) return std::nullopt;
  for (std::size_t k = 0; k < 4; ++k) {
    double v = 0.0;
    // from_chars accepts "nan" and "inf"; those become missing values
    if (!parse_number(f[4 + k], v)) return std::nullopt;
    if (std::isfinite(v)) r.values[k] = v;
  }
  return r;
}

std::vector<RawReading> parse_readings(std::istream& in, ParseCounts* counts) {
  ParseCounts c;
  std::vector<RawReading> out;
  for (std::string line; std::getline(in, line);) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++c.lines;
    if (auto r = parse_reading(line)) {
      out.push_back(*r);
      ++c.parsed;
    } else {
      ++c.skipped;
    }
  }
  if (counts) *counts = c;
  return out;
}

std::vector<RawReading> parse_readings_file(const std::filesystem::path& path, ParseCounts* counts) {
  if (!std::filesystem::is_regular_file(path)) fail(ErrorCode::kInput, "cannot read " + path.string());
  // gzread passes uncompressed files through unchanged.
  gzFile gz = gzopen(path.string().c_str(), "rb");
  if (!gz) fail(ErrorCode::kInput, "cannot open " + path.string());
  std::string text;
  char buf[1 << 16];
  int n = 0;
  while ((n = gzread(gz, buf, sizeof buf)) > 0) text.append(buf, static_cast<std::size_t>(n));
  int err = 0;
  const char* msg = gzerror(gz, &err);
  const std::string detail = msg ? msg : "";
  gzclose(gz);
  if (n < 0 || (err != Z_OK && err != Z_STREAM_END)) {
    fail(ErrorCode::kInput, "error reading " + path.string() + ": " + detail);
  }
  std::istringstream in(std::move(text));
  return parse_readings(in, counts);
}

std::vector<int> select_nodes(const std::vector<RawReading>& readings, double start, double end, std::size_t count) {
  std::map<int, std::size_t> tally;
  for (const RawReading& r : readings) {
    if (r.time >= start && r.time < end) ++tally[r.mote];
  }
  if (tally.size() < count) {
    fail(ErrorCode::kMissingNode, "requested " + std::to_string(count) + " nodes but only " +
                                      std::to_string(tally.size()) + " motes report in the date range");
  }
  std::vector<std::pair<int, std::size_t>> ranked(tally.begin(), tally.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<int> ids;
  for (std::size_t k = 0; k < count; ++k) ids.push_back(ranked[k].first);
  std::sort(ids.begin(), ids.end());
  return ids;
}

FlowTensor build_flow(const std::vector<RawReading>& readings, const BuildOptions& options) {
  if (options.length == 0) fail(ErrorCode::kConfig, "flow length must be positive");
  if (!(options.end > options.start)) fail(ErrorCode::kConfig, "date range end must follow its start");
  if (options.modes.empty()) fail(ErrorCode::kConfig, "at least one mode is required");
  std::vector<std::size_t> columns;
  for (const std::string& name : options.modes) {
    auto it = std::find(kLabModes.begin(), kLabModes.end(), name);
    if (it == kLabModes.end()) fail(ErrorCode::kConfig, "unknown mode '" + name + "'");
    columns.push_back(static_cast<std::size_t>(it - kLabModes.begin()));
  }

  std::vector<int> ids = options.node_ids;
  if (ids.empty()) {
    ids = select_nodes(readings, options.start, options.end, options.node_count);
  } else {
    std::vector<int> sorted = ids;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      fail(ErrorCode::kConfig, "node list contains a duplicate id");
    }
  }
  std::map<int, std::size_t> row;
  for (std::size_t i = 0; i < ids.size(); ++i) row[ids[i]] = i;

  const std::size_t m = ids.size(), n = columns.size(), len = options.length;
  const double stride = (options.end - options.start) / static_cast<double>(len);
  std::vector<double> sum(len * m * n, 0.0);
  std::vector<std::size_t> hits(len * m * n, 0);
  std::vector<std::size_t> per_node(m, 0);
  for (const RawReading& r : readings) {
    if (r.time < options.start || r.time >= options.end) continue;
    auto it = row.find(r.mote);
    if (it == row.end()) continue;
    const auto b = std::min(static_cast<std::size_t>((r.time - options.start) / stride), len - 1);
    ++per_node[it->second];
    for (std::size_t j = 0; j < n; ++j) {
      if (const auto& v = r.values[columns[j]]) {
        const std::size_t cell = (b * m + it->second) * n + j;
        sum[cell] += *v;
        ++hits[cell];
      }
    }
  }
  for (std::size_t i = 0; i < m; ++i) {
    if (per_node[i] == 0) fail(ErrorCode::kMissingNode, "node " + std::to_string(ids[i]) + " has no readings in range");
  }

  std::vector<double> values(len * m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      std::optional<double> last;
      std::size_t leading = 0;
      for (std::size_t t = 0; t < len; ++t) {
        const std::size_t cell = (t * m + i) * n + j;
        if (hits[cell] > 0) {
          const double v = sum[cell] / static_cast<double>(hits[cell]);
          if (!last) {
            for (std::size_t u = 0; u < leading; ++u) values[(u * m + i) * n + j] = v;
          }
          last = v;
        } else if (!last) {
          ++leading;
          continue;
        }
        values[cell] = *last;
      }
    }
  }

  FlowTensor flow = make_flow(m, n, len, std::move(values));
  flow.node_ids = ids;
  flow.mode_names = options.modes;
  flow.epoch_start = options.start;
  flow.epoch_stride = stride;
  flow.provenance = {{"source", "lab-dump"},
                     {"node_ids", ids},
                     {"modes", options.modes},
                     {"range_start", options.start},
                     {"range_end", options.end},
                     {"length", len},
                     {"stride_seconds", stride},
                     {"readings_per_node", per_node}};
  return flow;
}

NodeCoordinates parse_coordinates(std::istream& in) {
  NodeCoordinates c;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    const auto f = split_fields(line);
    if (f.empty()) continue;
    int id = 0;
    double x = 0.0, y = 0.0;
    if (f.size() != 3 || !parse_number(f[0], id) || !parse_number(f[1], x) || !parse_number(f[2], y) ||
        !std::isfinite(x) || !std::isfinite(y)) {
      fail(ErrorCode::kInput, "coordinate line " + std::to_string(line_no) + " is not 'moteid x y'");
    }
    if (c.find(id)) fail(ErrorCode::kInput, "duplicate coordinates for mote " + std::to_string(id));
    c.ids.push_back(id);
    c.x.push_back(x);
    c.y.push_back(y);
  }
  return c;
}

NodeCoordinates parse_coordinates_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kInput, "cannot read " + path.string());
  return parse_coordinates(in);
}

}  // namespace wsnad
