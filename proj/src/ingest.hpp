#pragma once

#include <array>
#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <vector>

#include "stream.hpp"

namespace wsnad {

inline constexpr std::array<const char*, 4> kLabModes{"temperature", "humidity", "light", "voltage"};

/// One line of the lab dump: date time epoch moteid temperature humidity light voltage.
struct RawReading {
  double time = 0.0;  // seconds since 1970-01-01 UTC
  long epoch = 0;
  int mote = 0;
  std::array<std::optional<double>, 4> values;  // kLabModes order
};

struct ParseCounts {  // blank lines are not counted
  std::size_t lines = 0;
  std::size_t parsed = 0;
  std::size_t skipped = 0;
};

/// Parses "YYYY-MM-DD" plus "HH:MM:SS[.frac]" to seconds since the epoch.
std::optional<double> parse_timestamp(std::string_view date, std::string_view time);

/// Parses one line; nullopt when it does not have exactly eight well-formed fields.
std::optional<RawReading> parse_reading(std::string_view line);

std::vector<RawReading> parse_readings(std::istream& in, ParseCounts* counts = nullptr);
/// Plain or gzip-compressed file.
std::vector<RawReading> parse_readings_file(const std::filesystem::path& path, ParseCounts* counts = nullptr);

struct BuildOptions {
  std::vector<int> node_ids;  // empty: pick `node_count` motes by reading count
  std::size_t node_count = 50;
  std::vector<std::string> modes{"temperature", "humidity", "voltage"};
  double start = 1078358400.0;  // 2004-03-04 00:00:00 UTC
  double end = 1078704000.0;    // 2004-03-08 00:00:00 UTC
  std::size_t length = 3000;
};

/// The `count` motes with the most readings in [start, end), ties by
/// ascending id, returned in ascending id order.
std::vector<int> select_nodes(const std::vector<RawReading>& readings, double start, double end, std::size_t count);

/// Buckets readings onto `length` uniform timestamps over [start, end); each
/// cell is the mean of its bucket, gaps carry the previous value forward and
/// leading gaps take the first observed value. A cell with no data at all is
/// left at zero.
FlowTensor build_flow(const std::vector<RawReading>& readings, const BuildOptions& options);

NodeCoordinates parse_coordinates(std::istream& in);
NodeCoordinates parse_coordinates_file(const std::filesystem::path& path);

}  // namespace wsnad
