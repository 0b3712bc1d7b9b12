#pragma once

#include "nimap/frame.hpp"

#include <string>
#include <vector>

namespace nimap {

/// Binary 8-bit PPM (P6); channels are clamped to [0, 1] and rounded.
void write_ppm(const std::string& path, const ColorImage& image);
ColorImage read_ppm(const std::string& path);

inline constexpr double kDepthScale = 2e-4;        // meters per count, 13.1 m range
inline constexpr double kUncertaintyScale = 1e-5;  // variance per count

/// Binary 16-bit PGM (P5, big-endian samples). The header carries a
/// "# scale <value>" comment; stored counts are round(value / scale).
void write_pgm16(const std::string& path, const ScalarImage& image, double scale);
struct ScaledImage {
  ScalarImage image;
  double scale = 1.0;
};
ScaledImage read_pgm16(const std::string& path);

struct TrajectoryRecord {
  double timestamp = 0.0;
  Pose pose;
};

/// One "timestamp tx ty tz qx qy qz qw" line per record.
void write_tum(const std::string& path, const std::vector<TrajectoryRecord>& records);
std::vector<TrajectoryRecord> read_tum(const std::string& path);

}  // namespace nimap
