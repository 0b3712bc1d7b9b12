#include "nimap/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace nimap {

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read '" + path + "'");
  return in;
}

// Reads the next header token, collecting "# key value" comments on the way.
std::string header_token(std::istream& in, std::vector<std::string>* comments) {
  std::string token;
  char c;
  while (in.get(c)) {
    if (c == '#') {
      std::string line;
      std::getline(in, line);
      if (comments) comments->push_back(line);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!token.empty()) return token;
      continue;
    }
    token.push_back(c);
  }
  if (token.empty()) throw std::runtime_error("truncated image header");
  return token;
}

int header_int(std::istream& in, std::vector<std::string>* comments) {
  const std::string t = header_token(in, comments);
  try {
    return std::stoi(t);
  } catch (const std::exception&) {
    throw std::runtime_error("malformed image header value '" + t + "'");
  }
}

}  // namespace

void write_ppm(const std::string& path, const ColorImage& image) {
  auto out = open_out(path);
  out << "P6\n" << image.width << " " << image.height << "\n255\n";
  std::vector<unsigned char> bytes;
  bytes.reserve(image.size() * 3);
  for (const Vec3& c : image.data) {
    for (int k = 0; k < 3; ++k) {
      bytes.push_back(static_cast<unsigned char>(std::lround(std::clamp(c[k], 0.0, 1.0) * 255.0)));
    }
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

ColorImage read_ppm(const std::string& path) {
  auto in = open_in(path);
  if (header_token(in, nullptr) != "P6") throw std::runtime_error("'" + path + "' is not a binary PPM");
  const int w = header_int(in, nullptr);
  const int h = header_int(in, nullptr);
  const int maxval = header_int(in, nullptr);
  if (w <= 0 || h <= 0 || maxval != 255) throw std::runtime_error("unsupported PPM layout in '" + path + "'");
  ColorImage img(w, h);
  std::vector<unsigned char> bytes(img.size() * 3);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!in) throw std::runtime_error("truncated PPM data in '" + path + "'");
  for (std::size_t i = 0; i < img.size(); ++i) {
    img.data[i] = Vec3(bytes[3 * i], bytes[3 * i + 1], bytes[3 * i + 2]) / 255.0;
  }
  return img;
}

void write_pgm16(const std::string& path, const ScalarImage& image, double scale) {
  if (!(scale > 0.0)) throw std::invalid_argument("PGM scale must be positive");
  auto out = open_out(path);
  std::ostringstream s;
  s << std::setprecision(17) << scale;
  out << "P5\n# scale " << s.str() << "\n" << image.width << " " << image.height << "\n65535\n";
  std::vector<unsigned char> bytes;
  bytes.reserve(image.size() * 2);
  for (double v : image.data) {
    const double counts = std::isfinite(v) ? std::clamp(std::round(v / scale), 0.0, 65535.0) : 0.0;
    const auto q = static_cast<std::uint16_t>(counts);
    bytes.push_back(static_cast<unsigned char>(q >> 8));
    bytes.push_back(static_cast<unsigned char>(q & 0xff));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

ScaledImage read_pgm16(const std::string& path) {
  auto in = open_in(path);
  std::vector<std::string> comments;
  if (header_token(in, &comments) != "P5") throw std::runtime_error("'" + path + "' is not a binary PGM");
  const int w = header_int(in, &comments);
  const int h = header_int(in, &comments);
  const int maxval = header_int(in, &comments);
  if (w <= 0 || h <= 0 || maxval != 65535) throw std::runtime_error("unsupported PGM layout in '" + path + "'");
  ScaledImage out{ScalarImage(w, h), 1.0};
  for (const auto& c : comments) {
    std::istringstream ss(c);
    std::string key;
    double value = 0.0;
    if (ss >> key >> value && key == "scale") out.scale = value;
  }
  std::vector<unsigned char> bytes(out.image.size() * 2);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!in) throw std::runtime_error("truncated PGM data in '" + path + "'");
  for (std::size_t i = 0; i < out.image.size(); ++i) {
    const int q = (bytes[2 * i] << 8) | bytes[2 * i + 1];
    out.image.data[i] = q * out.scale;
  }
  return out;
}

void write_tum(const std::string& path, const std::vector<TrajectoryRecord>& records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << std::setprecision(17);
  for (const auto& r : records) {
    const auto q = r.pose.quaternion();
    const Vec3& t = r.pose.translation();
    out << r.timestamp << ' ' << t.x() << ' ' << t.y() << ' ' << t.z() << ' ' << q.x() << ' ' << q.y() << ' '
        << q.z() << ' ' << q.w() << '\n';
  }
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

std::vector<TrajectoryRecord> read_tum(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read '" + path + "'");
  std::vector<TrajectoryRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    double ts, tx, ty, tz, qx, qy, qz, qw;
    if (!(ss >> ts >> tx >> ty >> tz >> qx >> qy >> qz >> qw)) {
      throw std::runtime_error("malformed trajectory line " + std::to_string(line_no) + " in '" + path + "'");
    }
    Eigen::Quaterniond q(qw, qx, qy, qz);
    if (q.norm() < 1e-9) throw std::runtime_error("zero quaternion on line " + std::to_string(line_no));
    records.push_back({ts, Pose::from_quaternion(q.normalized(), Vec3(tx, ty, tz))});
  }
  return records;
}

}  // namespace nimap
