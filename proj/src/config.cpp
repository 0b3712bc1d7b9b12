#include "nimap/config.hpp"

#include "nimap/binary_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <set>
#include <stdexcept>

namespace nimap {

namespace {

constexpr double kDeg = M_PI / 180.0;

void check_keys(const Json& j, const std::string& section, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw std::invalid_argument("config section '" + section + "' must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!ok.count(key)) throw std::invalid_argument("unknown config key '" + section + "." + key + "'");
  }
}

template <class T>
void get(const Json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void get_deg(const Json& j, const char* key, double& radians) {
  if (j.contains(key)) radians = j.at(key).get<double>() * kDeg;
}

Vec3 vec3(const Json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3) throw std::invalid_argument(what + " must be a 3-element array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

Json vec_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

void get_vec(const Json& j, const char* key, Vec3& out, const std::string& section) {
  if (j.contains(key)) out = vec3(j.at(key), section + "." + key);
}

double yaw_of(const Pose& p) { return std::atan2(p.rotation()(1, 0), p.rotation()(0, 0)); }

ColorFunction color_from_json(const Json& j) {
  check_keys(j, "scene.primitives.color", {"type", "primary", "secondary", "axis", "from", "to", "period", "phase"});
  ColorFunction c;
  const std::string type = j.value("type", "constant");
  if (type == "constant") {
    c.kind = ColorFunction::Kind::constant;
  } else if (type == "gradient") {
    c.kind = ColorFunction::Kind::gradient;
  } else if (type == "checker") {
    c.kind = ColorFunction::Kind::checker;
  } else {
    throw std::invalid_argument("unknown color type '" + type + "'");
  }
  get_vec(j, "primary", c.primary, "color");
  c.secondary = c.primary;
  get_vec(j, "secondary", c.secondary, "color");
  get(j, "axis", c.axis);
  get(j, "from", c.from);
  get(j, "to", c.to);
  get(j, "period", c.period);
  get(j, "phase", c.phase);
  if (c.axis < 0 || c.axis > 2) throw std::invalid_argument("color axis must be 0, 1 or 2");
  return c;
}

Json color_to_json(const ColorFunction& c) {
  Json j;
  switch (c.kind) {
    case ColorFunction::Kind::constant:
      j["type"] = "constant";
      j["primary"] = vec_json(c.primary);
      break;
    case ColorFunction::Kind::gradient:
      j["type"] = "gradient";
      j["primary"] = vec_json(c.primary);
      j["secondary"] = vec_json(c.secondary);
      j["axis"] = c.axis;
      j["from"] = c.from;
      j["to"] = c.to;
      break;
    case ColorFunction::Kind::checker:
      j["type"] = "checker";
      j["primary"] = vec_json(c.primary);
      j["secondary"] = vec_json(c.secondary);
      j["period"] = c.period;
      j["phase"] = c.phase;
      break;
  }
  return j;
}

SceneSpec scene_from_json(const Json& j) {
  check_keys(j, "scene", {"background", "depth_noise", "primitives"});
  SceneSpec s;
  get_vec(j, "background", s.background, "scene");
  get(j, "depth_noise", s.depth_noise);
  if (j.contains("primitives")) {
    for (const Json& pj : j.at("primitives")) {
      check_keys(pj, "scene.primitives", {"type", "center", "size", "radius", "yaw_deg", "color"});
      Primitive p;
      const std::string type = pj.value("type", "");
      if (type == "sphere") {
        p.kind = Primitive::Kind::sphere;
        const double r = pj.value("radius", 1.0);
        p.size = Vec3::Constant(r);
      } else if (type == "box" || type == "room") {
        p.kind = type == "box" ? Primitive::Kind::box : Primitive::Kind::room;
        if (!pj.contains("size")) throw std::invalid_argument("scene " + type + " needs 'size'");
        p.size = vec3(pj.at("size"), "scene.primitives.size");
      } else {
        throw std::invalid_argument("unknown primitive type '" + type + "'");
      }
      Vec3 center = Vec3::Zero();
      get_vec(pj, "center", center, "scene.primitives");
      p.pose = Pose(rot_z(pj.value("yaw_deg", 0.0) * kDeg).rotation(), center);
      if (pj.contains("color")) p.color = color_from_json(pj.at("color"));
      s.primitives.push_back(p);
    }
  }
  return s;
}

}  // namespace

Json scene_to_json(const SceneSpec& scene) {
  Json j;
  j["background"] = vec_json(scene.background);
  j["depth_noise"] = scene.depth_noise;
  Json prims = Json::array();
  for (const auto& p : scene.primitives) {
    Json pj;
    pj["type"] = to_string(p.kind);
    pj["center"] = vec_json(p.pose.translation());
    if (p.kind == Primitive::Kind::sphere) {
      pj["radius"] = p.size.x();
    } else {
      pj["size"] = vec_json(p.size);
    }
    pj["yaw_deg"] = yaw_of(p.pose) / kDeg;
    pj["color"] = color_to_json(p.color);
    prims.push_back(pj);
  }
  j["primitives"] = prims;
  return j;
}

namespace {

// Numbers are printed with 10 significant digits so that values surviving a
// degrees/radians round trip hash identically.
void canonical_text(const Json& j, std::string& out) {
  if (j.is_object()) {
    out += '{';
    for (const auto& [key, value] : j.items()) {
      out += key;
      out += ':';
      canonical_text(value, out);
      out += ',';
    }
    out += '}';
  } else if (j.is_array()) {
    out += '[';
    for (const auto& value : j) {
      canonical_text(value, out);
      out += ',';
    }
    out += ']';
  } else if (j.is_number()) {
    char buf[32];
    const double v = j.get<double>();
    std::snprintf(buf, sizeof(buf), "%.10g", v == 0.0 ? 0.0 : v);
    out += buf;
  } else {
    out += j.dump();
  }
}

}  // namespace

std::uint64_t scene_hash(const SceneSpec& scene) {
  std::string text;
  canonical_text(scene_to_json(scene), text);
  return io::fnv1a(text);
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

void RunConfig::validate() const {
  if (version != kConfigVersion) throw std::invalid_argument("unsupported config version " + std::to_string(version));
  if (threads < 1) throw std::invalid_argument("threads must be >= 1");
  camera.validate();
  scene.validate();
  trajectory.validate();
  atlas.field.grid.validate();
  const auto& t = atlas.train;
  if (atlas.field.hidden_dim < 1) throw std::invalid_argument("mapping.hidden_dim must be >= 1");
  if (t.n_point < 1 || t.m_pixels < 1) throw std::invalid_argument("mapping.n_point and m_pixels must be >= 1");
  if (!(t.lambda_p >= 0.0)) throw std::invalid_argument("mapping.lambda_p must be >= 0");
  if (!(t.t_min >= 0.0) || !(t.t_max > t.t_min)) throw std::invalid_argument("mapping.t_min/t_max out of range");
  if (!(atlas.field.feature_optimizer.lr > 0.0) || !(atlas.field.decoder_optimizer.lr > 0.0)) {
    throw std::invalid_argument("learning rates must be positive");
  }
  const auto& s = atlas.submap;
  if (!(s.covis_threshold > 0.0 && s.covis_threshold <= 1.0) ||
      !(s.anchor_covis_threshold >= 0.0 && s.anchor_covis_threshold <= 1.0)) {
    throw std::invalid_argument("submap thresholds must lie in (0, 1]");
  }
  if (s.iters_per_keyframe < 0 || s.iters_new_submap < 0 || s.finetune_budget < 0 || s.window < 1 || s.growth_stride < 1 ||
      s.covis_stride < 1 || !(s.growth_dilation >= 0.0 && s.growth_dilation <= 2.0)) {
    throw std::invalid_argument("submap parameters out of range");
  }
  if (!(s.ft_translation >= 0.0) || !(s.ft_rotation >= 0.0)) throw std::invalid_argument("fine-tune thresholds must be >= 0");
  if (!(atlas.render.min_opacity >= 0.0 && atlas.render.min_opacity <= 1.0)) {
    throw std::invalid_argument("mapping.min_opacity must lie in [0, 1]");
  }
  if (!(tracking.keyframe.translation > 0.0) || !(tracking.keyframe.rotation > 0.0)) {
    throw std::invalid_argument("keyframe thresholds must be positive");
  }
  if (!(tracking.loop.radius > 0.0) || !(tracking.loop.angle > 0.0) || tracking.loop.window < 0) {
    throw std::invalid_argument("loop parameters out of range");
  }
  if (!(tracking.loop_weight > 0.0) || tracking.max_keyframes < 0) throw std::invalid_argument("tracking parameters out of range");
  if (eval.views < 0) throw std::invalid_argument("eval.views must be >= 0");
}

void apply_seed(RunConfig& config, std::uint64_t seed) {
  config.seed = seed;
  config.trajectory.seed = seed * 6364136223846793005ULL + 1442695040888963407ULL;
  config.atlas.field.seed = seed;
  config.atlas.field.grid.seed = seed + 17;
  config.eval.seed = seed + 101;
}

void apply_threads(RunConfig& config, int threads) {
  config.threads = threads;
  config.atlas.train.threads = threads;
  config.atlas.render.threads = threads;
}

RunConfig config_from_json(const Json& j) {
  check_keys(j, "", {"version", "seed", "output_dir", "threads", "camera", "scene", "trajectory", "tracking",
                     "mapping", "submaps", "eval"});
  RunConfig c;
  get(j, "version", c.version);
  std::uint64_t seed = c.seed;
  get(j, "seed", seed);
  get(j, "output_dir", c.output_dir);
  int threads = c.threads;
  get(j, "threads", threads);

  if (j.contains("camera")) {
    const Json& cj = j.at("camera");
    check_keys(cj, "camera", {"width", "height", "fx", "fy", "cx", "cy"});
    get(cj, "width", c.camera.width);
    get(cj, "height", c.camera.height);
    get(cj, "fx", c.camera.fx);
    get(cj, "fy", c.camera.fy);
    get(cj, "cx", c.camera.cx);
    get(cj, "cy", c.camera.cy);
  }
  if (j.contains("scene")) c.scene = scene_from_json(j.at("scene"));

  if (j.contains("trajectory")) {
    const Json& tj = j.at("trajectory");
    check_keys(tj, "trajectory", {"waypoints", "closed", "laps", "speed", "angular_speed_deg", "rate_hz", "drift"});
    auto& t = c.trajectory;
    if (tj.contains("waypoints")) {
      for (const Json& wj : tj.at("waypoints")) {
        check_keys(wj, "trajectory.waypoints", {"position", "yaw_deg", "pitch_deg"});
        Waypoint w;
        get_vec(wj, "position", w.position, "trajectory.waypoints");
        get_deg(wj, "yaw_deg", w.yaw);
        get_deg(wj, "pitch_deg", w.pitch);
        t.waypoints.push_back(w);
      }
    }
    get(tj, "closed", t.closed);
    get(tj, "laps", t.laps);
    get(tj, "speed", t.speed);
    get_deg(tj, "angular_speed_deg", t.angular_speed);
    get(tj, "rate_hz", t.rate_hz);
    if (tj.contains("drift")) {
      const Json& dj = tj.at("drift");
      check_keys(dj, "trajectory.drift", {"sigma_t", "sigma_r_deg", "bias_translation", "bias_rotation_deg"});
      get(dj, "sigma_t", t.drift.sigma_t);
      get_deg(dj, "sigma_r_deg", t.drift.sigma_r);
      Vec3 bt = t.drift.bias.head<3>();
      Vec3 br = t.drift.bias.tail<3>() / kDeg;
      get_vec(dj, "bias_translation", bt, "trajectory.drift");
      get_vec(dj, "bias_rotation_deg", br, "trajectory.drift");
      t.drift.bias << bt, br * kDeg;
    }
  }

  if (j.contains("tracking")) {
    const Json& tj = j.at("tracking");
    check_keys(tj, "tracking", {"keyframe_translation", "keyframe_rotation_deg", "loop_radius", "loop_angle_deg",
                                "loop_window", "loop_weight", "max_keyframes"});
    get(tj, "keyframe_translation", c.tracking.keyframe.translation);
    get_deg(tj, "keyframe_rotation_deg", c.tracking.keyframe.rotation);
    get(tj, "loop_radius", c.tracking.loop.radius);
    get_deg(tj, "loop_angle_deg", c.tracking.loop.angle);
    get(tj, "loop_window", c.tracking.loop.window);
    get(tj, "loop_weight", c.tracking.loop_weight);
    get(tj, "max_keyframes", c.tracking.max_keyframes);
  }

  if (j.contains("mapping")) {
    const Json& mj = j.at("mapping");
    check_keys(mj, "mapping", {"extent", "max_depth", "active_levels", "feature_dim", "hidden_dim", "init_scale",
                               "n_point", "m_pixels", "lambda_p", "lr_features", "lr_decoder", "iters_per_keyframe", "iters_new_submap",
                               "window", "growth_stride", "growth_dilation", "covis_stride", "t_min", "t_max", "min_opacity"});
    auto& g = c.atlas.field.grid;
    get(mj, "extent", g.extent);
    get(mj, "max_depth", g.max_depth);
    get(mj, "active_levels", g.active_levels);
    get(mj, "feature_dim", g.feature_dim);
    get(mj, "init_scale", g.init_scale);
    get(mj, "hidden_dim", c.atlas.field.hidden_dim);
    get(mj, "n_point", c.atlas.train.n_point);
    get(mj, "m_pixels", c.atlas.train.m_pixels);
    get(mj, "lambda_p", c.atlas.train.lambda_p);
    get(mj, "lr_features", c.atlas.field.feature_optimizer.lr);
    get(mj, "lr_decoder", c.atlas.field.decoder_optimizer.lr);
    get(mj, "iters_per_keyframe", c.atlas.submap.iters_per_keyframe);
    get(mj, "iters_new_submap", c.atlas.submap.iters_new_submap);
    get(mj, "window", c.atlas.submap.window);
    get(mj, "growth_stride", c.atlas.submap.growth_stride);
    get(mj, "covis_stride", c.atlas.submap.covis_stride);
    get(mj, "growth_dilation", c.atlas.submap.growth_dilation);
    get(mj, "t_min", c.atlas.train.t_min);
    get(mj, "t_max", c.atlas.train.t_max);
    get(mj, "min_opacity", c.atlas.render.min_opacity);
  }
  c.atlas.render.n_point = c.atlas.train.n_point;
  c.atlas.render.t_min = c.atlas.train.t_min;
  c.atlas.render.t_max = c.atlas.train.t_max;
  c.atlas.render.background = c.scene.background;

  if (j.contains("submaps")) {
    const Json& sj = j.at("submaps");
    check_keys(sj, "submaps", {"covis_threshold", "anchor_covis_threshold", "ft_translation", "ft_rotation_deg",
                               "finetune_budget"});
    get(sj, "covis_threshold", c.atlas.submap.covis_threshold);
    get(sj, "anchor_covis_threshold", c.atlas.submap.anchor_covis_threshold);
    get(sj, "ft_translation", c.atlas.submap.ft_translation);
    get_deg(sj, "ft_rotation_deg", c.atlas.submap.ft_rotation);
    get(sj, "finetune_budget", c.atlas.submap.finetune_budget);
  }
  if (j.contains("eval")) {
    const Json& ej = j.at("eval");
    check_keys(ej, "eval", {"views"});
    get(ej, "views", c.eval.views);
  }
  apply_seed(c, seed);
  apply_threads(c, threads);
  c.validate();
  return c;
}

Json config_to_json(const RunConfig& c) {
  Json j;
  j["version"] = c.version;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["threads"] = c.threads;
  j["camera"] = {{"width", c.camera.width}, {"height", c.camera.height}, {"fx", c.camera.fx},
                 {"fy", c.camera.fy},       {"cx", c.camera.cx},         {"cy", c.camera.cy}};
  j["scene"] = scene_to_json(c.scene);
  Json wps = Json::array();
  for (const auto& w : c.trajectory.waypoints) {
    wps.push_back({{"position", vec_json(w.position)}, {"yaw_deg", w.yaw / kDeg}, {"pitch_deg", w.pitch / kDeg}});
  }
  const auto& d = c.trajectory.drift;
  j["trajectory"] = {{"waypoints", wps},
                     {"closed", c.trajectory.closed},
                     {"laps", c.trajectory.laps},
                     {"speed", c.trajectory.speed},
                     {"angular_speed_deg", c.trajectory.angular_speed / kDeg},
                     {"rate_hz", c.trajectory.rate_hz},
                     {"drift",
                      {{"sigma_t", d.sigma_t},
                       {"sigma_r_deg", d.sigma_r / kDeg},
                       {"bias_translation", vec_json(d.bias.head<3>())},
                       {"bias_rotation_deg", vec_json(d.bias.tail<3>() / kDeg)}}}};
  j["tracking"] = {{"keyframe_translation", c.tracking.keyframe.translation},
                   {"keyframe_rotation_deg", c.tracking.keyframe.rotation / kDeg},
                   {"loop_radius", c.tracking.loop.radius},
                   {"loop_angle_deg", c.tracking.loop.angle / kDeg},
                   {"loop_window", c.tracking.loop.window},
                   {"loop_weight", c.tracking.loop_weight},
                   {"max_keyframes", c.tracking.max_keyframes}};
  const auto& g = c.atlas.field.grid;
  j["mapping"] = {{"extent", g.extent},
                  {"max_depth", g.max_depth},
                  {"active_levels", g.active_levels},
                  {"feature_dim", g.feature_dim},
                  {"init_scale", g.init_scale},
                  {"hidden_dim", c.atlas.field.hidden_dim},
                  {"n_point", c.atlas.train.n_point},
                  {"m_pixels", c.atlas.train.m_pixels},
                  {"lambda_p", c.atlas.train.lambda_p},
                  {"lr_features", c.atlas.field.feature_optimizer.lr},
                  {"lr_decoder", c.atlas.field.decoder_optimizer.lr},
                  {"iters_per_keyframe", c.atlas.submap.iters_per_keyframe},
                  {"iters_new_submap", c.atlas.submap.iters_new_submap},
                  {"window", c.atlas.submap.window},
                  {"growth_stride", c.atlas.submap.growth_stride},
                  {"covis_stride", c.atlas.submap.covis_stride},
                  {"growth_dilation", c.atlas.submap.growth_dilation},
                  {"t_min", c.atlas.train.t_min},
                  {"t_max", c.atlas.train.t_max},
                  {"min_opacity", c.atlas.render.min_opacity}};
  j["submaps"] = {{"covis_threshold", c.atlas.submap.covis_threshold},
                  {"anchor_covis_threshold", c.atlas.submap.anchor_covis_threshold},
                  {"ft_translation", c.atlas.submap.ft_translation},
                  {"ft_rotation_deg", c.atlas.submap.ft_rotation / kDeg},
                  {"finetune_budget", c.atlas.submap.finetune_budget}};
  j["eval"] = {{"views", c.eval.views}};
  return j;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw std::invalid_argument("config '" + path + "' is not valid JSON: " + e.what());
  }
  try {
    return config_from_json(j);
  } catch (const Json::exception& e) {
    throw std::invalid_argument("config '" + path + "': " + e.what());
  }
}

void save_config(const std::string& path, const RunConfig& config) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write config file '" + path + "'");
  out << config_to_json(config).dump(2) << "\n";
}

RunConfig default_room_config() {
  RunConfig c;
  c.scene = default_room_scene();
  c.atlas.field.grid.extent = 12.8;
  c.atlas.field.grid.max_depth = 8;
  auto& t = c.trajectory;
  const double z = 1.4;
  const double h = 0.9;
  const double pitch = -15.0 * kDeg;
  // Counter-clockwise rectangle; the camera looks along each side, then
  // turns on the spot at the corner.
  const Vec3 corners[4] = {{-h, -h, z}, {h, -h, z}, {h, h, z}, {-h, h, z}};
  for (int k = 0; k < 4; ++k) {
    const double yaw = k * 90.0 * kDeg;
    t.waypoints.push_back({corners[k], yaw, pitch});
    t.waypoints.push_back({corners[(k + 1) % 4], yaw, pitch});
  }
  t.closed = true;
  t.laps = 4;
  t.speed = 0.3;
  t.angular_speed = 30.0 * kDeg;
  t.drift.sigma_t = 0.002;
  t.drift.bias.setZero();
  c.tracking.max_keyframes = 200;
  c.atlas.train.m_pixels = 2048;
  c.atlas.field.decoder_optimizer.lr = 5e-3;
  c.atlas.submap.iters_per_keyframe = 10;
  c.atlas.render.background = c.scene.background;
  apply_seed(c, 1);
  return c;
}

RunConfig default_sphere_config() {
  RunConfig c;
  c.scene = unit_sphere_scene();
  c.atlas.field.grid.extent = 12.8;
  c.atlas.field.grid.max_depth = 8;
  auto& t = c.trajectory;
  const int n = 12;
  const double radius = 3.0;
  for (int k = 0; k < n; ++k) {
    const double a = 2.0 * M_PI * k / n;
    const double zc = (k % 2 == 0) ? 0.8 : -0.8;
    const Vec3 eye(radius * std::cos(a), radius * std::sin(a), zc);
    const double yaw = a + M_PI;
    const double pitch = std::atan2(-zc, radius);
    t.waypoints.push_back({eye, std::remainder(yaw, 2.0 * M_PI), pitch});
  }
  t.closed = true;
  t.laps = 1;
  t.speed = 0.5;
  t.angular_speed = 30.0 * kDeg;
  t.drift.sigma_t = 0.0;
  t.drift.bias.setZero();
  c.atlas.train.m_pixels = 1024;
  c.atlas.submap.iters_per_keyframe = 20;
  c.eval.views = 8;
  apply_seed(c, 1);
  return c;
}

}  // namespace nimap
