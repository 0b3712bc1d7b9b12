#include "nimap/checkpoint.hpp"

#include "nimap/binary_io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace nimap {

namespace fs = std::filesystem;

namespace {

void write_pose(std::ostream& out, const Pose& p) {
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) io::write<double>(out, p.rotation()(r, c));
    io::write<double>(out, p.translation()[r]);
  }
}

Pose read_pose(std::istream& in) {
  Mat3 R;
  Vec3 t;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) R(r, c) = io::read<double>(in);
    t[r] = io::read<double>(in);
  }
  return {R, t};
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io::FormatError("checkpoint file missing: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint file " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing checkpoint file " + path.string());
}

std::string submap_bytes(const Submap& s) {
  std::ostringstream out(std::ios::binary);
  io::write_tag(out, "NMSUBMAP", 1);
  io::write<std::int32_t>(out, s.id);
  io::write<std::int32_t>(out, s.anchor_kf_id);
  write_pose(out, s.anchor_pose);
  io::write<double>(out, s.training_seconds);
  std::vector<std::int32_t> members(s.members.begin(), s.members.end());
  io::write_array<std::int32_t>(out, members);
  io::write<std::uint64_t>(out, s.trained_relative.size());
  for (const auto& [id, pose] : s.trained_relative) {
    io::write<std::int32_t>(out, id);
    write_pose(out, pose);
  }
  std::vector<std::uint64_t> leaves(s.anchor_leaves.begin(), s.anchor_leaves.end());
  std::sort(leaves.begin(), leaves.end());
  io::write_array<std::uint64_t>(out, leaves);
  s.field.grid.save(out);
  s.field.occupancy.save(out);
  s.field.color.save(out);
  return out.str();
}

Submap parse_submap(const std::string& bytes, const FieldConfig& base) {
  std::istringstream in(bytes, std::ios::binary);
  io::expect_tag(in, "NMSUBMAP", 1);
  const auto id = io::read<std::int32_t>(in);
  const auto anchor = io::read<std::int32_t>(in);
  const Pose anchor_pose = read_pose(in);
  const double seconds = io::read<double>(in);
  const auto members = io::read_array<std::int32_t>(in);
  const auto n_rel = io::read<std::uint64_t>(in);
  std::map<int, Pose> rel;
  for (std::uint64_t i = 0; i < n_rel; ++i) {
    const auto kid = io::read<std::int32_t>(in);
    rel[kid] = read_pose(in);
  }
  const auto leaves = io::read_array<std::uint64_t>(in);
  OctreeFeatureGrid grid = OctreeFeatureGrid::load(in);
  MlpDecoder occ = MlpDecoder::load(in);
  MlpDecoder col = MlpDecoder::load(in);
  FieldConfig cfg = base;
  cfg.grid = grid.config();
  Submap s(id, anchor, anchor_pose, NeuralField(std::move(grid), std::move(occ), std::move(col), cfg));
  s.training_seconds = seconds;
  s.members.assign(members.begin(), members.end());
  s.trained_relative = std::move(rel);
  s.anchor_leaves.insert(leaves.begin(), leaves.end());
  return s;
}

}  // namespace

void save_checkpoint(const std::string& dir, const RunConfig& config, const SubmapAtlas& atlas) {
  fs::create_directories(dir);
  Json manifest;
  manifest["format"] = "nimap-checkpoint";
  manifest["version"] = kCheckpointVersion;
  manifest["config_hash"] = hex64(scene_hash(config.scene));
  manifest["intrinsics"] = {{"width", config.camera.width}, {"height", config.camera.height},
                            {"fx", config.camera.fx},       {"fy", config.camera.fy},
                            {"cx", config.camera.cx},       {"cy", config.camera.cy}};
  manifest["config"] = config_to_json(config);
  manifest["active_submap"] = atlas.active_submap();
  Json files = Json::array();
  for (const Submap& s : atlas.submaps()) {
    char name[32];
    std::snprintf(name, sizeof(name), "submap_%04d.bin", s.id);
    const std::string bytes = submap_bytes(s);
    write_file(fs::path(dir) / name, bytes);
    const auto q = s.anchor_pose.quaternion();
    const Vec3& t = s.anchor_pose.translation();
    files.push_back({{"id", s.id},
                     {"file", name},
                     {"checksum", hex64(io::fnv1a(bytes))},
                     {"anchor_kf", s.anchor_kf_id},
                     {"anchor_pose", {t.x(), t.y(), t.z(), q.x(), q.y(), q.z(), q.w()}}});
  }
  manifest["submaps"] = files;

  std::ostringstream kf(std::ios::binary);
  io::write_tag(kf, "NMKFPOSE", 1);
  io::write<std::uint64_t>(kf, atlas.keyframes().size());
  for (const auto& [id, k] : atlas.keyframes()) {
    io::write<std::int32_t>(kf, id);
    io::write<std::int32_t>(kf, k.frame_index);
    io::write<std::int32_t>(kf, atlas.owner(id));
    io::write<double>(kf, k.timestamp);
    write_pose(kf, k.pose);
    write_pose(kf, k.gt_pose);
  }
  const std::string kf_bytes = kf.str();
  write_file(fs::path(dir) / "keyframes.bin", kf_bytes);
  manifest["keyframes"] = {{"file", "keyframes.bin"}, {"checksum", hex64(io::fnv1a(kf_bytes))}};

  std::ofstream out(fs::path(dir) / "manifest.json");
  if (!out) throw std::runtime_error("cannot write checkpoint manifest in " + dir);
  out << manifest.dump(2) << "\n";
}

LoadedCheckpoint load_checkpoint(const std::string& dir) {
  const fs::path root(dir);
  Json manifest;
  try {
    manifest = Json::parse(read_file(root / "manifest.json"));
  } catch (const Json::exception& e) {
    throw io::FormatError(std::string("corrupt checkpoint manifest: ") + e.what());
  }
  try {
    if (manifest.value("format", "") != "nimap-checkpoint") throw io::FormatError("not a checkpoint directory");
    if (manifest.value("version", -1) != kCheckpointVersion) throw io::FormatError("unsupported checkpoint version");
    LoadedCheckpoint ck;
    ck.config = config_from_json(manifest.at("config"));
    ck.config_hash = std::stoull(manifest.at("config_hash").get<std::string>(), nullptr, 16);
    if (ck.config_hash != scene_hash(ck.config.scene)) throw io::FormatError("checkpoint config hash mismatch");
    ck.atlas = std::make_unique<SubmapAtlas>(ck.config.atlas);

    auto verified = [&](const Json& entry) {
      const std::string bytes = read_file(root / entry.at("file").get<std::string>());
      if (hex64(io::fnv1a(bytes)) != entry.at("checksum").get<std::string>()) {
        throw io::FormatError("checksum mismatch in " + entry.at("file").get<std::string>());
      }
      return bytes;
    };
    for (const Json& entry : manifest.at("submaps")) {
      Submap s = parse_submap(verified(entry), ck.config.atlas.field);
      if (s.id != static_cast<int>(ck.atlas->submaps().size())) throw io::FormatError("submap ids out of order");
      ck.atlas->submaps().push_back(std::move(s));
    }

    std::istringstream kf(verified(manifest.at("keyframes")), std::ios::binary);
    io::expect_tag(kf, "NMKFPOSE", 1);
    const auto n = io::read<std::uint64_t>(kf);
    std::vector<std::pair<int, int>> owners;
    for (std::uint64_t i = 0; i < n; ++i) {
      Keyframe k;
      k.id = io::read<std::int32_t>(kf);
      k.frame_index = io::read<std::int32_t>(kf);
      const int owner = io::read<std::int32_t>(kf);
      k.timestamp = io::read<double>(kf);
      k.pose = read_pose(kf);
      k.gt_pose = read_pose(kf);
      k.intrinsics = ck.config.camera;
      owners.emplace_back(k.id, owner);
      ck.atlas->add_keyframe(std::move(k));
    }
    // Member lists were restored with each submap; rebuild the reverse map only.
    for (auto& s : ck.atlas->submaps()) {
      const auto members = s.members;
      s.members.clear();
      for (int id : members) ck.atlas->assign(id, s.id);
    }
    for (const auto& [id, owner] : owners) {
      if (ck.atlas->owner(id) != owner) throw io::FormatError("keyframe ownership inconsistent");
    }
    ck.atlas->set_active_submap(manifest.value("active_submap", -1));
    return ck;
  } catch (const Json::exception& e) {
    throw io::FormatError(std::string("corrupt checkpoint manifest: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw io::FormatError(std::string("corrupt checkpoint: ") + e.what());
  } catch (const std::out_of_range& e) {
    throw io::FormatError(std::string("corrupt checkpoint: ") + e.what());
  }
}

}  // namespace nimap
