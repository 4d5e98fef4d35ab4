#include "cohere/io.hpp"

#include "cohere/error.hpp"

#include "json_fields.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace cohere::io {

using nlohmann::json;
using detail::Fields;
using detail::vec2_from;
using detail::vec3_from;

namespace {

constexpr char kSweepMagic[4] = {'C', 'H', 'R', '3'};

[[noreturn]] void parse_fail(const std::string& source, std::size_t offset, const std::string& what) {
  throw Error(ErrorKind::Parse, source + " at byte " + std::to_string(offset) + ": " + what);
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

void put_f32(std::string& out, double v) { put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v))); }

class ByteReader {
 public:
  ByteReader(const std::string& bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  void magic(const char (&expected)[4]) {
    need(4, "magic");
    if (std::memcmp(bytes_.data() + pos_, expected, 4) != 0) parse_fail(source_, pos_, "bad magic");
    pos_ += 4;
  }
  void expect_remaining(std::size_t n) const {
    if (bytes_.size() - pos_ != n) {
      parse_fail(source_, pos_, "expected " + std::to_string(n) + " payload bytes, found " +
                                    std::to_string(bytes_.size() - pos_));
    }
  }
  std::size_t pos() const { return pos_; }
  const std::string& source() const { return source_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) parse_fail(source_, pos_, std::string("truncated ") + what);
  }
  const std::string& bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Iterates non-blank lines, handing each parsed object and the byte offset
// of its line to `fn`.
template <typename Fn>
void for_each_json_line(const std::string& text, const std::string& source, Fn&& fn) {
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    const std::string line = text.substr(start, end - start);
    if (line.find_first_not_of(" \t\r") != std::string::npos) {
      json obj;
      try {
        obj = json::parse(line);
      } catch (const json::parse_error& e) {
        parse_fail(source, start + (e.byte > 0 ? e.byte - 1 : 0), e.what());
      }
      try {
        fn(obj, start);
      } catch (const json::exception& e) {
        parse_fail(source, start, e.what());
      }
    }
    start = end + 1;
  }
}

json parse_document(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    parse_fail(source, e.byte > 0 ? e.byte - 1 : 0, e.what());
  }
}

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }
json vec_json(const Eigen::Vector2d& v) { return json::array({v.x(), v.y()}); }

}  // namespace

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  // Values that round to zero print without a sign.
  if (std::strtod(buf, nullptr) == 0.0 && buf[0] == '-') return std::string(buf + 1);
  return buf;
}

std::string read_text(const fs::path& path) { return read_bytes(path); }

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + tmp.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw Error(ErrorKind::Io, "write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// Sweeps and the poses manifest

void write_sweep(const fs::path& path, const std::vector<Point3>& points) {
  std::string out(kSweepMagic, 4);
  put_u32(out, static_cast<std::uint32_t>(points.size()));
  out.reserve(8 + 16 * points.size());
  for (const Point3& p : points) {
    put_f32(out, p.x);
    put_f32(out, p.y);
    put_f32(out, p.z);
    put_f32(out, p.intensity);
  }
  write_text(path, out);
}

std::vector<Point3> read_sweep(const fs::path& path) {
  const std::string bytes = read_bytes(path);
  ByteReader in(bytes, path.string());
  in.magic(kSweepMagic);
  const std::uint32_t n = in.u32("point count");
  in.expect_remaining(static_cast<std::size_t>(n) * 16);
  std::vector<Point3> points(n);
  for (Point3& p : points) {
    const std::size_t at = in.pos();
    p.x = in.f32("point");
    p.y = in.f32("point");
    p.z = in.f32("point");
    p.intensity = in.f32("point");
    if (!p.finite()) parse_fail(in.source(), at, "non-finite point");
  }
  return points;
}

std::string sweep_filename(int frame, int sweep) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "frame_%06d_sweep_%02d.bin", frame, sweep);
  return buf;
}

std::vector<PoseRecord> read_manifest(const fs::path& path) {
  const std::string text = read_bytes(path);
  const std::string source = path.string();
  std::vector<PoseRecord> out;
  for_each_json_line(text, source, [&](const json& obj, std::size_t offset) {
    PoseRecord r;
    r.frame = obj.at("frame").get<int>();
    r.sweep = obj.at("sweep").get<int>();
    r.t = obj.at("t").get<double>();
    const json& q = obj.at("q");
    if (!q.is_array() || q.size() != 4) parse_fail(source, offset, "q must hold 4 numbers [w, x, y, z]");
    try {
      r.pose = Pose::from_quaternion(q[0].get<double>(), q[1].get<double>(), q[2].get<double>(), q[3].get<double>(),
                                     vec3_from(obj.at("p")));
    } catch (const Error& e) {
      parse_fail(source, offset, e.what());
    }
    r.file = obj.contains("file") ? obj.at("file").get<std::string>() : sweep_filename(r.frame, r.sweep);
    out.push_back(std::move(r));
  });
  return out;
}

void write_manifest(const fs::path& path, const std::vector<PoseRecord>& records) {
  std::string out;
  for (const PoseRecord& r : records) {
    Eigen::Quaterniond q = r.pose.quaternion();
    if (q.w() < 0.0) q.coeffs() = -q.coeffs();
    const Vec3& p = r.pose.translation();
    out += "{\"frame\":" + std::to_string(r.frame) + ",\"sweep\":" + std::to_string(r.sweep) + ",\"t\":" + g17(r.t) +
           ",\"q\":[" + g17(q.w()) + "," + g17(q.x()) + "," + g17(q.y()) + "," + g17(q.z()) + "],\"p\":[" +
           g17(p.x()) + "," + g17(p.y()) + "," + g17(p.z()) + "],\"file\":\"" + r.file + "\"}\n";
  }
  write_text(path, out);
}

void write_frames(const fs::path& dir, const std::vector<Frame>& frames) {
  fs::create_directories(dir);
  std::vector<PoseRecord> records;
  for (const Frame& f : frames) {
    for (std::size_t s = 0; s < f.sweeps.size(); ++s) {
      const Sweep& sweep = f.sweeps[s];
      PoseRecord r{f.index, static_cast<int>(s), sweep.timestamp, sweep.pose, sweep_filename(f.index, static_cast<int>(s))};
      write_sweep(dir / r.file, sweep.points);
      records.push_back(std::move(r));
    }
  }
  write_manifest(dir / "poses.jsonl", records);
}

std::vector<Frame> read_frames(const fs::path& dir) {
  const fs::path manifest = dir / "poses.jsonl";
  if (!fs::exists(manifest)) throw Error(ErrorKind::EmptyInput, "no frames found in " + dir.string());
  std::map<int, std::map<int, PoseRecord>> grouped;
  for (PoseRecord& r : read_manifest(manifest)) {
    auto& sweeps = grouped[r.frame];
    if (sweeps.contains(r.sweep)) {
      throw Error(ErrorKind::Parse, manifest.string() + ": duplicate sweep " + std::to_string(r.sweep) + " of frame " +
                                        std::to_string(r.frame));
    }
    sweeps.emplace(r.sweep, std::move(r));
  }
  if (grouped.empty()) throw Error(ErrorKind::EmptyInput, "no frames found in " + dir.string());
  std::vector<Frame> frames;
  for (auto& [index, records] : grouped) {
    std::vector<Sweep> sweeps;
    for (auto& [s, r] : records) {
      Sweep sweep;
      sweep.timestamp = r.t;
      sweep.pose = r.pose;
      sweep.points = read_sweep(dir / r.file);
      sweeps.push_back(std::move(sweep));
    }
    frames.push_back(compose_frame(std::move(sweeps), index));
  }
  return frames;
}

// ---------------------------------------------------------------------------
// Tracks

std::vector<TrackRecord> track_records(const TrackSet& set, std::span<const FrameDetections> detections) {
  std::vector<TrackRecord> out(set.tracks.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i].track_id = set.tracks[i].id;
  for (const FrameDetections& det : detections) {
    const auto it = set.assignments.find(det.frame);
    if (it == set.assignments.end()) continue;
    for (std::size_t c = 0; c < it->second.size(); ++c) {
      const int track = it->second[c];
      out.at(static_cast<std::size_t>(track))
          .entries.push_back({det.frame, static_cast<int>(c), det.pose.apply(det.center_start[c])});
    }
  }
  return out;
}

std::string format_tracks(const std::vector<TrackRecord>& tracks) {
  std::string out;
  for (const TrackRecord& t : tracks) {
    out += "{\"track_id\":" + std::to_string(t.track_id) + ",\"entries\":[";
    for (std::size_t i = 0; i < t.entries.size(); ++i) {
      const TrackEntry& e = t.entries[i];
      if (i > 0) out += ",";
      out += "[" + std::to_string(e.frame) + "," + std::to_string(e.cluster) + "," + fixed(e.center.x()) + "," +
             fixed(e.center.y()) + "," + fixed(e.center.z()) + "]";
    }
    out += "]}\n";
  }
  return out;
}

std::vector<TrackRecord> parse_tracks(const std::string& text, const std::string& source) {
  std::vector<TrackRecord> out;
  for_each_json_line(text, source, [&](const json& obj, std::size_t offset) {
    TrackRecord t;
    t.track_id = obj.at("track_id").get<int>();
    for (const json& e : obj.at("entries")) {
      if (!e.is_array() || e.size() != 5) parse_fail(source, offset, "track entries are [frame, cluster, cx, cy, cz]");
      t.entries.push_back({e[0].get<int>(), e[1].get<int>(), {e[2].get<double>(), e[3].get<double>(), e[4].get<double>()}});
    }
    for (std::size_t i = 1; i < t.entries.size(); ++i) {
      if (t.entries[i].frame <= t.entries[i - 1].frame) {
        parse_fail(source, offset, "track " + std::to_string(t.track_id) + " frames must increase");
      }
    }
    out.push_back(std::move(t));
  });
  return out;
}

std::vector<TrackRecord> read_tracks(const fs::path& path) { return parse_tracks(read_bytes(path), path.string()); }

// ---------------------------------------------------------------------------
// Feature maps

void write_feature_map(const fs::path& path, const FeatureMap& map) {
  std::string out;
  put_u32(out, static_cast<std::uint32_t>(map.height()));
  put_u32(out, static_cast<std::uint32_t>(map.width()));
  put_u32(out, static_cast<std::uint32_t>(map.channels()));
  const BevGeometry& g = map.geometry();
  for (double v : {g.x_min, g.x_max, g.y_min, g.y_max, g.cell}) put_f32(out, v);
  out.reserve(out.size() + 4 * map.data().size());
  for (double v : map.data()) put_f32(out, v);
  write_text(path, out);
}

FeatureMap read_feature_map(const fs::path& path) {
  const std::string bytes = read_bytes(path);
  ByteReader in(bytes, path.string());
  const std::uint32_t h = in.u32("height");
  const std::uint32_t w = in.u32("width");
  const std::uint32_t c = in.u32("channels");
  BevGeometry g;
  g.x_min = in.f32("extent");
  g.x_max = in.f32("extent");
  g.y_min = in.f32("extent");
  g.y_max = in.f32("extent");
  g.cell = in.f32("cell size");
  const std::size_t header_end = in.pos();
  try {
    g.validate();
  } catch (const Error& e) {
    parse_fail(in.source(), header_end, e.what());
  }
  if (static_cast<std::uint32_t>(g.height()) != h || static_cast<std::uint32_t>(g.width()) != w || c == 0) {
    parse_fail(in.source(), header_end, "grid shape does not match its extent");
  }
  in.expect_remaining(static_cast<std::size_t>(h) * w * c * 4);
  FeatureMap map(g, static_cast<int>(c));
  for (double& v : map.data()) v = in.f32("payload");
  return map;
}

// ---------------------------------------------------------------------------
// Ground truth, scene specs, encoders, banks

std::string format_ground_truth(const GroundTruth& truth) {
  json frames = json::array();
  for (const FrameTruth& f : truth.frames) {
    json instances = json::array();
    for (const InstanceTruth& inst : f.instances) {
      instances.push_back({{"object", inst.object},
                           {"start_world", vec_json(inst.start_world)},
                           {"end_world", vec_json(inst.end_world)},
                           {"start_ego", vec_json(inst.start_ego)},
                           {"end_ego", vec_json(inst.end_ego)}});
    }
    frames.push_back({{"frame", f.frame}, {"instances", instances}, {"point_labels", f.point_labels}});
  }
  json trajectories = json::object();
  for (const auto& [object, list] : truth.trajectories) trajectories[std::to_string(object)] = list;
  return json{{"frames", frames}, {"trajectories", trajectories}}.dump() + "\n";
}

GroundTruth parse_ground_truth(const std::string& text, const std::string& source) {
  const json doc = parse_document(text, source);
  GroundTruth truth;
  try {
    for (const json& f : doc.at("frames")) {
      FrameTruth ft;
      ft.frame = f.at("frame").get<int>();
      if (f.contains("point_labels")) ft.point_labels = f.at("point_labels").get<std::vector<int>>();
      for (const json& inst : f.at("instances")) {
        InstanceTruth it;
        it.object = inst.at("object").get<int>();
        it.start_world = vec3_from(inst.at("start_world"));
        it.end_world = vec3_from(inst.at("end_world"));
        if (inst.contains("start_ego")) it.start_ego = vec3_from(inst.at("start_ego"));
        if (inst.contains("end_ego")) it.end_ego = vec3_from(inst.at("end_ego"));
        ft.instances.push_back(it);
      }
      truth.frames.push_back(std::move(ft));
    }
  } catch (const json::exception& e) {
    parse_fail(source, 0, e.what());
  }
  for (const FrameTruth& f : truth.frames) {
    for (const InstanceTruth& inst : f.instances) truth.trajectories[inst.object].push_back(f.frame);
  }
  return truth;
}

std::string format_scene_spec(const SceneSpec& spec) {
  json objects = json::array();
  for (const BoxObject& o : spec.objects) {
    objects.push_back({{"size", vec_json(o.size)},
                       {"position", vec_json(o.position)},
                       {"yaw", o.yaw},
                       {"elevation", o.elevation},
                       {"velocity", vec_json(o.velocity)}});
  }
  const json doc = {{"seed", spec.seed},
                    {"frames", spec.frames},
                    {"sweeps_per_frame", spec.sweeps_per_frame},
                    {"sweep_interval", spec.sweep_interval},
                    {"frame_interval", spec.frame_interval},
                    {"ego",
                     {{"position", vec_json(spec.ego.position)},
                      {"yaw", spec.ego.yaw},
                      {"velocity", vec_json(spec.ego.velocity)},
                      {"yaw_rate", spec.ego.yaw_rate}}},
                    {"objects", objects},
                    {"noise_sigma", spec.noise_sigma},
                    {"points_per_object", spec.points_per_object},
                    {"ground_points", spec.ground_points},
                    {"ground_radius", spec.ground_radius},
                    {"sensor_range", spec.sensor_range},
                    {"speed_bound", spec.speed_bound},
                    {"surface_drift", spec.surface_drift}};
  return doc.dump(2) + "\n";
}

SceneSpec parse_scene_spec(const std::string& text, const std::string& source) {
  const json doc = parse_document(text, source);
  SceneSpec spec;
  try {
    Fields top(doc, source);
    top.get("seed", spec.seed);
    top.get("frames", spec.frames);
    top.get("sweeps_per_frame", spec.sweeps_per_frame);
    top.get("sweep_interval", spec.sweep_interval);
    top.get("frame_interval", spec.frame_interval);
    top.get("noise_sigma", spec.noise_sigma);
    top.get("points_per_object", spec.points_per_object);
    top.get("ground_points", spec.ground_points);
    top.get("ground_radius", spec.ground_radius);
    top.get("sensor_range", spec.sensor_range);
    top.get("speed_bound", spec.speed_bound);
    top.get("surface_drift", spec.surface_drift);
    if (const json* ego = top.sub("ego")) {
      Fields f(*ego, source + " ego");
      f.get("position", spec.ego.position);
      f.get("yaw", spec.ego.yaw);
      f.get("velocity", spec.ego.velocity);
      f.get("yaw_rate", spec.ego.yaw_rate);
      f.finish();
    }
    if (const json* objects = top.sub("objects")) {
      for (const json& o : *objects) {
        BoxObject box;
        Fields f(o, source + " object " + std::to_string(spec.objects.size()));
        f.get("size", box.size);
        f.get("position", box.position);
        f.get("yaw", box.yaw);
        f.get("elevation", box.elevation);
        f.get("velocity", box.velocity);
        f.finish();
        spec.objects.push_back(box);
      }
    }
    top.finish();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, source + ": " + e.what());
  }
  validate_scene(spec);
  return spec;
}

std::string format_encoder(const EncoderParams& params) {
  const json doc = {
      {"out_channels", params.out_channels}, {"in_channels", params.in_channels}, {"values", params.values}};
  return doc.dump() + "\n";
}

EncoderParams parse_encoder(const std::string& text, const std::string& source) {
  const json doc = parse_document(text, source);
  EncoderParams p;
  try {
    p.out_channels = doc.at("out_channels").get<int>();
    p.in_channels = doc.at("in_channels").get<int>();
    p.values = doc.at("values").get<std::vector<double>>();
  } catch (const json::exception& e) {
    parse_fail(source, 0, e.what());
  }
  const std::size_t expected = static_cast<std::size_t>(p.out_channels) * static_cast<std::size_t>(p.in_channels + 1);
  if (p.out_channels < 1 || p.in_channels < 1 || p.values.size() != expected) {
    throw Error(ErrorKind::ShapeMismatch, source + ": encoder value count does not match its shape");
  }
  return p;
}

std::string format_bank(const MemoryBank& bank) {
  json tracks = json::array();
  for (const auto& [track, slot] : bank.slots()) {
    json entries = json::array();
    for (const auto& [frame, feature] : slot.entries) {
      entries.push_back({{"frame", frame}, {"feature", std::vector<double>(feature.data(), feature.data() + feature.size())}});
    }
    tracks.push_back({{"track_id", track}, {"created", slot.created}, {"entries", entries}});
  }
  return json{{"history", bank.history()}, {"tracks", tracks}}.dump() + "\n";
}

}  // namespace cohere::io
