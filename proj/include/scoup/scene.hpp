#pragma once

#include "scoup/common.hpp"

#include <nlohmann/json.hpp>

#include <Eigen/Geometry>

#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

namespace scoup {

/// One Gaussian in its stored (export) parameterization: log scales,
/// logit opacity, unnormalized quaternion (w, x, y, z), degree-0 SH color.
struct Gaussian {
  std::array<float, 3> center{};
  std::array<float, 3> log_scale{};
  std::array<float, 4> rotation{1.f, 0.f, 0.f, 0.f};
  float opacity_logit = 0.f;
  std::array<float, 3> base_color{};

  bool operator==(const Gaussian&) const = default;
};

/// Activated parameters used by every renderer.
struct ActivatedGaussian {
  Vec3 center;
  Vec3 scale;
  Eigen::Quaterniond rotation;
  double opacity = 0.0;
  Vec3 sh_dc;
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline ActivatedGaussian activate(const Gaussian& g) {
  ActivatedGaussian a;
  a.center = Vec3(g.center[0], g.center[1], g.center[2]);
  a.scale = Vec3(std::exp(double(g.log_scale[0])), std::exp(double(g.log_scale[1])), std::exp(double(g.log_scale[2])));
  a.rotation = Eigen::Quaterniond(g.rotation[0], g.rotation[1], g.rotation[2], g.rotation[3]);
  a.rotation.normalize();
  a.opacity = sigmoid(g.opacity_logit);
  a.sh_dc = Vec3(g.base_color[0], g.base_color[1], g.base_color[2]);
  return a;
}

namespace detail {

inline bool all_finite(const Gaussian& g) {
  auto finite = [](const auto& arr) {
    return std::all_of(arr.begin(), arr.end(), [](float v) { return std::isfinite(v); });
  };
  return finite(g.center) && finite(g.log_scale) && finite(g.rotation) && std::isfinite(g.opacity_logit) &&
         finite(g.base_color);
}

}  // namespace detail

/// Ordered, immutable set of Gaussians. Identity is list position.
/// Activation happens once, here.
class GaussianScene {
 public:
  GaussianScene() = default;

  explicit GaussianScene(std::vector<Gaussian> gaussians) : stored_(std::move(gaussians)) {
    if (stored_.empty()) throw DataError("scene must contain at least one Gaussian");
    activated_.reserve(stored_.size());
    for (std::size_t i = 0; i < stored_.size(); ++i) {
      const auto& g = stored_[i];
      if (!detail::all_finite(g)) throw DataError("non-finite parameter in Gaussian " + std::to_string(i));
      const double qn = std::sqrt(double(g.rotation[0]) * g.rotation[0] + double(g.rotation[1]) * g.rotation[1] +
                                  double(g.rotation[2]) * g.rotation[2] + double(g.rotation[3]) * g.rotation[3]);
      if (qn == 0.0) throw DataError("zero quaternion in Gaussian " + std::to_string(i));
      activated_.push_back(activate(g));
    }
  }

  std::size_t size() const { return stored_.size(); }
  const std::vector<Gaussian>& stored() const { return stored_; }
  const std::vector<ActivatedGaussian>& activated() const { return activated_; }
  const ActivatedGaussian& operator[](std::size_t i) const { return activated_[i]; }

 private:
  std::vector<Gaussian> stored_;
  std::vector<ActivatedGaussian> activated_;
};

/// Pinhole camera, OpenCV convention (+z forward, +y down). Pixel (x, y)
/// is sampled at its center (x + 0.5, y + 0.5).
struct Camera {
  double fx = 1, fy = 1, cx = 0, cy = 0;
  int width = 1, height = 1;
  Mat4 world_to_camera = Mat4::Identity();

  Mat3 rotation() const { return world_to_camera.topLeftCorner<3, 3>(); }
  Vec3 translation() const { return world_to_camera.topRightCorner<3, 1>(); }
  std::size_t pixel_count() const { return std::size_t(width) * std::size_t(height); }

  bool operator==(const Camera& o) const {
    return fx == o.fx && fy == o.fy && cx == o.cx && cy == o.cy && width == o.width && height == o.height &&
           world_to_camera == o.world_to_camera;
  }
};

/// Throws DataError naming `index` when the camera is not a valid rigid pinhole.
inline void validate_camera(const Camera& cam, std::size_t index = 0) {
  const std::string where = "camera " + std::to_string(index) + ": ";
  if (!(cam.fx > 0) || !(cam.fy > 0)) throw DataError(where + "focal lengths must be positive");
  if (cam.width <= 0 || cam.height <= 0) throw DataError(where + "image size must be positive");
  if (!cam.world_to_camera.allFinite()) throw DataError(where + "non-finite pose");
  const Mat3 r = cam.rotation();
  if ((r * r.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6 || std::abs(r.determinant() - 1.0) > 1e-6)
    throw DataError(where + "world_to_camera rotation is not a proper rotation");
  Eigen::RowVector4d last = cam.world_to_camera.row(3);
  if ((last - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() > 1e-9)
    throw DataError(where + "world_to_camera last row must be (0, 0, 0, 1)");
}

/// Camera at `eye` looking at `target`, with world +z as the up hint.
inline Camera look_at(const Vec3& eye, const Vec3& target, double focal, int width, int height) {
  Vec3 forward = (target - eye).normalized();
  Vec3 up_hint(0, 0, 1);
  if (std::abs(forward.dot(up_hint)) > 0.99) up_hint = Vec3(0, 1, 0);
  Vec3 right = forward.cross(up_hint).normalized();
  Vec3 down = forward.cross(right);
  Mat3 r;
  r.row(0) = right.transpose();
  r.row(1) = down.transpose();
  r.row(2) = forward.transpose();
  Camera cam;
  cam.fx = cam.fy = focal;
  cam.cx = width / 2.0;
  cam.cy = height / 2.0;
  cam.width = width;
  cam.height = height;
  cam.world_to_camera.setIdentity();
  cam.world_to_camera.topLeftCorner<3, 3>() = r;
  cam.world_to_camera.topRightCorner<3, 1>() = -r * eye;
  return cam;
}

// ---------------------------------------------------------------------------
// Scene PLY

namespace detail {

inline std::size_t ply_type_size(const std::string& type) {
  static const std::unordered_map<std::string, std::size_t> sizes = {
      {"char", 1},  {"uchar", 1},  {"int8", 1},  {"uint8", 1},   {"short", 2},  {"ushort", 2},
      {"int16", 2}, {"uint16", 2}, {"int", 4},   {"uint", 4},    {"int32", 4},  {"uint32", 4},
      {"float", 4}, {"float32", 4}, {"double", 8}, {"float64", 8}};
  auto it = sizes.find(type);
  if (it == sizes.end()) throw FormatError("unsupported PLY property type: " + type);
  return it->second;
}

inline constexpr std::array<const char*, 14> kScenePlyProperties = {
    "x",     "y",     "z",     "opacity", "scale_0", "scale_1", "scale_2",
    "rot_0", "rot_1", "rot_2", "rot_3",   "f_dc_0",  "f_dc_1",  "f_dc_2"};

}  // namespace detail

inline GaussianScene load_scene_ply(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open scene: " + path);

  std::string line;
  std::getline(in, line);
  if (line != "ply") throw FormatError(path + ": not a PLY file");

  struct Property {
    std::string name;
    std::string type;
    std::size_t offset;
  };
  std::vector<Property> props;
  std::size_t vertex_count = 0;
  std::size_t stride = 0;
  bool in_vertex = false;
  bool seen_vertex = false;
  bool binary_le = false;

  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "end_header") break;
    if (word == "format") {
      std::string fmt;
      ls >> fmt;
      binary_le = fmt == "binary_little_endian";
    } else if (word == "element") {
      std::string name;
      std::size_t count = 0;
      ls >> name >> count;
      if (seen_vertex && name != "vertex") {
        in_vertex = false;  // trailing elements are ignored
        continue;
      }
      if (name != "vertex") throw FormatError(path + ": vertex element must come first");
      in_vertex = seen_vertex = true;
      vertex_count = count;
    } else if (word == "property" && in_vertex) {
      std::string type, name;
      ls >> type;
      if (type == "list") throw FormatError(path + ": list properties are not supported on vertex");
      ls >> name;
      props.push_back({name, type, stride});
      stride += detail::ply_type_size(type);
    }
  }
  if (!binary_le) throw FormatError(path + ": only binary_little_endian PLY is supported");
  if (!seen_vertex) throw FormatError(path + ": missing vertex element");

  std::array<std::size_t, detail::kScenePlyProperties.size()> offsets{};
  for (std::size_t k = 0; k < detail::kScenePlyProperties.size(); ++k) {
    const std::string want = detail::kScenePlyProperties[k];
    auto it = std::find_if(props.begin(), props.end(), [&](const Property& p) { return p.name == want; });
    if (it == props.end()) throw FormatError(path + ": missing property '" + want + "'");
    if (it->type != "float" && it->type != "float32")
      throw FormatError(path + ": property '" + want + "' must be float32");
    offsets[k] = it->offset;
  }

  std::vector<char> buffer(vertex_count * stride);
  in.read(buffer.data(), static_cast<std::streamsize>(buffer.size()));
  if (static_cast<std::size_t>(in.gcount()) != buffer.size()) throw FormatError(path + ": truncated vertex data");

  std::vector<Gaussian> gaussians(vertex_count);
  for (std::size_t i = 0; i < vertex_count; ++i) {
    const char* row = buffer.data() + i * stride;
    float v[detail::kScenePlyProperties.size()];
    for (std::size_t k = 0; k < offsets.size(); ++k) {
      std::memcpy(&v[k], row + offsets[k], sizeof(float));
      if (!std::isfinite(v[k]))
        throw DataError(path + ": non-finite '" + detail::kScenePlyProperties[k] + "' in Gaussian " +
                        std::to_string(i));
    }
    auto& g = gaussians[i];
    g.center = {v[0], v[1], v[2]};
    g.opacity_logit = v[3];
    g.log_scale = {v[4], v[5], v[6]};
    g.rotation = {v[7], v[8], v[9], v[10]};
    g.base_color = {v[11], v[12], v[13]};
  }
  return GaussianScene(std::move(gaussians));
}

/// Writes exactly the documented property set. Validation happens before
/// the file is opened.
inline void save_scene_ply(const std::vector<Gaussian>& gaussians, const std::string& path) {
  if (gaussians.empty()) throw DataError("refusing to write an empty scene");
  for (std::size_t i = 0; i < gaussians.size(); ++i)
    if (!detail::all_finite(gaussians[i])) throw DataError("non-finite parameter in Gaussian " + std::to_string(i));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "ply\nformat binary_little_endian 1.0\nelement vertex " << gaussians.size() << "\n";
  for (const char* name : detail::kScenePlyProperties) out << "property float " << name << "\n";
  out << "end_header\n";
  for (const auto& g : gaussians) {
    const float row[14] = {g.center[0],   g.center[1],   g.center[2],   g.opacity_logit, g.log_scale[0],
                           g.log_scale[1], g.log_scale[2], g.rotation[0], g.rotation[1],   g.rotation[2],
                           g.rotation[3],  g.base_color[0], g.base_color[1], g.base_color[2]};
    out.write(reinterpret_cast<const char*>(row), sizeof row);
  }
  out.flush();
  if (!out) throw IoError("write failed: " + path);
}

inline void save_scene_ply(const GaussianScene& scene, const std::string& path) {
  save_scene_ply(scene.stored(), path);
}

// ---------------------------------------------------------------------------
// Camera JSON

inline nlohmann::json camera_to_json(const Camera& cam) {
  nlohmann::json pose = nlohmann::json::array();
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) pose.push_back(cam.world_to_camera(r, c));
  return {{"fx", cam.fx},       {"fy", cam.fy},         {"cx", cam.cx},           {"cy", cam.cy},
          {"width", cam.width}, {"height", cam.height}, {"world_to_camera", pose}};
}

inline std::vector<Camera> cameras_from_json(const nlohmann::json& doc) {
  if (!doc.is_array()) throw FormatError("camera file must hold a JSON list");
  std::vector<Camera> cams;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& e = doc[i];
    Camera cam;
    try {
      cam.fx = e.at("fx").get<double>();
      cam.fy = e.at("fy").get<double>();
      cam.cx = e.at("cx").get<double>();
      cam.cy = e.at("cy").get<double>();
      cam.width = e.at("width").get<int>();
      cam.height = e.at("height").get<int>();
      const auto& pose = e.at("world_to_camera");
      if (!pose.is_array() || pose.size() != 16)
        throw FormatError("camera " + std::to_string(i) + ": world_to_camera needs 16 numbers");
      for (int k = 0; k < 16; ++k) cam.world_to_camera(k / 4, k % 4) = pose[k].get<double>();
    } catch (const nlohmann::json::exception& ex) {
      throw FormatError("camera " + std::to_string(i) + ": " + ex.what());
    }
    validate_camera(cam, i);
    cams.push_back(cam);
  }
  return cams;
}

inline std::vector<Camera> load_cameras(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open cameras: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError(path + ": " + ex.what());
  }
  return cameras_from_json(doc);
}

inline void save_cameras(const std::vector<Camera>& cams, const std::string& path) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& c : cams) doc.push_back(camera_to_json(c));
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << doc.dump(1) << "\n";
}

}  // namespace scoup
