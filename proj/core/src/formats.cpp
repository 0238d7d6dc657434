#include "gsvr/formats.hpp"

#include <bit>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

namespace gsvr {

static_assert(std::endian::native == std::endian::little,
              "payload I/O assumes a little-endian host");

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& s, const std::string& key) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || (end && *end != '\0' && *end != ' '))
    throw FileFormatError(FormatError::bad_value, "bad numeric value for key '" + key + "'");
  return v;
}

// Ordered key/value metadata block fenced by the binary header.
class MetaBlock {
 public:
  void put(const std::string& key, const std::string& value) {
    keys_.push_back(key);
    map_[key] = value;
  }
  void put_double(const std::string& key, double v) { put(key, format_double(v)); }
  void put_int(const std::string& key, long long v) { put(key, std::to_string(v)); }

  static MetaBlock parse(const std::string& text) {
    MetaBlock m;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw FileFormatError(FormatError::bad_value, "metadata line without '=': " + line);
      std::string key = line.substr(0, eq);
      std::string value = line.substr(eq + 1);
      auto trim = [](std::string& s) {
        const auto b = s.find_first_not_of(" \t");
        const auto e = s.find_last_not_of(" \t\r");
        s = b == std::string::npos ? "" : s.substr(b, e - b + 1);
      };
      trim(key);
      trim(value);
      if (key.empty())
        throw FileFormatError(FormatError::bad_value, "metadata line with empty key");
      m.put(key, value);
    }
    return m;
  }

  std::string serialize() const {
    std::string out;
    for (const std::string& k : keys_) out += k + " = " + map_.at(k) + "\n";
    return out;
  }

  const std::string& get(const std::string& key) {
    auto it = map_.find(key);
    if (it == map_.end())
      throw FileFormatError(FormatError::missing_key, "missing metadata key '" + key + "'");
    consumed_.insert(key);
    return it->second;
  }
  double get_double(const std::string& key) { return parse_double(get(key), key); }
  long long get_int(const std::string& key) {
    const std::string& s = get(key);
    char* end = nullptr;
    const long long v = std::strtoll(s.c_str(), &end, 10);
    if (end == s.c_str() || *end != '\0')
      throw FileFormatError(FormatError::bad_value, "bad integer value for key '" + key + "'");
    return v;
  }
  std::string get_optional(const std::string& key, const std::string& fallback) {
    auto it = map_.find(key);
    if (it == map_.end()) return fallback;
    consumed_.insert(key);
    return it->second;
  }
  Eigen::Vector3d get_vec3(const std::string& key) {
    std::istringstream in(get(key));
    Eigen::Vector3d v;
    if (!(in >> v.x() >> v.y() >> v.z()))
      throw FileFormatError(FormatError::bad_value, "bad 3-vector for key '" + key + "'");
    return v;
  }
  void put_vec3(const std::string& key, const Eigen::Vector3d& v) {
    put(key, format_double(v.x()) + " " + format_double(v.y()) + " " + format_double(v.z()));
  }

  void reject_unknown() const {
    for (const std::string& k : keys_)
      if (!consumed_.count(k))
        throw FileFormatError(FormatError::unknown_key, "unknown metadata key '" + k + "'");
  }

  std::map<std::string, std::string> remaining() const {
    std::map<std::string, std::string> out;
    for (const std::string& k : keys_)
      if (!consumed_.count(k)) out[k] = map_.at(k);
    return out;
  }

  void check_endianness() {
    const std::string e = get("endianness");
    if (e != "little")
      throw FileFormatError(FormatError::unsupported_encoding,
                            "unsupported payload encoding '" + e + "' (little-endian only)");
  }

 private:
  std::vector<std::string> keys_;
  std::map<std::string, std::string> map_;
  std::set<std::string> consumed_;
};

struct RawFile {
  MetaBlock meta;
  std::string payload;
};

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_container(const std::filesystem::path& path, const char magic[4],
                     const MetaBlock& meta, const std::string& payload) {
  const std::string text = meta.serialize();
  std::string bytes;
  bytes.reserve(16 + text.size() + payload.size());
  bytes.append(magic, 4);
  const std::uint32_t version = kFormatVersion;
  bytes.append(reinterpret_cast<const char*>(&version), 4);
  const std::uint64_t meta_len = text.size();
  bytes.append(reinterpret_cast<const char*>(&meta_len), 8);
  bytes += text;
  bytes += payload;
  atomic_write(path, bytes);
}

RawFile read_container(const std::filesystem::path& path, const char magic[4],
                       std::size_t expected_payload = SIZE_MAX) {
  const std::string bytes = read_file_bytes(path);
  if (bytes.size() < 16)
    throw FileFormatError(FormatError::truncated_payload, "file shorter than header: " + path.string());
  if (std::memcmp(bytes.data(), magic, 4) != 0)
    throw FileFormatError(FormatError::bad_magic,
                          "bad magic (expected " + std::string(magic, 4) + "): " + path.string());
  std::uint32_t version;
  std::memcpy(&version, bytes.data() + 4, 4);
  if (version != kFormatVersion)
    throw FileFormatError(FormatError::unsupported_version,
                          "unsupported format version " + std::to_string(version));
  std::uint64_t meta_len;
  std::memcpy(&meta_len, bytes.data() + 8, 8);
  if (meta_len > bytes.size() - 16)
    throw FileFormatError(FormatError::truncated_payload, "metadata block exceeds file size");
  RawFile raw;
  raw.meta = MetaBlock::parse(bytes.substr(16, meta_len));
  raw.payload = bytes.substr(16 + meta_len);
  if (expected_payload != SIZE_MAX && raw.payload.size() != expected_payload)
    throw FileFormatError(FormatError::size_mismatch,
                          "payload size " + std::to_string(raw.payload.size()) +
                              " does not match header-described size " +
                              std::to_string(expected_payload));
  return raw;
}

void append_floats(std::string& out, const float* data, std::size_t n) {
  out.append(reinterpret_cast<const char*>(data), n * sizeof(float));
}

std::vector<float> take_floats(const std::string& payload, std::size_t& offset, std::size_t n,
                               const char* what) {
  if (payload.size() < offset + n * sizeof(float))
    throw FileFormatError(FormatError::size_mismatch,
                          std::string("payload too small for ") + what);
  std::vector<float> v(n);
  std::memcpy(v.data(), payload.data() + offset, n * sizeof(float));
  offset += n * sizeof(float);
  return v;
}

constexpr std::size_t kMaxElements = 1ull << 31;  // caps allocations on fuzzed headers

std::size_t checked_count(long long v, const char* what) {
  if (v < 0 || static_cast<std::size_t>(v) > kMaxElements)
    throw FileFormatError(FormatError::bad_value, std::string("implausible count for ") + what);
  return static_cast<std::size_t>(v);
}

}  // namespace

void atomic_write(const std::filesystem::path& path, const std::string& bytes) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write file: " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " -> " + path.string());
}

// --- GVOL ---

void write_volume(const std::filesystem::path& path, const VoxelVolume& vol) {
  vol.grid.validate();
  if (vol.data.size() != vol.grid.voxel_count())
    throw ValidationError("write_volume: payload length does not match dims");
  MetaBlock meta;
  meta.put("endianness", "little");
  meta.put("units", "mm");
  meta.put("dims", std::to_string(vol.grid.dims.x()) + " " + std::to_string(vol.grid.dims.y()) +
                       " " + std::to_string(vol.grid.dims.z()));
  meta.put_vec3("spacing", vol.grid.spacing);
  meta.put_vec3("origin", vol.grid.origin);
  meta.put_double("intensity_scale", vol.intensity_scale);
  std::string payload;
  append_floats(payload, vol.data.data(), vol.data.size());
  write_container(path, "GVOL", meta, payload);
}

VoxelVolume read_volume(const std::filesystem::path& path) {
  RawFile raw = read_container(path, "GVOL");
  raw.meta.check_endianness();
  raw.meta.get("units");
  VoxelVolume vol;
  {
    std::istringstream in(raw.meta.get("dims"));
    long long x, y, z;
    if (!(in >> x >> y >> z))
      throw FileFormatError(FormatError::bad_value, "bad dims");
    vol.grid.dims = Eigen::Vector3i(static_cast<int>(checked_count(x, "dims")),
                                    static_cast<int>(checked_count(y, "dims")),
                                    static_cast<int>(checked_count(z, "dims")));
  }
  vol.grid.spacing = raw.meta.get_vec3("spacing");
  vol.grid.origin = raw.meta.get_vec3("origin");
  vol.intensity_scale = raw.meta.get_double("intensity_scale");
  raw.meta.reject_unknown();
  if (vol.grid.dims.minCoeff() <= 0)
    throw FileFormatError(FormatError::bad_value, "volume dims must be positive");
  if (!(vol.grid.spacing.minCoeff() > 0.0))
    throw FileFormatError(FormatError::bad_value, "volume header field 'spacing' must be positive");
  const std::size_t n = checked_count(
      static_cast<long long>(vol.grid.dims.x()) * vol.grid.dims.y() * vol.grid.dims.z(), "volume");
  if (raw.payload.size() != n * sizeof(float))
    throw FileFormatError(FormatError::size_mismatch,
                          "voxel payload size does not match header dims");
  std::size_t off = 0;
  vol.data = take_floats(raw.payload, off, n, "voxels");
  return vol;
}

// --- GSTK ---

void write_stack(const std::filesystem::path& path, const SliceStack& stacks,
                 const std::string& sidecar_ref) {
  stacks.validate();
  MetaBlock meta;
  meta.put("endianness", "little");
  meta.put("units", "mm");
  meta.put_double("intensity_scale", stacks.intensity_scale);
  meta.put_int("stack_count", static_cast<long long>(stacks.stacks.size()));
  if (!sidecar_ref.empty()) meta.put("transform_sidecar", sidecar_ref);
  std::string payload;
  for (std::size_t s = 0; s < stacks.stacks.size(); ++s) {
    const Stack& st = stacks.stacks[s];
    const std::string p = "stack." + std::to_string(s) + ".";
    meta.put_int(p + "id", st.id);
    meta.put_int(p + "rows", st.geom.rows);
    meta.put_int(p + "cols", st.geom.cols);
    meta.put(p + "spacing", format_double(st.geom.in_plane_spacing.x()) + " " +
                                format_double(st.geom.in_plane_spacing.y()));
    meta.put_double(p + "thickness", st.geom.slice_thickness);
    meta.put_double(p + "gap", st.geom.slice_gap);
    meta.put(p + "pose_quat",
             format_double(st.geom.nominal_pose.q[0]) + " " + format_double(st.geom.nominal_pose.q[1]) +
                 " " + format_double(st.geom.nominal_pose.q[2]) + " " +
                 format_double(st.geom.nominal_pose.q[3]));
    meta.put_vec3(p + "pose_trans", st.geom.nominal_pose.t);
    meta.put_int(p + "slices", st.num_slices());
    for (const Image2D& img : st.slices) {
      std::vector<float> px(img.v.begin(), img.v.end());
      append_floats(payload, px.data(), px.size());
    }
  }
  write_container(path, "GSTK", meta, payload);
}

SliceStack read_stack(const std::filesystem::path& path, std::string* sidecar_ref) {
  RawFile raw = read_container(path, "GSTK");
  raw.meta.check_endianness();
  raw.meta.get("units");
  SliceStack stacks;
  stacks.intensity_scale = raw.meta.get_double("intensity_scale");
  const std::size_t n_stacks = checked_count(raw.meta.get_int("stack_count"), "stack_count");
  const std::string ref = raw.meta.get_optional("transform_sidecar", "");
  if (sidecar_ref) *sidecar_ref = ref;
  std::size_t off = 0;
  for (std::size_t s = 0; s < n_stacks; ++s) {
    const std::string p = "stack." + std::to_string(s) + ".";
    Stack st;
    st.id = static_cast<int>(raw.meta.get_int(p + "id"));
    st.geom.rows = static_cast<int>(checked_count(raw.meta.get_int(p + "rows"), "rows"));
    st.geom.cols = static_cast<int>(checked_count(raw.meta.get_int(p + "cols"), "cols"));
    {
      std::istringstream in(raw.meta.get(p + "spacing"));
      if (!(in >> st.geom.in_plane_spacing.x() >> st.geom.in_plane_spacing.y()))
        throw FileFormatError(FormatError::bad_value, "bad spacing for " + p);
    }
    st.geom.slice_thickness = raw.meta.get_double(p + "thickness");
    st.geom.slice_gap = raw.meta.get_double(p + "gap");
    {
      std::istringstream in(raw.meta.get(p + "pose_quat"));
      if (!(in >> st.geom.nominal_pose.q[0] >> st.geom.nominal_pose.q[1] >>
            st.geom.nominal_pose.q[2] >> st.geom.nominal_pose.q[3]))
        throw FileFormatError(FormatError::bad_value, "bad pose_quat for " + p);
    }
    st.geom.nominal_pose.t = raw.meta.get_vec3(p + "pose_trans");
    const std::size_t n_slices = checked_count(raw.meta.get_int(p + "slices"), "slices");
    if (st.geom.rows <= 0 || st.geom.cols <= 0 || n_slices == 0)
      throw FileFormatError(FormatError::bad_value, "stack geometry fields must be positive");
    if (!(st.geom.in_plane_spacing.minCoeff() > 0.0))
      throw FileFormatError(FormatError::bad_value,
                            "stack header field 'spacing' must be positive");
    if (!(st.geom.slice_thickness > 0.0) || !(st.geom.slice_gap > 0.0))
      throw FileFormatError(FormatError::bad_value,
                            "stack header field 'thickness'/'gap' must be positive");
    const std::size_t px_per_slice = static_cast<std::size_t>(st.geom.rows) * st.geom.cols;
    if (px_per_slice > kMaxElements || n_slices > kMaxElements)
      throw FileFormatError(FormatError::bad_value, "implausible stack geometry");
    for (std::size_t k = 0; k < n_slices; ++k) {
      const auto px = take_floats(raw.payload, off, px_per_slice, "slice pixels");
      Image2D img(st.geom.rows, st.geom.cols);
      for (std::size_t i = 0; i < px.size(); ++i) img.v[i] = px[i];
      st.slices.push_back(std::move(img));
    }
    st.motion.assign(n_slices, RigidTransform::identity());
    stacks.stacks.push_back(std::move(st));
  }
  raw.meta.reject_unknown();
  if (off != raw.payload.size())
    throw FileFormatError(FormatError::size_mismatch,
                          "stack payload size does not match header geometry");
  return stacks;
}

// --- GGAU ---

void write_gaussians(const std::filesystem::path& path, const GaussianSet& set,
                     double intensity_scale) {
  const std::size_t n = set.size();
  Eigen::AlignedBox3d bounds;
  for (const Vec3& c : set.centers) bounds.extend(c);
  if (n == 0) bounds = Eigen::AlignedBox3d(Vec3::Zero(), Vec3::Zero());
  MetaBlock meta;
  meta.put("endianness", "little");
  meta.put("units", "mm");
  meta.put_int("count", static_cast<long long>(n));
  meta.put_vec3("bounds_min", bounds.min());
  meta.put_vec3("bounds_max", bounds.max());
  meta.put_double("intensity_scale", intensity_scale);
  std::string payload;
  std::vector<float> buf;
  buf.reserve(4 * n);
  for (const Vec3& c : set.centers)
    for (int a = 0; a < 3; ++a) buf.push_back(static_cast<float>(c[a]));
  for (const Vec4& q : set.rotations)
    for (int a = 0; a < 4; ++a) buf.push_back(static_cast<float>(q[a]));
  for (const Vec3& s : set.log_scales)
    for (int a = 0; a < 3; ++a) buf.push_back(static_cast<float>(s[a]));
  for (double i : set.intensities) buf.push_back(static_cast<float>(i));
  append_floats(payload, buf.data(), buf.size());
  write_container(path, "GGAU", meta, payload);
}

GaussianSet read_gaussians(const std::filesystem::path& path, double* intensity_scale) {
  RawFile raw = read_container(path, "GGAU");
  raw.meta.check_endianness();
  raw.meta.get("units");
  const std::size_t n = checked_count(raw.meta.get_int("count"), "count");
  raw.meta.get_vec3("bounds_min");
  raw.meta.get_vec3("bounds_max");
  const double scale = raw.meta.get_double("intensity_scale");
  if (intensity_scale) *intensity_scale = scale;
  raw.meta.reject_unknown();
  if (raw.payload.size() != n * 11 * sizeof(float))
    throw FileFormatError(FormatError::size_mismatch,
                          "gaussian payload size does not match count");
  std::size_t off = 0;
  const auto centers = take_floats(raw.payload, off, 3 * n, "centers");
  const auto rotations = take_floats(raw.payload, off, 4 * n, "rotations");
  const auto log_scales = take_floats(raw.payload, off, 3 * n, "log_scales");
  const auto intensities = take_floats(raw.payload, off, n, "intensities");
  GaussianSet set;
  set.centers.resize(n);
  set.rotations.resize(n);
  set.log_scales.resize(n);
  set.intensities.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    set.centers[j] = Vec3(centers[3 * j], centers[3 * j + 1], centers[3 * j + 2]);
    set.rotations[j] = Vec4(rotations[4 * j], rotations[4 * j + 1], rotations[4 * j + 2],
                            rotations[4 * j + 3]);
    set.log_scales[j] = Vec3(log_scales[3 * j], log_scales[3 * j + 1], log_scales[3 * j + 2]);
    set.intensities[j] = intensities[j];
  }
  return set;
}

// --- transform sidecar ---

void write_sidecar(const std::filesystem::path& path, const std::vector<SidecarEntry>& entries) {
  std::string out = "# gsvr transforms v1\n";
  out += "# stack slice qw qx qy qz tx ty tz\n";
  for (const SidecarEntry& e : entries) {
    out += std::to_string(e.stack_id) + " " + std::to_string(e.slice_index);
    for (int a = 0; a < 4; ++a) out += " " + format_double(e.transform.q[a]);
    for (int a = 0; a < 3; ++a) out += " " + format_double(e.transform.t[a]);
    out += "\n";
  }
  atomic_write(path, out);
}

std::vector<SidecarEntry> read_sidecar(const std::filesystem::path& path) {
  const std::string bytes = read_file_bytes(path);
  std::istringstream in(bytes);
  std::string line;
  std::vector<SidecarEntry> entries;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    SidecarEntry e;
    if (!(row >> e.stack_id >> e.slice_index >> e.transform.q[0] >> e.transform.q[1] >>
          e.transform.q[2] >> e.transform.q[3] >> e.transform.t[0] >> e.transform.t[1] >>
          e.transform.t[2]))
      throw FileFormatError(FormatError::bad_value, "bad sidecar row: " + line);
    entries.push_back(e);
  }
  return entries;
}

std::vector<SidecarEntry> sidecar_from_stacks(const SliceStack& stacks, bool truth) {
  std::vector<SidecarEntry> entries;
  for (const Stack& st : stacks.stacks) {
    const auto& src = truth ? st.truth_motion : st.motion;
    for (int k = 0; k < static_cast<int>(src.size()); ++k)
      entries.push_back({st.id, k, src[k]});
  }
  return entries;
}

void apply_sidecar(SliceStack& stacks, const std::vector<SidecarEntry>& entries) {
  for (const SidecarEntry& e : entries) {
    Stack* target = nullptr;
    for (Stack& st : stacks.stacks)
      if (st.id == e.stack_id) target = &st;
    if (!target || e.slice_index < 0 || e.slice_index >= target->num_slices())
      throw ValidationError("sidecar row references unknown stack/slice: " +
                            std::to_string(e.stack_id) + "/" + std::to_string(e.slice_index));
    target->motion[e.slice_index] = e.transform;
  }
}

// --- manifest ---

void write_manifest(const std::filesystem::path& path, const CaseManifest& m) {
  std::string out = "# gsvr case manifest\n";
  out += "format_version = " + std::to_string(kFormatVersion) + "\n";
  out += "case_id = " + m.case_id + "\n";
  out += "seed = " + std::to_string(m.seed) + "\n";
  for (const auto& [k, v] : m.params) out += k + " = " + v + "\n";
  out += "file.stacks = " + m.stacks_file + "\n";
  out += "file.truth_volume = " + m.truth_volume_file + "\n";
  out += "file.truth_transforms = " + m.truth_transforms_file + "\n";
  if (!m.truth_gaussians_file.empty())
    out += "file.truth_gaussians = " + m.truth_gaussians_file + "\n";
  atomic_write(path, out);
}

CaseManifest read_manifest(const std::filesystem::path& path) {
  const std::string bytes = read_file_bytes(path);
  MetaBlock meta = MetaBlock::parse(bytes);
  CaseManifest m;
  const long long version = meta.get_int("format_version");
  if (version != kFormatVersion)
    throw FileFormatError(FormatError::unsupported_version,
                          "unsupported manifest version " + std::to_string(version));
  m.case_id = meta.get("case_id");
  m.seed = static_cast<std::uint64_t>(meta.get_int("seed"));
  m.stacks_file = meta.get("file.stacks");
  m.truth_volume_file = meta.get("file.truth_volume");
  m.truth_transforms_file = meta.get("file.truth_transforms");
  m.truth_gaussians_file = meta.get_optional("file.truth_gaussians", "");
  m.params = meta.remaining();  // free-form protocol/phantom/motion parameters
  const std::filesystem::path dir = path.parent_path();
  for (const std::string& f :
       {m.stacks_file, m.truth_volume_file, m.truth_transforms_file, m.truth_gaussians_file}) {
    if (f.empty()) continue;
    if (!std::filesystem::exists(dir / f))
      throw ValidationError("manifest references missing file: " + (dir / f).string());
  }
  return m;
}

void write_pgm(const std::filesystem::path& path, const Image2D& img, double peak) {
  if (!(peak > 0.0)) throw ValidationError("write_pgm: peak must be positive");
  std::string out = "P5\n" + std::to_string(img.cols) + " " + std::to_string(img.rows) + "\n255\n";
  for (double v : img.v) {
    const double c = std::min(std::max(v / peak, 0.0), 1.0);
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0))));
  }
  atomic_write(path, out);
}

}  // namespace gsvr
