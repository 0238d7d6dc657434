#include "gsvr/config.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace gsvr {

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Dotted key/value file with defaults overlay and strict unknown-key checks.
class KvParser {
 public:
  explicit KvParser(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      auto trim = [](std::string& s) {
        const auto b = s.find_first_not_of(" \t");
        const auto e = s.find_last_not_of(" \t\r");
        s = b == std::string::npos ? "" : s.substr(b, e - b + 1);
      };
      trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ValidationError("config line " + std::to_string(line_no) + " has no '='");
      std::string key = line.substr(0, eq);
      std::string value = line.substr(eq + 1);
      trim(key);
      trim(value);
      if (key.empty())
        throw ValidationError("config line " + std::to_string(line_no) + " has an empty key");
      values_[key] = value;
    }
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  void get_double(const std::string& key, double& out) {
    if (!has(key)) return;
    consumed_.insert(key);
    const std::string& s = values_.at(key);
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0')
      throw ValidationError("config field '" + key + "': bad numeric value '" + s + "'");
    out = v;
  }

  void get_int(const std::string& key, int& out) {
    long long v = out;
    get_ll(key, v);
    out = static_cast<int>(v);
  }

  void get_ll(const std::string& key, long long& out) {
    if (!has(key)) return;
    consumed_.insert(key);
    const std::string& s = values_.at(key);
    char* end = nullptr;
    const long long v = std::strtoll(s.c_str(), &end, 10);
    if (end == s.c_str() || *end != '\0')
      throw ValidationError("config field '" + key + "': bad integer value '" + s + "'");
    out = v;
  }

  void get_u64(const std::string& key, std::uint64_t& out) {
    if (!has(key)) return;
    consumed_.insert(key);
    const std::string& s = values_.at(key);
    char* end = nullptr;
    const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
    if (end == s.c_str() || *end != '\0')
      throw ValidationError("config field '" + key + "': bad integer value '" + s + "'");
    out = v;
  }

  void get_bool(const std::string& key, bool& out) {
    if (!has(key)) return;
    consumed_.insert(key);
    const std::string& s = values_.at(key);
    if (s == "true" || s == "1")
      out = true;
    else if (s == "false" || s == "0")
      out = false;
    else
      throw ValidationError("config field '" + key + "': expected true/false, got '" + s + "'");
  }

  void get_string(const std::string& key, std::string& out) {
    if (!has(key)) return;
    consumed_.insert(key);
    out = values_.at(key);
  }

  void get_vec3i(const std::string& key, Eigen::Vector3i& out) {
    if (!has(key)) return;
    consumed_.insert(key);
    std::istringstream in(values_.at(key));
    Eigen::Vector3i v;
    if (!(in >> v.x() >> v.y() >> v.z()) || !(in >> std::ws).eof())
      throw ValidationError("config field '" + key + "': expected three integers");
    out = v;
  }

  void reject_unknown() const {
    for (const auto& [k, v] : values_)
      if (!consumed_.count(k)) throw ValidationError("unknown config key '" + k + "'");
  }

 private:
  std::map<std::string, std::string> values_;
  std::set<std::string> consumed_;
};

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void check_positive(double v, const char* field) {
  if (!(v > 0.0)) throw ValidationError(std::string("config field '") + field + "' must be positive");
}
void check_nonneg(double v, const char* field) {
  if (v < 0.0) throw ValidationError(std::string("config field '") + field + "' must be >= 0");
}

}  // namespace

void ReconConfig::validate() const {
  loss.validate();
  if (stages.empty()) throw ValidationError("config field 'stages.count' must be >= 1");
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const std::string p = "stages." + std::to_string(i) + ".";
    if (stages[i].resolution_factor < 1)
      throw ValidationError("config field '" + p + "resolution_factor' must be >= 1");
    if (stages[i].iterations < 1)
      throw ValidationError("config field '" + p + "iterations' must be >= 1");
    if (stages[i].budget < 8)
      throw ValidationError("config field '" + p + "budget' must be >= 8");
    if (i + 1 < stages.size() &&
        stages[i + 1].resolution_factor > stages[i].resolution_factor)
      throw ValidationError("stages must be ordered coarse to fine");
  }
  for (int a = 0; a < 3; ++a)
    if (psf.samples[a] < 1 || psf.samples[a] % 2 == 0)
      throw ValidationError("config field 'psf.samples' entries must be odd and >= 1");
  check_positive(psf.inplane_fwhm_factor, "psf.inplane_fwhm_factor");
  check_positive(psf.thickness_fwhm_factor, "psf.thickness_fwhm_factor");
  check_positive(lr.mu_start, "lr.mu_start");
  check_positive(lr.mu_end, "lr.mu_end");
  check_nonneg(lr.intensity, "lr.intensity");
  check_nonneg(lr.scale, "lr.scale");
  check_nonneg(lr.rotation, "lr.rotation");
  check_nonneg(lr.translation, "lr.translation");
  check_nonneg(lr.slice_rotation, "lr.slice_rotation");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0))
    throw ValidationError("config field 'adam.beta1' must be in [0,1)");
  if (!(adam.beta2 >= 0.0 && adam.beta2 < 1.0))
    throw ValidationError("config field 'adam.beta2' must be in [0,1)");
  check_positive(adam.epsilon, "adam.epsilon");
  if (!(normalize_percentile > 0.0 && normalize_percentile <= 100.0))
    throw ValidationError("config field 'normalize.percentile' must be in (0,100]");
  check_positive(scale_min_mm, "scales.min_mm");
  if (!(scale_max_mm > scale_min_mm))
    throw ValidationError("config field 'scales.max_mm' must exceed scales.min_mm");
  check_nonneg(recon_spacing_mm, "recon.spacing_mm");
  if (divergence_retries < 0)
    throw ValidationError("config field 'optim.divergence_retries' must be >= 0");
  if (checkpoint_every < 0)
    throw ValidationError("config field 'optim.checkpoint_every' must be >= 0");
  if (convergence_window < 1)
    throw ValidationError("config field 'convergence.window' must be >= 1");
  check_nonneg(convergence_min_rel_improvement, "convergence.min_rel_improvement");
  check_nonneg(oracle_noise_rot_deg, "transforms.oracle_noise_rot_deg");
  check_nonneg(oracle_noise_trans_mm, "transforms.oracle_noise_trans_mm");
  if (init_mode == InitMode::provided && init_path.empty())
    throw ValidationError("config field 'init.path' required when init.mode = provided");
}

ReconConfig default_recon_config() {
  ReconConfig cfg;
  cfg.stages = {{2, 2000, 20000}, {1, 4000, 80000}};
  return cfg;
}

ReconConfig desk_recon_config() {
  ReconConfig cfg;
  // budgets: paper-scale 20k/80k scaled by the desk/paper voxel-count ratio
  // (64^3 / 128^3 = 1/8)
  cfg.stages = {{2, 2000, 2500}, {1, 4000, 10000}};
  cfg.psf.samples = Eigen::Vector3i(1, 1, 3);
  cfg.loss.tv_crop = Eigen::Vector3i(32, 32, 32);
  cfg.convergence_min_rel_improvement = 2e-4;
  return cfg;
}

ReconConfig paper_recon_config() { return default_recon_config(); }

ReconConfig tiny_recon_config() {
  ReconConfig cfg;
  cfg.stages = {{2, 60, 250}, {1, 80, 800}};
  cfg.psf.samples = Eigen::Vector3i(1, 1, 3);
  cfg.loss.tv_crop = Eigen::Vector3i(16, 16, 16);
  return cfg;
}

void SimConfig::validate() const {
  protocol.validate();
  if (!(phantom_spacing_mm > 0.0))
    throw ValidationError("config field 'phantom.spacing' must be positive");
  if (phantom_dims.minCoeff() < 1)
    throw ValidationError("config field 'phantom.dims' must be positive");
  if (amplitude.max_rot_deg < 0.0 || amplitude.max_trans_mm < 0.0)
    throw ValidationError("config field 'motion.*' amplitudes must be >= 0");
  if (!(motion_step_fraction > 0.0 && motion_step_fraction <= 1.0))
    throw ValidationError("config field 'motion.step_fraction' must be in (0,1]");
  if (phantom.mixture_count < 1)
    throw ValidationError("config field 'phantom.mixture_count' must be >= 1");
}

SimConfig desk_sim_config() {
  SimConfig cfg;
  cfg.case_id = "desk";
  return cfg;
}

SimConfig paper_sim_config() {
  SimConfig cfg;
  cfg.phantom_dims = Eigen::Vector3i(128, 128, 128);
  cfg.phantom_spacing_mm = 0.8;
  cfg.phantom.mixture_scale_min_mm = 3.0;
  cfg.phantom.mixture_scale_max_mm = 10.0;
  cfg.protocol = paper_protocol();
  cfg.protocol.slices_per_stack = 0;  // derive from coverage, clamp to [15,30]
  cfg.case_id = "paper";
  return cfg;
}

SimConfig tiny_sim_config() {
  SimConfig cfg;
  cfg.phantom_dims = Eigen::Vector3i(32, 32, 32);
  cfg.phantom_spacing_mm = 3.2;
  cfg.phantom.mixture_count = 40;
  cfg.phantom.mixture_scale_min_mm = 6.0;
  cfg.phantom.mixture_scale_max_mm = 14.0;
  cfg.protocol = tiny_protocol();
  cfg.case_id = "tiny";
  return cfg;
}

MotionAmplitude amplitude_preset(const std::string& name) {
  if (name == "none") return {0.0, 0.0};
  if (name == "mild") return {2.0, 1.0};
  if (name == "moderate") return {5.0, 3.0};
  if (name == "severe") return {10.0, 6.0};
  throw ValidationError("unknown motion amplitude preset: " + name);
}

ReconConfig parse_recon_config(const std::string& text, ReconConfig base) {
  KvParser kv(text);
  ReconConfig cfg = std::move(base);

  kv.get_u64("seed", cfg.seed);
  kv.get_double("loss.lambda1", cfg.loss.lambda1);
  kv.get_double("loss.lambda2", cfg.loss.lambda2);
  kv.get_int("loss.ssim_window", cfg.loss.ssim_window);
  kv.get_double("loss.ssim_sigma", cfg.loss.ssim_sigma);
  kv.get_double("loss.dynamic_range", cfg.loss.dynamic_range);
  kv.get_vec3i("loss.tv_crop", cfg.loss.tv_crop);
  kv.get_bool("loss.tv_full_grid", cfg.loss.tv_full_grid);
  kv.get_vec3i("psf.samples", cfg.psf.samples);
  kv.get_double("psf.inplane_fwhm_factor", cfg.psf.inplane_fwhm_factor);
  kv.get_double("psf.thickness_fwhm_factor", cfg.psf.thickness_fwhm_factor);
  kv.get_double("lr.mu_start", cfg.lr.mu_start);
  kv.get_double("lr.mu_end", cfg.lr.mu_end);
  kv.get_double("lr.intensity", cfg.lr.intensity);
  kv.get_double("lr.scale", cfg.lr.scale);
  kv.get_double("lr.rotation", cfg.lr.rotation);
  kv.get_double("lr.translation", cfg.lr.translation);
  kv.get_double("lr.slice_rotation", cfg.lr.slice_rotation);
  kv.get_double("adam.beta1", cfg.adam.beta1);
  kv.get_double("adam.beta2", cfg.adam.beta2);
  kv.get_double("adam.epsilon", cfg.adam.epsilon);

  std::string init_mode = cfg.init_mode == InitMode::provided ? "provided" : "grid-backproject";
  kv.get_string("init.mode", init_mode);
  if (init_mode == "grid-backproject")
    cfg.init_mode = InitMode::grid_backproject;
  else if (init_mode == "provided")
    cfg.init_mode = InitMode::provided;
  else
    throw ValidationError("config field 'init.mode': unknown mode '" + init_mode + "'");
  kv.get_string("init.path", cfg.init_path);

  std::string tinit = cfg.transform_init == TransformInit::nominal        ? "nominal"
                      : cfg.transform_init == TransformInit::as_loaded    ? "as-loaded"
                                                                          : "oracle-perturbed";
  kv.get_string("transforms.init", tinit);
  if (tinit == "nominal")
    cfg.transform_init = TransformInit::nominal;
  else if (tinit == "as-loaded")
    cfg.transform_init = TransformInit::as_loaded;
  else if (tinit == "oracle-perturbed")
    cfg.transform_init = TransformInit::oracle_perturbed;
  else
    throw ValidationError("config field 'transforms.init': unknown mode '" + tinit + "'");
  kv.get_double("transforms.oracle_noise_rot_deg", cfg.oracle_noise_rot_deg);
  kv.get_double("transforms.oracle_noise_trans_mm", cfg.oracle_noise_trans_mm);

  kv.get_double("normalize.percentile", cfg.normalize_percentile);
  kv.get_double("scales.min_mm", cfg.scale_min_mm);
  kv.get_double("scales.max_mm", cfg.scale_max_mm);
  kv.get_double("recon.spacing_mm", cfg.recon_spacing_mm);
  kv.get_bool("optim.freeze_transforms", cfg.freeze_transforms);
  kv.get_int("optim.divergence_retries", cfg.divergence_retries);
  kv.get_int("optim.checkpoint_every", cfg.checkpoint_every);
  kv.get_int("convergence.window", cfg.convergence_window);
  kv.get_double("convergence.min_rel_improvement", cfg.convergence_min_rel_improvement);

  int n_stages = static_cast<int>(cfg.stages.size());
  kv.get_int("stages.count", n_stages);
  if (n_stages < 1) throw ValidationError("config field 'stages.count' must be >= 1");
  cfg.stages.resize(n_stages);
  for (int i = 0; i < n_stages; ++i) {
    const std::string p = "stages." + std::to_string(i) + ".";
    kv.get_int(p + "resolution_factor", cfg.stages[i].resolution_factor);
    kv.get_int(p + "iterations", cfg.stages[i].iterations);
    long long budget = static_cast<long long>(cfg.stages[i].budget);
    kv.get_ll(p + "budget", budget);
    if (budget < 0) throw ValidationError("config field '" + p + "budget' must be >= 0");
    cfg.stages[i].budget = static_cast<std::size_t>(budget);
  }

  kv.reject_unknown();
  cfg.validate();
  return cfg;
}

ReconConfig load_recon_config(const std::filesystem::path& path, ReconConfig base) {
  return parse_recon_config(read_text_file(path), std::move(base));
}

std::string serialize_recon_config(const ReconConfig& cfg) {
  std::ostringstream out;
  out << "seed = " << cfg.seed << "\n";
  out << "loss.lambda1 = " << format_double(cfg.loss.lambda1) << "\n";
  out << "loss.lambda2 = " << format_double(cfg.loss.lambda2) << "\n";
  out << "loss.ssim_window = " << cfg.loss.ssim_window << "\n";
  out << "loss.ssim_sigma = " << format_double(cfg.loss.ssim_sigma) << "\n";
  out << "loss.dynamic_range = " << format_double(cfg.loss.dynamic_range) << "\n";
  out << "loss.tv_crop = " << cfg.loss.tv_crop.x() << " " << cfg.loss.tv_crop.y() << " "
      << cfg.loss.tv_crop.z() << "\n";
  out << "loss.tv_full_grid = " << (cfg.loss.tv_full_grid ? "true" : "false") << "\n";
  out << "psf.samples = " << cfg.psf.samples.x() << " " << cfg.psf.samples.y() << " "
      << cfg.psf.samples.z() << "\n";
  out << "psf.inplane_fwhm_factor = " << format_double(cfg.psf.inplane_fwhm_factor) << "\n";
  out << "psf.thickness_fwhm_factor = " << format_double(cfg.psf.thickness_fwhm_factor) << "\n";
  out << "lr.mu_start = " << format_double(cfg.lr.mu_start) << "\n";
  out << "lr.mu_end = " << format_double(cfg.lr.mu_end) << "\n";
  out << "lr.intensity = " << format_double(cfg.lr.intensity) << "\n";
  out << "lr.scale = " << format_double(cfg.lr.scale) << "\n";
  out << "lr.rotation = " << format_double(cfg.lr.rotation) << "\n";
  out << "lr.translation = " << format_double(cfg.lr.translation) << "\n";
  out << "lr.slice_rotation = " << format_double(cfg.lr.slice_rotation) << "\n";
  out << "adam.beta1 = " << format_double(cfg.adam.beta1) << "\n";
  out << "adam.beta2 = " << format_double(cfg.adam.beta2) << "\n";
  out << "adam.epsilon = " << format_double(cfg.adam.epsilon) << "\n";
  out << "init.mode = " << (cfg.init_mode == InitMode::provided ? "provided" : "grid-backproject")
      << "\n";
  if (!cfg.init_path.empty()) out << "init.path = " << cfg.init_path << "\n";
  out << "transforms.init = "
      << (cfg.transform_init == TransformInit::nominal
              ? "nominal"
              : cfg.transform_init == TransformInit::as_loaded ? "as-loaded" : "oracle-perturbed")
      << "\n";
  out << "transforms.oracle_noise_rot_deg = " << format_double(cfg.oracle_noise_rot_deg) << "\n";
  out << "transforms.oracle_noise_trans_mm = " << format_double(cfg.oracle_noise_trans_mm) << "\n";
  out << "normalize.percentile = " << format_double(cfg.normalize_percentile) << "\n";
  out << "scales.min_mm = " << format_double(cfg.scale_min_mm) << "\n";
  out << "scales.max_mm = " << format_double(cfg.scale_max_mm) << "\n";
  out << "recon.spacing_mm = " << format_double(cfg.recon_spacing_mm) << "\n";
  out << "optim.freeze_transforms = " << (cfg.freeze_transforms ? "true" : "false") << "\n";
  out << "optim.divergence_retries = " << cfg.divergence_retries << "\n";
  out << "optim.checkpoint_every = " << cfg.checkpoint_every << "\n";
  out << "convergence.window = " << cfg.convergence_window << "\n";
  out << "convergence.min_rel_improvement = " << format_double(cfg.convergence_min_rel_improvement)
      << "\n";
  out << "stages.count = " << cfg.stages.size() << "\n";
  for (std::size_t i = 0; i < cfg.stages.size(); ++i) {
    const std::string p = "stages." + std::to_string(i) + ".";
    out << p << "resolution_factor = " << cfg.stages[i].resolution_factor << "\n";
    out << p << "iterations = " << cfg.stages[i].iterations << "\n";
    out << p << "budget = " << cfg.stages[i].budget << "\n";
  }
  return out.str();
}

SimConfig parse_sim_config(const std::string& text, SimConfig base) {
  KvParser kv(text);
  SimConfig cfg = std::move(base);
  kv.get_u64("seed", cfg.seed);
  kv.get_string("case_id", cfg.case_id);

  std::string kind = to_string(cfg.phantom_kind);
  kv.get_string("phantom.kind", kind);
  cfg.phantom_kind = phantom_kind_from_string(kind);
  kv.get_vec3i("phantom.dims", cfg.phantom_dims);
  kv.get_double("phantom.spacing", cfg.phantom_spacing_mm);
  kv.get_int("phantom.mixture_count", cfg.phantom.mixture_count);
  kv.get_double("phantom.scale_min", cfg.phantom.mixture_scale_min_mm);
  kv.get_double("phantom.scale_max", cfg.phantom.mixture_scale_max_mm);
  kv.get_int("phantom.ellipsoid_count", cfg.phantom.ellipsoid_count);
  kv.get_double("phantom.checker_period", cfg.phantom.checker_period_mm);

  kv.get_int("protocol.stacks", cfg.protocol.n_stacks);
  kv.get_int("protocol.slices", cfg.protocol.slices_per_stack);
  kv.get_int("protocol.rows", cfg.protocol.rows);
  kv.get_int("protocol.cols", cfg.protocol.cols);
  kv.get_double("protocol.in_plane", cfg.protocol.in_plane_mm);
  kv.get_double("protocol.thickness_min", cfg.protocol.thickness_min_mm);
  kv.get_double("protocol.thickness_max", cfg.protocol.thickness_max_mm);
  kv.get_double("protocol.gap_factor", cfg.protocol.gap_factor);
  kv.get_vec3i("protocol.psf_samples", cfg.protocol.psf_samples);
  kv.get_double("protocol.psf_inplane_factor", cfg.protocol.psf_inplane_factor);
  kv.get_double("protocol.psf_thickness_factor", cfg.protocol.psf_thickness_factor);
  kv.get_double("protocol.noise_sigma", cfg.protocol.noise_sigma);

  if (kv.has("motion.preset")) {
    std::string preset;
    kv.get_string("motion.preset", preset);
    cfg.amplitude = amplitude_preset(preset);
  }
  kv.get_double("motion.amplitude_rot_deg", cfg.amplitude.max_rot_deg);
  kv.get_double("motion.amplitude_trans_mm", cfg.amplitude.max_trans_mm);
  std::string model = to_string(cfg.motion_model);
  kv.get_string("motion.model", model);
  cfg.motion_model = motion_model_from_string(model);
  kv.get_double("motion.step_fraction", cfg.motion_step_fraction);

  kv.reject_unknown();
  cfg.validate();
  return cfg;
}

SimConfig load_sim_config(const std::filesystem::path& path, SimConfig base) {
  return parse_sim_config(read_text_file(path), std::move(base));
}

std::string serialize_sim_config(const SimConfig& cfg) {
  std::ostringstream out;
  out << "seed = " << cfg.seed << "\n";
  out << "case_id = " << cfg.case_id << "\n";
  out << "phantom.kind = " << to_string(cfg.phantom_kind) << "\n";
  out << "phantom.dims = " << cfg.phantom_dims.x() << " " << cfg.phantom_dims.y() << " "
      << cfg.phantom_dims.z() << "\n";
  out << "phantom.spacing = " << format_double(cfg.phantom_spacing_mm) << "\n";
  out << "phantom.mixture_count = " << cfg.phantom.mixture_count << "\n";
  out << "phantom.scale_min = " << format_double(cfg.phantom.mixture_scale_min_mm) << "\n";
  out << "phantom.scale_max = " << format_double(cfg.phantom.mixture_scale_max_mm) << "\n";
  out << "phantom.ellipsoid_count = " << cfg.phantom.ellipsoid_count << "\n";
  out << "phantom.checker_period = " << format_double(cfg.phantom.checker_period_mm) << "\n";
  out << "protocol.stacks = " << cfg.protocol.n_stacks << "\n";
  out << "protocol.slices = " << cfg.protocol.slices_per_stack << "\n";
  out << "protocol.rows = " << cfg.protocol.rows << "\n";
  out << "protocol.cols = " << cfg.protocol.cols << "\n";
  out << "protocol.in_plane = " << format_double(cfg.protocol.in_plane_mm) << "\n";
  out << "protocol.thickness_min = " << format_double(cfg.protocol.thickness_min_mm) << "\n";
  out << "protocol.thickness_max = " << format_double(cfg.protocol.thickness_max_mm) << "\n";
  out << "protocol.gap_factor = " << format_double(cfg.protocol.gap_factor) << "\n";
  out << "protocol.psf_samples = " << cfg.protocol.psf_samples.x() << " "
      << cfg.protocol.psf_samples.y() << " " << cfg.protocol.psf_samples.z() << "\n";
  out << "protocol.psf_inplane_factor = " << format_double(cfg.protocol.psf_inplane_factor) << "\n";
  out << "protocol.psf_thickness_factor = " << format_double(cfg.protocol.psf_thickness_factor)
      << "\n";
  out << "protocol.noise_sigma = " << format_double(cfg.protocol.noise_sigma) << "\n";
  out << "motion.amplitude_rot_deg = " << format_double(cfg.amplitude.max_rot_deg) << "\n";
  out << "motion.amplitude_trans_mm = " << format_double(cfg.amplitude.max_trans_mm) << "\n";
  out << "motion.model = " << to_string(cfg.motion_model) << "\n";
  out << "motion.step_fraction = " << format_double(cfg.motion_step_fraction) << "\n";
  return out.str();
}

}  // namespace gsvr
