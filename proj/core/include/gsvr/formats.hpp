// On-disk formats: GVOL voxel volumes, GSTK slice stacks, GGAU gaussian
// sets (16-byte magic+version header, structured-text metadata block,
// little-endian float32 payload), plus the text transform sidecar, case
// manifest, and portable graymap export.
#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "gsvr/acquisition.hpp"
#include "gsvr/gaussian_field.hpp"
#include "gsvr/volume.hpp"

namespace gsvr {

inline constexpr std::uint32_t kFormatVersion = 1;

void write_volume(const std::filesystem::path& path, const VoxelVolume& vol);
VoxelVolume read_volume(const std::filesystem::path& path);

void write_stack(const std::filesystem::path& path, const SliceStack& stacks,
                 const std::string& sidecar_ref = "");
// Motion states are reset to identity on load; apply a sidecar to set them.
SliceStack read_stack(const std::filesystem::path& path, std::string* sidecar_ref = nullptr);

void write_gaussians(const std::filesystem::path& path, const GaussianSet& set,
                     double intensity_scale = 1.0);
GaussianSet read_gaussians(const std::filesystem::path& path, double* intensity_scale = nullptr);

// Per-slice transform rows: stack id, slice index, quaternion wxyz,
// translation xyz (mm). Round-trips doubles exactly via %.17g.
struct SidecarEntry {
  int stack_id = 0;
  int slice_index = 0;
  RigidTransform transform;
};
void write_sidecar(const std::filesystem::path& path, const std::vector<SidecarEntry>& entries);
std::vector<SidecarEntry> read_sidecar(const std::filesystem::path& path);

std::vector<SidecarEntry> sidecar_from_stacks(const SliceStack& stacks, bool truth);
void apply_sidecar(SliceStack& stacks, const std::vector<SidecarEntry>& entries);

// Case manifest: seeds, protocol parameters, and relative file references.
struct CaseManifest {
  std::string case_id;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> params;  // protocol/phantom/motion key-values
  std::string stacks_file;
  std::string truth_volume_file;
  std::string truth_transforms_file;
  std::string truth_gaussians_file;  // optional
};
void write_manifest(const std::filesystem::path& path, const CaseManifest& m);
// Verifies every referenced file exists next to the manifest.
CaseManifest read_manifest(const std::filesystem::path& path);

// 8-bit binary PGM, values clamped to [0, peak] then scaled to 0..255.
void write_pgm(const std::filesystem::path& path, const Image2D& img, double peak);

// Atomic file replace: write to a temp sibling then rename.
void atomic_write(const std::filesystem::path& path, const std::string& bytes);

}  // namespace gsvr
