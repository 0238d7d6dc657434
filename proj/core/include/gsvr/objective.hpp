// Self-supervised reconstruction loss: per-slice L1 + D-SSIM between
// acquired and reconstructed slices plus TV regularization on the volume.
#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "gsvr/image.hpp"
#include "gsvr/volume.hpp"

namespace gsvr {

struct LossConfig {
  double lambda1 = 0.2;    // D-SSIM weight
  double lambda2 = 1e-4;   // TV weight
  int ssim_window = 11;    // pixels, odd
  double ssim_sigma = 1.5; // pixels
  double dynamic_range = 1.0;
  Eigen::Vector3i tv_crop = Eigen::Vector3i(64, 64, 64);
  bool tv_full_grid = false;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SliceLossTerms {
  double l1 = 0.0;
  double dssim = 0.0;
};

struct LossReport {
  double total = 0.0;
  double l1 = 0.0;     // mean over slices
  double dssim = 0.0;  // mean over slices
  double tv = 0.0;
  std::vector<SliceLossTerms> per_slice;
};

// Mean absolute difference; subgradient 0 at exact ties.
double l1_loss(const Image2D& a, const Image2D& b, Image2D* grad_b = nullptr);

// (1 - mean windowed SSIM) / 2 with a Gaussian window and zero padding;
// C1 = (0.01 L)^2, C2 = (0.03 L)^2. Analytic gradient w.r.t. b.
double dssim_loss(const Image2D& a, const Image2D& b, const LossConfig& cfg,
                  Image2D* grad_b = nullptr);

// Anisotropic TV with zero-flux boundaries; each axis is normalized by its
// own forward-difference count, so a 1D ramp of slope s evaluates to |s|.
double tv_loss(const DenseGrid& vol, DenseGrid* grad = nullptr);

// (1/n) sum_i (L1_i + lambda1 DSSIM_i) + lambda2 TV(crop). recon aligned
// with acquired slice-by-slice in stack-major order.
LossReport total_loss(const std::vector<const Image2D*>& acquired,
                      const std::vector<const Image2D*>& recon,
                      const DenseGrid* volume_crop, const LossConfig& cfg);

}  // namespace gsvr
