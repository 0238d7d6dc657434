#include "gsvr/objective.hpp"

#include <cmath>

#include "gsvr/common.hpp"

namespace gsvr {

void LossConfig::validate() const {
  if (lambda1 < 0.0) throw ValidationError("loss.lambda1 must be >= 0");
  if (lambda2 < 0.0) throw ValidationError("loss.lambda2 must be >= 0");
  if (ssim_window < 1 || ssim_window % 2 == 0)
    throw ValidationError("loss.ssim_window must be odd and >= 1");
  if (!(ssim_sigma > 0.0)) throw ValidationError("loss.ssim_sigma must be positive");
  if (!(dynamic_range > 0.0)) throw ValidationError("loss.dynamic_range must be positive");
  if (tv_crop.minCoeff() < 1) throw ValidationError("loss.tv_crop dims must be >= 1");
}

double l1_loss(const Image2D& a, const Image2D& b, Image2D* grad_b) {
  if (!a.same_shape(b)) throw ValidationError("l1_loss: image dims mismatch");
  const double inv_n = 1.0 / static_cast<double>(a.size());
  if (grad_b) *grad_b = Image2D(a.rows, a.cols);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.v.size(); ++i) {
    const double d = b.v[i] - a.v[i];
    acc += std::abs(d);
    if (grad_b) grad_b->v[i] = d > 0.0 ? inv_n : (d < 0.0 ? -inv_n : 0.0);
  }
  return acc * inv_n;
}

namespace {

std::vector<double> gaussian_kernel(int window, double sigma) {
  std::vector<double> k(window);
  const int half = window / 2;
  double sum = 0.0;
  for (int i = 0; i < window; ++i) {
    k[i] = std::exp(-0.5 * (i - half) * (i - half) / (sigma * sigma));
    sum += k[i];
  }
  for (double& v : k) v /= sum;
  return k;
}

// Separable same-size convolution with zero padding; the kernel is
// symmetric so this is its own adjoint.
Image2D conv_same(const Image2D& img, const std::vector<double>& k) {
  const int half = static_cast<int>(k.size()) / 2;
  Image2D tmp(img.rows, img.cols);
  for (int r = 0; r < img.rows; ++r)
    for (int c = 0; c < img.cols; ++c) {
      double acc = 0.0;
      for (int i = -half; i <= half; ++i) {
        const int cc = c + i;
        if (cc >= 0 && cc < img.cols) acc += k[i + half] * img.at(r, cc);
      }
      tmp.at(r, c) = acc;
    }
  Image2D out(img.rows, img.cols);
  for (int r = 0; r < img.rows; ++r)
    for (int c = 0; c < img.cols; ++c) {
      double acc = 0.0;
      for (int i = -half; i <= half; ++i) {
        const int rr = r + i;
        if (rr >= 0 && rr < img.rows) acc += k[i + half] * tmp.at(rr, c);
      }
      out.at(r, c) = acc;
    }
  return out;
}

Image2D hadamard(const Image2D& a, const Image2D& b) {
  Image2D out(a.rows, a.cols);
  for (std::size_t i = 0; i < a.v.size(); ++i) out.v[i] = a.v[i] * b.v[i];
  return out;
}

}  // namespace

double dssim_loss(const Image2D& a, const Image2D& b, const LossConfig& cfg, Image2D* grad_b) {
  if (!a.same_shape(b)) throw ValidationError("dssim_loss: image dims mismatch");
  const auto k = gaussian_kernel(cfg.ssim_window, cfg.ssim_sigma);
  const double c1 = (0.01 * cfg.dynamic_range) * (0.01 * cfg.dynamic_range);
  const double c2 = (0.03 * cfg.dynamic_range) * (0.03 * cfg.dynamic_range);

  const Image2D mu_a = conv_same(a, k);
  const Image2D mu_b = conv_same(b, k);
  const Image2D m_aa = conv_same(hadamard(a, a), k);
  const Image2D m_bb = conv_same(hadamard(b, b), k);
  const Image2D m_ab = conv_same(hadamard(a, b), k);

  const std::size_t n = a.v.size();
  Image2D c1m, c2m, c3m;
  if (grad_b) {
    c1m = Image2D(a.rows, a.cols);
    c2m = Image2D(a.rows, a.cols);
    c3m = Image2D(a.rows, a.cols);
  }
  double ssim_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double ma = mu_a.v[i], mb = mu_b.v[i];
    const double va = m_aa.v[i] - ma * ma;
    const double vb = m_bb.v[i] - mb * mb;
    const double vab = m_ab.v[i] - ma * mb;
    const double a1 = 2.0 * ma * mb + c1;
    const double a2 = 2.0 * vab + c2;
    const double b1 = ma * ma + mb * mb + c1;
    const double b2 = va + vb + c2;
    const double s = (a1 * a2) / (b1 * b2);
    ssim_sum += s;
    if (grad_b) {
      const double ds_dmub = 2.0 * ma * a2 / (b1 * b2) - 2.0 * mb * s / b1;
      const double ds_dvb = -s / b2;
      const double ds_dvab = 2.0 * a1 / (b1 * b2);
      c1m.v[i] = ds_dmub - 2.0 * mb * ds_dvb - ma * ds_dvab;
      c2m.v[i] = 2.0 * ds_dvb;
      c3m.v[i] = ds_dvab;
    }
  }
  const double mean_ssim = ssim_sum / static_cast<double>(n);

  if (grad_b) {
    const Image2D t1 = conv_same(c1m, k);
    const Image2D t2 = conv_same(c2m, k);
    const Image2D t3 = conv_same(c3m, k);
    *grad_b = Image2D(a.rows, a.cols);
    const double scale = -0.5 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      grad_b->v[i] = scale * (t1.v[i] + b.v[i] * t2.v[i] + a.v[i] * t3.v[i]);
  }
  return 0.5 * (1.0 - mean_ssim);
}

double tv_loss(const DenseGrid& vol, DenseGrid* grad) {
  const auto& dims = vol.grid.dims;
  if (dims.minCoeff() < 1) throw ValidationError("tv_loss: dims must be >= 1");
  if (grad) *grad = DenseGrid::zeros(vol.grid);

  const std::size_t sx = 1;
  const std::size_t sy = static_cast<std::size_t>(dims.x());
  const std::size_t sz = static_cast<std::size_t>(dims.x()) * dims.y();
  const std::size_t strides[3] = {sx, sy, sz};
  double total = 0.0;
  for (int axis = 0; axis < 3; ++axis) {
    const long n_axis = dims[axis];
    if (n_axis < 2) continue;
    const std::size_t pairs = vol.grid.voxel_count() / n_axis * (n_axis - 1);
    const double inv_pairs = 1.0 / static_cast<double>(pairs);
    double axis_sum = 0.0;
    for (int z = 0; z < dims.z(); ++z)
      for (int y = 0; y < dims.y(); ++y)
        for (int x = 0; x < dims.x(); ++x) {
          const int idx_axis = axis == 0 ? x : (axis == 1 ? y : z);
          if (idx_axis + 1 >= n_axis) continue;  // zero-flux: no outgoing difference
          const std::size_t i = vol.grid.index(x, y, z);
          const std::size_t j = i + strides[axis];
          const double d = vol.data[j] - vol.data[i];
          axis_sum += std::abs(d);
          if (grad && d != 0.0) {
            const double sgn = d > 0.0 ? inv_pairs : -inv_pairs;
            grad->data[j] += sgn;
            grad->data[i] -= sgn;
          }
        }
    total += axis_sum * inv_pairs;
  }
  return total;
}

LossReport total_loss(const std::vector<const Image2D*>& acquired,
                      const std::vector<const Image2D*>& recon,
                      const DenseGrid* volume_crop, const LossConfig& cfg) {
  if (acquired.size() != recon.size() || acquired.empty())
    throw ValidationError("total_loss: slice lists must be non-empty and aligned");
  LossReport rep;
  rep.per_slice.resize(acquired.size());
  double l1_sum = 0.0, dssim_sum = 0.0;
  for (std::size_t i = 0; i < acquired.size(); ++i) {
    rep.per_slice[i].l1 = l1_loss(*acquired[i], *recon[i]);
    rep.per_slice[i].dssim = dssim_loss(*acquired[i], *recon[i], cfg);
    l1_sum += rep.per_slice[i].l1;
    dssim_sum += rep.per_slice[i].dssim;
  }
  const double inv_n = 1.0 / static_cast<double>(acquired.size());
  rep.l1 = l1_sum * inv_n;
  rep.dssim = dssim_sum * inv_n;
  rep.tv = volume_crop ? tv_loss(*volume_crop) : 0.0;
  rep.total = rep.l1 + cfg.lambda1 * rep.dssim + cfg.lambda2 * rep.tv;
  return rep;
}

}  // namespace gsvr
