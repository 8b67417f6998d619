#include "do3d/loss.hpp"

#include <array>
#include <cmath>
#include <vector>

#include "do3d/parallel.hpp"

namespace do3d {
namespace {

int reflect(int i, int n) {
  if (n == 1) return 0;
  if (i < 0) return -i;
  if (i >= n) return 2 * (n - 1) - i;
  return i;
}

struct WindowStats {
  double mu_x, mu_y, var_x, var_y, cov;
};

WindowStats window_stats(const ColorImage& a, const ColorImage& b, int v, int u, int c) {
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (int dv = -1; dv <= 1; ++dv) {
    const int r = reflect(v + dv, a.height());
    for (int du = -1; du <= 1; ++du) {
      const int q = reflect(u + du, a.width());
      const double x = a(r, q, c), y = b(r, q, c);
      sx += x;
      sy += y;
      sxx += x * x;
      syy += y * y;
      sxy += x * y;
    }
  }
  WindowStats s;
  s.mu_x = sx / 9.0;
  s.mu_y = sy / 9.0;
  s.var_x = sxx / 9.0 - s.mu_x * s.mu_x;
  s.var_y = syy / 9.0 - s.mu_y * s.mu_y;
  s.cov = sxy / 9.0 - s.mu_x * s.mu_y;
  return s;
}

double ssim_value(const WindowStats& s) {
  const double n = (2 * s.mu_x * s.mu_y + kSsimC1) * (2 * s.cov + kSsimC2);
  const double d = (s.mu_x * s.mu_x + s.mu_y * s.mu_y + kSsimC1) * (s.var_x + s.var_y + kSsimC2);
  return n / d;
}

double sign(double x) { return (x > 0.0) - (x < 0.0); }

std::size_t count_valid(const BinaryMask& valid) { return mask_count(valid); }

}  // namespace

void LossWeights::validate() const {
  if (w_ph < 0 || w_ds < 0 || w_m < 0) throw DomainError("loss weights must be non-negative");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw DomainError("alpha must lie in [0,1]");
}

ScalarField ssim_map(const ColorImage& a, const ColorImage& b) {
  require_same_shape(a, b, "ssim_map");
  ScalarField out(a.height(), a.width());
  parallel_rows(a.height(), [&](int v) {
    for (int u = 0; u < a.width(); ++u) {
      double acc = 0.0;
      for (int c = 0; c < 3; ++c) acc += ssim_value(window_stats(a, b, v, u, c));
      out(v, u) = acc / 3.0;
    }
  });
  return out;
}

BinaryMask ssim_support_mask(const BinaryMask& mask) {
  BinaryMask out(mask.height(), mask.width());
  for (int v = 0; v < mask.height(); ++v) {
    for (int u = 0; u < mask.width(); ++u) {
      bool inside = true;
      for (int dv = -1; dv <= 1 && inside; ++dv)
        for (int du = -1; du <= 1 && inside; ++du)
          inside = mask(reflect(v + dv, mask.height()), reflect(u + du, mask.width())) > 0.5;
      out(v, u) = inside ? 1.0 : 0.0;
    }
  }
  return out;
}

ColorImage ssim_backward(const ColorImage& a, const ColorImage& b, const ScalarField& grad) {
  require_same_shape(a, b, "ssim_backward");
  require_same_shape(a, grad, "ssim_backward gradient");
  const int h = a.height(), w = a.width();
  // Per pixel and channel: coefficients of dS/dx_q = (k0 + k1 x_q + k2 y_q) / 9.
  std::vector<std::array<double, 9>> coeff(a.pixel_count());
  parallel_rows(h, [&](int v) {
    for (int u = 0; u < w; ++u) {
      auto& k = coeff[a.index(v, u)];
      const double g = grad(v, u) / 3.0;
      for (int c = 0; c < 3; ++c) {
        if (g == 0.0) {
          k[3 * c] = k[3 * c + 1] = k[3 * c + 2] = 0.0;
          continue;
        }
        const WindowStats s = window_stats(a, b, v, u, c);
        const double n1 = 2 * s.mu_x * s.mu_y + kSsimC1;
        const double n2 = 2 * s.cov + kSsimC2;
        const double d1 = s.mu_x * s.mu_x + s.mu_y * s.mu_y + kSsimC1;
        const double d2 = s.var_x + s.var_y + kSsimC2;
        const double ssim = n1 * n2 / (d1 * d2);
        const double dmu = 2 * s.mu_y * n2 / (d1 * d2) - ssim * 2 * s.mu_x / d1;
        const double dvar = -ssim / d2;
        const double dcov = 2 * n1 / (d1 * d2);
        // dvar_x/dx_q = 2 (x_q - mu_x) / 9, dcov/dx_q = (y_q - mu_y) / 9.
        k[3 * c] = g * (dmu - 2 * dvar * s.mu_x - dcov * s.mu_y) / 9.0;
        k[3 * c + 1] = g * 2 * dvar / 9.0;
        k[3 * c + 2] = g * dcov / 9.0;
      }
    }
  });
  ColorImage out(h, w);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const auto& k = coeff[a.index(v, u)];
      if (grad(v, u) == 0.0) continue;
      for (int dv = -1; dv <= 1; ++dv) {
        const int r = reflect(v + dv, h);
        for (int du = -1; du <= 1; ++du) {
          const int q = reflect(u + du, w);
          for (int c = 0; c < 3; ++c)
            out(r, q, c) += k[3 * c] + k[3 * c + 1] * a(r, q, c) + k[3 * c + 2] * b(r, q, c);
        }
      }
    }
  }
  return out;
}

ScalarField photometric_loss_map(const ColorImage& pred, const ColorImage& target, double alpha) {
  const ScalarField ssim = ssim_map(pred, target);
  ScalarField out(pred.height(), pred.width());
  for (int v = 0; v < pred.height(); ++v) {
    for (int u = 0; u < pred.width(); ++u) {
      const double l1 = (pred.pixel(v, u) - target.pixel(v, u)).cwiseAbs().sum() / 3.0;
      out(v, u) = alpha / 2.0 * (1.0 - ssim(v, u)) + (1.0 - alpha) * l1;
    }
  }
  return out;
}

double photometric_loss(const ColorImage& pred, const ColorImage& target, const BinaryMask& valid,
                        double alpha) {
  require_same_shape(pred, target, "photometric_loss images");
  require_same_shape(pred, valid, "photometric_loss mask");
  const ScalarField map = photometric_loss_map(pred, target, alpha);
  std::vector<double> terms;
  terms.reserve(map.pixel_count());
  for (std::size_t i = 0; i < map.pixel_count(); ++i)
    if (valid.data()[i] > 0.5) terms.push_back(map.data()[i]);
  if (terms.empty()) throw DegenerateInputError("photometric_loss: no valid pixels");
  return pairwise_sum(terms) / static_cast<double>(terms.size());
}

PhotometricGradient photometric_loss_with_gradient(const ColorImage& pred, const ColorImage& target,
                                                   const BinaryMask& valid, double alpha) {
  PhotometricGradient out;
  out.loss = photometric_loss(pred, target, valid, alpha);
  out.valid_count = count_valid(valid);
  const double inv_n = 1.0 / static_cast<double>(out.valid_count);
  ScalarField grad_ssim(pred.height(), pred.width());
  for (std::size_t i = 0; i < grad_ssim.pixel_count(); ++i)
    if (valid.data()[i] > 0.5) grad_ssim.data()[i] = -alpha / 2.0 * inv_n;
  out.d_pred = ssim_backward(pred, target, grad_ssim);
  const double l1_scale = (1.0 - alpha) / 3.0 * inv_n;
  for (std::size_t i = 0; i < pred.pixel_count(); ++i) {
    if (valid.data()[i] <= 0.5) continue;
    for (int c = 0; c < 3; ++c)
      out.d_pred.data()[3 * i + c] += l1_scale * sign(pred.data()[3 * i + c] - target.data()[3 * i + c]);
  }
  return out;
}

SmoothnessGradient smoothness_loss_with_gradient(const ScalarField& depth, const ColorImage& image) {
  require_same_shape(depth, image, "smoothness_loss");
  const int h = depth.height(), w = depth.width();
  const std::size_t n = depth.pixel_count();
  if (n == 0) throw DegenerateInputError("smoothness_loss on empty field");
  std::vector<double> inv(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(depth.data()[i] > 0.0)) throw DomainError("smoothness_loss requires positive depth");
    inv[i] = 1.0 / depth.data()[i];
  }
  const double mean_inv = pairwise_sum(inv) / static_cast<double>(n);
  std::vector<double> norm(n);
  for (std::size_t i = 0; i < n; ++i) norm[i] = inv[i] / mean_inv;

  auto image_weight = [&](int v0, int u0, int v1, int u1) {
    return std::exp(-(image.pixel(v1, u1) - image.pixel(v0, u0)).cwiseAbs().sum() / 3.0);
  };

  std::vector<double> d_norm(n, 0.0);
  std::vector<double> x_terms, y_terms;
  x_terms.reserve(n);
  y_terms.reserve(n);
  const double nx = static_cast<double>(h) * (w - 1);
  const double ny = static_cast<double>(h - 1) * w;
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const std::size_t i = depth.index(v, u);
      if (u + 1 < w) {
        const double diff = norm[i + 1] - norm[i];
        const double wt = image_weight(v, u, v, u + 1);
        x_terms.push_back(std::abs(diff) * wt);
        d_norm[i + 1] += sign(diff) * wt / nx;
        d_norm[i] -= sign(diff) * wt / nx;
      }
      if (v + 1 < h) {
        const std::size_t j = depth.index(v + 1, u);
        const double diff = norm[j] - norm[i];
        const double wt = image_weight(v, u, v + 1, u);
        y_terms.push_back(std::abs(diff) * wt);
        d_norm[j] += sign(diff) * wt / ny;
        d_norm[i] -= sign(diff) * wt / ny;
      }
    }
  }
  SmoothnessGradient out;
  out.loss = (x_terms.empty() ? 0.0 : pairwise_sum(x_terms) / nx) +
             (y_terms.empty() ? 0.0 : pairwise_sum(y_terms) / ny);

  // norm_i = inv_i / mean(inv): dL/dinv_j = g_j / m - sum_i(g_i inv_i) / (n m^2).
  std::vector<double> g_inv(n);
  for (std::size_t i = 0; i < n; ++i) g_inv[i] = d_norm[i] * inv[i];
  const double coupling = pairwise_sum(g_inv) / (static_cast<double>(n) * mean_inv * mean_inv);
  out.d_depth = ScalarField(h, w);
  for (std::size_t i = 0; i < n; ++i) {
    const double d_inv = d_norm[i] / mean_inv - coupling;
    out.d_depth.data()[i] = -d_inv * inv[i] * inv[i];
  }
  return out;
}

double smoothness_loss(const ScalarField& depth, const ColorImage& image) {
  return smoothness_loss_with_gradient(depth, image).loss;
}

MaskLossGradient mask_loss_with_gradient(const BinaryMask& m_hat, const BinaryMask& m, const BinaryMask& valid) {
  require_same_shape(m_hat, m, "mask_loss");
  require_same_shape(m_hat, valid, "mask_loss valid");
  const std::size_t n = m.pixel_count();
  std::vector<double> inter(n, 0.0), uni(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (valid.data()[i] <= 0.5) continue;
    inter[i] = std::min(m_hat.data()[i], m.data()[i]);
    uni[i] = std::max(m_hat.data()[i], m.data()[i]);
  }
  const double I = pairwise_sum(inter);
  const double U = pairwise_sum(uni);
  MaskLossGradient out;
  out.d_m_hat = BinaryMask(m.height(), m.width());
  if (U <= 0.0) return out;
  out.loss = 1.0 - I / U;
  for (std::size_t i = 0; i < n; ++i) {
    if (valid.data()[i] <= 0.5) continue;
    const double a = m_hat.data()[i], b = m.data()[i];
    const double dI = a < b ? 1.0 : 0.0;
    const double dU = a > b ? 1.0 : 0.0;
    out.d_m_hat.data()[i] = -(dI * U - I * dU) / (U * U);
  }
  return out;
}

double mask_loss(const BinaryMask& m_hat, const BinaryMask& m) {
  return mask_loss_with_gradient(m_hat, m, BinaryMask(m.height(), m.width(), 1.0)).loss;
}

double total_loss(const LossComponents& c, const LossWeights& w) {
  return w.w_ph * c.photometric + w.w_ds * c.smoothness + w.w_m * c.mask;
}

}  // namespace do3d
