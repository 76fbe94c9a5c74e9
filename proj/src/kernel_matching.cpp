#include "handa/kernel_matching.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "handa/errors.hpp"

namespace handa {

namespace {

using ColMatrix = Eigen::MatrixXd;

double sq_dist(const ColMatrix& a, Eigen::Index i, const ColMatrix& b, Eigen::Index j) {
  const double* pa = a.col(i).data();
  const double* pb = b.col(j).data();
  double s = 0.0;
  for (Eigen::Index d = 0; d < a.rows(); ++d) {
    const double diff = pa[d] - pb[d];
    s += diff * diff;
  }
  return s;
}

struct KernelEval {
  double value;
  double slope;  // d k / d ||a - b||^2
};

// Precomputed -1 / (2 sigma_q^2) for every bandwidth.
std::vector<double> exponents(const KernelSpec& spec, double scale) {
  std::vector<double> e;
  e.reserve(spec.bandwidths.size());
  for (double s : spec.bandwidths) {
    const double sigma = s * scale;
    e.push_back(-1.0 / (2.0 * sigma * sigma));
  }
  return e;
}

KernelEval kernel(double d2, const std::vector<double>& expo) {
  KernelEval k{0.0, 0.0};
  for (double e : expo) {
    const double v = std::exp(e * d2);
    k.value += v;
    k.slope += e * v;
  }
  return k;
}

double bandwidth_scale(const Matrix& x, const Matrix& y, const KernelSpec& spec) {
  return spec.median_rescale ? median_heuristic(x, y).value : 1.0;
}

void check_mmd_inputs(const Matrix& x, const Matrix& y, const KernelSpec& spec, MmdEstimator est) {
  spec.validate();
  if (x.rows() != y.rows()) {
    throw ShapeError("mmd2: feature dimensions differ (" + std::to_string(x.rows()) + " vs " +
                     std::to_string(y.rows()) + ")");
  }
  const Eigen::Index min_n = est == MmdEstimator::Unbiased ? 2 : 1;
  if (x.cols() < min_n || y.cols() < min_n) {
    throw ContractError(est == MmdEstimator::Unbiased
                            ? "mmd2: unbiased estimator needs at least 2 samples per side"
                            : "mmd2: empty sample");
  }
}

struct Weights {
  double xx, yy, xy;
};

Weights weights(Eigen::Index n, Eigen::Index m, MmdEstimator est) {
  const double dn = static_cast<double>(n);
  const double dm = static_cast<double>(m);
  if (est == MmdEstimator::Biased) return {1.0 / (dn * dn), 1.0 / (dm * dm), 2.0 / (dn * dm)};
  return {1.0 / (dn * (dn - 1.0)), 1.0 / (dm * (dm - 1.0)), 2.0 / (dn * dm)};
}

// Sum over i < j of k(a_i, a_j).
double upper_sum(const ColMatrix& a, const std::vector<double>& expo) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < a.cols(); ++i)
    for (Eigen::Index j = i + 1; j < a.cols(); ++j) s += kernel(sq_dist(a, i, a, j), expo).value;
  return s;
}

}  // namespace

void KernelSpec::validate() const {
  if (bandwidths.empty()) throw ContractError("KernelSpec: no bandwidths");
  for (double b : bandwidths) {
    if (!(b > 0.0) || !std::isfinite(b)) throw ContractError("KernelSpec: bandwidths must be positive");
  }
}

double mmd2(const Matrix& x, const Matrix& y, const KernelSpec& spec, MmdEstimator estimator) {
  check_mmd_inputs(x, y, spec, estimator);
  const auto expo = exponents(spec, bandwidth_scale(x, y, spec));
  const ColMatrix xc = x;
  const ColMatrix yc = y;
  const Eigen::Index n = xc.cols();
  const Eigen::Index m = yc.cols();
  const double q = static_cast<double>(expo.size());

  double sxx = 2.0 * upper_sum(xc, expo);
  double syy = 2.0 * upper_sum(yc, expo);
  if (estimator == MmdEstimator::Biased) {
    sxx += static_cast<double>(n) * q;
    syy += static_cast<double>(m) * q;
  }

  // The cross sum is accumulated in both loop orders and averaged, which
  // makes swapping x and y reproduce the same bits.
  Matrix kxy(n, m);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < m; ++j) kxy(i, j) = kernel(sq_dist(xc, i, yc, j), expo).value;
  double by_rows = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < m; ++j) by_rows += kxy(i, j);
  double by_cols = 0.0;
  for (Eigen::Index j = 0; j < m; ++j)
    for (Eigen::Index i = 0; i < n; ++i) by_cols += kxy(i, j);
  const double sxy = 0.5 * (by_rows + by_cols);

  const Weights w = weights(n, m, estimator);
  return (w.xx * sxx + w.yy * syy) - w.xy * sxy;
}

MmdWithGrad mmd2_with_grad(const Matrix& x, const Matrix& y, const KernelSpec& spec, MmdEstimator estimator) {
  check_mmd_inputs(x, y, spec, estimator);
  MmdWithGrad out;
  out.value = mmd2(x, y, spec, estimator);

  const auto expo = exponents(spec, bandwidth_scale(x, y, spec));
  const ColMatrix xc = x;
  const ColMatrix yc = y;
  const Eigen::Index n = xc.cols();
  const Eigen::Index m = yc.cols();
  const Weights w = weights(n, m, estimator);

  ColMatrix gx = ColMatrix::Zero(xc.rows(), n);
  ColMatrix gy = ColMatrix::Zero(yc.rows(), m);

  // d k(a, b) / d a = 2 * slope * (a - b).
  const auto self_term = [&](const ColMatrix& a, ColMatrix& ga, double weight) {
    for (Eigen::Index i = 0; i < a.cols(); ++i) {
      for (Eigen::Index j = i + 1; j < a.cols(); ++j) {
        const KernelEval k = kernel(sq_dist(a, i, a, j), expo);
        // Each unordered pair appears twice in the double sum.
        const double c = 2.0 * weight * 2.0 * k.slope;
        ga.col(i) += c * (a.col(i) - a.col(j));
        ga.col(j) += c * (a.col(j) - a.col(i));
      }
    }
  };
  self_term(xc, gx, w.xx);
  self_term(yc, gy, w.yy);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      const KernelEval k = kernel(sq_dist(xc, i, yc, j), expo);
      const double c = -w.xy * 2.0 * k.slope;
      gx.col(i) += c * (xc.col(i) - yc.col(j));
      gy.col(j) += c * (yc.col(j) - xc.col(i));
    }
  }
  out.grad_x = gx;
  out.grad_y = gy;
  return out;
}

MedianDistance median_heuristic(const Matrix& x, const Matrix& y) {
  if (x.rows() != y.rows()) throw ShapeError("median_heuristic: feature dimensions differ");
  const Eigen::Index n = x.cols() + y.cols();
  if (n < 2) throw ContractError("median_heuristic: need at least two points");
  ColMatrix pooled(x.rows(), n);
  pooled << ColMatrix(x), ColMatrix(y);
  std::vector<double> dist;
  dist.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) dist.push_back(std::sqrt(sq_dist(pooled, i, pooled, j)));

  const std::size_t mid = dist.size() / 2;
  std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(mid), dist.end());
  double med = dist[mid];
  if (dist.size() % 2 == 0) {
    const double lower = *std::max_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(mid));
    med = 0.5 * (lower + med);
  }
  if (!(med > 0.0)) return {1.0, true};
  return {med, false};
}

void AdvNets::validate() const {
  feature_net.validate();
  kernel_net.validate();
  if (feature_net.output_dim() != kernel_net.input_dim()) {
    throw ShapeError("AdvNets: feature net output does not feed the kernel net");
  }
}

double adv_loss(const AdvNets& nets, const Matrix& r_s, const Matrix& r_t, const KernelSpec& spec,
                MmdEstimator estimator) {
  nets.validate();
  const Matrix e_s = mlp_apply(nets.kernel_net, mlp_apply(nets.feature_net, r_s));
  const Matrix e_t = mlp_apply(nets.kernel_net, mlp_apply(nets.feature_net, r_t));
  return mmd2(e_s, e_t, spec, estimator);
}

AdvGrads adv_grads(const AdvNets& nets, const SdlParams& sdl, const Matrix& x_s, const Matrix& x_t,
                   const KernelSpec& spec, MmdEstimator estimator) {
  nets.validate();
  const Matrix bx_s = sdl.encoder_s * x_s;
  const Matrix bx_t = sdl.encoder_t * x_t;
  const Representations r = sdl_represent(sdl, x_s, x_t);

  const MlpForward hs = mlp_forward(nets.feature_net, r.source);
  const MlpForward ht = mlp_forward(nets.feature_net, r.target);
  const MlpForward es = mlp_forward(nets.kernel_net, hs.output);
  const MlpForward et = mlp_forward(nets.kernel_net, ht.output);

  const MmdWithGrad mmd = mmd2_with_grad(es.output, et.output, spec, estimator);

  AdvGrads g;
  g.loss = mmd.value;
  const MlpBackward kb_s = mlp_backward(nets.kernel_net, es.cache, mmd.grad_x);
  const MlpBackward kb_t = mlp_backward(nets.kernel_net, et.cache, mmd.grad_y);
  g.kernel_net = kb_s.grads;
  g.kernel_net += kb_t.grads;

  const MlpBackward fb_s = mlp_backward(nets.feature_net, hs.cache, kb_s.grad_input);
  const MlpBackward fb_t = mlp_backward(nets.feature_net, ht.cache, kb_t.grad_input);
  g.feature_net = fb_s.grads;
  g.feature_net += fb_t.grads;

  g.sdl = sdl.zeros_like();
  g.sdl.shared_map = fb_s.grad_input * bx_s.transpose() + fb_t.grad_input * bx_t.transpose();
  g.sdl.encoder_s = (sdl.shared_map.transpose() * fb_s.grad_input) * x_s.transpose();
  g.sdl.encoder_t = (sdl.shared_map.transpose() * fb_t.grad_input) * x_t.transpose();
  return g;
}

}  // namespace handa
