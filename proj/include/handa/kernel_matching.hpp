#pragma once

// Adversarial kernel matching. The kernel is a mixture of Gaussian RBFs
// evaluated on the output of a learned kernel network; the kernel network
// ascends MMD^2 between domains while the feature network and the shared
// encoders descend it.

#include <vector>

#include "handa/mlp.hpp"
#include "handa/sdl.hpp"

namespace handa {

struct KernelSpec {
  std::vector<double> bandwidths{1.0, 2.0, 4.0, 8.0, 16.0};
  // Multiply every bandwidth by the pooled median pairwise distance. The
  // median is treated as a constant when differentiating.
  bool median_rescale = false;

  // Throws ContractError unless non-empty with strictly positive entries.
  void validate() const;
};

enum class MmdEstimator { Biased, Unbiased };

// Squared MMD between the columns of x and y under the mixture kernel
// sum_q exp(-||a - b||^2 / (2 sigma_q^2)). Symmetric in (x, y) bit for bit.
double mmd2(const Matrix& x, const Matrix& y, const KernelSpec& spec,
            MmdEstimator estimator = MmdEstimator::Biased);

struct MmdWithGrad {
  double value = 0.0;
  Matrix grad_x;
  Matrix grad_y;
};

MmdWithGrad mmd2_with_grad(const Matrix& x, const Matrix& y, const KernelSpec& spec,
                           MmdEstimator estimator = MmdEstimator::Biased);

struct MedianDistance {
  double value = 1.0;
  bool fallback = false;  // all points coincided, value forced to 1.0
};

// Median of all pairwise Euclidean distances over the pooled columns of x and y.
MedianDistance median_heuristic(const Matrix& x, const Matrix& y);

struct AdvNets {
  MlpParams feature_net;  // k -> d_N
  MlpParams kernel_net;   // d_N -> d_M

  void validate() const;
  friend bool operator==(const AdvNets&, const AdvNets&) = default;
};

double adv_loss(const AdvNets& nets, const Matrix& r_s, const Matrix& r_t, const KernelSpec& spec,
                MmdEstimator estimator = MmdEstimator::Unbiased);

struct AdvGrads {
  double loss = 0.0;
  MlpParams feature_net;
  MlpParams kernel_net;
  // Only shared_map, encoder_s and encoder_t are non-zero.
  SdlParams sdl;
};

// Gradients of adv_loss through kernel_net o feature_net o (A B X). The
// caller ascends on kernel_net and descends on everything else.
AdvGrads adv_grads(const AdvNets& nets, const SdlParams& sdl, const Matrix& x_s, const Matrix& x_t,
                   const KernelSpec& spec, MmdEstimator estimator = MmdEstimator::Unbiased);

}  // namespace handa
