#pragma once

// Shared Crammer-Singer hinge classifier on top of the feature net.

#include <span>

#include "handa/mlp.hpp"
#include "handa/sdl.hpp"

namespace handa {

struct ClassifierHead {
  MlpParams net;  // d_N -> C raw scores
  int num_classes = 0;

  void validate() const;
  friend bool operator==(const ClassifierHead&, const ClassifierHead&) = default;
};

// Mean over samples of max(0, 1 + max_{j != y} s_j - s_y). scores is C x n.
double hinge_loss(const Matrix& scores, std::span<const int> labels);

// Subgradient of hinge_loss w.r.t. scores. Samples exactly at the hinge
// (loss 0) take the zero branch; ties for the runner-up go to the smallest index.
Matrix hinge_loss_grad(const Matrix& scores, std::span<const int> labels);

// source_weight * hinge(source) + (1 - source_weight) * hinge(labeled target),
// scores = head(phi_N(r)). The default is the equal-weight convex combination.
double classifier_loss(const ClassifierHead& head, const MlpParams& feature_net, const Matrix& r_s,
                       std::span<const int> y_s, const Matrix& r_t_labeled, std::span<const int> y_t,
                       double source_weight = 0.5);

struct ClassifierGrads {
  double loss = 0.0;
  MlpParams head;
  MlpParams feature_net;
  // shared_map, encoder_s, encoder_t carry gradient; dictionary and both
  // projections do not enter the loss and stay exactly zero.
  SdlParams sdl;
};

ClassifierGrads classifier_grads(const ClassifierHead& head, const MlpParams& feature_net, const SdlParams& sdl,
                                 const Matrix& x_s, std::span<const int> y_s, const Matrix& x_t_labeled,
                                 std::span<const int> y_t, double source_weight = 0.5);

struct Prediction {
  Labels labels;
  Matrix scores;  // C x n
};

// Argmax of head(phi_N(r)); ties go to the smallest class index.
Prediction predict(const ClassifierHead& head, const MlpParams& feature_net, const Matrix& r);

// Column-wise argmax with the same tie rule.
Labels argmax_columns(const Matrix& scores);

// Column-wise softmax, numerically shifted by the column max.
Matrix softmax_columns(const Matrix& scores);

}  // namespace handa
