#include "handa/classifier.hpp"

#include <cmath>
#include <string>

#include "handa/errors.hpp"

namespace handa {

namespace {

void check_labels(const Matrix& scores, std::span<const int> labels) {
  if (scores.cols() == 0) throw ContractError("hinge_loss: empty batch");
  if (static_cast<Eigen::Index>(labels.size()) != scores.cols()) {
    throw ShapeError("hinge_loss: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(scores.cols()) + " samples");
  }
  if (scores.rows() < 2) throw ContractError("hinge_loss: need at least two classes");
  for (int y : labels) {
    if (y < 0 || y >= scores.rows()) {
      throw ContractError("hinge_loss: label " + std::to_string(y) + " outside [0, " +
                          std::to_string(scores.rows()) + ")");
    }
  }
}

// Index of the highest-scoring class other than y; smallest index on ties.
Eigen::Index runner_up(const Matrix& scores, Eigen::Index col, int y) {
  Eigen::Index best = -1;
  for (Eigen::Index c = 0; c < scores.rows(); ++c) {
    if (c == y) continue;
    if (best < 0 || scores(c, col) > scores(best, col)) best = c;
  }
  return best;
}

void check_weight(double w) {
  if (!(w >= 0.0 && w <= 1.0)) throw ContractError("classifier: source weight must lie in [0, 1]");
}

}  // namespace

void ClassifierHead::validate() const {
  net.validate();
  if (num_classes < 2) throw ContractError("ClassifierHead: need at least two classes");
  if (net.output_dim() != num_classes) throw ShapeError("ClassifierHead: output dim != num_classes");
}

double hinge_loss(const Matrix& scores, std::span<const int> labels) {
  check_labels(scores, labels);
  double total = 0.0;
  for (Eigen::Index i = 0; i < scores.cols(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    const Eigen::Index j = runner_up(scores, i, y);
    total += std::max(0.0, 1.0 + scores(j, i) - scores(y, i));
  }
  return total / static_cast<double>(scores.cols());
}

Matrix hinge_loss_grad(const Matrix& scores, std::span<const int> labels) {
  check_labels(scores, labels);
  Matrix g = Matrix::Zero(scores.rows(), scores.cols());
  const double w = 1.0 / static_cast<double>(scores.cols());
  for (Eigen::Index i = 0; i < scores.cols(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    const Eigen::Index j = runner_up(scores, i, y);
    if (1.0 + scores(j, i) - scores(y, i) > 0.0) {
      g(j, i) += w;
      g(y, i) -= w;
    }
  }
  return g;
}

double classifier_loss(const ClassifierHead& head, const MlpParams& feature_net, const Matrix& r_s,
                       std::span<const int> y_s, const Matrix& r_t_labeled, std::span<const int> y_t,
                       double source_weight) {
  head.validate();
  check_weight(source_weight);
  if (r_t_labeled.cols() == 0) throw ContractError("classifier_loss: labeled target batch is empty");
  const Matrix s_s = mlp_apply(head.net, mlp_apply(feature_net, r_s));
  const Matrix s_t = mlp_apply(head.net, mlp_apply(feature_net, r_t_labeled));
  return source_weight * hinge_loss(s_s, y_s) + (1.0 - source_weight) * hinge_loss(s_t, y_t);
}

ClassifierGrads classifier_grads(const ClassifierHead& head, const MlpParams& feature_net, const SdlParams& sdl,
                                 const Matrix& x_s, std::span<const int> y_s, const Matrix& x_t_labeled,
                                 std::span<const int> y_t, double source_weight) {
  head.validate();
  check_weight(source_weight);
  if (x_t_labeled.cols() == 0) throw ContractError("classifier_grads: labeled target batch is empty");
  const Matrix bx_s = sdl.encoder_s * x_s;
  const Matrix bx_t = sdl.encoder_t * x_t_labeled;
  const Representations r = sdl_represent(sdl, x_s, x_t_labeled);

  const MlpForward hs = mlp_forward(feature_net, r.source);
  const MlpForward ht = mlp_forward(feature_net, r.target);
  const MlpForward ss = mlp_forward(head.net, hs.output);
  const MlpForward st = mlp_forward(head.net, ht.output);

  ClassifierGrads g;
  const double w_t = 1.0 - source_weight;
  g.loss = source_weight * hinge_loss(ss.output, y_s) + w_t * hinge_loss(st.output, y_t);
  const Matrix gs = source_weight * hinge_loss_grad(ss.output, y_s);
  const Matrix gt = w_t * hinge_loss_grad(st.output, y_t);

  const MlpBackward hb_s = mlp_backward(head.net, ss.cache, gs);
  const MlpBackward hb_t = mlp_backward(head.net, st.cache, gt);
  g.head = hb_s.grads;
  g.head += hb_t.grads;

  const MlpBackward fb_s = mlp_backward(feature_net, hs.cache, hb_s.grad_input);
  const MlpBackward fb_t = mlp_backward(feature_net, ht.cache, hb_t.grad_input);
  g.feature_net = fb_s.grads;
  g.feature_net += fb_t.grads;

  g.sdl = sdl.zeros_like();
  g.sdl.shared_map = fb_s.grad_input * bx_s.transpose() + fb_t.grad_input * bx_t.transpose();
  g.sdl.encoder_s = (sdl.shared_map.transpose() * fb_s.grad_input) * x_s.transpose();
  g.sdl.encoder_t = (sdl.shared_map.transpose() * fb_t.grad_input) * x_t_labeled.transpose();
  return g;
}

Prediction predict(const ClassifierHead& head, const MlpParams& feature_net, const Matrix& r) {
  head.validate();
  Prediction p;
  p.scores = mlp_apply(head.net, mlp_apply(feature_net, r));
  p.labels = argmax_columns(p.scores);
  return p;
}

Labels argmax_columns(const Matrix& scores) {
  Labels out(static_cast<std::size_t>(scores.cols()));
  for (Eigen::Index i = 0; i < scores.cols(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < scores.rows(); ++c) {
      if (scores(c, i) > scores(best, i)) best = c;
    }
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

Matrix softmax_columns(const Matrix& scores) {
  Matrix p(scores.rows(), scores.cols());
  for (Eigen::Index i = 0; i < scores.cols(); ++i) {
    const double top = scores.col(i).maxCoeff();
    double z = 0.0;
    for (Eigen::Index c = 0; c < scores.rows(); ++c) {
      p(c, i) = std::exp(scores(c, i) - top);
      z += p(c, i);
    }
    p.col(i) /= z;
  }
  return p;
}

}  // namespace handa
