#include "handa/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "handa/errors.hpp"

namespace handa {

double accuracy(std::span<const int> predictions, std::span<const int> truth) {
  if (predictions.size() != truth.size()) throw ShapeError("accuracy: length mismatch");
  if (truth.empty()) throw ContractError("accuracy: empty run");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predictions[i] == truth[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

MeanStd mean_std(std::span<const double> values) {
  if (values.empty()) throw ContractError("mean_std: no values");
  MeanStd out;
  const double n = static_cast<double>(values.size());
  out.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.stddev = std::sqrt(ss / (n - 1.0));
  }
  return out;
}

MeanStd average_accuracy(std::span<const RunResult> runs) {
  if (runs.empty()) throw ContractError("average_accuracy: no runs");
  std::vector<double> acc;
  acc.reserve(runs.size());
  for (const auto& r : runs) {
    if (r.truth.size() != runs.front().truth.size()) {
      throw ContractError("average_accuracy: run '" + r.run_id + "' has a different test set size");
    }
    acc.push_back(accuracy(r.predictions, r.truth));
  }
  return mean_std(acc);
}

double auc(std::span<const double> scores, std::span<const int> truth) {
  if (scores.size() != truth.size()) throw ShapeError("auc: length mismatch");
  std::size_t n_pos = 0;
  for (int y : truth) {
    if (y != 0 && y != 1) throw ContractError("auc: truth must be binary 0/1");
    n_pos += static_cast<std::size_t>(y);
  }
  const std::size_t n_neg = truth.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw ContractError("auc: both classes must be present");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Mid-ranks are multiples of 0.5, so the rank sum is exact.
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (truth[order[k]] == 1) rank_sum_pos += mid_rank;
    }
    i = j + 1;
  }
  const double np = static_cast<double>(n_pos);
  const double nn = static_cast<double>(n_neg);
  return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw ContractError("incomplete_beta: a and b must be positive");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  // The continued fraction converges fast for x < (a + 1) / (a + b + 2);
  // use the reflection I_x(a, b) = 1 - I_{1-x}(b, a) otherwise.
  if (x > (a + 1.0) / (a + b + 2.0)) return 1.0 - incomplete_beta(b, a, 1.0 - x);

  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                           b * std::log1p(-x);
  constexpr double tiny = 1e-300;
  constexpr double eps = 1e-16;
  // Modified Lentz evaluation.
  double f = 1.0;
  double c = 1.0;
  double d = 1.0 - (a + b) * x / (a + 1.0);
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  f = d;
  for (int m = 1; m <= 10000; ++m) {
    const double dm = static_cast<double>(m);
    double num = dm * (b - dm) * x / ((a + 2.0 * dm - 1.0) * (a + 2.0 * dm));
    d = 1.0 + num * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + num / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    f *= d * c;

    num = -(a + dm) * (a + b + dm) * x / ((a + 2.0 * dm) * (a + 2.0 * dm + 1.0));
    d = 1.0 + num * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + num / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    f *= delta;
    if (std::abs(delta - 1.0) < eps) break;
  }
  return std::exp(log_front) * f / a;
}

double student_t_two_sided(double t, double dof) {
  if (!(dof > 0.0)) throw ContractError("student_t_two_sided: dof must be positive");
  if (std::isinf(t)) return 0.0;
  return incomplete_beta(0.5 * dof, 0.5, dof / (dof + t * t));
}

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("paired_t_test: length mismatch");
  if (a.size() < 2) throw ContractError("paired_t_test: need at least two pairs");
  std::vector<double> diff(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) diff[i] = a[i] - b[i];
  const MeanStd d = mean_std(diff);
  const double n = static_cast<double>(diff.size());

  TTestResult r;
  const bool constant = std::all_of(diff.begin(), diff.end(), [&](double v) { return v == diff.front(); });
  if (constant || d.stddev == 0.0) {
    r.degenerate = true;
    if (d.mean == 0.0) {
      r.t = 0.0;
      r.p = 1.0;
    } else {
      r.t = std::copysign(std::numeric_limits<double>::infinity(), d.mean);
      r.p = 0.0;
    }
    return r;
  }
  r.t = d.mean / (d.stddev / std::sqrt(n));
  r.p = student_t_two_sided(r.t, n - 1.0);
  return r;
}

namespace {

// Dominant eigenpair of the symmetric PSD matrix `cov`, restricted to the
// orthogonal complement of `against` (if non-empty).
std::pair<Vector, double> power_iterate(const Eigen::MatrixXd& cov, const Vector& against) {
  const Eigen::Index d = cov.rows();
  Vector v(d);
  for (Eigen::Index i = 0; i < d; ++i) v(i) = 1.0 + 0.5 * std::sin(1.0 + static_cast<double>(i));
  const auto deflate = [&](Vector& x) {
    if (against.size()) x -= against.dot(x) * against;
  };
  deflate(v);
  if (v.norm() < 1e-12) {
    // The fixed start happened to be parallel to `against`; use a unit axis.
    Eigen::Index axis = 0;
    against.cwiseAbs().minCoeff(&axis);
    v = Vector::Unit(d, axis);
    deflate(v);
  }
  v.normalize();

  for (int it = 0; it < 200000; ++it) {
    Vector w = cov * v;
    deflate(w);
    const double norm = w.norm();
    if (norm < 1e-300) break;  // v lies in the null space: any unit vector is an eigenvector
    w /= norm;
    if (w.dot(v) < 0.0) w = -w;
    const double change = (w - v).norm();
    v = w;
    if (change < 1e-9) break;
  }
  return {v, v.dot(cov * v)};
}

void fix_sign(Vector& v) {
  Eigen::Index idx = 0;
  v.cwiseAbs().maxCoeff(&idx);
  if (v(idx) < 0.0) v = -v;
}

}  // namespace

PcaResult pca_2d(const Matrix& embeddings) {
  if (embeddings.cols() < 2) throw ContractError("pca_2d: need at least two samples");
  if (embeddings.rows() < 2) throw ContractError("pca_2d: need at least two dimensions");
  const Vector mean = embeddings.rowwise().mean();
  Matrix centered = embeddings;
  centered.colwise() -= mean;
  const Eigen::MatrixXd cov = centered * centered.transpose() / static_cast<double>(embeddings.cols() - 1);
  if (!(cov.trace() > 1e-300)) throw DegeneracyError("pca_2d: data has zero variance");

  auto [v1, l1] = power_iterate(cov, Vector());
  auto [v2, l2] = power_iterate(cov, v1);
  // Clean up residual non-orthogonality before fixing signs.
  v2 -= v1.dot(v2) * v1;
  v2.normalize();
  fix_sign(v1);
  fix_sign(v2);

  PcaResult out;
  out.components.resize(2, embeddings.rows());
  out.components.row(0) = v1.transpose();
  out.components.row(1) = v2.transpose();
  out.projected = out.components * centered;
  out.explained[0] = std::max(0.0, l1);
  out.explained[1] = std::max(0.0, l2);
  return out;
}

}  // namespace handa
