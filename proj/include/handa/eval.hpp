#pragma once

// Evaluation metrics: multi-run average accuracy, Mann-Whitney AUC, the
// paired t-test, and a deterministic 2-D PCA view of embeddings.

#include <span>
#include <string>
#include <vector>

#include "handa/numerics.hpp"

namespace handa {

struct RunResult {
  std::string run_id;
  Labels predictions;
  Matrix scores;  // C x n, may be empty
  Labels truth;
};

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;  // sample stddev (n - 1 denominator), 0 for a single run
};

double accuracy(std::span<const int> predictions, std::span<const int> truth);

// Mean and sample stddev of per-run accuracy. All runs must share one test
// set size.
MeanStd average_accuracy(std::span<const RunResult> runs);

MeanStd mean_std(std::span<const double> values);

// P(score+ > score-) + 0.5 P(tie), via mid-ranks. truth is 0/1 and must
// contain both classes.
double auc(std::span<const double> scores, std::span<const int> truth);

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  // Differences had zero variance: t is +-inf with p = 0 (nonzero mean) or
  // t = 0 with p = 1 (all differences zero).
  bool degenerate = false;
};

// Two-sided paired t-test with n - 1 degrees of freedom.
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
double incomplete_beta(double a, double b, double x);

// Two-sided tail probability P(|T| >= |t|) for Student's t with dof degrees.
double student_t_two_sided(double t, double dof);

struct PcaResult {
  Matrix projected;           // 2 x n
  Matrix components;          // 2 x d, unit rows
  double explained[2] = {0, 0};  // variance along each component
};

// Projects the centered columns of `embeddings` (d x n) on the top two
// principal directions. Power iteration with deflation from a fixed start,
// tolerance 1e-9; each component's largest-magnitude coordinate is made
// positive. Throws DegeneracyError when the data has zero variance.
PcaResult pca_2d(const Matrix& embeddings);

}  // namespace handa
