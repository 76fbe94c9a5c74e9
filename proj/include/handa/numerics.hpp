#pragma once

// Dense linear algebra and constraint projections shared by every module.
//
// Samples are stored as columns throughout: a batch of n vectors of
// dimension m is an m x n matrix.

#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace handa {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Labels = std::vector<int>;

// a * b. Throws ShapeError when a.cols() != b.rows().
Matrix matmul(const Matrix& a, const Matrix& b);

bool all_finite(const Matrix& m);
bool all_finite(const Vector& v);

// Throws NumericError naming `what` if any entry is NaN/Inf.
void require_finite(const Matrix& m, std::string_view what);

// Nearest row-orthonormal matrix in Frobenius norm (polar factor U V^T of the
// thin SVD). Requires rows <= cols; throws DegeneracyError when the smallest
// singular value falls below 1e-12.
Matrix orthogonalize(const Matrix& w);

// Projects every column onto the closed unit l2 ball. Columns already inside
// are left bit-for-bit untouched.
Matrix unit_clip_columns(const Matrix& w);

// params -= lr * grads. lr must be >= 0; a non-finite gradient entry throws
// NumericError before anything is modified.
void sgd_step(Matrix& params, const Matrix& grads, double lr, std::string_view name = "matrix");
void sgd_step(Vector& params, const Vector& grads, double lr, std::string_view name = "vector");

// Uniform Glorot bound sqrt(6 / (fan_in + fan_out)).
double glorot_bound(Eigen::Index fan_in, Eigen::Index fan_out);

// Horizontal concatenation [a | b]; both must share a row count.
Matrix hconcat(const Matrix& a, const Matrix& b);

// Gathers the listed columns of m, in order.
Matrix select_columns(const Matrix& m, const std::vector<std::size_t>& idx);

}  // namespace handa
