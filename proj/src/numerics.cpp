#include "handa/numerics.hpp"

#include <cmath>
#include <string>

#include "handa/errors.hpp"

namespace handa {

namespace {

std::string dims(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + dims(a) + " times " + dims(b));
  }
  Matrix out = a * b;
  return out;
}

bool all_finite(const Matrix& m) { return m.allFinite(); }
bool all_finite(const Vector& v) { return v.allFinite(); }

void require_finite(const Matrix& m, std::string_view what) {
  if (!m.allFinite()) {
    throw NumericError("non-finite entry in " + std::string(what));
  }
}

Matrix orthogonalize(const Matrix& w) {
  if (w.rows() > w.cols()) {
    throw ShapeError("orthogonalize: expected rows <= cols, got " + dims(w));
  }
  if (w.rows() == 0) return w;
  require_finite(w, "orthogonalize input");
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(w, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (sv.minCoeff() < 1e-12) {
    throw DegeneracyError("orthogonalize: rank-deficient " + dims(w) +
                          " (smallest singular value " + std::to_string(sv.minCoeff()) + ")");
  }
  Matrix out = svd.matrixU() * svd.matrixV().transpose();
  return out;
}

Matrix unit_clip_columns(const Matrix& w) {
  Matrix out = w;
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    const double norm = out.col(j).norm();
    if (norm > 1.0) out.col(j) /= norm;
  }
  return out;
}

void sgd_step(Matrix& params, const Matrix& grads, double lr, std::string_view name) {
  if (params.rows() != grads.rows() || params.cols() != grads.cols()) {
    throw ShapeError("sgd_step(" + std::string(name) + "): params " + dims(params) +
                     " vs grads " + dims(grads));
  }
  if (!(lr >= 0.0) || !std::isfinite(lr)) {
    throw ContractError("sgd_step(" + std::string(name) + "): learning rate must be finite and >= 0");
  }
  if (!grads.allFinite()) {
    throw NumericError("non-finite gradient for " + std::string(name));
  }
  if (lr == 0.0) return;
  params.noalias() -= lr * grads;
}

void sgd_step(Vector& params, const Vector& grads, double lr, std::string_view name) {
  if (params.size() != grads.size()) {
    throw ShapeError("sgd_step(" + std::string(name) + "): length mismatch");
  }
  if (!(lr >= 0.0) || !std::isfinite(lr)) {
    throw ContractError("sgd_step(" + std::string(name) + "): learning rate must be finite and >= 0");
  }
  if (!grads.allFinite()) {
    throw NumericError("non-finite gradient for " + std::string(name));
  }
  if (lr == 0.0) return;
  params.noalias() -= lr * grads;
}

double glorot_bound(Eigen::Index fan_in, Eigen::Index fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

Matrix hconcat(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("hconcat: " + dims(a) + " with " + dims(b));
  }
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

Matrix select_columns(const Matrix& m, const std::vector<std::size_t>& idx) {
  Matrix out(m.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) {
    if (idx[j] >= static_cast<std::size_t>(m.cols())) {
      throw ContractError("select_columns: index " + std::to_string(idx[j]) + " out of range");
    }
    out.col(static_cast<Eigen::Index>(j)) = m.col(static_cast<Eigen::Index>(idx[j]));
  }
  return out;
}

}  // namespace handa
