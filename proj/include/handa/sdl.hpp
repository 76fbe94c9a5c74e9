#pragma once

// Shared dictionary learning: both domains are encoded into one latent
// space, R = A * B * X, and a reconstruction bound ties the encoders to
// orthonormal domain projections over a shared, column-bounded dictionary.

#include <string>

#include "handa/numerics.hpp"
#include "handa/rng.hpp"

namespace handa {

struct SdlParams {
  Matrix projection_s;  // P^s, k x m_s, row-orthonormal
  Matrix projection_t;  // P^t, k x m_t, row-orthonormal
  Matrix dictionary;    // D, k x k, columns in the unit ball
  Matrix shared_map;    // A, k x k, columns in the unit ball
  Matrix encoder_s;     // B^s, k x m_s, row-orthonormal
  Matrix encoder_t;     // B^t, k x m_t, row-orthonormal

  Eigen::Index latent_dim() const { return dictionary.rows(); }
  Eigen::Index source_dim() const { return projection_s.cols(); }
  Eigen::Index target_dim() const { return projection_t.cols(); }

  SdlParams zeros_like() const;
  SdlParams& operator+=(const SdlParams& other);
  SdlParams scaled(double factor) const;

  // Throws ShapeError if the six blocks are not mutually consistent or
  // k > min(m_s, m_t).
  void validate_shapes() const;

  friend bool operator==(const SdlParams&, const SdlParams&) = default;
};

// Glorot-uniform draws followed by sdl_project, so the result is feasible.
SdlParams init_sdl(Eigen::Index k, Eigen::Index m_s, Eigen::Index m_t, Rng& rng);

struct Representations {
  Matrix source;  // k x n_s
  Matrix target;  // k x n_t
};

Representations sdl_represent(const SdlParams& p, const Matrix& x_s, const Matrix& x_t);

// Per-sample reconstruction bound
//   ||P^s X^s - D A B^s X^s||_F^2 / n_s + ||P^t X^t - D A B^t X^t||_F^2 / n_t.
double sdl_loss(const SdlParams& p, const Matrix& x_s, const Matrix& x_t);

// Exact gradient of sdl_loss with respect to all six blocks, returned in an
// SdlParams of identical shape.
SdlParams sdl_grads(const SdlParams& p, const Matrix& x_s, const Matrix& x_t);

// Clips D and A columns into the unit ball and replaces P^s, P^t, B^s, B^t
// with their nearest row-orthonormal matrices. DegeneracyError names the
// block that was rank deficient.
SdlParams sdl_project(const SdlParams& p);

struct SdlResiduals {
  double orthogonality = 0.0;   // max ||W W^T - I||_F over the four projections
  double max_column_norm = 0.0;  // max column norm over D and A
};

SdlResiduals sdl_residuals(const SdlParams& p);

void sgd_step(SdlParams& params, const SdlParams& grads, double lr);

// Fixed-order list of (name, block) pairs for generic iteration.
std::vector<std::pair<std::string, Matrix*>> blocks(SdlParams& p);
std::vector<std::pair<std::string, const Matrix*>> blocks(const SdlParams& p);

}  // namespace handa
