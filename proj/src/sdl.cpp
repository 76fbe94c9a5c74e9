#include "handa/sdl.hpp"

#include <algorithm>

#include "handa/errors.hpp"

namespace handa {

namespace {

Matrix glorot_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double bound = glorot_bound(cols, rows);
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.uniform(-bound, bound);
  return m;
}

Matrix orthogonalize_named(const Matrix& w, const char* name) {
  try {
    return orthogonalize(w);
  } catch (const DegeneracyError& e) {
    throw DegeneracyError(std::string(name) + ": " + e.what());
  }
}

double orth_residual(const Matrix& w) {
  Matrix gram = w * w.transpose();
  gram -= Matrix::Identity(w.rows(), w.rows());
  return gram.norm();
}

void check_inputs(const SdlParams& p, const Matrix& x_s, const Matrix& x_t) {
  p.validate_shapes();
  if (x_s.rows() != p.source_dim()) {
    throw ShapeError("sdl: source batch has " + std::to_string(x_s.rows()) + " features, expected " +
                     std::to_string(p.source_dim()));
  }
  if (x_t.rows() != p.target_dim()) {
    throw ShapeError("sdl: target batch has " + std::to_string(x_t.rows()) + " features, expected " +
                     std::to_string(p.target_dim()));
  }
}

}  // namespace

SdlParams SdlParams::zeros_like() const {
  SdlParams z = *this;
  for (auto& [name, m] : blocks(z)) m->setZero();
  return z;
}

SdlParams& SdlParams::operator+=(const SdlParams& other) {
  auto mine = blocks(*this);
  auto theirs = blocks(other);
  for (std::size_t i = 0; i < mine.size(); ++i) {
    if (mine[i].second->rows() != theirs[i].second->rows() ||
        mine[i].second->cols() != theirs[i].second->cols()) {
      throw ShapeError("SdlParams +=: shape mismatch in " + mine[i].first);
    }
    *mine[i].second += *theirs[i].second;
  }
  return *this;
}

SdlParams SdlParams::scaled(double factor) const {
  SdlParams out = *this;
  for (auto& [name, m] : blocks(out)) *m *= factor;
  return out;
}

void SdlParams::validate_shapes() const {
  const Eigen::Index k = dictionary.rows();
  const auto square = [k](const Matrix& m) { return m.rows() == k && m.cols() == k; };
  if (k == 0 || !square(dictionary) || !square(shared_map)) {
    throw ShapeError("sdl: dictionary and shared map must be k x k");
  }
  if (projection_s.rows() != k || encoder_s.rows() != k || projection_t.rows() != k ||
      encoder_t.rows() != k) {
    throw ShapeError("sdl: projections must have k rows");
  }
  if (encoder_s.cols() != projection_s.cols() || encoder_t.cols() != projection_t.cols()) {
    throw ShapeError("sdl: encoder and projection widths differ within a domain");
  }
  if (k > std::min(projection_s.cols(), projection_t.cols())) {
    throw ShapeError("sdl: latent dimension exceeds an input dimension");
  }
}

SdlParams init_sdl(Eigen::Index k, Eigen::Index m_s, Eigen::Index m_t, Rng& rng) {
  if (k <= 0 || k > std::min(m_s, m_t)) {
    throw ContractError("init_sdl: need 0 < k <= min(m_s, m_t), got k=" + std::to_string(k));
  }
  SdlParams p;
  p.projection_s = glorot_matrix(k, m_s, rng);
  p.projection_t = glorot_matrix(k, m_t, rng);
  p.dictionary = glorot_matrix(k, k, rng);
  p.shared_map = glorot_matrix(k, k, rng);
  p.encoder_s = glorot_matrix(k, m_s, rng);
  p.encoder_t = glorot_matrix(k, m_t, rng);
  return sdl_project(p);
}

Representations sdl_represent(const SdlParams& p, const Matrix& x_s, const Matrix& x_t) {
  check_inputs(p, x_s, x_t);
  Representations r;
  r.source = p.shared_map * (p.encoder_s * x_s);
  r.target = p.shared_map * (p.encoder_t * x_t);
  return r;
}

double sdl_loss(const SdlParams& p, const Matrix& x_s, const Matrix& x_t) {
  check_inputs(p, x_s, x_t);
  const Matrix da = p.dictionary * p.shared_map;
  double loss = 0.0;
  if (x_s.cols() > 0) {
    Matrix e = p.projection_s * x_s - da * (p.encoder_s * x_s);
    loss += e.squaredNorm() / static_cast<double>(x_s.cols());
  }
  if (x_t.cols() > 0) {
    Matrix e = p.projection_t * x_t - da * (p.encoder_t * x_t);
    loss += e.squaredNorm() / static_cast<double>(x_t.cols());
  }
  return loss;
}

SdlParams sdl_grads(const SdlParams& p, const Matrix& x_s, const Matrix& x_t) {
  check_inputs(p, x_s, x_t);
  SdlParams g = p.zeros_like();
  const Matrix da = p.dictionary * p.shared_map;

  // One domain's contribution: E = P X - D A B X, weight = 2 / n.
  const auto accumulate = [&](const Matrix& proj, const Matrix& enc, const Matrix& x, Matrix& g_proj,
                              Matrix& g_enc) {
    if (x.cols() == 0) return;
    const double w = 2.0 / static_cast<double>(x.cols());
    const Matrix bx = enc * x;
    const Matrix abx = p.shared_map * bx;
    const Matrix e = proj * x - p.dictionary * abx;
    g_proj = w * (e * x.transpose());
    g.dictionary -= w * (e * abx.transpose());
    const Matrix dte = p.dictionary.transpose() * e;
    g.shared_map -= w * (dte * bx.transpose());
    g_enc = -w * ((da.transpose() * e) * x.transpose());
  };
  accumulate(p.projection_s, p.encoder_s, x_s, g.projection_s, g.encoder_s);
  accumulate(p.projection_t, p.encoder_t, x_t, g.projection_t, g.encoder_t);
  return g;
}

SdlParams sdl_project(const SdlParams& p) {
  p.validate_shapes();
  SdlParams out;
  out.dictionary = unit_clip_columns(p.dictionary);
  out.shared_map = unit_clip_columns(p.shared_map);
  out.projection_s = orthogonalize_named(p.projection_s, "projection_s");
  out.projection_t = orthogonalize_named(p.projection_t, "projection_t");
  out.encoder_s = orthogonalize_named(p.encoder_s, "encoder_s");
  out.encoder_t = orthogonalize_named(p.encoder_t, "encoder_t");
  return out;
}

SdlResiduals sdl_residuals(const SdlParams& p) {
  SdlResiduals r;
  for (const Matrix* w : {&p.projection_s, &p.projection_t, &p.encoder_s, &p.encoder_t}) {
    r.orthogonality = std::max(r.orthogonality, orth_residual(*w));
  }
  for (const Matrix* w : {&p.dictionary, &p.shared_map}) {
    for (Eigen::Index j = 0; j < w->cols(); ++j) {
      r.max_column_norm = std::max(r.max_column_norm, w->col(j).norm());
    }
  }
  return r;
}

void sgd_step(SdlParams& params, const SdlParams& grads, double lr) {
  auto dst = blocks(params);
  auto src = blocks(grads);
  for (const auto& [name, m] : src) {
    if (!m->allFinite()) throw NumericError("non-finite gradient for " + name);
  }
  for (std::size_t i = 0; i < dst.size(); ++i) sgd_step(*dst[i].second, *src[i].second, lr, dst[i].first);
}

std::vector<std::pair<std::string, Matrix*>> blocks(SdlParams& p) {
  return {{"projection_s", &p.projection_s}, {"projection_t", &p.projection_t},
          {"dictionary", &p.dictionary},     {"shared_map", &p.shared_map},
          {"encoder_s", &p.encoder_s},       {"encoder_t", &p.encoder_t}};
}

std::vector<std::pair<std::string, const Matrix*>> blocks(const SdlParams& p) {
  return {{"projection_s", &p.projection_s}, {"projection_t", &p.projection_t},
          {"dictionary", &p.dictionary},     {"shared_map", &p.shared_map},
          {"encoder_s", &p.encoder_s},       {"encoder_t", &p.encoder_t}};
}

}  // namespace handa
