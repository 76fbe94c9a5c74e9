#include "handa/mlp.hpp"

#include <string>

#include "handa/errors.hpp"

namespace handa {

namespace {

Matrix activate(const Matrix& z, Activation act) {
  if (act == Activation::Identity) return z;
  return z.unaryExpr([](double v) { return v > 0.0 ? v : kLeakySlope * v; });
}

// Multiplies the upstream gradient by the activation derivative in place.
void activation_backward(Matrix& grad, const Matrix& z, Activation act) {
  if (act == Activation::Identity) return;
  grad = grad.binaryExpr(z, [](double g, double v) { return v > 0.0 ? g : kLeakySlope * g; });
}

std::vector<Eigen::Index> shape_of(const MlpParams& p) {
  std::vector<Eigen::Index> s;
  s.reserve(2 * p.layers.size());
  for (const auto& l : p.layers) {
    s.push_back(l.weight.rows());
    s.push_back(l.weight.cols());
  }
  return s;
}

}  // namespace

Eigen::Index MlpParams::input_dim() const {
  return layers.empty() ? 0 : layers.front().weight.cols();
}

Eigen::Index MlpParams::output_dim() const {
  return layers.empty() ? 0 : layers.back().weight.rows();
}

MlpParams MlpParams::zeros_like() const {
  MlpParams out = *this;
  for (auto& l : out.layers) {
    l.weight.setZero();
    l.bias.setZero();
  }
  return out;
}

MlpParams MlpParams::scaled(double factor) const {
  MlpParams out = *this;
  for (auto& l : out.layers) {
    l.weight *= factor;
    l.bias *= factor;
  }
  return out;
}

MlpParams& MlpParams::operator+=(const MlpParams& other) {
  if (shape_of(*this) != shape_of(other)) throw ShapeError("MlpParams +=: architecture mismatch");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].weight += other.layers[i].weight;
    layers[i].bias += other.layers[i].bias;
  }
  return *this;
}

void MlpParams::validate() const {
  if (layers.empty()) throw ShapeError("mlp: no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.bias.size() != l.weight.rows()) {
      throw ShapeError("mlp: layer " + std::to_string(i) + " bias length mismatch");
    }
    if (i + 1 < layers.size() && layers[i + 1].weight.cols() != l.weight.rows()) {
      throw ShapeError("mlp: layer " + std::to_string(i) + " output does not chain into layer " +
                       std::to_string(i + 1));
    }
  }
  if (layers.back().activation != Activation::Identity) {
    throw ShapeError("mlp: final layer must use the identity activation");
  }
}

MlpParams make_mlp(const std::vector<Eigen::Index>& dims, Rng& rng) {
  if (dims.size() < 2) throw ContractError("make_mlp: need at least input and output dims");
  MlpParams p;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const Eigen::Index in = dims[i];
    const Eigen::Index out = dims[i + 1];
    if (in <= 0 || out <= 0) throw ContractError("make_mlp: dimensions must be positive");
    Layer layer;
    const double bound = glorot_bound(in, out);
    layer.weight.resize(out, in);
    for (Eigen::Index r = 0; r < out; ++r)
      for (Eigen::Index c = 0; c < in; ++c) layer.weight(r, c) = rng.uniform(-bound, bound);
    layer.bias = Vector::Zero(out);
    layer.activation = (i + 2 == dims.size()) ? Activation::Identity : Activation::LeakyReLU;
    p.layers.push_back(std::move(layer));
  }
  return p;
}

MlpForward mlp_forward(const MlpParams& params, const Matrix& x) {
  if (params.layers.empty()) throw ShapeError("mlp_forward: empty network");
  if (x.rows() != params.input_dim()) {
    throw ShapeError("mlp_forward: input has " + std::to_string(x.rows()) + " rows, network expects " +
                     std::to_string(params.input_dim()));
  }
  MlpForward fwd;
  fwd.cache.shape = shape_of(params);
  fwd.cache.inputs.reserve(params.layers.size());
  fwd.cache.preacts.reserve(params.layers.size());
  Matrix h = x;
  for (const auto& l : params.layers) {
    Matrix z = l.weight * h;
    z.colwise() += l.bias;
    fwd.cache.inputs.push_back(std::move(h));
    h = activate(z, l.activation);
    fwd.cache.preacts.push_back(std::move(z));
  }
  fwd.output = std::move(h);
  return fwd;
}

Matrix mlp_apply(const MlpParams& params, const Matrix& x) {
  if (params.layers.empty()) throw ShapeError("mlp_apply: empty network");
  if (x.rows() != params.input_dim()) throw ShapeError("mlp_apply: input dimension mismatch");
  Matrix h = x;
  for (const auto& l : params.layers) {
    Matrix z = l.weight * h;
    z.colwise() += l.bias;
    h = activate(z, l.activation);
  }
  return h;
}

MlpBackward mlp_backward(const MlpParams& params, const MlpCache& cache, const Matrix& grad_out) {
  if (cache.shape != shape_of(params) || cache.inputs.size() != params.layers.size()) {
    throw ContractError("mlp_backward: cache was built for a different architecture");
  }
  const Matrix& last = cache.preacts.back();
  if (grad_out.rows() != last.rows() || grad_out.cols() != last.cols()) {
    throw ContractError("mlp_backward: grad_out shape does not match the cached forward output");
  }
  MlpBackward back;
  back.grads = params.zeros_like();
  Matrix g = grad_out;
  for (std::size_t i = params.layers.size(); i-- > 0;) {
    const auto& l = params.layers[i];
    activation_backward(g, cache.preacts[i], l.activation);
    back.grads.layers[i].weight.noalias() = g * cache.inputs[i].transpose();
    back.grads.layers[i].bias = g.rowwise().sum();
    Matrix next = l.weight.transpose() * g;
    g = std::move(next);
  }
  back.grad_input = std::move(g);
  return back;
}

void sgd_step(MlpParams& params, const MlpParams& grads, double lr, std::string_view name) {
  if (shape_of(params) != shape_of(grads)) throw ShapeError("sgd_step(" + std::string(name) + "): shape mismatch");
  // Check every block first so a failure leaves params untouched.
  for (const auto& l : grads.layers) {
    if (!l.weight.allFinite() || !l.bias.allFinite()) {
      throw NumericError("non-finite gradient for " + std::string(name));
    }
  }
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    sgd_step(params.layers[i].weight, grads.layers[i].weight, lr, name);
    sgd_step(params.layers[i].bias, grads.layers[i].bias, lr, name);
  }
}

std::vector<double> flatten(const MlpParams& params) {
  std::vector<double> flat;
  for (const auto& l : params.layers) {
    flat.insert(flat.end(), l.weight.data(), l.weight.data() + l.weight.size());
    flat.insert(flat.end(), l.bias.data(), l.bias.data() + l.bias.size());
  }
  return flat;
}

void unflatten(MlpParams& params, const std::vector<double>& flat) {
  std::size_t pos = 0;
  for (auto& l : params.layers) {
    const auto nw = static_cast<std::size_t>(l.weight.size());
    const auto nb = static_cast<std::size_t>(l.bias.size());
    if (pos + nw + nb > flat.size()) throw ShapeError("unflatten: vector too short");
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), nw, l.weight.data());
    pos += nw;
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), nb, l.bias.data());
    pos += nb;
  }
  if (pos != flat.size()) throw ShapeError("unflatten: vector too long");
}

bool operator==(const MlpParams& a, const MlpParams& b) {
  if (a.layers.size() != b.layers.size()) return false;
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    const auto& x = a.layers[i];
    const auto& y = b.layers[i];
    if (x.activation != y.activation || x.weight.rows() != y.weight.rows() ||
        x.weight.cols() != y.weight.cols() || x.weight != y.weight || x.bias != y.bias) {
      return false;
    }
  }
  return true;
}

}  // namespace handa
