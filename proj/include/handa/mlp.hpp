#pragma once

// Fully-connected networks with explicit reverse-mode gradients. Used for
// the feature net, the kernel net and the classifier head.

#include <vector>

#include "handa/numerics.hpp"
#include "handa/rng.hpp"

namespace handa {

enum class Activation { LeakyReLU, Identity };

inline constexpr double kLeakySlope = 0.01;

struct Layer {
  Matrix weight;  // out x in
  Vector bias;    // out
  Activation activation = Activation::Identity;
};

struct MlpParams {
  std::vector<Layer> layers;

  Eigen::Index input_dim() const;
  Eigen::Index output_dim() const;
  std::size_t depth() const { return layers.size(); }

  // Same shapes, all zeros. Used as a gradient accumulator.
  MlpParams zeros_like() const;
  MlpParams scaled(double factor) const;
  MlpParams& operator+=(const MlpParams& other);

  // Throws ShapeError if layers do not chain or the last layer is not Identity.
  void validate() const;
};

// dims = {in, hidden..., out}. Hidden layers use LeakyReLU, the last one
// Identity. Weights are Glorot-uniform, biases zero.
MlpParams make_mlp(const std::vector<Eigen::Index>& dims, Rng& rng);

// Per-layer record of a forward pass, enough to run the backward pass.
struct MlpCache {
  std::vector<Matrix> inputs;       // input to layer i
  std::vector<Matrix> preacts;      // W x + b for layer i
  std::vector<Eigen::Index> shape;  // layer dims the cache was built against
};

struct MlpForward {
  Matrix output;
  MlpCache cache;
};

MlpForward mlp_forward(const MlpParams& params, const Matrix& x);

// Forward pass without keeping a cache.
Matrix mlp_apply(const MlpParams& params, const Matrix& x);

struct MlpBackward {
  MlpParams grads;
  Matrix grad_input;
};

// Exact reverse-mode gradients of sum(grad_out .* f(x)). The cache must come
// from mlp_forward with the same architecture; otherwise ContractError.
MlpBackward mlp_backward(const MlpParams& params, const MlpCache& cache, const Matrix& grad_out);

void sgd_step(MlpParams& params, const MlpParams& grads, double lr, std::string_view name = "mlp");

// Flat views used by finite-difference checks and determinism comparisons.
std::vector<double> flatten(const MlpParams& params);
void unflatten(MlpParams& params, const std::vector<double>& flat);

bool operator==(const MlpParams& a, const MlpParams& b);

}  // namespace handa
