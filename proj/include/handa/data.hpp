#pragma once

// Dataset ingestion, target splitting and the synthetic heterogeneous task.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "handa/numerics.hpp"

namespace handa {

struct DomainDataset {
  Matrix features;  // m x n, one sample per column
  std::optional<Labels> labels;
  int class_count = 0;
  std::string name;

  std::size_t size() const { return static_cast<std::size_t>(features.cols()); }
  Eigen::Index dim() const { return features.rows(); }
  bool labeled() const { return labels.has_value(); }

  // Throws ContractError on out-of-range labels or non-finite features.
  void validate() const;

  DomainDataset subset(const std::vector<std::size_t>& idx, bool keep_labels = true) const;
};

// Dense CSV, one sample per line: "label,f1,...,fm" (or "f1,...,fm" when
// has_labels is false). A first line whose first field is not numeric is
// treated as a header and skipped.
DomainDataset load_dense(const std::filesystem::path& path, bool has_labels);

// Writes the format load_dense reads, using shortest round-trip decimals.
void save_dense(const std::filesystem::path& path, const DomainDataset& ds);

// svmlight-style lines: "label idx:val idx:val ..." with 1-based, strictly
// increasing indices. The largest index seen defines the dimension.
DomainDataset load_sparse(const std::filesystem::path& path);
void save_sparse(const std::filesystem::path& path, const DomainDataset& ds);

// Picks load_sparse for .svm/.libsvm/.svmlight files, load_dense otherwise.
DomainDataset load_any(const std::filesystem::path& path, bool has_labels = true);

struct SplitSpec {
  std::size_t labeled_per_class = 10;
  std::uint64_t seed = 0;
  double test_fraction = 0.5;  // share of the non-labeled remainder held out for testing
};

struct TargetSplit {
  DomainDataset labeled;
  DomainDataset unlabeled;  // labels stripped
  DomainDataset test;
  std::vector<std::size_t> labeled_idx;
  std::vector<std::size_t> unlabeled_idx;
  std::vector<std::size_t> test_idx;
};

TargetSplit split_target(const DomainDataset& ds, const SplitSpec& spec);

struct SyntheticSpec {
  int classes = 3;
  int latent_dim = 6;
  int source_dim = 20;
  int target_dim = 12;
  int per_class = 200;
  double noise = 0.3;
  double shift = 1.0;
  std::uint64_t seed = 0;
  // Reuse the source mixing matrix for the target (requires equal dims).
  bool shared_mixing = false;
};

struct SyntheticPair {
  DomainDataset source;
  DomainDataset target;
};

SyntheticPair make_synthetic(const SyntheticSpec& spec);

// Per-feature z-scoring. Zero-variance features get scale 1.
struct Standardizer {
  Vector mean;
  Vector scale;

  static Standardizer fit(const Matrix& features);
  Matrix apply(const Matrix& features) const;
};

std::string format_double(double v);

}  // namespace handa
