#include "handa/data.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "handa/errors.hpp"
#include "handa/rng.hpp"

namespace handa {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::optional<double> parse_double(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

std::optional<long long> parse_int(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

int parse_label(std::string_view field, const std::string& path, std::size_t line) {
  const auto v = parse_int(field);
  if (!v) throw FormatError(path, line, "label '" + std::string(field) + "' is not an integer");
  if (*v < 0 || *v > 1'000'000) throw FormatError(path, line, "label " + std::to_string(*v) + " out of range");
  return static_cast<int>(*v);
}

double parse_feature(std::string_view field, const std::string& path, std::size_t line) {
  const auto v = parse_double(field);
  if (!v) throw FormatError(path, line, "unparsable value '" + std::string(field) + "'");
  if (!std::isfinite(*v)) throw FormatError(path, line, "non-finite value '" + std::string(field) + "'");
  return *v;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(path.string(), 0, "cannot open file");
  return in;
}

DomainDataset assemble(std::vector<std::vector<double>> rows, std::vector<int> labels, bool has_labels,
                       Eigen::Index dim, const std::filesystem::path& path) {
  DomainDataset ds;
  ds.name = path.stem().string();
  ds.features = Matrix::Zero(dim, static_cast<Eigen::Index>(rows.size()));
  for (std::size_t j = 0; j < rows.size(); ++j)
    for (std::size_t i = 0; i < rows[j].size(); ++i)
      ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[j][i];
  if (has_labels) {
    ds.class_count = labels.empty() ? 0 : 1 + *std::max_element(labels.begin(), labels.end());
    ds.labels = std::move(labels);
  }
  return ds;
}

}  // namespace

std::string format_double(double v) {
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

void DomainDataset::validate() const {
  if (!features.allFinite()) throw ContractError("dataset '" + name + "': non-finite features");
  if (labels) {
    if (labels->size() != size()) throw ContractError("dataset '" + name + "': label count mismatch");
    for (int y : *labels) {
      if (y < 0 || y >= class_count) {
        throw ContractError("dataset '" + name + "': label " + std::to_string(y) + " outside [0, " +
                            std::to_string(class_count) + ")");
      }
    }
  }
}

DomainDataset DomainDataset::subset(const std::vector<std::size_t>& idx, bool keep_labels) const {
  DomainDataset out;
  out.name = name;
  out.class_count = class_count;
  out.features = select_columns(features, idx);
  if (keep_labels && labels) {
    Labels y;
    y.reserve(idx.size());
    for (std::size_t i : idx) y.push_back((*labels)[i]);
    out.labels = std::move(y);
  }
  return out;
}

DomainDataset load_dense(const std::filesystem::path& path, bool has_labels) {
  const std::string p = path.string();
  auto in = open_input(path);
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  Eigen::Index dim = -1;
  std::string line;
  std::size_t lineno = 0;
  bool first_content = true;
  while (std::getline(in, line)) {
    ++lineno;
    const auto body = trim(line);
    if (body.empty()) continue;
    const auto fields = split(body, ',');
    if (first_content) {
      first_content = false;
      if (!parse_double(fields.front())) continue;  // header
    }
    const std::size_t offset = has_labels ? 1 : 0;
    if (fields.size() <= offset) throw FormatError(p, lineno, "no feature columns");
    const auto m = static_cast<Eigen::Index>(fields.size() - offset);
    if (dim < 0) dim = m;
    if (m != dim) {
      throw FormatError(p, lineno, "ragged row: " + std::to_string(m) + " features, expected " +
                                       std::to_string(dim));
    }
    if (has_labels) labels.push_back(parse_label(fields[0], p, lineno));
    std::vector<double> row;
    row.reserve(static_cast<std::size_t>(m));
    for (std::size_t i = offset; i < fields.size(); ++i) row.push_back(parse_feature(fields[i], p, lineno));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw FormatError(p, lineno, "no data rows");
  return assemble(std::move(rows), std::move(labels), has_labels, dim, path);
}

void save_dense(const std::filesystem::path& path, const DomainDataset& ds) {
  std::ofstream out(path);
  if (!out) throw FormatError(path.string(), 0, "cannot open for writing");
  for (Eigen::Index j = 0; j < ds.features.cols(); ++j) {
    std::string line;
    if (ds.labels) line += std::to_string((*ds.labels)[static_cast<std::size_t>(j)]) + ",";
    for (Eigen::Index i = 0; i < ds.features.rows(); ++i) {
      if (i) line += ',';
      line += format_double(ds.features(i, j));
    }
    out << line << '\n';
  }
  if (!out) throw FormatError(path.string(), 0, "write failed");
}

DomainDataset load_sparse(const std::filesystem::path& path) {
  const std::string p = path.string();
  auto in = open_input(path);
  std::vector<std::vector<std::pair<std::size_t, double>>> entries;
  std::vector<int> labels;
  std::size_t dim = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto body = trim(line);
    if (const auto hash = body.find('#'); hash != std::string_view::npos) body = trim(body.substr(0, hash));
    if (body.empty()) continue;
    std::istringstream tokens{std::string(body)};
    std::string tok;
    tokens >> tok;
    labels.push_back(parse_label(tok, p, lineno));
    std::vector<std::pair<std::size_t, double>> row;
    std::size_t prev = 0;
    while (tokens >> tok) {
      const auto colon = tok.find(':');
      if (colon == std::string::npos) throw FormatError(p, lineno, "malformed pair '" + tok + "'");
      const auto idx = parse_int(std::string_view(tok).substr(0, colon));
      if (!idx || *idx < 1) throw FormatError(p, lineno, "bad index in '" + tok + "'");
      const auto i = static_cast<std::size_t>(*idx);
      if (i <= prev) throw FormatError(p, lineno, "indices must be strictly increasing at '" + tok + "'");
      prev = i;
      row.emplace_back(i, parse_feature(std::string_view(tok).substr(colon + 1), p, lineno));
      dim = std::max(dim, i);
    }
    entries.push_back(std::move(row));
  }
  if (entries.empty()) throw FormatError(p, lineno, "no data rows");
  if (dim == 0) dim = 1;

  DomainDataset ds;
  ds.name = path.stem().string();
  ds.features = Matrix::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(entries.size()));
  for (std::size_t j = 0; j < entries.size(); ++j)
    for (const auto& [i, v] : entries[j]) ds.features(static_cast<Eigen::Index>(i - 1), static_cast<Eigen::Index>(j)) = v;
  ds.class_count = 1 + *std::max_element(labels.begin(), labels.end());
  ds.labels = std::move(labels);
  return ds;
}

void save_sparse(const std::filesystem::path& path, const DomainDataset& ds) {
  if (!ds.labels) throw ContractError("save_sparse: dataset has no labels");
  std::ofstream out(path);
  if (!out) throw FormatError(path.string(), 0, "cannot open for writing");
  for (Eigen::Index j = 0; j < ds.features.cols(); ++j) {
    out << (*ds.labels)[static_cast<std::size_t>(j)];
    for (Eigen::Index i = 0; i < ds.features.rows(); ++i) {
      const double v = ds.features(i, j);
      if (v != 0.0) out << ' ' << (i + 1) << ':' << format_double(v);
    }
    out << '\n';
  }
}

DomainDataset load_any(const std::filesystem::path& path, bool has_labels) {
  const auto ext = path.extension().string();
  if (ext == ".svm" || ext == ".libsvm" || ext == ".svmlight") return load_sparse(path);
  return load_dense(path, has_labels);
}

TargetSplit split_target(const DomainDataset& ds, const SplitSpec& spec) {
  if (!ds.labels) throw ContractError("split_target: dataset '" + ds.name + "' has no labels");
  if (spec.labeled_per_class < 1) throw ContractError("split_target: labeled_per_class must be >= 1");
  if (!(spec.test_fraction >= 0.0 && spec.test_fraction <= 1.0)) {
    throw ContractError("split_target: test_fraction must lie in [0, 1]");
  }
  ds.validate();
  Rng rng(spec.seed, 0x53504c4954ULL);

  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(ds.class_count));
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[static_cast<std::size_t>((*ds.labels)[i])].push_back(i);

  TargetSplit split;
  std::vector<std::size_t> remainder;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& members = by_class[c];
    if (members.size() < spec.labeled_per_class) {
      throw ContractError("split_target: class " + std::to_string(c) + " has " + std::to_string(members.size()) +
                          " samples, needs at least " + std::to_string(spec.labeled_per_class));
    }
    rng.shuffle(members);
    split.labeled_idx.insert(split.labeled_idx.end(), members.begin(),
                             members.begin() + static_cast<std::ptrdiff_t>(spec.labeled_per_class));
    remainder.insert(remainder.end(), members.begin() + static_cast<std::ptrdiff_t>(spec.labeled_per_class),
                     members.end());
  }
  if (remainder.empty()) throw ContractError("split_target: no samples left after taking the labeled pool");
  rng.shuffle(remainder);
  const auto n_test = static_cast<std::size_t>(std::floor(spec.test_fraction * static_cast<double>(remainder.size())));
  split.test_idx.assign(remainder.begin(), remainder.begin() + static_cast<std::ptrdiff_t>(n_test));
  split.unlabeled_idx.assign(remainder.begin() + static_cast<std::ptrdiff_t>(n_test), remainder.end());

  split.labeled = ds.subset(split.labeled_idx);
  split.unlabeled = ds.subset(split.unlabeled_idx, /*keep_labels=*/false);
  split.test = ds.subset(split.test_idx);
  split.labeled.name = ds.name + ":labeled";
  split.unlabeled.name = ds.name + ":unlabeled";
  split.test.name = ds.name + ":test";
  return split;
}

SyntheticPair make_synthetic(const SyntheticSpec& spec) {
  if (spec.classes < 2) throw ContractError("make_synthetic: need at least two classes");
  if (spec.latent_dim < 1 || spec.latent_dim > std::min(spec.source_dim, spec.target_dim)) {
    throw ContractError("make_synthetic: need 1 <= latent_dim <= min(source_dim, target_dim)");
  }
  if (spec.per_class < 1) throw ContractError("make_synthetic: per_class must be >= 1");
  if (!(spec.noise >= 0.0) || !std::isfinite(spec.shift)) throw ContractError("make_synthetic: bad noise/shift");
  if (spec.shared_mixing && spec.source_dim != spec.target_dim) {
    throw ContractError("make_synthetic: shared mixing needs equal source and target dims");
  }
  Rng rng(spec.seed);
  const int z = spec.latent_dim;
  const int c_count = spec.classes;

  // Class means on the radius-4 sphere.
  Matrix means(z, c_count);
  for (int c = 0; c < c_count; ++c) {
    Vector v(z);
    do {
      for (int i = 0; i < z; ++i) v(i) = rng.normal();
    } while (v.norm() < 1e-8);
    means.col(c) = 4.0 * v / v.norm();
  }

  // Gaussian mixing matrices are full rank with probability one; redraw in the
  // measure-zero case.
  const auto mixing = [&](int rows) {
    Matrix m(rows, z);
    while (true) {
      for (int r = 0; r < rows; ++r)
        for (int i = 0; i < z; ++i) m(r, i) = rng.normal();
      if (Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues().minCoeff() > 1e-6) return m;
    }
  };
  const Matrix mix_s = mixing(spec.source_dim);
  Matrix mix_t = mixing(spec.target_dim);
  if (spec.shared_mixing) mix_t = mix_s;

  const auto generate = [&](const Matrix& mix, bool target, const std::string& name) {
    const int n = c_count * spec.per_class;
    DomainDataset ds;
    ds.name = name;
    ds.class_count = c_count;
    Matrix latent(z, n);
    Labels y(static_cast<std::size_t>(n));
    for (int c = 0; c < c_count; ++c) {
      for (int s = 0; s < spec.per_class; ++s) {
        const int col = c * spec.per_class + s;
        Vector l = means.col(c);
        if (target) l(0) += spec.shift * (1.0 + static_cast<double>(c) / static_cast<double>(c_count - 1));
        for (int i = 0; i < z; ++i) l(i) += spec.noise * rng.normal();
        latent.col(col) = l;
        y[static_cast<std::size_t>(col)] = c;
      }
    }
    ds.features = mix * latent;
    ds.labels = std::move(y);
    return ds;
  };

  SyntheticPair pair;
  pair.source = generate(mix_s, false, "synthetic_source");
  pair.target = generate(mix_t, true, "synthetic_target");
  return pair;
}

Standardizer Standardizer::fit(const Matrix& features) {
  if (features.cols() == 0) throw ContractError("Standardizer: no samples");
  Standardizer s;
  const double n = static_cast<double>(features.cols());
  s.mean = features.rowwise().sum() / n;
  s.scale.resize(features.rows());
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    const double var = (features.row(i).transpose().array() - s.mean(i)).square().sum() / n;
    s.scale(i) = var > 1e-24 ? std::sqrt(var) : 1.0;
  }
  return s;
}

Matrix Standardizer::apply(const Matrix& features) const {
  if (features.rows() != mean.size()) throw ShapeError("Standardizer: dimension mismatch");
  Matrix out = features;
  out.colwise() -= mean;
  for (Eigen::Index i = 0; i < out.rows(); ++i) out.row(i) /= scale(i);
  return out;
}

}  // namespace handa
