#pragma once

// The alternating constrained min-max training loop, convergence detection,
// ablations and the (beta, gamma) grid search.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "handa/classifier.hpp"
#include "handa/data.hpp"
#include "handa/kernel_matching.hpp"
#include "handa/sdl.hpp"

namespace handa {

struct StopRule {
  std::size_t window = 200;
  double tol = 0.1;

  void validate() const;
};

struct Architecture {
  Eigen::Index latent_dim = 0;  // 0 selects min(m_s, m_t, 128)
  int feature_hidden_layers = 2;
  Eigen::Index hidden_width = 64;
  Eigen::Index feature_dim = 64;  // d_N
  int kernel_hidden_layers = 1;
  Eigen::Index kernel_dim = 32;  // d_M
};

struct TrainConfig {
  double beta = 1e-3;   // weight on the dictionary reconstruction bound
  double gamma = 1.0;   // weight on the adversarial MMD loss
  std::size_t batch_source = 64;
  std::size_t batch_labeled = 16;
  std::size_t batch_unlabeled = 64;
  int n_d = 1;
  int n_a = 1;
  int n_c = 1;
  double lr_sdl = 1e-3;
  double lr_adv_min = 1e-3;
  double lr_adv_max = 1e-3;
  double lr_cls = 1e-3;
  std::size_t max_outer_iters = 2000;
  std::uint64_t seed = 0;
  std::optional<StopRule> stop = StopRule{};
  // Draw new minibatches before each phase instead of once per outer iteration.
  bool fresh_batches_per_phase = false;
  // Apply the column clip and orthogonal projections after every update of
  // the dictionary-learning blocks.
  bool enforce_constraints = true;
  // Source share of the classification loss; the target share is 1 - alpha.
  double source_weight = 0.5;
  KernelSpec kernel;
  Architecture arch;

  void validate() const;
};

struct LossTraces {
  std::vector<std::size_t> iter;
  std::vector<double> sdl;
  std::vector<double> adv;
  std::vector<double> cls;

  std::size_t size() const { return iter.size(); }
  bool empty() const { return iter.empty(); }
  void push(std::size_t it, double l_sdl, double l_adv, double l_c);
  friend bool operator==(const LossTraces&, const LossTraces&) = default;
};

struct ModelState {
  SdlParams sdl;
  AdvNets nets;
  ClassifierHead head;
  LossTraces traces;
  // First outer iteration (1-based) at which the stop rule fired.
  std::optional<std::size_t> converged_at;

  friend bool operator==(const ModelState&, const ModelState&) = default;
};

Eigen::Index resolve_latent_dim(const Architecture& arch, Eigen::Index m_s, Eigen::Index m_t);

// Random initialization driven by cfg.seed; the dictionary-learning blocks
// start feasible.
ModelState init_model(const TrainConfig& cfg, Eigen::Index m_s, Eigen::Index m_t, int num_classes);

ModelState train(const DomainDataset& source, const DomainDataset& target_labeled,
                 const DomainDataset& target_unlabeled, const TrainConfig& cfg);

// Continues training from an existing state, appending to its traces.
ModelState train_from(ModelState state, const DomainDataset& source, const DomainDataset& target_labeled,
                      const DomainDataset& target_unlabeled, const TrainConfig& cfg);

// True iff, for every loss, the stddev of the last `window` values is at most
// tol * (max - min over the whole trace), the range floored at 1e-12.
bool check_converged(const LossTraces& traces, const StopRule& rule);

// Population stddev of the trailing window of one series.
double trailing_stddev(const std::vector<double>& series, std::size_t window);
double series_range(const std::vector<double>& series);

// phi_N(A B^t X) for target features.
Matrix target_embedding(const ModelState& state, const Matrix& x_t);
Matrix target_representation(const ModelState& state, const Matrix& x_t);

struct EvalMetrics {
  double accuracy = 0.0;
  std::optional<double> auc;  // binary tasks only
  Labels predictions;
  Matrix scores;
};

EvalMetrics evaluate(const ModelState& state, const DomainDataset& target_test);

// A full adaptation problem: labeled source plus the three target splits.
struct TaskData {
  DomainDataset source;
  DomainDataset target_labeled;
  DomainDataset target_unlabeled;
  DomainDataset target_test;
};

// Standardizes each domain with statistics from its training data (source;
// labeled + unlabeled target) and applies them to the target test split.
TaskData standardize(const TaskData& task);

enum class AblationKind { Full, NoSdl, NoAdv, Sequential, Depth, TargetOnly };

struct AblationMode {
  AblationKind kind = AblationKind::Full;
  int depth = 2;  // hidden layers of the feature net for Depth

  std::string name() const;
  static AblationMode parse(const std::string& text);
};

// The configuration an ablation trains with (Sequential's second phase aside).
TrainConfig ablation_config(const AblationMode& mode, const TrainConfig& cfg);

struct AblationResult {
  std::string mode;
  EvalMetrics metrics;
  ModelState state;
};

AblationResult ablate(const AblationMode& mode, const TaskData& task, const TrainConfig& cfg);

enum class Scorer { ReverseValidation, TargetHoldout };

struct GridCell {
  double beta = 0.0;
  double gamma = 0.0;
  double score = 0.0;
};

struct GridSearchResult {
  std::vector<GridCell> cells;  // beta-major grid order
  GridCell best;
};

inline const std::vector<double> kDefaultBetaGrid{1e-2, 1e-3, 1e-4, 1e-5};
inline const std::vector<double> kDefaultGammaGrid{1e-2, 1e-1, 1.0, 10.0};

// Validation score for one configuration.
double score_config(const TaskData& task, const TrainConfig& cfg, Scorer scorer);

// One training run per (beta, gamma) cell, all with the template's seed.
// `jobs` > 1 scores cells on worker threads; the result does not depend on it.
GridSearchResult grid_search(const TaskData& task, const std::vector<double>& beta_grid,
                             const std::vector<double>& gamma_grid, const TrainConfig& cfg_template,
                             Scorer scorer = Scorer::ReverseValidation, unsigned jobs = 1);

// Best cell: highest score, then lowest beta, then lowest gamma.
GridCell select_best(const std::vector<GridCell>& cells);

// Cells sorted best-first under the same ordering as select_best.
std::vector<GridCell> ranked(std::vector<GridCell> cells);

}  // namespace handa
