#include "handa/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <set>
#include <thread>

#include "handa/errors.hpp"
#include "handa/eval.hpp"

namespace handa {

namespace {

// Rng stream ids. Initialization and batch sampling draw from independent
// streams so changing one never perturbs the other.
constexpr std::uint64_t kStreamSdl = 1;
constexpr std::uint64_t kStreamFeature = 2;
constexpr std::uint64_t kStreamKernel = 3;
constexpr std::uint64_t kStreamHead = 4;
constexpr std::uint64_t kStreamBatches = 10;

std::vector<Eigen::Index> mlp_dims(Eigen::Index in, int hidden_layers, Eigen::Index width, Eigen::Index out) {
  std::vector<Eigen::Index> dims{in};
  for (int i = 0; i < hidden_layers; ++i) dims.push_back(width);
  dims.push_back(out);
  return dims;
}

struct Batch {
  Matrix x_s;
  Labels y_s;
  Matrix x_l;
  Labels y_l;
  Matrix x_t;  // labeled and unlabeled target columns together
};

class BatchSampler {
 public:
  BatchSampler(const DomainDataset& source, const DomainDataset& labeled, const DomainDataset& unlabeled,
               const TrainConfig& cfg, Rng rng)
      : source_(source), labeled_(labeled), unlabeled_(unlabeled), cfg_(cfg), rng_(rng) {}

  Batch draw() {
    Batch b;
    const auto is = rng_.sample_without_replacement(source_.size(), cfg_.batch_source);
    const auto il = rng_.sample_without_replacement(labeled_.size(), cfg_.batch_labeled);
    const auto iu = rng_.sample_without_replacement(unlabeled_.size(), cfg_.batch_unlabeled);
    b.x_s = select_columns(source_.features, is);
    b.y_s = gather(*source_.labels, is);
    b.x_l = select_columns(labeled_.features, il);
    b.y_l = gather(*labeled_.labels, il);
    b.x_t = iu.empty() ? b.x_l : hconcat(b.x_l, select_columns(unlabeled_.features, iu));
    return b;
  }

 private:
  static Labels gather(const Labels& y, const std::vector<std::size_t>& idx) {
    Labels out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(y[i]);
    return out;
  }

  const DomainDataset& source_;
  const DomainDataset& labeled_;
  const DomainDataset& unlabeled_;
  const TrainConfig& cfg_;
  Rng rng_;
};

void check_task(const DomainDataset& source, const DomainDataset& labeled, const DomainDataset& unlabeled,
                const TrainConfig& cfg) {
  cfg.validate();
  if (!source.labeled()) throw ContractError("train: source dataset must be labeled");
  if (!labeled.labeled()) throw ContractError("train: labeled target dataset has no labels");
  source.validate();
  labeled.validate();
  if (labeled.dim() != unlabeled.dim() && unlabeled.size() > 0) {
    throw ContractError("train: labeled and unlabeled target dimensions differ");
  }
  if (cfg.batch_source > source.size()) {
    throw ContractError("train: source batch " + std::to_string(cfg.batch_source) + " exceeds " +
                        std::to_string(source.size()) + " source samples");
  }
  if (cfg.batch_labeled > labeled.size()) {
    throw ContractError("train: labeled batch " + std::to_string(cfg.batch_labeled) + " exceeds " +
                        std::to_string(labeled.size()) + " labeled target samples");
  }
  if (cfg.batch_unlabeled > unlabeled.size()) {
    throw ContractError("train: unlabeled batch " + std::to_string(cfg.batch_unlabeled) + " exceeds " +
                        std::to_string(unlabeled.size()) + " unlabeled target samples");
  }
  const std::set<int> cs(source.labels->begin(), source.labels->end());
  const std::set<int> ct(labeled.labels->begin(), labeled.labels->end());
  if (cs != ct) throw ContractError("train: source and labeled target class sets differ");
  if (cs.size() < 2) throw ContractError("train: need at least two classes");
}

void annotate_numeric(std::size_t iter, const char* phase) {
  try {
    throw;
  } catch (const NumericError& e) {
    throw NumericError("iteration " + std::to_string(iter) + " (" + phase + "): " + e.what());
  }
}

void require_finite_loss(double v, std::size_t iter, const char* name) {
  if (!std::isfinite(v)) {
    throw NumericError("iteration " + std::to_string(iter) + ": non-finite " + std::string(name));
  }
}

// Applies a gradient to the three dictionary-learning blocks the adversarial
// and classification losses reach.
void descend_encoders(SdlParams& sdl, const SdlParams& g, double lr) {
  sgd_step(sdl.shared_map, g.shared_map, lr, "shared_map");
  sgd_step(sdl.encoder_s, g.encoder_s, lr, "encoder_s");
  sgd_step(sdl.encoder_t, g.encoder_t, lr, "encoder_t");
}

}  // namespace

void StopRule::validate() const {
  if (window < 2) throw ContractError("StopRule: window must be >= 2");
  if (!(tol > 0.0)) throw ContractError("StopRule: tol must be positive");
}

void TrainConfig::validate() const {
  if (!(beta >= 0.0) || !(gamma >= 0.0)) throw ContractError("TrainConfig: beta and gamma must be >= 0");
  if (batch_source < 1 || batch_labeled < 1) throw ContractError("TrainConfig: source and labeled batches must be >= 1");
  if (n_d < 0 || n_a < 0 || n_c < 0) throw ContractError("TrainConfig: update counts must be >= 0");
  if (n_d + n_a + n_c < 1) throw ContractError("TrainConfig: at least one phase must run");
  for (double lr : {lr_sdl, lr_adv_min, lr_adv_max, lr_cls}) {
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ContractError("TrainConfig: learning rates must be positive");
  }
  if (n_a > 0 && batch_source + batch_labeled + batch_unlabeled < 4) {
    throw ContractError("TrainConfig: adversarial phase needs at least two samples per domain");
  }
  if (!(source_weight >= 0.0 && source_weight <= 1.0)) throw ContractError("TrainConfig: source_weight must lie in [0, 1]");
  if (stop) stop->validate();
  kernel.validate();
  if (arch.feature_hidden_layers < 0 || arch.kernel_hidden_layers < 0) {
    throw ContractError("TrainConfig: hidden layer counts must be >= 0");
  }
  if (arch.hidden_width < 1 || arch.feature_dim < 1 || arch.kernel_dim < 1 || arch.latent_dim < 0) {
    throw ContractError("TrainConfig: network widths must be positive");
  }
}

void LossTraces::push(std::size_t it, double l_sdl, double l_adv, double l_c) {
  iter.push_back(it);
  sdl.push_back(l_sdl);
  adv.push_back(l_adv);
  cls.push_back(l_c);
}

Eigen::Index resolve_latent_dim(const Architecture& arch, Eigen::Index m_s, Eigen::Index m_t) {
  const Eigen::Index cap = std::min({m_s, m_t, Eigen::Index{128}});
  if (arch.latent_dim == 0) return cap;
  if (arch.latent_dim > std::min(m_s, m_t)) {
    throw ContractError("latent dimension " + std::to_string(arch.latent_dim) + " exceeds min(m_s, m_t)");
  }
  return arch.latent_dim;
}

ModelState init_model(const TrainConfig& cfg, Eigen::Index m_s, Eigen::Index m_t, int num_classes) {
  cfg.validate();
  const Rng root(cfg.seed);
  const Eigen::Index k = resolve_latent_dim(cfg.arch, m_s, m_t);
  const auto& a = cfg.arch;

  ModelState s;
  Rng r_sdl = root.split(kStreamSdl);
  Rng r_feat = root.split(kStreamFeature);
  Rng r_kern = root.split(kStreamKernel);
  Rng r_head = root.split(kStreamHead);
  s.sdl = init_sdl(k, m_s, m_t, r_sdl);
  s.nets.feature_net = make_mlp(mlp_dims(k, a.feature_hidden_layers, a.hidden_width, a.feature_dim), r_feat);
  s.nets.kernel_net = make_mlp(mlp_dims(a.feature_dim, a.kernel_hidden_layers, a.hidden_width, a.kernel_dim), r_kern);
  s.head.net = make_mlp({a.feature_dim, num_classes}, r_head);
  s.head.num_classes = num_classes;
  return s;
}

ModelState train(const DomainDataset& source, const DomainDataset& target_labeled,
                 const DomainDataset& target_unlabeled, const TrainConfig& cfg) {
  check_task(source, target_labeled, target_unlabeled, cfg);
  ModelState state = init_model(cfg, source.dim(), target_labeled.dim(), source.class_count);
  return train_from(std::move(state), source, target_labeled, target_unlabeled, cfg);
}

ModelState train_from(ModelState state, const DomainDataset& source, const DomainDataset& target_labeled,
                      const DomainDataset& target_unlabeled, const TrainConfig& cfg) {
  check_task(source, target_labeled, target_unlabeled, cfg);
  if (state.sdl.source_dim() != source.dim() || state.sdl.target_dim() != target_labeled.dim()) {
    throw ContractError("train: model dimensions do not match the datasets");
  }
  if (state.head.num_classes < source.class_count) {
    throw ContractError("train: model has fewer classes than the data");
  }

  // Continuing runs get their own batch stream so they do not replay the
  // batches of the run that produced `state`.
  const Rng root(cfg.seed);
  const std::size_t offset = state.traces.size();
  BatchSampler sampler(source, target_labeled, target_unlabeled, cfg, root.split(kStreamBatches + offset));
  state.converged_at.reset();

  auto& sdl = state.sdl;
  auto& nets = state.nets;
  auto& head = state.head;
  const double w = cfg.source_weight;

  for (std::size_t local = 1; local <= cfg.max_outer_iters; ++local) {
    const std::size_t it = offset + local;
    Batch batch = sampler.draw();

    try {
      for (int t = 0; t < cfg.n_d; ++t) {
        if (cfg.fresh_batches_per_phase && t == 0) batch = sampler.draw();
        const SdlParams g = sdl_grads(sdl, batch.x_s, batch.x_t);
        sgd_step(sdl, g, cfg.lr_sdl * cfg.beta);
        if (cfg.enforce_constraints) sdl = sdl_project(sdl);
      }
    } catch (const NumericError&) {
      annotate_numeric(it, "l_sdl");
    }

    try {
      for (int t = 0; t < cfg.n_a && cfg.gamma > 0.0; ++t) {
        if (cfg.fresh_batches_per_phase && t == 0) batch = sampler.draw();
        // Ascent on the kernel net, then descent on everything feeding it.
        const AdvGrads up = adv_grads(nets, sdl, batch.x_s, batch.x_t, cfg.kernel, MmdEstimator::Unbiased);
        sgd_step(nets.kernel_net, up.kernel_net.scaled(-1.0), cfg.lr_adv_max * cfg.gamma, "kernel_net");
        const AdvGrads down = adv_grads(nets, sdl, batch.x_s, batch.x_t, cfg.kernel, MmdEstimator::Unbiased);
        const double lr = cfg.lr_adv_min * cfg.gamma;
        sgd_step(nets.feature_net, down.feature_net, lr, "feature_net");
        descend_encoders(sdl, down.sdl, lr);
        if (cfg.enforce_constraints) sdl = sdl_project(sdl);
      }
    } catch (const NumericError&) {
      annotate_numeric(it, "l_adv");
    }

    try {
      for (int t = 0; t < cfg.n_c; ++t) {
        if (cfg.fresh_batches_per_phase && t == 0) batch = sampler.draw();
        const ClassifierGrads g =
            classifier_grads(head, nets.feature_net, sdl, batch.x_s, batch.y_s, batch.x_l, batch.y_l, w);
        sgd_step(head.net, g.head, cfg.lr_cls, "head");
        sgd_step(nets.feature_net, g.feature_net, cfg.lr_cls, "feature_net");
        descend_encoders(sdl, g.sdl, cfg.lr_cls);
        if (cfg.enforce_constraints) sdl = sdl_project(sdl);
      }
    } catch (const NumericError&) {
      annotate_numeric(it, "l_c");
    }

    // Raw, unweighted losses on this iteration's batch.
    const Representations r = sdl_represent(sdl, batch.x_s, batch.x_t);
    const Matrix r_l = sdl.shared_map * (sdl.encoder_t * batch.x_l);
    const double l_sdl = sdl_loss(sdl, batch.x_s, batch.x_t);
    const double l_adv = adv_loss(nets, r.source, r.target, cfg.kernel, MmdEstimator::Biased);
    const double l_c = classifier_loss(head, nets.feature_net, r.source, batch.y_s, r_l, batch.y_l, w);
    require_finite_loss(l_sdl, it, "l_sdl");
    require_finite_loss(l_adv, it, "l_adv");
    require_finite_loss(l_c, it, "l_c");
    state.traces.push(it, l_sdl, l_adv, l_c);

    if (cfg.stop && state.traces.size() - offset >= cfg.stop->window && check_converged(state.traces, *cfg.stop)) {
      state.converged_at = it;
      break;
    }
  }
  return state;
}

double trailing_stddev(const std::vector<double>& series, std::size_t window) {
  if (series.empty()) return 0.0;
  const std::size_t n = std::min(window, series.size());
  const auto first = series.end() - static_cast<std::ptrdiff_t>(n);
  double mean = 0.0;
  for (auto it = first; it != series.end(); ++it) mean += *it;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (auto it = first; it != series.end(); ++it) ss += (*it - mean) * (*it - mean);
  return std::sqrt(ss / static_cast<double>(n));
}

double series_range(const std::vector<double>& series) {
  if (series.empty()) return 0.0;
  const auto [lo, hi] = std::minmax_element(series.begin(), series.end());
  return *hi - *lo;
}

bool check_converged(const LossTraces& traces, const StopRule& rule) {
  rule.validate();
  if (traces.empty()) throw ContractError("check_converged: empty traces");
  for (const auto* series : {&traces.sdl, &traces.adv, &traces.cls}) {
    const double range = std::max(series_range(*series), 1e-12);
    if (trailing_stddev(*series, rule.window) > rule.tol * range) return false;
  }
  return true;
}

Matrix target_representation(const ModelState& state, const Matrix& x_t) {
  if (x_t.rows() != state.sdl.target_dim()) throw ShapeError("target features do not match the model");
  return state.sdl.shared_map * (state.sdl.encoder_t * x_t);
}

Matrix target_embedding(const ModelState& state, const Matrix& x_t) {
  return mlp_apply(state.nets.feature_net, target_representation(state, x_t));
}

EvalMetrics evaluate(const ModelState& state, const DomainDataset& target_test) {
  if (!target_test.labeled()) throw ContractError("evaluate: test split has no labels");
  if (target_test.size() == 0) throw ContractError("evaluate: test split is empty");
  const Prediction p = predict(state.head, state.nets.feature_net, target_representation(state, target_test.features));
  EvalMetrics m;
  m.accuracy = accuracy(p.labels, *target_test.labels);
  if (state.head.num_classes == 2) {
    const Matrix prob = softmax_columns(p.scores);
    std::vector<double> pos(prob.row(1).data(), prob.row(1).data() + prob.cols());
    const auto& y = *target_test.labels;
    if (std::find(y.begin(), y.end(), 0) != y.end() && std::find(y.begin(), y.end(), 1) != y.end()) {
      m.auc = auc(pos, y);
    }
  }
  m.predictions = p.labels;
  m.scores = p.scores;
  return m;
}

TaskData standardize(const TaskData& task) {
  TaskData out = task;
  const Standardizer src = Standardizer::fit(task.source.features);
  out.source.features = src.apply(task.source.features);

  const Matrix pool = task.target_unlabeled.size() > 0
                          ? hconcat(task.target_labeled.features, task.target_unlabeled.features)
                          : task.target_labeled.features;
  const Standardizer tgt = Standardizer::fit(pool);
  out.target_labeled.features = tgt.apply(task.target_labeled.features);
  if (task.target_unlabeled.size() > 0) out.target_unlabeled.features = tgt.apply(task.target_unlabeled.features);
  if (task.target_test.size() > 0) out.target_test.features = tgt.apply(task.target_test.features);
  return out;
}

std::string AblationMode::name() const {
  switch (kind) {
    case AblationKind::Full: return "full";
    case AblationKind::NoSdl: return "nosdl";
    case AblationKind::NoAdv: return "noadv";
    case AblationKind::Sequential: return "sequential";
    case AblationKind::Depth: return "depth" + std::to_string(depth);
    case AblationKind::TargetOnly: return "targetonly";
  }
  return "unknown";
}

AblationMode AblationMode::parse(const std::string& text) {
  std::string t;
  for (char c : text) {
    if (c != '-' && c != '_') t.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (t == "full") return {AblationKind::Full};
  if (t == "nosdl") return {AblationKind::NoSdl};
  if (t == "noadv") return {AblationKind::NoAdv};
  if (t == "sequential") return {AblationKind::Sequential};
  if (t == "targetonly") return {AblationKind::TargetOnly};
  if (t.size() == 6 && t.rfind("depth", 0) == 0 && t[5] >= '1' && t[5] <= '5') {
    return {AblationKind::Depth, t[5] - '0'};
  }
  throw ContractError("unknown ablation mode '" + text + "'");
}

TrainConfig ablation_config(const AblationMode& mode, const TrainConfig& cfg) {
  TrainConfig c = cfg;
  switch (mode.kind) {
    case AblationKind::Full:
    case AblationKind::Sequential:
      break;
    case AblationKind::NoSdl:
      c.n_d = 0;
      c.beta = 0.0;
      c.enforce_constraints = false;
      break;
    case AblationKind::NoAdv:
      c.n_a = 0;
      c.gamma = 0.0;
      break;
    case AblationKind::Depth:
      if (mode.depth < 1 || mode.depth > 5) throw ContractError("depth ablation must use 1..5 hidden layers");
      c.arch.feature_hidden_layers = mode.depth;
      break;
    case AblationKind::TargetOnly:
      c.n_d = 0;
      c.n_a = 0;
      c.beta = 0.0;
      c.gamma = 0.0;
      c.source_weight = 0.0;
      c.enforce_constraints = false;
      c.n_c = std::max(c.n_c, 1);
      break;
  }
  return c;
}

AblationResult ablate(const AblationMode& mode, const TaskData& task, const TrainConfig& cfg) {
  AblationResult res;
  res.mode = mode.name();
  const TrainConfig c = ablation_config(mode, cfg);
  if (mode.kind == AblationKind::Sequential) {
    // Dictionary learning alone until the stop rule fires, then the
    // adversarial and classification phases on top of the learned blocks.
    TrainConfig first = c;
    first.n_a = 0;
    first.n_c = 0;
    first.n_d = std::max(c.n_d, 1);
    if (!first.stop) first.stop = StopRule{};
    ModelState s = train(task.source, task.target_labeled, task.target_unlabeled, first);
    TrainConfig second = c;
    second.n_d = 0;
    res.state = train_from(std::move(s), task.source, task.target_labeled, task.target_unlabeled, second);
  } else {
    res.state = train(task.source, task.target_labeled, task.target_unlabeled, c);
  }
  res.metrics = evaluate(res.state, task.target_test);
  return res;
}

double score_config(const TaskData& task, const TrainConfig& cfg, Scorer scorer) {
  const ModelState forward = train(task.source, task.target_labeled, task.target_unlabeled, cfg);
  if (scorer == Scorer::TargetHoldout) return evaluate(forward, task.target_test).accuracy;

  // Reverse validation. The unlabeled target pool is pseudo-labeled by the
  // forward model and, with the labeled target, becomes the reverse source.
  // The real source plays the target: a few labeled samples per class, the
  // rest split between unlabeled training data and a held-out scoring set.
  DomainDataset rev_source = task.target_labeled;
  if (task.target_unlabeled.size() > 0) {
    const Prediction pseudo = predict(forward.head, forward.nets.feature_net,
                                      target_representation(forward, task.target_unlabeled.features));
    rev_source.features = hconcat(task.target_labeled.features, task.target_unlabeled.features);
    Labels y = *task.target_labeled.labels;
    y.insert(y.end(), pseudo.labels.begin(), pseudo.labels.end());
    rev_source.labels = std::move(y);
  }
  rev_source.class_count = forward.head.num_classes;
  rev_source.name = "reverse_source";

  std::vector<std::size_t> per_class(static_cast<std::size_t>(task.target_labeled.class_count), 0);
  for (int y : *task.target_labeled.labels) ++per_class[static_cast<std::size_t>(y)];
  std::size_t lpc = task.target_labeled.size();
  for (std::size_t n : per_class) {
    if (n > 0) lpc = std::min(lpc, n);
  }
  const TargetSplit src_split = split_target(task.source, SplitSpec{lpc, cfg.seed, 0.5});

  const std::set<int> present(rev_source.labels->begin(), rev_source.labels->end());
  const std::set<int> needed(src_split.labeled.labels->begin(), src_split.labeled.labels->end());
  if (present != needed) return 0.0;  // pseudo-labels lost a class; the reverse task is undefined

  TrainConfig rc = cfg;
  rc.batch_source = std::min(rc.batch_source, rev_source.size());
  rc.batch_labeled = std::min(rc.batch_labeled, src_split.labeled.size());
  rc.batch_unlabeled = std::min(rc.batch_unlabeled, src_split.unlabeled.size());
  const ModelState reverse = train(rev_source, src_split.labeled, src_split.unlabeled, rc);
  return evaluate(reverse, src_split.test).accuracy;
}

GridCell select_best(const std::vector<GridCell>& cells) {
  if (cells.empty()) throw ContractError("grid search: no cells");
  return ranked(cells).front();
}

std::vector<GridCell> ranked(std::vector<GridCell> cells) {
  std::stable_sort(cells.begin(), cells.end(), [](const GridCell& a, const GridCell& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.beta != b.beta) return a.beta < b.beta;
    return a.gamma < b.gamma;
  });
  return cells;
}

GridSearchResult grid_search(const TaskData& task, const std::vector<double>& beta_grid,
                             const std::vector<double>& gamma_grid, const TrainConfig& cfg_template, Scorer scorer,
                             unsigned jobs) {
  if (beta_grid.empty() || gamma_grid.empty()) throw ContractError("grid search: grids must be non-empty");
  GridSearchResult out;
  for (double b : beta_grid)
    for (double g : gamma_grid) out.cells.push_back({b, g, 0.0});

  std::vector<std::exception_ptr> errors(out.cells.size());
  const auto run_cell = [&](std::size_t i) {
    TrainConfig cfg = cfg_template;
    cfg.beta = out.cells[i].beta;
    cfg.gamma = out.cells[i].gamma;
    const std::string cell = "grid cell beta=" + format_double(cfg.beta) + " gamma=" + format_double(cfg.gamma) + ": ";
    try {
      out.cells[i].score = score_config(task, cfg, scorer);
    } catch (const NumericError& e) {
      errors[i] = std::make_exception_ptr(NumericError(cell + e.what()));
    } catch (const DegeneracyError& e) {
      errors[i] = std::make_exception_ptr(DegeneracyError(cell + e.what()));
    } catch (const Error& e) {
      errors[i] = std::make_exception_ptr(ContractError(cell + e.what()));
    }
  };

  const unsigned workers = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(out.cells.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < out.cells.size(); ++i) run_cell(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < out.cells.size(); i = next++) run_cell(i);
      });
    }
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  out.best = select_best(out.cells);
  return out;
}

}  // namespace handa
