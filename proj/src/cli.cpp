#include "handa/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>

#include "handa/data.hpp"
#include "handa/errors.hpp"
#include "handa/eval.hpp"
#include "handa/run_io.hpp"
#include "handa/trainer.hpp"

namespace handa::cli {

namespace {

namespace fs = std::filesystem;

// Bad flag values detected after parsing; reported like parse errors.
class UsageError : public Error {
 public:
  using Error::Error;
};

struct TaskFlags {
  std::string source;
  std::string target;
  std::size_t labeled_per_class = 10;
  double test_fraction = 0.5;
  bool no_standardize = false;
};

struct TrainFlags {
  TrainConfig cfg;
  bool no_stop = false;
  std::size_t stop_window = 200;
  double stop_tol = 0.1;
  std::string bandwidths = "1,2,4,8,16";
  std::string out = "run";
};

void add_task_options(CLI::App* app, TaskFlags& f) {
  app->add_option("--source", f.source, "Labeled source data (dense CSV, or svmlight for .svm/.libsvm)")->required();
  app->add_option("--target", f.target, "Labeled target data; split into labeled/unlabeled/test")->required();
  app->add_option("--target-labeled-per-class", f.labeled_per_class, "Labeled target samples per class")
      ->check(CLI::PositiveNumber);
  app->add_option("--test-fraction", f.test_fraction, "Share of the non-labeled target held out for testing")
      ->check(CLI::Range(0.0, 1.0));
  app->add_flag("--no-standardize", f.no_standardize, "Skip per-feature standardization");
}

void add_train_options(CLI::App* app, TrainFlags& f) {
  auto& c = f.cfg;
  app->add_option("--beta", c.beta, "Weight of the dictionary reconstruction loss");
  app->add_option("--gamma", c.gamma, "Weight of the adversarial MMD loss");
  app->add_option("--k", c.arch.latent_dim, "Latent dimension (0: min(m_s, m_t, 128))");
  app->add_option("--nd", c.n_d, "Dictionary updates per outer iteration");
  app->add_option("--na", c.n_a, "Adversarial rounds per outer iteration");
  app->add_option("--nc", c.n_c, "Classifier updates per outer iteration");
  app->add_option("--bs", c.batch_source, "Source batch size");
  app->add_option("--bl", c.batch_labeled, "Labeled target batch size");
  app->add_option("--bu", c.batch_unlabeled, "Unlabeled target batch size");
  app->add_option("--lr-sdl", c.lr_sdl, "Learning rate, dictionary phase");
  app->add_option("--lr-adv-min", c.lr_adv_min, "Learning rate, adversarial descent");
  app->add_option("--lr-adv-max", c.lr_adv_max, "Learning rate, kernel-net ascent");
  app->add_option("--lr-cls", c.lr_cls, "Learning rate, classifier phase");
  app->add_option("--max-iters", c.max_outer_iters, "Maximum outer iterations");
  app->add_option("--seed", c.seed, "Seed for every random draw (splits, init, batches)");
  app->add_option("--depth", c.arch.feature_hidden_layers, "Hidden layers in the feature net");
  app->add_option("--hidden", c.arch.hidden_width, "Hidden layer width");
  app->add_option("--dn", c.arch.feature_dim, "Feature net output dimension");
  app->add_option("--dm", c.arch.kernel_dim, "Kernel net output dimension");
  app->add_option("--kernel-depth", c.arch.kernel_hidden_layers, "Hidden layers in the kernel net");
  app->add_option("--bandwidths", f.bandwidths, "RBF mixture bandwidths (comma list)");
  app->add_flag("--median-rescale", c.kernel.median_rescale, "Scale bandwidths by the median pairwise distance");
  app->add_option("--stop-window", f.stop_window, "Convergence window W");
  app->add_option("--stop-tol", f.stop_tol, "Convergence tolerance (stddev / range)");
  app->add_flag("--no-stop", f.no_stop, "Always run --max-iters iterations");
  app->add_flag("--fresh-batches", c.fresh_batches_per_phase, "Resample minibatches before every phase");
  app->add_option("--out", f.out, "Output directory");
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    item = CLI::detail::trim_copy(item);
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

std::vector<double> parse_numbers(const std::string& text, const std::string& flag) {
  std::vector<double> values;
  for (const auto& item : split_list(text)) {
    double v = 0.0;
    if (!CLI::detail::lexical_cast(item, v)) throw UsageError(flag + ": '" + item + "' is not a number");
    values.push_back(v);
  }
  if (values.empty()) throw UsageError(flag + ": empty list");
  return values;
}

TrainConfig finalize(const TrainFlags& f) {
  TrainConfig c = f.cfg;
  c.kernel.bandwidths = parse_numbers(f.bandwidths, "--bandwidths");
  if (f.no_stop) {
    c.stop.reset();
  } else {
    c.stop = StopRule{f.stop_window, f.stop_tol};
  }
  try {
    c.validate();
  } catch (const ContractError& e) {
    throw UsageError(e.what());
  }
  return c;
}

struct LoadedTask {
  TaskData task;
  DomainDataset target_full;
  TargetSplit split;
};

LoadedTask load_task(const TaskFlags& f, std::uint64_t seed) {
  LoadedTask lt;
  DomainDataset source = load_any(f.source);
  lt.target_full = load_any(f.target);
  source.validate();
  lt.target_full.validate();
  if (!source.labeled() || !lt.target_full.labeled()) throw ContractError("source and target files must be labeled");
  lt.split = split_target(lt.target_full, SplitSpec{f.labeled_per_class, seed, f.test_fraction});
  lt.task = TaskData{std::move(source), lt.split.labeled, lt.split.unlabeled, lt.split.test};
  if (!f.no_standardize) lt.task = standardize(lt.task);
  return lt;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw FormatError(dir, 0, "cannot create output directory: " + ec.message());
}

Metrics train_metrics(const ModelState& s, const EvalMetrics& m, const LoadedTask& lt) {
  Metrics out;
  out.emplace_back("accuracy", format_double(m.accuracy));
  if (m.auc) out.emplace_back("auc", format_double(*m.auc));
  out.emplace_back("iterations", std::to_string(s.traces.size()));
  out.emplace_back("converged_at", s.converged_at ? std::to_string(*s.converged_at) : "none");
  if (!s.traces.empty()) {
    out.emplace_back("final_l_sdl", format_double(s.traces.sdl.back()));
    out.emplace_back("final_l_adv", format_double(s.traces.adv.back()));
    out.emplace_back("final_l_c", format_double(s.traces.cls.back()));
  }
  out.emplace_back("num_classes", std::to_string(s.head.num_classes));
  out.emplace_back("source_samples", std::to_string(lt.task.source.size()));
  out.emplace_back("target_labeled", std::to_string(lt.task.target_labeled.size()));
  out.emplace_back("target_unlabeled", std::to_string(lt.task.target_unlabeled.size()));
  out.emplace_back("target_test", std::to_string(lt.task.target_test.size()));
  return out;
}

std::vector<EmbeddingRow> embedding_rows(const ModelState& s, const LoadedTask& lt) {
  const auto& t = lt.task;
  Matrix x = t.target_labeled.features;
  if (t.target_unlabeled.size()) x = hconcat(x, t.target_unlabeled.features);
  if (t.target_test.size()) x = hconcat(x, t.target_test.features);
  const PcaResult pca = pca_2d(target_embedding(s, x));
  const auto& truth = *lt.target_full.labels;

  std::vector<EmbeddingRow> rows;
  std::size_t col = 0;
  const auto emit = [&](const std::vector<std::size_t>& idx, const char* split) {
    for (std::size_t i : idx) {
      const auto c = static_cast<Eigen::Index>(col++);
      rows.push_back({pca.projected(0, c), pca.projected(1, c), truth[i], split});
    }
  };
  emit(lt.split.labeled_idx, "labeled");
  emit(lt.split.unlabeled_idx, "unlabeled");
  emit(lt.split.test_idx, "test");
  return rows;
}

// Expands `--config FILE` into ordinary flags placed right after the
// subcommand name, so anything given on the command line overrides them.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::vector<std::string> rest;
  std::string file;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 == args.size()) throw UsageError("--config needs a file name");
      file = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      file = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (file.empty()) return rest;
  const auto sub = std::find_if(rest.begin(), rest.end(), [](const std::string& a) { return a.empty() || a[0] != '-'; });
  if (sub == rest.end()) throw UsageError("--config must follow a subcommand");

  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigINI().from_file(file);
  } catch (const CLI::Error& e) {
    throw UsageError("cannot read config file '" + file + "': " + e.what());
  }
  std::vector<std::string> flags;
  for (const auto& item : items) {
    if (item.name == "++" || item.name == "--" || item.name == "config") continue;
    if (!item.parents.empty() && item.parents != std::vector<std::string>{*sub}) continue;
    flags.push_back("--" + item.name + "=" + CLI::detail::join(item.inputs, ","));
  }
  rest.insert(sub + 1, flags.begin(), flags.end());
  return rest;
}

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
    if (c == '"') c = '\'';
  }
  return s;
}

int fail(std::ostream& err, int code, const char* kind, const std::string& message) {
  err << "error code=" << code << " kind=" << kind << " message=\"" << one_line(message) << "\"\n";
  return code;
}

std::vector<AblationMode> parse_modes(const std::string& names) {
  std::vector<AblationMode> modes;
  try {
    for (const auto& n : split_list(names)) modes.push_back(AblationMode::parse(n));
  } catch (const ContractError& e) {
    throw UsageError(e.what());
  }
  if (modes.empty()) throw UsageError("no ablation modes given");
  return modes;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Heterogeneous adversarial domain adaptation: training, evaluation and ablations", "handa"};
  app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);

  // synth
  SyntheticSpec synth;
  std::string synth_out = "synthetic";
  auto* cmd_synth = app.add_subcommand("synth", "Generate a synthetic heterogeneous source/target pair");
  cmd_synth->add_option("--classes", synth.classes, "Number of classes");
  cmd_synth->add_option("--latent", synth.latent_dim, "Latent dimension");
  cmd_synth->add_option("--ms", synth.source_dim, "Source feature dimension");
  cmd_synth->add_option("--mt", synth.target_dim, "Target feature dimension");
  cmd_synth->add_option("--per-class", synth.per_class, "Samples per class per domain");
  cmd_synth->add_option("--noise", synth.noise, "Latent noise standard deviation");
  cmd_synth->add_option("--shift", synth.shift, "Class-conditional target mean shift");
  cmd_synth->add_option("--seed", synth.seed, "Random seed");
  cmd_synth->add_option("--out", synth_out, "Output directory (source.csv, target.csv)");

  // train
  TaskFlags train_task;
  TrainFlags train_flags;
  auto* cmd_train = app.add_subcommand("train", "Train on a source/target pair and evaluate on held-out target data");
  add_task_options(cmd_train, train_task);
  add_train_options(cmd_train, train_flags);

  // gridsearch
  TaskFlags grid_task;
  TrainFlags grid_flags;
  std::string beta_grid = "0.01,0.001,0.0001,1e-05";
  std::string gamma_grid = "0.01,0.1,1,10";
  std::string scorer_name = "reverse";
  unsigned jobs = 1;
  auto* cmd_grid = app.add_subcommand("gridsearch", "Score every (beta, gamma) pair of a grid");
  add_task_options(cmd_grid, grid_task);
  add_train_options(cmd_grid, grid_flags);
  cmd_grid->add_option("--beta-grid", beta_grid, "Beta values (comma list)");
  cmd_grid->add_option("--gamma-grid", gamma_grid, "Gamma values (comma list)");
  cmd_grid->add_option("--scorer", scorer_name, "reverse (reverse validation) or holdout (labeled target test split)")
      ->check(CLI::IsMember({"reverse", "holdout"}));
  cmd_grid->add_option("--jobs", jobs, "Worker threads; output does not depend on it")->check(CLI::PositiveNumber);

  // ablate
  TaskFlags abl_task;
  TrainFlags abl_flags;
  std::string mode_names = "full,nosdl,noadv,sequential,depth1,depth2,depth3,depth4,depth5";
  std::size_t runs = 1;
  auto* cmd_abl = app.add_subcommand("ablate", "Compare the full model with its ablations");
  add_task_options(cmd_abl, abl_task);
  add_train_options(cmd_abl, abl_flags);
  cmd_abl->add_option("--modes", mode_names,
                      "Modes: full, nosdl, noadv, sequential, depth1..depth5, targetonly (comma list)");
  cmd_abl->add_option("--runs", runs, "Runs per mode; run r uses seed + r for the split and training")
      ->check(CLI::PositiveNumber);

  for (auto* sub : {cmd_train, cmd_grid, cmd_abl}) {
    sub->add_option("--config", "Read flags from an INI file written by a previous run (command-line flags win)");
  }

  std::vector<std::string> argv_store{"handa"};
  try {
    const auto expanded = expand_config(args);
    argv_store.insert(argv_store.end(), expanded.begin(), expanded.end());
  } catch (const UsageError& e) {
    return fail(err, kUsageError, "usage", e.what());
  }
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    out << sub->help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << sub->help();
    return fail(err, kUsageError, "usage", e.what());
  }

  try {
    if (cmd_synth->parsed()) {
      SyntheticPair pair;
      try {
        pair = make_synthetic(synth);
      } catch (const ContractError& e) {
        throw UsageError(e.what());
      }
      ensure_dir(synth_out);
      save_dense(fs::path(synth_out) / "source.csv", pair.source);
      save_dense(fs::path(synth_out) / "target.csv", pair.target);
      out << "wrote " << pair.source.size() << " source and " << pair.target.size() << " target samples to "
          << synth_out << "\n";
      return kOk;
    }

    if (cmd_train->parsed()) {
      const TrainConfig cfg = finalize(train_flags);
      const LoadedTask lt = load_task(train_task, cfg.seed);
      ensure_dir(train_flags.out);
      const fs::path dir(train_flags.out);
      write_file_atomic(dir / "config.ini", cmd_train->config_to_str(true, false));
      const ModelState s = train(lt.task.source, lt.task.target_labeled, lt.task.target_unlabeled, cfg);
      const EvalMetrics m = evaluate(s, lt.task.target_test);
      write_traces_csv(dir / "traces.csv", s.traces);
      write_metrics(dir / "metrics.txt", train_metrics(s, m, lt));
      write_embeddings_csv(dir / "embeddings.csv", embedding_rows(s, lt));
      out << "accuracy " << format_double(m.accuracy) << " after " << s.traces.size() << " iterations\n";
      return kOk;
    }

    if (cmd_grid->parsed()) {
      const TrainConfig cfg = finalize(grid_flags);
      const auto betas = parse_numbers(beta_grid, "--beta-grid");
      const auto gammas = parse_numbers(gamma_grid, "--gamma-grid");
      const LoadedTask lt = load_task(grid_task, cfg.seed);
      ensure_dir(grid_flags.out);
      const fs::path dir(grid_flags.out);
      write_file_atomic(dir / "config.ini", cmd_grid->config_to_str(true, false));
      const Scorer scorer = scorer_name == "holdout" ? Scorer::TargetHoldout : Scorer::ReverseValidation;
      const GridSearchResult res = grid_search(lt.task, betas, gammas, cfg, scorer, jobs);
      std::string csv = "beta,gamma,score\n";
      for (const auto& c : ranked(res.cells)) {
        csv += format_double(c.beta) + "," + format_double(c.gamma) + "," + format_double(c.score) + "\n";
      }
      write_file_atomic(dir / "results.csv", csv);
      write_metrics(dir / "metrics.txt", {{"scorer", scorer_name},
                                          {"cells", std::to_string(res.cells.size())},
                                          {"best_beta", format_double(res.best.beta)},
                                          {"best_gamma", format_double(res.best.gamma)},
                                          {"best_score", format_double(res.best.score)}});
      out << "best beta=" << format_double(res.best.beta) << " gamma=" << format_double(res.best.gamma)
          << " score=" << format_double(res.best.score) << "\n";
      return kOk;
    }

    if (cmd_abl->parsed()) {
      const TrainConfig cfg = finalize(abl_flags);
      const auto modes = parse_modes(mode_names);
      ensure_dir(abl_flags.out);
      const fs::path dir(abl_flags.out);
      write_file_atomic(dir / "config.ini", cmd_abl->config_to_str(true, false));

      std::map<std::string, std::vector<double>> acc;
      for (std::size_t r = 0; r < runs; ++r) {
        TrainConfig rc = cfg;
        rc.seed = cfg.seed + r;
        const LoadedTask lt = load_task(abl_task, rc.seed);
        for (const auto& mode : modes) acc[mode.name()].push_back(ablate(mode, lt.task, rc).metrics.accuracy);
      }
      const bool have_full = acc.count("full") > 0;
      std::string csv = "mode,runs,mean_accuracy,stddev_accuracy,p_value_vs_full\n";
      Metrics metrics;
      for (const auto& mode : modes) {
        const auto& a = acc[mode.name()];
        const MeanStd ms = mean_std(a);
        std::string p = "";
        if (have_full && mode.kind != AblationKind::Full && runs >= 2) {
          p = format_double(paired_t_test(acc["full"], a).p);
        }
        csv += mode.name() + "," + std::to_string(a.size()) + "," + format_double(ms.mean) + "," +
               format_double(ms.stddev) + "," + p + "\n";
        metrics.emplace_back(mode.name() + "_accuracy", format_double(ms.mean));
        out << mode.name() << " " << format_double(ms.mean) << " +- " << format_double(ms.stddev) << "\n";
      }
      write_file_atomic(dir / "results.csv", csv);
      write_metrics(dir / "metrics.txt", metrics);
      return kOk;
    }
  } catch (const UsageError& e) {
    return fail(err, kUsageError, "usage", e.what());
  } catch (const FormatError& e) {
    return fail(err, kDataError, "data", e.what());
  } catch (const ShapeError& e) {
    return fail(err, kDataError, "data", e.what());
  } catch (const ContractError& e) {
    return fail(err, kDataError, "data", e.what());
  } catch (const NumericError& e) {
    return fail(err, kNumericError, "numeric", e.what());
  } catch (const DegeneracyError& e) {
    return fail(err, kNumericError, "numeric", e.what());
  } catch (const std::exception& e) {
    return fail(err, kDataError, "data", e.what());
  }
  return fail(err, kUsageError, "usage", "no subcommand");
}

}  // namespace handa::cli
