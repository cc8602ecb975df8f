#pragma once

// Command-line surface. Exit codes: 0 success, 2 usage error, 3 data
// error, 4 numerical error. Failures print one JSON error line to stderr.

#include <array>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mipruner/io.hpp"
#include "mipruner/pipeline.hpp"

namespace mipruner::cli {

enum ExitCode : int { ok = 0, usage = 2, data = 3, numerical = 4 };

inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_parameter: return usage;
    case ErrorKind::invalid_data: return data;
    case ErrorKind::numerical:
    case ErrorKind::training: return numerical;
  }
  return data;
}

inline void print_error(std::ostream& err, int code, std::string_view kind, const std::string& message) {
  json line = {{"error", {{"code", code}, {"kind", kind}, {"message", message}}}};
  err << line.dump() << '\n';
}

namespace detail {

struct Common {
  double sample_fraction = 1.0;
  std::uint64_t sample_seed = 0;
};

struct EstimationFlags {
  std::string activations;
  std::string sigmas;
  double alpha = kDefaultAlpha;
  double gamma = 1.0;
  double beta = 0.9;
  int batch_size = 100;
  std::uint64_t tune_seed = 0;
};

inline void add_estimation_flags(CLI::App* app, EstimationFlags& f, bool sigmas_flag = true) {
  app->add_option("--activations", f.activations, "Activation matrix (AMX)")->required();
  if (sigmas_flag)
    app->add_option("--sigmas", f.sigmas, "Tuned kernel widths (JSON); tuned inline when absent");
  app->add_option("--alpha", f.alpha, "Renyi entropy order")->capture_default_str();
  app->add_option("--gamma", f.gamma, "Scott's rule constant (inline tuning)")->capture_default_str();
  app->add_option("--beta", f.beta, "EMA coefficient (inline tuning)")->capture_default_str();
  app->add_option("--batch-size", f.batch_size, "Tuning batch size (inline tuning)")->capture_default_str();
  app->add_option("--tune-seed", f.tune_seed, "Batch shuffle seed (inline tuning)")->capture_default_str();
}

inline ActivationMatrix load_activations(const EstimationFlags& f, const Common& c) {
  ActivationMatrix x = io::read_activations(f.activations);
  if (c.sample_fraction < 1.0) x = subsample(x, c.sample_fraction, c.sample_seed);
  x.validate();
  return x;
}

inline SigmaSchedule load_or_tune(const EstimationFlags& f, const ActivationMatrix& x) {
  if (!f.sigmas.empty()) {
    SigmaSchedule s = io::read_sigmas(f.sigmas);
    if (s.neurons() != static_cast<std::size_t>(x.neurons())) {
      std::ostringstream os;
      os << "sigma file covers " << s.neurons() << " neurons, activations have " << x.neurons();
      throw InvalidData(os.str());
    }
    return s;
  }
  TuneOptions t;
  t.gamma = f.gamma;
  t.beta = f.beta;
  t.alpha = f.alpha;
  t.batch_size = f.batch_size;
  t.seed = f.tune_seed;
  return tune_all(x, t);
}

inline double single_layer_flops(const PruneMask& m) {
  return static_cast<double>(m.kept()) / static_cast<double>(m.size());
}

inline void append_report(const std::string& path, const std::vector<MetricsRow>& rows) {
  std::ostringstream body;
  write_metrics_csv(body, rows);
  std::string text = body.str();
  if (std::filesystem::exists(path)) {
    std::string existing = io::read_file(path);
    if (!existing.empty() && existing.back() != '\n') existing.push_back('\n');
    text = existing + text.substr(text.find('\n') + 1);
  }
  io::write_atomic(path, text);
}

inline std::vector<double> parse_values(const std::string& list) {
  std::vector<double> out;
  std::istringstream in(list);
  std::string cell;
  while (std::getline(in, cell, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(cell, &used));
      if (used != cell.size()) throw std::invalid_argument(cell);
    } catch (const std::exception&) {
      throw InvalidParameter("'" + cell + "' in --values is not a number");
    }
  }
  if (out.empty()) throw InvalidParameter("--values is empty");
  return out;
}

inline int resolve_keep(std::int64_t k, std::optional<double> target_flops, std::optional<int> keep) {
  if (target_flops && keep) throw InvalidParameter("give either --target-flops or --keep, not both");
  if (keep) return *keep;
  if (target_flops) return keep_for_relative_flops(k, *target_flops);
  throw InvalidParameter("one of --target-flops or --keep is required");
}

}  // namespace detail

/// Parses and runs one command line. Output goes to `out`, diagnostics to `err`.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  using namespace detail;
  CLI::App app{"Label-free structured pruning of FFN layers by pairwise mutual information", "mipruner"};
  app.set_config("--config", "", "TOML/INI file with default flag values");
  app.fallthrough();
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolkitVersion);

  Common common;
  app.add_option("--sample-fraction", common.sample_fraction, "Fraction of activation rows used for estimation")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  app.add_option("--sample-seed", common.sample_seed, "Seed for row subsampling")->capture_default_str();

  // tune-sigma
  EstimationFlags tune_f;
  std::string tune_out;
  GridSpec grid;
  auto* tune = app.add_subcommand("tune-sigma", "Tune per-neuron kernel widths");
  add_estimation_flags(tune, tune_f, false);
  tune->add_option("--seed", tune_f.tune_seed, "Batch shuffle seed")->capture_default_str();
  tune->add_option("--grid-count", grid.count, "Candidates per neuron")->capture_default_str();
  tune->add_option("--grid-lo", grid.lo_factor, "Lowest candidate / Scott width")->capture_default_str();
  tune->add_option("--grid-hi", grid.hi_factor, "Highest candidate / Scott width")->capture_default_str();
  tune->add_option("--out", tune_out, "Output sigma JSON")->required();

  // mi
  EstimationFlags mi_f;
  std::string mi_out;
  auto* mi_cmd = app.add_subcommand("mi", "Pairwise mutual information matrix (bits) as CSV");
  add_estimation_flags(mi_cmd, mi_f);
  mi_cmd->add_option("--out", mi_out, "Output CSV")->required();

  // prune
  auto* prune = app.add_subcommand("prune", "Produce a prune mask");
  prune->require_subcommand(1);
  std::string prune_out;
  std::uint64_t prune_seed = 0;

  EstimationFlags pw_f;
  double threshold_bits = 0.0;
  std::optional<int> max_itr;
  auto* pairwise = prune->add_subcommand("pairwise", "Randomized pairwise MI-threshold pruning");
  add_estimation_flags(pairwise, pw_f);
  pairwise->add_option("--threshold-bits", threshold_bits, "Drop one neuron of a pair whose MI reaches this")->required();
  pairwise->add_option("--max-itr", max_itr, "Iterations (default ceil(10 K ln K))");
  pairwise->add_option("--seed", prune_seed)->capture_default_str();
  pairwise->add_option("--out", prune_out, "Output mask JSON")->required();

  EstimationFlags cl_f;
  std::string cl_mi, cl_model, cl_inputs;
  double target_flops_cl = 0.0;
  Index mds_dim = 16;
  int n_seeds = 500;
  auto* cluster = prune->add_subcommand("cluster", "MDS + k-means pruning to a FLOPs budget");
  add_estimation_flags(cluster, cl_f);
  cluster->add_option("--mi", cl_mi, "Precomputed MI CSV");
  cluster->add_option("--target-flops", target_flops_cl, "Relative FFN FLOPs to keep")->required();
  cluster->add_option("--mds-dim", mds_dim, "Embedding dimension (capped at K-1)")->capture_default_str();
  cluster->add_option("--seeds", n_seeds, "Clustering seeds tried")->capture_default_str();
  cluster->add_option("--seed", prune_seed, "First clustering seed")->capture_default_str();
  cluster->add_option("--model", cl_model, "Toy checkpoint used to score seeds by output KL");
  cluster->add_option("--kl-inputs", cl_inputs, "Inputs (AMX) for KL scoring; default: checkpoint calibration split");
  cluster->add_option("--out", prune_out, "Output mask JSON")->required();

  std::optional<int> rnd_k, keep;
  std::optional<double> target_flops;
  std::string rnd_acts;
  auto* random = prune->add_subcommand("random", "Uniformly random neurons");
  random->add_option("--k", rnd_k, "Layer width");
  random->add_option("--activations", rnd_acts, "Take the width from an activation file");
  random->add_option("--target-flops", target_flops, "Relative FFN FLOPs to keep");
  random->add_option("--keep", keep, "Neurons to keep");
  random->add_option("--seed", prune_seed)->capture_default_str();
  random->add_option("--out", prune_out, "Output mask JSON")->required();

  std::string wm_model, wm_weights;
  auto* wmag = prune->add_subcommand("weight-magnitude", "Largest L1 norm of outgoing weights");
  wmag->add_option("--model", wm_model, "Toy checkpoint (uses FC2 rows)");
  wmag->add_option("--weights", wm_weights, "Outgoing weights K x out (AMX)");
  wmag->add_option("--target-flops", target_flops, "Relative FFN FLOPs to keep");
  wmag->add_option("--keep", keep, "Neurons to keep");
  wmag->add_option("--out", prune_out, "Output mask JSON")->required();

  EstimationFlags pcc_f;
  double pcc_threshold = 0.0;
  auto* pcc = prune->add_subcommand("pcc", "Pairwise pruning by |Pearson correlation|");
  add_estimation_flags(pcc, pcc_f, false);
  pcc->add_option("--threshold", pcc_threshold, "Drop one neuron of a pair whose |rho| reaches this")->required();
  pcc->add_option("--max-itr", max_itr, "Iterations (default ceil(10 K ln K))");
  pcc->add_option("--seed", prune_seed)->capture_default_str();
  pcc->add_option("--out", prune_out, "Output mask JSON")->required();

  // toy
  auto* toy = app.add_subcommand("toy", "Synthetic FFN for end-to-end runs");
  toy->require_subcommand(1);
  ToyExperimentConfig cfg;
  std::uint64_t toy_seed = 0;
  std::string toy_out, toy_acts;
  auto* train = toy->add_subcommand("train", "Train a toy FFN on a synthetic task");
  train->add_option("--seed", toy_seed, "Data and init seed")->capture_default_str();
  train->add_option("--hidden", cfg.hidden)->capture_default_str();
  train->add_option("--d-in", cfg.task.d_in)->capture_default_str();
  train->add_option("--classes", cfg.task.n_classes)->capture_default_str();
  train->add_option("--samples", cfg.task.n_samples, "Training rows")->capture_default_str();
  train->add_option("--separation", cfg.task.separation)->capture_default_str();
  train->add_option("--latent-dims", cfg.task.redundancy.latent_dims, "Planted correlated input groups")
      ->capture_default_str();
  train->add_option("--noise", cfg.task.redundancy.noise)->capture_default_str();
  train->add_option("--steps", cfg.train.steps)->capture_default_str();
  train->add_option("--lr", cfg.train.learning_rate)->capture_default_str();
  train->add_option("--estimation-fraction", cfg.sample_fraction, "Training rows written to --activations-out")
      ->capture_default_str();
  train->add_option("--out", toy_out, "Checkpoint (AMX)")->required();
  train->add_option("--activations-out", toy_acts, "Write FC1 activations of the estimation rows (AMX)");

  std::string eval_model, eval_mask, eval_report;
  auto* eval = toy->add_subcommand("eval", "Accuracy, KL proxy and relative FLOPs of a masked toy model");
  eval->add_option("--model", eval_model)->required();
  eval->add_option("--mask", eval_mask, "Mask JSON (default: unpruned)");
  eval->add_option("--report", eval_report, "Metrics CSV to append to");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "Ablation sweeps on toy models, emitted as CSV curves");
  ablate->require_subcommand(1);
  AblationOptions ab;
  std::array<std::string, 4> ab_values{"0.5,1.01,2,5", "0.01,0.1,0.5,1.0", "0.5,0.75,0.9,0.95,0.99", "1,10,100,500"};
  std::string ab_report;
  double flops_step = 0.1;
  auto add_ablation = [&](const char* name, const char* help, std::string& values) {
    auto* sub = ablate->add_subcommand(name, help);
    sub->add_option("--values", values, "Comma-separated values")->capture_default_str();
    sub->add_option("--trials", ab.trials, "Toy models (seeds) per value")->capture_default_str();
    sub->add_option("--seed", ab.seed, "First trial seed")->capture_default_str();
    sub->add_option("--flops-step", flops_step, "Relative FLOPs grid step (0.01 for 1% curves)")->capture_default_str();
    sub->add_option("--seeds", ab.pipeline.seeds, "Clustering seeds per budget")->capture_default_str();
    sub->add_option("--samples", ab.experiment.task.n_samples, "Training rows of each toy task")->capture_default_str();
    sub->add_option("--hidden", ab.experiment.hidden, "Toy hidden width")->capture_default_str();
    sub->add_option("--estimation-fraction", ab.experiment.sample_fraction, "Training rows used for MI estimation")
        ->capture_default_str();
    sub->add_option("--report", ab_report, "Output CSV")->required();
    return sub;
  };
  auto* ab_alpha = add_ablation("alpha", "Sweep the entropy order", ab_values[0]);
  auto* ab_frac = add_ablation("sample-fraction", "Sweep the estimation sample fraction (of the training rows)",
                               ab_values[1]);
  auto* ab_pcc = add_ablation("pcc", "MI vs |Pearson| in the pairwise loop (values: threshold quantiles)",
                              ab_values[2]);
  auto* ab_seeds = add_ablation("seeds", "Sweep the number of clustering seeds", ab_values[3]);

  // demo-data
  std::string demo_out;
  auto* demo = app.add_subcommand("demo-data", "Write the demo activation file with planted duplicates");
  demo->add_option("--out", demo_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return ok;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return ok;
  } catch (const CLI::CallForVersion&) {
    out << kToolkitVersion << '\n';
    return ok;
  } catch (const CLI::ParseError& e) {
    // Nested subcommands print their own help on request.
    if (e.get_exit_code() == 0) {
      out << e.what() << '\n';
      return ok;
    }
    print_error(err, usage, "usage", e.what());
    return usage;
  }

  try {
    if (*tune) {
      ActivationMatrix x = load_activations(tune_f, common);
      TuneOptions t;
      t.gamma = tune_f.gamma;
      t.beta = tune_f.beta;
      t.alpha = tune_f.alpha;
      t.batch_size = tune_f.batch_size;
      t.seed = tune_f.tune_seed;
      t.grid = grid;
      const SigmaSchedule s = tune_all(x, t);
      io::write_sigmas(tune_out, s, x.layer_id);
      out << "tuned " << s.neurons() << " kernel widths (layer sigma " << s.layer_sigma << ") -> " << tune_out << '\n';
    } else if (*mi_cmd) {
      ActivationMatrix x = load_activations(mi_f, common);
      const SigmaSchedule s = load_or_tune(mi_f, x);
      const MIMatrix m = mi_matrix(x, s, mi_f.alpha);
      io::write_mi_csv(mi_out, m);
      out << "wrote " << m.computed_pairs().size() << " pairwise MI values -> " << mi_out << '\n';
    } else if (*prune) {
      PruneMask mask;
      if (*pairwise) {
        ActivationMatrix x = load_activations(pw_f, common);
        const SigmaSchedule s = load_or_tune(pw_f, x);
        mask = prune_pairwise(x, s, pw_f.alpha, threshold_bits, max_itr.value_or(default_max_itr(x.neurons())),
                              prune_seed);
      } else if (*cluster) {
        ActivationMatrix x = load_activations(cl_f, common);
        const int target = keep_for_relative_flops(x.neurons(), target_flops_cl);
        MIMatrix m;
        if (!cl_mi.empty()) {
          m = io::read_mi_csv(cl_mi, cl_f.alpha);
          if (m.neurons() != x.neurons()) throw InvalidData("MI CSV width differs from the activation matrix");
        } else if (target < x.neurons()) {
          m = mi_matrix(x, load_or_tune(cl_f, x), cl_f.alpha);
        }
        if (target == x.neurons()) {
          mask = PruneMask::all_keep(static_cast<std::size_t>(x.neurons()), PruneMethod::cluster_mi);
          mask.target_keep = target;
          mask.seed = prune_seed;
        } else {
          PipelineOptions po;
          po.alpha = cl_f.alpha;
          po.mds_dim = std::min<Index>(mds_dim, std::max<Index>(1, x.neurons() - 1));
          po.seeds = n_seeds;
          po.seed_base = prune_seed;
          if (!cl_model.empty()) {
            const io::ToyCheckpoint ck = io::read_toy_checkpoint(cl_model);
            if (ck.model.hidden() != x.neurons()) throw InvalidData("checkpoint hidden width differs from activations");
            Matrix kl_inputs;
            if (!cl_inputs.empty()) {
              kl_inputs = io::read_amx(cl_inputs).values;
            } else {
              const auto ecfg = experiment_config_from_json(ck.metadata.value("experiment", json::object()));
              kl_inputs = make_toy_splits(ck.metadata.value("seed", std::uint64_t{0}), ecfg).calibration;
            }
            mask = cluster_prune_model(m, target, ck.model, kl_inputs, po).selection.mask;
          } else {
            mask = cluster_prune_representation(m, target, x, po).selection.mask;
          }
        }
        mask.layer_id = x.layer_id;
      } else if (*random) {
        std::int64_t k = 0;
        std::string layer;
        if (rnd_k) k = *rnd_k;
        if (!rnd_acts.empty()) {
          const ActivationMatrix x = io::read_activations(rnd_acts);
          k = x.neurons();
          layer = x.layer_id;
        }
        if (k < 1) throw InvalidParameter("give --k or --activations");
        mask = prune_random(static_cast<std::size_t>(k), resolve_keep(k, target_flops, keep), prune_seed);
        mask.layer_id = layer;
      } else if (*wmag) {
        Matrix w;
        if (!wm_model.empty() == !wm_weights.empty()) throw InvalidParameter("give exactly one of --model or --weights");
        if (!wm_model.empty())
          w = io::read_toy_checkpoint(wm_model).model.w2;
        else
          w = io::read_amx(wm_weights).values;
        mask = prune_weight_magnitude(w, resolve_keep(w.rows(), target_flops, keep));
      } else if (*pcc) {
        ActivationMatrix x = load_activations(pcc_f, common);
        mask = prune_pcc(x, pcc_threshold, max_itr.value_or(default_max_itr(x.neurons())), prune_seed);
      }
      const double rel = single_layer_flops(mask);
      io::write_mask(prune_out, mask, rel);
      out << to_string(mask.method) << ": kept " << mask.kept() << " of " << mask.size() << " neurons (relative FLOPs "
          << rel << ") -> " << prune_out << '\n';
    } else if (*toy) {
      if (*train) {
        ToyExperiment ex = make_toy_experiment(toy_seed, cfg);
        const double acc = accuracy(ex.model.forward(ex.data.train.inputs), ex.data.train.labels);
        json meta = {{"seed", toy_seed}, {"experiment", to_json(cfg)}, {"train_accuracy", acc}};
        io::write_toy_checkpoint(toy_out, ex.model, meta);
        out << "trained toy FFN (" << cfg.task.d_in << " -> " << cfg.hidden << " -> " << cfg.task.n_classes
            << "), train accuracy " << acc << " -> " << toy_out << '\n';
        if (!toy_acts.empty()) {
          const Matrix rows = subsample_rows(ex.data.train.inputs, cfg.sample_fraction, toy_seed);
          io::write_activations(toy_acts, capture_activations(ex.model, rows, "ffn.fc1", cfg.sample_fraction), "toy");
          out << "wrote " << rows.rows() << " activation rows -> " << toy_acts << '\n';
        }
      } else if (*eval) {
        const io::ToyCheckpoint ck = io::read_toy_checkpoint(eval_model);
        const auto ecfg = experiment_config_from_json(ck.metadata.value("experiment", json::object()));
        const ToySplits splits = make_toy_splits(ck.metadata.value("seed", std::uint64_t{0}), ecfg);
        const PruneMask mask = eval_mask.empty()
                                   ? PruneMask::all_keep(static_cast<std::size_t>(ck.model.hidden()))
                                   : io::read_mask(eval_mask);
        MetricsRow row = evaluate_mask(ck.model, mask, splits.test, splits.test_labels);
        write_metrics_table(out, {row});
        if (!eval_report.empty()) append_report(eval_report, {row});
      }
    } else if (*ablate) {
      std::size_t which = 0;
      AblationKind kind = AblationKind::alpha;
      if (*ab_frac) which = 1, kind = AblationKind::sample_fraction;
      if (*ab_pcc) which = 2, kind = AblationKind::pcc;
      if (*ab_seeds) which = 3, kind = AblationKind::seeds;
      (void)ab_alpha;
      ab.values = parse_values(ab_values[which]);
      ab.levels = flops_levels(flops_step);
      const auto rows = run_ablation(kind, ab);
      std::ostringstream csv;
      write_metrics_csv(csv, rows);
      io::write_atomic(ab_report, csv.str());
      write_metrics_table(out, rows);
      out << rows.size() << " rows -> " << ab_report << '\n';
    } else if (*demo) {
      const DemoFixture f = make_demo_fixture();
      json planted = json::array();
      for (const auto& [a, b] : f.planted) planted.push_back({a, b});
      json meta = {{"layer_id", f.activations.layer_id},
                   {"sample_fraction", 1.0},
                   {"source", "demo"},
                   {"planted_duplicates", planted}};
      io::write_amx(demo_out, f.activations.values, meta);
      out << "wrote demo activations -> " << demo_out << '\n';
    }
  } catch (const Error& e) {
    const int code = exit_code_for(e.kind());
    print_error(err, code, to_string(e.kind()), e.what());
    return code;
  } catch (const std::exception& e) {
    print_error(err, data, "invalid_data", e.what());
    return data;
  }
  return ok;
}

}  // namespace mipruner::cli
