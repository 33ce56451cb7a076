#include <cstdint>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <fsgap/fsgap.hpp>

namespace {

using fsgap::errc;
using fsgap::raise;
using fsgap::require;
using json = nlohmann::json;

json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) raise(errc::bad_config, "config: cannot open " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    raise(errc::bad_config, "config: " + path + ": " + e.what());
  }
  require(doc.is_object(), errc::bad_config, "config: top level must be an object");
  return doc;
}

// One config-file entry. The command-line flag wins when both are present;
// keys that match no entry are rejected.
template <class T>
void take(const json& cfg, std::set<std::string>& consumed, const CLI::App* cmd,
          const std::string& key, const std::string& flag, T& into) {
  if (!cfg.contains(key)) return;
  consumed.insert(key);
  if (cmd->count(flag) > 0) return;
  try {
    into = cfg.at(key).get<T>();
  } catch (const json::exception&) {
    raise(errc::bad_config, "config: key '" + key + "' has the wrong type");
  }
}

void reject_unknown(const json& cfg, const std::set<std::string>& consumed) {
  for (const auto& [key, value] : cfg.items())
    require(consumed.count(key) > 0, errc::bad_config, "config: unknown key '" + key + "'");
}

fsgap::ot::GapSolver parse_solver(const std::string& name) {
  if (name == "exact") return fsgap::ot::GapSolver::exact;
  if (name == "sinkhorn") return fsgap::ot::GapSolver::sinkhorn;
  raise(errc::bad_config, "solver must be 'exact' or 'sinkhorn', got '" + name + "'");
}

fsgap::fewshot::HeadKind parse_head(const std::string& name) {
  if (name == "linear") return fsgap::fewshot::HeadKind::linear;
  if (name == "tcn") return fsgap::fewshot::HeadKind::tcn;
  raise(errc::bad_config, "head must be 'linear' or 'tcn', got '" + name + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Domain-gap measurement and few-shot skill evaluation over video features"};
  app.require_subcommand(1);

  // gap
  auto* gap = app.add_subcommand("gap", "Earth mover's distance between two feature manifests");
  fsgap::cli::GapArgs gap_args;
  std::string gap_solver = "exact";
  std::string gap_config;
  gap->add_option("--a", gap_args.manifest_a, "First manifest (JSON)");
  gap->add_option("--b", gap_args.manifest_b, "Second manifest (JSON)");
  gap->add_option("--out", gap_args.out_path, "Write the result as JSON here");
  gap->add_option("--solver", gap_solver, "exact | sinkhorn");
  gap->add_option("--epsilon", gap_args.cfg.epsilon, "Entropic regularization (sinkhorn)");
  gap->add_option("--max-iters", gap_args.cfg.max_iters, "Sinkhorn iteration cap");
  gap->add_option("--tol", gap_args.cfg.tol, "Sinkhorn marginal L1 tolerance");
  gap->add_option("--max-points", gap_args.cfg.max_points, "Snippet subsample cap per side");
  gap->add_option("--seed", gap_args.cfg.seed, "Master seed for subsampling");
  gap->add_option("--config", gap_config, "JSON config file (flags take precedence)");

  // eval
  auto* eval = app.add_subcommand("eval", "Episodic few-shot evaluation of one head/shot cell");
  fsgap::cli::EvalArgs eval_args;
  std::string eval_head = "linear";
  std::string eval_config;
  eval->add_option("--manifest", eval_args.manifest, "Labeled manifest (JSON)");
  eval->add_option("--out", eval_args.out_path, "Write the evaluation report as JSON here");
  eval->add_option("--head", eval_head, "linear | tcn");
  eval->add_option("--shots", eval_args.cfg.shots, "Support samples per class");
  eval->add_flag("--any-shots", eval_args.any_shots, "Allow shot counts outside {1, 2, 5}");
  eval->add_option("--episodes", eval_args.cfg.episodes, "Number of episodes");
  eval->add_option("--seed", eval_args.cfg.seed, "Master seed");
  eval->add_option("--threads", eval_args.cfg.threads,
                   "Worker threads (0 = hardware concurrency)");
  eval->add_flag("--allow-extrapolation", eval_args.cfg.allow_extrapolation,
                 "Clamp GRS outside [19, 30] to the nearest class");
  eval->add_option("--epochs", eval_args.cfg.hp.epochs, "Training epochs per episode");
  eval->add_option("--lr", eval_args.cfg.hp.base_lr, "Base learning rate");
  eval->add_option("--weight-decay", eval_args.cfg.hp.adamw.weight_decay, "AdamW weight decay");
  eval->add_flag("--decay-bias", eval_args.cfg.hp.adamw.decay_bias,
                 "Apply weight decay to bias terms too");
  eval->add_option("--init-scale", eval_args.cfg.hp.init_scale,
                   "Parameter init scale (0 = zero init)");
  eval->add_option("--tcn-channels", eval_args.cfg.hp.tcn_channels, "TCN channel width");
  eval->add_option("--tcn-layers", eval_args.cfg.hp.tcn_layers, "TCN layer count");
  eval->add_option("--config", eval_config, "JSON config file (flags take precedence)");

  // gains
  auto* gains = app.add_subcommand("gains", "Average gains of one report set over baselines");
  fsgap::cli::GainsArgs gains_args;
  std::string gains_config;
  gains->add_option("--combined", gains_args.combined_dir, "Directory of combined-run reports");
  gains->add_option("--baseline", gains_args.baseline_dirs,
                    "Baseline report directory (repeatable)");
  gains->add_option("--out", gains_args.out_path, "Write the gain table as CSV here");
  gains->add_option("--config", gains_config, "JSON config file (flags take precedence)");

  // selftest
  app.add_subcommand("selftest", "Run built-in gradient and transport oracle checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return fsgap::cli::kExitConfig;
  }

  try {
    if (gap->parsed()) {
      if (!gap_config.empty()) {
        const json cfg = load_config_file(gap_config);
        std::set<std::string> used;
        take(cfg, used, gap, "a", "--a", gap_args.manifest_a);
        take(cfg, used, gap, "b", "--b", gap_args.manifest_b);
        take(cfg, used, gap, "out", "--out", gap_args.out_path);
        take(cfg, used, gap, "solver", "--solver", gap_solver);
        take(cfg, used, gap, "epsilon", "--epsilon", gap_args.cfg.epsilon);
        take(cfg, used, gap, "max_iters", "--max-iters", gap_args.cfg.max_iters);
        take(cfg, used, gap, "tol", "--tol", gap_args.cfg.tol);
        take(cfg, used, gap, "max_points", "--max-points", gap_args.cfg.max_points);
        take(cfg, used, gap, "seed", "--seed", gap_args.cfg.seed);
        reject_unknown(cfg, used);
      }
      require(!gap_args.manifest_a.empty(), errc::bad_config,
              "--a is required (flag or config key 'a')");
      require(!gap_args.manifest_b.empty(), errc::bad_config,
              "--b is required (flag or config key 'b')");
      gap_args.cfg.solver = parse_solver(gap_solver);
      require(gap_args.cfg.epsilon > 0.0, errc::bad_config, "epsilon must be positive");
      require(gap_args.cfg.max_iters >= 1, errc::bad_config, "max-iters must be positive");
      require(gap_args.cfg.tol > 0.0, errc::bad_config, "tol must be positive");
      require(gap_args.cfg.max_points >= 1, errc::bad_config, "max-points must be positive");
      return fsgap::cli::run_gap(gap_args);
    }

    if (eval->parsed()) {
      if (!eval_config.empty()) {
        const json cfg = load_config_file(eval_config);
        std::set<std::string> used;
        take(cfg, used, eval, "manifest", "--manifest", eval_args.manifest);
        take(cfg, used, eval, "out", "--out", eval_args.out_path);
        take(cfg, used, eval, "head", "--head", eval_head);
        take(cfg, used, eval, "shots", "--shots", eval_args.cfg.shots);
        take(cfg, used, eval, "any_shots", "--any-shots", eval_args.any_shots);
        take(cfg, used, eval, "episodes", "--episodes", eval_args.cfg.episodes);
        take(cfg, used, eval, "seed", "--seed", eval_args.cfg.seed);
        take(cfg, used, eval, "threads", "--threads", eval_args.cfg.threads);
        take(cfg, used, eval, "allow_extrapolation", "--allow-extrapolation",
             eval_args.cfg.allow_extrapolation);
        take(cfg, used, eval, "epochs", "--epochs", eval_args.cfg.hp.epochs);
        take(cfg, used, eval, "lr", "--lr", eval_args.cfg.hp.base_lr);
        take(cfg, used, eval, "weight_decay", "--weight-decay",
             eval_args.cfg.hp.adamw.weight_decay);
        take(cfg, used, eval, "decay_bias", "--decay-bias", eval_args.cfg.hp.adamw.decay_bias);
        take(cfg, used, eval, "init_scale", "--init-scale", eval_args.cfg.hp.init_scale);
        take(cfg, used, eval, "tcn_channels", "--tcn-channels", eval_args.cfg.hp.tcn_channels);
        take(cfg, used, eval, "tcn_layers", "--tcn-layers", eval_args.cfg.hp.tcn_layers);
        reject_unknown(cfg, used);
      }
      require(!eval_args.manifest.empty(), errc::bad_config,
              "--manifest is required (flag or config key 'manifest')");
      eval_args.cfg.head = parse_head(eval_head);
      require(eval_args.cfg.shots >= 1, errc::bad_config, "shots must be >= 1");
      require(eval_args.cfg.episodes >= 1, errc::bad_config, "episodes must be >= 1");
      require(eval_args.cfg.threads >= 0, errc::bad_config, "threads must be >= 0");
      require(eval_args.cfg.hp.epochs >= 0, errc::bad_config, "epochs must be >= 0");
      require(eval_args.cfg.hp.base_lr > 0.0, errc::bad_config, "lr must be positive");
      require(eval_args.cfg.hp.adamw.weight_decay >= 0.0, errc::bad_config,
              "weight-decay must be >= 0");
      require(eval_args.cfg.hp.init_scale >= 0.0, errc::bad_config, "init-scale must be >= 0");
      require(eval_args.cfg.hp.tcn_channels >= 1, errc::bad_config,
              "tcn-channels must be >= 1");
      require(eval_args.cfg.hp.tcn_layers >= 1, errc::bad_config, "tcn-layers must be >= 1");
      return fsgap::cli::run_eval(eval_args);
    }

    if (gains->parsed()) {
      if (!gains_config.empty()) {
        const json cfg = load_config_file(gains_config);
        std::set<std::string> used;
        take(cfg, used, gains, "combined", "--combined", gains_args.combined_dir);
        take(cfg, used, gains, "baseline", "--baseline", gains_args.baseline_dirs);
        take(cfg, used, gains, "out", "--out", gains_args.out_path);
        reject_unknown(cfg, used);
      }
      require(!gains_args.combined_dir.empty(), errc::bad_config,
              "--combined is required (flag or config key 'combined')");
      return fsgap::cli::run_gains(gains_args);
    }

    return fsgap::cli::run_selftest();
  } catch (const fsgap::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return fsgap::cli::exit_code_for(e.code());
  }
}
