#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "fsgap/error.hpp"
#include "fsgap/features.hpp"
#include "fsgap/fewshot.hpp"
#include "fsgap/nn.hpp"
#include "fsgap/ot.hpp"
#include "fsgap/rng.hpp"
#include "fsgap/synth.hpp"

namespace fsgap::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // selftest found a broken invariant
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitSolver = 4;

// Failure classes are disjoint: bad invocation/config (2), bad or
// insufficient input data (3), numerical solver failure (4).
inline int exit_code_for(errc code) {
  switch (code) {
    case errc::invalid_argument:
    case errc::bad_config:
    case errc::grs_missing:
      return kExitConfig;
    case errc::degenerate:
    case errc::numerical_underflow:
      return kExitSolver;
    default:
      return kExitData;
  }
}

namespace detail {

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), errc::io_error, "cannot open " + path.string() + " for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  require(out.good(), errc::io_error, "short write to " + path.string());
}

template <class Fn>
int guarded(Fn&& fn) {
  try {
    fn();
    return kExitOk;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// gap: EMD between the snippet-feature distributions of two manifests
// ---------------------------------------------------------------------------

struct GapArgs {
  std::string manifest_a;
  std::string manifest_b;
  std::string out_path;  // optional JSON destination
  ot::GapConfig cfg;
};

inline int run_gap(const GapArgs& args) {
  return detail::guarded([&] {
    const auto a = features::load_manifest(args.manifest_a);
    const auto b = features::load_manifest(args.manifest_b);
    const auto result = ot::domain_gap(a, b, args.cfg);
    if (!args.out_path.empty())
      detail::write_text_file(args.out_path, result.to_json().dump(2) + "\n");
    std::cout << a.name << " -> " << b.name << ": gap "
              << nlohmann::json(result.value).dump() << " ("
              << (result.solver == ot::GapSolver::exact ? "exact" : "sinkhorn") << ", "
              << result.points_a << " x " << result.points_b << " points)\n";
  });
}

// ---------------------------------------------------------------------------
// eval: episodic few-shot evaluation of one (head, shots) cell
// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string manifest;
  std::string out_path;  // optional report destination
  fewshot::EvalConfig cfg;
  bool any_shots = false;  // permit shot counts outside the standard grid
};

inline int run_eval(const EvalArgs& args) {
  return detail::guarded([&] {
    const int k = args.cfg.shots;
    require(args.any_shots || k == 1 || k == 2 || k == 5, errc::bad_config,
            "shots must be 1, 2 or 5 (pass --any-shots to override)");
    const auto set = features::load_manifest(args.manifest);
    const auto report = fewshot::run_eval(set, args.cfg);
    if (!args.out_path.empty())
      detail::write_text_file(args.out_path, report.to_json().dump(2) + "\n");
    char line[128];
    std::snprintf(line, sizeof(line), "acc %.2f ± %.2f / f1 %.2f ± %.2f\n",
                  report.stats.mean_accuracy, report.stats.std_accuracy, report.stats.mean_f1,
                  report.stats.std_f1);
    std::cout << line;
  });
}

// ---------------------------------------------------------------------------
// gains: average metric difference of a combined-pretraining report set
// against one or more baseline report sets, cell by cell
// ---------------------------------------------------------------------------

struct GainsArgs {
  std::string combined_dir;
  std::vector<std::string> baseline_dirs;
  std::string out_path;  // optional CSV destination
};

namespace detail {

inline std::string dir_label(const std::string& dir) {
  std::filesystem::path p(dir);
  if (p.filename().empty()) p = p.parent_path();
  const std::string name = p.filename().string();
  return name.empty() ? dir : name;
}

// Reads every *.json evaluation report in a directory into (head, shots) ->
// mean metrics. Files are visited in name order so diagnostics are stable.
inline fewshot::ReportSet load_report_set(const std::string& dir) {
  require(std::filesystem::is_directory(dir), errc::missing_file,
          "gains: " + dir + " is not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".json")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  require(!files.empty(), errc::empty_input, "gains: no .json reports in " + dir);

  fewshot::ReportSet set;
  for (const auto& file : files) {
    std::ifstream in(file);
    require(in.good(), errc::missing_file, "gains: cannot open " + file.string());
    nlohmann::json doc;
    try {
      in >> doc;
      const fewshot::CellKey key{doc.at("config").at("head").get<std::string>(),
                                 doc.at("config").at("shots").get<int>()};
      fewshot::AggregateStats stats;
      stats.mean_accuracy = doc.at("mean_accuracy").get<double>();
      stats.std_accuracy = doc.at("std_accuracy").get<double>();
      stats.mean_f1 = doc.at("mean_f1").get<double>();
      stats.std_f1 = doc.at("std_f1").get<double>();
      require(set.emplace(key, stats).second, errc::cell_mismatch,
              "gains: duplicate (" + key.first + ", " + std::to_string(key.second) +
                  "-shot) cell in " + dir);
    } catch (const nlohmann::json::exception& e) {
      raise(errc::bad_report, "gains: " + file.string() + " is not an evaluation report: " +
                                  std::string(e.what()));
    }
  }
  return set;
}

}  // namespace detail

inline int run_gains(const GainsArgs& args) {
  return detail::guarded([&] {
    require(!args.baseline_dirs.empty(), errc::bad_config,
            "gains: need at least one --baseline directory");
    const auto combined = detail::load_report_set(args.combined_dir);
    std::vector<std::pair<std::string, fewshot::ReportSet>> baselines;
    for (const auto& dir : args.baseline_dirs)
      baselines.emplace_back(detail::dir_label(dir), detail::load_report_set(dir));
    const auto rows =
        fewshot::compute_gains(combined, detail::dir_label(args.combined_dir), baselines);
    const std::string csv = fewshot::gains_csv(rows);
    if (!args.out_path.empty()) detail::write_text_file(args.out_path, csv);
    std::cout << csv;
  });
}

// ---------------------------------------------------------------------------
// selftest: quick built-in oracle checks (gradients, exact OT, Sinkhorn,
// optimizer step, schedule endpoints)
// ---------------------------------------------------------------------------

namespace detail {

// Minimum-cost assignment by exhaustive permutation search; equals EMD for
// two equal-size uniformly weighted clouds.
inline double assignment_emd(const Eigen::MatrixXd& cost) {
  const Eigen::Index n = cost.rows();
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  double best = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) total += cost(i, perm[static_cast<std::size_t>(i)]);
    best = std::min(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / static_cast<double>(n);
}

}  // namespace detail

inline int run_selftest() {
  int failures = 0;
  const auto check = [&failures](const std::string& name, bool ok) {
    std::cout << (ok ? "ok   " : "FAIL ") << name << "\n";
    if (!ok) ++failures;
  };

  {
    bool ok = true;
    for (std::uint64_t seed = 0; seed < 5 && ok; ++seed) {
      Rng rng(derive_seed(9000, seed));
      auto head = nn::LinearHead::random(2, 6, rng);
      Eigen::VectorXd x(6);
      for (Eigen::Index i = 0; i < 6; ++i) x(i) = rng.normal();
      ok = nn::grad_check(head, x, static_cast<Eigen::Index>(seed % 2)) <= 1e-4;
    }
    check("linear head gradients vs finite differences", ok);
  }
  {
    bool ok = true;
    for (std::uint64_t seed = 0; seed < 3 && ok; ++seed) {
      Rng rng(derive_seed(9100, seed));
      nn::TcnConfig tc;
      tc.input_dim = 4;
      tc.channels = 6;
      auto head = nn::TcnHead::random(tc, rng);
      Eigen::MatrixXd x(4, 5);
      for (Eigen::Index i = 0; i < x.size(); ++i) x(i / 5, i % 5) = rng.normal();
      ok = nn::grad_check(head, x, static_cast<Eigen::Index>(seed % 2)) <= 1e-4;
    }
    check("tcn head gradients vs finite differences", ok);
  }
  {
    bool ok = true;
    for (std::uint64_t seed = 0; seed < 5 && ok; ++seed) {
      const auto pa = synth::gaussian_points(4, 3, 1.0, {}, derive_seed(9200, seed));
      const auto pb = synth::gaussian_points(4, 3, 1.0, {}, derive_seed(9300, seed));
      const auto a = ot::PointCloud::uniform(pa);
      const auto b = ot::PointCloud::uniform(pb);
      const auto plan = ot::emd_exact(a, b);
      ok = std::abs(plan.cost - detail::assignment_emd(plan.ground_cost)) <= 1e-9;
    }
    check("exact transport vs exhaustive assignment oracle", ok);
  }
  {
    const auto pa = synth::gaussian_points(16, 3, 1.0, {}, 9400);
    const auto pb = synth::gaussian_points(16, 3, 1.0, {}, 9500);
    const auto a = ot::PointCloud::uniform(pa);
    const auto b = ot::PointCloud::uniform(pb);
    const double exact = ot::emd_exact(a, b).cost;
    const double eps = 1e-3 * ot::ground_cost(a, b).mean();
    const auto sk = ot::emd_sinkhorn(a, b, eps);
    check("sinkhorn cost within 2% of exact",
          std::abs(sk.plan.cost - exact) <= 0.02 * std::max(exact, 1e-12));
  }
  {
    Eigen::VectorXd w(1), g(1), mask(1);
    w << 1.0;
    g << 0.5;
    mask << 1.0;
    auto st = nn::OptimizerState::init(1);
    nn::adamw_step(st, w, g, mask, 1e-3);
    const double expected = 1.0 - 1e-3 * (0.5 / (0.5 + 1e-8) + 0.01);
    check("adamw hand-computed first step", std::abs(w(0) - expected) <= 1e-12);
  }
  {
    const bool ok = std::abs(nn::cosine_lr(0, 30, 1e-3) - 1e-3) <= 1e-15 &&
                    std::abs(nn::cosine_lr(30, 30, 1e-3)) <= 1e-15 &&
                    std::abs(nn::cosine_lr(15, 30, 1e-3) - 5e-4) <= 1e-15;
    check("cosine schedule endpoints and midpoint", ok);
  }

  if (failures > 0) {
    std::cout << failures << " check(s) failed\n";
    return kExitFailure;
  }
  std::cout << "all checks passed\n";
  return kExitOk;
}

}  // namespace fsgap::cli
