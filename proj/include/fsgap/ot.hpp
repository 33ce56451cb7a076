#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "fsgap/error.hpp"
#include "fsgap/features.hpp"
#include "fsgap/rng.hpp"

namespace fsgap::ot {

// Weighted point set; weights strictly positive and summing to 1.
struct PointCloud {
  Eigen::MatrixXd points;   // M x d
  Eigen::VectorXd weights;  // M

  static PointCloud uniform(Eigen::MatrixXd pts) {
    PointCloud c;
    const auto m = pts.rows();
    c.points = std::move(pts);
    c.weights = Eigen::VectorXd::Constant(m, m > 0 ? 1.0 / static_cast<double>(m) : 0.0);
    return c;
  }

  Eigen::Index size() const { return points.rows(); }
  Eigen::Index dim() const { return points.cols(); }

  void validate() const {
    require(size() >= 1, errc::degenerate, "point cloud is empty");
    require(points.allFinite(), errc::invalid_argument, "point cloud has non-finite coordinates");
    require((weights.array() > 0.0).all(), errc::invalid_argument,
            "point cloud weights must be strictly positive");
    require(std::abs(weights.sum() - 1.0) <= 1e-12, errc::invalid_argument,
            "point cloud weights must sum to 1");
  }
};

struct TransportPlan {
  Eigen::MatrixXd coupling;     // M_a x M_b, nonnegative
  Eigen::MatrixXd ground_cost;  // M_a x M_b
  double cost = 0.0;            // <ground_cost, coupling>
};

// Pairwise Euclidean distances; C(i,j) = |a_i - b_j|_2.
inline Eigen::MatrixXd ground_cost(const PointCloud& a, const PointCloud& b) {
  require(a.dim() == b.dim(), errc::dimension_mismatch,
          "ground_cost: dims " + std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
  Eigen::MatrixXd cost(a.size(), b.size());
  for (Eigen::Index i = 0; i < a.size(); ++i)
    for (Eigen::Index j = 0; j < b.size(); ++j)
      cost(i, j) = (a.points.row(i) - b.points.row(j)).norm();
  return cost;
}

namespace detail {

// Successive-shortest-path solver for the dense balanced transportation
// problem  min <C, P>  s.t.  P 1 = a,  P' 1 = b,  P >= 0.
//
// Dual potentials (u, v) keep all reduced costs C(i,j) - u_i - v_j
// nonnegative, so each augmentation is a Dijkstra run over the residual
// bipartite graph. Augmenting by the exact min of the remaining supply,
// remaining demand and the smallest backward-arc flow makes at least one of
// those quantities exactly zero per round, which is what terminates the loop
// in floating point.
class TransportSolver {
public:
  TransportSolver(const Eigen::MatrixXd& cost, const Eigen::VectorXd& supply,
                  const Eigen::VectorXd& demand)
      : cost_(cost),
        rem_a_(supply),
        rem_b_(demand),
        flow_(Eigen::MatrixXd::Zero(supply.size(), demand.size())),
        pot_a_(Eigen::VectorXd::Zero(supply.size())),
        pot_b_(cost.colwise().minCoeff()),
        n_(supply.size()),
        m_(demand.size()) {}

  Eigen::MatrixXd solve() {
    const std::int64_t max_rounds = 16 * (n_ + m_) * (n_ + m_) + 64;
    std::int64_t rounds = 0;
    while (rem_a_.sum() > 0.0 && rem_b_.sum() > 0.0) {
      require(++rounds <= max_rounds, errc::degenerate,
              "transport solver failed to converge (degenerate instance?)");
      augment_once();
    }
    return flow_;
  }

private:
  static constexpr double kInf = std::numeric_limits<double>::infinity();

  double reduced(Eigen::Index i, Eigen::Index j) const {
    // clamp tiny negative drift so Dijkstra never sees a negative edge
    return std::max(0.0, cost_(i, j) - pot_a_(i) - pot_b_(j));
  }

  void augment_once() {
    dist_a_.assign(static_cast<std::size_t>(n_), kInf);
    dist_b_.assign(static_cast<std::size_t>(m_), kInf);
    done_a_.assign(static_cast<std::size_t>(n_), false);
    done_b_.assign(static_cast<std::size_t>(m_), false);
    parent_of_a_.assign(static_cast<std::size_t>(n_), -1);  // backward arc used
    parent_of_b_.assign(static_cast<std::size_t>(m_), -1);  // forward arc used

    for (Eigen::Index i = 0; i < n_; ++i)
      if (rem_a_(i) > 0.0) dist_a_[static_cast<std::size_t>(i)] = 0.0;

    Eigen::Index target = -1;
    while (target < 0) {
      // settle the unfinished node with the smallest tentative distance
      double best = kInf;
      Eigen::Index best_i = -1, best_j = -1;
      for (Eigen::Index i = 0; i < n_; ++i)
        if (!done_a_[static_cast<std::size_t>(i)] && dist_a_[static_cast<std::size_t>(i)] < best) {
          best = dist_a_[static_cast<std::size_t>(i)];
          best_i = i;
          best_j = -1;
        }
      for (Eigen::Index j = 0; j < m_; ++j)
        if (!done_b_[static_cast<std::size_t>(j)] && dist_b_[static_cast<std::size_t>(j)] < best) {
          best = dist_b_[static_cast<std::size_t>(j)];
          best_i = -1;
          best_j = j;
        }
      require(best < kInf, errc::degenerate, "transport solver: no augmenting path");

      if (best_j >= 0) {
        if (rem_b_(best_j) > 0.0) {
          target = best_j;
          break;
        }
        done_b_[static_cast<std::size_t>(best_j)] = true;
        // backward arcs j -> i exist where flow is positive; their reduced
        // cost is zero by complementary slackness
        for (Eigen::Index i = 0; i < n_; ++i) {
          if (done_a_[static_cast<std::size_t>(i)] || flow_(i, best_j) <= 0.0) continue;
          const double cand = best + std::max(0.0, pot_a_(i) + pot_b_(best_j) - cost_(i, best_j));
          if (cand < dist_a_[static_cast<std::size_t>(i)]) {
            dist_a_[static_cast<std::size_t>(i)] = cand;
            parent_of_a_[static_cast<std::size_t>(i)] = best_j;
          }
        }
      } else {
        done_a_[static_cast<std::size_t>(best_i)] = true;
        for (Eigen::Index j = 0; j < m_; ++j) {
          if (done_b_[static_cast<std::size_t>(j)]) continue;
          const double cand = best + reduced(best_i, j);
          if (cand < dist_b_[static_cast<std::size_t>(j)]) {
            dist_b_[static_cast<std::size_t>(j)] = cand;
            parent_of_b_[static_cast<std::size_t>(j)] = best_i;
          }
        }
      }
    }

    // potential update capped at the target distance keeps reduced costs
    // nonnegative for settled and unsettled nodes alike
    const double horizon = dist_b_[static_cast<std::size_t>(target)];
    for (Eigen::Index i = 0; i < n_; ++i)
      pot_a_(i) -= std::min(dist_a_[static_cast<std::size_t>(i)], horizon);
    for (Eigen::Index j = 0; j < m_; ++j)
      pot_b_(j) += std::min(dist_b_[static_cast<std::size_t>(j)], horizon);

    // walk back to the originating source, collecting the bottleneck
    Eigen::Index j = target;
    Eigen::Index origin = parent_of_b_[static_cast<std::size_t>(j)];
    double delta = std::min(rem_b_(target), kInf);
    while (true) {
      const Eigen::Index i = parent_of_b_[static_cast<std::size_t>(j)];
      const Eigen::Index prev_j = parent_of_a_[static_cast<std::size_t>(i)];
      if (prev_j < 0) {
        origin = i;
        break;
      }
      delta = std::min(delta, flow_(i, prev_j));
      j = prev_j;
    }
    delta = std::min(delta, rem_a_(origin));

    j = target;
    while (true) {
      const Eigen::Index i = parent_of_b_[static_cast<std::size_t>(j)];
      flow_(i, j) += delta;
      const Eigen::Index prev_j = parent_of_a_[static_cast<std::size_t>(i)];
      if (prev_j < 0) break;
      flow_(i, prev_j) -= delta;
      if (flow_(i, prev_j) < 0.0) flow_(i, prev_j) = 0.0;
      j = prev_j;
    }
    rem_a_(origin) -= delta;
    rem_b_(target) -= delta;
    if (rem_a_(origin) < 0.0) rem_a_(origin) = 0.0;
    if (rem_b_(target) < 0.0) rem_b_(target) = 0.0;
  }

  const Eigen::MatrixXd& cost_;
  Eigen::VectorXd rem_a_, rem_b_;
  Eigen::MatrixXd flow_;
  Eigen::VectorXd pot_a_, pot_b_;
  Eigen::Index n_, m_;

  std::vector<double> dist_a_, dist_b_;
  std::vector<char> done_a_, done_b_;
  std::vector<Eigen::Index> parent_of_a_, parent_of_b_;
};

}  // namespace detail

// Exact Earth Mover's Distance between two weighted clouds.
inline TransportPlan emd_exact(const PointCloud& a, const PointCloud& b) {
  a.validate();
  b.validate();
  require(a.dim() == b.dim(), errc::dimension_mismatch,
          "emd_exact: dims " + std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
  TransportPlan plan;
  plan.ground_cost = ground_cost(a, b);
  detail::TransportSolver solver(plan.ground_cost, a.weights, b.weights);
  plan.coupling = solver.solve();
  plan.cost = plan.coupling.cwiseProduct(plan.ground_cost).sum();
  return plan;
}

enum class SinkhornMode { automatic, plain, logdomain };

struct SinkhornResult {
  TransportPlan plan;
  bool converged = false;
  int iterations = 0;
};

namespace detail {

inline Eigen::VectorXd logsumexp_rows(const Eigen::MatrixXd& m) {
  const Eigen::VectorXd shift = m.rowwise().maxCoeff();
  return shift.array() +
         (m.colwise() - shift).array().exp().rowwise().sum().log();
}

}  // namespace detail

// Entropic-regularized transport by alternating marginal scaling. Runs in the
// log domain when exp(-C/epsilon) would underflow (max(C)/epsilon > 500),
// otherwise with plain kernel scaling. The reported cost is the unregularized
// <C, P> of the regularized coupling. Convergence means the combined L1
// violation of both marginals dropped to `tol`.
inline SinkhornResult emd_sinkhorn(const PointCloud& a, const PointCloud& b, double epsilon,
                                   int max_iters = 10000, double tol = 1e-9,
                                   SinkhornMode mode = SinkhornMode::automatic) {
  a.validate();
  b.validate();
  require(a.dim() == b.dim(), errc::dimension_mismatch,
          "emd_sinkhorn: dims " + std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
  require(epsilon > 0.0, errc::invalid_argument, "emd_sinkhorn: epsilon must be positive");
  require(max_iters >= 1, errc::invalid_argument, "emd_sinkhorn: max_iters must be positive");

  SinkhornResult res;
  res.plan.ground_cost = ground_cost(a, b);
  const Eigen::MatrixXd& cost = res.plan.ground_cost;

  if (mode == SinkhornMode::automatic) {
    mode = (cost.maxCoeff() / epsilon > 500.0) ? SinkhornMode::logdomain : SinkhornMode::plain;
  }

  const Eigen::VectorXd& wa = a.weights;
  const Eigen::VectorXd& wb = b.weights;

  if (mode == SinkhornMode::plain) {
    // vectorized exp clamps below exp(log(DBL_MIN)) instead of flushing to
    // zero, which would silently turn the kernel into a constant matrix
    require(cost.maxCoeff() / epsilon <= -std::log(std::numeric_limits<double>::min()),
            errc::numerical_underflow,
            "emd_sinkhorn: exp(-cost/epsilon) underflows, epsilon too small for this cost scale");
    const Eigen::MatrixXd kernel = (-cost / epsilon).array().exp();
    Eigen::VectorXd u = Eigen::VectorXd::Ones(a.size());
    Eigen::VectorXd v = Eigen::VectorXd::Ones(b.size());
    for (int it = 1; it <= max_iters; ++it) {
      const Eigen::VectorXd kv = kernel * v;
      if (!(kv.array() > 0.0).all() || !kv.allFinite())
        raise(errc::numerical_underflow,
              "emd_sinkhorn: kernel underflow, epsilon too small for this cost scale");
      u = wa.cwiseQuotient(kv);
      const Eigen::VectorXd ku = kernel.transpose() * u;
      if (!(ku.array() > 0.0).all() || !ku.allFinite())
        raise(errc::numerical_underflow,
              "emd_sinkhorn: kernel underflow, epsilon too small for this cost scale");
      v = wb.cwiseQuotient(ku);

      res.iterations = it;
      const double err = (u.cwiseProduct(kernel * v) - wa).cwiseAbs().sum() +
                         (v.cwiseProduct(kernel.transpose() * u) - wb).cwiseAbs().sum();
      if (err <= tol) {
        res.converged = true;
        break;
      }
    }
    res.plan.coupling = u.asDiagonal() * kernel * v.asDiagonal();
  } else {
    const Eigen::VectorXd log_a = wa.array().log();
    const Eigen::VectorXd log_b = wb.array().log();
    Eigen::VectorXd f = Eigen::VectorXd::Zero(a.size());
    Eigen::VectorXd g = Eigen::VectorXd::Zero(b.size());
    Eigen::MatrixXd plan(a.size(), b.size());
    for (int it = 1; it <= max_iters; ++it) {
      // row update on the dual potentials, then column update
      Eigen::MatrixXd scratch = ((-cost).rowwise() + g.transpose()) / epsilon;
      f = epsilon * (log_a - detail::logsumexp_rows(scratch));
      scratch = ((-cost).colwise() + f) / epsilon;
      g = epsilon * (log_b - detail::logsumexp_rows(scratch.transpose()));

      plan = (((-cost).colwise() + f).rowwise() + g.transpose()) / epsilon;
      plan = plan.array().exp();
      if (!plan.allFinite())
        raise(errc::numerical_underflow, "emd_sinkhorn: log-domain iteration diverged");

      res.iterations = it;
      const double err = (plan.rowwise().sum() - wa).cwiseAbs().sum() +
                         (plan.colwise().sum().transpose() - wb).cwiseAbs().sum();
      if (err <= tol) {
        res.converged = true;
        break;
      }
    }
    res.plan.coupling = plan;
  }

  res.plan.cost = res.plan.coupling.cwiseProduct(cost).sum();
  return res;
}

// Flattened snippet rows of a set, optionally capped at max_points by a
// seeded uniform draw without replacement. Weights are uniform either way.
inline PointCloud subsample(const features::FeatureSet& set, Eigen::Index max_points,
                            std::uint64_t seed) {
  const Eigen::Index rows = set.total_snippets();
  require(rows >= 1, errc::empty_set, "subsample: feature set has no snippets");
  require(max_points >= 1, errc::invalid_argument, "subsample: max_points must be positive");
  const Eigen::MatrixXd all = features::flatten_snippets(set);
  if (rows <= max_points) return PointCloud::uniform(all);

  Rng rng(seed);
  auto picks = rng.sample_without_replacement(static_cast<std::size_t>(rows),
                                              static_cast<std::size_t>(max_points));
  std::sort(picks.begin(), picks.end());
  Eigen::MatrixXd chosen(max_points, all.cols());
  for (Eigen::Index i = 0; i < max_points; ++i)
    chosen.row(i) = all.row(static_cast<Eigen::Index>(picks[static_cast<std::size_t>(i)]));
  return PointCloud::uniform(chosen);
}

enum class GapSolver { exact, sinkhorn };

struct GapConfig {
  Eigen::Index max_points = 2000;
  std::uint64_t seed = 0;
  GapSolver solver = GapSolver::exact;
  double epsilon = 0.01;   // used by the sinkhorn solver only
  int max_iters = 10000;
  double tol = 1e-9;
};

struct GapResult {
  double value = 0.0;
  GapSolver solver = GapSolver::exact;
  std::optional<double> epsilon;
  Eigen::Index max_points = 0;
  std::uint64_t seed = 0;
  Eigen::Index points_a = 0;
  Eigen::Index points_b = 0;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["value"] = value;
    j["solver"] = solver == GapSolver::exact ? "exact" : "sinkhorn";
    if (epsilon)
      j["epsilon"] = *epsilon;
    else
      j["epsilon"] = nullptr;
    j["max_points"] = max_points;
    j["seed"] = seed;
    j["points_a"] = points_a;
    j["points_b"] = points_b;
    return j;
  }
};

// Domain gap between two datasets: EMD between their (possibly subsampled)
// snippet-feature distributions.
inline GapResult domain_gap(const features::FeatureSet& a, const features::FeatureSet& b,
                            const GapConfig& cfg = {}) {
  require(a.dim == b.dim, errc::dimension_mismatch,
          "domain_gap: dims " + std::to_string(a.dim) + " vs " + std::to_string(b.dim));
  const PointCloud ca = subsample(a, cfg.max_points, derive_seed(cfg.seed, 0));
  const PointCloud cb = subsample(b, cfg.max_points, derive_seed(cfg.seed, 1));

  GapResult out;
  out.solver = cfg.solver;
  out.max_points = cfg.max_points;
  out.seed = cfg.seed;
  out.points_a = ca.size();
  out.points_b = cb.size();
  if (cfg.solver == GapSolver::exact) {
    out.value = emd_exact(ca, cb).cost;
  } else {
    out.epsilon = cfg.epsilon;
    out.value = emd_sinkhorn(ca, cb, cfg.epsilon, cfg.max_iters, cfg.tol).plan.cost;
  }
  return out;
}

}  // namespace fsgap::ot
