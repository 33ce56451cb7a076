#pragma once

#include <cstdint>
#include <string>

#include <Eigen/Dense>

#include "fsgap/error.hpp"
#include "fsgap/features.hpp"
#include "fsgap/rng.hpp"

namespace fsgap::synth {

// n x d matrix of independent Gaussian rows centered on mean.
inline Eigen::MatrixXd gaussian_points(Eigen::Index n, Eigen::Index d, double sigma,
                                       const Eigen::VectorXd& mean, std::uint64_t seed) {
  require(n >= 1 && d >= 1, errc::invalid_argument, "gaussian_points: empty shape");
  require(mean.size() == 0 || mean.size() == d, errc::dimension_mismatch,
          "gaussian_points: mean size mismatch");
  Rng rng(seed);
  Eigen::MatrixXd pts(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j)
      pts(i, j) = (mean.size() ? mean(j) : 0.0) + sigma * rng.normal();
  return pts;
}

struct BlobSpec {
  Eigen::Index videos = 8;
  Eigen::Index snippets = 8;  // K
  Eigen::Index frames = 1;    // L
  Eigen::Index dim = 16;
  double sigma = 1.0;
  Eigen::VectorXd mean;  // empty means the origin
  std::string name = "synthetic";
  std::string id_prefix = "vid";
};

// One Gaussian blob rendered as a feature set: every frame vector of every
// snippet is an independent draw around the blob mean.
inline features::FeatureSet gaussian_set(const BlobSpec& spec, std::uint64_t seed) {
  require(spec.videos >= 1 && spec.snippets >= 1 && spec.frames >= 1 && spec.dim >= 1,
          errc::invalid_argument, "gaussian_set: empty shape");
  require(spec.mean.size() == 0 || spec.mean.size() == spec.dim, errc::dimension_mismatch,
          "gaussian_set: mean size mismatch");
  features::FeatureSet set;
  set.name = spec.name;
  set.dim = spec.dim;
  for (Eigen::Index v = 0; v < spec.videos; ++v) {
    features::VideoFeatures vf;
    vf.video_id = spec.id_prefix + "_" + std::to_string(v);
    vf.num_snippets = spec.snippets;
    vf.frames_per_snippet = spec.frames;
    vf.dim = spec.dim;
    vf.data.resize(static_cast<std::size_t>(spec.snippets * spec.frames * spec.dim));
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(v)));
    std::size_t pos = 0;
    for (Eigen::Index k = 0; k < spec.snippets; ++k)
      for (Eigen::Index l = 0; l < spec.frames; ++l)
        for (Eigen::Index j = 0; j < spec.dim; ++j)
          vf.data[pos++] = (spec.mean.size() ? spec.mean(j) : 0.0) + spec.sigma * rng.normal();
    set.videos.push_back(std::move(vf));
  }
  return set;
}

struct LabeledSpec {
  Eigen::Index videos_class0 = 17;  // GRS 19..24, cycling
  Eigen::Index videos_class1 = 16;  // GRS 25..30, cycling
  Eigen::Index snippets = 8;
  Eigen::Index frames = 1;
  Eigen::Index dim = 16;
  double separation = 10.0;  // distance between class means, in sigma units
  double sigma = 1.0;
  std::string name = "synthetic-labeled";
};

// Two labeled Gaussian classes whose means sit symmetrically about the
// origin, the separation spread evenly over all axes: every coordinate then
// carries class signal, which keeps the task learnable at small step budgets
// instead of hinging on the random init of a single direction. GRS values
// cycle through each class's score band so both classes span their range.
inline features::FeatureSet labeled_set(const LabeledSpec& spec, std::uint64_t seed) {
  require(spec.dim >= 1, errc::invalid_argument, "labeled_set: dim must be positive");
  const double shift =
      0.5 * spec.separation * spec.sigma / std::sqrt(static_cast<double>(spec.dim));
  const Eigen::VectorXd mean0 = Eigen::VectorXd::Constant(spec.dim, -shift);
  const Eigen::VectorXd mean1 = Eigen::VectorXd::Constant(spec.dim, shift);

  BlobSpec blob;
  blob.snippets = spec.snippets;
  blob.frames = spec.frames;
  blob.dim = spec.dim;
  blob.sigma = spec.sigma;
  blob.name = spec.name;

  blob.videos = spec.videos_class0;
  blob.mean = mean0;
  blob.id_prefix = "prof";
  features::FeatureSet set = gaussian_set(blob, derive_seed(seed, 101));
  for (Eigen::Index v = 0; v < spec.videos_class0; ++v)
    set.videos[static_cast<std::size_t>(v)].grs = 19 + static_cast<int>(v % 6);

  blob.videos = spec.videos_class1;
  blob.mean = mean1;
  blob.id_prefix = "exp";
  features::FeatureSet experts = gaussian_set(blob, derive_seed(seed, 202));
  for (Eigen::Index v = 0; v < spec.videos_class1; ++v)
    experts.videos[static_cast<std::size_t>(v)].grs = 25 + static_cast<int>(v % 6);

  for (auto& vf : experts.videos) set.videos.push_back(std::move(vf));
  return set;
}

}  // namespace fsgap::synth
