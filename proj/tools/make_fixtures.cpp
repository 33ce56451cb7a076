// Regenerates the bundled fixtures/ data: a 33-video labeled set with two
// well-separated skill classes, and two small unlabeled snippet clouds for
// the gap command. Fully deterministic; rerunning reproduces the same bytes.
#include <filesystem>
#include <iostream>

#include <fsgap/fsgap.hpp>

int main(int argc, char** argv) {
  const std::filesystem::path root = argc > 1 ? argv[1] : "fixtures";
  using namespace fsgap;

  synth::LabeledSpec labeled;
  labeled.videos_class0 = 17;
  labeled.videos_class1 = 16;
  labeled.snippets = 8;
  labeled.frames = 16;
  labeled.dim = 128;
  labeled.separation = 10.0;
  labeled.sigma = 1.0;
  labeled.name = "skill33";
  features::save_feature_set(synth::labeled_set(labeled, 12021), root / "skill33");

  // Two 64-snippet clouds sized so the mean pairwise distance sits near 0.8,
  // which makes epsilon = 0.001 a realistic entropic regularization.
  synth::BlobSpec blob;
  blob.videos = 8;
  blob.snippets = 8;
  blob.frames = 1;
  blob.dim = 16;
  blob.sigma = 0.14;
  blob.name = "cloudA";
  features::save_feature_set(synth::gaussian_set(blob, 501), root / "cloudA");

  blob.name = "cloudB";
  blob.mean = Eigen::VectorXd::Zero(blob.dim);
  blob.mean(0) = 0.3;
  features::save_feature_set(synth::gaussian_set(blob, 502), root / "cloudB");

  std::cout << "fixtures written under " << root.string() << "\n";
  return 0;
}
