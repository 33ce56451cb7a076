#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include <fsgap/features.hpp>
#include <fsgap/synth.hpp>

#include "helpers.hpp"

namespace {

const std::string kCli = FSGAP_CLI_PATH;
const std::string kFixtures = FSGAP_FIXTURES_DIR;

std::string fixture(const std::string& name) { return kFixtures + "/" + name + "/manifest.json"; }

nlohmann::json parse_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  nlohmann::json doc;
  in >> doc;
  return doc;
}

void write_report(const std::filesystem::path& path, const std::string& head, int shots,
                  double acc, double f1) {
  nlohmann::json doc;
  doc["config"] = {{"head", head}, {"shots", shots}};
  doc["mean_accuracy"] = acc;
  doc["std_accuracy"] = 1.0;
  doc["mean_f1"] = f1;
  doc["std_f1"] = 1.0;
  std::ofstream out(path);
  out << doc.dump(2) << "\n";
}

}  // namespace

TEST_CASE("selftest passes", "[cli]") {
  const auto r = testutil::run(kCli + " selftest");
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("all checks passed") != std::string::npos);
  CHECK(r.out.find("FAIL") == std::string::npos);
}

TEST_CASE("gap command end to end", "[cli]") {
  testutil::TempDir tmp;

  SECTION("a set against itself has zero gap") {
    const auto out = tmp / "gap.json";
    const auto r = testutil::run(kCli + " gap --a " + fixture("cloudA") + " --b " +
                                 fixture("cloudA") + " --out " + out.string());
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("gap 0.0 (exact") != std::string::npos);
    const auto doc = parse_file(out);
    CHECK(doc["value"] == 0.0);
    CHECK(doc["solver"] == "exact");
    CHECK(doc["epsilon"].is_null());
  }
  SECTION("sinkhorn lands near the exact value") {
    const auto exact_out = tmp / "exact.json";
    const auto sk_out = tmp / "sk.json";
    REQUIRE(testutil::run(kCli + " gap --a " + fixture("cloudA") + " --b " + fixture("cloudB") +
                          " --out " + exact_out.string())
                .exit_code == 0);
    REQUIRE(testutil::run(kCli + " gap --a " + fixture("cloudA") + " --b " + fixture("cloudB") +
                          " --solver sinkhorn --epsilon 0.001 --out " + sk_out.string())
                .exit_code == 0);
    const double exact = parse_file(exact_out)["value"].get<double>();
    const double sk = parse_file(sk_out)["value"].get<double>();
    CHECK(exact > 0.0);
    CHECK(std::abs(sk - exact) <= 0.02 * exact);
    CHECK(parse_file(sk_out)["epsilon"] == 0.001);
  }
  SECTION("mismatched feature dimensions are a data error") {
    const auto r =
        testutil::run(kCli + " gap --a " + fixture("cloudA") + " --b " + fixture("skill33"));
    CHECK(r.exit_code == 3);
    CHECK(r.err.find("error:") != std::string::npos);
  }
  SECTION("missing manifest is a data error") {
    const auto r = testutil::run(kCli + " gap --a " + (tmp / "nope.json").string() + " --b " +
                                 fixture("cloudA"));
    CHECK(r.exit_code == 3);
  }
  SECTION("nonpositive epsilon is a config error") {
    const auto r = testutil::run(kCli + " gap --a " + fixture("cloudA") + " --b " +
                                 fixture("cloudB") + " --solver sinkhorn --epsilon 0");
    CHECK(r.exit_code == 2);
  }
}

TEST_CASE("eval command end to end", "[cli]") {
  testutil::TempDir tmp;
  const std::string base = kCli + " eval --manifest " + fixture("skill33");

  SECTION("report and stdout summary") {
    const auto out = tmp / "report.json";
    const auto r =
        testutil::run(base + " --episodes 5 --shots 5 --seed 3 --out " + out.string());
    REQUIRE(r.exit_code == 0);
    CHECK(r.out.find("acc ") == 0);
    CHECK(r.out.find(" ± ") != std::string::npos);
    CHECK(r.out.find(" / f1 ") != std::string::npos);
    const auto doc = parse_file(out);
    CHECK(doc["config"]["head"] == "linear");
    CHECK(doc["config"]["episodes"] == 5);
    CHECK(doc["per_episode"].size() == 5);
    // the synthetic task is fully separable, so the protocol should ace it
    CHECK(doc["mean_accuracy"].get<double>() == 100.0);
  }
  SECTION("reruns produce identical bytes") {
    const auto a = tmp / "a.json";
    const auto b = tmp / "b.json";
    REQUIRE(testutil::run(base + " --episodes 3 --seed 7 --out " + a.string()).exit_code == 0);
    REQUIRE(testutil::run(base + " --episodes 3 --seed 7 --threads 4 --out " + b.string())
                .exit_code == 0);
    CHECK(testutil::slurp(a) == testutil::slurp(b));
  }
  SECTION("nonstandard shot counts need an explicit override") {
    CHECK(testutil::run(base + " --episodes 1 --shots 3").exit_code == 2);
    CHECK(testutil::run(base + " --episodes 1 --shots 3 --any-shots").exit_code == 0);
  }
  SECTION("missing manifest is a data error") {
    const auto r = testutil::run(kCli + " eval --manifest " + (tmp / "nope.json").string());
    CHECK(r.exit_code == 3);
  }
  SECTION("unlabeled videos are a config error") {
    fsgap::synth::BlobSpec spec;
    spec.videos = 6;
    const auto set = fsgap::synth::gaussian_set(spec, 1);
    const auto manifest = fsgap::features::save_feature_set(set, tmp / "unlabeled");
    const auto r = testutil::run(kCli + " eval --manifest " + manifest.string() + " --episodes 1");
    CHECK(r.exit_code == 2);
    CHECK(r.err.find("GRS") != std::string::npos);
  }
  SECTION("evaluation does not touch its inputs") {
    const auto before = testutil::slurp(fixture("skill33"));
    const auto probe = testutil::slurp(kFixtures + "/skill33/prof_0.fsfb");
    REQUIRE(testutil::run(base + " --episodes 2").exit_code == 0);
    CHECK(testutil::slurp(fixture("skill33")) == before);
    CHECK(testutil::slurp(kFixtures + "/skill33/prof_0.fsfb") == probe);
  }
}

TEST_CASE("config files merge beneath command line flags", "[cli]") {
  testutil::TempDir tmp;
  const auto cfg_path = tmp / "cfg.json";
  const auto out = tmp / "report.json";

  {
    nlohmann::json cfg;
    cfg["manifest"] = fixture("skill33");
    cfg["episodes"] = 3;
    cfg["shots"] = 5;
    cfg["seed"] = 11;
    std::ofstream f(cfg_path);
    f << cfg.dump();
  }

  SECTION("config alone supplies everything") {
    const auto r = testutil::run(kCli + " eval --config " + cfg_path.string() + " --out " +
                                 out.string());
    REQUIRE(r.exit_code == 0);
    CHECK(parse_file(out)["config"]["episodes"] == 3);
  }
  SECTION("flags win over config values") {
    const auto r = testutil::run(kCli + " eval --config " + cfg_path.string() +
                                 " --episodes 2 --out " + out.string());
    REQUIRE(r.exit_code == 0);
    const auto doc = parse_file(out);
    CHECK(doc["config"]["episodes"] == 2);
    CHECK(doc["config"]["seed"] == 11);
  }
  SECTION("unknown keys are rejected") {
    nlohmann::json cfg;
    cfg["manifest"] = fixture("skill33");
    cfg["episoddes"] = 3;
    std::ofstream(cfg_path) << cfg.dump();
    CHECK(testutil::run(kCli + " eval --config " + cfg_path.string()).exit_code == 2);
  }
  SECTION("malformed config file") {
    std::ofstream(cfg_path) << "{not json";
    CHECK(testutil::run(kCli + " eval --config " + cfg_path.string()).exit_code == 2);
  }
}

TEST_CASE("gains command end to end", "[cli]") {
  testutil::TempDir tmp;
  const auto comb = tmp / "comb";
  const auto solo = tmp / "solo";
  std::filesystem::create_directories(comb);
  std::filesystem::create_directories(solo);
  write_report(comb / "linear1.json", "linear", 1, 61.0, 60.5);
  write_report(comb / "linear5.json", "linear", 5, 67.0, 66.5);
  write_report(comb / "tcn5.json", "tcn", 5, 75.0, 74.5);
  write_report(solo / "linear1.json", "linear", 1, 60.0, 61.0);
  write_report(solo / "linear5.json", "linear", 5, 66.0, 67.0);
  write_report(solo / "tcn5.json", "tcn", 5, 74.0, 75.0);

  const std::string base = kCli + " gains --combined " + comb.string();

  SECTION("csv of averaged cell differences") {
    const auto out = tmp / "gains.csv";
    const auto r =
        testutil::run(base + " --baseline " + solo.string() + " --out " + out.string());
    REQUIRE(r.exit_code == 0);
    const std::string expect =
        "comparison,avg_accuracy_gain,avg_f1_gain\ncomb vs solo,+1.00,-0.50\n";
    CHECK(r.out == expect);
    CHECK(testutil::slurp(out) == expect);
  }
  SECTION("a set compared to itself gains nothing") {
    const auto r = testutil::run(base + " --baseline " + comb.string());
    REQUIRE(r.exit_code == 0);
    CHECK(r.out.find("comb vs comb,+0.00,+0.00") != std::string::npos);
  }
  SECTION("several baselines give one row each") {
    const auto r = testutil::run(base + " --baseline " + solo.string() + " --baseline " +
                                 comb.string());
    REQUIRE(r.exit_code == 0);
    CHECK(r.out.find("comb vs solo,") != std::string::npos);
    CHECK(r.out.find("comb vs comb,") != std::string::npos);
  }
  SECTION("missing cells are a data error") {
    std::filesystem::remove(solo / "tcn5.json");
    CHECK(testutil::run(base + " --baseline " + solo.string()).exit_code == 3);
  }
  SECTION("a non-report json is a data error") {
    std::ofstream(solo / "junk.json") << "{\"foo\": 1}";
    CHECK(testutil::run(base + " --baseline " + solo.string()).exit_code == 3);
  }
  SECTION("missing directory is a data error") {
    CHECK(testutil::run(base + " --baseline " + (tmp / "nope").string()).exit_code == 3);
  }
  SECTION("at least one baseline is required") {
    CHECK(testutil::run(base).exit_code == 2);
  }
}

TEST_CASE("bad invocations exit with the config code", "[cli]") {
  CHECK(testutil::run(kCli).exit_code == 2);
  CHECK(testutil::run(kCli + " gap").exit_code == 2);
  CHECK(testutil::run(kCli + " eval --manifest " + fixture("skill33") + " --episodes 0")
            .exit_code == 2);
  CHECK(testutil::run(kCli + " frobnicate").exit_code == 2);
  const auto help = testutil::run(kCli + " --help");
  CHECK(help.exit_code == 0);
  CHECK(help.out.find("gap") != std::string::npos);
}
