#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "fedguard/config.hpp"
#include "fedguard/rng.hpp"

using namespace fedguard;

namespace {

bool mentions(const std::vector<std::string>& problems, const std::string& needle) {
  return std::any_of(problems.begin(), problems.end(),
                     [&](const std::string& p) { return p.find(needle) != std::string::npos; });
}

}  // namespace

TEST_CASE("derived seeds depend on every key component") {
  const auto base = derive_seed(7, "select", 1, 2);
  CHECK(base == derive_seed(7, "select", 1, 2));
  CHECK(base != derive_seed(8, "select", 1, 2));
  CHECK(base != derive_seed(7, "local-sgd", 1, 2));
  CHECK(base != derive_seed(7, "select", 2, 1));
  CHECK(base != derive_seed(7, "select", 1, 3));
  CHECK(tag_hash("") == 0xcbf29ce484222325ULL);
}

TEST_CASE("rng draws are reproducible and in range") {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) {
    const double u = a.uniform();
    CHECK(u == b.uniform());
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) ++counts[a.below(7)];
  for (int c : counts) CHECK(std::abs(c - 10000) < 500);
}

TEST_CASE("normal draws have unit moments") {
  Rng r(3);
  double s = 0, s2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    s += x;
    s2 += x * x;
  }
  CHECK(std::fabs(s / n) < 0.01);
  CHECK(std::fabs(s2 / n - 1.0) < 0.02);
}

TEST_CASE("sampling without replacement and shuffling") {
  Rng r(5);
  for (int t = 0; t < 50; ++t) {
    const auto idx = r.sample_without_replacement(30, 12);
    CHECK(idx.size() == 12);
    CHECK(std::set<std::size_t>(idx.begin(), idx.end()).size() == 12);
    for (auto i : idx) CHECK(i < 30);
  }
  CHECK(r.sample_without_replacement(5, 5).size() == 5);
  std::vector<int> v{1, 2, 3, 4, 5, 6};
  r.shuffle(v);
  std::sort(v.begin(), v.end());
  CHECK(v == std::vector<int>{1, 2, 3, 4, 5, 6});
}

TEST_CASE("defaults validate") {
  ExperimentConfig c;
  CHECK(config_problems(c).empty());
  CHECK_NOTHROW(validate_config(c));
}

TEST_CASE("reference protocol settings validate") {
  ExperimentConfig c;
  c.federation.num_clients = 100;
  c.federation.participation_fraction = 0.10;
  c.federation.rounds = 200;
  c.federation.malicious_fraction = 0.20;
  c.federation.forensic_window = 10;
  c.federation.confidence_level = 0.99;
  CHECK(config_problems(c).empty());
  CHECK(c.federation.num_malicious() == 20);
}

TEST_CASE("too few participants per round") {
  ExperimentConfig c;
  c.federation.num_clients = 10;
  c.federation.participation_fraction = 0.05;
  CHECK(mentions(config_problems(c), "N·k < 2"));
}

TEST_CASE("malicious fraction bounds and integrality") {
  ExperimentConfig c;
  c.federation.malicious_fraction = 0.5;
  CHECK(mentions(config_problems(c), "m must be < 0.5"));
  c.federation.malicious_fraction = 0.21;
  CHECK(mentions(config_problems(c), "integer"));
}

TEST_CASE("every violated invariant is reported at once") {
  ExperimentConfig c;
  c.federation.num_clients = 10;
  c.federation.participation_fraction = 0.05;
  c.federation.malicious_fraction = 0.5;
  c.federation.forensic_window = 1;
  c.federation.temporal_window = 0;
  c.federation.confidence_level = 0.9;
  const auto p = config_problems(c);
  CHECK(p.size() >= 5);
  try {
    validate_config(c);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.problems() == p);
  }
}

TEST_CASE("validation is idempotent") {
  ExperimentConfig c;
  c.attack.poison_type = PoisonType::BBox;
  const auto once = validate_config(c);
  const auto twice = validate_config(once);
  CHECK(to_json(once) == to_json(twice));
}

TEST_CASE("config json round trip and partial files") {
  ExperimentConfig c;
  c.federation.rounds = 37;
  c.attack.poison_type = PoisonType::Objn;
  c.attack.beta = 0.1;
  c.defense.name = DefenseKind::Spectral;
  c.defense.removal_fraction = 0.3;
  const auto back = config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));

  const auto partial = config_from_json(nlohmann::json::parse(R"({"federation":{"rounds":5}})"));
  CHECK(partial.federation.rounds == 5);
  CHECK(partial.federation.num_clients == ExperimentConfig{}.federation.num_clients);
}

TEST_CASE("unknown keys and type mismatches are hard errors") {
  CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"federation":{"round":5}})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"extras":{}})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"federation":{"rounds":"ten"}})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"attack":{"poison_type":"label"}})")), ConfigError);
}

TEST_CASE("load_config reads a file") {
  const std::string path = "test_core_config.json";
  std::ofstream(path) << R"({"defense":{"name":"stdlens","clustering":"agglomerative"}})";
  const auto c = load_config(path);
  CHECK(c.defense.name == DefenseKind::Stdlens);
  CHECK(c.defense.clustering == ClusterAlgo::Agglomerative);
  CHECK_THROWS(load_config("does/not/exist.json"));
}

TEST_CASE("enum names round trip") {
  for (auto p : {PoisonType::None, PoisonType::Class, PoisonType::BBox, PoisonType::Objn})
    CHECK(parse_poison_type(to_string(p)) == p);
  for (auto d : {DefenseKind::None, DefenseKind::Stdlens, DefenseKind::Spatial, DefenseKind::Spectral})
    CHECK(parse_defense_kind(to_string(d)) == d);
  for (auto a : {ClusterAlgo::KMeans, ClusterAlgo::Agglomerative, ClusterAlgo::Spectral})
    CHECK(parse_cluster_algo(to_string(a)) == a);
  for (auto r : {RoundCentering::None, RoundCentering::Mean, RoundCentering::Median})
    CHECK(parse_round_centering(to_string(r)) == r);
}

TEST_CASE("confidence levels map to sigma multipliers") {
  CHECK(sigma_multiplier(0.68) == 1);
  CHECK(sigma_multiplier(0.95) == 2);
  CHECK(sigma_multiplier(0.99) == 3);
  CHECK(sigma_multiplier(0.9) == 0);
}
