#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "fedguard/baselines.hpp"
#include "fedguard/forensics.hpp"
#include "fedguard/robust_stats.hpp"

using namespace fedguard;

namespace {

// ids 0..honest-1 near the origin, the next `poisoned` ids shifted by `shift` along axis 0
std::vector<GradientContribution> two_groups(int honest, int poisoned, double shift, std::uint64_t seed,
                                             int rounds = 1, double poisoned_jitter = 1.0) {
  Rng r(seed);
  std::vector<GradientContribution> cs;
  for (int round = 0; round < rounds; ++round)
    for (int id = 0; id < honest + poisoned; ++id) {
      std::vector<double> b(6);
      for (auto& x : b) x = r.normal() * (id >= honest ? poisoned_jitter : 1.0);
      if (id >= honest) b[0] += shift;
      cs.push_back({id, round, 0, b});
    }
  return cs;
}

std::vector<std::vector<double>> blocks_of(const std::vector<GradientContribution>& cs) {
  std::vector<std::vector<double>> b;
  for (const auto& c : cs) b.push_back(c.block);
  return b;
}

SynthStream premise_window(std::uint64_t seed) {
  Rng rng(seed);
  const auto mix = random_premise_mixture(8, 0.2, 1.0, rng);
  return synth_two_population_stream(mix, 50, 0.2, 10, default_drift(mix, rng), rng);
}

}  // namespace

TEST_CASE("spectral top scores are the poisoned contributions") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto cs = two_groups(40, 10, 15.0, seed);
    auto scores = spectral_scores(blocks_of(cs));
    REQUIRE(scores.size() == cs.size());
    std::sort(scores.begin(), scores.end(), [](auto a, auto b) { return a.score > b.score; });
    std::set<int> top;
    for (int i = 0; i < 10; ++i) top.insert(cs[scores[i].index].client_id);
    CHECK(top == std::set<int>{40, 41, 42, 43, 44, 45, 46, 47, 48, 49});
  }
}

TEST_CASE("spectral signature on identical contributions") {
  std::vector<GradientContribution> cs;
  for (int id = 0; id < 10; ++id) cs.push_back({id * 3, 0, 0, {1.0, -2.0, 0.5}});
  for (const auto& s : spectral_scores(blocks_of(cs))) CHECK(s.score == doctest::Approx(0.0));
  // ties fall back to list order
  CHECK(defense_spectral_signature(cs, 0.3) == std::vector<int>{0, 3, 6});
  CHECK(defense_spectral_signature(cs, 0.0).empty());
}

TEST_CASE("spectral removal budget exceeds a smaller poisoned share") {
  const auto cs = two_groups(40, 10, 15.0, 3);
  const auto out = defense_spectral_signature(cs, 0.3);
  CHECK(out.size() == 15);
  int honest = 0;
  for (int id : out) honest += id < 40;
  CHECK(honest == 5);
  for (int id = 40; id < 50; ++id) CHECK(std::binary_search(out.begin(), out.end(), id));
}

TEST_CASE("smaller-cluster rule revokes the minority") {
  for (std::uint64_t seed = 0; seed < 10; ++seed)
    CHECK(defense_spatial_smaller_cluster(two_groups(40, 10, 15.0, seed)) ==
          std::vector<int>{40, 41, 42, 43, 44, 45, 46, 47, 48, 49});
}

TEST_CASE("smaller-cluster rule revokes nobody on equal sizes") {
  const auto cs = two_groups(10, 10, 30.0, 4);
  CHECK(defense_spatial_smaller_cluster(cs).empty());
}

TEST_CASE("clean separation: smaller cluster matches the forensic verdict") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto cs = two_groups(40, 10, 20.0, seed, 10, 0.05);
    SmallerClusterDefense spatial(2.0, 0, RoundCentering::Median);
    ForensicDefense forensic{ForensicParams{}};
    const auto a = spatial.on_window(0, cs).revoked;
    CHECK(a == std::vector<int>{40, 41, 42, 43, 44, 45, 46, 47, 48, 49});
    CHECK(a == forensic.on_window(0, cs).revoked);
  }
}

TEST_CASE("baselines are stateless across windows") {
  const auto s = premise_window(500);
  const auto other = premise_window(501);
  SmallerClusterDefense spatial(2.0, 0, RoundCentering::Median);
  SpectralSignatureDefense spectral(2.0, 0.3, RoundCentering::Median);
  for (Defense* d : std::initializer_list<Defense*>{&spatial, &spectral}) {
    const auto first = d->on_window(0, s.contributions);
    d->on_window(1, other.contributions);
    const auto again = d->on_window(0, s.contributions);
    CHECK(first.revoked == again.revoked);
    CHECK(first.flagged_classes == again.flagged_classes);
  }
}

TEST_CASE("unflagged classes are not inspected") {
  // one Gaussian blob per round: nothing separates, so nothing is revoked
  Rng r(6);
  std::vector<GradientContribution> cs;
  for (int round = 0; round < 10; ++round)
    for (int id = 0; id < 30; ++id) cs.push_back({id, round, 0, {r.normal(), r.normal(), r.normal()}});
  SpectralSignatureDefense spectral(2.0, 0.3);
  const auto v = spectral.on_window(0, cs);
  CHECK(v.flagged_classes.empty());
  CHECK(v.revoked.empty());
}

TEST_CASE("spectral signature over-revokes with a smaller poisoned share") {
  int imprecise = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto s = premise_window(600 + seed);
    SpectralSignatureDefense spectral(2.0, 0.3, RoundCentering::Median);
    const auto revoked = spectral.on_window(0, s.contributions).revoked;
    const std::set<int> mal(s.malicious.begin(), s.malicious.end());
    imprecise += std::any_of(revoked.begin(), revoked.end(), [&](int id) { return !mal.count(id); });
  }
  CHECK(imprecise >= 9);
}
