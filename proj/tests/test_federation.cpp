#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "fedguard/federation.hpp"
#include "fedguard/reporting.hpp"

using namespace fedguard;

namespace {

std::vector<int> range_ids(int n) {
  std::vector<int> v(n);
  for (int i = 0; i < n; ++i) v[i] = i;
  return v;
}

// Revokes every client it has seen, to drive the population to exhaustion.
class RevokeAll : public Defense {
 public:
  std::string name() const override { return "revoke-all"; }
  WindowVerdict on_window(int, const std::vector<GradientContribution>& cs) override {
    std::set<int> ids;
    for (const auto& c : cs) ids.insert(c.client_id);
    WindowVerdict v;
    v.revoked.assign(ids.begin(), ids.end());
    return v;
  }
};

ExperimentConfig short_run(std::uint64_t seed) {
  ExperimentConfig c;
  c.federation.master_seed = seed;
  c.federation.rounds = 30;
  return c;
}

}  // namespace

TEST_CASE("participant selection") {
  const auto hundred = range_ids(100);
  const auto a = select_participants(4, hundred, 0.10, 9);
  CHECK(a.size() == 10);
  CHECK(std::set<int>(a.begin(), a.end()).size() == 10);
  CHECK(a == select_participants(4, hundred, 0.10, 9));
  CHECK(a != select_participants(5, hundred, 0.10, 9));

  auto all = select_participants(0, range_ids(7), 1.0, 1);
  std::sort(all.begin(), all.end());
  CHECK(all == range_ids(7));

  CHECK(select_participants(0, range_ids(5), 0.01, 1).size() == 2);
  CHECK_THROWS_AS(select_participants(0, {3}, 0.5, 1), PopulationExhausted);
}

TEST_CASE("local update single-step oracle") {
  TaskConfig t;
  const SyntheticTask task(t, 2);
  Rng data_rng(2);
  const auto data = task.generate(data_rng, 12);
  DetectorWeights global(task.shape());
  for (auto& x : global.v) x = 0.1 * data_rng.normal();

  Rng rng(3);
  const auto zero = local_update(task.detector(), data, global, 1, 0.0, 0, rng);
  CHECK(*std::max_element(zero.begin(), zero.end()) == 0.0);
  CHECK(*std::min_element(zero.begin(), zero.end()) == 0.0);

  const auto step = local_update(task.detector(), data, global, 1, 0.2, 0, rng);
  const auto g = task.detector().loss_and_grad(global, data).grad;
  for (std::size_t j = 0; j < g.size(); ++j) CHECK(step[j] == doctest::Approx(-0.2 * g[j]).epsilon(1e-12));

  CHECK_THROWS(local_update(task.detector(), {}, global, 1, 0.2, 0, rng));
}

TEST_CASE("honest local training lowers the test loss") {
  int decreasing = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    TaskConfig t;
    const SyntheticTask task(t, seed);
    const auto fd = generate_federation_data(task, seed, 1, t.samples_per_client, t.test_samples);
    DetectorWeights w(task.shape());
    double prev = task.detector().loss(w, fd.test);
    bool ok = true;
    for (int r = 0; r < 10; ++r) {
      Rng rng(derive_seed(seed, "local-sgd", 0, r));
      const auto batch = stream_batch(task, seed, 0, r, t.samples_per_client);
      const auto delta = local_update(task.detector(), batch, w, 1, 0.2, 0, rng);
      for (std::size_t j = 0; j < delta.size(); ++j) w.v[j] += delta[j];
      const double now = task.detector().loss(w, fd.test);
      ok = ok && now < prev;
      prev = now;
    }
    decreasing += ok;
  }
  CHECK(decreasing >= 9);
}

TEST_CASE("weighted averaging") {
  ClientUpdate a{0, 0, {1.0, 3.0}, 1}, b{1, 0, {3.0, 1.0}, 3};
  const auto m = fedavg_aggregate({a, b});
  CHECK(m[0] == doctest::Approx(2.5));
  CHECK(m[1] == doctest::Approx(1.5));
  CHECK(fedavg_aggregate({a}) == a.delta);

  ClientUpdate c{2, 0, {0.7, -0.2}, 5}, d{3, 0, {0.7, -0.2}, 11};
  const auto same = fedavg_aggregate({c, d});
  CHECK(same[0] == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(same[1] == doctest::Approx(-0.2).epsilon(1e-15));

  CHECK_THROWS(fedavg_aggregate({}));
  CHECK_THROWS(fedavg_aggregate({a, ClientUpdate{4, 0, {1.0}, 1}}));
}

TEST_CASE("weighted average stays inside the componentwise hull") {
  Rng r(6);
  for (int t = 0; t < 200; ++t) {
    std::vector<ClientUpdate> ups(1 + r.below(8));
    for (auto& u : ups) {
      u.sample_count = 1 + static_cast<int>(r.below(50));
      u.delta = {r.normal(), r.normal(), r.normal()};
    }
    const auto m = fedavg_aggregate(ups);
    for (int j = 0; j < 3; ++j) {
      double lo = INFINITY, hi = -INFINITY;
      for (const auto& u : ups) {
        lo = std::min(lo, u.delta[j]);
        hi = std::max(hi, u.delta[j]);
      }
      CHECK(m[j] >= lo - 1e-12);
      CHECK(m[j] <= hi + 1e-12);
    }
  }
}

TEST_CASE("class gradient block layout") {
  const TaskShape sh{4, 16, 3};
  CHECK(sh.block_size() == 6u * 16u * 3u);
  std::vector<double> delta(sh.num_params());
  for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = static_cast<double>(i);

  const auto b = extract_class_gradient_block(sh, delta, 2);
  CHECK(b.size() == sh.block_size());
  CHECK(b[0] == static_cast<double>(sh.class_offset(0, 2)));
  CHECK(b[sh.d] == static_cast<double>(sh.class_offset(1, 2)));
  CHECK(b[3 * sh.d] == static_cast<double>(sh.bbox_offset(0, 2, 0)));
  CHECK(b[3 * sh.d + 4 * sh.d] == static_cast<double>(sh.bbox_offset(1, 2, 0)));
  CHECK(b[3 * sh.d + 12 * sh.d] == static_cast<double>(sh.objn_offset(0, 2)));
  CHECK(b.back() == static_cast<double>(sh.objn_offset(2, 2) + sh.d - 1));

  const auto z = extract_class_gradient_block(sh, std::vector<double>(sh.num_params(), 0.0), 1);
  CHECK(std::all_of(z.begin(), z.end(), [](double x) { return x == 0.0; }));

  // changing another class's rows leaves this block alone
  auto other = delta;
  for (int a = 0; a < sh.A; ++a) {
    other[sh.class_offset(a, 3)] += 1.0;
    other[sh.bbox_offset(a, 3, 2)] += 1.0;
    other[sh.objn_offset(a, 3)] += 1.0;
  }
  CHECK(extract_class_gradient_block(sh, other, 2) == b);
  CHECK_THROWS(extract_class_gradient_block(sh, delta, 4));
}

TEST_CASE("malicious assignment") {
  const auto m = assign_malicious(50, 10, 4);
  CHECK(m.size() == 10);
  CHECK(std::is_sorted(m.begin(), m.end()));
  CHECK(std::set<int>(m.begin(), m.end()).size() == 10);
  CHECK(m == assign_malicious(50, 10, 4));
}

TEST_CASE("revoked clients never participate again") {
  auto c = short_run(3);
  c.attack.poison_type = PoisonType::Class;
  c.defense.name = DefenseKind::Stdlens;
  const auto run = run_and_score(c);
  std::set<int> gone;
  bool clean = true;
  for (const auto& r : run.result.log.records) {
    for (int id : r.participants) clean = clean && !gone.count(id);
    gone.insert(r.revoked.begin(), r.revoked.end());
  }
  CHECK(clean);
  CHECK_FALSE(gone.empty());
  for (std::size_t i = 1; i < run.result.log.records.size(); ++i)
    CHECK(run.result.log.records[i].round == run.result.log.records[i - 1].round + 1);
}

TEST_CASE("an observing defense leaves training untouched") {
  auto c = short_run(4);
  c.attack.poison_type = PoisonType::Class;
  const auto plain = run_federation(c, nullptr);
  c.defense.name = DefenseKind::Stdlens;
  c.defense.observe_only = true;
  auto defense = make_defense(c);
  const auto watched = run_federation(c, defense.get());
  REQUIRE(plain.log.records.size() == watched.log.records.size());
  for (std::size_t i = 0; i < plain.log.records.size(); ++i) {
    const auto &a = plain.log.records[i], &b = watched.log.records[i];
    CHECK(a.participants == b.participants);
    CHECK(a.poisoned == b.poisoned);
    CHECK(a.ap == b.ap);
    CHECK(a.weights_digest == b.weights_digest);
    CHECK(b.revoked.empty());
  }
}

TEST_CASE("federation halts when the population is exhausted") {
  auto c = short_run(5);
  RevokeAll all;
  const auto run = run_federation(c, &all);
  CHECK(run.log.halted.has_value());
  CHECK(run.log.records.size() < static_cast<std::size_t>(c.federation.rounds));
  const auto back = runlog_from_jsonl(runlog_to_jsonl(run.log));
  CHECK(back.halted == run.log.halted);
}

TEST_CASE("federated training tracks centralized training on pooled data") {
  double fed_sum = 0, central_sum = 0;
  int counted = 0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    ExperimentConfig c;
    c.federation.master_seed = seed;
    c.task.honest_data = "fixed";
    const auto fed = run_federation(c, nullptr);

    const auto& t = c.task;
    const SyntheticTask task(t, seed);
    const auto fd = generate_federation_data(task, seed, c.federation.num_clients, t.samples_per_client, t.test_samples);
    Dataset pooled;
    for (const auto& d : fd.clients) pooled.insert(pooled.end(), d.begin(), d.end());
    DetectorWeights w(task.shape());
    for (int r = 0; r < c.federation.rounds; ++r) {
      const auto g = task.detector().loss_and_grad(w, pooled).grad;
      for (std::size_t j = 0; j < g.size(); ++j) w.v[j] -= c.federation.learning_rate * g[j];
    }
    const auto central = evaluate_ap(task.detector(), w, fd.test, t.detection_threshold, t.iou_threshold);
    const auto& last = fed.log.records.back().ap;
    for (int k = 0; k < t.num_classes; ++k) {
      REQUIRE(last[k].has_value());
      REQUIRE(central[k].has_value());
      CHECK(std::fabs(*last[k] - *central[k]) <= 0.05);
      fed_sum += *last[k];
      central_sum += *central[k];
      ++counted;
    }
  }
  CHECK(std::fabs(fed_sum - central_sum) / counted <= 0.05);
}

TEST_CASE("log and gradient dump round trips") {
  auto c = short_run(6);
  c.attack.poison_type = PoisonType::BBox;
  c.defense.name = DefenseKind::Stdlens;
  RunOptions opts;
  opts.dump_gradients = true;
  const auto run = run_and_score(c, opts).result;
  const auto text = runlog_to_jsonl(run.log);
  CHECK(runlog_to_jsonl(runlog_from_jsonl(text)) == text);

  std::size_t expected = 0;
  for (const auto& r : run.log.records) expected += r.participants.size() * static_cast<std::size_t>(c.task.num_classes);
  CHECK(run.gradient_dump.size() == expected);
  const auto dump = contributions_to_jsonl(run.gradient_dump);
  const auto back = contributions_from_jsonl(dump);
  REQUIRE(back.size() == run.gradient_dump.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].client_id == run.gradient_dump[i].client_id);
    CHECK(back[i].round == run.gradient_dump[i].round);
    CHECK(back[i].class_id == run.gradient_dump[i].class_id);
    CHECK(back[i].block == run.gradient_dump[i].block);
  }
  CHECK(contributions_to_jsonl(back) == dump);
}

TEST_CASE("identical configs give identical runs") {
  auto c = short_run(8);
  c.attack.poison_type = PoisonType::Objn;
  c.attack.beta = 0.1;
  c.defense.name = DefenseKind::Stdlens;
  const auto a = run_and_score(c).result, b = run_and_score(c).result;
  CHECK(runlog_to_jsonl(a.log) == runlog_to_jsonl(b.log));
  CHECK(a.weights.v == b.weights.v);
}
