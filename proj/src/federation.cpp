#include "fedguard/federation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "fedguard/attacks.hpp"

namespace fedguard {

using nlohmann::json;

std::vector<int> select_participants(int round, const std::vector<int>& active, double k,
                                     std::uint64_t master_seed) {
  if (active.size() < 2) throw PopulationExhausted("population exhausted: fewer than 2 active clients");
  const auto want = static_cast<std::size_t>(std::llround(k * static_cast<double>(active.size())));
  const std::size_t n = std::min(active.size(), std::max<std::size_t>(2, want));
  Rng rng(derive_seed(master_seed, "select", 0, static_cast<std::uint64_t>(round)));
  std::vector<int> out;
  for (auto i : rng.sample_without_replacement(active.size(), n)) out.push_back(active[i]);
  return out;
}

std::vector<double> local_update(const Detector& det, const Dataset& data, const DetectorWeights& global, int epochs,
                                 double lr, int batch_size, Rng& rng) {
  if (data.empty()) throw std::invalid_argument("local dataset is empty");
  DetectorWeights w = global;
  const std::size_t bs = batch_size <= 0 ? data.size() : static_cast<std::size_t>(batch_size);
  std::vector<std::size_t> perm(data.size());
  for (int e = 0; e < epochs; ++e) {
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    rng.shuffle(perm);
    for (std::size_t s = 0; s < perm.size(); s += bs) {
      Dataset batch;
      for (std::size_t i = s; i < std::min(perm.size(), s + bs); ++i) batch.push_back(data[perm[i]]);
      const auto lg = det.loss_and_grad(w, batch);
      for (std::size_t j = 0; j < w.v.size(); ++j) w.v[j] -= lr * lg.grad[j];
    }
  }
  for (std::size_t j = 0; j < w.v.size(); ++j) w.v[j] -= global.v[j];
  return std::move(w.v);
}

std::vector<double> fedavg_aggregate(const std::vector<ClientUpdate>& updates) {
  if (updates.empty()) throw std::invalid_argument("no updates to aggregate");
  const std::size_t dim = updates.front().delta.size();
  std::vector<double> sum(dim, 0.0);
  double total = 0;
  for (const auto& u : updates) {
    if (u.delta.size() != dim) throw std::invalid_argument("inconsistent update shapes");
    if (u.sample_count <= 0) throw std::invalid_argument("sample_count must be positive");
    total += u.sample_count;
    for (std::size_t j = 0; j < dim; ++j) sum[j] += u.sample_count * u.delta[j];
  }
  for (auto& v : sum) v /= total;
  return sum;
}

std::vector<double> extract_class_gradient_block(const TaskShape& sh, const std::vector<double>& delta, int c) {
  if (c < 0 || c >= sh.C) throw std::invalid_argument("class id out of range");
  std::vector<double> out;
  out.reserve(sh.block_size());
  auto copy = [&](std::size_t off, std::size_t len) {
    out.insert(out.end(), delta.begin() + off, delta.begin() + off + len);
  };
  for (int a = 0; a < sh.A; ++a) copy(sh.class_offset(a, c), sh.d);
  for (int a = 0; a < sh.A; ++a) copy(sh.bbox_offset(a, c, 0), 4 * std::size_t(sh.d));
  for (int a = 0; a < sh.A; ++a) copy(sh.objn_offset(a, c), sh.d);
  return out;
}

std::vector<int> assign_malicious(int num_clients, int count, std::uint64_t master_seed) {
  Rng rng(derive_seed(master_seed, "roles", 0, 0));
  std::vector<int> out;
  for (auto i : rng.sample_without_replacement(num_clients, count)) out.push_back(static_cast<int>(i));
  std::sort(out.begin(), out.end());
  return out;
}

std::string weights_digest(const std::vector<double>& v) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double x : v) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &x, sizeof(double));
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 0x100000001b3ULL;
    }
  }
  return fmt::format("{:016x}", h);
}

RunResult run_federation(const ExperimentConfig& cfg, Defense* defense, const RunOptions& opts) {
  validate_config(cfg);
  using clock = std::chrono::steady_clock;
  const auto& f = cfg.federation;
  const auto& t = cfg.task;
  const SyntheticTask task(t, f.master_seed);
  const Detector& det = task.detector();
  const auto data = generate_federation_data(task, f.master_seed, f.num_clients, t.samples_per_client, t.test_samples);

  RunResult res;
  res.weights = DetectorWeights(task.shape());
  res.malicious = assign_malicious(f.num_clients, f.num_malicious(), f.master_seed);
  const std::set<int> malicious(res.malicious.begin(), res.malicious.end());
  const bool attacking = cfg.attack.poison_type != PoisonType::None;

  std::vector<int> active(f.num_clients);
  for (int i = 0; i < f.num_clients; ++i) active[i] = i;
  std::vector<GradientContribution> window;

  for (int r = 0; r < f.rounds; ++r) {
    const auto t0 = clock::now();
    RoundRecord rec;
    rec.round = r;
    try {
      rec.participants = select_participants(r, active, f.participation_fraction, f.master_seed);
    } catch (const PopulationExhausted& e) {
      res.log.halted = e.what();
      break;
    }

    std::vector<ClientUpdate> updates;
    for (int id : rec.participants) {
      Dataset local;
      if (attacking && malicious.count(id)) {
        auto p = effective_poison_for_round(cfg.attack, id, r, data.clients[id], f.master_seed, t.num_classes);
        if (p.poisoned) rec.poisoned.push_back(id);
        local = std::move(p.data);
      } else if (t.honest_data == "stream") {
        local = stream_batch(task, f.master_seed, id, r, t.samples_per_client);
      } else {
        local = data.clients[id];
      }
      Rng rng(derive_seed(f.master_seed, "local-sgd", id, r));
      ClientUpdate u{id, r,
                     local_update(det, local, res.weights, f.local_epochs, f.learning_rate, f.batch_size, rng),
                     static_cast<int>(local.size())};
      for (int c = 0; c < t.num_classes; ++c)
        window.push_back({id, r, c, extract_class_gradient_block(task.shape(), u.delta, c)});
      updates.push_back(std::move(u));
    }
    std::sort(rec.poisoned.begin(), rec.poisoned.end());

    const auto agg = fedavg_aggregate(updates);
    for (std::size_t j = 0; j < agg.size(); ++j) res.weights.v[j] += agg[j];
    rec.ap = evaluate_ap(det, res.weights, data.test, t.detection_threshold, t.iou_threshold);
    rec.weights_digest = weights_digest(res.weights.v);

    RoundTiming timing{r, 0, 0};
    if ((r + 1) % f.forensic_window == 0) {
      rec.window_end = true;
      if (defense) {
        const auto d0 = clock::now();
        auto verdict = defense->on_window((r + 1) / f.forensic_window - 1, window);
        timing.defense_ms = std::chrono::duration<double, std::milli>(clock::now() - d0).count();
        rec.deferred = verdict.deferred;
        rec.flagged_classes = verdict.flagged_classes;
        rec.watchlisted = verdict.watchlisted;
        if (!cfg.defense.observe_only) {
          for (int id : verdict.revoked) {
            auto it = std::find(active.begin(), active.end(), id);
            if (it != active.end()) {
              active.erase(it);
              rec.revoked.push_back(id);
            }
          }
          std::sort(rec.revoked.begin(), rec.revoked.end());
        }
      }
      if (opts.dump_gradients) res.gradient_dump.insert(res.gradient_dump.end(), window.begin(), window.end());
      window.clear();
    }
    timing.round_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    res.timing.push_back(timing);
    res.log.records.push_back(std::move(rec));
  }
  if (opts.dump_gradients) res.gradient_dump.insert(res.gradient_dump.end(), window.begin(), window.end());
  return res;
}

json to_json(const RoundRecord& r) {
  json ap = json::array();
  for (const auto& a : r.ap) ap.push_back(a ? json(*a) : json(nullptr));
  return {{"round", r.round},
          {"participants", r.participants},
          {"poisoned", r.poisoned},
          {"ap", ap},
          {"weights_digest", r.weights_digest},
          {"window_end", r.window_end},
          {"deferred", r.deferred},
          {"flagged_classes", r.flagged_classes},
          {"revoked", r.revoked},
          {"watchlisted", r.watchlisted}};
}

RoundRecord round_record_from_json(const json& j) {
  RoundRecord r;
  r.round = j.at("round").get<int>();
  r.participants = j.at("participants").get<std::vector<int>>();
  r.poisoned = j.at("poisoned").get<std::vector<int>>();
  for (const auto& a : j.at("ap")) r.ap.push_back(a.is_null() ? std::nullopt : std::optional<double>(a.get<double>()));
  r.weights_digest = j.at("weights_digest").get<std::string>();
  r.window_end = j.at("window_end").get<bool>();
  r.deferred = j.at("deferred").get<bool>();
  r.flagged_classes = j.at("flagged_classes").get<std::vector<int>>();
  r.revoked = j.at("revoked").get<std::vector<int>>();
  r.watchlisted = j.at("watchlisted").get<std::vector<int>>();
  return r;
}

std::string runlog_to_jsonl(const RunLog& log) {
  std::string out;
  for (const auto& r : log.records) out += to_json(r).dump() + "\n";
  if (log.halted) out += json{{"halted", *log.halted}}.dump() + "\n";
  return out;
}

RunLog runlog_from_jsonl(const std::string& text) {
  RunLog log;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = json::parse(line);
    if (j.contains("halted"))
      log.halted = j.at("halted").get<std::string>();
    else
      log.records.push_back(round_record_from_json(j));
  }
  return log;
}

std::string contributions_to_jsonl(const std::vector<GradientContribution>& cs) {
  std::string out;
  for (const auto& c : cs)
    out += json{{"client_id", c.client_id}, {"round", c.round}, {"class_id", c.class_id}, {"block", c.block}}.dump() +
           "\n";
  return out;
}

std::vector<GradientContribution> contributions_from_jsonl(const std::string& text) {
  std::vector<GradientContribution> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = json::parse(line);
    out.push_back({j.at("client_id").get<int>(), j.at("round").get<int>(), j.at("class_id").get<int>(),
                   j.at("block").get<std::vector<double>>()});
  }
  return out;
}

}  // namespace fedguard
