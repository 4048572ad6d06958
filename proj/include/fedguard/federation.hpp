#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedguard/config.hpp"
#include "fedguard/defense.hpp"
#include "fedguard/detector.hpp"
#include "fedguard/rng.hpp"

namespace fedguard {

struct ClientUpdate {
  int client_id = 0;
  int round = 0;
  std::vector<double> delta;
  int sample_count = 0;
};

class PopulationExhausted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// max(2, round(k*|active|)) distinct ids drawn uniformly from `active`, in draw order.
std::vector<int> select_participants(int round, const std::vector<int>& active, double k,
                                     std::uint64_t master_seed);

// Locally trained weights minus global weights after `epochs` passes of
// mini-batch SGD (batch_size 0 = full dataset).
std::vector<double> local_update(const Detector& det, const Dataset& data, const DetectorWeights& global, int epochs,
                                 double lr, int batch_size, Rng& rng);

// Sum n_i * delta_i / sum n_i.
std::vector<double> fedavg_aggregate(const std::vector<ClientUpdate>& updates);

// Class c's slice of a flat update: class-head rows, then bbox-head rows in
// offset order, then objn-head rows, each block ordered by anchor.
std::vector<double> extract_class_gradient_block(const TaskShape& shape, const std::vector<double>& delta, int c);

// Ground-truth malicious ids (sorted), drawn from the master seed.
std::vector<int> assign_malicious(int num_clients, int count, std::uint64_t master_seed);

struct RoundRecord {
  int round = 0;
  std::vector<int> participants;
  std::vector<int> poisoned;  // participants that trained on poisoned data this round
  std::vector<std::optional<double>> ap;
  std::string weights_digest;
  bool window_end = false;
  bool deferred = false;
  std::vector<int> flagged_classes;
  std::vector<int> revoked;
  std::vector<int> watchlisted;
};

struct RunLog {
  std::vector<RoundRecord> records;
  std::optional<std::string> halted;  // set when the population was exhausted
};

struct RoundTiming {
  int round = 0;
  double round_ms = 0;
  double defense_ms = 0;  // only nonzero at window ends
};

struct RunResult {
  DetectorWeights weights;
  RunLog log;
  std::vector<int> malicious;
  std::vector<RoundTiming> timing;
  std::vector<GradientContribution> gradient_dump;  // filled when requested
};

struct RunOptions {
  bool dump_gradients = false;
};

// Full federated run. `defense` may be null. Revocations apply at window ends
// unless cfg.defense.observe_only is set.
RunResult run_federation(const ExperimentConfig& cfg, Defense* defense, const RunOptions& opts = {});

std::string weights_digest(const std::vector<double>& v);

nlohmann::json to_json(const RoundRecord& r);
RoundRecord round_record_from_json(const nlohmann::json& j);
std::string runlog_to_jsonl(const RunLog& log);
RunLog runlog_from_jsonl(const std::string& text);

std::string contributions_to_jsonl(const std::vector<GradientContribution>& c);
std::vector<GradientContribution> contributions_from_jsonl(const std::string& text);

}  // namespace fedguard
