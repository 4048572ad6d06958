#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace fedguard {

struct FederationConfig {
  int num_clients = 50;
  int rounds = 100;
  double participation_fraction = 0.2;
  double malicious_fraction = 0.2;
  int forensic_window = 10;
  double confidence_level = 0.99;
  int temporal_window = 1;
  int watchlist_threshold = 2;
  std::uint64_t master_seed = 0;
  int local_epochs = 1;
  double learning_rate = 0.2;
  int batch_size = 0;  // 0 = full local dataset

  int num_malicious() const;
};

struct TaskConfig {
  int num_classes = 4;
  int feature_dim = 16;
  int num_anchors = 3;
  int samples_per_client = 40;
  int test_samples = 300;
  double signal_strength = 2.0;
  double feature_noise = 0.3;
  double background_prob = 0.4;
  double box_noise = 0.1;
  // "stream": honest clients draw a fresh local batch every round.
  // "fixed": every client trains on its stored partition.
  std::string honest_data = "stream";
  double detection_threshold = 0.5;
  double iou_threshold = 0.5;
};

enum class PoisonType { None, Class, BBox, Objn };

struct AttackConfig {
  PoisonType poison_type = PoisonType::None;
  int source_class = 0;
  int target_class = 3;
  double shrink_factor = 0.10;
  double jitter_scale = 1.0;  // multiplies the +-(1-s)w/2 center jitter range
  double beta = 0.0;
  double gamma = 1.0;
  int onset_round = 0;
};

enum class DefenseKind { None, Stdlens, Spatial, Spectral };
enum class ClusterAlgo { KMeans, Agglomerative, Spectral };
enum class DissimSpace { Ssc, Raw };
enum class RoundCentering { None, Mean, Median };

struct DefenseConfig {
  DefenseKind name = DefenseKind::None;
  ClusterAlgo clustering = ClusterAlgo::KMeans;
  double separation_threshold = 2.0;
  DissimSpace dissimilarity_space = DissimSpace::Raw;
  // Subtract each round's per-coordinate center from that round's blocks
  // before any forensic step, removing drift shared by all clients.
  RoundCentering round_centering = RoundCentering::Median;
  std::optional<double> removal_fraction;  // spectral baseline; unset = malicious_fraction
  bool observe_only = false;
};

struct ExperimentConfig {
  FederationConfig federation;
  TaskConfig task;
  AttackConfig attack;
  DefenseConfig defense;
};

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

// Every violated invariant, by field name. Empty means valid.
std::vector<std::string> config_problems(const ExperimentConfig& cfg);

// Returns cfg unchanged or throws ConfigError listing all problems.
ExperimentConfig validate_config(const ExperimentConfig& cfg);

std::string to_string(PoisonType t);
std::string to_string(DefenseKind k);
std::string to_string(ClusterAlgo a);
std::string to_string(DissimSpace s);
std::string to_string(RoundCentering c);
PoisonType parse_poison_type(const std::string& s);
DefenseKind parse_defense_kind(const std::string& s);
ClusterAlgo parse_cluster_algo(const std::string& s);
DissimSpace parse_dissim_space(const std::string& s);
RoundCentering parse_round_centering(const std::string& s);

nlohmann::json to_json(const ExperimentConfig& cfg);
// Missing keys keep their defaults; unknown keys and type mismatches throw ConfigError.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);

// confidence level -> number of standard deviations (0.68/0.95/0.99 -> 1/2/3)
int sigma_multiplier(double confidence_level);

}  // namespace fedguard
