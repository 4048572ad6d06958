#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fedguard/config.hpp"
#include "fedguard/defense.hpp"
#include "fedguard/federation.hpp"

namespace fedguard {

struct RevocationEvent {
  int round = 0;  // rounds completed when the decision was taken
  std::vector<int> revoked;
};

struct WindowScore {
  int round = 0;
  std::optional<double> precision;  // nullopt until something is revoked
  std::optional<double> recall;     // nullopt when there are no malicious clients
};

struct DefenseScore {
  std::vector<WindowScore> windows;  // cumulative, one per window boundary
  double max_recall = 0;
  std::optional<int> round_of_max_recall;
  std::optional<double> precision_at_max_recall;
  std::optional<int> time_to_purge;  // first round with every malicious client revoked
  int malicious_revoked = 0;
  int honest_revoked = 0;
};

DefenseScore defense_metrics(const std::vector<RevocationEvent>& history, const std::vector<int>& malicious);
std::vector<RevocationEvent> revocation_history(const RunLog& log);

std::unique_ptr<Defense> make_defense(const ExperimentConfig& cfg);

struct RunSummary {
  std::string defense;
  std::uint64_t seed = 0;
  DefenseScore score;
  int n_malicious = 0;
  std::optional<double> final_ap_src;
  std::vector<std::optional<double>> ap_src_curve;
  bool halted = false;
};

struct ScoredRun {
  RunResult result;
  RunSummary summary;
};

// Runs with the defense named in cfg.defense and scores it against the ground truth.
ScoredRun run_and_score(const ExperimentConfig& cfg, const RunOptions& opts = {});

// Same seeded attack stream for every defense; one summary per (defense, seed).
std::vector<RunSummary> compare_defenses(const ExperimentConfig& cfg, const std::vector<DefenseKind>& defenses,
                                         const std::vector<std::uint64_t>& seeds);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  bool operator==(const CsvTable&) const = default;
};

std::string to_csv(const CsvTable& t);
CsvTable parse_csv(const std::string& text);

std::string fmt_num(double v);
std::string fmt_opt(const std::optional<double>& v);  // "n/a" when empty

CsvTable learning_curve_table(const RunLog& log, int source_class);
CsvTable window_metrics_table(const DefenseScore& s);
CsvTable summaries_table(const std::vector<RunSummary>& runs);
// mean and std per defense over seeds
CsvTable comparison_summary_table(const std::vector<RunSummary>& runs);
CsvTable timing_table(const std::vector<RoundTiming>& t);

// Fixed-width text rendering for terminals.
std::string render_table(const CsvTable& t);

}  // namespace fedguard
