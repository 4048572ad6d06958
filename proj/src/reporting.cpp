#include "fedguard/reporting.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

#include <fmt/format.h>

#include "fedguard/baselines.hpp"
#include "fedguard/forensics.hpp"

namespace fedguard {

DefenseScore defense_metrics(const std::vector<RevocationEvent>& history, const std::vector<int>& malicious) {
  const std::set<int> mal(malicious.begin(), malicious.end());
  DefenseScore s;
  std::set<int> revoked;
  for (const auto& ev : history) {
    for (int id : ev.revoked) {
      if (!revoked.insert(id).second) continue;
      (mal.count(id) ? s.malicious_revoked : s.honest_revoked)++;
    }
    WindowScore w;
    w.round = ev.round;
    const int total = s.malicious_revoked + s.honest_revoked;
    if (total > 0) w.precision = static_cast<double>(s.malicious_revoked) / total;
    if (!mal.empty()) w.recall = static_cast<double>(s.malicious_revoked) / static_cast<double>(mal.size());
    s.windows.push_back(w);
  }
  for (const auto& w : s.windows) {
    const double r = w.recall.value_or(0.0);
    if (r > s.max_recall) s.max_recall = r;
  }
  if (s.max_recall > 0)
    for (const auto& w : s.windows)
      if (w.recall && *w.recall == s.max_recall) {
        s.round_of_max_recall = w.round;
        s.precision_at_max_recall = w.precision;
        break;
      }
  if (!mal.empty())
    for (const auto& w : s.windows)
      if (w.recall && *w.recall == 1.0) {
        s.time_to_purge = w.round;
        break;
      }
  return s;
}

std::vector<RevocationEvent> revocation_history(const RunLog& log) {
  std::vector<RevocationEvent> h;
  for (const auto& r : log.records)
    if (r.window_end) h.push_back({r.round + 1, r.revoked});
  return h;
}

std::unique_ptr<Defense> make_defense(const ExperimentConfig& cfg) {
  const auto& d = cfg.defense;
  switch (d.name) {
    case DefenseKind::None: return nullptr;
    case DefenseKind::Stdlens: return std::make_unique<ForensicDefense>(forensic_params_from(cfg));
    case DefenseKind::Spatial:
      return std::make_unique<SmallerClusterDefense>(d.separation_threshold, cfg.federation.master_seed,
                                                     d.round_centering);
    case DefenseKind::Spectral:
      return std::make_unique<SpectralSignatureDefense>(
          d.separation_threshold, d.removal_fraction.value_or(cfg.federation.malicious_fraction), d.round_centering);
  }
  return nullptr;
}

ScoredRun run_and_score(const ExperimentConfig& cfg, const RunOptions& opts) {
  auto defense = make_defense(cfg);
  ScoredRun out{run_federation(cfg, defense.get(), opts), {}};
  auto& s = out.summary;
  s.defense = to_string(cfg.defense.name);
  s.seed = cfg.federation.master_seed;
  s.n_malicious = static_cast<int>(out.result.malicious.size());
  s.score = defense_metrics(revocation_history(out.result.log), out.result.malicious);
  for (const auto& r : out.result.log.records) s.ap_src_curve.push_back(r.ap.at(cfg.attack.source_class));
  if (!s.ap_src_curve.empty()) s.final_ap_src = s.ap_src_curve.back();
  s.halted = out.result.log.halted.has_value();
  return out;
}

std::vector<RunSummary> compare_defenses(const ExperimentConfig& cfg, const std::vector<DefenseKind>& defenses,
                                         const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw std::invalid_argument("need at least one seed");
  std::vector<RunSummary> out;
  for (auto seed : seeds)
    for (auto d : defenses) {
      ExperimentConfig c = cfg;
      c.federation.master_seed = seed;
      c.defense.name = d;
      out.push_back(run_and_score(c).summary);
    }
  return out;
}

static std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += (c == '"') ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

std::string to_csv(const CsvTable& t) {
  std::string out;
  auto line = [&](const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + csv_field(row[i]);
    out += "\n";
  };
  line(t.header);
  for (const auto& r : t.rows) line(r);
  return out;
}

CsvTable parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(field);
      field.clear();
      any = true;
    } else if (c == '\n') {
      row.push_back(field);
      rows.push_back(row);
      row.clear();
      field.clear();
      any = false;
    } else if (c != '\r') {
      field += c;
      any = true;
    }
  }
  if (any) {
    row.push_back(field);
    rows.push_back(row);
  }
  CsvTable t;
  if (!rows.empty()) {
    t.header = rows.front();
    t.rows.assign(rows.begin() + 1, rows.end());
  }
  return t;
}

std::string fmt_num(double v) { return fmt::format("{}", v); }
std::string fmt_opt(const std::optional<double>& v) { return v ? fmt_num(*v) : "n/a"; }

CsvTable learning_curve_table(const RunLog& log, int source_class) {
  CsvTable t;
  t.header = {"round"};
  const std::size_t C = log.records.empty() ? 0 : log.records.front().ap.size();
  for (std::size_t c = 0; c < C; ++c) t.header.push_back(fmt::format("ap_class_{}", c));
  t.header.push_back("ap_src");
  for (const auto& r : log.records) {
    std::vector<std::string> row{std::to_string(r.round)};
    for (const auto& a : r.ap) row.push_back(fmt_opt(a));
    row.push_back(fmt_opt(r.ap.at(source_class)));
    t.rows.push_back(row);
  }
  return t;
}

CsvTable window_metrics_table(const DefenseScore& s) {
  CsvTable t{{"round", "precision", "recall"}, {}};
  for (const auto& w : s.windows) t.rows.push_back({std::to_string(w.round), fmt_opt(w.precision), fmt_opt(w.recall)});
  return t;
}

static std::string opt_int(const std::optional<int>& v) { return v ? std::to_string(*v) : "never"; }

CsvTable summaries_table(const std::vector<RunSummary>& runs) {
  CsvTable t{{"defense", "seed", "n_malicious", "malicious_revoked", "honest_revoked", "max_recall",
              "precision_at_max_recall", "round_of_max_recall", "time_to_purge", "final_ap_src", "halted"},
             {}};
  for (const auto& r : runs)
    t.rows.push_back({r.defense, std::to_string(r.seed), std::to_string(r.n_malicious),
                      std::to_string(r.score.malicious_revoked), std::to_string(r.score.honest_revoked),
                      fmt_num(r.score.max_recall), fmt_opt(r.score.precision_at_max_recall),
                      opt_int(r.score.round_of_max_recall), opt_int(r.score.time_to_purge), fmt_opt(r.final_ap_src),
                      r.halted ? "1" : "0"});
  return t;
}

namespace {

struct MeanStd {
  std::vector<double> v;
  std::string str() const {
    if (v.empty()) return "n/a";
    double m = 0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    s = v.size() > 1 ? std::sqrt(s / static_cast<double>(v.size() - 1)) : 0.0;
    return fmt::format("{:.4f} ± {:.4f}", m, s);
  }
};

}  // namespace

CsvTable comparison_summary_table(const std::vector<RunSummary>& runs) {
  std::vector<std::string> order;
  std::map<std::string, std::map<std::string, MeanStd>> acc;
  for (const auto& r : runs) {
    if (!acc.count(r.defense)) order.push_back(r.defense);
    auto& a = acc[r.defense];
    a["max_recall"].v.push_back(r.score.max_recall);
    if (r.score.precision_at_max_recall) a["precision"].v.push_back(*r.score.precision_at_max_recall);
    if (r.score.round_of_max_recall) a["round"].v.push_back(*r.score.round_of_max_recall);
    if (r.final_ap_src) a["ap"].v.push_back(*r.final_ap_src);
    a["honest"].v.push_back(r.score.honest_revoked);
  }
  CsvTable t{{"defense", "runs", "max_recall", "precision_at_max_recall", "round_of_max_recall", "honest_revoked",
              "final_ap_src"},
             {}};
  for (const auto& d : order) {
    auto& a = acc[d];
    t.rows.push_back({d, std::to_string(a["max_recall"].v.size()), a["max_recall"].str(), a["precision"].str(),
                      a["round"].str(), a["honest"].str(), a["ap"].str()});
  }
  return t;
}

CsvTable timing_table(const std::vector<RoundTiming>& timing) {
  CsvTable t{{"round", "round_ms", "defense_ms"}, {}};
  for (const auto& x : timing)
    t.rows.push_back({std::to_string(x.round), fmt::format("{:.3f}", x.round_ms), fmt::format("{:.3f}", x.defense_ms)});
  return t;
}

std::string render_table(const CsvTable& t) {
  std::vector<std::size_t> width(t.header.size(), 0);
  auto cells = [](const std::string& s) {
    // count code points so multi-byte symbols do not skew alignment
    std::size_t n = 0;
    for (unsigned char c : s) n += (c & 0xC0) != 0x80;
    return n;
  };
  auto grow = [&](const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size() && i < width.size(); ++i) width[i] = std::max(width[i], cells(row[i]));
  };
  grow(t.header);
  for (const auto& r : t.rows) grow(r);
  std::string out;
  auto line = [&](const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size() && i < width.size(); ++i)
      out += row[i] + std::string(width[i] - cells(row[i]) + 2, ' ');
    out += "\n";
  };
  line(t.header);
  for (const auto& r : t.rows) line(r);
  return out;
}

}  // namespace fedguard
