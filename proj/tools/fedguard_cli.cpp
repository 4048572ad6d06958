// Command-line entry points: run, compare-defenses, attack-sweep, verify-stats, replay.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "fedguard/config.hpp"
#include "fedguard/federation.hpp"
#include "fedguard/reporting.hpp"
#include "fedguard/robust_stats.hpp"

namespace fs = std::filesystem;
using namespace fedguard;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  std::string defense;
};

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg = c.config_path.empty() ? ExperimentConfig{} : load_config(c.config_path);
  if (c.seed) cfg.federation.master_seed = *c.seed;
  if (!c.defense.empty()) cfg.defense.name = parse_defense_kind(c.defense);
  return validate_config(cfg);
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path out_dir(const Common& c) {
  fs::create_directories(c.out_dir);
  return c.out_dir;
}

std::vector<std::uint64_t> seed_list(std::uint64_t first, int count) {
  std::vector<std::uint64_t> s;
  for (int i = 0; i < count; ++i) s.push_back(first + static_cast<std::uint64_t>(i));
  return s;
}

int cmd_run(const Common& c, bool dump) {
  const auto cfg = resolve(c);
  const auto dir = out_dir(c);
  RunOptions opts;
  opts.dump_gradients = dump;
  const auto scored = run_and_score(cfg, opts);
  const auto& res = scored.result;

  write_file(dir / "config.json", to_json(cfg).dump(2) + "\n");
  write_file(dir / "runlog.jsonl", runlog_to_jsonl(res.log));
  write_file(dir / "learning_curve.csv", to_csv(learning_curve_table(res.log, cfg.attack.source_class)));
  write_file(dir / "defense_windows.csv", to_csv(window_metrics_table(scored.summary.score)));
  write_file(dir / "summary.csv", to_csv(summaries_table({scored.summary})));
  write_file(dir / "timing.csv", to_csv(timing_table(res.timing)));
  CsvTable roles{{"client_id", "role"}, {}};
  for (int i = 0; i < cfg.federation.num_clients; ++i)
    roles.rows.push_back({std::to_string(i), std::binary_search(res.malicious.begin(), res.malicious.end(), i)
                                                 ? "malicious"
                                                 : "honest"});
  write_file(dir / "roles.csv", to_csv(roles));
  if (dump) write_file(dir / "gradients.jsonl", contributions_to_jsonl(res.gradient_dump));

  std::cout << render_table(summaries_table({scored.summary}));
  if (res.log.halted) std::cerr << "halted: " << *res.log.halted << "\n";
  return 0;
}

std::vector<DefenseKind> parse_defenses(const std::vector<std::string>& names) {
  std::vector<DefenseKind> out;
  for (const auto& n : names) out.push_back(parse_defense_kind(n));
  return out;
}

int cmd_compare(const Common& c, const std::vector<std::string>& defenses, int seeds) {
  const auto cfg = resolve(c);
  const auto dir = out_dir(c);
  const auto runs = compare_defenses(cfg, parse_defenses(defenses), seed_list(cfg.federation.master_seed, seeds));
  const auto summary = comparison_summary_table(runs);
  write_file(dir / "comparison.csv", to_csv(summaries_table(runs)));
  write_file(dir / "comparison_summary.csv", to_csv(summary));
  std::cout << render_table(summary);
  return 0;
}

int cmd_sweep(const Common& c, const std::vector<double>& ms, const std::vector<double>& betas,
              const std::vector<double>& gammas, const std::vector<int>& onsets, int seeds) {
  const auto base = resolve(c);
  const auto dir = out_dir(c);
  CsvTable table{{"m", "beta", "gamma", "onset"}, {}};
  const auto run_header = summaries_table({}).header;
  table.header.insert(table.header.end(), run_header.begin(), run_header.end());
  for (double m : ms)
    for (double b : betas)
      for (double g : gammas)
        for (int o : onsets) {
          ExperimentConfig cfg = base;
          cfg.federation.malicious_fraction = m;
          cfg.attack.beta = b;
          cfg.attack.gamma = g;
          cfg.attack.onset_round = o;
          validate_config(cfg);
          const auto runs =
              compare_defenses(cfg, {cfg.defense.name}, seed_list(cfg.federation.master_seed, seeds));
          for (const auto& row : summaries_table(runs).rows) {
            std::vector<std::string> r{fmt_num(m), fmt_num(b), fmt_num(g), std::to_string(o)};
            r.insert(r.end(), row.begin(), row.end());
            table.rows.push_back(r);
          }
        }
  write_file(dir / "sweep.csv", to_csv(table));
  std::cout << render_table(table);
  return 0;
}

int cmd_verify(const Common& c, int trials, int samples, double slack_max) {
  const std::uint64_t seed = c.seed.value_or(0);
  const auto dir = out_dir(c);
  CsvTable t{{"trial", "d", "m", "delta_sq", "bound", "premise", "separable", "tau", "honest_violation",
              "poisoned_violation", "n_samples"},
             {}};
  int premise = 0, separable = 0;
  for (int i = 0; i < trials; ++i) {
    Rng rng(derive_seed(seed, "verify-stats", 0, static_cast<std::uint64_t>(i)));
    const int d = 2 + static_cast<int>(rng.below(15));
    const double m = rng.uniform(0.05, 0.3);
    const auto mix = random_premise_mixture(d, m, rng.uniform(1.0, slack_max), rng);
    const auto pr = separation_premise(mix);
    const auto sc = separability_check(mix, samples, rng);
    premise += pr.holds;
    separable += pr.holds && sc.separable;
    t.rows.push_back({std::to_string(i), std::to_string(d), fmt_num(m), fmt_num(pr.delta_sq), fmt_num(pr.bound),
                      pr.holds ? "1" : "0", sc.separable ? "1" : "0", fmt_num(sc.tau), fmt_num(sc.honest_violation),
                      fmt_num(sc.poisoned_violation), std::to_string(samples)});
  }
  write_file(dir / "verify_stats.csv", to_csv(t));
  std::cout << render_table(t);
  std::cout << fmt::format("premise held in {}/{} mixtures; separable in {}/{} of those\n", premise, trials,
                           separable, premise);
  return 0;
}

int cmd_replay(const Common& c, const std::string& gradients, const std::string& roles_path) {
  const auto cfg = resolve(c);
  const auto dir = out_dir(c);
  const auto contributions = contributions_from_jsonl(read_file(gradients));
  auto defense = make_defense(cfg);
  if (!defense) throw std::runtime_error("replay needs a defense (--defense or defense.name)");

  std::map<int, std::vector<GradientContribution>> by_window;
  for (const auto& g : contributions) by_window[g.round / cfg.federation.forensic_window].push_back(g);
  CsvTable verdicts{{"window", "end_round", "flagged_classes", "deferred", "revoked", "watchlisted"}, {}};
  auto ids = [](const std::vector<int>& v) {
    std::string s;
    for (int x : v) s += (s.empty() ? "" : " ") + std::to_string(x);
    return s;
  };
  std::vector<RevocationEvent> history;
  std::set<int> revoked;
  for (const auto& [w, cs] : by_window) {
    std::vector<GradientContribution> live;
    for (const auto& g : cs)
      if (!revoked.count(g.client_id)) live.push_back(g);
    const auto v = defense->on_window(w, live);
    revoked.insert(v.revoked.begin(), v.revoked.end());
    const int end_round = (w + 1) * cfg.federation.forensic_window;
    history.push_back({end_round, v.revoked});
    verdicts.rows.push_back({std::to_string(w), std::to_string(end_round), ids(v.flagged_classes),
                             v.deferred ? "1" : "0", ids(v.revoked), ids(v.watchlisted)});
  }
  write_file(dir / "replay_verdicts.csv", to_csv(verdicts));
  std::cout << render_table(verdicts);
  if (!roles_path.empty()) {
    const auto roles = parse_csv(read_file(roles_path));
    std::vector<int> malicious;
    for (const auto& r : roles.rows)
      if (r.size() >= 2 && r[1] == "malicious") malicious.push_back(std::stoi(r[0]));
    const auto score = defense_metrics(history, malicious);
    write_file(dir / "replay_windows.csv", to_csv(window_metrics_table(score)));
    std::cout << render_table(window_metrics_table(score));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated perception-poisoning simulator with forensic defenses"};
  app.require_subcommand(1);
  Common common;
  std::uint64_t seed = 0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "master seed (overrides the config)");
    sub->add_option("--out", common.out_dir, "output directory");
    sub->add_option("--defense", common.defense, "stdlens | spatial | spectral | none");
  };

  auto* run = app.add_subcommand("run", "one federation run");
  add_common(run);
  bool dump = false;
  run->add_flag("--dump-gradients", dump, "write gradients.jsonl for replay");

  auto* cmp = app.add_subcommand("compare-defenses", "several defenses on identical seeded attack streams");
  add_common(cmp);
  std::vector<std::string> defenses{"stdlens", "spatial", "spectral", "none"};
  int seeds = 10;
  cmp->add_option("--defenses", defenses, "defenses to compare")->delimiter(',');
  cmp->add_option("--seeds", seeds, "number of consecutive seeds starting at --seed");

  auto* sweep = app.add_subcommand("attack-sweep", "grid over m, beta, gamma and onset");
  add_common(sweep);
  std::vector<double> ms{0.1, 0.2}, betas{0.0}, gammas{1.0};
  std::vector<int> onsets{0};
  int sweep_seeds = 3;
  sweep->add_option("--m", ms, "malicious fractions")->delimiter(',');
  sweep->add_option("--beta", betas, "per-round skip probabilities")->delimiter(',');
  sweep->add_option("--gamma", gammas, "per-sample poison fractions")->delimiter(',');
  sweep->add_option("--onset", onsets, "onset rounds")->delimiter(',');
  sweep->add_option("--seeds", sweep_seeds, "seeds per grid point");

  auto* verify = app.add_subcommand("verify-stats", "separation premise vs empirical separability report");
  add_common(verify);
  int trials = 100, samples = 10000;
  double slack_max = 2.0;
  verify->add_option("--trials", trials, "random mixtures");
  verify->add_option("--samples", samples, "samples per mixture")->check(CLI::Range(1000, 100000000));
  verify->add_option("--slack-max", slack_max, "||Delta||^2 drawn in [1, slack-max] x bound");

  auto* replay = app.add_subcommand("replay", "offline forensics on a gradient dump");
  add_common(replay);
  std::string gradients, roles;
  replay->add_option("--gradients", gradients, "gradients.jsonl from run --dump-gradients")->required();
  replay->add_option("--roles", roles, "roles.csv for scoring");

  CLI11_PARSE(app, argc, argv);
  for (auto* sub : {run, cmp, sweep, verify, replay})
    if (*sub && sub->count("--seed")) common.seed = seed;

  try {
    if (*run) return cmd_run(common, dump);
    if (*cmp) return cmd_compare(common, defenses, seeds);
    if (*sweep) return cmd_sweep(common, ms, betas, gammas, onsets, sweep_seeds);
    if (*verify) return cmd_verify(common, trials, samples, slack_max);
    if (*replay) return cmd_replay(common, gradients, roles);
  } catch (const ConfigError& e) {
    std::cerr << "config error:\n";
    for (const auto& p : e.problems()) std::cerr << "  " << p << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
