#include "fedguard/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <map>

namespace fedguard {

using nlohmann::json;

int FederationConfig::num_malicious() const {
  return static_cast<int>(std::llround(malicious_fraction * num_clients));
}

static std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& p : v) s += (s.empty() ? "" : "; ") + p;
  return s;
}

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::runtime_error("invalid config: " + join(problems)), problems_(std::move(problems)) {}

int sigma_multiplier(double c) {
  if (std::abs(c - 0.68) < 1e-12) return 1;
  if (std::abs(c - 0.95) < 1e-12) return 2;
  if (std::abs(c - 0.99) < 1e-12) return 3;
  return 0;
}

std::vector<std::string> config_problems(const ExperimentConfig& cfg) {
  std::vector<std::string> p;
  const auto& f = cfg.federation;
  if (f.num_clients < 1) p.push_back("federation.num_clients must be positive");
  if (f.rounds < 1) p.push_back("federation.rounds must be positive");
  if (!(f.participation_fraction > 0.0 && f.participation_fraction <= 1.0))
    p.push_back("federation.participation_fraction must be in (0,1]");
  else if (f.num_clients * f.participation_fraction < 2.0)
    p.push_back("federation: N·k < 2 (need at least two participants per round)");
  if (!(f.malicious_fraction >= 0.0)) p.push_back("federation.malicious_fraction must be >= 0");
  if (!(f.malicious_fraction < 0.5)) p.push_back("federation.malicious_fraction: m must be < 0.5");
  {
    const double count = f.malicious_fraction * f.num_clients;
    if (std::abs(count - std::round(count)) > 1e-9)
      p.push_back("federation.malicious_fraction: m·N must be an integer");
  }
  if (f.forensic_window < 2) p.push_back("federation.forensic_window must be >= 2");
  if (sigma_multiplier(f.confidence_level) == 0)
    p.push_back("federation.confidence_level must be one of 0.68, 0.95, 0.99");
  if (f.temporal_window < 1) p.push_back("federation.temporal_window must be >= 1");
  if (f.watchlist_threshold < 1) p.push_back("federation.watchlist_threshold must be positive");
  if (f.local_epochs < 1) p.push_back("federation.local_epochs must be positive");
  if (!(f.learning_rate > 0.0)) p.push_back("federation.learning_rate must be positive");
  if (f.batch_size < 0) p.push_back("federation.batch_size must be >= 0");

  const auto& t = cfg.task;
  if (t.num_classes < 2) p.push_back("task.num_classes must be >= 2");
  if (t.feature_dim < 4) p.push_back("task.feature_dim must be >= 4");
  if (t.num_anchors < 1) p.push_back("task.num_anchors must be >= 1");
  if (t.samples_per_client < 1) p.push_back("task.samples_per_client must be positive");
  if (t.test_samples < 1) p.push_back("task.test_samples must be positive");
  if (!(t.signal_strength > 0.0)) p.push_back("task.signal_strength must be positive");
  if (!(t.feature_noise >= 0.0)) p.push_back("task.feature_noise must be >= 0");
  if (!(t.background_prob >= 0.0 && t.background_prob < 1.0))
    p.push_back("task.background_prob must be in [0,1)");
  if (!(t.box_noise >= 0.0)) p.push_back("task.box_noise must be >= 0");
  if (t.honest_data != "stream" && t.honest_data != "fixed")
    p.push_back("task.honest_data must be \"stream\" or \"fixed\"");
  if (!(t.detection_threshold >= 0.0 && t.detection_threshold < 1.0))
    p.push_back("task.detection_threshold must be in [0,1)");
  if (!(t.iou_threshold > 0.0 && t.iou_threshold < 1.0))
    p.push_back("task.iou_threshold must be in (0,1)");

  const auto& a = cfg.attack;
  if (a.source_class < 0 || a.source_class >= t.num_classes)
    p.push_back("attack.source_class out of range");
  if (a.poison_type == PoisonType::Class) {
    if (a.target_class < 0 || a.target_class >= t.num_classes)
      p.push_back("attack.target_class out of range");
    if (a.target_class == a.source_class)
      p.push_back("attack.target_class must differ from source_class");
  }
  if (!(a.shrink_factor > 0.0 && a.shrink_factor <= 1.0))
    p.push_back("attack.shrink_factor must be in (0,1]");
  if (!(a.jitter_scale >= 0.0)) p.push_back("attack.jitter_scale must be >= 0");
  if (!(a.beta >= 0.0 && a.beta < 1.0)) p.push_back("attack.beta must be in [0,1)");
  if (!(a.gamma > 0.0 && a.gamma <= 1.0)) p.push_back("attack.gamma must be in (0,1]");
  if (a.onset_round < 0) p.push_back("attack.onset_round must be >= 0");
  if (a.poison_type != PoisonType::None && f.num_malicious() < 1 && f.malicious_fraction > 0)
    p.push_back("attack: malicious_fraction yields no malicious clients");

  const auto& d = cfg.defense;
  if (!(d.separation_threshold > 0.0)) p.push_back("defense.separation_threshold must be positive");
  if (d.removal_fraction && !(*d.removal_fraction >= 0.0 && *d.removal_fraction <= 1.0))
    p.push_back("defense.removal_fraction must be in [0,1]");
  return p;
}

ExperimentConfig validate_config(const ExperimentConfig& cfg) {
  auto p = config_problems(cfg);
  if (!p.empty()) throw ConfigError(std::move(p));
  return cfg;
}

std::string to_string(PoisonType t) {
  switch (t) {
    case PoisonType::None: return "none";
    case PoisonType::Class: return "class";
    case PoisonType::BBox: return "bbox";
    case PoisonType::Objn: return "objn";
  }
  return "?";
}
std::string to_string(DefenseKind k) {
  switch (k) {
    case DefenseKind::None: return "none";
    case DefenseKind::Stdlens: return "stdlens";
    case DefenseKind::Spatial: return "spatial";
    case DefenseKind::Spectral: return "spectral";
  }
  return "?";
}
std::string to_string(ClusterAlgo a) {
  switch (a) {
    case ClusterAlgo::KMeans: return "kmeans";
    case ClusterAlgo::Agglomerative: return "agglomerative";
    case ClusterAlgo::Spectral: return "spectral";
  }
  return "?";
}
std::string to_string(DissimSpace s) { return s == DissimSpace::Ssc ? "ssc" : "raw"; }
std::string to_string(RoundCentering c) {
  switch (c) {
    case RoundCentering::None: return "none";
    case RoundCentering::Mean: return "mean";
    case RoundCentering::Median: return "median";
  }
  return "?";
}

template <class E>
static E parse_enum(const std::string& s, std::initializer_list<E> all, const char* what) {
  for (E e : all)
    if (to_string(e) == s) return e;
  throw ConfigError({std::string(what) + ": unknown value \"" + s + "\""});
}

PoisonType parse_poison_type(const std::string& s) {
  return parse_enum(s, {PoisonType::None, PoisonType::Class, PoisonType::BBox, PoisonType::Objn},
                    "attack.poison_type");
}
DefenseKind parse_defense_kind(const std::string& s) {
  return parse_enum(s, {DefenseKind::None, DefenseKind::Stdlens, DefenseKind::Spatial, DefenseKind::Spectral},
                    "defense.name");
}
ClusterAlgo parse_cluster_algo(const std::string& s) {
  return parse_enum(s, {ClusterAlgo::KMeans, ClusterAlgo::Agglomerative, ClusterAlgo::Spectral},
                    "defense.clustering");
}
DissimSpace parse_dissim_space(const std::string& s) {
  return parse_enum(s, {DissimSpace::Ssc, DissimSpace::Raw}, "defense.dissimilarity_space");
}
RoundCentering parse_round_centering(const std::string& s) {
  return parse_enum(s, {RoundCentering::None, RoundCentering::Mean, RoundCentering::Median},
                    "defense.round_centering");
}

json to_json(const ExperimentConfig& c) {
  const auto& f = c.federation;
  const auto& t = c.task;
  const auto& a = c.attack;
  const auto& d = c.defense;
  json j;
  j["federation"] = {{"num_clients", f.num_clients},
                     {"rounds", f.rounds},
                     {"participation_fraction", f.participation_fraction},
                     {"malicious_fraction", f.malicious_fraction},
                     {"forensic_window", f.forensic_window},
                     {"confidence_level", f.confidence_level},
                     {"temporal_window", f.temporal_window},
                     {"watchlist_threshold", f.watchlist_threshold},
                     {"master_seed", f.master_seed},
                     {"local_epochs", f.local_epochs},
                     {"learning_rate", f.learning_rate},
                     {"batch_size", f.batch_size}};
  j["task"] = {{"num_classes", t.num_classes},
               {"feature_dim", t.feature_dim},
               {"num_anchors", t.num_anchors},
               {"samples_per_client", t.samples_per_client},
               {"test_samples", t.test_samples},
               {"signal_strength", t.signal_strength},
               {"feature_noise", t.feature_noise},
               {"background_prob", t.background_prob},
               {"box_noise", t.box_noise},
               {"honest_data", t.honest_data},
               {"detection_threshold", t.detection_threshold},
               {"iou_threshold", t.iou_threshold}};
  j["attack"] = {{"poison_type", to_string(a.poison_type)},
                 {"source_class", a.source_class},
                 {"target_class", a.target_class},
                 {"shrink_factor", a.shrink_factor},
                 {"jitter_scale", a.jitter_scale},
                 {"beta", a.beta},
                 {"gamma", a.gamma},
                 {"onset_round", a.onset_round}};
  j["defense"] = {{"name", to_string(d.name)},
                  {"clustering", to_string(d.clustering)},
                  {"separation_threshold", d.separation_threshold},
                  {"dissimilarity_space", to_string(d.dissimilarity_space)},
                  {"round_centering", to_string(d.round_centering)},
                  {"removal_fraction", d.removal_fraction ? json(*d.removal_fraction) : json(nullptr)},
                  {"observe_only", d.observe_only}};
  return j;
}

namespace {

using Setter = std::function<void(const json&)>;

template <class T>
Setter set(T& field) {
  return [&field](const json& v) { field = v.get<T>(); };
}

void read_section(const json& root, const std::string& name, const std::map<std::string, Setter>& fields,
                  std::vector<std::string>& problems) {
  if (!root.contains(name)) return;
  const json& sec = root.at(name);
  if (!sec.is_object()) {
    problems.push_back(name + ": expected an object");
    return;
  }
  for (const auto& [key, value] : sec.items()) {
    auto it = fields.find(key);
    if (it == fields.end()) {
      problems.push_back(name + "." + key + ": unknown key");
      continue;
    }
    try {
      it->second(value);
    } catch (const ConfigError& e) {
      for (const auto& p : e.problems()) problems.push_back(p);
    } catch (const json::exception&) {
      problems.push_back(name + "." + key + ": wrong type");
    }
  }
}

}  // namespace

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  std::vector<std::string> problems;
  if (!j.is_object()) throw ConfigError({"config root must be an object"});
  for (const auto& [key, _] : j.items())
    if (key != "federation" && key != "task" && key != "attack" && key != "defense")
      problems.push_back(key + ": unknown section");

  auto& f = c.federation;
  read_section(j, "federation",
               {{"num_clients", set(f.num_clients)},
                {"rounds", set(f.rounds)},
                {"participation_fraction", set(f.participation_fraction)},
                {"malicious_fraction", set(f.malicious_fraction)},
                {"forensic_window", set(f.forensic_window)},
                {"confidence_level", set(f.confidence_level)},
                {"temporal_window", set(f.temporal_window)},
                {"watchlist_threshold", set(f.watchlist_threshold)},
                {"master_seed", set(f.master_seed)},
                {"local_epochs", set(f.local_epochs)},
                {"learning_rate", set(f.learning_rate)},
                {"batch_size", set(f.batch_size)}},
               problems);
  auto& t = c.task;
  read_section(j, "task",
               {{"num_classes", set(t.num_classes)},
                {"feature_dim", set(t.feature_dim)},
                {"num_anchors", set(t.num_anchors)},
                {"samples_per_client", set(t.samples_per_client)},
                {"test_samples", set(t.test_samples)},
                {"signal_strength", set(t.signal_strength)},
                {"feature_noise", set(t.feature_noise)},
                {"background_prob", set(t.background_prob)},
                {"box_noise", set(t.box_noise)},
                {"honest_data", set(t.honest_data)},
                {"detection_threshold", set(t.detection_threshold)},
                {"iou_threshold", set(t.iou_threshold)}},
               problems);
  auto& a = c.attack;
  read_section(j, "attack",
               {{"poison_type", [&a](const json& v) { a.poison_type = parse_poison_type(v.get<std::string>()); }},
                {"source_class", set(a.source_class)},
                {"target_class", set(a.target_class)},
                {"shrink_factor", set(a.shrink_factor)},
                {"jitter_scale", set(a.jitter_scale)},
                {"beta", set(a.beta)},
                {"gamma", set(a.gamma)},
                {"onset_round", set(a.onset_round)}},
               problems);
  auto& d = c.defense;
  read_section(j, "defense",
               {{"name", [&d](const json& v) { d.name = parse_defense_kind(v.get<std::string>()); }},
                {"clustering", [&d](const json& v) { d.clustering = parse_cluster_algo(v.get<std::string>()); }},
                {"separation_threshold", set(d.separation_threshold)},
                {"dissimilarity_space",
                 [&d](const json& v) { d.dissimilarity_space = parse_dissim_space(v.get<std::string>()); }},
                {"round_centering",
                 [&d](const json& v) { d.round_centering = parse_round_centering(v.get<std::string>()); }},
                {"removal_fraction",
                 [&d](const json& v) {
                   if (v.is_null())
                     d.removal_fraction.reset();
                   else
                     d.removal_fraction = v.get<double>();
                 }},
                {"observe_only", set(d.observe_only)}},
               problems);
  if (!problems.empty()) throw ConfigError(std::move(problems));
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"cannot open config file " + path});
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError({path + ": " + e.what()});
  }
  return validate_config(config_from_json(j));
}

}  // namespace fedguard
