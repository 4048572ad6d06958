#include "fedguard/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

#include <Eigen/Dense>

#include "fedguard/forensics.hpp"
#include "fedguard/rng.hpp"

namespace fedguard {

std::vector<SpectralScore> spectral_scores(const std::vector<std::vector<double>>& blocks) {
  if (blocks.size() < 3) throw std::invalid_argument("spectral scoring needs at least 3 contributions");
  const Eigen::Index n = static_cast<Eigen::Index>(blocks.size());
  const Eigen::Index D = static_cast<Eigen::Index>(blocks[0].size());
  Eigen::MatrixXd Z(n, D);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < D; ++j) Z(i, j) = blocks[i][j];
  Z.rowwise() -= Z.colwise().mean();
  Eigen::BDCSVD<Eigen::MatrixXd> svd(Z, Eigen::ComputeThinV);
  std::vector<SpectralScore> out;
  const bool zero = svd.singularValues().size() == 0 || svd.singularValues()(0) == 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    out.push_back({static_cast<std::size_t>(i), zero ? 0.0 : std::abs(Z.row(i).dot(svd.matrixV().col(0)))});
  return out;
}

static std::vector<int> sorted_unique(std::set<int> s) { return {s.begin(), s.end()}; }

std::vector<int> defense_spatial_smaller_cluster(const std::vector<GradientContribution>& cs, std::uint64_t seed) {
  const auto proj = spatial_project(cs);
  std::vector<Point2> pts;
  for (const auto& p : proj.points) pts.push_back({p.ssc1, p.ssc2});
  const auto lab = cluster_points(pts, ClusterAlgo::KMeans, 2, seed);
  const auto n1 = std::count(lab.begin(), lab.end(), 1);
  const auto n0 = static_cast<long>(lab.size()) - n1;
  if (n0 == n1) return {};
  const int smaller = n1 < n0 ? 1 : 0;
  std::set<int> out;
  for (std::size_t i = 0; i < cs.size(); ++i)
    if (lab[i] == smaller) out.insert(cs[i].client_id);
  return sorted_unique(out);
}

std::vector<int> defense_spectral_signature(const std::vector<GradientContribution>& cs, double removal_fraction) {
  std::vector<std::vector<double>> blocks;
  for (const auto& c : cs) blocks.push_back(c.block);
  auto scores = spectral_scores(blocks);
  std::stable_sort(scores.begin(), scores.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
  const auto budget = static_cast<std::size_t>(std::floor(removal_fraction * static_cast<double>(cs.size()) + 0.5));
  std::set<int> out;
  for (std::size_t i = 0; i < std::min(budget, scores.size()); ++i) out.insert(cs[scores[i].index].client_id);
  return sorted_unique(out);
}

namespace {

std::map<int, std::vector<GradientContribution>> flagged_groups(const std::vector<GradientContribution>& all,
                                                                double s_min, RoundCentering centering,
                                                                WindowVerdict& verdict) {
  std::map<int, std::vector<GradientContribution>> by_class, out;
  for (const auto& c : all) by_class[c.class_id].push_back(c);
  for (auto& [cls, v] : by_class) center_by_round(v, centering);
  std::vector<SpatialProjection> projections;
  for (auto& [cls, v] : by_class)
    if (v.size() >= 3) projections.push_back(spatial_project(v));
  for (int c : flag_suspect_classes(projections, s_min)) {
    verdict.flagged_classes.push_back(c);
    out[c] = by_class[c];
  }
  return out;
}

}  // namespace

WindowVerdict SmallerClusterDefense::on_window(int window_index, const std::vector<GradientContribution>& cs) {
  WindowVerdict v;
  std::set<int> revoke;
  for (const auto& [cls, group] : flagged_groups(cs, s_min_, centering_, v))
    for (int id : defense_spatial_smaller_cluster(group, derive_seed(seed_, "window-cluster", cls, window_index)))
      revoke.insert(id);
  v.revoked = sorted_unique(revoke);
  return v;
}

WindowVerdict SpectralSignatureDefense::on_window(int, const std::vector<GradientContribution>& cs) {
  WindowVerdict v;
  std::set<int> revoke;
  for (const auto& [cls, group] : flagged_groups(cs, s_min_, centering_, v))
    for (int id : defense_spectral_signature(group, removal_)) revoke.insert(id);
  v.revoked = sorted_unique(revoke);
  return v;
}

}  // namespace fedguard
