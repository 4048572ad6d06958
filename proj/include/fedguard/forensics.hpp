#pragma once

#include <map>
#include <optional>
#include <set>
#include <vector>

#include "fedguard/config.hpp"
#include "fedguard/defense.hpp"

namespace fedguard {

struct ProjectedPoint {
  int client_id = 0;
  int round = 0;
  double ssc1 = 0, ssc2 = 0;
};

struct SpatialProjection {
  int class_id = 0;
  std::vector<ProjectedPoint> points;
  double lambda1 = 0, lambda2 = 0;
  std::vector<double> v1, v2;
  std::vector<int> assignment;  // filled by the caller after clustering
  bool rank_deficient = false;
};

// Mean-centers the rows, takes the top two eigenpairs of their sample
// covariance and projects onto them. Each axis's sign is fixed so the point
// with the largest absolute coordinate is positive.
SpatialProjection spatial_project(const std::vector<std::vector<double>>& rows);
SpatialProjection spatial_project(const std::vector<GradientContribution>& contributions);

struct Split1D {
  std::vector<int> labels;  // 0 = lower-mean group
  double mean[2] = {0, 0};
  double stdev[2] = {0, 0};  // population standard deviation
};

// Optimal 2-means of scalars (exact, over all sorted split points).
Split1D two_means_1d(const std::vector<double>& values);

// |mu0 - mu1| / (sigma0 + sigma1 + eps) of the 1-D 2-means split.
double separation_score(const std::vector<double>& values);

std::set<int> flag_suspect_classes(const std::vector<SpatialProjection>& projections, double s_min = 2.0);

// Subtracts, per round, the coordinate-wise mean or median of that round's
// blocks. Expects one class's contributions.
void center_by_round(std::vector<GradientContribution>& contributions, RoundCentering how);

using Point2 = std::vector<double>;

// k-way partition of points; labels are canonical (clusters numbered by the
// order of their first point).
std::vector<int> cluster_points(const std::vector<Point2>& points, ClusterAlgo algo, int k = 2,
                                std::uint64_t seed = 0);

// Windowed mean L1 dissimilarity between each point and its omega predecessors.
// nullopt when the trajectory has at most omega points.
std::optional<double> temporal_signature(const std::vector<std::vector<double>>& trajectory, int omega);

// Per-client temporal signatures within one window.
struct ClientTemporal {
  std::map<int, double> per_cluster;  // cluster -> signature, defined values only
  std::optional<double> value;        // min over clusters
  int assigned_cluster = -1;          // argmin cluster
};

// Mean per-cluster signature over clients with a defined value; argmin wins,
// exact ties go to the smaller cluster. nullopt if a cluster has no defined value.
std::optional<int> identify_suspicious_cluster(const std::map<int, ClientTemporal>& clients,
                                               const std::vector<int>& cluster_sizes);

enum class Zone { Confident0, Confident1, Uncertain, Outside };

struct SigmaZones {
  double mean[2] = {0, 0};
  double stdev[2] = {0, 0};
  double lo[2] = {0, 0}, hi[2] = {0, 0};
  int z = 3;
  // open interval between the two confident intervals; empty when they overlap
  bool uncertain_empty = true;
  double uncertain_lo = 0, uncertain_hi = 0;

  bool in_uncertain(double x) const { return !uncertain_empty && x > uncertain_lo && x < uncertain_hi; }
  Zone zone_of(double x, int cluster) const;
};

SigmaZones fit_sigma_zones(const std::vector<double>& values, const std::vector<int>& assignment,
                           double confidence);

struct ZonePartition {
  SigmaZones zones;
  std::vector<Zone> labels;
};
ZonePartition sigma_zone_partition(const std::vector<double>& values, const std::vector<int>& assignment,
                                   double confidence);

enum class Verdict { Active, Watchlisted, Revoked };

struct ClientDossier {
  int watchlist_count = 0;
  Verdict verdict = Verdict::Active;
  std::optional<double> last_signature;
};

struct ForensicParams {
  double confidence = 0.99;
  int omega = 1;
  int watchlist_threshold = 2;
  double separation_threshold = 2.0;
  RoundCentering centering = RoundCentering::Median;
  ClusterAlgo clustering = ClusterAlgo::KMeans;
  DissimSpace space = DissimSpace::Raw;
  std::uint64_t seed = 0;
};

ForensicParams forensic_params_from(const ExperimentConfig& cfg);

// Spatial + temporal + uncertainty pipeline with persistent dossiers.
class ForensicDefense : public Defense {
 public:
  explicit ForensicDefense(ForensicParams p) : p_(p) {}
  std::string name() const override { return "stdlens"; }
  WindowVerdict on_window(int window_index, const std::vector<GradientContribution>& contributions) override;

  const std::map<int, ClientDossier>& dossiers() const { return dossiers_; }

 private:
  ForensicParams p_;
  std::map<int, ClientDossier> dossiers_;
  std::vector<GradientContribution> carry_;
};

}  // namespace fedguard
