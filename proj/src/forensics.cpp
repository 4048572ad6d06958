#include "fedguard/forensics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <Eigen/Dense>

#include "fedguard/rng.hpp"

namespace fedguard {

namespace {

// Top-2 eigenpairs of the sample covariance of centered rows Z (n x D). Uses
// the n x n Gram matrix when it is the smaller problem.
void top_two(const Eigen::MatrixXd& Z, double lam[2], Eigen::VectorXd vec[2]) {
  const Eigen::Index n = Z.rows(), D = Z.cols();
  const double denom = static_cast<double>(n - 1);
  if (n < D) {
    Eigen::MatrixXd G = Z * Z.transpose() / denom;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
    for (int k = 0; k < 2; ++k) {
      const Eigen::Index idx = n - 1 - k;
      lam[k] = std::max(0.0, es.eigenvalues()(idx));
      Eigen::VectorXd v = Z.transpose() * es.eigenvectors().col(idx);
      const double nv = v.norm();
      vec[k] = nv > 0 ? Eigen::VectorXd(v / nv) : Eigen::VectorXd::Zero(D);
    }
  } else {
    Eigen::MatrixXd S = Z.transpose() * Z / denom;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
    for (int k = 0; k < 2; ++k) {
      lam[k] = std::max(0.0, es.eigenvalues()(D - 1 - k));
      vec[k] = es.eigenvectors().col(D - 1 - k);
    }
  }
}

// Any unit vector orthogonal to u.
Eigen::VectorXd orthogonal_to(const Eigen::VectorXd& u) {
  Eigen::Index j = 0;
  u.cwiseAbs().minCoeff(&j);
  Eigen::VectorXd e = Eigen::VectorXd::Zero(u.size());
  e(j) = 1.0;
  e -= u.dot(e) * u;
  return e / e.norm();
}

void canonicalize_sign(Eigen::VectorXd& v, Eigen::VectorXd& coords) {
  if (coords.size() == 0) return;
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < coords.size(); ++i)
    if (std::abs(coords(i)) > std::abs(coords(best))) best = i;
  if (coords(best) < 0) {
    v = -v;
    coords = -coords;
  }
}

double sample_std(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double s = 0;
  for (double x : v) s += (x - mean) * (x - mean);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

double sq_dist(const Point2& a, const Point2& b) {
  double s = 0;
  for (std::size_t j = 0; j < a.size(); ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
  return s;
}

std::vector<int> canonical_labels(const std::vector<int>& raw) {
  std::map<int, int> remap;
  std::vector<int> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    auto it = remap.find(raw[i]);
    if (it == remap.end()) it = remap.emplace(raw[i], static_cast<int>(remap.size())).first;
    out[i] = it->second;
  }
  return out;
}

// Fewer than k distinct points: group equal points and force the trailing
// indices into the unused labels so every cluster is nonempty.
std::vector<int> degenerate_partition(const std::vector<Point2>& pts, int k) {
  std::vector<int> lab(pts.size(), 0);
  std::vector<Point2> distinct;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    auto it = std::find(distinct.begin(), distinct.end(), pts[i]);
    if (it == distinct.end()) {
      lab[i] = static_cast<int>(distinct.size());
      distinct.push_back(pts[i]);
    } else {
      lab[i] = static_cast<int>(it - distinct.begin());
    }
  }
  int next = static_cast<int>(distinct.size());
  for (std::size_t i = pts.size(); i-- > 0 && next < k;) lab[i] = next++;
  return canonical_labels(lab);
}

std::size_t count_distinct(const std::vector<Point2>& pts) {
  std::vector<Point2> d;
  for (const auto& p : pts)
    if (std::find(d.begin(), d.end(), p) == d.end()) d.push_back(p);
  return d.size();
}

std::vector<int> kmeans(const std::vector<Point2>& pts, int k, std::uint64_t seed, int restarts = 10) {
  const std::size_t n = pts.size(), dim = pts[0].size();
  std::vector<int> best;
  double best_inertia = INFINITY;
  for (int r = 0; r < restarts; ++r) {
    Rng rng(derive_seed(seed, "kmeans", 0, static_cast<std::uint64_t>(r)));
    // k-means++ seeding
    std::vector<Point2> centers{pts[rng.below(n)]};
    std::vector<double> d2(n);
    while (static_cast<int>(centers.size()) < k) {
      double total = 0;
      for (std::size_t i = 0; i < n; ++i) {
        d2[i] = INFINITY;
        for (const auto& c : centers) d2[i] = std::min(d2[i], sq_dist(pts[i], c));
        total += d2[i];
      }
      if (total <= 0) break;
      double u = rng.uniform() * total;
      std::size_t pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        u -= d2[i];
        if (u < 0) {
          pick = i;
          break;
        }
      }
      centers.push_back(pts[pick]);
    }
    if (static_cast<int>(centers.size()) < k) continue;

    std::vector<int> lab(n, -1);
    for (int it = 0; it < 300; ++it) {
      bool changed = false;
      for (std::size_t i = 0; i < n; ++i) {
        int arg = 0;
        double bd = sq_dist(pts[i], centers[0]);
        for (int c = 1; c < k; ++c) {
          const double dd = sq_dist(pts[i], centers[c]);
          if (dd < bd) {
            bd = dd;
            arg = c;
          }
        }
        if (lab[i] != arg) {
          lab[i] = arg;
          changed = true;
        }
      }
      std::vector<Point2> sum(k, Point2(dim, 0.0));
      std::vector<int> cnt(k, 0);
      for (std::size_t i = 0; i < n; ++i) {
        ++cnt[lab[i]];
        for (std::size_t j = 0; j < dim; ++j) sum[lab[i]][j] += pts[i][j];
      }
      for (int c = 0; c < k; ++c)
        if (cnt[c] > 0)
          for (std::size_t j = 0; j < dim; ++j) centers[c][j] = sum[c][j] / cnt[c];
      if (!changed) break;
    }
    std::vector<int> cnt(k, 0);
    double inertia = 0;
    for (std::size_t i = 0; i < n; ++i) {
      ++cnt[lab[i]];
      inertia += sq_dist(pts[i], centers[lab[i]]);
    }
    if (std::count(cnt.begin(), cnt.end(), 0) > 0) continue;
    if (inertia < best_inertia) {
      best_inertia = inertia;
      best = lab;
    }
  }
  if (best.empty()) return degenerate_partition(pts, k);
  return canonical_labels(best);
}

std::vector<int> ward(const std::vector<Point2>& pts, int k) {
  const std::size_t n = pts.size(), dim = pts[0].size();
  std::vector<Point2> centroid = pts;
  std::vector<double> size(n, 1.0);
  std::vector<int> owner(n);
  std::iota(owner.begin(), owner.end(), 0);
  std::vector<char> alive(n, 1);
  std::size_t clusters = n;
  while (clusters > static_cast<std::size_t>(k)) {
    double best = INFINITY;
    std::size_t ba = 0, bb = 0;
    for (std::size_t a = 0; a < n; ++a) {
      if (!alive[a]) continue;
      for (std::size_t b = a + 1; b < n; ++b) {
        if (!alive[b]) continue;
        const double cost = size[a] * size[b] / (size[a] + size[b]) * sq_dist(centroid[a], centroid[b]);
        if (cost < best) {
          best = cost;
          ba = a;
          bb = b;
        }
      }
    }
    for (std::size_t j = 0; j < dim; ++j)
      centroid[ba][j] = (size[ba] * centroid[ba][j] + size[bb] * centroid[bb][j]) / (size[ba] + size[bb]);
    size[ba] += size[bb];
    alive[bb] = 0;
    for (auto& o : owner)
      if (o == static_cast<int>(bb)) o = static_cast<int>(ba);
    --clusters;
  }
  return canonical_labels(owner);
}

std::vector<int> spectral(const std::vector<Point2>& pts, int k, std::uint64_t seed) {
  const Eigen::Index n = static_cast<Eigen::Index>(pts.size());
  std::vector<double> dists;
  Eigen::MatrixXd D2(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      D2(i, j) = sq_dist(pts[i], pts[j]);
      if (j > i) dists.push_back(std::sqrt(D2(i, j)));
    }
  std::nth_element(dists.begin(), dists.begin() + dists.size() / 2, dists.end());
  const double sigma = dists[dists.size() / 2];
  if (!(sigma > 0)) return kmeans(pts, k, seed);

  Eigen::MatrixXd W = (-D2 / (2 * sigma * sigma)).array().exp();
  W.diagonal().setZero();
  Eigen::VectorXd deg = W.rowwise().sum();
  for (Eigen::Index i = 0; i < n; ++i)
    if (deg(i) <= 1e-300) deg(i) = 1e-300;
  const Eigen::VectorXd dinv = deg.array().rsqrt();
  Eigen::MatrixXd L = -(dinv.asDiagonal() * W * dinv.asDiagonal());
  L.diagonal().array() += 1.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(L);

  if (k == 2) {
    // Fiedler vector mapped back to the random-walk embedding
    const Eigen::VectorXd f = dinv.cwiseProduct(es.eigenvectors().col(1));
    std::vector<double> vals(f.data(), f.data() + n);
    return canonical_labels(two_means_1d(vals).labels);
  }
  std::vector<Point2> emb(n, Point2(k));
  for (Eigen::Index i = 0; i < n; ++i) {
    double norm = 0;
    for (int c = 0; c < k; ++c) norm += es.eigenvectors()(i, c) * es.eigenvectors()(i, c);
    norm = std::sqrt(norm);
    for (int c = 0; c < k; ++c) emb[i][c] = norm > 0 ? es.eigenvectors()(i, c) / norm : 0.0;
  }
  return kmeans(emb, k, seed);
}

}  // namespace

SpatialProjection spatial_project(const std::vector<std::vector<double>>& rows) {
  if (rows.size() < 3) throw std::invalid_argument("spatial projection needs at least 3 contributions");
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index D = static_cast<Eigen::Index>(rows[0].size());
  if (D < 2) throw std::invalid_argument("spatial projection needs dimension >= 2");
  Eigen::MatrixXd Z(n, D);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (static_cast<Eigen::Index>(rows[i].size()) != D) throw std::invalid_argument("ragged rows");
    for (Eigen::Index j = 0; j < D; ++j) Z(i, j) = rows[i][j];
  }
  Z.rowwise() -= Z.colwise().mean();

  double lam[2];
  Eigen::VectorXd vec[2];
  top_two(Z, lam, vec);

  SpatialProjection sp;
  const double tol = 1e-12 * std::max(lam[0], 1e-300);
  if (lam[0] <= 1e-300) {
    // all rows identical
    lam[0] = 0;
    vec[0] = Eigen::VectorXd::Zero(D);
    vec[0](0) = 1.0;
    sp.rank_deficient = true;
  }
  if (lam[1] <= tol || vec[1].norm() == 0) {
    lam[1] = 0;
    vec[1] = orthogonal_to(vec[0]);
    sp.rank_deficient = true;
  }
  Eigen::VectorXd c1 = Z * vec[0];
  Eigen::VectorXd c2 = sp.rank_deficient && lam[1] == 0 ? Eigen::VectorXd(Eigen::VectorXd::Zero(n))
                                                         : Eigen::VectorXd(Z * vec[1]);
  canonicalize_sign(vec[0], c1);
  canonicalize_sign(vec[1], c2);

  sp.lambda1 = lam[0];
  sp.lambda2 = lam[1];
  sp.v1.assign(vec[0].data(), vec[0].data() + D);
  sp.v2.assign(vec[1].data(), vec[1].data() + D);
  for (Eigen::Index i = 0; i < n; ++i) sp.points.push_back({0, 0, c1(i), c2(i)});
  return sp;
}

SpatialProjection spatial_project(const std::vector<GradientContribution>& cs) {
  std::vector<std::vector<double>> rows;
  for (const auto& c : cs) rows.push_back(c.block);
  auto sp = spatial_project(rows);
  if (!cs.empty()) sp.class_id = cs.front().class_id;
  for (std::size_t i = 0; i < cs.size(); ++i) {
    sp.points[i].client_id = cs[i].client_id;
    sp.points[i].round = cs[i].round;
  }
  return sp;
}

Split1D two_means_1d(const std::vector<double>& values) {
  const std::size_t n = values.size();
  if (n < 2) throw std::invalid_argument("2-means needs at least 2 values");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
  std::vector<double> pre(n + 1, 0), pre2(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    pre[i + 1] = pre[i] + values[order[i]];
    pre2[i + 1] = pre2[i] + values[order[i]] * values[order[i]];
  }
  auto sse = [&](std::size_t a, std::size_t b) {  // [a, b)
    const double s = pre[b] - pre[a], s2 = pre2[b] - pre2[a];
    return std::max(0.0, s2 - s * s / static_cast<double>(b - a));
  };
  std::size_t best_split = 1;
  double best = INFINITY;
  for (std::size_t s = 1; s < n; ++s) {
    const double v = sse(0, s) + sse(s, n);
    if (v < best) {
      best = v;
      best_split = s;
    }
  }
  Split1D out;
  out.labels.assign(n, 0);
  for (std::size_t i = best_split; i < n; ++i) out.labels[order[i]] = 1;
  std::vector<double> g[2];
  for (std::size_t i = 0; i < n; ++i) g[out.labels[i]].push_back(values[i]);
  for (int c = 0; c < 2; ++c) {
    out.mean[c] = std::accumulate(g[c].begin(), g[c].end(), 0.0) / static_cast<double>(g[c].size());
    out.stdev[c] = sample_std(g[c], out.mean[c]);
  }
  return out;
}

double separation_score(const std::vector<double>& values) {
  const auto s = two_means_1d(values);
  return std::abs(s.mean[0] - s.mean[1]) / (s.stdev[0] + s.stdev[1] + 1e-12);
}

std::set<int> flag_suspect_classes(const std::vector<SpatialProjection>& projections, double s_min) {
  std::set<int> out;
  for (const auto& p : projections) {
    if (p.points.size() < 3) continue;
    std::vector<double> x;
    for (const auto& q : p.points) x.push_back(q.ssc1);
    if (separation_score(x) >= s_min) out.insert(p.class_id);
  }
  return out;
}

std::vector<int> cluster_points(const std::vector<Point2>& points, ClusterAlgo algo, int k, std::uint64_t seed) {
  if (k < 1 || points.size() < static_cast<std::size_t>(k)) throw std::invalid_argument("need at least k points");
  if (k == 1) return std::vector<int>(points.size(), 0);
  if (count_distinct(points) < static_cast<std::size_t>(k)) return degenerate_partition(points, k);
  switch (algo) {
    case ClusterAlgo::KMeans: return kmeans(points, k, seed);
    case ClusterAlgo::Agglomerative: return ward(points, k);
    case ClusterAlgo::Spectral: return spectral(points, k, seed);
  }
  return kmeans(points, k, seed);
}

std::optional<double> temporal_signature(const std::vector<std::vector<double>>& g, int omega) {
  if (omega < 1) throw std::invalid_argument("omega must be >= 1");
  const auto n = static_cast<long>(g.size());
  if (n <= omega) return std::nullopt;
  double sum = 0;
  for (long j = omega; j < n; ++j)
    for (long k = 1; k <= omega; ++k)
      for (std::size_t t = 0; t < g[j].size(); ++t) sum += std::abs(g[j][t] - g[j - k][t]);
  return sum / static_cast<double>(omega * n - static_cast<long>(omega) * omega);
}

std::optional<int> identify_suspicious_cluster(const std::map<int, ClientTemporal>& clients,
                                               const std::vector<int>& cluster_sizes) {
  const int K = static_cast<int>(cluster_sizes.size());
  std::vector<double> sum(K, 0.0);
  std::vector<int> cnt(K, 0);
  for (const auto& [id, ct] : clients)
    for (const auto& [c, v] : ct.per_cluster)
      if (c >= 0 && c < K) {
        sum[c] += v;
        ++cnt[c];
      }
  for (int c = 0; c < K; ++c)
    if (cnt[c] == 0) return std::nullopt;
  int best = 0;
  for (int c = 1; c < K; ++c) {
    const double mb = sum[best] / cnt[best], mc = sum[c] / cnt[c];
    if (mc < mb || (mc == mb && cluster_sizes[c] < cluster_sizes[best])) best = c;
  }
  return best;
}

Zone SigmaZones::zone_of(double x, int cluster) const {
  if (x >= lo[cluster] && x <= hi[cluster]) return cluster == 0 ? Zone::Confident0 : Zone::Confident1;
  if (in_uncertain(x)) return Zone::Uncertain;
  if (stdev[cluster] == 0.0) return Zone::Uncertain;
  return Zone::Outside;
}

SigmaZones fit_sigma_zones(const std::vector<double>& values, const std::vector<int>& assignment,
                           double confidence) {
  SigmaZones z;
  z.z = sigma_multiplier(confidence);
  if (z.z == 0) throw std::invalid_argument("confidence must be 0.68, 0.95 or 0.99");
  std::vector<double> g[2];
  for (std::size_t i = 0; i < values.size(); ++i) g[assignment[i] == 0 ? 0 : 1].push_back(values[i]);
  for (int c = 0; c < 2; ++c) {
    if (g[c].empty()) throw std::invalid_argument("sigma zones need two nonempty clusters");
    z.mean[c] = std::accumulate(g[c].begin(), g[c].end(), 0.0) / static_cast<double>(g[c].size());
    z.stdev[c] = sample_std(g[c], z.mean[c]);
    z.lo[c] = z.mean[c] - z.z * z.stdev[c];
    z.hi[c] = z.mean[c] + z.z * z.stdev[c];
  }
  const int left = z.mean[0] <= z.mean[1] ? 0 : 1, right = 1 - left;
  if (z.hi[left] < z.lo[right]) {
    z.uncertain_empty = false;
    z.uncertain_lo = z.hi[left];
    z.uncertain_hi = z.lo[right];
  }
  return z;
}

ZonePartition sigma_zone_partition(const std::vector<double>& values, const std::vector<int>& assignment,
                                   double confidence) {
  ZonePartition out{fit_sigma_zones(values, assignment, confidence), {}};
  for (std::size_t i = 0; i < values.size(); ++i) out.labels.push_back(out.zones.zone_of(values[i], assignment[i]));
  return out;
}

void center_by_round(std::vector<GradientContribution>& v, RoundCentering how) {
  if (how == RoundCentering::None) return;
  std::map<int, std::vector<std::size_t>> rounds;
  for (std::size_t i = 0; i < v.size(); ++i) rounds[v[i].round].push_back(i);
  for (const auto& [r, idx] : rounds) {
    const std::size_t D = v[idx[0]].block.size();
    std::vector<double> center(D, 0.0), col(idx.size());
    for (std::size_t t = 0; t < D; ++t) {
      for (std::size_t j = 0; j < idx.size(); ++j) col[j] = v[idx[j]].block[t];
      if (how == RoundCentering::Median) {
        std::sort(col.begin(), col.end());
        const std::size_t n = col.size();
        center[t] = n % 2 ? col[n / 2] : 0.5 * (col[n / 2 - 1] + col[n / 2]);
      } else {
        for (double x : col) center[t] += x;
        center[t] /= static_cast<double>(col.size());
      }
    }
    for (auto i : idx)
      for (std::size_t t = 0; t < D; ++t) v[i].block[t] -= center[t];
  }
}

ForensicParams forensic_params_from(const ExperimentConfig& cfg) {
  ForensicParams p;
  p.confidence = cfg.federation.confidence_level;
  p.omega = cfg.federation.temporal_window;
  p.watchlist_threshold = cfg.federation.watchlist_threshold;
  p.separation_threshold = cfg.defense.separation_threshold;
  p.clustering = cfg.defense.clustering;
  p.space = cfg.defense.dissimilarity_space;
  p.centering = cfg.defense.round_centering;
  p.seed = cfg.federation.master_seed;
  return p;
}

WindowVerdict ForensicDefense::on_window(int window_index, const std::vector<GradientContribution>& contributions) {
  std::vector<GradientContribution> all;
  for (const auto& c : carry_)
    if (!dossiers_.count(c.client_id) || dossiers_[c.client_id].verdict != Verdict::Revoked) all.push_back(c);
  all.insert(all.end(), contributions.begin(), contributions.end());
  carry_.clear();

  WindowVerdict verdict;
  std::map<int, std::vector<GradientContribution>> by_class;
  for (const auto& c : all) by_class[c.class_id].push_back(c);
  for (auto& [cls, v] : by_class) center_by_round(v, p_.centering);
  for (auto& [cls, v] : by_class)
    std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
      return a.round != b.round ? a.round < b.round : a.client_id < b.client_id;
    });

  std::vector<SpatialProjection> projections;
  for (const auto& [cls, v] : by_class)
    if (v.size() >= 3) projections.push_back(spatial_project(v));
  const auto flagged = flag_suspect_classes(projections, p_.separation_threshold);
  verdict.flagged_classes.assign(flagged.begin(), flagged.end());
  if (flagged.empty()) return verdict;

  std::set<int> revoke, watch;
  for (auto& proj : projections) {
    if (!flagged.count(proj.class_id)) continue;
    const auto& cs = by_class[proj.class_id];
    std::vector<Point2> pts;
    for (const auto& q : proj.points) pts.push_back({q.ssc1, q.ssc2});
    proj.assignment = cluster_points(pts, p_.clustering, 2,
                                     derive_seed(p_.seed, "window-cluster", proj.class_id, window_index));
    std::vector<int> sizes(2, 0);
    for (int a : proj.assignment) ++sizes[a];

    // time-ordered trajectories per (client, cluster); points are already round-sorted
    std::map<int, std::map<int, std::vector<std::vector<double>>>> traj;
    std::map<int, std::vector<std::size_t>> rows_of;
    for (std::size_t i = 0; i < cs.size(); ++i) {
      const int id = cs[i].client_id, cl = proj.assignment[i];
      traj[id][cl].push_back(p_.space == DissimSpace::Raw ? cs[i].block : pts[i]);
      rows_of[id].push_back(i);
    }
    std::map<int, ClientTemporal> temporal;
    for (const auto& [id, per] : traj) {
      ClientTemporal ct;
      for (const auto& [cl, g] : per)
        if (auto s = temporal_signature(g, p_.omega)) ct.per_cluster[cl] = *s;
      for (const auto& [cl, s] : ct.per_cluster)
        if (!ct.value || s < *ct.value) {
          ct.value = s;
          ct.assigned_cluster = cl;
        }
      temporal[id] = ct;
    }

    const auto suspicious = identify_suspicious_cluster(temporal, sizes);
    if (!suspicious) {
      carry_ = all;
      verdict.deferred = true;
      verdict.flagged_classes.clear();
      return verdict;
    }

    std::vector<double> x1;
    for (const auto& p : pts) x1.push_back(p[0]);
    const auto spatial = sigma_zone_partition(x1, proj.assignment, p_.confidence);

    std::vector<int> ids;
    std::vector<double> sig;
    for (const auto& [id, ct] : temporal)
      if (ct.value) {
        ids.push_back(id);
        sig.push_back(*ct.value);
      }
    std::set<int> temporal_uncertain;
    if (sig.size() >= 2) {
      const auto split = two_means_1d(sig);
      const auto tz = fit_sigma_zones(sig, split.labels, p_.confidence);
      for (std::size_t i = 0; i < ids.size(); ++i)
        if (tz.zone_of(sig[i], split.labels[i]) == Zone::Uncertain) temporal_uncertain.insert(ids[i]);
    }

    for (const auto& [id, rows] : rows_of) {
      if (dossiers_[id].verdict == Verdict::Revoked) continue;
      bool any_uncertain = temporal_uncertain.count(id) > 0;
      for (auto i : rows)
        if (spatial.labels[i] == Zone::Uncertain) any_uncertain = true;
      if (any_uncertain) watch.insert(id);

      const auto& ct = temporal[id];
      if (!ct.value || ct.assigned_cluster != *suspicious || temporal_uncertain.count(id)) continue;
      bool clean = true;
      for (auto i : rows)
        if (proj.assignment[i] == ct.assigned_cluster && spatial.labels[i] == Zone::Uncertain) clean = false;
      if (clean) revoke.insert(id);
    }
  }

  for (int id : watch) {
    auto& d = dossiers_[id];
    ++d.watchlist_count;
    if (d.verdict == Verdict::Active) d.verdict = Verdict::Watchlisted;
    if (d.watchlist_count >= p_.watchlist_threshold) revoke.insert(id);
  }
  for (int id : revoke) dossiers_[id].verdict = Verdict::Revoked;
  verdict.revoked.assign(revoke.begin(), revoke.end());
  verdict.watchlisted.assign(watch.begin(), watch.end());
  return verdict;
}

}  // namespace fedguard
