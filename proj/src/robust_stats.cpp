#include "fedguard/robust_stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fedguard {

EigenPair top_eigenpair(const Eigen::MatrixXd& samples) {
  if (samples.rows() < 2) throw std::invalid_argument("need at least 2 samples");
  Eigen::MatrixXd Z = samples.rowwise() - samples.colwise().mean();
  const Eigen::MatrixXd S = Z.transpose() * Z / static_cast<double>(samples.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
  const Eigen::Index d = S.rows();
  EigenPair out;
  out.lambda = std::max(0.0, es.eigenvalues()(d - 1));
  out.v = es.eigenvectors().col(d - 1);
  if (out.lambda <= 0.0) {
    out.lambda = 0.0;
    out.v = Eigen::VectorXd::Zero(d);
    out.v(0) = 1.0;
    out.degenerate = true;
    return out;
  }
  Eigen::Index j = 0;
  out.v.cwiseAbs().maxCoeff(&j);
  if (out.v(j) < 0) out.v = -out.v;
  return out;
}

static double top_eigenvalue(const Eigen::MatrixXd& cov) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

double phi_squared(const MixtureSpec& mix) {
  return std::max(top_eigenvalue(mix.honest.cov), top_eigenvalue(mix.poisoned.cov));
}

PremiseReport separation_premise(const MixtureSpec& mix) {
  if (!(mix.m > 0 && mix.m < 0.5)) throw std::invalid_argument("m must be in (0, 0.5)");
  PremiseReport r;
  r.phi_sq = phi_squared(mix);
  r.delta_sq = (mix.honest.mean - mix.poisoned.mean).squaredNorm();
  r.bound = 6.0 * r.phi_sq / mix.m;
  r.holds = r.delta_sq >= r.bound;
  return r;
}

Eigen::MatrixXd sample_population(const PopulationSpec& pop, int n, Rng& rng) {
  const Eigen::Index d = pop.mean.size();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(pop.cov);
  const Eigen::MatrixXd A = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  Eigen::MatrixXd out(n, d);
  Eigen::VectorXd z(d);
  for (int i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) z(j) = rng.normal();
    out.row(i) = (pop.mean + A * z).transpose();
  }
  return out;
}

SeparabilityResult separability_check(const MixtureSpec& mix, int n_samples, Rng& rng) {
  if (n_samples < 1000) throw std::invalid_argument("separability check needs at least 1000 samples");
  SeparabilityResult r;
  r.n_honest = static_cast<int>(std::llround((1.0 - mix.m) * n_samples));
  r.n_poisoned = n_samples - r.n_honest;
  const Eigen::MatrixXd H = sample_population(mix.honest, r.n_honest, rng);
  const Eigen::MatrixXd P = sample_population(mix.poisoned, r.n_poisoned, rng);
  Eigen::MatrixXd G(n_samples, H.cols());
  G << H, P;
  const auto top = top_eigenpair(G);
  const Eigen::RowVectorXd mu = G.colwise().mean();

  struct Proj {
    double v;
    bool honest;
  };
  std::vector<Proj> proj;
  for (Eigen::Index i = 0; i < G.rows(); ++i) proj.push_back({std::abs((G.row(i) - mu).dot(top.v)), i < H.rows()});
  std::sort(proj.begin(), proj.end(), [](const Proj& a, const Proj& b) { return a.v < b.v; });

  // Walk thresholds upward; below position i sit the i smallest projections.
  const double nh = r.n_honest, np = r.n_poisoned;
  int honest_below = 0, poisoned_below = 0;
  double best = INFINITY;
  auto consider = [&](double tau) {
    const double hv = (nh - honest_below) / nh;
    const double pv = poisoned_below / np;
    const double worst = std::max(hv, pv);
    if (worst < best) {
      best = worst;
      r.tau = tau;
      r.honest_violation = hv;
      r.poisoned_violation = pv;
    }
  };
  consider(proj.front().v - 1.0);
  for (std::size_t i = 0; i < proj.size(); ++i) {
    (proj[i].honest ? honest_below : poisoned_below)++;
    if (i + 1 < proj.size() && proj[i + 1].v == proj[i].v) continue;
    consider(i + 1 < proj.size() ? 0.5 * (proj[i].v + proj[i + 1].v) : proj[i].v + 1.0);
  }
  r.separable = r.honest_violation < mix.m && r.poisoned_violation < mix.m;
  return r;
}

static Eigen::MatrixXd random_covariance(int d, Rng& rng) {
  Eigen::MatrixXd M(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) M(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(M);
  const Eigen::MatrixXd Q = qr.householderQ();
  Eigen::VectorXd lam(d);
  for (int i = 0; i < d; ++i) lam(i) = rng.uniform(0.1, 1.0);
  return Q * lam.asDiagonal() * Q.transpose();
}

MixtureSpec random_premise_mixture(int d, double m, double slack, Rng& rng) {
  MixtureSpec mix;
  mix.m = m;
  mix.honest.cov = random_covariance(d, rng);
  mix.poisoned.cov = random_covariance(d, rng);
  mix.honest.mean = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd dir(d);
  for (int i = 0; i < d; ++i) dir(i) = rng.normal();
  dir.normalize();
  const double norm = std::sqrt(slack * 6.0 * phi_squared(mix) / m);
  mix.poisoned.mean = mix.honest.mean + norm * dir;
  return mix;
}

SynthStream synth_two_population_stream(const MixtureSpec& mix, int n_clients, double m, int rounds,
                                        const Eigen::VectorXd& drift, Rng& rng, double jitter_fraction) {
  if (m < 0.0 || m >= 0.5) throw std::invalid_argument("m must be in [0, 0.5)");
  const int n_mal = static_cast<int>(std::floor(m * n_clients + 1e-9));
  SynthStream s;
  for (auto i : rng.sample_without_replacement(n_clients, n_mal)) s.malicious.push_back(static_cast<int>(i));
  std::sort(s.malicious.begin(), s.malicious.end());
  std::vector<char> is_mal(n_clients, 0);
  for (int i : s.malicious) is_mal[i] = 1;

  const Eigen::Index d = mix.honest.mean.size();
  const double jitter = jitter_fraction * (mix.honest.mean - mix.poisoned.mean).norm();
  std::vector<Eigen::VectorXd> anchor(n_clients);
  for (int i = 0; i < n_clients; ++i)
    if (is_mal[i]) anchor[i] = sample_population(mix.poisoned, 1, rng).row(0).transpose();

  for (int r = 0; r < rounds; ++r)
    for (int i = 0; i < n_clients; ++i) {
      Eigen::VectorXd x;
      if (is_mal[i]) {
        x = anchor[i];
        for (Eigen::Index j = 0; j < d; ++j) x(j) += jitter * rng.normal();
      } else {
        x = sample_population(mix.honest, 1, rng).row(0).transpose() + static_cast<double>(r) * drift;
      }
      s.contributions.push_back({i, r, 0, std::vector<double>(x.data(), x.data() + d)});
    }
  return s;
}

Eigen::VectorXd default_drift(const MixtureSpec& mix, Rng& rng) {
  const Eigen::Index d = mix.honest.mean.size();
  Eigen::VectorXd dir(d);
  for (Eigen::Index i = 0; i < d; ++i) dir(i) = rng.normal();
  return 0.02 * std::sqrt(phi_squared(mix)) * dir.normalized();
}

}  // namespace fedguard
