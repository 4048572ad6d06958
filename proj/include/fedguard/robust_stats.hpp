#pragma once

#include <vector>

#include <Eigen/Dense>

#include "fedguard/defense.hpp"
#include "fedguard/rng.hpp"

namespace fedguard {

struct PopulationSpec {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

// G = (1-m) H + m P
struct MixtureSpec {
  PopulationSpec honest;
  PopulationSpec poisoned;
  double m = 0.2;
};

struct EigenPair {
  Eigen::VectorXd v;
  double lambda = 0;
  bool degenerate = false;  // zero covariance
};

// Top eigenpair of the sample covariance of `samples` (one row per sample),
// with the largest-magnitude entry of v made positive.
EigenPair top_eigenpair(const Eigen::MatrixXd& samples);

// Largest top eigenvalue of the two population covariances.
double phi_squared(const MixtureSpec& mix);

struct PremiseReport {
  bool holds = false;
  double delta_sq = 0;  // ||mu_H - mu_P||^2
  double bound = 0;     // 6 phi^2 / m
  double phi_sq = 0;
};

// Sufficient condition for m-separability: ||mu_H - mu_P||^2 >= 6 phi^2 / m.
PremiseReport separation_premise(const MixtureSpec& mix);

Eigen::MatrixXd sample_population(const PopulationSpec& pop, int n, Rng& rng);

struct SeparabilityResult {
  bool separable = false;
  double tau = 0;
  double honest_violation = 1;    // fraction of honest with |<x - mu, v>| > tau
  double poisoned_violation = 1;  // fraction of poisoned with |<x - mu, v>| < tau
  int n_honest = 0, n_poisoned = 0;
};

// Draws (1-m)n honest and m n poisoned samples, projects on the pooled top
// eigenvector and scans tau over all midpoints of the sorted |projections|.
// The reported tau minimizes the larger of the two violation rates.
SeparabilityResult separability_check(const MixtureSpec& mix, int n_samples, Rng& rng);

// Random mixture in dimension d satisfying the premise with
// ||Delta||^2 = slack * 6 phi^2 / m.
MixtureSpec random_premise_mixture(int d, double m, double slack, Rng& rng);

struct SynthStream {
  std::vector<GradientContribution> contributions;  // round-major, class_id 0
  std::vector<int> malicious;                       // sorted ids
};

// Honest clients draw a fresh sample from H displaced by round*drift every
// round. Malicious clients draw once from P and re-emit that sample with
// isotropic jitter of std jitter_fraction * ||mu_H - mu_P||. m = 0 gives a
// benign stream.
SynthStream synth_two_population_stream(const MixtureSpec& mix, int n_clients, double m, int rounds,
                                        const Eigen::VectorXd& drift, Rng& rng, double jitter_fraction = 0.01);

// Random direction with norm 0.02 * phi.
Eigen::VectorXd default_drift(const MixtureSpec& mix, Rng& rng);

}  // namespace fedguard
