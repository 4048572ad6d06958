#pragma once

#include <vector>

#include "fedguard/config.hpp"
#include "fedguard/defense.hpp"

namespace fedguard {

struct SpectralScore {
  std::size_t index = 0;  // into the contribution list
  double score = 0;
};

// |<block - mean, top right-singular vector>| for every contribution.
std::vector<SpectralScore> spectral_scores(const std::vector<std::vector<double>>& blocks);

// Both take one class's window contributions and return sorted client ids.
// Smaller-cluster rule: 2-means on (ssc1, ssc2); every contributor to the
// smaller cluster is revoked; equal sizes revoke nobody.
std::vector<int> defense_spatial_smaller_cluster(const std::vector<GradientContribution>& class_contributions,
                                                 std::uint64_t seed = 0);
// Revokes owners of the top round(removal_fraction * n) scores (ties by index).
std::vector<int> defense_spectral_signature(const std::vector<GradientContribution>& class_contributions,
                                            double removal_fraction);

// Window-level wrappers. They share the forensic pipeline's round centering and
// separation test, and inspect only flagged classes.
class SmallerClusterDefense : public Defense {
 public:
  SmallerClusterDefense(double separation_threshold, std::uint64_t seed,
                        RoundCentering centering = RoundCentering::None)
      : s_min_(separation_threshold), seed_(seed), centering_(centering) {}
  std::string name() const override { return "spatial"; }
  WindowVerdict on_window(int window_index, const std::vector<GradientContribution>& contributions) override;

 private:
  double s_min_;
  std::uint64_t seed_;
  RoundCentering centering_;
};

class SpectralSignatureDefense : public Defense {
 public:
  SpectralSignatureDefense(double separation_threshold, double removal_fraction,
                           RoundCentering centering = RoundCentering::None)
      : s_min_(separation_threshold), removal_(removal_fraction), centering_(centering) {}
  std::string name() const override { return "spectral"; }
  WindowVerdict on_window(int window_index, const std::vector<GradientContribution>& contributions) override;

 private:
  double s_min_;
  double removal_;
  RoundCentering centering_;
};

}  // namespace fedguard
