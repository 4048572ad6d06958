#pragma once

#include <string>
#include <vector>

namespace fedguard {

// One client's per-class output-layer update slice for one round.
struct GradientContribution {
  int client_id = 0;
  int round = 0;
  int class_id = 0;
  std::vector<double> block;
};

struct WindowVerdict {
  std::vector<int> revoked;      // sorted, newly revoked this window
  std::vector<int> watchlisted;  // sorted, watchlist count incremented this window
  std::vector<int> flagged_classes;
  bool deferred = false;
};

// Window-level forensic defense. Called once per forensic window with every
// contribution of that window (all classes).
class Defense {
 public:
  virtual ~Defense() = default;
  virtual std::string name() const = 0;
  virtual WindowVerdict on_window(int window_index, const std::vector<GradientContribution>& contributions) = 0;
};

}  // namespace fedguard
