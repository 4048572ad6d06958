#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fedguard/config.hpp"
#include "fedguard/rng.hpp"

namespace fedguard {

struct Box {
  double cx = 0, cy = 0, w = 0, h = 0;
  bool operator==(const Box&) const = default;
};

double iou(const Box& a, const Box& b);

struct Anchor {
  int cls = 0;  // == num_classes means background
  Box box;
  bool objn = false;
  bool operator==(const Anchor&) const = default;
};

struct DetectionSample {
  std::vector<double> x;
  std::vector<Anchor> anchors;
  bool operator==(const DetectionSample&) const = default;
};

using Dataset = std::vector<DetectionSample>;

// Parameter layout of the linear detector head, all rows of length d:
//   class head  [A][C+1][d]
//   bbox head   [A][C][4][d]
//   objn head   [A][C][d]
struct TaskShape {
  int C = 4, d = 16, A = 3;

  int background() const { return C; }
  std::size_t class_offset(int a, int k) const { return (std::size_t(a) * (C + 1) + k) * d; }
  std::size_t bbox_offset(int a, int c, int o) const {
    return class_size() + ((std::size_t(a) * C + c) * 4 + o) * d;
  }
  std::size_t objn_offset(int a, int c) const {
    return class_size() + bbox_size() + (std::size_t(a) * C + c) * d;
  }
  std::size_t class_size() const { return std::size_t(A) * (C + 1) * d; }
  std::size_t bbox_size() const { return std::size_t(A) * C * 4 * d; }
  std::size_t objn_size() const { return std::size_t(A) * C * d; }
  std::size_t num_params() const { return class_size() + bbox_size() + objn_size(); }
  // entries in one class's slice of all three heads
  std::size_t block_size() const { return std::size_t(A) * 6 * d; }

  bool operator==(const TaskShape&) const = default;
};

struct DetectorWeights {
  TaskShape shape;
  std::vector<double> v;

  DetectorWeights() = default;
  explicit DetectorWeights(const TaskShape& s) : shape(s), v(s.num_params(), 0.0) {}
};

struct AnchorPrediction {
  std::vector<double> class_probs;  // C+1, sums to 1
  std::vector<Box> boxes;           // per class
  std::vector<double> objn;         // per class, in [0,1]
};
using DetectionPrediction = std::vector<AnchorPrediction>;  // one per anchor

struct LossGrad {
  double loss = 0;
  std::vector<double> grad;
};

// Linear detector over fixed per-anchor default boxes. Box targets are encoded
// relative to the anchor's default box: (dcx/aw, dcy/ah, log(w/aw), log(h/ah)).
class Detector {
 public:
  Detector(TaskShape shape, std::vector<Box> defaults);

  const TaskShape& shape() const { return shape_; }
  const std::vector<Box>& defaults() const { return defaults_; }

  std::vector<double> encode(const Box& b, int anchor) const;
  Box decode(const double* e, int anchor) const;

  // Mean over the batch of: softmax cross-entropy on every anchor, binary
  // cross-entropy on every per-class objectness logit (positive only for the
  // anchor's true class), and squared error on encoded boxes of the true class.
  LossGrad loss_and_grad(const DetectorWeights& w, const Dataset& batch) const;
  double loss(const DetectorWeights& w, const Dataset& batch) const;

  DetectionPrediction predict(const DetectorWeights& w, const std::vector<double>& x) const;

 private:
  double sample_terms(const DetectorWeights& w, const DetectionSample& s, std::vector<double>* grad,
                      double scale) const;

  TaskShape shape_;
  std::vector<Box> defaults_;
};

// Class-conditional synthetic generator. Each anchor holds either background or
// an object whose class shifts the features along its own embedding direction,
// so anchor classes are linearly separable in expectation.
class SyntheticTask {
 public:
  SyntheticTask(const TaskConfig& cfg, std::uint64_t seed);

  const TaskShape& shape() const { return shape_; }
  const Detector& detector() const { return detector_; }
  Dataset generate(Rng& rng, int n) const;

 private:
  TaskConfig cfg_;
  TaskShape shape_;
  std::vector<std::vector<std::vector<double>>> embed_;  // [A][C+1][d]
  std::vector<std::vector<Box>> class_box_;              // [A][C]
  Detector detector_;
};

struct FederationData {
  std::vector<Dataset> clients;
  Dataset test;
};

FederationData generate_federation_data(const SyntheticTask& task, std::uint64_t seed, int num_clients,
                                        int samples_per_client, int test_samples);

// Fresh local batch for (client, round), used by streaming honest clients.
Dataset stream_batch(const SyntheticTask& task, std::uint64_t master_seed, int client, int round, int n);

// One scored box for AP; `image` indexes the evaluation set.
struct Detection {
  std::size_t image = 0;
  double score = 0;
  Box box;
};

// Ground truth boxes of one class, grouped by image.
using GroundTruth = std::vector<std::vector<Box>>;

// Single-class AP: detections ranked by score (ties by input order), each
// greedily matched to the best unmatched ground truth of its image with
// IoU >= threshold; AP = sum over true positives of precision-at-rank / #gt.
// nullopt when there is no ground truth.
std::optional<double> average_precision(const std::vector<Detection>& dets, const GroundTruth& gt,
                                        double iou_threshold = 0.5);

std::vector<Detection> detections_for_class(const Detector& det, const DetectorWeights& w, const Dataset& data,
                                            int c, double score_threshold);
GroundTruth ground_truth_for_class(const Dataset& data, int c);

// AP per class on `data`; nullopt entries mark classes with no ground truth.
std::vector<std::optional<double>> evaluate_ap(const Detector& det, const DetectorWeights& w, const Dataset& data,
                                               double score_threshold, double iou_threshold);

// JSON-lines, one sample per line.
std::string dataset_to_jsonl(const Dataset& d);
Dataset dataset_from_jsonl(const std::string& text);

}  // namespace fedguard
