#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "fedguard/detector.hpp"

using namespace fedguard;

namespace {

TaskConfig small_task() {
  TaskConfig t;
  t.num_classes = 3;
  t.feature_dim = 6;
  t.num_anchors = 2;
  return t;
}

double max_abs(const std::vector<double>& v) {
  double m = 0;
  for (double x : v) m = std::max(m, std::fabs(x));
  return m;
}

}  // namespace

TEST_CASE("iou reference values") {
  const Box a{0.25, 0.25, 0.5, 0.5}, b{0.5, 0.5, 0.5, 0.5};
  CHECK(iou(a, b) == doctest::Approx(1.0 / 7.0).epsilon(1e-12));
  CHECK(iou(a, a) == doctest::Approx(1.0));
  CHECK(iou({0.1, 0.1, 0.1, 0.1}, {0.8, 0.8, 0.1, 0.1}) == 0.0);
  // concentric box shrunk by 0.1 keeps 1% of the area
  CHECK(iou({0.5, 0.5, 0.4, 0.4}, {0.5, 0.5, 0.04, 0.04}) == doctest::Approx(0.01));
}

TEST_CASE("iou is symmetric and bounded by the area ratio") {
  Rng r(1);
  for (int i = 0; i < 500; ++i) {
    const Box a{r.uniform(), r.uniform(), r.uniform(0.01, 0.5), r.uniform(0.01, 0.5)};
    const Box b{r.uniform(), r.uniform(), r.uniform(0.01, 0.5), r.uniform(0.01, 0.5)};
    const double v = iou(a, b);
    CHECK(v == iou(b, a));
    CHECK(v >= 0.0);
    const double aa = a.w * a.h, ab = b.w * b.h;
    CHECK(v <= std::min(aa, ab) / std::max(aa, ab) + 1e-12);
  }
}

TEST_CASE("box encoding round trips") {
  const SyntheticTask task(small_task(), 3);
  const auto& det = task.detector();
  const Box b{0.41, 0.57, 0.22, 0.35};
  for (int a = 0; a < 2; ++a) {
    const auto e = det.encode(b, a);
    const Box back = det.decode(e.data(), a);
    CHECK(back.cx == doctest::Approx(b.cx).epsilon(1e-12));
    CHECK(back.cy == doctest::Approx(b.cy).epsilon(1e-12));
    CHECK(back.w == doctest::Approx(b.w).epsilon(1e-12));
    CHECK(back.h == doctest::Approx(b.h).epsilon(1e-12));
  }
}

TEST_CASE("analytic gradient matches central differences") {
  Rng r(2);
  for (int t = 0; t < 20; ++t) {
    const SyntheticTask task(small_task(), r.next());
    const auto& det = task.detector();
    DetectorWeights w(task.shape());
    for (auto& x : w.v) x = 0.5 * r.normal();
    const auto batch = task.generate(r, 3);
    const auto g = det.loss_and_grad(w, batch);
    CHECK(g.loss == doctest::Approx(det.loss(w, batch)).epsilon(1e-12));
    double diff = 0, norm = 0;
    for (std::size_t i = 0; i < w.v.size(); ++i) {
      const double keep = w.v[i];
      w.v[i] = keep + 1e-5;
      const double up = det.loss(w, batch);
      w.v[i] = keep - 1e-5;
      const double dn = det.loss(w, batch);
      w.v[i] = keep;
      const double fd = (up - dn) / 2e-5;
      diff += (fd - g.grad[i]) * (fd - g.grad[i]);
      norm += g.grad[i] * g.grad[i];
    }
    CHECK(std::sqrt(diff / norm) < 1e-5);
  }
}

TEST_CASE("gradient vanishes when predictions match one-hot targets") {
  TaskShape sh{2, 4, 1};
  const Box anchor{0.5, 0.5, 0.3, 0.3};
  const Detector det(sh, {anchor});
  const Box target{0.55, 0.45, 0.2, 0.4};
  DetectionSample s;
  s.x = {1.0, 0.0, 0.0, 0.0};
  s.anchors = {Anchor{1, target, true}};
  DetectorWeights w(sh);
  // bias column only: saturated logits and exact box regression
  for (int k = 0; k <= sh.C; ++k) w.v[sh.class_offset(0, k)] = (k == 1) ? 40.0 : -40.0;
  const auto enc = det.encode(target, 0);
  for (int o = 0; o < 4; ++o) w.v[sh.bbox_offset(0, 1, o)] = enc[o];
  w.v[sh.objn_offset(0, 0)] = -40.0;
  w.v[sh.objn_offset(0, 1)] = 40.0;
  const auto g = det.loss_and_grad(w, {s, s});
  double n2 = 0;
  for (double x : g.grad) n2 += x * x;
  CHECK(std::sqrt(n2) < 1e-9);
}

TEST_CASE("loss is a batch mean") {
  const SyntheticTask task(small_task(), 4);
  const auto& det = task.detector();
  Rng r(4);
  DetectorWeights w(task.shape());
  for (auto& x : w.v) x = 0.3 * r.normal();
  auto batch = task.generate(r, 5);
  const auto base = det.loss_and_grad(w, batch);
  CHECK(base.loss >= 0.0);

  Dataset doubled = batch;
  doubled.insert(doubled.end(), batch.begin(), batch.end());
  const auto dup = det.loss_and_grad(w, doubled);
  CHECK(dup.loss == doctest::Approx(base.loss).epsilon(1e-12));
  for (std::size_t i = 0; i < base.grad.size(); ++i) CHECK(dup.grad[i] == doctest::Approx(base.grad[i]).epsilon(1e-10));

  std::reverse(batch.begin(), batch.end());
  CHECK(det.loss(w, batch) == doctest::Approx(base.loss).epsilon(1e-12));
  CHECK_THROWS(det.loss_and_grad(w, {}));
}

TEST_CASE("predictions are distributions") {
  const SyntheticTask task(small_task(), 5);
  Rng r(5);
  DetectorWeights w(task.shape());
  for (auto& x : w.v) x = 2.0 * r.normal();
  for (const auto& s : task.generate(r, 20))
    for (const auto& p : task.detector().predict(w, s.x)) {
      double sum = 0;
      for (double q : p.class_probs) sum += q;
      CHECK(std::fabs(sum - 1.0) < 1e-9);
      for (double o : p.objn) {
        CHECK(o >= 0.0);
        CHECK(o <= 1.0);
      }
    }
}

TEST_CASE("average precision reference cases") {
  GroundTruth gt{{{0.2, 0.2, 0.2, 0.2}}, {{0.5, 0.5, 0.2, 0.2}}, {{0.7, 0.7, 0.2, 0.2}}};
  const Box miss{0.9, 0.1, 0.05, 0.05};

  std::vector<Detection> perfect{{0, 0.9, gt[0][0]}, {1, 0.8, gt[1][0]}, {2, 0.7, gt[2][0]}};
  CHECK(*average_precision(perfect, gt) == doctest::Approx(1.0));
  CHECK(*average_precision({}, gt) == 0.0);

  // hit, miss, hit, hit
  std::vector<Detection> ranked{{0, 0.9, gt[0][0]}, {0, 0.8, miss}, {1, 0.7, gt[1][0]}, {2, 0.6, gt[2][0]}};
  const double expect = (1.0 / 3) * 1.0 + (1.0 / 3) * (2.0 / 3) + (1.0 / 3) * (3.0 / 4);
  CHECK(*average_precision(ranked, gt) == doctest::Approx(expect).epsilon(1e-12));
  CHECK(expect == doctest::Approx(0.80555).epsilon(1e-4));

  // input order of the ranked list does not matter when scores are distinct
  std::vector<Detection> shuffled{ranked[3], ranked[1], ranked[0], ranked[2]};
  CHECK(*average_precision(shuffled, gt) == doctest::Approx(expect).epsilon(1e-12));

  // duplicate detections of one object: only the first matches
  std::vector<Detection> dup{{0, 0.9, gt[0][0]}, {0, 0.8, gt[0][0]}};
  CHECK(*average_precision(dup, gt) == doctest::Approx(1.0 / 3.0));

  CHECK_FALSE(average_precision(ranked, GroundTruth{{}, {}}).has_value());
}

TEST_CASE("equal-confidence hits are interchangeable") {
  GroundTruth gt{{{0.2, 0.2, 0.2, 0.2}}, {{0.5, 0.5, 0.2, 0.2}}};
  std::vector<Detection> a{{0, 0.5, gt[0][0]}, {1, 0.5, gt[1][0]}};
  std::vector<Detection> b{a[1], a[0]};
  CHECK(*average_precision(a, gt) == *average_precision(b, gt));
}

TEST_CASE("federation data cardinality, determinism and disjoint test set") {
  TaskConfig t;
  const SyntheticTask task(t, 9);
  const auto a = generate_federation_data(task, 9, 50, 40, 100);
  const auto b = generate_federation_data(task, 9, 50, 40, 100);
  CHECK(a.clients.size() == 50);
  for (const auto& c : a.clients) CHECK(c.size() == 40);
  CHECK(a.test.size() == 100);
  CHECK(a.clients == b.clients);
  CHECK(a.test == b.test);
  for (const auto& s : a.test)
    for (const auto& c : a.clients) CHECK(std::find(c.begin(), c.end(), s) == c.end());

  for (const auto& c : a.clients)
    for (const auto& s : c)
      for (const auto& an : s.anchors)
        if (an.cls == t.num_classes) {
          CHECK_FALSE(an.objn);
        } else {
          CHECK(an.objn);
          CHECK(an.box.w > 0);
          CHECK(an.box.h > 0);
        }
}

TEST_CASE("anchor classes are linearly learnable") {
  // independent softmax-regression probe per anchor, trained by full-batch gradient descent
  TaskConfig t;
  const SyntheticTask task(t, 12);
  const auto data = generate_federation_data(task, 12, 50, 40, 500);
  Dataset pool;
  for (const auto& c : data.clients) pool.insert(pool.end(), c.begin(), c.end());
  const int K = t.num_classes + 1, d = t.feature_dim;
  int correct = 0, total = 0;
  for (int a = 0; a < t.num_anchors; ++a) {
    std::vector<double> W(static_cast<std::size_t>(K) * d, 0.0);
    for (int it = 0; it < 200; ++it) {
      std::vector<double> g(W.size(), 0.0);
      for (const auto& s : pool) {
        std::vector<double> z(K, 0.0);
        for (int k = 0; k < K; ++k)
          for (int j = 0; j < d; ++j) z[k] += W[k * d + j] * s.x[j];
        const double zm = *std::max_element(z.begin(), z.end());
        double sum = 0;
        for (auto& v : z) sum += (v = std::exp(v - zm));
        for (int k = 0; k < K; ++k) {
          const double err = z[k] / sum - (k == s.anchors[a].cls ? 1.0 : 0.0);
          for (int j = 0; j < d; ++j) g[k * d + j] += err * s.x[j];
        }
      }
      for (std::size_t i = 0; i < W.size(); ++i) W[i] -= 0.5 * g[i] / static_cast<double>(pool.size());
    }
    for (const auto& s : data.test) {
      int best = 0;
      double bz = -INFINITY;
      for (int k = 0; k < K; ++k) {
        double z = 0;
        for (int j = 0; j < d; ++j) z += W[k * d + j] * s.x[j];
        if (z > bz) {
          bz = z;
          best = k;
        }
      }
      correct += best == s.anchors[a].cls;
      ++total;
    }
  }
  CHECK(static_cast<double>(correct) / total >= 0.90);
}

TEST_CASE("dataset jsonl round trip") {
  const SyntheticTask task(small_task(), 13);
  Rng r(13);
  const auto d = task.generate(r, 15);
  const auto text = dataset_to_jsonl(d);
  const auto back = dataset_from_jsonl(text);
  CHECK(back == d);
  CHECK(dataset_to_jsonl(back) == text);
}

TEST_CASE("streamed batches are keyed by client and round") {
  TaskConfig t;
  const SyntheticTask task(t, 14);
  CHECK(stream_batch(task, 14, 3, 7, 10) == stream_batch(task, 14, 3, 7, 10));
  CHECK_FALSE(stream_batch(task, 14, 3, 7, 10) == stream_batch(task, 14, 3, 8, 10));
  CHECK(max_abs(stream_batch(task, 14, 0, 0, 1)[0].x) > 0);
}
