#include "fedguard/detector.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace fedguard {

double iou(const Box& a, const Box& b) {
  const double iw = std::min(a.cx + a.w / 2, b.cx + b.w / 2) - std::max(a.cx - a.w / 2, b.cx - b.w / 2);
  const double ih = std::min(a.cy + a.h / 2, b.cy + b.h / 2) - std::max(a.cy - a.h / 2, b.cy - b.h / 2);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.w * a.h + b.w * b.h - inter;
  return uni > 0 ? inter / uni : 0.0;
}

namespace {

double dot(const double* w, const std::vector<double>& x) {
  double s = 0;
  for (std::size_t j = 0; j < x.size(); ++j) s += w[j] * x[j];
  return s;
}

void axpy(double a, const std::vector<double>& x, double* y) {
  for (std::size_t j = 0; j < x.size(); ++j) y[j] += a * x[j];
}

double sigmoid(double z) {
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

}  // namespace

Detector::Detector(TaskShape shape, std::vector<Box> defaults) : shape_(shape), defaults_(std::move(defaults)) {
  if (static_cast<int>(defaults_.size()) != shape_.A) throw std::invalid_argument("one default box per anchor");
}

std::vector<double> Detector::encode(const Box& b, int a) const {
  const Box& d = defaults_[a];
  return {(b.cx - d.cx) / d.w, (b.cy - d.cy) / d.h, std::log(b.w / d.w), std::log(b.h / d.h)};
}

Box Detector::decode(const double* e, int a) const {
  const Box& d = defaults_[a];
  return {d.cx + e[0] * d.w, d.cy + e[1] * d.h, d.w * std::exp(e[2]), d.h * std::exp(e[3])};
}

double Detector::sample_terms(const DetectorWeights& w, const DetectionSample& s, std::vector<double>* grad,
                              double scale) const {
  const auto& sh = shape_;
  if (static_cast<int>(s.x.size()) != sh.d || static_cast<int>(s.anchors.size()) != sh.A)
    throw std::invalid_argument("sample shape mismatch");
  const double* W = w.v.data();
  double loss = 0;
  std::vector<double> z(sh.C + 1);
  for (int a = 0; a < sh.A; ++a) {
    const int y = s.anchors[a].cls;

    double zmax = -INFINITY;
    for (int k = 0; k <= sh.C; ++k) {
      z[k] = dot(W + sh.class_offset(a, k), s.x);
      zmax = std::max(zmax, z[k]);
    }
    double sum = 0;
    for (int k = 0; k <= sh.C; ++k) sum += std::exp(z[k] - zmax);
    const double lse = zmax + std::log(sum);
    loss += lse - z[y];
    if (grad)
      for (int k = 0; k <= sh.C; ++k) {
        const double p = std::exp(z[k] - lse);
        axpy(scale * (p - (k == y ? 1.0 : 0.0)), s.x, grad->data() + sh.class_offset(a, k));
      }

    for (int c = 0; c < sh.C; ++c) {
      const double zo = dot(W + sh.objn_offset(a, c), s.x);
      const double t = (c == y) ? 1.0 : 0.0;
      loss += softplus(zo) - t * zo;
      if (grad) axpy(scale * (sigmoid(zo) - t), s.x, grad->data() + sh.objn_offset(a, c));
    }

    if (y < sh.C) {
      const auto e = encode(s.anchors[a].box, a);
      for (int o = 0; o < 4; ++o) {
        const double r = dot(W + sh.bbox_offset(a, y, o), s.x) - e[o];
        loss += r * r;
        if (grad) axpy(scale * 2.0 * r, s.x, grad->data() + sh.bbox_offset(a, y, o));
      }
    }
  }
  return loss;
}

LossGrad Detector::loss_and_grad(const DetectorWeights& w, const Dataset& batch) const {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  if (w.shape != shape_) throw std::invalid_argument("weight shape mismatch");
  LossGrad out;
  out.grad.assign(shape_.num_params(), 0.0);
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const auto& s : batch) out.loss += sample_terms(w, s, &out.grad, scale);
  out.loss *= scale;
  return out;
}

double Detector::loss(const DetectorWeights& w, const Dataset& batch) const {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  double l = 0;
  for (const auto& s : batch) l += sample_terms(w, s, nullptr, 0.0);
  return l / static_cast<double>(batch.size());
}

DetectionPrediction Detector::predict(const DetectorWeights& w, const std::vector<double>& x) const {
  const auto& sh = shape_;
  const double* W = w.v.data();
  DetectionPrediction out(sh.A);
  for (int a = 0; a < sh.A; ++a) {
    auto& p = out[a];
    p.class_probs.resize(sh.C + 1);
    double zmax = -INFINITY;
    for (int k = 0; k <= sh.C; ++k) {
      p.class_probs[k] = dot(W + sh.class_offset(a, k), x);
      zmax = std::max(zmax, p.class_probs[k]);
    }
    double sum = 0;
    for (auto& v : p.class_probs) sum += (v = std::exp(v - zmax));
    for (auto& v : p.class_probs) v /= sum;
    for (int c = 0; c < sh.C; ++c) {
      double e[4];
      for (int o = 0; o < 4; ++o) e[o] = dot(W + sh.bbox_offset(a, c, o), x);
      p.boxes.push_back(decode(e, a));
      p.objn.push_back(sigmoid(dot(W + sh.objn_offset(a, c), x)));
    }
  }
  return out;
}

static std::vector<Box> make_defaults(int A, Rng& rng) {
  std::vector<Box> d(A);
  for (auto& b : d) {
    b.cx = rng.uniform(0.3, 0.7);
    b.cy = rng.uniform(0.3, 0.7);
    b.w = rng.uniform(0.2, 0.4);
    b.h = rng.uniform(0.2, 0.4);
  }
  return d;
}

static std::vector<Box> defaults_for(const TaskConfig& cfg, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "task-anchors", 0, 0));
  return make_defaults(cfg.num_anchors, rng);
}

SyntheticTask::SyntheticTask(const TaskConfig& cfg, std::uint64_t seed)
    : cfg_(cfg),
      shape_{cfg.num_classes, cfg.feature_dim, cfg.num_anchors},
      detector_(shape_, defaults_for(cfg, seed)) {
  const int C = shape_.C, d = shape_.d, A = shape_.A;
  Rng rng(derive_seed(seed, "task-embed", 0, 0));
  // Embedding directions live in coordinates 1..d-1 (coordinate 0 is a constant
  // bias input). They are orthonormalized while there is room, then random.
  std::vector<std::vector<double>> basis;
  embed_.assign(A, std::vector<std::vector<double>>(C + 1, std::vector<double>(d, 0.0)));
  for (int a = 0; a < A; ++a)
    for (int k = 0; k <= C; ++k) {
      std::vector<double> v(d, 0.0);
      for (int j = 1; j < d; ++j) v[j] = rng.normal();
      if (static_cast<int>(basis.size()) < d - 1)
        for (const auto& b : basis) {
          double p = 0;
          for (int j = 0; j < d; ++j) p += v[j] * b[j];
          for (int j = 0; j < d; ++j) v[j] -= p * b[j];
        }
      double n = 0;
      for (double t : v) n += t * t;
      n = std::sqrt(n);
      for (double& t : v) t /= n;
      basis.push_back(v);
      for (int j = 0; j < d; ++j) embed_[a][k][j] = cfg.signal_strength * v[j];
    }

  Rng brng(derive_seed(seed, "task-boxes", 0, 0));
  class_box_.assign(A, std::vector<Box>(C));
  for (int a = 0; a < A; ++a) {
    const Box& df = detector_.defaults()[a];
    for (int c = 0; c < C; ++c) {
      Box& b = class_box_[a][c];
      b.cx = df.cx + brng.uniform(-0.1, 0.1) * df.w;
      b.cy = df.cy + brng.uniform(-0.1, 0.1) * df.h;
      b.w = df.w * std::exp(brng.uniform(-0.3, 0.3));
      b.h = df.h * std::exp(brng.uniform(-0.3, 0.3));
    }
  }
}

Dataset SyntheticTask::generate(Rng& rng, int n) const {
  const int C = shape_.C, d = shape_.d, A = shape_.A;
  Dataset out(n);
  for (auto& s : out) {
    s.anchors.resize(A);
    for (auto& an : s.anchors) an.cls = rng.bernoulli(cfg_.background_prob) ? C : static_cast<int>(rng.below(C));
    s.x.assign(d, 0.0);
    for (int j = 0; j < d; ++j) s.x[j] = cfg_.feature_noise * rng.normal();
    for (int a = 0; a < A; ++a)
      for (int j = 0; j < d; ++j) s.x[j] += embed_[a][s.anchors[a].cls][j];
    s.x[0] = 1.0;
    for (int a = 0; a < A; ++a) {
      auto& an = s.anchors[a];
      if (an.cls == C) {
        an.objn = false;
        an.box = {};
        continue;
      }
      const Box& b = class_box_[a][an.cls];
      const double sb = cfg_.box_noise;
      an.objn = true;
      an.box.cx = std::clamp(b.cx + 0.3 * sb * b.w * rng.normal(), 0.0, 1.0);
      an.box.cy = std::clamp(b.cy + 0.3 * sb * b.h * rng.normal(), 0.0, 1.0);
      an.box.w = std::clamp(b.w * std::exp(sb * rng.normal()), 1e-3, 1.0);
      an.box.h = std::clamp(b.h * std::exp(sb * rng.normal()), 1e-3, 1.0);
    }
  }
  return out;
}

FederationData generate_federation_data(const SyntheticTask& task, std::uint64_t seed, int num_clients,
                                        int samples_per_client, int test_samples) {
  FederationData fd;
  for (int i = 0; i < num_clients; ++i) {
    Rng rng(derive_seed(seed, "client-data", i, 0));
    fd.clients.push_back(task.generate(rng, samples_per_client));
  }
  Rng trng(derive_seed(seed, "test-data", 0, 0));
  fd.test = task.generate(trng, test_samples);
  return fd;
}

Dataset stream_batch(const SyntheticTask& task, std::uint64_t master_seed, int client, int round, int n) {
  Rng rng(derive_seed(master_seed, "stream-data", client, round));
  return task.generate(rng, n);
}

std::optional<double> average_precision(const std::vector<Detection>& dets, const GroundTruth& gt,
                                        double iou_threshold) {
  std::size_t ngt = 0;
  for (const auto& g : gt) ngt += g.size();
  if (ngt == 0) return std::nullopt;

  std::vector<std::size_t> order(dets.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });

  std::vector<std::vector<char>> used(gt.size());
  for (std::size_t i = 0; i < gt.size(); ++i) used[i].assign(gt[i].size(), 0);

  double ap = 0;
  std::size_t tp = 0, rank = 0;
  for (std::size_t idx : order) {
    ++rank;
    const auto& det = dets[idx];
    if (det.image >= gt.size()) continue;
    double best = -1;
    std::size_t bi = 0;
    for (std::size_t g = 0; g < gt[det.image].size(); ++g) {
      if (used[det.image][g]) continue;
      const double v = iou(det.box, gt[det.image][g]);
      if (v > best) {
        best = v;
        bi = g;
      }
    }
    if (best >= iou_threshold) {
      used[det.image][bi] = 1;
      ++tp;
      ap += static_cast<double>(tp) / static_cast<double>(rank);
    }
  }
  return ap / static_cast<double>(ngt);
}

std::vector<Detection> detections_for_class(const Detector& det, const DetectorWeights& w, const Dataset& data,
                                            int c, double score_threshold) {
  std::vector<Detection> out;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto pred = det.predict(w, data[i].x);
    for (const auto& p : pred) {
      const double score = p.class_probs[c] * p.objn[c];
      if (score >= score_threshold) out.push_back({i, score, p.boxes[c]});
    }
  }
  return out;
}

GroundTruth ground_truth_for_class(const Dataset& data, int c) {
  GroundTruth gt(data.size());
  for (std::size_t i = 0; i < data.size(); ++i)
    for (const auto& an : data[i].anchors)
      if (an.cls == c) gt[i].push_back(an.box);
  return gt;
}

std::vector<std::optional<double>> evaluate_ap(const Detector& det, const DetectorWeights& w, const Dataset& data,
                                               double score_threshold, double iou_threshold) {
  const int C = det.shape().C;
  std::vector<std::vector<Detection>> per_class(C);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto pred = det.predict(w, data[i].x);
    for (const auto& p : pred)
      for (int c = 0; c < C; ++c) {
        const double score = p.class_probs[c] * p.objn[c];
        if (score >= score_threshold) per_class[c].push_back({i, score, p.boxes[c]});
      }
  }
  std::vector<std::optional<double>> out;
  for (int c = 0; c < C; ++c)
    out.push_back(average_precision(per_class[c], ground_truth_for_class(data, c), iou_threshold));
  return out;
}

std::string dataset_to_jsonl(const Dataset& d) {
  std::string out;
  for (const auto& s : d) {
    nlohmann::json j;
    j["x"] = s.x;
    j["anchors"] = nlohmann::json::array();
    for (const auto& a : s.anchors)
      j["anchors"].push_back({{"cls", a.cls}, {"box", {a.box.cx, a.box.cy, a.box.w, a.box.h}}, {"objn", a.objn}});
    out += j.dump() + "\n";
  }
  return out;
}

Dataset dataset_from_jsonl(const std::string& text) {
  Dataset d;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    DetectionSample s;
    s.x = j.at("x").get<std::vector<double>>();
    for (const auto& a : j.at("anchors")) {
      const auto b = a.at("box").get<std::vector<double>>();
      if (b.size() != 4) throw std::runtime_error("box needs 4 values");
      s.anchors.push_back({a.at("cls").get<int>(), {b[0], b[1], b[2], b[3]}, a.at("objn").get<bool>()});
    }
    d.push_back(std::move(s));
  }
  return d;
}

}  // namespace fedguard
