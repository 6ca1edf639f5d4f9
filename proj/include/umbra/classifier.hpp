#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "umbra/error.hpp"
#include "umbra/image.hpp"
#include "umbra/random.hpp"
#include "umbra/shadow.hpp"

namespace umbra {

// One confidence per class; entries in [0, 1] summing to 1.
using ConfidenceVector = std::vector<double>;

// First index of the maximum.
inline std::size_t argmax(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("argmax of empty vector");
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

inline bool is_valid_confidence(std::span<const double> v, std::size_t classes) {
  if (v.size() != classes || v.empty()) return false;
  double sum = 0.0;
  for (double c : v) {
    if (!std::isfinite(c) || c < 0.0 || c > 1.0) return false;
    sum += c;
  }
  return std::abs(sum - 1.0) <= 1e-6;
}

class QueryCounter {
 public:
  void increment() noexcept { count_.fetch_add(1, std::memory_order_relaxed); }
  std::uint64_t value() const noexcept { return count_.load(std::memory_order_relaxed); }

 private:
  std::atomic<std::uint64_t> count_{0};
};

// Black-box classifier: callers see only confidence vectors. Every predict()
// is one query, counted atomically whichever backend answers it.
class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual std::size_t num_classes() const = 0;

  ConfidenceVector predict(const Image& x) {
    counter_.increment();
    return query(x);
  }

  std::uint64_t queries() const noexcept { return counter_.value(); }

 protected:
  // Must be safe for concurrent callers, or serialize internally.
  virtual ConfidenceVector query(const Image& x) = 0;

 private:
  QueryCounter counter_;
};

// Adapts a callable; used for analytic test oracles and constant models.
class FunctionClassifier final : public Classifier {
 public:
  using Fn = std::function<ConfidenceVector(const Image&)>;

  FunctionClassifier(std::size_t classes, Fn fn) : classes_(classes), fn_(std::move(fn)) {}

  std::size_t num_classes() const override { return classes_; }

 protected:
  ConfidenceVector query(const Image& x) override { return fn_(x); }

 private:
  std::size_t classes_;
  Fn fn_;
};

inline ConfidenceVector softmax(std::span<const double> logits) {
  ConfidenceVector out(logits.begin(), logits.end());
  const double m = *std::max_element(out.begin(), out.end());
  double sum = 0.0;
  for (auto& v : out) {
    v = std::exp(v - m);
    sum += v;
  }
  for (auto& v : out) v /= sum;
  return out;
}

// Nearest-neighbor resize to side x side, channels scaled to [0, 1].
inline Eigen::VectorXf model_input(const Image& x, int side) {
  if (x.empty()) throw std::invalid_argument("empty image");
  Eigen::VectorXf v(static_cast<Eigen::Index>(side) * side * 3);
  Eigen::Index i = 0;
  for (int r = 0; r < side; ++r) {
    const int sy = std::min(x.height() - 1, static_cast<int>((r + 0.5) * x.height() / side));
    for (int c = 0; c < side; ++c) {
      const int sx = std::min(x.width() - 1, static_cast<int>((c + 0.5) * x.width() / side));
      const RgbPixel p = x.at(sx, sy);
      v[i++] = p.r / 255.0f - 0.5f;
      v[i++] = p.g / 255.0f - 0.5f;
      v[i++] = p.b / 255.0f - 0.5f;
    }
  }
  return v;
}

// Two-layer perceptron: 32x32x3 -> 64 (ReLU) -> classes -> softmax.
class ToyModel {
 public:
  static constexpr int kInputSide = 32;
  static constexpr int kInputSize = kInputSide * kInputSide * 3;
  static constexpr int kHidden = 64;

  ToyModel() = default;

  static ToyModel zeros(std::size_t classes) {
    ToyModel m;
    m.w1_ = Eigen::MatrixXf::Zero(kHidden, kInputSize);
    m.b1_ = Eigen::VectorXf::Zero(kHidden);
    m.w2_ = Eigen::MatrixXf::Zero(static_cast<Eigen::Index>(classes), kHidden);
    m.b2_ = Eigen::VectorXf::Zero(static_cast<Eigen::Index>(classes));
    return m;
  }

  // He initialization for the ReLU layer, Xavier-scaled output layer.
  static ToyModel random(std::size_t classes, std::uint64_t seed) {
    ToyModel m = zeros(classes);
    Rng rng(seed);
    const double s1 = std::sqrt(2.0 / kInputSize);
    const double s2 = std::sqrt(1.0 / kHidden);
    for (Eigen::Index i = 0; i < m.w1_.size(); ++i) m.w1_.data()[i] = static_cast<float>(rng.normal() * s1);
    for (Eigen::Index i = 0; i < m.w2_.size(); ++i) m.w2_.data()[i] = static_cast<float>(rng.normal() * s2);
    return m;
  }

  std::size_t num_classes() const noexcept { return static_cast<std::size_t>(b2_.size()); }

  ConfidenceVector forward(const Image& x) const {
    const Eigen::VectorXf in = model_input(x, kInputSide);
    const Eigen::VectorXf h = (w1_ * in + b1_).cwiseMax(0.0f);
    const Eigen::VectorXf z = w2_ * h + b2_;
    std::vector<double> logits(z.data(), z.data() + z.size());
    return softmax(logits);
  }

  std::size_t classify(const Image& x) const { return argmax(forward(x)); }

  bool all_finite() const {
    return w1_.allFinite() && b1_.allFinite() && w2_.allFinite() && b2_.allFinite();
  }

  friend bool operator==(const ToyModel& a, const ToyModel& b) {
    return a.w1_ == b.w1_ && a.b1_ == b.b1_ && a.w2_ == b.w2_ && a.b2_ == b.b2_;
  }

  // Binary weights file: magic, class count, then w1, b1, w2, b2 as
  // little-endian float32 in column-major order.
  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path + " for writing");
    out.write(kMagic, sizeof(kMagic));
    const std::uint32_t classes = static_cast<std::uint32_t>(num_classes());
    out.write(reinterpret_cast<const char*>(&classes), sizeof(classes));
    write_block(out, w1_.data(), w1_.size());
    write_block(out, b1_.data(), b1_.size());
    write_block(out, w2_.data(), w2_.size());
    write_block(out, b2_.data(), b2_.size());
    if (!out) throw Error("failed writing " + path);
  }

  static ToyModel load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open weights file " + path);
    char magic[sizeof(kMagic)];
    in.read(magic, sizeof(magic));
    if (!in || !std::equal(magic, magic + sizeof(magic), kMagic))
      throw FormatError("not an umbra weights file: " + path);
    std::uint32_t classes = 0;
    in.read(reinterpret_cast<char*>(&classes), sizeof(classes));
    if (!in || classes == 0 || classes > 4096) throw FormatError("bad class count in " + path);
    ToyModel m = zeros(classes);
    read_block(in, m.w1_.data(), m.w1_.size(), path);
    read_block(in, m.b1_.data(), m.b1_.size(), path);
    read_block(in, m.w2_.data(), m.w2_.size(), path);
    read_block(in, m.b2_.data(), m.b2_.size(), path);
    return m;
  }

 private:
  friend struct ToyModelTrainer;

  static constexpr char kMagic[8] = {'U', 'M', 'B', 'R', 'A', 'W', '0', '1'};

  static void write_block(std::ofstream& out, const float* p, Eigen::Index n) {
    out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(float)));
  }
  static void read_block(std::ifstream& in, float* p, Eigen::Index n, const std::string& path) {
    in.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(float)));
    if (!in) throw FormatError("truncated weights file " + path);
  }

  Eigen::MatrixXf w1_;
  Eigen::VectorXf b1_;
  Eigen::MatrixXf w2_;
  Eigen::VectorXf b2_;
};

// Built-in model behind the black-box interface. forward() is const, so
// concurrent predicts are safe.
class ModelClassifier final : public Classifier {
 public:
  explicit ModelClassifier(ToyModel model) : model_(std::move(model)) {}

  std::size_t num_classes() const override { return model_.num_classes(); }
  const ToyModel& model() const noexcept { return model_; }

 protected:
  ConfidenceVector query(const Image& x) override { return model_.forward(x); }

 private:
  ToyModel model_;
};

struct TrainingHyper {
  double learning_rate{0.05};
  int epochs{300};
  int batch{16};
  double weight_decay{1e-4};
  std::uint64_t seed{1};
  // Random-shadow augmentation: every sample, every epoch, gets a uniformly
  // random triangle over the frame with k uniform in [k_min, k_max].
  bool augment_shadows{false};
  double k_min{0.20};
  double k_max{0.70};
};

struct EpochStats {
  int epoch{0};
  double loss{0.0};
  double accuracy{0.0};  // on the (possibly augmented) training batch stream
};

inline double accuracy(const ToyModel& model, std::span<const Sample> samples) {
  if (samples.empty()) return 0.0;
  std::size_t hit = 0;
  for (const auto& s : samples) hit += model.classify(s.image) == s.label;
  return static_cast<double>(hit) / static_cast<double>(samples.size());
}

inline Image random_shadow(const Sample& s, Rng& rng, double k_min, double k_max) {
  const double w = s.image.width();
  const double h = s.image.height();
  std::vector<Point> tri;
  for (int i = 0; i < 3; ++i) {
    const double x = rng.uniform(0.0, w);
    const double y = rng.uniform(0.0, h);
    tri.push_back({x, y});
  }
  const double k = rng.uniform(k_min, k_max);
  return apply_shadow(s.image, Polygon(std::move(tri)), k, s.mask);
}

struct ToyModelTrainer {
  static ToyModel run(std::span<const Sample> corpus, const TrainingHyper& hp,
                      std::vector<EpochStats>* log) {
    if (corpus.empty()) throw std::invalid_argument("empty training corpus");
    if (hp.epochs <= 0 || hp.batch <= 0 || !(hp.learning_rate > 0.0))
      throw std::invalid_argument("invalid training hyperparameters");
    std::size_t classes = 0;
    for (const auto& s : corpus) classes = std::max(classes, s.label + 1);
    if (classes < 2) classes = 2;

    ToyModel m = ToyModel::random(classes, derive_seed(hp.seed, 0));
    Rng rng(derive_seed(hp.seed, 1));

    std::vector<Eigen::VectorXf> clean_inputs;
    if (!hp.augment_shadows) {
      clean_inputs.reserve(corpus.size());
      for (const auto& s : corpus) clean_inputs.push_back(model_input(s.image, ToyModel::kInputSide));
    }

    std::vector<std::size_t> order(corpus.size());
    const auto lr = static_cast<float>(hp.learning_rate);
    const auto decay = static_cast<float>(hp.weight_decay);
    const Eigen::Index k = static_cast<Eigen::Index>(classes);

    for (int epoch = 0; epoch < hp.epochs; ++epoch) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

      double loss_sum = 0.0;
      std::size_t hits = 0;
      for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(hp.batch)) {
        const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(hp.batch));
        const auto n = static_cast<Eigen::Index>(end - start);
        Eigen::MatrixXf x(ToyModel::kInputSize, n);
        Eigen::MatrixXf y = Eigen::MatrixXf::Zero(k, n);
        for (Eigen::Index j = 0; j < n; ++j) {
          const Sample& s = corpus[order[start + static_cast<std::size_t>(j)]];
          if (hp.augment_shadows) {
            x.col(j) = model_input(random_shadow(s, rng, hp.k_min, hp.k_max), ToyModel::kInputSide);
          } else {
            x.col(j) = clean_inputs[order[start + static_cast<std::size_t>(j)]];
          }
          y(static_cast<Eigen::Index>(s.label), j) = 1.0f;
        }

        const Eigen::MatrixXf pre = (m.w1_ * x).colwise() + m.b1_;
        const Eigen::MatrixXf h = pre.cwiseMax(0.0f);
        Eigen::MatrixXf z = (m.w2_ * h).colwise() + m.b2_;
        for (Eigen::Index j = 0; j < n; ++j) {
          const float mx = z.col(j).maxCoeff();
          z.col(j) = (z.col(j).array() - mx).exp().matrix();
          z.col(j) /= z.col(j).sum();
          Eigen::Index pred = 0;
          z.col(j).maxCoeff(&pred);
          Eigen::Index truth = 0;
          y.col(j).maxCoeff(&truth);
          hits += pred == truth;
          loss_sum -= std::log(std::max(1e-12, static_cast<double>(z(truth, j))));
        }
        const Eigen::MatrixXf dz = (z - y) / static_cast<float>(n);
        const Eigen::MatrixXf dh = (m.w2_.transpose() * dz).cwiseProduct(
            (pre.array() > 0.0f).cast<float>().matrix());
        m.w2_ -= lr * (dz * h.transpose() + decay * m.w2_);
        m.b2_ -= lr * dz.rowwise().sum();
        m.w1_ -= lr * (dh * x.transpose() + decay * m.w1_);
        m.b1_ -= lr * dh.rowwise().sum();
      }
      if (log) {
        log->push_back({epoch + 1, loss_sum / static_cast<double>(corpus.size()),
                        static_cast<double>(hits) / static_cast<double>(corpus.size())});
      }
    }
    return m;
  }
};

// Deterministic for a fixed hp.seed.
inline ToyModel train(std::span<const Sample> corpus, const TrainingHyper& hp,
                      std::vector<EpochStats>* log = nullptr) {
  return ToyModelTrainer::run(corpus, hp, log);
}

}  // namespace umbra
