#pragma once

// Linear softmax-regression head trained on (possibly noisy) embeddings. It
// produces the per-class confidences that are blended with prototype
// similarity during refinement.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "protorefine/error.hpp"
#include "protorefine/io.hpp"
#include "protorefine/rng.hpp"
#include "protorefine/types.hpp"

namespace protorefine {

/// Parameters W (C x D, row-major) and b (C).
struct LinearHead {
  int classes = 0;
  std::size_t dim = 0;
  std::vector<double> weights;
  std::vector<double> bias;
  std::uint64_t trained_on = 0;  ///< fingerprint of the training data, 0 if unknown

  static LinearHead zeros(int classes, std::size_t dim) {
    require(classes >= 1 && dim >= 1, ErrorCode::invalid_argument, "head: C and D must be >= 1");
    return LinearHead{classes, dim,
                      std::vector<double>(static_cast<std::size_t>(classes) * dim, 0.0),
                      std::vector<double>(static_cast<std::size_t>(classes), 0.0), 0};
  }

  void validate() const {
    require(classes >= 1 && dim >= 1, ErrorCode::invalid_argument, "head: C and D must be >= 1");
    require(weights.size() == static_cast<std::size_t>(classes) * dim &&
                bias.size() == static_cast<std::size_t>(classes),
            ErrorCode::dimension_mismatch, "head: parameter shapes do not match C x D");
    for (double w : weights) require(std::isfinite(w), ErrorCode::non_finite, "head: non-finite weight");
    for (double v : bias) require(std::isfinite(v), ErrorCode::non_finite, "head: non-finite bias");
  }

  std::span<const double> weight_row(std::size_t c) const { return {weights.data() + c * dim, dim}; }

  template <typename T>
  void logits(std::span<const T> x, std::span<double> out) const {
    for (std::size_t c = 0; c < static_cast<std::size_t>(classes); ++c) {
      const auto w = weight_row(c);
      double z = bias[c];
      for (std::size_t d = 0; d < dim; ++d) z += w[d] * static_cast<double>(x[d]);
      out[c] = z;
    }
  }
};

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 128;
  double learning_rate = 0.1;  ///< initial rate, cosine-decayed to 0
  double l2_weight = 1e-4;
  std::uint64_t seed = 0;
  bool fine_tune = false;  ///< requires a warm start

  static TrainConfig fine_tuning(std::uint64_t seed = 0) {
    TrainConfig cfg;
    cfg.epochs = 50;
    cfg.learning_rate = 0.001;
    cfg.seed = seed;
    cfg.fine_tune = true;
    return cfg;
  }

  void validate() const {
    require(epochs >= 1, ErrorCode::invalid_argument, "train: epochs must be >= 1");
    require(batch_size >= 1, ErrorCode::invalid_argument, "train: batch_size must be >= 1");
    require(std::isfinite(learning_rate) && learning_rate > 0.0, ErrorCode::invalid_argument,
            "train: learning_rate must be > 0");
    require(std::isfinite(l2_weight) && l2_weight >= 0.0, ErrorCode::invalid_argument,
            "train: l2_weight must be >= 0");
  }
};

/// Numerically stable in-place softmax.
inline void softmax_inplace(std::span<double> z) {
  double top = z[0];
  for (double v : z) top = std::max(top, v);
  double total = 0.0;
  for (double& v : z) {
    v = std::exp(v - top);
    total += v;
  }
  for (double& v : z) v /= total;
}

struct LossGradient {
  double loss = 0.0;
  std::vector<double> weights;
  std::vector<double> bias;
};

/// Mean cross-entropy over `indices` plus l2_weight * ||W||^2, and its
/// gradient. Samples are accumulated in the order given.
inline LossGradient loss_and_gradient(const LinearHead& head, const EmbeddingMatrix& emb,
                                      const LabelSet& labels, std::span<const std::size_t> indices,
                                      double l2_weight) {
  const auto classes = static_cast<std::size_t>(head.classes);
  LossGradient g{0.0, std::vector<double>(head.weights.size(), 0.0),
                 std::vector<double>(classes, 0.0)};
  std::vector<double> z(classes);
  const double inv_n = 1.0 / static_cast<double>(indices.size());
  for (std::size_t i : indices) {
    const auto x = emb.row(i);
    head.logits(x, z);
    const auto y = static_cast<std::size_t>(labels[i]);
    double top = z[0];
    for (double v : z) top = std::max(top, v);
    double total = 0.0;
    for (double v : z) total += std::exp(v - top);
    g.loss += (top + std::log(total) - z[y]) * inv_n;
    for (std::size_t c = 0; c < classes; ++c) {
      double delta = std::exp(z[c] - top) / total;
      if (c == y) delta -= 1.0;
      delta *= inv_n;
      g.bias[c] += delta;
      double* row = g.weights.data() + c * head.dim;
      for (std::size_t d = 0; d < head.dim; ++d) row[d] += delta * static_cast<double>(x[d]);
    }
  }
  double norm2 = 0.0;
  for (std::size_t k = 0; k < head.weights.size(); ++k) {
    norm2 += head.weights[k] * head.weights[k];
    g.weights[k] += 2.0 * l2_weight * head.weights[k];
  }
  g.loss += l2_weight * norm2;
  return g;
}

inline double training_objective(const LinearHead& head, const Dataset& ds, double l2_weight) {
  std::vector<std::size_t> all(ds.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return loss_and_gradient(head, ds.embeddings, ds.labels, all, l2_weight).loss;
}

/// Cosine decay from the initial rate at step 0 towards 0 at `total_steps`.
inline double cosine_learning_rate(double initial, std::size_t step, std::size_t total_steps) {
  const double progress = static_cast<double>(step) / static_cast<double>(total_steps);
  return initial * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

/// FNV-1a over the embedding bytes and labels.
inline std::uint64_t dataset_fingerprint(const Dataset& ds) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const auto mix = [&h](std::uint32_t word) {
    for (int shift = 0; shift < 32; shift += 8) {
      h ^= (word >> shift) & 0xFFu;
      h *= 0x100000001b3ULL;
    }
  };
  mix(static_cast<std::uint32_t>(ds.size()));
  mix(static_cast<std::uint32_t>(ds.dim()));
  for (float v : ds.embeddings.values()) mix(std::bit_cast<std::uint32_t>(v));
  for (ClassIndex l : ds.labels.labels()) mix(static_cast<std::uint32_t>(l));
  return h;
}

struct TrainResult {
  LinearHead head;
  std::vector<double> epoch_objective;  ///< full-data objective after each epoch
};

/// Mini-batch gradient descent with a seeded per-epoch shuffle. The result is
/// a pure function of (data, cfg, warm_start).
inline TrainResult fit_head(const Dataset& ds, const TrainConfig& cfg,
                            const LinearHead* warm_start = nullptr) {
  cfg.validate();
  require(!cfg.fine_tune || warm_start != nullptr, ErrorCode::invalid_argument,
          "train: fine-tuning needs a warm-start head");
  LinearHead head = LinearHead::zeros(ds.num_classes(), ds.dim());
  if (warm_start != nullptr) {
    warm_start->validate();
    require(warm_start->classes == ds.num_classes() && warm_start->dim == ds.dim(),
            ErrorCode::dimension_mismatch, "train: warm-start head shape differs from the data");
    head = *warm_start;
  }

  const std::size_t batch = std::min(cfg.batch_size, ds.size());
  const std::size_t batches_per_epoch = (ds.size() + batch - 1) / batch;
  const std::size_t total_steps = cfg.epochs * batches_per_epoch;
  std::vector<std::size_t> order(ds.size());
  TrainResult result;
  result.epoch_objective.reserve(cfg.epochs);

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(cfg.seed, epoch);
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0; start < order.size(); start += batch, ++step) {
      const std::size_t stop = std::min(order.size(), start + batch);
      const std::span<const std::size_t> members(order.data() + start, stop - start);
      const auto g = loss_and_gradient(head, ds.embeddings, ds.labels, members, cfg.l2_weight);
      require(std::isfinite(g.loss), ErrorCode::diverged, "diverged; lower learning_rate");
      const double lr = cosine_learning_rate(cfg.learning_rate, step, total_steps);
      for (std::size_t k = 0; k < head.weights.size(); ++k) head.weights[k] -= lr * g.weights[k];
      for (std::size_t c = 0; c < head.bias.size(); ++c) head.bias[c] -= lr * g.bias[c];
    }
    const double objective = training_objective(head, ds, cfg.l2_weight);
    require(std::isfinite(objective), ErrorCode::diverged, "diverged; lower learning_rate");
    result.epoch_objective.push_back(objective);
  }
  head.validate();
  head.trained_on = dataset_fingerprint(ds);
  result.head = std::move(head);
  return result;
}

inline LinearHead train_head(const Dataset& ds, const TrainConfig& cfg,
                             const LinearHead* warm_start = nullptr) {
  return fit_head(ds, cfg, warm_start).head;
}

/// Row i = softmax(W x_i + b).
inline ConfidenceMatrix confidences(const LinearHead& head, const EmbeddingMatrix& emb) {
  require(head.dim == emb.dim(), ErrorCode::dimension_mismatch,
          "confidences: head dim " + std::to_string(head.dim) + " vs embedding dim " +
              std::to_string(emb.dim()));
  const auto classes = static_cast<std::size_t>(head.classes);
  std::vector<double> values(emb.count() * classes);
  for (std::size_t i = 0; i < emb.count(); ++i) {
    const std::span<double> row(values.data() + i * classes, classes);
    head.logits(emb.row(i), row);
    softmax_inplace(row);
  }
  return ConfidenceMatrix(emb.count(), classes, std::move(values),
                          {emb.ids().begin(), emb.ids().end()});
}

/// Top-1 predictions, ties to the lower class index.
inline std::vector<ClassIndex> predict(const LinearHead& head, const EmbeddingMatrix& emb) {
  require(head.dim == emb.dim(), ErrorCode::dimension_mismatch, "predict: dimension mismatch");
  std::vector<double> z(static_cast<std::size_t>(head.classes));
  std::vector<ClassIndex> out(emb.count());
  for (std::size_t i = 0; i < emb.count(); ++i) {
    head.logits(emb.row(i), std::span<double>(z));
    out[i] = static_cast<ClassIndex>(std::max_element(z.begin(), z.end()) - z.begin());
  }
  return out;
}

inline double top1_accuracy(const LinearHead& head, const Dataset& ds) {
  const auto predicted = predict(head, ds.embeddings);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] == ds.labels[i];
  return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

// LH01: magic[4] | u32 C | u32 D | C*D f32 W row-major | C f32 b, little-endian.
inline constexpr std::string_view kHeadMagic = "LH01";

inline std::vector<std::uint8_t> encode_head(const LinearHead& head) {
  head.validate();
  std::vector<std::uint8_t> out(kHeadMagic.begin(), kHeadMagic.end());
  detail::put_u32(out, static_cast<std::uint32_t>(head.classes));
  detail::put_u32(out, static_cast<std::uint32_t>(head.dim));
  for (double w : head.weights) detail::put_f32(out, static_cast<float>(w));
  for (double v : head.bias) detail::put_f32(out, static_cast<float>(v));
  return out;
}

inline LinearHead decode_head(const std::vector<std::uint8_t>& bytes) {
  require(bytes.size() >= 12, ErrorCode::truncated, "truncated payload: head header incomplete");
  require(std::memcmp(bytes.data(), kHeadMagic.data(), 4) == 0, ErrorCode::bad_magic,
          "bad magic: expected LH01");
  const std::uint32_t classes = detail::get_u32(bytes.data() + 4);
  const std::uint32_t dim = detail::get_u32(bytes.data() + 8);
  require(classes >= 1 && dim >= 1, ErrorCode::empty, "head: C and D must be >= 1");
  const std::uint64_t params = std::uint64_t{classes} * dim + classes;
  require(params <= detail::kMaxElements && classes <= INT32_MAX, ErrorCode::dimension_overflow,
          "dimension overflow in head header");
  const std::uint64_t expected = 12 + 4 * params;
  require(bytes.size() >= expected, ErrorCode::truncated, "truncated payload: head parameters");
  require(bytes.size() == expected, ErrorCode::trailing_data, "trailing data after head payload");
  LinearHead head = LinearHead::zeros(static_cast<int>(classes), dim);
  const std::uint8_t* p = bytes.data() + 12;
  for (double& w : head.weights) {
    w = detail::get_f32(p);
    p += 4;
  }
  for (double& v : head.bias) {
    v = detail::get_f32(p);
    p += 4;
  }
  head.validate();
  return head;
}

inline void write_head(const LinearHead& head, const std::filesystem::path& path) {
  detail::write_file(path, encode_head(head));
}

inline LinearHead read_head(const std::filesystem::path& path) {
  return decode_head(detail::read_file(path));
}

}  // namespace protorefine
