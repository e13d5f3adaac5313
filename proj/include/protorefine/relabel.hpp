#pragma once

// Prototype-anchored label refinement.
//
// Each class prototype is the plain mean of its anchor embeddings. A sample is
// scored against every class as
//
//   S_c = alpha * cos(x, p_c) + (1 - alpha) * conf_c
//
// and takes argmax_c S_c (lowest index on ties) when max_c S_c >= theta;
// otherwise it keeps its current label. Similarities are used as-is in
// [-1, 1], so S lies in [-alpha, 1]. One pass, no re-training.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "protorefine/error.hpp"
#include "protorefine/linear_head.hpp"
#include "protorefine/parallel.hpp"
#include "protorefine/types.hpp"

namespace protorefine {

inline constexpr double kMinNorm = 1e-8;

struct Prototypes {
  int classes = 0;
  std::size_t dim = 0;
  std::vector<double> vectors;      ///< C x D row-major
  std::vector<std::size_t> counts;  ///< anchors averaged per class

  std::span<const double> row(std::size_t c) const { return {vectors.data() + c * dim, dim}; }
};

template <typename T>
double euclidean_norm(std::span<const T> v) {
  double s = 0.0;
  for (T x : v) s += static_cast<double>(x) * static_cast<double>(x);
  return std::sqrt(s);
}

inline Prototypes build_prototypes(const AnchorSet& anchors) {
  Prototypes protos;
  protos.classes = anchors.num_classes();
  protos.dim = anchors.dim();
  protos.vectors.assign(static_cast<std::size_t>(protos.classes) * protos.dim, 0.0);
  protos.counts.assign(static_cast<std::size_t>(protos.classes), 0);
  const auto& emb = anchors.embeddings();
  for (std::size_t i = 0; i < emb.count(); ++i) {
    const auto c = static_cast<std::size_t>(anchors.classes()[i]);
    const auto x = emb.row(i);
    double* p = protos.vectors.data() + c * protos.dim;
    for (std::size_t d = 0; d < protos.dim; ++d) p[d] += static_cast<double>(x[d]);
    ++protos.counts[c];
  }
  for (std::size_t c = 0; c < protos.counts.size(); ++c) {
    require(protos.counts[c] >= 1, ErrorCode::empty,
            "prototype: class " + std::to_string(c) + " has no anchors");
    double* p = protos.vectors.data() + c * protos.dim;
    for (std::size_t d = 0; d < protos.dim; ++d) p[d] /= static_cast<double>(protos.counts[c]);
    require(euclidean_norm(protos.row(c)) >= kMinNorm, ErrorCode::degenerate_prototype,
            "degenerate prototype for class " + std::to_string(c));
  }
  return protos;
}

/// dot(x, p) / (|x| |p|), clamped to [-1, 1].
template <typename A, typename B>
double cosine_sim(std::span<const A> x, std::span<const B> p) {
  require(x.size() == p.size(), ErrorCode::dimension_mismatch, "cosine: length mismatch");
  double dot = 0.0;
  double xx = 0.0;
  double pp = 0.0;
  for (std::size_t d = 0; d < x.size(); ++d) {
    const auto a = static_cast<double>(x[d]);
    const auto b = static_cast<double>(p[d]);
    dot += a * b;
    xx += a * a;
    pp += b * b;
  }
  const double nx = std::sqrt(xx);
  const double np = std::sqrt(pp);
  require(nx >= kMinNorm && np >= kMinNorm, ErrorCode::zero_norm, "cosine: zero-norm input");
  return std::clamp(dot / (nx * np), -1.0, 1.0);
}

inline void check_alpha(double alpha) {
  require(std::isfinite(alpha) && alpha >= 0.0 && alpha <= 1.0, ErrorCode::invalid_argument,
          "alpha must lie in [0, 1]");
}

inline std::vector<double> blend_scores(std::span<const double> sim, std::span<const double> conf,
                                        double alpha) {
  require(sim.size() == conf.size(), ErrorCode::dimension_mismatch,
          "blend: similarity and confidence lengths differ");
  check_alpha(alpha);
  std::vector<double> out(sim.size());
  for (std::size_t c = 0; c < sim.size(); ++c) out[c] = alpha * sim[c] + (1.0 - alpha) * conf[c];
  return out;
}

struct RelabelConfig {
  double alpha = 0.5;
  double theta = 0.6;

  void validate() const {
    check_alpha(alpha);
    require(std::isfinite(theta), ErrorCode::invalid_argument, "theta must be finite");
  }
};

enum class Decision { kept, relabeled };

/// Per-sample breakdown. `relabeled` means the threshold was met and the label
/// was set to l_new, which may coincide with the original label.
struct ScoredSample {
  SampleId id = 0;
  std::vector<double> sim;
  std::vector<double> conf;
  std::vector<double> blended;
  double s_new = 0.0;
  ClassIndex l_new = 0;
  ClassIndex original = 0;
  ClassIndex refined = 0;
  Decision decision = Decision::kept;
};

struct RelabelResult {
  LabelSet refined;
  std::vector<ScoredSample> samples;

  std::size_t changed() const {
    std::size_t n = 0;
    for (const auto& s : samples) n += s.refined != s.original;
    return n;
  }
};

/// M x C cosine similarities between samples and prototypes.
inline std::vector<double> similarity_matrix(const EmbeddingMatrix& emb, const Prototypes& protos,
                                             unsigned threads = 1) {
  require(emb.dim() == protos.dim, ErrorCode::dimension_mismatch,
          "similarity: embedding dim differs from prototype dim");
  const auto classes = static_cast<std::size_t>(protos.classes);
  std::vector<double> sim(emb.count() * classes);
  parallel_for(emb.count(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      for (std::size_t c = 0; c < classes; ++c) {
        sim[i * classes + c] = cosine_sim(emb.row(i), protos.row(c));
      }
    }
  });
  return sim;
}

/// Argmax with the lowest index winning ties.
inline std::size_t argmax_lowest(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < v.size(); ++c) {
    if (v[c] > v[best]) best = c;
  }
  return best;
}

inline RelabelResult relabel(const Dataset& ds, const Prototypes& protos,
                             const ConfidenceMatrix& conf, const RelabelConfig& cfg,
                             unsigned threads = 1) {
  cfg.validate();
  const auto classes = static_cast<std::size_t>(ds.num_classes());
  require(protos.classes == ds.num_classes(), ErrorCode::dimension_mismatch,
          "relabel: prototype class count differs from label class count");
  require(conf.rows() == ds.size(), ErrorCode::cardinality_mismatch,
          "relabel: confidence rows differ from sample count");
  require(conf.classes() == classes, ErrorCode::dimension_mismatch,
          "relabel: confidence class count differs from label class count");
  const auto sim = similarity_matrix(ds.embeddings, protos, threads);

  std::vector<ScoredSample> samples(ds.size());
  parallel_for(ds.size(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      ScoredSample& s = samples[i];
      s.id = ds.embeddings.ids()[i];
      s.sim.assign(sim.begin() + static_cast<std::ptrdiff_t>(i * classes),
                   sim.begin() + static_cast<std::ptrdiff_t>((i + 1) * classes));
      const auto row = conf.row(i);
      s.conf.assign(row.begin(), row.end());
      s.blended = blend_scores(s.sim, s.conf, cfg.alpha);
      s.l_new = static_cast<ClassIndex>(argmax_lowest(s.blended));
      s.s_new = s.blended[static_cast<std::size_t>(s.l_new)];
      s.original = ds.labels[i];
      if (s.s_new >= cfg.theta) {
        s.refined = s.l_new;
        s.decision = Decision::relabeled;
      } else {
        s.refined = s.original;
        s.decision = Decision::kept;
      }
    }
  });

  std::vector<ClassIndex> refined(ds.size());
  for (std::size_t i = 0; i < samples.size(); ++i) refined[i] = samples[i].refined;
  return RelabelResult{ds.labels.relabeled(std::move(refined), LabelKind::refined),
                       std::move(samples)};
}

inline RelabelResult relabel(const Dataset& ds, const Prototypes& protos, const LinearHead& head,
                             const RelabelConfig& cfg, unsigned threads = 1) {
  require(head.classes == ds.num_classes(), ErrorCode::dimension_mismatch,
          "relabel: head class count differs from label class count");
  return relabel(ds, protos, confidences(head, ds.embeddings), cfg, threads);
}

}  // namespace protorefine
