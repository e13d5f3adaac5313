#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "protorefine/error.hpp"

namespace protorefine {

using SampleId = std::uint32_t;
using ClassIndex = int;

inline std::vector<SampleId> sequential_ids(std::size_t count) {
  std::vector<SampleId> ids(count);
  std::iota(ids.begin(), ids.end(), SampleId{0});
  return ids;
}

/// M x D row-major f32 features with ascending unique ids.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix(std::size_t count, std::size_t dim, std::vector<float> values,
                  std::vector<SampleId> ids)
      : count_(count), dim_(dim), values_(std::move(values)), ids_(std::move(ids)) {
    require(count_ >= 1, ErrorCode::empty, "embedding matrix: M >= 1 violated");
    require(dim_ >= 1, ErrorCode::empty, "embedding matrix: D >= 1 violated");
    require(values_.size() / dim_ == count_ && values_.size() % dim_ == 0,
            ErrorCode::dimension_mismatch, "embedding matrix: value count is not M*D");
    require(ids_.size() == count_, ErrorCode::cardinality_mismatch,
            "embedding matrix: id count differs from M");
    for (float v : values_) {
      require(std::isfinite(v), ErrorCode::non_finite, "embedding matrix: non-finite entry");
    }
    for (std::size_t i = 1; i < ids_.size(); ++i) {
      require(ids_[i] != ids_[i - 1], ErrorCode::duplicate_id, "embedding matrix: duplicate id");
      require(ids_[i] > ids_[i - 1], ErrorCode::unsorted_ids,
              "embedding matrix: ids must be sorted ascending");
    }
  }

  EmbeddingMatrix(std::size_t count, std::size_t dim, std::vector<float> values)
      : EmbeddingMatrix(count, dim, std::move(values), sequential_ids(count)) {}

  std::size_t count() const noexcept { return count_; }
  std::size_t dim() const noexcept { return dim_; }
  std::span<const float> row(std::size_t i) const { return {values_.data() + i * dim_, dim_}; }
  std::span<const float> values() const noexcept { return values_; }
  std::span<const SampleId> ids() const noexcept { return ids_; }

  friend bool operator==(const EmbeddingMatrix&, const EmbeddingMatrix&) = default;

 private:
  std::size_t count_;
  std::size_t dim_;
  std::vector<float> values_;
  std::vector<SampleId> ids_;
};

enum class LabelKind { noisy, refined, truth };

inline std::string_view to_string(LabelKind kind) {
  switch (kind) {
    case LabelKind::noisy: return "noisy";
    case LabelKind::refined: return "refined";
    case LabelKind::truth: return "truth";
  }
  return "unknown";
}

/// Integer class labels in [0, C). Ids mirror the CSV id column; row order is
/// what pairs labels with embeddings.
class LabelSet {
 public:
  LabelSet(std::vector<ClassIndex> labels, int num_classes, LabelKind kind,
           std::vector<SampleId> ids)
      : labels_(std::move(labels)), ids_(std::move(ids)), num_classes_(num_classes), kind_(kind) {
    require(num_classes_ >= 1, ErrorCode::invalid_argument, "label set: C >= 1 violated");
    require(!labels_.empty(), ErrorCode::empty, "label set: M >= 1 violated");
    require(ids_.size() == labels_.size(), ErrorCode::cardinality_mismatch,
            "label set: id count differs from label count");
    for (ClassIndex l : labels_) {
      require(l >= 0 && l < num_classes_, ErrorCode::label_out_of_range,
              "label out of range: " + std::to_string(l) + " not in [0, " +
                  std::to_string(num_classes_) + ")");
    }
    std::vector<SampleId> sorted = ids_;
    std::sort(sorted.begin(), sorted.end());
    require(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(),
            ErrorCode::duplicate_id, "label set: duplicate id");
  }

  LabelSet(std::vector<ClassIndex> labels, int num_classes, LabelKind kind)
      : LabelSet(labels, num_classes, kind, sequential_ids(labels.size())) {}

  std::size_t size() const noexcept { return labels_.size(); }
  int num_classes() const noexcept { return num_classes_; }
  LabelKind kind() const noexcept { return kind_; }
  ClassIndex operator[](std::size_t i) const { return labels_[i]; }
  std::span<const ClassIndex> labels() const noexcept { return labels_; }
  std::span<const SampleId> ids() const noexcept { return ids_; }

  /// Same ids and class count, new labels and kind.
  LabelSet relabeled(std::vector<ClassIndex> labels, LabelKind kind) const {
    require(labels.size() == labels_.size(), ErrorCode::cardinality_mismatch,
            "label set: replacement has a different length");
    return LabelSet(std::move(labels), num_classes_, kind, ids_);
  }

  friend bool operator==(const LabelSet&, const LabelSet&) = default;

 private:
  std::vector<ClassIndex> labels_;
  std::vector<SampleId> ids_;
  int num_classes_;
  LabelKind kind_;
};

/// M x C matrix of class probabilities; rows sum to one.
class ConfidenceMatrix {
 public:
  static constexpr double kRowSumTolerance = 1e-5;

  ConfidenceMatrix(std::size_t rows, std::size_t classes, std::vector<double> values,
                   std::vector<SampleId> ids)
      : rows_(rows), classes_(classes), values_(std::move(values)), ids_(std::move(ids)) {
    require(rows_ >= 1 && classes_ >= 1, ErrorCode::empty, "confidence matrix: empty shape");
    require(ids_.size() == rows_, ErrorCode::cardinality_mismatch,
            "confidence matrix: id count differs from M");
    require(values_.size() / classes_ == rows_ && values_.size() % classes_ == 0,
            ErrorCode::dimension_mismatch, "confidence matrix: value count is not M*C");
    for (std::size_t i = 0; i < rows_; ++i) {
      double sum = 0.0;
      for (double v : row(i)) {
        require(std::isfinite(v), ErrorCode::non_finite, "confidence matrix: non-finite entry");
        require(v >= 0.0 && v <= 1.0, ErrorCode::not_stochastic,
                "confidence matrix: entry outside [0, 1]");
        sum += v;
      }
      require(std::abs(sum - 1.0) <= kRowSumTolerance, ErrorCode::not_stochastic,
              "confidence matrix: row " + std::to_string(i) + " does not sum to 1");
    }
  }

  ConfidenceMatrix(std::size_t rows, std::size_t classes, std::vector<double> values)
      : ConfidenceMatrix(rows, classes, std::move(values), sequential_ids(rows)) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t classes() const noexcept { return classes_; }
  std::span<const double> row(std::size_t i) const {
    return {values_.data() + i * classes_, classes_};
  }
  std::span<const double> values() const noexcept { return values_; }
  std::span<const SampleId> ids() const noexcept { return ids_; }

 private:
  std::size_t rows_;
  std::size_t classes_;
  std::vector<double> values_;
  std::vector<SampleId> ids_;
};

/// Anchor embeddings with one class index per row; every class owns at least
/// one anchor.
class AnchorSet {
 public:
  AnchorSet(EmbeddingMatrix embeddings, std::vector<ClassIndex> classes, int num_classes)
      : embeddings_(std::move(embeddings)), classes_(std::move(classes)),
        counts_(static_cast<std::size_t>(std::max(num_classes, 0))) {
    require(num_classes >= 1, ErrorCode::invalid_argument, "anchor set: C >= 1 violated");
    require(classes_.size() == embeddings_.count(), ErrorCode::cardinality_mismatch,
            "anchor set: class index count differs from anchor count");
    for (ClassIndex c : classes_) {
      require(c >= 0 && c < num_classes, ErrorCode::label_out_of_range,
              "anchor set: class index out of range");
      ++counts_[static_cast<std::size_t>(c)];
    }
    for (std::size_t c = 0; c < counts_.size(); ++c) {
      require(counts_[c] >= 1, ErrorCode::empty,
              "anchor set: class " + std::to_string(c) + " has no anchors");
    }
  }

  int num_classes() const noexcept { return static_cast<int>(counts_.size()); }
  std::size_t dim() const noexcept { return embeddings_.dim(); }
  std::size_t count(ClassIndex c) const { return counts_[static_cast<std::size_t>(c)]; }
  const EmbeddingMatrix& embeddings() const noexcept { return embeddings_; }
  std::span<const ClassIndex> classes() const noexcept { return classes_; }

 private:
  EmbeddingMatrix embeddings_;
  std::vector<ClassIndex> classes_;
  std::vector<std::size_t> counts_;
};

/// Embeddings paired row-by-row with labels.
struct Dataset {
  EmbeddingMatrix embeddings;
  LabelSet labels;

  std::size_t size() const noexcept { return embeddings.count(); }
  std::size_t dim() const noexcept { return embeddings.dim(); }
  int num_classes() const noexcept { return labels.num_classes(); }
};

inline Dataset bind_dataset(EmbeddingMatrix embeddings, LabelSet labels) {
  require(embeddings.count() == labels.size(), ErrorCode::cardinality_mismatch,
          "cardinality mismatch: " + std::to_string(embeddings.count()) + " embeddings vs " +
              std::to_string(labels.size()) + " labels");
  const auto a = embeddings.ids();
  const auto b = labels.ids();
  require(std::equal(a.begin(), a.end(), b.begin()), ErrorCode::id_mismatch,
          "dataset: embedding and label ids disagree row-wise");
  return Dataset{std::move(embeddings), std::move(labels)};
}

}  // namespace protorefine
