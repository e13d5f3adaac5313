#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "protorefine/error.hpp"
#include "protorefine/rng.hpp"
#include "protorefine/types.hpp"

namespace protorefine {

enum class NoiseKind { uniform, asymmetric, pmd, hybrid };

inline std::string_view to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::uniform: return "uniform";
    case NoiseKind::asymmetric: return "asymmetric";
    case NoiseKind::pmd: return "pmd";
    case NoiseKind::hybrid: return "hybrid";
  }
  return "unknown";
}

inline NoiseKind parse_noise_kind(std::string_view text) {
  if (text == "uniform") return NoiseKind::uniform;
  if (text == "asymmetric") return NoiseKind::asymmetric;
  if (text == "pmd") return NoiseKind::pmd;
  if (text == "hybrid") return NoiseKind::hybrid;
  fail(ErrorCode::invalid_argument, "unknown noise kind '" + std::string(text) + "'");
}

/// c -> (c + 1) mod C
inline std::vector<ClassIndex> default_asymmetric_mapping(int num_classes) {
  std::vector<ClassIndex> mapping(static_cast<std::size_t>(num_classes));
  for (int c = 0; c < num_classes; ++c) mapping[static_cast<std::size_t>(c)] = (c + 1) % num_classes;
  return mapping;
}

struct NoiseSpec {
  NoiseKind kind = NoiseKind::uniform;
  double rate = 0.0;
  NoiseKind second_kind = NoiseKind::uniform;  ///< hybrid only: uniform or asymmetric
  double second_rate = 0.0;                    ///< hybrid only
  std::vector<ClassIndex> asym_mapping;        ///< empty means the default mapping
  int pmd_exponent = 3;
  double pmd_tau_max = 0.9;
  std::uint64_t seed = 0;
};

namespace detail {

inline void check_rate(double rate, const char* what) {
  require(std::isfinite(rate) && rate >= 0.0 && rate <= 1.0, ErrorCode::invalid_argument,
          std::string(what) + " must lie in [0, 1]");
}

inline void check_mapping(std::span<const ClassIndex> mapping, int num_classes) {
  require(mapping.size() == static_cast<std::size_t>(num_classes), ErrorCode::invalid_argument,
          "asymmetric mapping must have one entry per class");
  for (std::size_t c = 0; c < mapping.size(); ++c) {
    require(mapping[c] >= 0 && mapping[c] < num_classes, ErrorCode::label_out_of_range,
            "asymmetric mapping target out of range");
    require(mapping[c] != static_cast<ClassIndex>(c), ErrorCode::invalid_argument,
            "asymmetric mapping has a fixed point at class " + std::to_string(c));
  }
}

// Stage-two seed for hybrid noise; stage one uses the configured seed itself.
inline constexpr std::uint64_t kHybridSecondStage = 0x68796272ULL;

}  // namespace detail

/// Each sample is selected with probability `rate`; a selected sample moves to
/// a class drawn uniformly from the C - 1 classes other than its own.
inline LabelSet inject_uniform(const LabelSet& truth, double rate, std::uint64_t seed) {
  detail::check_rate(rate, "uniform noise rate");
  const int classes = truth.num_classes();
  require(classes >= 2, ErrorCode::invalid_argument, "uniform noise needs C >= 2");
  std::vector<ClassIndex> out(truth.labels().begin(), truth.labels().end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    Rng rng(seed, i);
    if (rng.uniform() < rate) {
      const auto draw = static_cast<ClassIndex>(rng.below(static_cast<std::uint64_t>(classes - 1)));
      out[i] = draw >= truth[i] ? draw + 1 : draw;
    }
  }
  return truth.relabeled(std::move(out), LabelKind::noisy);
}

inline LabelSet inject_asymmetric(const LabelSet& truth, double rate,
                                  std::span<const ClassIndex> mapping, std::uint64_t seed) {
  detail::check_rate(rate, "asymmetric noise rate");
  detail::check_mapping(mapping, truth.num_classes());
  std::vector<ClassIndex> out(truth.labels().begin(), truth.labels().end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    Rng rng(seed, i);
    if (rng.uniform() < rate) out[i] = mapping[static_cast<std::size_t>(truth[i])];
  }
  return truth.relabeled(std::move(out), LabelKind::noisy);
}

/// Top class, runner-up class and their posterior margin for one row. Ties go
/// to the lower class index.
struct PosteriorMargin {
  ClassIndex top = 0;
  ClassIndex runner_up = 0;
  double margin = 0.0;
};

inline PosteriorMargin posterior_margin(std::span<const double> row) {
  require(row.size() >= 2, ErrorCode::invalid_argument, "margin needs at least two classes");
  PosteriorMargin pm;
  for (std::size_t c = 1; c < row.size(); ++c) {
    if (row[c] > row[static_cast<std::size_t>(pm.top)]) pm.top = static_cast<ClassIndex>(c);
  }
  pm.runner_up = pm.top == 0 ? 1 : 0;
  for (std::size_t c = 0; c < row.size(); ++c) {
    if (static_cast<ClassIndex>(c) == pm.top) continue;
    if (row[c] > row[static_cast<std::size_t>(pm.runner_up)]) pm.runner_up = static_cast<ClassIndex>(c);
  }
  pm.margin = std::clamp(row[static_cast<std::size_t>(pm.top)] -
                             row[static_cast<std::size_t>(pm.runner_up)],
                         0.0, 1.0);
  return pm;
}

/// tau(m) = min(tau_max, scale * (1 - m)^k); non-increasing in m.
inline double pmd_flip_probability(double margin, double scale, int exponent, double tau_max) {
  return std::min(tau_max, scale * std::pow(1.0 - margin, exponent));
}

inline double pmd_mean_flip_probability(std::span<const double> margins, double scale,
                                        int exponent, double tau_max) {
  double total = 0.0;
  for (double m : margins) total += pmd_flip_probability(m, scale, exponent, tau_max);
  return total / static_cast<double>(margins.size());
}

/// Smallest scale (to bisection precision) whose mean flip probability over
/// `margins` reaches `target_rate`.
inline double calibrate_pmd_scale(std::span<const double> margins, double target_rate,
                                  int exponent, double tau_max) {
  require(!margins.empty(), ErrorCode::empty, "pmd: no samples");
  detail::check_rate(target_rate, "pmd target rate");
  require(exponent >= 1, ErrorCode::invalid_argument, "pmd: exponent k must be >= 1");
  require(std::isfinite(tau_max) && tau_max > 0.0 && tau_max <= 1.0, ErrorCode::invalid_argument,
          "pmd: tau_max must lie in (0, 1]");
  if (target_rate == 0.0) return 0.0;

  const auto flippable = std::count_if(margins.begin(), margins.end(),
                                       [&](double m) { return std::pow(1.0 - m, exponent) > 0.0; });
  const double reachable =
      tau_max * static_cast<double>(flippable) / static_cast<double>(margins.size());
  require(target_rate <= reachable + 1e-12, ErrorCode::unreachable_rate,
          "target rate unreachable; raise tau_max (max reachable " + std::to_string(reachable) + ")");

  const auto mean_at = [&](double scale) {
    return pmd_mean_flip_probability(margins, scale, exponent, tau_max);
  };
  double lo = 0.0;
  double hi = 1.0;
  while (mean_at(hi) < target_rate - 1e-12) {
    lo = hi;
    hi *= 2.0;
    require(std::isfinite(hi), ErrorCode::unreachable_rate,
            "target rate unreachable; raise tau_max");
  }
  for (int iter = 0; iter < 200 && hi - lo > 1e-12 * hi; ++iter) {
    const double mid = 0.5 * (lo + hi);
    (mean_at(mid) < target_rate ? lo : hi) = mid;
  }
  return hi;
}

/// Class a PMD flip moves `label` to: the runner-up of the posterior row, or
/// the top class when the label already is the runner-up.
inline ClassIndex pmd_flip_target(const PosteriorMargin& pm, ClassIndex label) {
  return label == pm.runner_up ? pm.top : pm.runner_up;
}

/// Feature-dependent noise: each sample flips with probability tau(margin) to
/// pmd_flip_target, where the scale of tau is calibrated so the mean flip
/// probability equals `target_rate`. Every flip changes the label.
inline LabelSet inject_pmd(const LabelSet& truth, const ConfidenceMatrix& posteriors,
                           double target_rate, int exponent, double tau_max, std::uint64_t seed) {
  require(posteriors.rows() == truth.size(), ErrorCode::cardinality_mismatch,
          "cardinality mismatch: posteriors vs labels");
  require(posteriors.classes() == static_cast<std::size_t>(truth.num_classes()),
          ErrorCode::dimension_mismatch, "posterior class count differs from label class count");
  require(truth.num_classes() >= 2, ErrorCode::invalid_argument, "pmd noise needs C >= 2");

  std::vector<PosteriorMargin> rows(truth.size());
  std::vector<double> margins(truth.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i] = posterior_margin(posteriors.row(i));
    margins[i] = rows[i].margin;
  }
  const double scale = calibrate_pmd_scale(margins, target_rate, exponent, tau_max);

  std::vector<ClassIndex> out(truth.labels().begin(), truth.labels().end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    Rng rng(seed, i);
    if (rng.uniform() < pmd_flip_probability(margins[i], scale, exponent, tau_max)) {
      out[i] = pmd_flip_target(rows[i], truth[i]);
    }
  }
  return truth.relabeled(std::move(out), LabelKind::noisy);
}

/// PMD at spec.rate first, then the i.i.d. component at spec.second_rate on
/// top of the PMD output.
inline LabelSet inject_hybrid(const LabelSet& truth, const ConfidenceMatrix& posteriors,
                              const NoiseSpec& spec) {
  require(spec.kind == NoiseKind::hybrid, ErrorCode::invalid_argument,
          "inject_hybrid needs kind = hybrid");
  require(spec.second_kind == NoiseKind::uniform || spec.second_kind == NoiseKind::asymmetric,
          ErrorCode::invalid_argument, "hybrid second kind must be uniform or asymmetric");
  const auto stage_one =
      inject_pmd(truth, posteriors, spec.rate, spec.pmd_exponent, spec.pmd_tau_max, spec.seed);
  const std::uint64_t seed_two = derive_seed(spec.seed, detail::kHybridSecondStage);
  if (spec.second_kind == NoiseKind::uniform) {
    return inject_uniform(stage_one, spec.second_rate, seed_two);
  }
  const auto mapping = spec.asym_mapping.empty()
                           ? default_asymmetric_mapping(truth.num_classes())
                           : spec.asym_mapping;
  return inject_asymmetric(stage_one, spec.second_rate, mapping, seed_two);
}

/// Dispatch on spec.kind. `posteriors` is required for pmd and hybrid.
inline LabelSet inject_noise(const LabelSet& truth, const ConfidenceMatrix* posteriors,
                             const NoiseSpec& spec) {
  switch (spec.kind) {
    case NoiseKind::uniform:
      return inject_uniform(truth, spec.rate, spec.seed);
    case NoiseKind::asymmetric: {
      const auto mapping = spec.asym_mapping.empty()
                               ? default_asymmetric_mapping(truth.num_classes())
                               : spec.asym_mapping;
      return inject_asymmetric(truth, spec.rate, mapping, spec.seed);
    }
    case NoiseKind::pmd:
      require(posteriors != nullptr, ErrorCode::invalid_argument, "pmd noise needs posteriors");
      return inject_pmd(truth, *posteriors, spec.rate, spec.pmd_exponent, spec.pmd_tau_max,
                        spec.seed);
    case NoiseKind::hybrid:
      require(posteriors != nullptr, ErrorCode::invalid_argument, "hybrid noise needs posteriors");
      return inject_hybrid(truth, *posteriors, spec);
  }
  fail(ErrorCode::invalid_argument, "unknown noise kind");
}

}  // namespace protorefine
