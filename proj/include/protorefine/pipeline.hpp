#pragma once

// End-to-end run on a simulated benchmark:
//   simulate -> inject noise -> train head on noisy labels -> refine
//   -> fine-tune the head on refined labels -> evaluate on heldout truth.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "protorefine/eval.hpp"
#include "protorefine/linear_head.hpp"
#include "protorefine/noise.hpp"
#include "protorefine/relabel.hpp"
#include "protorefine/rng.hpp"
#include "protorefine/sim_bench.hpp"
#include "protorefine/sweep.hpp"

namespace protorefine {

struct Preset {
  std::string name;
  SimSpec sim;
  NoiseSpec noise;
  TrainConfig train;
  TrainConfig fine_tune;
  RelabelConfig relabel;
  std::vector<double> alpha_grid;
  std::vector<double> theta_grid;
};

namespace detail {
enum PipelineStream : std::uint64_t {
  kNoiseStream = 101,
  kTrainStream = 102,
  kFineTuneStream = 103,
};
}  // namespace detail

/// C=10, D=32, 500 samples and 100 anchors per class, separation 6, unit
/// spread, anchor shift 1, 70% PMD noise, alpha 0.5, theta 0.6. 200 heldout
/// samples per class are drawn from the same clusters for downstream accuracy.
inline Preset standard_preset(std::uint64_t seed) {
  Preset p;
  p.name = "standard";
  p.sim = SimSpec{10, 32, 500, 100, 200, 6.0, 1.0, 1.0, seed};
  p.noise.kind = NoiseKind::pmd;
  p.noise.rate = 0.70;
  p.noise.pmd_exponent = 3;
  p.noise.pmd_tau_max = 0.9;
  p.noise.seed = derive_seed(seed, detail::kNoiseStream);
  p.train.seed = derive_seed(seed, detail::kTrainStream);
  p.fine_tune = TrainConfig::fine_tuning(derive_seed(seed, detail::kFineTuneStream));
  p.relabel = RelabelConfig{0.5, 0.6};
  p.alpha_grid = {1.0, 0.7, 0.5, 0.3, 0.0};
  p.theta_grid = {0.0, 0.6};
  return p;
}

/// Standard preset with a strong domain gap (anchor shift 3) and 35% PMD.
inline Preset domain_gap_preset(std::uint64_t seed) {
  Preset p = standard_preset(seed);
  p.name = "domain-gap";
  p.sim.anchor_shift = 3.0;
  p.noise.rate = 0.35;
  return p;
}

inline Preset preset_by_name(std::string_view name, std::uint64_t seed) {
  if (name == "standard") return standard_preset(seed);
  if (name == "domain-gap") return domain_gap_preset(seed);
  fail(ErrorCode::invalid_argument, "unknown preset '" + std::string(name) + "'");
}

struct PipelineResult {
  Preset preset;
  SimBenchmark bench;
  LabelSet noisy;
  LinearHead noisy_head;
  RelabelResult refinement;
  RelabelReport report;
  SweepTable sweep;
  double downstream_noisy = 0.0;
  double downstream_refined = 0.0;
};

inline PipelineResult run_pipeline(const Preset& preset, unsigned threads = 1) {
  auto bench = generate_benchmark(preset.sim);
  require(bench.heldout.has_value(), ErrorCode::invalid_argument,
          "pipeline: preset needs heldout samples");
  const LabelSet& truth = bench.real.labels;
  LabelSet noisy = inject_noise(truth, &bench.posteriors, preset.noise);
  const Dataset noisy_ds{bench.real.embeddings, noisy};

  LinearHead head = train_head(noisy_ds, preset.train);
  const auto conf = confidences(head, noisy_ds.embeddings);
  const auto protos = build_prototypes(bench.anchors);
  auto refinement = relabel(noisy_ds, protos, conf, preset.relabel, threads);
  auto report = label_metrics(refinement.refined, noisy, truth);
  auto table = sweep(noisy_ds, protos, conf, preset.alpha_grid, preset.theta_grid, &truth, threads);

  const Dataset refined_ds{bench.real.embeddings, refinement.refined};
  const double acc_noisy = downstream_eval(noisy_ds, *bench.heldout, preset.fine_tune, &head);
  const double acc_refined = downstream_eval(refined_ds, *bench.heldout, preset.fine_tune, &head);

  return PipelineResult{preset,
                        std::move(bench),
                        std::move(noisy),
                        std::move(head),
                        std::move(refinement),
                        std::move(report),
                        std::move(table),
                        acc_noisy,
                        acc_refined};
}

inline nlohmann::json to_json(const Preset& p) {
  return nlohmann::json{
      {"name", p.name},
      {"classes", p.sim.num_classes},
      {"dim", p.sim.dim},
      {"per_class", p.sim.samples_per_class},
      {"anchors", p.sim.anchors_per_class},
      {"heldout_per_class", p.sim.heldout_per_class},
      {"separation", p.sim.class_separation},
      {"intra_std", p.sim.intra_std},
      {"anchor_shift", p.sim.anchor_shift},
      {"seed", p.sim.seed},
      {"noise_kind", to_string(p.noise.kind)},
      {"noise_rate", p.noise.rate},
      {"pmd_k", p.noise.pmd_exponent},
      {"pmd_tau_max", p.noise.pmd_tau_max},
      {"epochs", p.train.epochs},
      {"batch_size", p.train.batch_size},
      {"lr", p.train.learning_rate},
      {"l2", p.train.l2_weight},
      {"fine_tune_epochs", p.fine_tune.epochs},
      {"fine_tune_lr", p.fine_tune.learning_rate},
      {"alpha", p.relabel.alpha},
      {"theta", p.relabel.theta},
  };
}

inline nlohmann::json to_json(const PipelineResult& r) {
  std::size_t flipped = 0;
  const auto& truth = r.bench.real.labels;
  for (std::size_t i = 0; i < truth.size(); ++i) flipped += r.noisy[i] != truth[i];
  return nlohmann::json{
      {"preset", to_json(r.preset)},
      {"realized_noise_rate", static_cast<double>(flipped) / static_cast<double>(truth.size())},
      {"report", to_json(r.report)},
      {"downstream_accuracy_noisy", r.downstream_noisy},
      {"downstream_accuracy_refined", r.downstream_refined},
      {"sweep", to_json(r.sweep)},
  };
}

}  // namespace protorefine
