#pragma once

// `protorefine` command line: simgen, inject, train, relabel, sweep, eval,
// pipeline. Exit codes: 0 success, 1 runtime error, 2 usage error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "protorefine/protorefine.hpp"

namespace protorefine::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Flat "key = value" config; '#' starts a comment line. Keys are long flag
/// names without the leading dashes.
inline std::vector<std::pair<std::string, std::string>> read_config(const fs::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::io, "cannot open config " + path.string());
  std::vector<std::pair<std::string, std::string>> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto view = detail::trim(line);
    if (view.empty() || view.front() == '#') continue;
    const auto eq = view.find('=');
    require(eq != std::string_view::npos, ErrorCode::parse,
            path.string() + ":" + std::to_string(line_no) + ": expected key = value");
    entries.emplace_back(std::string(detail::trim(view.substr(0, eq))),
                         std::string(detail::trim(view.substr(eq + 1))));
  }
  return entries;
}

struct SimgenArgs {
  SimSpec spec;
  std::string out;
};

struct InjectArgs {
  std::string truth, posteriors, out, kind = "uniform", second_kind = "uniform";
  int classes = 0;
  double rate = 0.0, second_rate = 0.0, tau_max = 0.9;
  int k = 3;
  std::vector<int> mapping;
  std::uint64_t seed = 0;
};

struct TrainArgs {
  std::string embeddings, labels, warm_start, out;
  int classes = 0;
  TrainConfig cfg;
};

struct ScoringInputs {
  std::string embeddings, labels, anchors, anchor_classes, head, truth;
  int classes = 0;
  unsigned threads = 1;
};

struct RelabelArgs {
  ScoringInputs in;
  RelabelConfig cfg;
  std::string out_labels, out_report, out_samples;
};

struct SweepArgs {
  ScoringInputs in;
  std::vector<double> alphas{1.0, 0.7, 0.5, 0.3};
  std::vector<double> thetas{0.0, 0.6};
  std::string out, out_json;
};

struct EvalArgs {
  std::string refined, noisy, truth, out, format = "json";
  std::string train_embeddings, heldout_embeddings, heldout_truth, warm_start;
  int classes = 0;
  std::uint64_t seed = 0;
};

struct PipelineArgs {
  std::string preset = "standard", out;
  std::uint64_t seed = 7;
  unsigned threads = 1;
};

inline void add_scoring_inputs(CLI::App* sub, ScoringInputs& in) {
  sub->add_option("--embeddings", in.embeddings, "EMB1 sample embeddings")->required();
  sub->add_option("--labels", in.labels, "noisy labels CSV")->required();
  sub->add_option("--classes", in.classes, "number of classes C")->required();
  sub->add_option("--anchors", in.anchors, "EMB1 anchor embeddings")->required();
  sub->add_option("--anchor-classes", in.anchor_classes, "anchor class sidecar CSV")->required();
  sub->add_option("--head", in.head, "LH01 head")->required();
  sub->add_option("--truth", in.truth, "optional ground-truth labels CSV");
  sub->add_option("--threads", in.threads, "scoring threads (output does not depend on it)");
}

struct LoadedScoring {
  Dataset ds;
  Prototypes protos;
  LinearHead head;
  std::optional<LabelSet> truth;
};

inline LoadedScoring load_scoring(const ScoringInputs& in) {
  auto ds = bind_dataset(read_embeddings(in.embeddings),
                         read_labels(in.labels, in.classes, LabelKind::noisy));
  auto anchors = read_anchors(in.anchors, in.anchor_classes, in.classes);
  auto head = read_head(in.head);
  std::optional<LabelSet> truth;
  if (!in.truth.empty()) {
    truth = read_labels(in.truth, in.classes, LabelKind::truth);
    require(truth->size() == ds.size(), ErrorCode::cardinality_mismatch,
            "cardinality mismatch: truth vs embeddings");
  }
  return LoadedScoring{std::move(ds), build_prototypes(anchors), std::move(head), std::move(truth)};
}

inline void write_json(const nlohmann::json& j, const fs::path& path) {
  detail::write_text(path, j.dump(2) + "\n");
}

inline int run_simgen(const SimgenArgs& a, std::ostream& out) {
  const auto bench = generate_benchmark(a.spec);
  const fs::path dir(a.out);
  fs::create_directories(dir);
  write_embeddings(bench.real.embeddings, dir / "real.emb");
  write_labels(bench.real.labels, dir / "truth.csv");
  write_anchors(bench.anchors, dir / "anchors.emb", dir / "anchors.csv");
  write_confidences(bench.posteriors, dir / "posteriors.cnf");
  if (bench.heldout) {
    write_embeddings(bench.heldout->embeddings, dir / "heldout.emb");
    write_labels(bench.heldout->labels, dir / "heldout_truth.csv");
  }
  out << "simgen: " << bench.real.size() << " samples, " << bench.anchors.embeddings().count()
      << " anchors -> " << dir.string() << "\n";
  return kExitOk;
}

inline int run_inject(const InjectArgs& a, std::ostream& out) {
  std::optional<ConfidenceMatrix> posteriors;
  if (!a.posteriors.empty()) posteriors = read_confidences(a.posteriors);
  int classes = a.classes;
  if (classes == 0 && posteriors) classes = static_cast<int>(posteriors->classes());
  require(classes >= 1, ErrorCode::invalid_argument, "inject: pass --classes or --posteriors");
  const auto truth = read_labels(a.truth, classes, LabelKind::truth);

  NoiseSpec spec;
  spec.kind = parse_noise_kind(a.kind);
  spec.rate = a.rate;
  spec.second_kind = parse_noise_kind(a.second_kind);
  spec.second_rate = a.second_rate;
  spec.asym_mapping.assign(a.mapping.begin(), a.mapping.end());
  spec.pmd_exponent = a.k;
  spec.pmd_tau_max = a.tau_max;
  spec.seed = a.seed;
  const auto noisy = inject_noise(truth, posteriors ? &*posteriors : nullptr, spec);
  write_labels(noisy, a.out);

  std::size_t changed = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) changed += noisy[i] != truth[i];
  out << "inject: " << to_string(spec.kind) << " changed " << changed << "/" << truth.size()
      << " labels -> " << a.out << "\n";
  return kExitOk;
}

inline int run_train(const TrainArgs& a, std::ostream& out) {
  const auto ds = bind_dataset(read_embeddings(a.embeddings),
                               read_labels(a.labels, a.classes, LabelKind::noisy));
  std::optional<LinearHead> warm;
  if (!a.warm_start.empty()) warm = read_head(a.warm_start);
  const auto result = fit_head(ds, a.cfg, warm ? &*warm : nullptr);
  write_head(result.head, a.out);
  out << "train: " << a.cfg.epochs << " epochs, final objective "
      << format_double(result.epoch_objective.back()) << ", train accuracy "
      << format_double(top1_accuracy(result.head, ds)) << " -> " << a.out << "\n";
  return kExitOk;
}

inline std::string samples_csv(const RelabelResult& r) {
  std::ostringstream csv;
  csv << "id,original,l_new,s_new,refined,decision\n";
  for (const auto& s : r.samples) {
    csv << s.id << ',' << s.original << ',' << s.l_new << ',' << format_double(s.s_new) << ','
        << s.refined << ',' << (s.decision == Decision::relabeled ? "relabeled" : "kept") << '\n';
  }
  return csv.str();
}

inline int run_relabel(const RelabelArgs& a, std::ostream& out) {
  const auto in = load_scoring(a.in);
  const auto result = relabel(in.ds, in.protos, in.head, a.cfg, a.in.threads);
  write_labels(result.refined, a.out_labels);

  std::size_t relabeled = 0;
  for (const auto& s : result.samples) relabeled += s.decision == Decision::relabeled;
  nlohmann::json report{{"alpha", a.cfg.alpha},
                        {"theta", a.cfg.theta},
                        {"total", in.ds.size()},
                        {"changed", result.changed()},
                        {"relabeled", relabeled}};
  if (in.truth) report["metrics"] = to_json(label_metrics(result.refined, in.ds.labels, *in.truth));
  if (!a.out_report.empty()) write_json(report, a.out_report);
  if (!a.out_samples.empty()) detail::write_text(a.out_samples, samples_csv(result));
  out << "relabel: changed " << result.changed() << "/" << in.ds.size() << " labels -> "
      << a.out_labels << "\n";
  return kExitOk;
}

inline int run_sweep(const SweepArgs& a, std::ostream& out) {
  const auto in = load_scoring(a.in);
  const auto table = sweep(in.ds, in.protos, in.head, a.alphas, a.thetas,
                           in.truth ? &*in.truth : nullptr, a.in.threads);
  detail::write_text(a.out, sweep_csv(table));
  if (!a.out_json.empty()) write_json(to_json(table), a.out_json);
  out << "sweep: " << table.cells.size() << " cells -> " << a.out << "\n";
  return kExitOk;
}

inline int run_eval(const EvalArgs& a, std::ostream& out) {
  const auto refined = read_labels(a.refined, a.classes, LabelKind::refined);
  const auto noisy = read_labels(a.noisy, a.classes, LabelKind::noisy);
  const auto truth = read_labels(a.truth, a.classes, LabelKind::truth);
  const auto report = label_metrics(refined, noisy, truth);
  const auto format = parse_report_format(a.format);

  const bool downstream = !a.train_embeddings.empty();
  if (downstream) {
    require(!a.heldout_embeddings.empty() && !a.heldout_truth.empty(), ErrorCode::invalid_argument,
            "eval: downstream needs --heldout-embeddings and --heldout-truth");
    require(format == ReportFormat::json, ErrorCode::invalid_argument,
            "eval: downstream accuracy is only reported in json format");
    const auto train_emb = read_embeddings(a.train_embeddings);
    const auto heldout = bind_dataset(read_embeddings(a.heldout_embeddings),
                                      read_labels(a.heldout_truth, a.classes, LabelKind::truth));
    std::optional<LinearHead> warm;
    if (!a.warm_start.empty()) warm = read_head(a.warm_start);
    TrainConfig cfg = warm ? TrainConfig::fine_tuning(a.seed) : TrainConfig{};
    cfg.seed = a.seed;
    const double acc_refined = downstream_eval(bind_dataset(train_emb, refined), heldout, cfg,
                                               warm ? &*warm : nullptr);
    const double acc_noisy = downstream_eval(bind_dataset(train_emb, noisy), heldout, cfg,
                                             warm ? &*warm : nullptr);
    auto j = to_json(report);
    j["downstream_accuracy_refined"] = acc_refined;
    j["downstream_accuracy_noisy"] = acc_noisy;
    write_json(j, a.out);
  } else {
    emit_report(report, a.out, format);
  }
  out << "eval: label accuracy " << format_double(report.label_accuracy_before) << " -> "
      << format_double(report.label_accuracy_after) << " (" << a.out << ")\n";
  return kExitOk;
}

inline int run_pipeline_command(const PipelineArgs& a, std::ostream& out) {
  const auto result = run_pipeline(preset_by_name(a.preset, a.seed), a.threads);
  const auto j = to_json(result);
  if (a.out.empty()) {
    out << j.dump(2) << "\n";
    return kExitOk;
  }
  const fs::path dir(a.out);
  fs::create_directories(dir);
  write_json(j, dir / "report.json");
  detail::write_text(dir / "sweep.csv", sweep_csv(result.sweep));
  write_labels(result.noisy, dir / "noisy.csv");
  write_labels(result.refinement.refined, dir / "refined.csv");
  out << "pipeline: label accuracy " << format_double(result.report.label_accuracy_before)
      << " -> " << format_double(result.report.label_accuracy_after)
      << ", downstream accuracy " << format_double(result.downstream_noisy) << " -> "
      << format_double(result.downstream_refined) << " -> " << dir.string() << "\n";
  return kExitOk;
}

/// Appends config entries for the selected subcommand that are not already
/// given on the command line. Unknown keys are an error.
inline std::vector<std::string> merge_config(const CLI::App& app, std::vector<std::string> args) {
  std::optional<std::string> config_path;
  std::vector<std::string> rest;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      config_path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      config_path = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (!config_path) return rest;

  const CLI::App* sub = nullptr;
  for (const auto& a : rest) {
    if (a.rfind("-", 0) == 0) continue;
    try {
      sub = app.get_subcommand(a);
    } catch (const CLI::OptionNotFound&) {
      continue;
    }
    break;
  }
  require(sub != nullptr, ErrorCode::invalid_argument, "--config needs a subcommand");

  for (const auto& [key, value] : read_config(*config_path)) {
    const CLI::Option* opt = nullptr;
    for (const CLI::Option* o : sub->get_options()) {
      for (const auto& name : o->get_lnames()) {
        if (name == key && name != "help") opt = o;
      }
    }
    require(opt != nullptr, ErrorCode::invalid_argument,
            "unknown config key '" + key + "' for " + sub->get_name());
    const std::string flag = "--" + key;
    bool given = false;
    for (const auto& a : rest) given = given || a == flag || a.rfind(flag + "=", 0) == 0;
    if (given) continue;
    if (opt->get_expected_min() == 0) {
      if (value == "true" || value == "1") rest.push_back(flag);
      else require(value == "false" || value == "0", ErrorCode::parse,
                   "config flag '" + key + "' expects true or false");
    } else {
      rest.push_back(flag);
      rest.push_back(value);
    }
  }
  return rest;
}

inline int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Prototype-anchored noisy label refinement", "protorefine"};
  app.require_subcommand(1);
  app.add_option("--config", "flat key = value file; command-line flags take precedence");

  SimgenArgs simgen;
  auto* s = app.add_subcommand("simgen", "generate a Gaussian benchmark");
  s->add_option("--classes", simgen.spec.num_classes)->required();
  s->add_option("--dim", simgen.spec.dim)->required();
  s->add_option("--per-class", simgen.spec.samples_per_class)->required();
  s->add_option("--anchors", simgen.spec.anchors_per_class, "anchors per class")->capture_default_str();
  s->add_option("--heldout-per-class", simgen.spec.heldout_per_class)->capture_default_str();
  s->add_option("--separation", simgen.spec.class_separation)->capture_default_str();
  s->add_option("--intra-std", simgen.spec.intra_std)->capture_default_str();
  s->add_option("--anchor-shift", simgen.spec.anchor_shift)->capture_default_str();
  s->add_option("--seed", simgen.spec.seed)->capture_default_str();
  s->add_option("--out", simgen.out, "output directory")->required();

  InjectArgs inject;
  auto* n = app.add_subcommand("inject", "corrupt ground-truth labels");
  n->add_option("--truth", inject.truth)->required();
  n->add_option("--classes", inject.classes);
  n->add_option("--kind", inject.kind, "uniform | asymmetric | pmd | hybrid")->required();
  n->add_option("--rate", inject.rate)->capture_default_str();
  n->add_option("--second-kind", inject.second_kind)->capture_default_str();
  n->add_option("--second-rate", inject.second_rate)->capture_default_str();
  n->add_option("--mapping", inject.mapping, "asymmetric targets, e.g. 1,2,0")->delimiter(',');
  n->add_option("--k", inject.k)->capture_default_str();
  n->add_option("--tau-max", inject.tau_max)->capture_default_str();
  n->add_option("--seed", inject.seed)->capture_default_str();
  n->add_option("--posteriors", inject.posteriors, "CNF1 posteriors (pmd, hybrid)");
  n->add_option("--out", inject.out)->required();

  TrainArgs train;
  std::optional<std::size_t> epochs;
  std::optional<double> lr;
  bool fine_tune = false;
  auto* t = app.add_subcommand("train", "train the softmax head");
  t->add_option("--embeddings", train.embeddings)->required();
  t->add_option("--labels", train.labels)->required();
  t->add_option("--classes", train.classes)->required();
  t->add_option("--epochs", epochs, "default 200, or 50 with --fine-tune");
  t->add_option("--batch-size", train.cfg.batch_size)->capture_default_str();
  t->add_option("--lr", lr, "default 0.1, or 0.001 with --fine-tune");
  t->add_option("--l2", train.cfg.l2_weight)->capture_default_str();
  t->add_option("--seed", train.cfg.seed)->capture_default_str();
  t->add_option("--warm-start", train.warm_start, "LH01 head to start from");
  t->add_flag("--fine-tune", fine_tune, "fine-tuning schedule; needs --warm-start");
  t->add_option("--out", train.out)->required();

  RelabelArgs rel;
  auto* r = app.add_subcommand("relabel", "refine labels");
  add_scoring_inputs(r, rel.in);
  r->add_option("--alpha", rel.cfg.alpha)->capture_default_str();
  r->add_option("--theta", rel.cfg.theta)->capture_default_str();
  r->add_option("--out-labels", rel.out_labels)->required();
  r->add_option("--out-report", rel.out_report, "aggregate JSON report");
  r->add_option("--out-samples", rel.out_samples, "per-sample CSV");

  SweepArgs sw;
  auto* w = app.add_subcommand("sweep", "alpha x theta ablation grid");
  add_scoring_inputs(w, sw.in);
  w->add_option("--alpha-grid", sw.alphas)->delimiter(',')->capture_default_str();
  w->add_option("--theta-grid", sw.thetas)->delimiter(',')->capture_default_str();
  w->add_option("--out", sw.out, "CSV, one row per cell")->required();
  w->add_option("--out-json", sw.out_json);

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "label quality and downstream accuracy");
  e->add_option("--refined", ev.refined)->required();
  e->add_option("--noisy", ev.noisy)->required();
  e->add_option("--truth", ev.truth)->required();
  e->add_option("--classes", ev.classes)->required();
  e->add_option("--out", ev.out)->required();
  e->add_option("--format", ev.format, "json | csv")->capture_default_str();
  e->add_option("--train-embeddings", ev.train_embeddings);
  e->add_option("--heldout-embeddings", ev.heldout_embeddings);
  e->add_option("--heldout-truth", ev.heldout_truth);
  e->add_option("--warm-start", ev.warm_start);
  e->add_option("--seed", ev.seed)->capture_default_str();

  PipelineArgs pl;
  auto* p = app.add_subcommand("pipeline", "run a named benchmark end to end");
  p->add_option("--preset", pl.preset, "standard | domain-gap")->capture_default_str();
  p->add_option("--seed", pl.seed)->capture_default_str();
  p->add_option("--threads", pl.threads)->capture_default_str();
  p->add_option("--out", pl.out, "output directory (default: JSON to stdout)");

  try {
    auto merged = merge_config(app, std::move(args));
    std::reverse(merged.begin(), merged.end());  // CLI11 consumes from the back
    app.parse(merged);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& ex) {
    err << "usage error: " << ex.what() << "\n\n" << app.help();
    return kExitUsage;
  } catch (const Error& ex) {
    err << "usage error: " << ex.what() << "\n";
    return kExitUsage;
  }

  try {
    if (*s) return run_simgen(simgen, out);
    if (*n) return run_inject(inject, out);
    if (*t) {
      if (fine_tune) {
        const auto ft = TrainConfig::fine_tuning(train.cfg.seed);
        train.cfg.epochs = ft.epochs;
        train.cfg.learning_rate = ft.learning_rate;
        train.cfg.fine_tune = true;
      }
      if (epochs) train.cfg.epochs = *epochs;
      if (lr) train.cfg.learning_rate = *lr;
      return run_train(train, out);
    }
    if (*r) return run_relabel(rel, out);
    if (*w) return run_sweep(sw, out);
    if (*e) return run_eval(ev, out);
    if (*p) return run_pipeline_command(pl, out);
  } catch (const Error& ex) {
    err << "error[" << to_string(ex.code()) << "]: " << ex.what() << "\n";
    return kExitRuntime;
  } catch (const std::filesystem::filesystem_error& ex) {
    err << "error[io]: " << ex.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace protorefine::cli
