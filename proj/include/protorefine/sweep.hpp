#pragma once

// alpha x theta grid over one scoring pass: similarities and confidences are
// computed once and re-blended per cell.

#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "protorefine/eval.hpp"
#include "protorefine/relabel.hpp"

namespace protorefine {

struct SweepCell {
  double alpha = 0.0;
  double theta = 0.0;
  std::size_t changed = 0;
  std::optional<RelabelReport> report;  ///< present when truth was supplied
};

/// Cells are ordered theta-major: all alphas for thetas[0], then thetas[1], ...
struct SweepTable {
  std::vector<double> alphas;
  std::vector<double> thetas;
  std::vector<SweepCell> cells;

  const SweepCell& at(double alpha, double theta) const {
    for (const auto& c : cells) {
      if (c.alpha == alpha && c.theta == theta) return c;
    }
    fail(ErrorCode::invalid_argument, "sweep: no such cell");
  }
};

inline SweepTable sweep(const Dataset& ds, const Prototypes& protos, const ConfidenceMatrix& conf,
                        const std::vector<double>& alphas, const std::vector<double>& thetas,
                        const LabelSet* truth = nullptr, unsigned threads = 1) {
  require(!alphas.empty() && !thetas.empty(), ErrorCode::empty, "sweep: empty grid");
  for (double a : alphas) RelabelConfig{a, 0.0}.validate();
  for (double t : thetas) RelabelConfig{0.0, t}.validate();
  require(protos.classes == ds.num_classes() && conf.classes() == static_cast<std::size_t>(ds.num_classes()),
          ErrorCode::dimension_mismatch, "sweep: class counts differ");
  require(conf.rows() == ds.size(), ErrorCode::cardinality_mismatch,
          "sweep: confidence rows differ from sample count");
  if (truth != nullptr) {
    require(truth->size() == ds.size(), ErrorCode::cardinality_mismatch,
            "sweep: truth length differs from sample count");
  }
  const auto classes = static_cast<std::size_t>(ds.num_classes());
  const auto sim = similarity_matrix(ds.embeddings, protos, threads);

  SweepTable table{alphas, thetas, {}};
  std::vector<double> blended(classes);
  for (double theta : thetas) {
    for (double alpha : alphas) {
      std::vector<ClassIndex> refined(ds.size());
      for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto conf_row = conf.row(i);
        for (std::size_t c = 0; c < classes; ++c) {
          blended[c] = alpha * sim[i * classes + c] + (1.0 - alpha) * conf_row[c];
        }
        const std::size_t best = argmax_lowest(blended);
        refined[i] = blended[best] >= theta ? static_cast<ClassIndex>(best) : ds.labels[i];
      }
      SweepCell cell{alpha, theta, 0, std::nullopt};
      for (std::size_t i = 0; i < ds.size(); ++i) cell.changed += refined[i] != ds.labels[i];
      if (truth != nullptr) {
        cell.report = label_metrics(ds.labels.relabeled(refined, LabelKind::refined), ds.labels, *truth);
      }
      table.cells.push_back(std::move(cell));
    }
  }
  return table;
}

inline SweepTable sweep(const Dataset& ds, const Prototypes& protos, const LinearHead& head,
                        const std::vector<double>& alphas, const std::vector<double>& thetas,
                        const LabelSet* truth = nullptr, unsigned threads = 1) {
  return sweep(ds, protos, confidences(head, ds.embeddings), alphas, thetas, truth, threads);
}

/// One row per (alpha, theta) cell. Truth-dependent columns are empty when no
/// truth was supplied.
inline std::string sweep_csv(const SweepTable& table) {
  std::ostringstream out;
  out << "alpha,theta,changed,corrected,corrupted,label_accuracy_before,label_accuracy_after\n";
  for (const auto& c : table.cells) {
    out << format_double(c.alpha) << ',' << format_double(c.theta) << ',' << c.changed << ',';
    if (c.report) {
      out << c.report->corrected << ',' << c.report->corrupted << ','
          << format_double(c.report->label_accuracy_before) << ','
          << format_double(c.report->label_accuracy_after);
    } else {
      out << ",,,";
    }
    out << '\n';
  }
  return out.str();
}

inline nlohmann::json to_json(const SweepTable& table) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : table.cells) {
    nlohmann::json j{{"alpha", c.alpha}, {"theta", c.theta}, {"changed", c.changed}};
    if (c.report) j["report"] = to_json(*c.report);
    cells.push_back(std::move(j));
  }
  return nlohmann::json{{"alphas", table.alphas}, {"thetas", table.thetas}, {"cells", cells}};
}

}  // namespace protorefine
