#pragma once

#include <cstdint>
#include <filesystem>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "protorefine/error.hpp"
#include "protorefine/io.hpp"
#include "protorefine/linear_head.hpp"
#include "protorefine/types.hpp"

namespace protorefine {

/// Label quality of a refinement against ground truth.
///
/// changed         refined != noisy
/// corrected       noisy wrong, refined == truth
/// corrupted       noisy == truth, refined wrong
/// wrong_to_wrong  noisy wrong, refined a different wrong class
/// unchanged_wrong noisy wrong and left as is
///
/// changed = corrected + corrupted + wrong_to_wrong. The confusion matrix is
/// indexed [truth][refined].
struct RelabelReport {
  int num_classes = 0;
  std::size_t total = 0;
  std::size_t changed = 0;
  std::size_t corrected = 0;
  std::size_t corrupted = 0;
  std::size_t wrong_to_wrong = 0;
  std::size_t unchanged_wrong = 0;
  double label_accuracy_before = 0.0;
  double label_accuracy_after = 0.0;
  std::vector<std::size_t> confusion;

  std::size_t confusion_at(ClassIndex truth, ClassIndex refined) const {
    return confusion[static_cast<std::size_t>(truth) * static_cast<std::size_t>(num_classes) +
                     static_cast<std::size_t>(refined)];
  }

  friend bool operator==(const RelabelReport&, const RelabelReport&) = default;
};

inline RelabelReport label_metrics(const LabelSet& refined, const LabelSet& noisy,
                                   const LabelSet& truth) {
  require(refined.size() == noisy.size() && noisy.size() == truth.size(),
          ErrorCode::cardinality_mismatch, "metrics: label sets differ in length");
  require(refined.num_classes() == truth.num_classes() && noisy.num_classes() == truth.num_classes(),
          ErrorCode::dimension_mismatch, "metrics: label sets differ in class count");
  RelabelReport r;
  r.num_classes = truth.num_classes();
  r.total = truth.size();
  r.confusion.assign(static_cast<std::size_t>(r.num_classes) * static_cast<std::size_t>(r.num_classes), 0);
  std::size_t correct_before = 0;
  std::size_t correct_after = 0;
  for (std::size_t i = 0; i < r.total; ++i) {
    const ClassIndex t = truth[i];
    const ClassIndex n = noisy[i];
    const ClassIndex f = refined[i];
    correct_before += n == t;
    correct_after += f == t;
    ++r.confusion[static_cast<std::size_t>(t) * static_cast<std::size_t>(r.num_classes) +
                  static_cast<std::size_t>(f)];
    if (f == n) {
      r.unchanged_wrong += n != t;
      continue;
    }
    ++r.changed;
    if (n == t) {
      ++r.corrupted;
    } else if (f == t) {
      ++r.corrected;
    } else {
      ++r.wrong_to_wrong;
    }
  }
  const auto m = static_cast<double>(r.total);
  r.label_accuracy_before = static_cast<double>(correct_before) / m;
  r.label_accuracy_after = static_cast<double>(correct_after) / m;
  return r;
}

/// Trains a head on `train` (whose labels are the candidate labels) and
/// returns its top-1 accuracy on `heldout`. With a warm start the head is
/// fine-tuned from it, otherwise trained from zero.
inline double downstream_eval(const Dataset& train, const Dataset& heldout, const TrainConfig& cfg,
                              const LinearHead* warm_start = nullptr) {
  require(train.dim() == heldout.dim(), ErrorCode::dimension_mismatch,
          "downstream: train and heldout dims differ");
  require(train.num_classes() == heldout.num_classes(), ErrorCode::dimension_mismatch,
          "downstream: train and heldout class counts differ");
  const auto head = train_head(train, cfg, warm_start);
  return top1_accuracy(head, heldout);
}

inline nlohmann::json to_json(const RelabelReport& r) {
  return nlohmann::json{
      {"num_classes", r.num_classes},
      {"total", r.total},
      {"changed", r.changed},
      {"corrected", r.corrected},
      {"corrupted", r.corrupted},
      {"wrong_to_wrong", r.wrong_to_wrong},
      {"unchanged_wrong", r.unchanged_wrong},
      {"label_accuracy_before", r.label_accuracy_before},
      {"label_accuracy_after", r.label_accuracy_after},
      {"confusion", r.confusion},
  };
}

inline RelabelReport report_from_json(const nlohmann::json& j) {
  try {
    RelabelReport r;
    r.num_classes = j.at("num_classes").get<int>();
    r.total = j.at("total").get<std::size_t>();
    r.changed = j.at("changed").get<std::size_t>();
    r.corrected = j.at("corrected").get<std::size_t>();
    r.corrupted = j.at("corrupted").get<std::size_t>();
    r.wrong_to_wrong = j.at("wrong_to_wrong").get<std::size_t>();
    r.unchanged_wrong = j.at("unchanged_wrong").get<std::size_t>();
    r.label_accuracy_before = j.at("label_accuracy_before").get<double>();
    r.label_accuracy_after = j.at("label_accuracy_after").get<double>();
    r.confusion = j.at("confusion").get<std::vector<std::size_t>>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::parse, std::string("report: ") + e.what());
  }
}

enum class ReportFormat { json, csv };

inline ReportFormat parse_report_format(std::string_view text) {
  if (text == "json") return ReportFormat::json;
  if (text == "csv") return ReportFormat::csv;
  fail(ErrorCode::invalid_argument, "unknown report format '" + std::string(text) + "'");
}

inline std::string format_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

/// Scalar fields as a two-line CSV (header + values); the confusion matrix is
/// only in the JSON form.
inline std::string report_csv(const RelabelReport& r) {
  std::ostringstream out;
  out << "num_classes,total,changed,corrected,corrupted,wrong_to_wrong,unchanged_wrong,"
         "label_accuracy_before,label_accuracy_after\n";
  out << r.num_classes << ',' << r.total << ',' << r.changed << ',' << r.corrected << ','
      << r.corrupted << ',' << r.wrong_to_wrong << ',' << r.unchanged_wrong << ','
      << format_double(r.label_accuracy_before) << ',' << format_double(r.label_accuracy_after)
      << '\n';
  return out.str();
}

inline void emit_report(const RelabelReport& r, const std::filesystem::path& path,
                        ReportFormat format) {
  if (format == ReportFormat::json) {
    detail::write_text(path, to_json(r).dump(2) + "\n");
  } else {
    detail::write_text(path, report_csv(r));
  }
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  try {
    return nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::parse, path.string() + ": " + e.what());
  }
}

}  // namespace protorefine
