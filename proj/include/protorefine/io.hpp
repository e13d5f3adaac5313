#pragma once

// File formats.
//
// EMB1 / CNF1 (binary, little-endian):
//   magic[4] | u32 M | u32 D | M*D f32 row-major | M u32 ids
// The id block is left out when the ids are exactly 0..M-1; readers accept
// both lengths.
// CNF1 reuses the layout with D holding the class count C.
//
// Labels CSV: header "id,label", one "id,label" row per sample. Anchor class
// sidecars use the same CSV layout, one row per anchor.

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "protorefine/error.hpp"
#include "protorefine/types.hpp"

namespace protorefine {

namespace detail {

// Anything beyond this many elements is rejected before allocating.
inline constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 31;

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int shift = 0; shift < 32; shift += 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

inline void put_f32(std::vector<std::uint8_t>& out, float v) {
  put_u32(out, std::bit_cast<std::uint32_t>(v));
}

inline std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline float get_f32(const std::uint8_t* p) { return std::bit_cast<float>(get_u32(p)); }

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::io, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorCode::io, "write failed: " + path.string());
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::io, "cannot open " + path.string() + " for writing");
  out << text;
  require(static_cast<bool>(out), ErrorCode::io, "write failed: " + path.string());
}

struct RawMatrix {
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<float> values;
  std::vector<SampleId> ids;
};

template <typename T>
std::vector<std::uint8_t> encode_matrix(std::string_view magic, std::size_t rows, std::size_t cols,
                                        std::span<const T> values, std::span<const SampleId> ids) {
  require(rows <= UINT32_MAX && cols <= UINT32_MAX, ErrorCode::dimension_overflow,
          "dimension overflow: shape does not fit in u32");
  bool sequential = true;
  for (std::size_t i = 0; i < ids.size(); ++i) sequential = sequential && ids[i] == i;
  std::vector<std::uint8_t> out;
  out.reserve(12 + 4 * values.size() + (sequential ? 0 : 4 * ids.size()));
  out.insert(out.end(), magic.begin(), magic.end());
  put_u32(out, static_cast<std::uint32_t>(rows));
  put_u32(out, static_cast<std::uint32_t>(cols));
  for (T v : values) put_f32(out, static_cast<float>(v));
  if (!sequential) {
    for (SampleId id : ids) put_u32(out, id);
  }
  return out;
}

inline RawMatrix decode_matrix(std::string_view magic, const std::vector<std::uint8_t>& bytes) {
  require(bytes.size() >= 12, ErrorCode::truncated, "truncated payload: header incomplete");
  require(std::memcmp(bytes.data(), magic.data(), 4) == 0, ErrorCode::bad_magic,
          "bad magic: expected " + std::string(magic));
  RawMatrix m;
  m.rows = get_u32(bytes.data() + 4);
  m.cols = get_u32(bytes.data() + 8);
  require(m.rows >= 1, ErrorCode::empty, "M >= 1 violated");
  require(m.cols >= 1, ErrorCode::empty, "D >= 1 violated");
  const std::uint64_t elements = std::uint64_t{m.rows} * m.cols;
  require(elements <= kMaxElements, ErrorCode::dimension_overflow,
          "dimension overflow: " + std::to_string(m.rows) + " x " + std::to_string(m.cols));
  const std::uint64_t bare = 12 + 4 * elements;
  const std::uint64_t with_ids = bare + 4 * std::uint64_t{m.rows};
  const bool has_ids = bytes.size() != bare;
  const std::uint64_t expected = has_ids ? with_ids : bare;
  require(bytes.size() >= expected, ErrorCode::truncated,
          "truncated payload: expected " + std::to_string(expected) + " bytes, got " +
              std::to_string(bytes.size()));
  require(bytes.size() == expected, ErrorCode::trailing_data,
          "trailing data after payload: expected " + std::to_string(expected) + " bytes");
  m.values.resize(elements);
  const std::uint8_t* p = bytes.data() + 12;
  for (std::uint64_t i = 0; i < elements; ++i, p += 4) {
    m.values[i] = get_f32(p);
    require(std::isfinite(m.values[i]), ErrorCode::non_finite,
            "non-finite entry at element " + std::to_string(i));
  }
  m.ids.resize(m.rows);
  for (std::uint32_t i = 0; i < m.rows; ++i) {
    m.ids[i] = has_ids ? get_u32(p + 4 * std::size_t{i}) : i;
  }
  return m;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  return s;
}

template <typename T>
T parse_integer(std::string_view text, const std::string& where) {
  text = trim(text);
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  require(ec == std::errc() && ptr == text.data() + text.size() && !text.empty(), ErrorCode::parse,
          where + ": expected an integer, got '" + std::string(text) + "'");
  return value;
}

struct IdLabelRows {
  std::vector<SampleId> ids;
  std::vector<ClassIndex> labels;
};

inline IdLabelRows parse_id_label_csv(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::empty,
          source + ": M >= 1 violated (empty file)");
  require(trim(line) == "id,label", ErrorCode::parse, source + ": header must be 'id,label'");
  IdLabelRows rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view view = trim(line);
    if (view.empty()) continue;
    const auto comma = view.find(',');
    const std::string where = source + ":" + std::to_string(line_no);
    require(comma != std::string_view::npos, ErrorCode::parse, where + ": expected 'id,label'");
    rows.ids.push_back(parse_integer<SampleId>(view.substr(0, comma), where));
    rows.labels.push_back(parse_integer<ClassIndex>(view.substr(comma + 1), where));
  }
  require(!rows.ids.empty(), ErrorCode::empty, source + ": M >= 1 violated");
  return rows;
}

inline std::string format_id_label_csv(std::span<const SampleId> ids,
                                       std::span<const ClassIndex> labels) {
  std::string out = "id,label\n";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out += std::to_string(ids[i]);
    out += ',';
    out += std::to_string(labels[i]);
    out += '\n';
  }
  return out;
}

}  // namespace detail

inline constexpr std::string_view kEmbeddingMagic = "EMB1";
inline constexpr std::string_view kConfidenceMagic = "CNF1";

inline std::vector<std::uint8_t> encode_embeddings(const EmbeddingMatrix& m) {
  return detail::encode_matrix<float>(kEmbeddingMagic, m.count(), m.dim(), m.values(), m.ids());
}

inline EmbeddingMatrix decode_embeddings(const std::vector<std::uint8_t>& bytes) {
  auto raw = detail::decode_matrix(kEmbeddingMagic, bytes);
  return EmbeddingMatrix(raw.rows, raw.cols, std::move(raw.values), std::move(raw.ids));
}

inline void write_embeddings(const EmbeddingMatrix& m, const std::filesystem::path& path) {
  detail::write_file(path, encode_embeddings(m));
}

inline EmbeddingMatrix read_embeddings(const std::filesystem::path& path) {
  return decode_embeddings(detail::read_file(path));
}

/// Confidences are stored as f32; writing rounds each entry to the nearest
/// float, so a matrix read from disk re-encodes to identical bytes.
inline std::vector<std::uint8_t> encode_confidences(const ConfidenceMatrix& m) {
  return detail::encode_matrix<double>(kConfidenceMagic, m.rows(), m.classes(), m.values(), m.ids());
}

inline ConfidenceMatrix decode_confidences(const std::vector<std::uint8_t>& bytes) {
  auto raw = detail::decode_matrix(kConfidenceMagic, bytes);
  std::vector<double> values(raw.values.begin(), raw.values.end());
  return ConfidenceMatrix(raw.rows, raw.cols, std::move(values), std::move(raw.ids));
}

inline void write_confidences(const ConfidenceMatrix& m, const std::filesystem::path& path) {
  detail::write_file(path, encode_confidences(m));
}

inline ConfidenceMatrix read_confidences(const std::filesystem::path& path) {
  return decode_confidences(detail::read_file(path));
}

inline std::string format_labels(const LabelSet& labels) {
  return detail::format_id_label_csv(labels.ids(), labels.labels());
}

inline LabelSet parse_labels(const std::string& text, int num_classes, LabelKind kind,
                             const std::string& source = "labels") {
  auto rows = detail::parse_id_label_csv(text, source);
  return LabelSet(std::move(rows.labels), num_classes, kind, std::move(rows.ids));
}

inline void write_labels(const LabelSet& labels, const std::filesystem::path& path) {
  detail::write_text(path, format_labels(labels));
}

inline LabelSet read_labels(const std::filesystem::path& path, int num_classes,
                            LabelKind kind = LabelKind::noisy) {
  const auto bytes = detail::read_file(path);
  return parse_labels(std::string(bytes.begin(), bytes.end()), num_classes, kind, path.string());
}

/// Anchors live in an EMB1 file plus an "id,label" sidecar giving each row's class.
inline void write_anchors(const AnchorSet& anchors, const std::filesystem::path& embeddings_path,
                          const std::filesystem::path& classes_path) {
  write_embeddings(anchors.embeddings(), embeddings_path);
  detail::write_text(classes_path,
                     detail::format_id_label_csv(anchors.embeddings().ids(), anchors.classes()));
}

inline AnchorSet read_anchors(const std::filesystem::path& embeddings_path,
                              const std::filesystem::path& classes_path, int num_classes) {
  auto embeddings = read_embeddings(embeddings_path);
  const auto bytes = detail::read_file(classes_path);
  auto rows = detail::parse_id_label_csv(std::string(bytes.begin(), bytes.end()),
                                         classes_path.string());
  require(rows.ids.size() == embeddings.count(), ErrorCode::cardinality_mismatch,
          "cardinality mismatch: anchor sidecar rows differ from anchor count");
  const auto ids = embeddings.ids();
  require(std::equal(ids.begin(), ids.end(), rows.ids.begin()), ErrorCode::id_mismatch,
          "anchor sidecar ids disagree with anchor embedding ids");
  return AnchorSet(std::move(embeddings), std::move(rows.labels), num_classes);
}

}  // namespace protorefine
