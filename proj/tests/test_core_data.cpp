#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <random>

#include "protorefine/io.hpp"
#include "protorefine/types.hpp"
#include "test_util.hpp"

using namespace protorefine;
using testutil::TempDir;

namespace {

template <typename Fn>
ErrorCode error_code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected protorefine::Error";
  return ErrorCode::io;
}

std::vector<std::uint8_t> sample_emb1_bytes() {
  EmbeddingMatrix m(3, 4, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12}, {2, 5, 9});
  return encode_embeddings(m);
}

}  // namespace

TEST(Embeddings, FileSizeMatchesLayout) {
  const auto plain = encode_embeddings(EmbeddingMatrix(3, 4, std::vector<float>(12, 0.5f)));
  EXPECT_EQ(plain.size(), 60u);
  EXPECT_EQ(decode_embeddings(plain).ids()[2], 2u);

  const auto bytes = sample_emb1_bytes();
  EXPECT_EQ(bytes.size(), 72u);
  EXPECT_EQ(std::memcmp(bytes.data(), "EMB1", 4), 0);
  // u32 little-endian M = 3, D = 4
  EXPECT_EQ(bytes[4], 3);
  EXPECT_EQ(bytes[5], 0);
  EXPECT_EQ(bytes[8], 4);
  // first value 1.0f = 0x3F800000
  EXPECT_EQ(bytes[12], 0x00);
  EXPECT_EQ(bytes[15], 0x3F);
  // ids trail the payload
  EXPECT_EQ(bytes[60], 2);
  EXPECT_EQ(bytes[68], 9);
}

TEST(Embeddings, RandomRoundTripsAreBitExact) {
  std::mt19937_64 rng(11);
  TempDir dir;
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t m = 1 + rng() % 30;
    const std::size_t d = 1 + rng() % 17;
    auto values = testutil::random_embeddings(rng, m, d, 1e3);
    std::vector<SampleId> ids;
    SampleId next = static_cast<SampleId>(rng() % 5);
    for (std::size_t i = 0; i < m; ++i) {
      ids.push_back(next);
      next += 1 + static_cast<SampleId>(rng() % 7);
    }
    EmbeddingMatrix original(m, d, {values.values().begin(), values.values().end()}, ids);
    const auto path = dir / ("m" + std::to_string(trial) + ".emb");
    write_embeddings(original, path);
    const auto loaded = read_embeddings(path);
    EXPECT_EQ(loaded, original);
    EXPECT_EQ(encode_embeddings(loaded), detail::read_file(path));
  }
}

TEST(Embeddings, RejectsBadMagic) {
  auto bytes = sample_emb1_bytes();
  std::memcpy(bytes.data(), "XXXX", 4);
  EXPECT_EQ(error_code_of([&] { decode_embeddings(bytes); }), ErrorCode::bad_magic);
  try {
    decode_embeddings(bytes);
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("bad magic"), std::string::npos);
  }
  // a CNF1 file is not an embedding file
  std::memcpy(bytes.data(), "CNF1", 4);
  EXPECT_EQ(error_code_of([&] { decode_embeddings(bytes); }), ErrorCode::bad_magic);
}

TEST(Embeddings, RejectsTruncatedAndTrailingPayloads) {
  auto bytes = sample_emb1_bytes();
  auto short_header = std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + 7);
  EXPECT_EQ(error_code_of([&] { decode_embeddings(short_header); }), ErrorCode::truncated);
  auto short_payload = std::vector<std::uint8_t>(bytes.begin(), bytes.end() - 1);
  EXPECT_EQ(error_code_of([&] { decode_embeddings(short_payload); }), ErrorCode::truncated);
  bytes.push_back(0);
  EXPECT_EQ(error_code_of([&] { decode_embeddings(bytes); }), ErrorCode::trailing_data);
}

TEST(Embeddings, RejectsDimensionOverflow) {
  std::vector<std::uint8_t> bytes{'E', 'M', 'B', '1'};
  detail::put_u32(bytes, 0xFFFFFFFFu);
  detail::put_u32(bytes, 0xFFFFFFFFu);
  EXPECT_EQ(error_code_of([&] { decode_embeddings(bytes); }), ErrorCode::dimension_overflow);
}

TEST(Embeddings, RejectsNonFiniteEntries) {
  auto bytes = sample_emb1_bytes();
  const auto nan = std::bit_cast<std::uint32_t>(std::numeric_limits<float>::quiet_NaN());
  for (int k = 0; k < 4; ++k) bytes[20 + k] = static_cast<std::uint8_t>(nan >> (8 * k));
  EXPECT_EQ(error_code_of([&] { decode_embeddings(bytes); }), ErrorCode::non_finite);

  EXPECT_EQ(error_code_of([] {
              EmbeddingMatrix(1, 2, {1.0f, std::numeric_limits<float>::infinity()});
            }),
            ErrorCode::non_finite);
}

TEST(Embeddings, RejectsEmptyShapesAndBadIds) {
  std::vector<std::uint8_t> bytes{'E', 'M', 'B', '1'};
  detail::put_u32(bytes, 0);
  detail::put_u32(bytes, 4);
  EXPECT_EQ(error_code_of([&] { decode_embeddings(bytes); }), ErrorCode::empty);
  EXPECT_EQ(error_code_of([] { EmbeddingMatrix(2, 1, {1, 2}, {3, 3}); }), ErrorCode::duplicate_id);
  EXPECT_EQ(error_code_of([] { EmbeddingMatrix(2, 1, {1, 2}, {3, 1}); }), ErrorCode::unsorted_ids);
}

TEST(Confidences, FileRoundTripIsByteExact) {
  TempDir dir;
  ConfidenceMatrix m(2, 3, {0.1, 0.2, 0.7, 1.0 / 3, 1.0 / 3, 1.0 / 3});
  write_confidences(m, dir / "a.cnf");
  const auto loaded = read_confidences(dir / "a.cnf");
  EXPECT_EQ(loaded.rows(), 2u);
  EXPECT_EQ(loaded.classes(), 3u);
  EXPECT_FLOAT_EQ(static_cast<float>(loaded.row(0)[2]), 0.7f);
  write_confidences(loaded, dir / "b.cnf");
  EXPECT_EQ(detail::read_file(dir / "a.cnf"), detail::read_file(dir / "b.cnf"));
  EXPECT_EQ(detail::read_file(dir / "a.cnf").size(), 12u + 4 * 6);
}

TEST(Confidences, RejectsRowsThatAreNotStochastic) {
  EXPECT_EQ(error_code_of([] { ConfidenceMatrix(1, 2, {0.5, 0.6}); }), ErrorCode::not_stochastic);
  EXPECT_EQ(error_code_of([] { ConfidenceMatrix(1, 2, {-0.1, 1.1}); }), ErrorCode::not_stochastic);
  auto bytes = encode_confidences(ConfidenceMatrix(1, 2, {0.5, 0.5}));
  std::memcpy(bytes.data(), "EMB1", 4);
  EXPECT_EQ(error_code_of([&] { decode_confidences(bytes); }), ErrorCode::bad_magic);
}

TEST(Labels, ParsesDirectCsv) {
  const auto labels = parse_labels("id,label\n0,2\n1,0", 3, LabelKind::noisy);
  ASSERT_EQ(labels.size(), 2u);
  EXPECT_EQ(labels[0], 2);
  EXPECT_EQ(labels[1], 0);
  EXPECT_EQ(labels.num_classes(), 3);
}

TEST(Labels, RejectsInvalidContent) {
  EXPECT_EQ(error_code_of([] { parse_labels("id,label\n0,5\n", 3, LabelKind::noisy); }),
            ErrorCode::label_out_of_range);
  EXPECT_EQ(error_code_of([] { parse_labels("id,label\n0,1\n0,2\n", 3, LabelKind::noisy); }),
            ErrorCode::duplicate_id);
  EXPECT_EQ(error_code_of([] { parse_labels("", 3, LabelKind::noisy); }), ErrorCode::empty);
  EXPECT_EQ(error_code_of([] { parse_labels("id,label\n", 3, LabelKind::noisy); }), ErrorCode::empty);
  EXPECT_EQ(error_code_of([] { parse_labels("idx,lbl\n0,1\n", 3, LabelKind::noisy); }),
            ErrorCode::parse);
  EXPECT_EQ(error_code_of([] { parse_labels("id,label\n0,x\n", 3, LabelKind::noisy); }),
            ErrorCode::parse);
  EXPECT_EQ(error_code_of([] { parse_labels("id,label\n0,-1\n", 3, LabelKind::noisy); }),
            ErrorCode::label_out_of_range);
}

TEST(Labels, RandomRoundTrip) {
  std::mt19937_64 rng(3);
  TempDir dir;
  LabelSet original(testutil::random_labels(rng, 1000, 7), 7, LabelKind::truth);
  write_labels(original, dir / "l.csv");
  const auto loaded = read_labels(dir / "l.csv", 7, LabelKind::truth);
  EXPECT_EQ(loaded, original);
  write_labels(loaded, dir / "m.csv");
  EXPECT_EQ(detail::read_file(dir / "l.csv"), detail::read_file(dir / "m.csv"));
}

TEST(Dataset, BindChecksCardinalityAndIds) {
  std::mt19937_64 rng(5);
  auto emb = testutil::random_embeddings(rng, 100, 3);
  const auto ds = bind_dataset(emb, LabelSet(testutil::random_labels(rng, 100, 4), 4, LabelKind::noisy));
  EXPECT_EQ(ds.size(), 100u);

  EXPECT_EQ(error_code_of([&] {
              bind_dataset(emb, LabelSet(testutil::random_labels(rng, 99, 4), 4, LabelKind::noisy));
            }),
            ErrorCode::cardinality_mismatch);

  std::vector<SampleId> shifted = sequential_ids(100);
  shifted[50] = 1000;
  EXPECT_EQ(error_code_of([&] {
              bind_dataset(emb, LabelSet(testutil::random_labels(rng, 100, 4), 4,
                                         LabelKind::noisy, shifted));
            }),
            ErrorCode::id_mismatch);
}

TEST(Dataset, EmptyLabelFileIsRejected) {
  TempDir dir;
  detail::write_text(dir / "empty.csv", "id,label\n");
  try {
    read_labels(dir / "empty.csv", 3);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::empty);
    EXPECT_NE(std::string(e.what()).find("M >= 1 violated"), std::string::npos);
  }
}

TEST(Anchors, RoundTripWithSidecar) {
  std::mt19937_64 rng(9);
  TempDir dir;
  const auto anchors = testutil::random_anchors(rng, 4, 6, 5);
  write_anchors(anchors, dir / "a.emb", dir / "a.csv");
  const auto loaded = read_anchors(dir / "a.emb", dir / "a.csv", 4);
  EXPECT_EQ(loaded.embeddings(), anchors.embeddings());
  EXPECT_TRUE(std::equal(loaded.classes().begin(), loaded.classes().end(),
                         anchors.classes().begin()));
}

TEST(Anchors, EveryClassNeedsAnAnchor) {
  EmbeddingMatrix emb(2, 2, {1, 0, 0, 1});
  EXPECT_EQ(error_code_of([&] { AnchorSet(emb, {0, 0}, 2); }), ErrorCode::empty);
  EXPECT_EQ(error_code_of([&] { AnchorSet(emb, {0, 2}, 2); }), ErrorCode::label_out_of_range);
  EXPECT_EQ(error_code_of([&] { AnchorSet(emb, {0}, 2); }), ErrorCode::cardinality_mismatch);
}
