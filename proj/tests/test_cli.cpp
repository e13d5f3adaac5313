#include <gtest/gtest.h>

#include <sstream>

#include "cli.hpp"
#include "test_util.hpp"

using namespace protorefine;
using testutil::TempDir;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(std::move(args), out, err);
  return {code, out.str(), err.str()};
}

std::string p(const TempDir& dir, const std::string& name) { return (dir / name).string(); }

std::vector<std::uint8_t> bytes(const std::filesystem::path& path) { return detail::read_file(path); }

/// simgen -> inject -> train into `dir`; small enough to run in well under a second.
void prepare(const TempDir& dir) {
  ASSERT_EQ(run_cli({"simgen", "--classes", "4", "--dim", "8", "--per-class", "60", "--anchors", "10",
                     "--heldout-per-class", "20", "--seed", "3", "--out", dir.path().string()})
                .code,
            0);
  ASSERT_EQ(run_cli({"inject", "--truth", p(dir, "truth.csv"), "--classes", "4", "--kind", "pmd",
                     "--rate", "0.3", "--posteriors", p(dir, "posteriors.cnf"), "--seed", "5",
                     "--out", p(dir, "noisy.csv")})
                .code,
            0);
  ASSERT_EQ(run_cli({"train", "--embeddings", p(dir, "real.emb"), "--labels", p(dir, "noisy.csv"),
                     "--classes", "4", "--epochs", "20", "--out", p(dir, "head.lh")})
                .code,
            0);
}

std::vector<std::string> scoring_flags(const TempDir& dir) {
  return {"--embeddings", p(dir, "real.emb"),    "--labels",         p(dir, "noisy.csv"),
          "--classes",    "4",                   "--anchors",        p(dir, "anchors.emb"),
          "--anchor-classes", p(dir, "anchors.csv"), "--head",       p(dir, "head.lh")};
}

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST(Cli, SimgenWritesAllFiles) {
  TempDir dir;
  const auto r = run_cli({"simgen", "--classes", "3", "--dim", "4", "--per-class", "10",
                          "--heldout-per-class", "5", "--out", dir.path().string()});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* name : {"real.emb", "truth.csv", "anchors.emb", "anchors.csv", "posteriors.cnf",
                           "heldout.emb", "heldout_truth.csv"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / name)) << name;
  }
  EXPECT_EQ(read_embeddings(dir / "real.emb").count(), 30u);
  EXPECT_EQ(read_anchors(dir / "anchors.emb", dir / "anchors.csv", 3).count(0), 100u);
}

TEST(Cli, UsageErrorsExitWithTwo) {
  EXPECT_EQ(run_cli({"frobnicate"}).code, 2);
  EXPECT_EQ(run_cli({}).code, 2);
  const auto unknown = run_cli({"pipeline", "--no-such-flag", "1"});
  EXPECT_EQ(unknown.code, 2);
  EXPECT_FALSE(unknown.err.empty());
  EXPECT_EQ(run_cli({"simgen", "--classes", "3"}).code, 2);  // missing required flags
  EXPECT_EQ(run_cli({"--help"}).code, 0);
}

TEST(Cli, RuntimeErrorsExitWithOne) {
  TempDir dir;
  const auto r = run_cli({"eval", "--refined", p(dir, "missing.csv"), "--noisy", p(dir, "missing.csv"),
                          "--truth", p(dir, "missing.csv"), "--classes", "3", "--out", p(dir, "r.json")});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("error[io]", 0), 0u) << r.err;

  detail::write_text(dir / "bad.emb", "XXXX");
  detail::write_text(dir / "l.csv", "id,label\n0,0\n");
  const auto bad = run_cli({"train", "--embeddings", p(dir, "bad.emb"), "--labels", p(dir, "l.csv"),
                            "--classes", "2", "--out", p(dir, "h.lh")});
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.err.find("truncated"), std::string::npos) << bad.err;
}

TEST(Cli, FullChainProducesConsistentOutputs) {
  TempDir dir;
  prepare(dir);
  const auto rel = run_cli(concat({"relabel", "--truth", p(dir, "truth.csv"), "--threads", "3",
                                   "--out-labels", p(dir, "refined.csv"), "--out-report",
                                   p(dir, "relabel.json"), "--out-samples", p(dir, "samples.csv")},
                                  scoring_flags(dir)));
  ASSERT_EQ(rel.code, 0) << rel.err;
  const auto report = read_json(dir / "relabel.json");
  EXPECT_EQ(report.at("total").get<int>(), 240);
  EXPECT_EQ(report.at("alpha").get<double>(), 0.5);
  EXPECT_TRUE(report.contains("metrics"));

  const auto sw = run_cli(concat({"sweep", "--alpha-grid", "1,0.7,0.5,0.3", "--theta-grid", "0,0.6",
                                  "--truth", p(dir, "truth.csv"), "--out", p(dir, "sweep.csv"),
                                  "--out-json", p(dir, "sweep.json")},
                                 scoring_flags(dir)));
  ASSERT_EQ(sw.code, 0) << sw.err;
  EXPECT_EQ(read_json(dir / "sweep.json").at("cells").size(), 8u);
  const auto sweep_json = read_json(dir / "sweep.json");
  for (const auto& cell : sweep_json.at("cells")) {
    if (cell.at("alpha").get<double>() == 0.5 && cell.at("theta").get<double>() == 0.6) {
      EXPECT_EQ(cell.at("changed"), report.at("changed"));
    }
  }

  const auto ev = run_cli({"eval", "--refined", p(dir, "refined.csv"), "--noisy", p(dir, "noisy.csv"),
                           "--truth", p(dir, "truth.csv"), "--classes", "4", "--out", p(dir, "eval.json"),
                           "--train-embeddings", p(dir, "real.emb"), "--heldout-embeddings",
                           p(dir, "heldout.emb"), "--heldout-truth", p(dir, "heldout_truth.csv"),
                           "--warm-start", p(dir, "head.lh"), "--seed", "2"});
  ASSERT_EQ(ev.code, 0) << ev.err;
  const auto eval_json = read_json(dir / "eval.json");
  EXPECT_EQ(report_from_json(eval_json), report_from_json(report.at("metrics")));
  EXPECT_TRUE(eval_json.contains("downstream_accuracy_refined"));

  const auto csv = run_cli({"eval", "--refined", p(dir, "refined.csv"), "--noisy", p(dir, "noisy.csv"),
                            "--truth", p(dir, "truth.csv"), "--classes", "4", "--format", "csv",
                            "--out", p(dir, "eval.csv")});
  ASSERT_EQ(csv.code, 0) << csv.err;

  const auto ft = run_cli({"train", "--embeddings", p(dir, "real.emb"), "--labels", p(dir, "refined.csv"),
                           "--classes", "4", "--warm-start", p(dir, "head.lh"), "--fine-tune",
                           "--epochs", "3", "--out", p(dir, "ft.lh")});
  ASSERT_EQ(ft.code, 0) << ft.err;
  EXPECT_EQ(read_head(dir / "ft.lh").classes, 4);
}

TEST(Cli, ThetaAboveOneLeavesLabelsAlone) {
  TempDir dir;
  prepare(dir);
  const auto r = run_cli(concat({"relabel", "--theta", "1.5", "--out-labels", p(dir, "refined.csv"),
                                 "--out-report", p(dir, "r.json")},
                                scoring_flags(dir)));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_json(dir / "r.json").at("changed").get<int>(), 0);
  EXPECT_EQ(read_labels(dir / "refined.csv", 4).labels().size(), 240u);
  const auto a = bytes(dir / "refined.csv");
  const auto b = bytes(dir / "noisy.csv");
  EXPECT_EQ(a, b);
}

TEST(Cli, InjectKindsAndErrors) {
  TempDir dir;
  prepare(dir);
  EXPECT_EQ(run_cli({"inject", "--truth", p(dir, "truth.csv"), "--classes", "4", "--kind", "asymmetric",
                     "--rate", "0.4", "--mapping", "1,2,3,0", "--out", p(dir, "a.csv")})
                .code,
            0);
  EXPECT_EQ(run_cli({"inject", "--truth", p(dir, "truth.csv"), "--classes", "4", "--kind", "hybrid",
                     "--rate", "0.2", "--second-kind", "uniform", "--second-rate", "0.1", "--posteriors",
                     p(dir, "posteriors.cnf"), "--out", p(dir, "h.csv")})
                .code,
            0);
  const auto no_post = run_cli({"inject", "--truth", p(dir, "truth.csv"), "--classes", "4", "--kind",
                                "pmd", "--rate", "0.2", "--out", p(dir, "x.csv")});
  EXPECT_EQ(no_post.code, 1);
  const auto bad_kind = run_cli({"inject", "--truth", p(dir, "truth.csv"), "--classes", "4", "--kind",
                                 "gaussian", "--out", p(dir, "x.csv")});
  EXPECT_NE(bad_kind.code, 0);
}

TEST(Cli, ConfigFileSuppliesAndYieldsToFlags) {
  TempDir dir;
  detail::write_text(dir / "sim.cfg",
                     "# small benchmark\nclasses = 3\ndim = 5\nper-class = 7\nanchors = 2\n"
                     "seed = 11\nout = " + p(dir, "from_config") + "\n");
  const auto a = run_cli({"simgen", "--config", p(dir, "sim.cfg")});
  ASSERT_EQ(a.code, 0) << a.err;
  const auto emb = read_embeddings(dir / "from_config" / "real.emb");
  EXPECT_EQ(emb.count(), 21u);
  EXPECT_EQ(emb.dim(), 5u);

  const auto b = run_cli({"simgen", "--config", p(dir, "sim.cfg"), "--dim", "2", "--out", p(dir, "override")});
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(read_embeddings(dir / "override" / "real.emb").dim(), 2u);
  EXPECT_FALSE(std::filesystem::exists(dir / "from_config" / "override"));

  detail::write_text(dir / "bad.cfg", "classes = 3\ncolour = blue\n");
  const auto c = run_cli({"simgen", "--config", p(dir, "bad.cfg"), "--dim", "2", "--per-class", "3",
                          "--out", p(dir, "never")});
  EXPECT_EQ(c.code, 2);
  EXPECT_NE(c.err.find("colour"), std::string::npos) << c.err;
  EXPECT_FALSE(std::filesystem::exists(dir / "never"));
}

TEST(Cli, PipelineIsByteIdenticalAcrossRunsAndThreads) {
  TempDir dir;
  const auto a = run_cli({"pipeline", "--preset", "standard", "--seed", "7", "--out", p(dir, "a")});
  ASSERT_EQ(a.code, 0) << a.err;
  const auto b = run_cli({"pipeline", "--preset", "standard", "--seed", "7", "--threads", "4",
                          "--out", p(dir, "b")});
  ASSERT_EQ(b.code, 0) << b.err;
  for (const char* name : {"report.json", "sweep.csv", "noisy.csv", "refined.csv"}) {
    EXPECT_EQ(bytes(dir / "a" / name), bytes(dir / "b" / name)) << name;
  }
  const auto report = read_json(dir / "a" / "report.json");
  EXPECT_TRUE(report.contains("report"));
  EXPECT_EQ(run_cli({"pipeline", "--preset", "nonexistent"}).code, 1);
}
