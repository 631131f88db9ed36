#include "avs/cli.hpp"

#include "avs/metrics.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace avs;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result avs_run(std::vector<std::string> args) {
  args.insert(args.begin(), "avs");
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           (std::string("avs_cli_") + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string at(const std::string& name) const { return (dir_ / name).string(); }

  // Fixture, vocabularies and a trained BoW+w2v model under dir_.
  void prepare(std::size_t pairs, std::size_t video_dim, std::size_t word_dim,
               const std::vector<std::string>& train_flags) {
    ASSERT_EQ(avs_run({"make-fixture", "--out", at("data"), "--pairs", std::to_string(pairs), "--video-dim",
                       std::to_string(video_dim), "--w2v-dim", std::to_string(word_dim), "--bert-dim", "16"})
                  .code,
              0);
    ASSERT_EQ(avs_run({"build-vocab", "--captions", at("data/captions.tsv"), "--out", at("vocab"), "--min-count", "1"})
                  .code,
              0);
    std::vector<std::string> args = {"--encoders", "bow,w2v", "--restarts", "1", "train",
                                     "--features", at("data/features.vfea"), "--captions", at("data/captions.tsv"),
                                     "--vocab", at("vocab"), "--embeddings", at("data/embeddings.txt"),
                                     "--out", at("model")};
    args.insert(args.begin(), train_flags.begin(), train_flags.end());
    const auto r = avs_run(args);
    ASSERT_EQ(r.code, 0) << r.err;
  }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, HelpAndUsageErrors) {
  EXPECT_EQ(avs_run({"--help"}).code, 0);
  EXPECT_EQ(avs_run({}).code, 1);
  EXPECT_EQ(avs_run({"frobnicate"}).code, 1);
  EXPECT_EQ(avs_run({"rank", "--no-such-flag", "1"}).code, 1);
  EXPECT_EQ(avs_run({"--dc", "abc", "gradcheck"}).code, 1);
  EXPECT_EQ(avs_run({"--fusion", "attention", "gradcheck"}).code, 1);
  const auto missing = avs_run({"train", "--captions", at("x.tsv")});
  EXPECT_EQ(missing.code, 1);
  EXPECT_FALSE(missing.err.empty());
}

TEST_F(CliTest, DataErrorsExitTwo) {
  const auto r = avs_run({"build-vocab", "--captions", at("absent.tsv"), "--out", at("vocab")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("absent.tsv"), std::string::npos) << r.err;
  std::ofstream(at("bad.tsv")) << "only-one-field\n";
  EXPECT_EQ(avs_run({"build-vocab", "--captions", at("bad.tsv"), "--out", at("vocab")}).code, 2);
}

TEST_F(CliTest, GradcheckPassesAndFaultExitsThree) {
  const auto ok = avs_run({"gradcheck"});
  EXPECT_EQ(ok.code, 0) << ok.err;
  EXPECT_NE(ok.out.find("result=pass"), std::string::npos);
  const auto bad = avs_run({"gradcheck", "--fault-scale", "1.1"});
  EXPECT_EQ(bad.code, 3);
  EXPECT_NE(bad.out.find("result=fail"), std::string::npos);
}

TEST_F(CliTest, RankTwoVideosOneQuery) {
  prepare(2, 2, 16, {"--dc", "8", "--max-epochs", "2", "--batch-size", "2"});
  std::ofstream(at("q.txt")) << "a red dog is running\n";
  const auto r = avs_run({"rank", "--checkpoint", at("model/model.ckpt"), "--features", at("data/features.vfea"),
                          "--queries", at("q.txt"), "--out", at("run.tsv")});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream in(at("run.tsv"));
  const auto runs = read_run(in);
  ASSERT_EQ(runs.size(), 1u);
  ASSERT_EQ(runs[0].items.size(), 2u);
  EXPECT_GE(runs[0].items[0].score, runs[0].items[1].score);
  EXPECT_EQ(runs[0].query_id, "1");

  const auto top1 = avs_run({"rank", "--checkpoint", at("model/model.ckpt"), "--features", at("data/features.vfea"),
                             "--queries", at("q.txt"), "--topn", "1"});
  EXPECT_EQ(std::count(top1.out.begin(), top1.out.end(), '\n'), 1);
}

TEST_F(CliTest, EvalOfPerfectRun) {
  std::ofstream(at("run.tsv")) << "q1\t1\tv1\t0.9\nq1\t2\tv2\t0.1\nq2\t1\tv2\t0.8\nq2\t2\tv1\t0.7\n";
  std::ofstream(at("qrels.tsv")) << "q1\t1\tv1\t1\t1\nq1\t1\tv2\t0\t1\nq2\t1\tv2\t1\t1\nq2\t1\tv1\t0\t1\n";
  const auto r = avs_run({"eval", "--run", at("run.tsv"), "--qrels", at("qrels.tsv"), "--out", at("report.txt")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("R@1=100.00"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("mAP=1.0000"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("infAP=1.0000"), std::string::npos) << r.out;
  EXPECT_NE(slurp(at("report.txt")).find("query=q1 ap=1"), std::string::npos);
}

TEST_F(CliTest, TrainThenEvalMemorizes) {
  prepare(32, 64, 500, {"--batch-size", "8", "--seed", "1"});
  for (const char* f : {"config.txt", "model.ckpt", "train.log", "diversity.tsv", "batch_losses.tsv"}) {
    EXPECT_TRUE(fs::exists(dir_ / "model" / f)) << f;
  }
  const auto config = slurp(at("model/config.txt"));
  EXPECT_NE(config.find("alpha=0.2\n"), std::string::npos) << config;
  EXPECT_NE(config.find("lr0=1e-04\n"), std::string::npos) << config;
  const auto r = avs_run({"eval", "--checkpoint", at("model/model.ckpt"), "--features", at("data/features.vfea"),
                          "--captions", at("data/captions.tsv")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("R@1=100.00"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("mAP=1.0000"), std::string::npos) << r.out;
}

TEST_F(CliTest, IdenticalInvocationsAreByteIdentical) {
  const auto once = [&](const std::string& sub) {
    const fs::path root = dir_ / sub;
    fs::create_directories(root);
    const auto p = [&](const std::string& n) { return (root / n).string(); };
    EXPECT_EQ(avs_run({"--seed", "5", "make-fixture", "--out", p("data"), "--pairs", "12", "--video-dim", "16",
                       "--w2v-dim", "8", "--bert-dim", "8"})
                  .code,
              0);
    EXPECT_EQ(avs_run({"build-vocab", "--captions", p("data/captions.tsv"), "--out", p("vocab"), "--min-count", "1"})
                  .code,
              0);
    const auto t = avs_run({"--seed", "5", "--dc", "16", "--gru-hidden", "6", "--max-epochs", "4", "--restarts", "2",
                            "--batch-size", "4", "train", "--features", p("data/features.vfea"), "--captions",
                            p("data/captions.tsv"), "--vocab", p("vocab"), "--embeddings", p("data/embeddings.txt"),
                            "--out", p("model")});
    EXPECT_EQ(t.code, 0) << t.err;
    const auto r = avs_run({"rank", "--checkpoint", p("model/model.ckpt"), "--features", p("data/features.vfea"),
                            "--queries", p("data/queries.txt"), "--out", p("run.tsv")});
    EXPECT_EQ(r.code, 0) << r.err;
    return std::vector<std::string>{slurp(p("model/train.log")), slurp(p("model/batch_losses.tsv")),
                                    slurp(p("model/diversity.tsv")), slurp(p("model/model.ckpt")),
                                    slurp(p("run.tsv")), slurp(p("data/features.vfea"))};
  };
  const auto a = once("a");
  const auto b = once("b");
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_FALSE(a[i].empty()) << i;
    EXPECT_EQ(a[i], b[i]) << i;
  }
}

TEST_F(CliTest, ConfigFileIsOverriddenByFlags) {
  std::ofstream(at("cfg.txt")) << "space_dim=12\nmax_epochs=2\nrestarts=1\nbatch_size=4\n";
  ASSERT_EQ(avs_run({"make-fixture", "--out", at("data"), "--pairs", "8", "--video-dim", "8", "--w2v-dim", "8"}).code, 0);
  ASSERT_EQ(avs_run({"build-vocab", "--captions", at("data/captions.tsv"), "--out", at("vocab"), "--min-count", "1"}).code,
            0);
  const auto r = avs_run({"--config", at("cfg.txt"), "--dc", "10", "--encoders", "bow,w2v", "train", "--features",
                          at("data/features.vfea"), "--captions", at("data/captions.tsv"), "--vocab", at("vocab"),
                          "--embeddings", at("data/embeddings.txt"), "--out", at("model")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto config = slurp(at("model/config.txt"));
  EXPECT_NE(config.find("space_dim=10\n"), std::string::npos) << config;
  EXPECT_NE(config.find("max_epochs=2\n"), std::string::npos) << config;
}
