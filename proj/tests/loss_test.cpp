#include "avs/loss.hpp"

#include "avs/common.hpp"
#include "avs/data.hpp"
#include "avs/random.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

using namespace avs;

namespace {

std::size_t scan_oracle(std::size_t s, const std::vector<double>& row, const std::vector<bool>& mask) {
  double best = -std::numeric_limits<double>::infinity();
  std::size_t arg = row.size();
  for (std::size_t j = 0; j < row.size(); ++j) {
    if (j == s || mask[j]) continue;
    if (row[j] > best) {
      best = row[j];
      arg = j;
    }
  }
  return arg;
}

std::size_t hardest(std::size_t s, std::vector<double> row, std::vector<int> mask_int) {
  std::unique_ptr<bool[]> mask(new bool[mask_int.size()]);
  for (std::size_t i = 0; i < mask_int.size(); ++i) mask[i] = mask_int[i] != 0;
  return hardest_negative<double>(s, row, std::span<const bool>(mask.get(), mask_int.size()));
}

BatchData<double> first_batch(const test::SmallWorld& w, std::size_t b, std::size_t offset = 0) {
  Batch batch;
  for (std::size_t i = 0; i < b; ++i) batch.items.push_back(offset + i);
  return resolve_batch<double>(batch, w.fixture.captions, w.fixture.features);
}

MultiSpaceModel<double> model3(const test::SmallWorld& w, std::uint64_t seed,
                               FusionMode fusion = FusionMode::kSea) {
  Rng rng(seed);
  return MultiSpaceModel<float>::create(
             test::small_config({EncoderKind::kBow, EncoderKind::kW2v, EncoderKind::kGru}, fusion),
             w.resources, rng)
      .cast<double>();
}

}  // namespace

TEST(HardestNegative, Examples) {
  EXPECT_EQ(hardest(0, {0.9, 0.5, 0.7}, {1, 0, 0}), 2u);
  EXPECT_EQ(hardest(0, {0.1, 0.1, 0.1}, {1, 0, 0}), 1u);
  // The sentence's own column is never a negative, even unmasked.
  EXPECT_EQ(hardest(1, {0.2, 0.95, 0.3}, {0, 0, 0}), 2u);
  // Masked columns sharing the positive video are skipped.
  EXPECT_EQ(hardest(0, {0.5, 0.9, 0.1}, {1, 1, 0}), 2u);
}

TEST(HardestNegative, MatchesScanOracle) {
  Rng rng(64);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> row(64);
    std::vector<int> mask(64, 0);
    std::vector<bool> bmask(64, false);
    const std::size_t s = rng.index(64);
    for (std::size_t j = 0; j < 64; ++j) {
      // Coarse values so ties happen.
      row[j] = std::round(rng.uniform(-1, 1) * 20) / 20;
      if (rng.unit() < 0.1) {
        mask[j] = 1;
        bmask[j] = true;
      }
    }
    EXPECT_EQ(hardest(s, row, mask), scan_oracle(s, row, bmask));
  }
}

TEST(HardestNegative, AllMaskedIsAnError) {
  EXPECT_THROW(hardest(0, {0.5, 0.4}, {1, 1}), DataError);
  EXPECT_THROW(hardest(0, {0.5}, {0}), DataError);
  EXPECT_THROW(hardest(0, {0.5, 0.4}, {0}), DataError);
}

TEST(Itrl, Examples) {
  EXPECT_DOUBLE_EQ(itrl(0.9, 0.7, 0.2), 0.0);
  EXPECT_NEAR(itrl(0.5, 0.7, 0.2), 0.4, 1e-15);
  EXPECT_NEAR(itrl(-1.0, 1.0, 0.2), 2.2, 1e-15);
  EXPECT_DOUBLE_EQ(itrl(1.0, -1.0, 0.2), 0.0);
}

TEST(CombinedLoss, SingleSpaceEqualsSingleLoss) {
  auto w = test::small_world();
  for (auto kind : {EncoderKind::kBow, EncoderKind::kW2v, EncoderKind::kGru}) {
    Rng rng(2);
    const auto m = MultiSpaceModel<float>::create(test::small_config({kind}, FusionMode::kSea), w.resources, rng)
                       .cast<double>();
    const auto batch = first_batch(w, 6);
    const auto a = combined_loss(batch, m, 0.2);
    const auto b = single_loss(batch, m, 0.2);
    EXPECT_EQ(a.value, b.value);
    EXPECT_EQ(a.report.hard_negatives, b.report.hard_negatives);
  }
}

TEST(CombinedLoss, IdenticalSpacesScaleByK) {
  auto w = test::small_world();
  auto m = model3(w, 5);
  // Three w2v spaces with equal parameters.
  m.config.encoders = {EncoderKind::kW2v, EncoderKind::kW2v, EncoderKind::kW2v};
  m.params.recurrent.assign(3, {});
  m.params.spaces.resize(1);
  m.params.spaces[0].inputs = {0};
  Rng rng(1);
  const Matrix<double> tw = Matrix<double>::NullaryExpr(8, 8, [&] { return rng.uniform(-0.5, 0.5); });
  m.params.spaces[0].text.weight = tw;
  m.params.spaces.push_back(m.params.spaces[0]);
  m.params.spaces.push_back(m.params.spaces[0]);
  m.params.spaces[1].inputs = {1};
  m.params.spaces[2].inputs = {2};

  Rng r1(5);
  auto single = MultiSpaceModel<float>::create(test::small_config({EncoderKind::kW2v}, FusionMode::kSea),
                                               w.resources, r1)
                    .cast<double>();
  single.params.spaces[0] = m.params.spaces[0];
  const auto batch = first_batch(w, 8);
  const auto k3 = combined_loss(batch, m, 0.2);
  const auto k1 = combined_loss(batch, single, 0.2);
  EXPECT_GT(k1.value, 0.0);
  EXPECT_NEAR(k3.value, 3 * k1.value, 1e-12);
}

TEST(CombinedLoss, MatchesNestedLoopOracle) {
  auto w = test::small_world();
  for (std::uint64_t seed : {1u, 2u, 3u, 4u}) {
    const auto m = model3(w, seed);
    const auto batch = first_batch(w, 4, seed);
    const double alpha = 0.2;
    double total = 0, single_total = 0;
    for (std::size_t s = 0; s < 4; ++s) {
      double sims[3][4];
      for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
          sims[i][j] = cms_space(m, i, batch.sentences[s], RowVector<double>(batch.videos.row(static_cast<Eigen::Index>(j))));
        }
      }
      for (std::size_t i = 0; i < 3; ++i) {
        double worst = -2;
        for (std::size_t j = 0; j < 4; ++j) {
          if (j != s) worst = std::max(worst, sims[i][j]);
        }
        total += std::max(0.0, alpha + worst - sims[i][s]);
      }
      double worst = -2;
      for (std::size_t j = 0; j < 4; ++j) {
        if (j != s) worst = std::max(worst, (sims[0][j] + sims[1][j] + sims[2][j]) / 3);
      }
      single_total += std::max(0.0, alpha + worst - (sims[0][s] + sims[1][s] + sims[2][s]) / 3);
    }
    EXPECT_NEAR(combined_loss(batch, m, alpha).value, total / 4, 1e-12);
    EXPECT_NEAR(single_loss(batch, m, alpha).value, single_total / 4, 1e-12);
  }
}

TEST(CombinedLoss, ReportSumsPerSpaceTerms) {
  auto w = test::small_world();
  const auto m = model3(w, 8);
  const auto r = combined_loss(first_batch(w, 8), m, 0.2);
  ASSERT_EQ(r.report.per_space.size(), 3u);
  EXPECT_NEAR(r.report.per_space[0] + r.report.per_space[1] + r.report.per_space[2], r.report.combined, 1e-12);
  ASSERT_EQ(r.report.hard_negatives.size(), 8u);
  for (const auto& negs : r.report.hard_negatives) EXPECT_EQ(negs.size(), 3u);
}

TEST(Loss, SameVideoColumnsAreNotNegatives) {
  std::vector<Matrix<double>> sims(1, Matrix<double>(3, 3));
  sims[0] << 0.1, 0.9, 0.2,
             0.9, 0.1, 0.2,
             0.3, 0.3, 0.8;
  const std::vector<std::string> ids = {"v1", "v1", "v2"};
  const auto r = loss_from_similarities<double>(sims, ids, 0.2, LossMode::kCombined);
  EXPECT_EQ(r.report.hard_negatives[0][0], "v2");
  EXPECT_EQ(r.report.hard_negatives[1][0], "v2");
  EXPECT_EQ(r.report.hard_negatives[2][0], "v1");
  // (0.2+0.2-0.1) + (0.2+0.2-0.1) + max(0, 0.2+0.3-0.8)
  EXPECT_NEAR(r.value, 0.6 / 3, 1e-15);
  EXPECT_THROW(loss_from_similarities<double>(sims, std::vector<std::string>{"a", "a", "a"}, 0.2,
                                              LossMode::kCombined),
               DataError);
}

TEST(Loss, SatisfiedMarginGivesZeroLossAndGradient) {
  auto w = test::small_world();
  std::vector<Matrix<double>> sims(2, Matrix<double>::Constant(4, 4, -0.5));
  for (auto& s : sims) s.diagonal().setConstant(0.9);
  const std::vector<std::string> ids = {"a", "b", "c", "d"};
  for (auto mode : {LossMode::kCombined, LossMode::kSingle}) {
    const auto r = loss_from_similarities<double>(sims, ids, 0.2, mode);
    EXPECT_EQ(r.value, 0.0);
    for (const auto& d : r.d_sim) EXPECT_EQ(d.cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(Loss, BoundsAndZeroImpliesMargin) {
  auto w = test::small_world();
  Rng rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t b = 2 + rng.index(10);
    std::vector<Matrix<double>> sims(3, Matrix<double>(b, b));
    for (auto& s : sims) {
      for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = rng.uniform(-1, 1);
    }
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < b; ++i) ids.push_back("v" + std::to_string(i));
    const auto r = loss_from_similarities<double>(sims, ids, 0.2, LossMode::kCombined);
    for (std::size_t s = 0; s < 3; ++s) {
      EXPECT_GE(r.report.per_space[s], 0.0);
      EXPECT_LE(r.report.per_space[s], 2.2);
    }
    for (std::size_t a = 0; a < b; ++a) {
      for (std::size_t s = 0; s < 3; ++s) {
        const auto neg = static_cast<Eigen::Index>(
            std::stoul(r.report.hard_negatives[a][s].substr(1)));
        const auto ai = static_cast<Eigen::Index>(a);
        const double l = itrl(sims[s](ai, ai), sims[s](ai, neg), 0.2);
        if (l == 0.0) EXPECT_GE(sims[s](ai, ai), sims[s](ai, neg) + 0.2 - 1e-15);
      }
    }
  }
}

TEST(LossAndGradient, MatchesFiniteDifferences) {
  auto w = test::small_world();
  for (auto mode : {LossMode::kCombined, LossMode::kSingle}) {
    auto m = model3(w, 12);
    const auto batch = first_batch(w, 4, 2);
    const auto lg = loss_and_gradient(batch, m, 0.2, mode);
    ASSERT_GT(lg.loss.value, 0.0);
    ASSERT_GT(lg.loss.min_tie_gap, 1e-3);
    ASSERT_GT(lg.loss.min_hinge_gap, 1e-3);
    std::vector<double*> values, grads;
    const auto collect = [](auto& params, std::vector<double*>& out) {
      params.for_each_tensor([&](const std::string&, auto& t) {
        for (Eigen::Index i = 0; i < t.size(); i += std::max<Eigen::Index>(1, t.size() / 5)) out.push_back(t.data() + i);
      });
    };
    auto grad = lg.grad;
    collect(m.params, values);
    collect(grad, grads);
    double worst = 0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = *values[i];
      *values[i] = saved + 1e-6;
      const double up = loss_from_similarities<double>(
          similarities(forward_text(m, std::span(batch.sentences)), forward_video(m, batch.videos)),
          batch.video_ids, 0.2, mode).value;
      *values[i] = saved - 1e-6;
      const double down = loss_from_similarities<double>(
          similarities(forward_text(m, std::span(batch.sentences)), forward_video(m, batch.videos)),
          batch.video_ids, 0.2, mode).value;
      *values[i] = saved;
      const double numeric = (up - down) / 2e-6;
      worst = std::max(worst, std::abs(numeric - *grads[i]) /
                                  std::max({std::abs(numeric), std::abs(*grads[i]), 1e-6}));
    }
    EXPECT_LT(worst, 1e-4) << loss_name(mode);
  }
}

TEST(Diversity, AgreementAndDisagreement) {
  LossReport agree;
  agree.hard_negatives = {{"v1", "v1", "v1"}, {"v0", "v0", "v0"}};
  EXPECT_DOUBLE_EQ(hardneg_diversity(std::vector<LossReport>{agree}).extra_ratio, 0.0);
  LossReport disagree;
  disagree.hard_negatives = {{"v1", "v2", "v3"}, {"v0", "v2", "v3"}};
  const auto stats = hardneg_diversity(std::vector<LossReport>{disagree, disagree});
  EXPECT_DOUBLE_EQ(stats.extra_ratio, 2.0);
  EXPECT_EQ(stats.u_single, 4u);
  EXPECT_EQ(stats.u_multi, 12u);
  EXPECT_THROW(hardneg_diversity(std::vector<LossReport>{}), DataError);
}

TEST(Diversity, LineFormat) {
  std::ostringstream out;
  write_diversity_line(out, 3, {10, 13, 0.3});
  EXPECT_EQ(out.str(), "3\t10\t13\t0.300000\n");
}

TEST(Diversity, RandomSpacesDisagreeSometimes) {
  auto w = test::small_world(32, 32);
  std::vector<LossReport> log;
  Rng rng(3);
  const auto m = MultiSpaceModel<float>::create(
      test::small_config({EncoderKind::kBow, EncoderKind::kW2v, EncoderKind::kGru}, FusionMode::kSea, 32),
      w.resources, rng);
  for (const auto& b : make_batches(w.fixture.captions, 8, 1, 1)) {
    const auto data = resolve_batch<float>(b, w.fixture.captions, w.fixture.features);
    log.push_back(combined_loss(data, m, 0.2f).report);
    for (const auto& negs : log.back().hard_negatives) {
      EXPECT_GE(std::set<std::string>(negs.begin(), negs.end()).size(), 1u);
    }
  }
  EXPECT_GT(hardneg_diversity(log).extra_ratio, 0.0);
}

TEST(Names, Loss) {
  EXPECT_EQ(parse_loss("single"), LossMode::kSingle);
  EXPECT_EQ(loss_name(LossMode::kCombined), "combined");
  EXPECT_THROW(parse_loss("sum"), UsageError);
}
