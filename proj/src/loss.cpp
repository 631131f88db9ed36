#include "avs/loss.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <ostream>
#include <unordered_set>

namespace avs {

std::string_view loss_name(LossMode mode) {
  return mode == LossMode::kCombined ? "combined" : "single";
}

LossMode parse_loss(std::string_view name) {
  if (name == "combined") return LossMode::kCombined;
  if (name == "single") return LossMode::kSingle;
  throw UsageError("unknown loss '" + std::string(name) + "'");
}

template <typename T>
std::size_t hardest_negative(std::size_t s_index, std::span<const T> sim_row,
                             std::span<const bool> positives_mask) {
  if (sim_row.size() != positives_mask.size()) {
    throw DataError("similarity row and positive mask differ in length");
  }
  std::size_t best = sim_row.size();
  for (std::size_t j = 0; j < sim_row.size(); ++j) {
    if (j == s_index || positives_mask[j]) continue;
    if (best == sim_row.size() || sim_row[j] > sim_row[best]) best = j;
  }
  if (best == sim_row.size()) {
    throw DataError("no negative available for sentence " + std::to_string(s_index) +
                    " (every batch video is a positive)");
  }
  return best;
}

template <typename T>
T itrl(T pos_sim, T hardneg_sim, T alpha) {
  return std::max(T(0), alpha + hardneg_sim - pos_sim);
}

namespace {

template <typename T>
double runner_up_gap(std::span<const T> row, std::span<const bool> mask, std::size_t s_index,
                     std::size_t chosen) {
  double gap = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < row.size(); ++j) {
    if (j == s_index || j == chosen || mask[j]) continue;
    gap = std::min(gap, static_cast<double>(row[chosen] - row[j]));
  }
  return gap;
}

}  // namespace

template <typename T>
LossResult<T> loss_from_similarities(std::span<const Matrix<T>> per_space,
                                     std::span<const std::string> video_ids, T alpha,
                                     LossMode mode) {
  if (per_space.empty()) throw DataError("loss needs at least one similarity space");
  const std::size_t b = video_ids.size();
  if (b < 2) throw DataError("a batch needs at least two pairs");
  for (const auto& s : per_space) {
    if (static_cast<std::size_t>(s.rows()) != b || static_cast<std::size_t>(s.cols()) != b) {
      throw DataError("similarity matrix must be batch x batch");
    }
  }

  const std::size_t k = per_space.size();
  const T weight = T(1) / static_cast<T>(b);
  LossResult<T> result;
  result.min_tie_gap = std::numeric_limits<double>::infinity();
  result.min_hinge_gap = std::numeric_limits<double>::infinity();
  result.report.hard_negatives.resize(b);

  std::vector<Matrix<T>> scored;
  if (mode == LossMode::kSingle) {
    scored.push_back(combine_similarities(per_space));
  }
  const std::span<const Matrix<T>> spaces =
      mode == LossMode::kSingle ? std::span<const Matrix<T>>(scored) : per_space;

  std::vector<Matrix<T>> d_scored(spaces.size(), Matrix<T>::Zero(static_cast<Eigen::Index>(b),
                                                                 static_cast<Eigen::Index>(b)));
  std::vector<T> space_sum(spaces.size(), T(0));
  T total = 0;
  std::vector<T> row(b);
  std::unique_ptr<bool[]> mask(new bool[b]);
  for (std::size_t a = 0; a < b; ++a) {
    for (std::size_t j = 0; j < b; ++j) mask[j] = video_ids[j] == video_ids[a];
    const std::span<const bool> mask_span(mask.get(), b);

    T sentence_total = 0;
    for (std::size_t s = 0; s < spaces.size(); ++s) {
      const auto ai = static_cast<Eigen::Index>(a);
      for (std::size_t j = 0; j < b; ++j) row[j] = spaces[s](ai, static_cast<Eigen::Index>(j));
      const std::size_t neg = hardest_negative<T>(a, row, mask_span);
      const T pos_sim = row[a];
      const T neg_sim = row[neg];
      const T l = itrl(pos_sim, neg_sim, alpha);
      sentence_total += l;
      space_sum[s] += l;
      if (l > T(0)) {
        d_scored[s](ai, static_cast<Eigen::Index>(neg)) += weight;
        d_scored[s](ai, ai) -= weight;
      }
      result.report.hard_negatives[a].push_back(video_ids[neg]);
      result.min_tie_gap =
          std::min(result.min_tie_gap, runner_up_gap<T>(row, mask_span, a, neg));
      result.min_hinge_gap = std::min(
          result.min_hinge_gap, std::abs(static_cast<double>(alpha + neg_sim - pos_sim)));
    }
    total += sentence_total;
  }

  result.value = total / static_cast<T>(b);
  result.report.combined = static_cast<double>(result.value);
  for (auto v : space_sum) result.report.per_space.push_back(static_cast<double>(v / static_cast<T>(b)));
  if (mode == LossMode::kSingle) {
    result.d_sim.assign(k, d_scored[0] / static_cast<T>(k));
  } else {
    result.d_sim = std::move(d_scored);
  }
  return result;
}

namespace {

template <typename T>
LossResult<T> batch_loss(const BatchData<T>& batch, const MultiSpaceModel<T>& model, T alpha,
                         LossMode mode) {
  const auto text = forward_text(model, std::span<const Sentence>(batch.sentences));
  const auto video = forward_video(model, batch.videos);
  const auto sims = similarities(text, video);
  return loss_from_similarities<T>(sims, batch.video_ids, alpha, mode);
}

}  // namespace

template <typename T>
LossResult<T> combined_loss(const BatchData<T>& batch, const MultiSpaceModel<T>& model, T alpha) {
  return batch_loss(batch, model, alpha, LossMode::kCombined);
}

template <typename T>
LossResult<T> single_loss(const BatchData<T>& batch, const MultiSpaceModel<T>& model, T alpha) {
  return batch_loss(batch, model, alpha, LossMode::kSingle);
}

template <typename T>
LossAndGradient<T> loss_and_gradient(const BatchData<T>& batch, const MultiSpaceModel<T>& model,
                                     T alpha, LossMode mode) {
  const auto text = forward_text(model, std::span<const Sentence>(batch.sentences));
  const auto video = forward_video(model, batch.videos);
  const auto sims = similarities(text, video);
  LossAndGradient<T> out{loss_from_similarities<T>(sims, batch.video_ids, alpha, mode),
                         model.params.zeros_like()};
  backward(model, text, video, std::span<const Matrix<T>>(out.loss.d_sim), out.grad);
  return out;
}

DiversityStats hardneg_diversity(std::span<const LossReport> epoch_log) {
  if (epoch_log.empty()) throw DataError("diversity needs at least one loss report");
  DiversityStats stats;
  for (const auto& report : epoch_log) {
    for (const auto& per_space : report.hard_negatives) {
      if (per_space.empty()) throw DataError("loss report carries no hard negatives");
      std::unordered_set<std::string> unique(per_space.begin(), per_space.end());
      stats.u_multi += unique.size();
      stats.u_single += 1;
    }
  }
  if (stats.u_single == 0) throw DataError("diversity needs at least one sentence");
  stats.extra_ratio =
      static_cast<double>(stats.u_multi) / static_cast<double>(stats.u_single) - 1.0;
  return stats;
}

void write_diversity_line(std::ostream& out, std::size_t epoch, const DiversityStats& stats) {
  char ratio[32];
  std::snprintf(ratio, sizeof ratio, "%.6f", stats.extra_ratio);
  out << epoch << '\t' << stats.u_single << '\t' << stats.u_multi << '\t' << ratio << '\n';
}

#define AVS_INSTANTIATE_LOSS(T)                                                                 \
  template std::size_t hardest_negative<T>(std::size_t, std::span<const T>, std::span<const bool>); \
  template T itrl<T>(T, T, T);                                                                  \
  template LossResult<T> loss_from_similarities<T>(std::span<const Matrix<T>>,                  \
                                                   std::span<const std::string>, T, LossMode);  \
  template LossResult<T> combined_loss<T>(const BatchData<T>&, const MultiSpaceModel<T>&, T);   \
  template LossResult<T> single_loss<T>(const BatchData<T>&, const MultiSpaceModel<T>&, T);     \
  template LossAndGradient<T> loss_and_gradient<T>(const BatchData<T>&,                         \
                                                   const MultiSpaceModel<T>&, T, LossMode);

AVS_INSTANTIATE_LOSS(float)
AVS_INSTANTIATE_LOSS(double)

}  // namespace avs
