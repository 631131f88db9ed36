#pragma once

#include "avs/common.hpp"
#include "avs/spaces.hpp"

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace avs {

inline constexpr double kDefaultMargin = 0.2;

/// kCombined: every space picks its own hardest negative and the per-space
/// losses are summed. kSingle: one hardest negative under the averaged
/// similarity.
enum class LossMode { kCombined, kSingle };

std::string_view loss_name(LossMode mode);
LossMode parse_loss(std::string_view name);

/// Sentences of a mini-batch with their positive videos, column i of every
/// similarity matrix being the video of sentence i.
template <typename T>
struct BatchData {
  std::vector<Sentence> sentences;
  Matrix<T> videos;
  std::vector<std::string> video_ids;
};

struct LossReport {
  std::vector<double> per_space;  // batch means; a single entry for kSingle
  double combined = 0.0;
  /// Chosen hardest-negative video ids, [sentence][space].
  std::vector<std::vector<std::string>> hard_negatives;
};

template <typename T>
struct LossResult {
  LossReport report;
  T value = 0;
  std::vector<Matrix<T>> d_sim;  // d(value)/d(similarity) per space
  /// Smallest gap between the chosen negative and the runner-up, and
  /// smallest distance of a hinge from its kink. Finite differences are only
  /// trustworthy when both are well above the step size.
  double min_tie_gap = 0.0;
  double min_hinge_gap = 0.0;
};

/// Index of the most similar non-positive column; ties go to the lowest
/// index. `s_index` is always treated as positive. Throws DataError when
/// every column is positive.
template <typename T>
std::size_t hardest_negative(std::size_t s_index, std::span<const T> sim_row,
                             std::span<const bool> positives_mask);

/// max(0, alpha + hardneg_sim - pos_sim).
template <typename T>
T itrl(T pos_sim, T hardneg_sim, T alpha);

/// Batch loss (mean over sentences) with gradients w.r.t. the similarities.
/// A column is a negative for a sentence unless it carries the same video id.
template <typename T>
LossResult<T> loss_from_similarities(std::span<const Matrix<T>> per_space,
                                     std::span<const std::string> video_ids, T alpha,
                                     LossMode mode);

template <typename T>
LossResult<T> combined_loss(const BatchData<T>& batch, const MultiSpaceModel<T>& model, T alpha);

template <typename T>
LossResult<T> single_loss(const BatchData<T>& batch, const MultiSpaceModel<T>& model, T alpha);

template <typename T>
struct LossAndGradient {
  LossResult<T> loss;
  ModelParams<T> grad;
};

/// Forward, loss and backward for one batch.
template <typename T>
LossAndGradient<T> loss_and_gradient(const BatchData<T>& batch, const MultiSpaceModel<T>& model,
                                     T alpha, LossMode mode);

struct DiversityStats {
  std::size_t u_single = 0;
  std::size_t u_multi = 0;
  double extra_ratio = 0.0;
};

/// Extra distinct hard negatives of per-space mining relative to one per
/// sentence. Throws DataError on an empty log.
DiversityStats hardneg_diversity(std::span<const LossReport> epoch_log);

/// `epoch<TAB>U_single<TAB>U_multi<TAB>extra_ratio`.
void write_diversity_line(std::ostream& out, std::size_t epoch, const DiversityStats& stats);

}  // namespace avs
