#pragma once

#include "avs/common.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace avs {

inline constexpr char kFeatureMagic[4] = {'V', 'F', 'E', 'A'};
inline constexpr std::uint32_t kFeatureFormatVersion = 1;

/// Dense id-keyed vectors, one row per id. Used for video features and for
/// precomputed sentence vectors alike.
///
/// Binary layout (little-endian): magic `VFEA`, u32 version, u32 n, u32 dim,
/// n*dim f32 values row by row, then n ids each as u32 byte length + UTF-8.
class FeatureStore {
 public:
  FeatureStore() = default;
  /// Throws DataError on duplicate ids, row-count mismatch or non-finite values.
  FeatureStore(std::vector<std::string> ids, Matrix<float> features);

  std::size_t size() const { return ids_.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(features_.cols()); }
  const std::vector<std::string>& ids() const { return ids_; }
  const Matrix<float>& features() const { return features_; }

  std::optional<std::size_t> find(std::string_view id) const;
  /// Throws DataError naming the id when absent.
  std::size_t index_of(std::string_view id) const;
  auto row(std::size_t i) const { return features_.row(static_cast<Eigen::Index>(i)); }

  void write_binary(std::ostream& out) const;
  void write_binary(const std::string& path) const;
  /// `id v1 ... v_dim` per line.
  void write_text(std::ostream& out) const;

  static FeatureStore read_binary(std::istream& in);
  static FeatureStore read_text(std::istream& in);
  /// Binary when the file starts with the magic bytes, text otherwise.
  static FeatureStore load(const std::string& path);

 private:
  std::vector<std::string> ids_;
  Matrix<float> features_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace avs
