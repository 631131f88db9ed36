#include "avs/feature_store.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <cstdlib>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace avs {

namespace {

void put_u32(std::string& buf, std::uint32_t value) {
  for (int shift = 0; shift < 32; shift += 8) {
    buf.push_back(static_cast<char>((value >> shift) & 0xFFu));
  }
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

[[noreturn]] void truncated(std::size_t expected, std::size_t actual, const char* what) {
  throw DataError("feature file truncated in " + std::string(what) + ": expected at least " +
                  std::to_string(expected) + " bytes, got " + std::to_string(actual));
}

}  // namespace

FeatureStore::FeatureStore(std::vector<std::string> ids, Matrix<float> features)
    : ids_(std::move(ids)), features_(std::move(features)) {
  if (static_cast<std::size_t>(features_.rows()) != ids_.size()) {
    throw DataError("feature store has " + std::to_string(ids_.size()) + " ids but " +
                    std::to_string(features_.rows()) + " rows");
  }
  index_.reserve(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (!index_.emplace(ids_[i], i).second) {
      throw DataError("duplicate feature id '" + ids_[i] + "'");
    }
  }
  if (!features_.allFinite()) {
    for (std::size_t i = 0; i < ids_.size(); ++i) {
      if (!features_.row(static_cast<Eigen::Index>(i)).allFinite()) {
        throw DataError("non-finite feature value for id '" + ids_[i] + "'");
      }
    }
  }
}

std::optional<std::size_t> FeatureStore::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t FeatureStore::index_of(std::string_view id) const {
  if (auto i = find(id)) return *i;
  throw DataError("id '" + std::string(id) + "' not found in feature store");
}

void FeatureStore::write_binary(std::ostream& out) const {
  std::string buf(kFeatureMagic, 4);
  put_u32(buf, kFeatureFormatVersion);
  put_u32(buf, static_cast<std::uint32_t>(size()));
  put_u32(buf, static_cast<std::uint32_t>(dim()));
  buf.reserve(buf.size() + 4 * static_cast<std::size_t>(features_.size()));
  const float* data = features_.data();
  for (Eigen::Index i = 0; i < features_.size(); ++i) {
    put_u32(buf, std::bit_cast<std::uint32_t>(data[i]));
  }
  for (const auto& id : ids_) {
    put_u32(buf, static_cast<std::uint32_t>(id.size()));
    buf.append(id);
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw DataError("failed writing feature store");
}

void FeatureStore::write_binary(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write feature file " + path);
  write_binary(out);
}

void FeatureStore::write_text(std::ostream& out) const {
  char num[32];
  for (std::size_t i = 0; i < size(); ++i) {
    out << ids_[i];
    for (std::size_t j = 0; j < dim(); ++j) {
      std::snprintf(num, sizeof num, " %.9g",
                    static_cast<double>(features_(static_cast<Eigen::Index>(i),
                                                  static_cast<Eigen::Index>(j))));
      out << num;
    }
    out << '\n';
  }
}

FeatureStore FeatureStore::read_binary(std::istream& in) {
  const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* bytes = reinterpret_cast<const unsigned char*>(buf.data());
  const std::size_t total = buf.size();
  if (total < 16) truncated(16, total, "header");
  if (std::memcmp(bytes, kFeatureMagic, 4) != 0) throw DataError("bad feature file magic");
  const std::uint32_t version = get_u32(bytes + 4);
  if (version != kFeatureFormatVersion) {
    throw DataError("unsupported feature format version " + std::to_string(version));
  }
  const std::size_t n = get_u32(bytes + 8);
  const std::size_t d = get_u32(bytes + 12);
  if (n > 0 && d == 0) throw DataError("feature dimension is zero");

  std::size_t offset = 16;
  const std::size_t matrix_end = offset + 4 * n * d;
  if (total < matrix_end) truncated(matrix_end, total, "values");
  Matrix<float> features(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  float* data = features.data();
  for (std::size_t i = 0; i < n * d; ++i) {
    data[i] = std::bit_cast<float>(get_u32(bytes + offset));
    offset += 4;
  }

  std::vector<std::string> ids;
  ids.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (total < offset + 4) truncated(offset + 4, total, "id block");
    const std::size_t len = get_u32(bytes + offset);
    offset += 4;
    if (total < offset + len) truncated(offset + len, total, "id block");
    ids.emplace_back(buf.data() + offset, len);
    offset += len;
  }
  if (offset != total) {
    throw DataError("feature file has " + std::to_string(total - offset) + " trailing bytes");
  }
  return FeatureStore(std::move(ids), std::move(features));
}

FeatureStore FeatureStore::read_text(std::istream& in) {
  std::vector<std::string> ids;
  std::vector<float> values;
  std::size_t d = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream fields(line);
    std::string id;
    if (!(fields >> id)) continue;
    std::vector<float> row;
    std::string tok;
    while (fields >> tok) {
      char* end = nullptr;
      const float v = std::strtof(tok.c_str(), &end);
      if (end == tok.c_str() || *end != '\0') {
        throw DataError("feature text line " + std::to_string(line_no) + ": bad number '" +
                        tok + "'");
      }
      row.push_back(v);
    }
    if (row.empty()) {
      throw DataError("feature text line " + std::to_string(line_no) + " has no values");
    }
    if (d == 0) d = row.size();
    if (row.size() != d) {
      throw DataError("feature text line " + std::to_string(line_no) + ": expected " +
                      std::to_string(d) + " values, got " + std::to_string(row.size()));
    }
    ids.push_back(std::move(id));
    values.insert(values.end(), row.begin(), row.end());
  }
  Matrix<float> features(static_cast<Eigen::Index>(ids.size()), static_cast<Eigen::Index>(d));
  std::copy(values.begin(), values.end(), features.data());
  return FeatureStore(std::move(ids), std::move(features));
}

FeatureStore FeatureStore::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open feature file " + path);
  char magic[4] = {};
  in.read(magic, 4);
  const bool binary = in.gcount() == 4 && std::memcmp(magic, kFeatureMagic, 4) == 0;
  in.clear();
  in.seekg(0);
  return binary ? read_binary(in) : read_text(in);
}

}  // namespace avs
