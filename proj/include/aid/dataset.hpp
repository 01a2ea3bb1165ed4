#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace aid {

using RowMatrixF =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Immutable n x d matrix of database vectors, stored as f32 row-major.
///
/// All arithmetic downstream is carried out in double; the store keeps the
/// exact f32 values read from disk so that save/load round-trips are
/// bit-exact. Optional external ids are parallel to the rows.
class FeatureStore {
public:
  /// Throws ValidationError if the matrix is empty, holds a non-finite
  /// entry, or if ids are given with the wrong length or with duplicates.
  explicit FeatureStore(RowMatrixF vectors,
                        std::optional<std::vector<std::string>> ids = {});

  std::size_t n() const { return static_cast<std::size_t>(vectors_.rows()); }
  std::size_t d() const { return static_cast<std::size_t>(vectors_.cols()); }

  const RowMatrixF &vectors() const { return vectors_; }
  auto row(std::size_t i) const { return vectors_.row(static_cast<Eigen::Index>(i)); }
  Eigen::VectorXd row_as_double(std::size_t i) const;

  const std::optional<std::vector<std::string>> &ids() const { return ids_; }
  std::optional<std::string> id(std::size_t i) const;

  /// Same vectors with ids attached (or replaced).
  FeatureStore with_ids(std::vector<std::string> ids) const;

  friend bool operator==(const FeatureStore &a, const FeatureStore &b);

private:
  RowMatrixF vectors_;
  std::optional<std::vector<std::string>> ids_;
};

/// Multi-label topic ground truth, parallel to FeatureStore rows.
struct TopicLabels {
  std::vector<std::string> topics;
  std::vector<std::vector<std::size_t>> assignments;

  std::size_t topic_count() const { return topics.size(); }
  bool has_topic(std::size_t item, std::size_t topic) const;
  /// Database indices carrying the topic, ascending.
  std::vector<std::size_t> members(std::size_t topic) const;
  /// Throws on length mismatch with n or on an out-of-range topic index.
  void validate(std::size_t n) const;
};

/// Linear projection x -> components * (x - mean).
struct PcaModel {
  Eigen::VectorXd mean;
  Eigen::MatrixXd components; // d_out x d, orthonormal rows
  Eigen::VectorXd explained_variance;
  bool degenerate = false; // some components span zero-variance directions

  std::size_t d_in() const { return static_cast<std::size_t>(components.cols()); }
  std::size_t d_out() const { return static_cast<std::size_t>(components.rows()); }
};

// AIDF binary format: "AIDF", u32 version=1, u64 n, u32 d, u8 dtype (0=f32),
// 3 zero bytes, n*d f32 little-endian row-major.
inline constexpr std::uint32_t kAidfVersion = 1;
inline constexpr std::size_t kAidfHeaderSize = 24;

FeatureStore load_features(const std::filesystem::path &path);
void save_features(const FeatureStore &store, const std::filesystem::path &path);

/// Parses an AIDF image held in memory.
FeatureStore decode_features(const std::string &bytes);
std::string encode_features(const FeatureStore &store);

/// Newline-delimited ids; must contain exactly n unique lines.
std::vector<std::string> load_ids(const std::filesystem::path &path, std::size_t n);
void save_ids(const std::vector<std::string> &ids, const std::filesystem::path &path);

TopicLabels parse_labels(const nlohmann::json &doc, std::size_t n);
TopicLabels load_labels(const std::filesystem::path &path, const FeatureStore &store);
nlohmann::json labels_to_json(const TopicLabels &labels);
void save_labels(const TopicLabels &labels, const std::filesystem::path &path);

/// Top-d_out principal directions of the mean-centred data, ordered by
/// descending explained variance. Zero-variance surplus directions are
/// completed orthonormally and reported through aid::warn.
PcaModel pca_fit(const FeatureStore &store, std::size_t d_out);

/// Plain projection (no whitening); ids are carried over by index.
FeatureStore pca_project(const PcaModel &model, const FeatureStore &store);

nlohmann::json pca_to_json(const PcaModel &model);
PcaModel pca_from_json(const nlohmann::json &doc);

} // namespace aid
