#include "aid/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <unordered_set>

#include "aid/error.hpp"
#include "aid/log.hpp"

namespace aid {

namespace {

void put_le(std::string &out, std::uint64_t value, int bytes) {
  for (int i = 0; i < bytes; ++i)
    out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
}

std::uint64_t get_le(const std::string &in, std::size_t offset, int bytes) {
  std::uint64_t value = 0;
  for (int i = 0; i < bytes; ++i)
    value |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[offset + i]))
             << (8 * i);
  return value;
}

std::string read_file(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path &path, const std::string &bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw Error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out)
    throw Error("write failed for " + path.string());
}

} // namespace

FeatureStore::FeatureStore(RowMatrixF vectors,
                           std::optional<std::vector<std::string>> ids)
    : vectors_(std::move(vectors)), ids_(std::move(ids)) {
  if (vectors_.rows() < 1 || vectors_.cols() < 1)
    throw ValidationError("feature matrix must have n >= 1 and d >= 1");
  for (Eigen::Index i = 0; i < vectors_.rows(); ++i)
    for (Eigen::Index j = 0; j < vectors_.cols(); ++j)
      if (!std::isfinite(vectors_(i, j)))
        throw ValidationError("non-finite value at row " + std::to_string(i) +
                              ", column " + std::to_string(j));
  if (ids_) {
    if (ids_->size() != n())
      throw ValidationError("ids count " + std::to_string(ids_->size()) +
                            " does not match n = " + std::to_string(n()));
    std::unordered_set<std::string> seen;
    for (const auto &id : *ids_)
      if (!seen.insert(id).second)
        throw ValidationError("duplicate id '" + id + "'");
  }
}

Eigen::VectorXd FeatureStore::row_as_double(std::size_t i) const {
  return row(i).transpose().cast<double>();
}

std::optional<std::string> FeatureStore::id(std::size_t i) const {
  if (!ids_)
    return std::nullopt;
  return (*ids_)[i];
}

FeatureStore FeatureStore::with_ids(std::vector<std::string> ids) const {
  return FeatureStore(vectors_, std::move(ids));
}

bool operator==(const FeatureStore &a, const FeatureStore &b) {
  if (a.vectors_.rows() != b.vectors_.rows() || a.vectors_.cols() != b.vectors_.cols())
    return false;
  // Bitwise comparison: +0 and -0 must round-trip as distinct values.
  if (std::memcmp(a.vectors_.data(), b.vectors_.data(),
                  sizeof(float) * static_cast<std::size_t>(a.vectors_.size())) != 0)
    return false;
  return a.ids_ == b.ids_;
}

// --- AIDF -----------------------------------------------------------------

std::string encode_features(const FeatureStore &store) {
  std::string out;
  out.reserve(kAidfHeaderSize + 4 * store.n() * store.d());
  out.append("AIDF");
  put_le(out, kAidfVersion, 4);
  put_le(out, store.n(), 8);
  put_le(out, store.d(), 4);
  put_le(out, 0, 1); // dtype f32
  put_le(out, 0, 3);
  const auto &m = store.vectors();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      put_le(out, std::bit_cast<std::uint32_t>(m(i, j)), 4);
  return out;
}

FeatureStore decode_features(const std::string &bytes) {
  if (bytes.size() < kAidfHeaderSize)
    throw FormatError("AIDF header truncated");
  if (bytes.compare(0, 4, "AIDF") != 0)
    throw FormatError("bad magic, expected AIDF");
  const auto version = get_le(bytes, 4, 4);
  if (version != kAidfVersion)
    throw FormatError("unsupported AIDF version " + std::to_string(version));
  const auto n = get_le(bytes, 8, 8);
  const auto d = get_le(bytes, 16, 4);
  const auto dtype = get_le(bytes, 20, 1);
  if (dtype != 0)
    throw FormatError("unsupported AIDF dtype code " + std::to_string(dtype));
  if (get_le(bytes, 21, 3) != 0)
    throw FormatError("AIDF reserved bytes must be zero");
  if (n == 0 || d == 0)
    throw ValidationError("AIDF declares an empty matrix");

  const std::size_t payload = bytes.size() - kAidfHeaderSize;
  const std::size_t row_bytes = 4 * d;
  if (n > payload / row_bytes)
    throw TruncationError("AIDF declares " + std::to_string(n) + "x" +
                          std::to_string(d) + " values but payload holds " +
                          std::to_string(payload) + " bytes");
  if (payload != n * row_bytes)
    throw FormatError("AIDF has " + std::to_string(payload - n * row_bytes) +
                      " trailing bytes");

  RowMatrixF m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  std::size_t offset = kAidfHeaderSize;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j, offset += 4)
      m(i, j) = std::bit_cast<float>(static_cast<std::uint32_t>(get_le(bytes, offset, 4)));
  return FeatureStore(std::move(m));
}

FeatureStore load_features(const std::filesystem::path &path) {
  return decode_features(read_file(path));
}

void save_features(const FeatureStore &store, const std::filesystem::path &path) {
  write_file(path, encode_features(store));
}

// --- ids ------------------------------------------------------------------

std::vector<std::string> load_ids(const std::filesystem::path &path, std::size_t n) {
  std::istringstream in(read_file(path));
  std::vector<std::string> ids;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    ids.push_back(std::move(line));
  }
  if (ids.size() != n)
    throw ValidationError("ids file has " + std::to_string(ids.size()) +
                          " lines, expected " + std::to_string(n));
  std::unordered_set<std::string> seen;
  for (const auto &id : ids)
    if (!seen.insert(id).second)
      throw ValidationError("duplicate id '" + id + "'");
  return ids;
}

void save_ids(const std::vector<std::string> &ids, const std::filesystem::path &path) {
  std::string out;
  for (const auto &id : ids) {
    out += id;
    out.push_back('\n');
  }
  write_file(path, out);
}

// --- labels ---------------------------------------------------------------

bool TopicLabels::has_topic(std::size_t item, std::size_t topic) const {
  const auto &a = assignments[item];
  return std::find(a.begin(), a.end(), topic) != a.end();
}

std::vector<std::size_t> TopicLabels::members(std::size_t topic) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignments.size(); ++i)
    if (has_topic(i, topic))
      out.push_back(i);
  return out;
}

void TopicLabels::validate(std::size_t n) const {
  if (assignments.size() != n)
    throw ValidationError("labels cover " + std::to_string(assignments.size()) +
                          " items, expected " + std::to_string(n));
  for (std::size_t i = 0; i < assignments.size(); ++i)
    for (auto t : assignments[i])
      if (t >= topics.size())
        throw IndexError("item " + std::to_string(i) + " references topic " +
                         std::to_string(t) + " of " + std::to_string(topics.size()));
}

TopicLabels parse_labels(const nlohmann::json &doc, std::size_t n) {
  if (!doc.is_object() || !doc.contains("topics") || !doc.contains("assignments") ||
      !doc["topics"].is_array() || !doc["assignments"].is_array())
    throw FormatError("labels must be an object with 'topics' and 'assignments' arrays");
  TopicLabels labels;
  for (const auto &t : doc["topics"]) {
    if (!t.is_string())
      throw FormatError("topic names must be strings");
    labels.topics.push_back(t.get<std::string>());
  }
  for (const auto &row : doc["assignments"]) {
    if (!row.is_array())
      throw FormatError("each assignment must be an array of topic indices");
    std::vector<std::size_t> topics;
    for (const auto &t : row) {
      if (!t.is_number_integer())
        throw FormatError("topic indices must be integers");
      const auto v = t.get<long long>();
      if (v < 0)
        throw IndexError("negative topic index " + std::to_string(v));
      const auto idx = static_cast<std::size_t>(v);
      if (std::find(topics.begin(), topics.end(), idx) == topics.end())
        topics.push_back(idx);
    }
    labels.assignments.push_back(std::move(topics));
  }
  labels.validate(n);
  return labels;
}

TopicLabels load_labels(const std::filesystem::path &path, const FeatureStore &store) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error &e) {
    throw FormatError(std::string("labels JSON: ") + e.what());
  }
  return parse_labels(doc, store.n());
}

nlohmann::json labels_to_json(const TopicLabels &labels) {
  return {{"topics", labels.topics}, {"assignments", labels.assignments}};
}

void save_labels(const TopicLabels &labels, const std::filesystem::path &path) {
  write_file(path, labels_to_json(labels).dump() + "\n");
}

// --- PCA ------------------------------------------------------------------

PcaModel pca_fit(const FeatureStore &store, std::size_t d_out) {
  const std::size_t n = store.n();
  const std::size_t d = store.d();
  if (d_out < 1 || d_out > std::min(n, d))
    throw InvalidArgument("PCA target dimension " + std::to_string(d_out) +
                          " must be in [1, min(n, d) = " +
                          std::to_string(std::min(n, d)) + "]");

  const Eigen::MatrixXd x = store.vectors().cast<double>();
  PcaModel model;
  model.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.rowwise() - model.mean.transpose();

  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  const Eigen::VectorXd &s = svd.singularValues();
  const double dof = n > 1 ? static_cast<double>(n - 1) : 1.0;
  const double tol = s.size() > 0 ? s(0) * 1e-10 * static_cast<double>(std::max(n, d)) : 0.0;

  std::size_t informative = 0;
  while (informative < d_out && informative < static_cast<std::size_t>(s.size()) &&
         s(static_cast<Eigen::Index>(informative)) > tol && s(static_cast<Eigen::Index>(informative)) > 0.0)
    ++informative;

  const auto rows = static_cast<Eigen::Index>(d_out);
  const auto inf = static_cast<Eigen::Index>(informative);
  model.components.resize(rows, static_cast<Eigen::Index>(d));
  model.explained_variance = Eigen::VectorXd::Zero(rows);
  for (Eigen::Index i = 0; i < inf; ++i) {
    model.components.row(i) = svd.matrixV().col(i).transpose();
    model.explained_variance(i) = s(i) * s(i) / dof;
  }

  if (informative < d_out) {
    model.degenerate = true;
    warn("PCA: " + std::to_string(d_out - informative) +
         " requested component(s) have zero variance; completed with an "
         "arbitrary orthonormal basis");
    // Orthonormal complement of the informative rows via a full QR.
    Eigen::MatrixXd basis(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    if (inf > 0) {
      Eigen::HouseholderQR<Eigen::MatrixXd> qr(model.components.topRows(inf).transpose());
      basis = qr.householderQ();
    } else {
      basis.setIdentity();
    }
    for (Eigen::Index i = inf; i < rows; ++i)
      model.components.row(i) = basis.col(i).transpose();
  }

  // Deterministic sign: largest-magnitude coefficient positive.
  for (Eigen::Index i = 0; i < rows; ++i) {
    Eigen::Index arg = 0;
    model.components.row(i).cwiseAbs().maxCoeff(&arg);
    if (model.components(i, arg) < 0)
      model.components.row(i) *= -1.0;
  }
  return model;
}

FeatureStore pca_project(const PcaModel &model, const FeatureStore &store) {
  if (model.d_in() != store.d())
    throw DimensionMismatch("PCA model expects d = " + std::to_string(model.d_in()) +
                            ", store has d = " + std::to_string(store.d()));
  const Eigen::MatrixXd centered =
      store.vectors().cast<double>().rowwise() - model.mean.transpose();
  RowMatrixF projected = (centered * model.components.transpose()).cast<float>();
  return FeatureStore(std::move(projected), store.ids());
}

nlohmann::json pca_to_json(const PcaModel &model) {
  nlohmann::json components = nlohmann::json::array();
  for (Eigen::Index i = 0; i < model.components.rows(); ++i)
    components.push_back(std::vector<double>(model.components.row(i).begin(),
                                             model.components.row(i).end()));
  return {{"mean", std::vector<double>(model.mean.begin(), model.mean.end())},
          {"components", components},
          {"explained_variance", std::vector<double>(model.explained_variance.begin(),
                                                     model.explained_variance.end())},
          {"degenerate", model.degenerate}};
}

PcaModel pca_from_json(const nlohmann::json &doc) {
  try {
    PcaModel model;
    const auto mean = doc.at("mean").get<std::vector<double>>();
    const auto rows = doc.at("components").get<std::vector<std::vector<double>>>();
    model.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
    model.components.resize(static_cast<Eigen::Index>(rows.size()), model.mean.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != mean.size())
        throw FormatError("PCA component " + std::to_string(i) + " has wrong length");
      for (std::size_t j = 0; j < mean.size(); ++j)
        model.components(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
    const auto ev = doc.value("explained_variance", std::vector<double>(rows.size(), 0.0));
    model.explained_variance = Eigen::Map<const Eigen::VectorXd>(ev.data(), static_cast<Eigen::Index>(ev.size()));
    model.degenerate = doc.value("degenerate", false);
    return model;
  } catch (const nlohmann::json::exception &e) {
    throw FormatError(std::string("PCA model JSON: ") + e.what());
  }
}

} // namespace aid
