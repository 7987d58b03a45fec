#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace fidux {

/// Raised for malformed or invalid input data. Carries the 1-based data row
/// (header excluded) when the problem is tied to a row, 0 otherwise.
class DataError : public std::runtime_error {
public:
  explicit DataError(const std::string& what, std::size_t row = 0) : std::runtime_error(what), row_(row) {}
  std::size_t row() const { return row_; }

private:
  std::size_t row_;
};

/// Raised when an optimizer or sampler cannot produce a valid result.
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct SubjectRecord {
  Eigen::VectorXd x;
  double y = 0.0;
  int delta = 0;
};

/// Right-censored survival data: covariates (n x p), observed times and
/// failure indicators. Validated on construction.
class SurvivalDataset {
public:
  SurvivalDataset() = default;

  SurvivalDataset(Eigen::MatrixXd x, Eigen::VectorXd y, std::vector<int> delta)
      : x_(std::move(x)), y_(std::move(y)), delta_(std::move(delta)) {
    validate();
  }

  explicit SurvivalDataset(const std::vector<SubjectRecord>& records) {
    if (records.empty()) throw DataError("no records");
    const auto p = records.front().x.size();
    x_.resize(static_cast<Eigen::Index>(records.size()), p);
    y_.resize(static_cast<Eigen::Index>(records.size()));
    delta_.resize(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (records[i].x.size() != p) throw DataError("inconsistent covariate dimension at row " + std::to_string(i + 1), i + 1);
      x_.row(static_cast<Eigen::Index>(i)) = records[i].x.transpose();
      y_(static_cast<Eigen::Index>(i)) = records[i].y;
      delta_[i] = records[i].delta;
    }
    validate();
  }

  std::size_t n() const { return static_cast<std::size_t>(y_.size()); }
  std::size_t p() const { return static_cast<std::size_t>(x_.cols()); }
  std::size_t failures() const { return static_cast<std::size_t>(std::count(delta_.begin(), delta_.end(), 1)); }

  const Eigen::MatrixXd& x() const { return x_; }
  const Eigen::VectorXd& y() const { return y_; }
  const std::vector<int>& delta() const { return delta_; }

  SubjectRecord record(std::size_t i) const {
    const auto r = static_cast<Eigen::Index>(i);
    return {x_.row(r).transpose(), y_(r), delta_[i]};
  }

private:
  void validate() const {
    if (y_.size() == 0) throw DataError("no records");
    if (x_.rows() != y_.size() || delta_.size() != n()) throw DataError("inconsistent record count");
    for (std::size_t i = 0; i < n(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      if (!(y_(r) > 0.0) || !std::isfinite(y_(r))) throw DataError("non-positive time at row " + std::to_string(i + 1), i + 1);
      if (delta_[i] != 0 && delta_[i] != 1) throw DataError("status outside {0,1} at row " + std::to_string(i + 1), i + 1);
      if (!x_.row(r).allFinite()) throw DataError("non-finite covariate at row " + std::to_string(i + 1), i + 1);
    }
  }

  Eigen::MatrixXd x_;
  Eigen::VectorXd y_;
  std::vector<int> delta_;
};

/// Column mapping for delimited input. Empty `covariates` means the default
/// names x1, x2, ... taken consecutively from the header.
struct CsvSchema {
  std::string time = "time";
  std::string status = "status";
  std::vector<std::string> covariates;
  char delimiter = ',';
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

inline std::vector<std::string_view> split(std::string_view line, char delim) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(delim, start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

inline bool blank(std::string_view s) { return trim(s).empty(); }

}  // namespace detail

/// Reads a header-led delimited table. Row order is preserved.
inline SurvivalDataset load_dataset(std::istream& in, const CsvSchema& schema = {}) {
  std::string line;
  std::optional<std::vector<std::string>> header;
  while (std::getline(in, line)) {
    if (detail::blank(line)) continue;
    header.emplace();
    for (auto f : detail::split(line, schema.delimiter)) header->emplace_back(f);
    break;
  }
  if (!header) throw DataError("no records");

  const auto column = [&](const std::string& name) -> std::optional<std::size_t> {
    const auto it = std::find(header->begin(), header->end(), name);
    if (it == header->end()) return std::nullopt;
    return static_cast<std::size_t>(it - header->begin());
  };
  const auto require = [&](const std::string& name) {
    auto c = column(name);
    if (!c) throw DataError("missing column '" + name + "'");
    return *c;
  };

  const std::size_t time_col = require(schema.time);
  const std::size_t status_col = require(schema.status);
  std::vector<std::size_t> cov_cols;
  if (schema.covariates.empty()) {
    for (std::size_t j = 1;; ++j) {
      auto c = column("x" + std::to_string(j));
      if (!c) break;
      cov_cols.push_back(*c);
    }
    if (cov_cols.empty()) throw DataError("missing column 'x1' (no covariate columns)");
  } else {
    for (const auto& name : schema.covariates) cov_cols.push_back(require(name));
  }

  std::vector<SubjectRecord> records;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (detail::blank(line)) continue;
    ++row;
    const auto fields = detail::split(line, schema.delimiter);
    if (fields.size() != header->size())
      throw DataError("inconsistent column count at row " + std::to_string(row) + " (expected " +
                          std::to_string(header->size()) + ", got " + std::to_string(fields.size()) + ")",
                      row);
    const auto number = [&](std::size_t col) {
      auto v = detail::parse_double(fields[col]);
      if (!v) throw DataError("malformed value '" + std::string(fields[col]) + "' in column '" + (*header)[col] + "' at row " + std::to_string(row), row);
      return *v;
    };
    SubjectRecord rec;
    rec.y = number(time_col);
    if (!(rec.y > 0.0) || !std::isfinite(rec.y)) throw DataError("non-positive time at row " + std::to_string(row), row);
    const double status = number(status_col);
    if (status != 0.0 && status != 1.0) throw DataError("status outside {0,1} at row " + std::to_string(row), row);
    rec.delta = static_cast<int>(status);
    rec.x.resize(static_cast<Eigen::Index>(cov_cols.size()));
    for (std::size_t j = 0; j < cov_cols.size(); ++j) rec.x(static_cast<Eigen::Index>(j)) = number(cov_cols[j]);
    records.push_back(std::move(rec));
  }
  if (records.empty()) throw DataError("no records");
  return SurvivalDataset(records);
}

inline SurvivalDataset load_dataset(const std::string& text, const CsvSchema& schema = {}) {
  std::istringstream in(text);
  return load_dataset(in, schema);
}

/// Failure-time bookkeeping for the partial likelihood and the fiducial
/// constraints. Indices are 0-based subject rows of the source dataset.
///
/// Ties are exact floating-point equality. Group k collects the subjects
/// failing at failure_times[k]; all of them share risk_sets[k] = {j : y_j >= t_k},
/// which keeps censorings tied with a failure inside that failure's risk set.
struct RiskStructure {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  std::vector<int> delta;

  std::vector<double> failure_times;             // t_1 < ... < t_K
  std::vector<std::vector<std::size_t>> tie_groups;  // d_k
  std::vector<std::vector<std::size_t>> risk_sets;   // R_k, ascending subject index
  std::vector<std::size_t> failing_order;        // i_1, ..., i_m
  std::vector<std::size_t> group_of_failure;     // k(h) for h = 1..m

  // Subjects sorted by descending y; R_k is the first risk_prefix[k] of them.
  std::vector<std::size_t> descending;
  std::vector<std::size_t> risk_prefix;

  std::size_t n() const { return static_cast<std::size_t>(y.size()); }
  std::size_t p() const { return static_cast<std::size_t>(x.cols()); }
  std::size_t m() const { return failing_order.size(); }
  std::size_t groups() const { return failure_times.size(); }
};

inline RiskStructure build_risk_structure(const SurvivalDataset& data) {
  if (data.failures() == 0) throw DataError("no failures: fiducial inversion undefined");
  RiskStructure rs;
  rs.x = data.x();
  rs.y = data.y();
  rs.delta = data.delta();
  const std::size_t n = data.n();

  std::vector<std::size_t> fails;
  for (std::size_t i = 0; i < n; ++i)
    if (rs.delta[i] == 1) fails.push_back(i);
  std::stable_sort(fails.begin(), fails.end(), [&](std::size_t a, std::size_t b) {
    return rs.y(static_cast<Eigen::Index>(a)) < rs.y(static_cast<Eigen::Index>(b));
  });

  rs.descending.resize(n);
  std::iota(rs.descending.begin(), rs.descending.end(), std::size_t{0});
  std::stable_sort(rs.descending.begin(), rs.descending.end(), [&](std::size_t a, std::size_t b) {
    return rs.y(static_cast<Eigen::Index>(a)) > rs.y(static_cast<Eigen::Index>(b));
  });

  for (std::size_t f : fails) {
    const double t = rs.y(static_cast<Eigen::Index>(f));
    if (rs.failure_times.empty() || rs.failure_times.back() != t) {
      rs.failure_times.push_back(t);
      rs.tie_groups.emplace_back();
    }
    rs.tie_groups.back().push_back(f);
    rs.failing_order.push_back(f);
    rs.group_of_failure.push_back(rs.failure_times.size() - 1);
  }

  for (double t : rs.failure_times) {
    std::vector<std::size_t> r;
    for (std::size_t j = 0; j < n; ++j)
      if (rs.y(static_cast<Eigen::Index>(j)) >= t) r.push_back(j);
    rs.risk_prefix.push_back(r.size());
    rs.risk_sets.push_back(std::move(r));
  }
  return rs;
}

}  // namespace fidux
