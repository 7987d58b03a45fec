#include <fidux/survival_data.hpp>

#include "test_support.hpp"

#include <gtest/gtest.h>

namespace {

using fidux::build_risk_structure;
using fidux::DataError;
using fidux::load_dataset;

fidux::SurvivalDataset make(std::vector<double> y, std::vector<int> d, std::vector<double> x) {
  Eigen::MatrixXd xm(static_cast<Eigen::Index>(x.size()), 1);
  for (std::size_t i = 0; i < x.size(); ++i) xm(static_cast<Eigen::Index>(i), 0) = x[i];
  return {xm, Eigen::Map<Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size())), d};
}

TEST(LoadDataset, ParsesThreeRows) {
  const auto data = load_dataset("time,status,x1\n1,1,0.5\n2,0,1.0\n3,1,-1.0\n");
  EXPECT_EQ(data.n(), 3u);
  EXPECT_EQ(data.p(), 1u);
  EXPECT_EQ(data.failures(), 2u);
  EXPECT_DOUBLE_EQ(data.x()(2, 0), -1.0);
  EXPECT_DOUBLE_EQ(data.y()(1), 2.0);
  EXPECT_EQ(data.delta()[1], 0);
}

TEST(LoadDataset, NamedSchemaAndDelimiter) {
  fidux::CsvSchema schema;
  schema.time = "futime";
  schema.status = "event";
  schema.covariates = {"age", "trt"};
  schema.delimiter = ';';
  const auto data = load_dataset("id;trt;futime;age;event\n1;0;5.5;61;1\n2;1;3.25;47;0\n", schema);
  ASSERT_EQ(data.p(), 2u);
  EXPECT_DOUBLE_EQ(data.x()(0, 0), 61.0);
  EXPECT_DOUBLE_EQ(data.x()(1, 1), 1.0);
  EXPECT_DOUBLE_EQ(data.y()(1), 3.25);
}

TEST(LoadDataset, DefaultCovariatesAreConsecutive) {
  const auto data = load_dataset("x2,time,x1,status,x4\n7,1,3,1,9\n");
  ASSERT_EQ(data.p(), 2u);
  EXPECT_DOUBLE_EQ(data.x()(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(data.x()(0, 1), 7.0);
}

TEST(LoadDataset, NonPositiveTimeNamesRow) {
  try {
    load_dataset("time,status,x1\n1,1,0\n-1,1,0\n");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_EQ(std::string(e.what()), "non-positive time at row 2");
    EXPECT_EQ(e.row(), 2u);
  }
}

TEST(LoadDataset, EmptyInput) {
  EXPECT_THROW(load_dataset(""), DataError);
  try {
    load_dataset("time,status,x1\n\n");
  } catch (const DataError& e) {
    EXPECT_EQ(std::string(e.what()), "no records");
  }
}

TEST(LoadDataset, RowErrors) {
  EXPECT_THROW(load_dataset("time,status,x1\n1,2,0\n"), DataError);
  EXPECT_THROW(load_dataset("time,status,x1\n1,1\n"), DataError);
  EXPECT_THROW(load_dataset("time,status,x1\n1,1,abc\n"), DataError);
  try {
    load_dataset("time,x1\n1,0\n");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("'status'"), std::string::npos);
  }
}

TEST(RiskStructure, SimpleExample) {
  const auto rs = build_risk_structure(make({1, 2, 3}, {1, 0, 1}, {0, 0, 0}));
  EXPECT_EQ(rs.failure_times, (std::vector<double>{1, 3}));
  ASSERT_EQ(rs.risk_sets.size(), 2u);
  EXPECT_EQ(rs.risk_sets[0], (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(rs.risk_sets[1], (std::vector<std::size_t>{2}));
  EXPECT_EQ(rs.failing_order, (std::vector<std::size_t>{0, 2}));
}

TEST(RiskStructure, TiesShareRiskSet) {
  const auto rs = build_risk_structure(make({2, 2, 5}, {1, 1, 1}, {0, 1, 2}));
  ASSERT_EQ(rs.groups(), 2u);
  EXPECT_EQ(rs.tie_groups[0], (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(rs.risk_sets[0], (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(rs.tie_groups[1], (std::vector<std::size_t>{2}));
  EXPECT_EQ(rs.risk_sets[1], (std::vector<std::size_t>{2}));
  EXPECT_EQ(rs.group_of_failure, (std::vector<std::size_t>{0, 0, 1}));
}

TEST(RiskStructure, CensoringTiedWithFailureStaysAtRisk) {
  const auto rs = build_risk_structure(make({3, 3, 4}, {1, 0, 0}, {0, 0, 0}));
  EXPECT_EQ(rs.risk_sets[0], (std::vector<std::size_t>{0, 1, 2}));
}

TEST(RiskStructure, NoFailures) {
  try {
    build_risk_structure(make({1, 1}, {0, 0}, {0, 0}));
    FAIL();
  } catch (const DataError& e) {
    EXPECT_EQ(std::string(e.what()), "no failures: fiducial inversion undefined");
  }
}

// Risk-set invariants on random data, including forced ties.
TEST(RiskStructure, InvariantsOnRandomData) {
  fidux::Rng rng(11);
  for (int rep = 0; rep < 50; ++rep) {
    auto base = fidux::oracle::random_dataset(rng, 5 + static_cast<std::size_t>(rep % 20), 2);
    Eigen::VectorXd y = base.y();
    for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = std::ceil(y(i) * 4.0) / 4.0;  // induce ties
    const fidux::SurvivalDataset data(base.x(), y, base.delta());
    const auto rs = build_risk_structure(data);

    std::size_t total = 0;
    for (std::size_t k = 0; k < rs.groups(); ++k) {
      total += rs.tie_groups[k].size();
      if (k > 0) ASSERT_LT(rs.failure_times[k - 1], rs.failure_times[k]);
      for (std::size_t j : rs.risk_sets[k]) ASSERT_GE(rs.y(j), rs.failure_times[k]);
      for (std::size_t i : rs.tie_groups[k]) {
        ASSERT_EQ(rs.y(i), rs.failure_times[k]);
        ASSERT_TRUE(std::binary_search(rs.risk_sets[k].begin(), rs.risk_sets[k].end(), i));
      }
      if (k > 0) ASSERT_TRUE(std::includes(rs.risk_sets[k - 1].begin(), rs.risk_sets[k - 1].end(), rs.risk_sets[k].begin(),
                                           rs.risk_sets[k].end()));
      // Prefix of the descending order reproduces the risk set.
      std::vector<std::size_t> prefix(rs.descending.begin(), rs.descending.begin() + static_cast<long>(rs.risk_prefix[k]));
      std::sort(prefix.begin(), prefix.end());
      ASSERT_EQ(prefix, rs.risk_sets[k]);
    }
    ASSERT_EQ(total, data.failures());
    ASSERT_EQ(rs.m(), data.failures());

    // Lossless reconstruction of (y, delta): failures from the groups, the
    // rest from the stored censored records.
    Eigen::VectorXd y_rec = Eigen::VectorXd::Constant(y.size(), -1.0);
    std::vector<int> d_rec(data.n(), 0);
    for (std::size_t k = 0; k < rs.groups(); ++k)
      for (std::size_t i : rs.tie_groups[k]) {
        y_rec(i) = rs.failure_times[k];
        d_rec[i] = 1;
      }
    for (std::size_t i = 0; i < data.n(); ++i)
      if (d_rec[i] == 0) y_rec(i) = rs.y(i);
    ASSERT_EQ(y_rec, y);
    ASSERT_EQ(d_rec, data.delta());
  }
}

}  // namespace
