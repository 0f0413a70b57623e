#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <random>
#include <sstream>

#include "blowup/series_io.hpp"

using namespace blowup;

namespace {

MonitorSeries random_series(int rows, int m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  MonitorSeries out;
  for (int k = 0; k < rows; ++k) {
    MonitorRecord r;
    r.s = 0.1 * k + nd(rng) * 1e-17;
    r.E = 4.0 / 3.0 + nd(rng);
    r.q_norm = std::exp(nd(rng));
    r.d = std::tanh(nd(rng));
    r.lambda = std::atanh(r.d);
    r.theta = Eigen::VectorXd::NullaryExpr(m - 1, [&] { return nd(rng); });
    r.alpha_1_1 = nd(rng) * 1e-300;
    r.alpha_minus = Eigen::VectorXd::NullaryExpr(m, [&] { return std::abs(nd(rng)); });
    r.a = r.alpha_1_1 * r.alpha_1_1;
    r.b = nd(rng);
    r.R_minus = -1.0 / 3.0;
    out.push_back(r);
  }
  return out;
}

void expect_same(const MonitorRecord& a, const MonitorRecord& b) {
  EXPECT_EQ(a.s, b.s);
  EXPECT_EQ(a.E, b.E);
  EXPECT_EQ(a.q_norm, b.q_norm);
  EXPECT_EQ(a.d, b.d);
  EXPECT_EQ(a.lambda, b.lambda);
  EXPECT_EQ(a.theta, b.theta);
  EXPECT_EQ(a.alpha_1_1, b.alpha_1_1);
  EXPECT_EQ(a.alpha_minus, b.alpha_minus);
  EXPECT_EQ(a.a, b.a);
  EXPECT_EQ(a.b, b.b);
  EXPECT_EQ(a.R_minus, b.R_minus);
}

}  // namespace

TEST(SeriesHeader, ColumnLayout) {
  EXPECT_EQ(series_header(2), "s,E,q_norm,d,lambda,theta_2,alpha_1_1,alpha_minus_1,alpha_minus_2,a,b,R_minus");
  EXPECT_EQ(format_g17(0.1), "0.10000000000000001");
  EXPECT_EQ(format_g17(-2.0), "-2");
}

TEST(SeriesIo, EmptySeriesRejected) {
  std::ostringstream os;
  EXPECT_THROW(write_series({}, os), std::invalid_argument);
  EXPECT_THROW(emit_series({}, "/tmp/never_written.csv"), std::invalid_argument);
}

TEST(SeriesIo, SingleRow) {
  const MonitorSeries one = random_series(1, 3, 1);
  std::stringstream ss;
  write_series(one, ss);
  const MonitorSeries back = read_series(ss);
  ASSERT_EQ(back.size(), 1u);
  expect_same(one[0], back[0]);
}

TEST(SeriesIo, LosslessRoundTrip) {
  for (int m : {2, 3, 6}) {
    const MonitorSeries s = random_series(50, m, 100 + m);
    std::stringstream ss;
    write_series(s, ss);
    const MonitorSeries back = read_series(ss);
    ASSERT_EQ(back.size(), s.size());
    for (std::size_t k = 0; k < s.size(); ++k) expect_same(s[k], back[k]);
  }
}

TEST(SeriesIo, FileOutputIsDeterministic) {
  const MonitorSeries s = random_series(20, 3, 7);
  const auto dir = std::filesystem::temp_directory_path();
  const std::string p1 = (dir / "blowup_series_a.csv").string();
  const std::string p2 = (dir / "blowup_series_b.csv").string();
  emit_series(s, p1);
  emit_series(s, p2);
  std::ifstream a(p1, std::ios::binary), b(p2, std::ios::binary);
  const std::string ca((std::istreambuf_iterator<char>(a)), {}), cb((std::istreambuf_iterator<char>(b)), {});
  EXPECT_FALSE(ca.empty());
  EXPECT_EQ(ca, cb);
  const MonitorSeries back = parse_series(p1);
  ASSERT_EQ(back.size(), s.size());
  expect_same(s.back(), back.back());
  std::filesystem::remove(p1);
  std::filesystem::remove(p2);
}

TEST(SeriesIo, MalformedInputRejected) {
  std::stringstream bad_header("s,E\n1,2\n");
  EXPECT_THROW(read_series(bad_header), std::runtime_error);
  std::stringstream empty("");
  EXPECT_THROW(read_series(empty), std::runtime_error);
  std::stringstream short_row(series_header(2) + "\n1,2,3\n");
  EXPECT_THROW(read_series(short_row), std::runtime_error);
  std::stringstream garbage(series_header(2) + "\n1,2,3,4,5,6,7,8,9,10,11,x\n");
  EXPECT_THROW(read_series(garbage), std::runtime_error);
  EXPECT_THROW(parse_series("/nonexistent/dir/file.csv"), std::runtime_error);
}

TEST(SeriesIo, InconsistentComponentsRejected) {
  MonitorSeries s = random_series(2, 3, 9);
  s[1].alpha_minus.resize(2);
  std::ostringstream os;
  EXPECT_THROW(write_series(s, os), std::invalid_argument);
}
