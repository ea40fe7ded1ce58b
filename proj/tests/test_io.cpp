#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "mlqe/io.hpp"

using namespace mlqe;

namespace {

const std::string kData = MLQE_TEST_DATA_DIR;

template <class F>
std::string error_of(F&& f) {
  try {
    f();
  } catch (const DataError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Golden, ParsesToExpectedSets) {
  const auto locs = io::load_locations(kData + "/golden_locations.csv");
  ASSERT_EQ(locs.size(), 4u);
  EXPECT_EQ(locs.coords()[1].x, 0.25);
  EXPECT_EQ(locs.coords()[1].y, 0.75);
  EXPECT_EQ(locs.coords()[2].x, 0.75);

  const auto reps = io::load_replicates(kData + "/golden_replicates.csv");
  Eigen::MatrixXd want(4, 2);
  want << 1.5, -0.0, -0.25, 7.75, 3.0, 0.001, 0.125, -2.0;
  ASSERT_EQ(reps.n(), 4u);
  ASSERT_EQ(reps.m(), 2u);
  EXPECT_EQ(reps.data(), want);
  EXPECT_TRUE(std::signbit(reps.data()(0, 1)));
}

TEST(RoundTrip, BitExact) {
  std::mt19937_64 rng(71);
  std::uniform_real_distribution<double> u(0, 1);
  std::normal_distribution<double> nd;
  std::vector<Point> pts(37);
  for (auto& p : pts) p = {u(rng), u(rng)};
  const LocationSet locs(pts);
  Eigen::MatrixXd z(37, 5);
  for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = nd(rng) * std::pow(10.0, nd(rng) * 5);
  z(0, 0) = std::numeric_limits<double>::denorm_min();
  z(1, 0) = std::numeric_limits<double>::max();
  z(2, 0) = -0.0;
  z(3, 0) = 0.1;
  const ReplicateSet reps(z);

  std::stringstream ls, rs;
  io::write_locations(ls, locs);
  io::write_replicates(rs, reps);
  const auto l2 = io::read_locations(ls);
  const auto r2 = io::read_replicates(rs);
  for (std::size_t i = 0; i < 37; ++i) {
    EXPECT_EQ(l2.coords()[i].x, pts[i].x);
    EXPECT_EQ(l2.coords()[i].y, pts[i].y);
  }
  EXPECT_EQ(r2.data(), z);
  EXPECT_TRUE(std::signbit(r2.data()(2, 0)));

  for (int i = 0; i < 1000; ++i) {
    const double v = nd(rng) * std::pow(10.0, 40 * nd(rng));
    double back = 0;
    std::istringstream(io::format_double(v)) >> back;
    EXPECT_EQ(back, v);
  }
}

TEST(Errors, HeadersAndLocations) {
  std::istringstream empty("");
  EXPECT_NE(error_of([&] { io::read_locations(empty, "locs.csv"); }).find("missing header 'x,y'"),
            std::string::npos);
  std::istringstream wrong("loc_id,value\n0,1\n");
  const auto msg = error_of([&] { io::read_replicates(wrong, "reps.csv"); });
  EXPECT_NE(msg.find("reps.csv:1:1"), std::string::npos) << msg;
  EXPECT_NE(msg.find("missing header 'loc_id,rep_id,value'"), std::string::npos) << msg;

  std::istringstream nan("loc_id,rep_id,value\n0,0,1\n1,0,nan\n");
  const auto m2 = error_of([&] { io::read_replicates(nan, "r.csv"); });
  EXPECT_NE(m2.find("r.csv:3:5"), std::string::npos) << m2;

  std::istringstream inf("x,y\n0.1,0.2\n0.3, inf\n");
  const auto m3 = error_of([&] { io::read_locations(inf, "l.csv"); });
  EXPECT_NE(m3.find("l.csv:3:"), std::string::npos) << m3;

  std::istringstream junk("x,y\n0.1,abc\n");
  EXPECT_NE(error_of([&] { io::read_locations(junk, "l.csv"); }).find("l.csv:2:5"),
            std::string::npos);

  std::istringstream ragged("loc_id,rep_id,value\n0,0,1\n1,0,2\n0,1,3\n");
  EXPECT_NE(error_of([&] { io::read_replicates(ragged); }).find("2 x 2"), std::string::npos);

  std::istringstream dup("loc_id,rep_id,value\n0,0,1\n0,0,2\n1,1,3\n1,0,4\n");
  EXPECT_NE(error_of([&] { io::read_replicates(dup, "d.csv"); }).find("d.csv:3:1: duplicate"),
            std::string::npos);

  std::istringstream fields("x,y\n0.1,0.2,0.3\n");
  EXPECT_NE(error_of([&] { io::read_locations(fields); }).find("expected 2 fields"),
            std::string::npos);

  EXPECT_THROW(io::load_locations("/nonexistent/dir/locs.csv"), DataError);
}

TEST(Record, ParseWriteAndTypedAccess) {
  std::istringstream in(
      "# comment\n"
      "sim.n = 16\n"
      "\n"
      "sim.layout=grid\n"
      "qgrid.grid=1, 0.99,0.9\n"
      "fit.scale=false\n"
      "x=2.5\n");
  const auto r = io::Record::parse(in, "cfg.txt");
  EXPECT_EQ(r.get_int("sim.n"), 16);
  EXPECT_EQ(r.get("sim.layout"), "grid");
  EXPECT_EQ(r.get_list("qgrid.grid"), (std::vector<double>{1.0, 0.99, 0.9}));
  EXPECT_FALSE(r.get_bool("fit.scale"));
  EXPECT_EQ(r.get_double("x"), 2.5);
  EXPECT_EQ(r.items().size(), 5u);
  EXPECT_EQ(r.items()[0].first, "sim.n");

  std::ostringstream out;
  r.write(out);
  std::istringstream again(out.str());
  const auto r2 = io::Record::parse(again);
  EXPECT_EQ(r2.items(), r.items());

  EXPECT_NE(error_of([&] { (void)r.get("nope"); }).find("cfg.txt: missing key 'nope'"),
            std::string::npos);
  EXPECT_THROW(r.get_int("x"), DataError);
  EXPECT_THROW(r.get_bool("sim.layout"), DataError);

  std::istringstream bad("a=1\nnot a pair\n");
  EXPECT_NE(error_of([&] { io::Record::parse(bad, "b.txt"); }).find("b.txt:2:1"),
            std::string::npos);
  std::istringstream dup("a=1\na=2\n");
  EXPECT_THROW(io::Record::parse(dup), DataError);

  io::Record t;
  io::put_theta(t, "theta.", {1.5, 0.1, 0.7});
  t.set("a", 3);
  t.set("a", 4);
  EXPECT_EQ(t.get("a"), "4");
  const auto th = io::get_theta(t, "theta.");
  EXPECT_EQ(th.sigma2, 1.5);
  EXPECT_EQ(th.beta, 0.1);
  EXPECT_EQ(th.nu, 0.7);
}
