#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "fcsd/cha.hpp"
#include "oracles.hpp"

using namespace fcsd;
using namespace fcsd::cha;

namespace {

// A system whose nadir limit cuts through the middle of its (H, D) box.
NadirSystem desk_system() {
  NadirSystem s;
  s.droop = 25.0;
  s.turbine_fraction = 0.15 * 25.0;
  s.time_constant = 12.0;
  s.disturbance = 0.13;
  s.nominal = 50.0;
  s.limit = 0.5;
  return s;
}

ChaConfig desk_config(std::size_t n = 50000) {
  ChaConfig c;
  c.n_samples = n;
  c.h_bounds = {4.0, 9.0};
  c.d_bounds = {2.0, 8.0};
  c.seed = 21;
  return c;
}

std::vector<Point2> sorted(std::vector<Point2> v) {
  std::sort(v.begin(), v.end(), [](const Point2& a, const Point2& b) { return a.h < b.h || (a.h == b.h && a.d < b.d); });
  return v;
}

}  // namespace

TEST(ChaSample, VacuousLimitKeepsEverything) {
  auto sys = desk_system();
  sys.limit = std::numeric_limits<double>::infinity();
  EXPECT_EQ(sample_feasible(desk_config(1000), sys).size(), 1000u);
}

TEST(ChaSample, ZeroLimitIsEmpty) {
  auto sys = desk_system();
  sys.limit = 0.0;
  EXPECT_THROW(sample_feasible(desk_config(1000), sys), EmptyRegionError);
}

TEST(ChaSample, ReturnedPointsPassExactCheck) {
  const auto sys = desk_system();
  const auto pts = sample_feasible(desk_config(5000), sys);
  ASSERT_FALSE(pts.empty());
  for (const auto& p : pts) {
    const sfr::AggregatedSfrParams q{p.h, p.d, sys.droop, sys.turbine_fraction, sys.time_constant};
    EXPECT_LE(sfr::delta_f_nadir(q, sys.disturbance, sys.nominal).max_deviation, sys.limit);
  }
}

TEST(ChaSample, RejectsBadConfig) {
  auto cfg = desk_config(50);
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = desk_config();
  cfg.h_bounds = {5.0, 4.0};
  EXPECT_THROW(cfg.validate(), ValidationError);
}

TEST(Quickhull, SquareWithInteriorPoints) {
  std::vector<Point2> pts{{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  rng::Stream s(1, 0);
  for (int i = 0; i < 100; ++i) pts.push_back({s.uniform(0.01, 0.99), s.uniform(0.01, 0.99)});
  // Non-extreme points on edges are dropped too.
  pts.push_back({0.5, 0.0});
  const auto poly = quickhull2d(pts);
  EXPECT_FALSE(poly.degenerate);
  EXPECT_EQ(sorted(poly.vertices), sorted({{0, 0}, {1, 0}, {1, 1}, {0, 1}}));
  EXPECT_GT(poly.signed_area(), 0.0);
}

TEST(Quickhull, CollinearIsDegenerate) {
  const auto poly = quickhull2d(std::vector<Point2>{{0, 0}, {1, 1}, {2, 2}});
  EXPECT_TRUE(poly.degenerate);
  EXPECT_EQ(sorted(poly.vertices), sorted({{0, 0}, {2, 2}}));
}

TEST(Quickhull, IdenticalPointsAreDegenerate) {
  const auto poly = quickhull2d(std::vector<Point2>{{3, 4}, {3, 4}});
  EXPECT_TRUE(poly.degenerate);
  EXPECT_EQ(poly.vertices.size(), 1u);
}

TEST(Quickhull, EmptyInputRejected) { EXPECT_THROW(quickhull2d(std::vector<Point2>{}), ValidationError); }

TEST(Quickhull, MatchesBruteForceOn500Points) {
  rng::Stream s(77, 0);
  std::vector<Point2> pts;
  for (int i = 0; i < 500; ++i) pts.push_back({s.normal(), s.normal()});
  EXPECT_EQ(sorted(quickhull2d(pts).vertices), oracle::brute_force_hull(pts));
}

TEST(Quickhull, MatchesBruteForceOnManyClouds) {
  for (std::uint64_t c = 0; c < 100; ++c) {
    rng::Stream s(1234, c);
    const auto n = 3 + s.below(198);
    std::vector<Point2> pts;
    for (std::uint64_t i = 0; i < n; ++i) pts.push_back({s.uniform(-5, 5), s.uniform(0, 3)});
    const auto poly = quickhull2d(pts);
    EXPECT_EQ(sorted(poly.vertices), oracle::brute_force_hull(pts)) << "cloud " << c;
    // Strict convexity, CCW.
    const std::size_t m = poly.vertices.size();
    for (std::size_t i = 0; i < m; ++i)
      EXPECT_GT(detail::cross(poly.vertices[i], poly.vertices[(i + 1) % m], poly.vertices[(i + 2) % m]), 0.0);
  }
}

TEST(Halfspaces, UnitSquare) {
  ConvexPolygon sq{{{0, 0}, {1, 0}, {1, 1}, {0, 1}}, false};
  const auto hs = polygon_to_halfspaces(sq);
  ASSERT_EQ(hs.size(), 4u);
  EXPECT_NEAR(hs.planes[0].w_h, 0.0, 1e-15);
  EXPECT_NEAR(hs.planes[0].w_d, 1.0, 1e-15);  // D >= 0
  EXPECT_NEAR(hs.planes[1].w_h, -1.0, 1e-15);
  EXPECT_NEAR(hs.planes[1].b, 1.0, 1e-15);  // 1 - H >= 0
  for (const auto& p : hs.planes) EXPECT_NEAR(std::hypot(p.w_h, p.w_d), 1.0, 1e-15);
  EXPECT_TRUE(classify(hs, {0.5, 0.5}));
  EXPECT_TRUE(classify(hs, {1.0, 1.0}));
  EXPECT_FALSE(classify(hs, {1.5, 0.5}));
}

TEST(Halfspaces, DegenerateRejected) {
  ConvexPolygon seg{{{0, 0}, {1, 1}}, true};
  EXPECT_THROW(polygon_to_halfspaces(seg), ValidationError);
}

TEST(Halfspaces, VertexRoundTripAndIncidence) {
  rng::Stream s(8, 0);
  std::vector<Point2> pts;
  for (int i = 0; i < 300; ++i) pts.push_back({s.uniform(0, 10), s.uniform(0, 4)});
  const auto poly = quickhull2d(pts);
  const auto hs = polygon_to_halfspaces(poly);
  EXPECT_TRUE(classify(hs, poly.centroid()));
  for (const auto& pl : hs.planes) EXPECT_GT(pl.eval(poly.centroid()), 0.0);
  const auto rec = oracle::enumerate_vertices(hs);
  ASSERT_EQ(rec.size(), poly.vertices.size());
  for (const auto& v : poly.vertices) {
    const bool found = std::any_of(rec.begin(), rec.end(), [&](const Point2& r) {
      return std::abs(r.h - v.h) <= 1e-9 && std::abs(r.d - v.d) <= 1e-9;
    });
    EXPECT_TRUE(found);
    int tight = 0;
    for (const auto& pl : hs.planes) tight += std::abs(pl.eval(v)) <= 1e-9;
    EXPECT_EQ(tight, 2);
  }
}

TEST(ReduceInward, ContainedInOriginalAndCapped) {
  rng::Stream s(4, 0);
  std::vector<Point2> pts;
  for (int i = 0; i < 2000; ++i) {
    const double a = s.uniform(0, 6.283185307179586), r = std::sqrt(s.uniform());
    pts.push_back({r * std::cos(a), r * std::sin(a)});
  }
  const auto hull = quickhull2d(pts);
  ASSERT_GT(hull.vertices.size(), 12u);
  const auto red = reduce_inward(hull, 12);
  EXPECT_EQ(red.vertices.size(), 12u);
  const auto full = polygon_to_halfspaces(hull);
  for (const auto& v : red.vertices)
    for (const auto& pl : full.planes) EXPECT_GE(pl.eval(v), -1e-12);
  EXPECT_GT(red.signed_area(), 0.9 * hull.signed_area());
  EXPECT_EQ(reduce_inward(hull, 0).vertices.size(), hull.vertices.size());
}

TEST(ChaBuild, ConservativeOnTestSet) {
  const auto sys = desk_system();
  const auto cfg = desk_config();
  const auto hs = build_nadir_halfspaces(sys, cfg);
  EXPECT_LE(hs.size(), 12u);
  EXPECT_GE(hs.size(), 3u);
  const auto rep = classification_error(
      hs, [&](const Point2& p) { return sys.feasible(p); }, cfg.h_bounds, cfg.d_bounds, 10000, 999);
  EXPECT_EQ(rep.false_safe, 0u);
  EXPECT_LT(rep.error_rate, 0.01);
}

TEST(ChaBuild, VacuousLimitCoversBox) {
  auto sys = desk_system();
  sys.limit = std::numeric_limits<double>::infinity();
  const auto cfg = desk_config(20000);
  const auto hs = build_nadir_halfspaces(sys, cfg);
  const auto rep = classification_error(
      hs, [](const Point2&) { return true; }, cfg.h_bounds, cfg.d_bounds, 10000, 5);
  EXPECT_EQ(rep.false_safe, 0u);
  EXPECT_LT(rep.error_rate, 0.01);
}

TEST(ChaBuild, DeterministicAndThreadIndependent) {
  const auto sys = desk_system();
  auto cfg = desk_config(20000);
  const auto a = build_nadir_halfspaces(sys, cfg);
  cfg.threads = 3;
  const auto b = build_nadir_halfspaces(sys, cfg);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.planes[i].w_h, b.planes[i].w_h);
    EXPECT_EQ(a.planes[i].w_d, b.planes[i].w_d);
    EXPECT_EQ(a.planes[i].b, b.planes[i].b);
  }
}

TEST(ChaBuild, HullVerticesAreTrainingSamples) {
  // Every emitted vertex is one of the feasible samples, so dropping it loses that sample.
  const auto sys = desk_system();
  const auto cfg = desk_config(5000);
  const auto pts = sample_feasible(cfg, sys);
  const auto poly = reduce_inward(quickhull2d(pts), cfg.max_hyperplanes);
  for (const auto& v : poly.vertices) EXPECT_NE(std::find(pts.begin(), pts.end(), v), pts.end());
}

TEST(ChaBuild, SamplesOutsideRegionFailExactNadir) {
  const auto sys = desk_system();
  const auto cfg = desk_config();
  const auto hs = build_nadir_halfspaces(sys, cfg);
  rng::Stream s(17, 0);
  for (int i = 0; i < 2000; ++i) {
    const Point2 p{s.uniform(cfg.h_bounds.lo, cfg.h_bounds.hi), s.uniform(cfg.d_bounds.lo, cfg.d_bounds.hi)};
    if (classify(hs, p)) {
      const auto m = sfr::metrics(sys.at(p), sys.disturbance, sys.nominal);
      EXPECT_TRUE(m.max_deviation <= sys.limit);
    }
  }
}

TEST(ChaCache, ReusesSets) {
  HalfspaceCache cache;
  const auto sys = desk_system();
  const auto cfg = desk_config(5000);
  const auto a = cache.get(sys, cfg);
  const auto b = cache.get(sys, cfg);
  EXPECT_EQ(a.get(), b.get());
  auto other = sys;
  other.disturbance = 0.12;
  cache.get(other, cfg);
  EXPECT_EQ(cache.size(), 2u);
}
