#pragma once

// Convex-hull approximation of the frequency-nadir constraint in the (H, D) plane.
//
// Pipeline: uniform Monte Carlo samples of (H, D) in a box -> keep the ones whose exact
// nadir meets the limit -> 2-D Quickhull -> optional inward vertex reduction -> one
// closed half-space w_h H + w_d D + b >= 0 per polygon edge.
//
// Every stage only ever shrinks the region spanned by feasible samples, and the nadir
// is convex in (H, D), so a point accepted by the half-spaces is nadir-feasible.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "fcsd/error.hpp"
#include "fcsd/parallel.hpp"
#include "fcsd/rng.hpp"
#include "fcsd/sfr.hpp"

namespace fcsd::cha {

struct Point2 {
  double h = 0.0;  // aggregate inertia, s
  double d = 0.0;  // aggregate damping, p.u.
  friend bool operator==(const Point2&, const Point2&) = default;
};

struct ConvexPolygon {
  std::vector<Point2> vertices;  // counter-clockwise
  bool degenerate = false;       // fewer than 3 extreme points (all equal or collinear)

  double signed_area() const {
    double a = 0.0;
    const std::size_t n = vertices.size();
    for (std::size_t i = 0; i < n; ++i) {
      const auto& p = vertices[i];
      const auto& q = vertices[(i + 1) % n];
      a += p.h * q.d - q.h * p.d;
    }
    return 0.5 * a;
  }

  // Area centroid; vertex mean for degenerate polygons.
  Point2 centroid() const {
    const double area = signed_area();
    Point2 c{};
    if (vertices.empty()) return c;
    if (degenerate || std::abs(area) == 0.0) {
      for (const auto& v : vertices) {
        c.h += v.h;
        c.d += v.d;
      }
      c.h /= static_cast<double>(vertices.size());
      c.d /= static_cast<double>(vertices.size());
      return c;
    }
    const std::size_t n = vertices.size();
    for (std::size_t i = 0; i < n; ++i) {
      const auto& p = vertices[i];
      const auto& q = vertices[(i + 1) % n];
      const double cr = p.h * q.d - q.h * p.d;
      c.h += (p.h + q.h) * cr;
      c.d += (p.d + q.d) * cr;
    }
    c.h /= 6.0 * area;
    c.d /= 6.0 * area;
    return c;
  }
};

struct Halfspace {
  double w_h = 0.0;
  double w_d = 0.0;
  double b = 0.0;
  double eval(const Point2& p) const { return w_h * p.h + w_d * p.d + b; }
};

struct BuildInfo {
  std::size_t n_samples = 0;
  std::size_t n_feasible = 0;
  std::size_t hull_vertices = 0;  // before vertex reduction
  double build_seconds = 0.0;
};

struct HalfspaceSet {
  std::vector<Halfspace> planes;
  BuildInfo info{};
  std::size_t size() const { return planes.size(); }
};

struct Bounds {
  double lo = 0.0;
  double hi = 0.0;
};

struct ChaConfig {
  std::size_t n_samples = 50000;
  Bounds h_bounds{};
  Bounds d_bounds{};
  std::uint64_t seed = 1;
  // Cap on emitted half-spaces; the hull is shrunk inward (never outward) until it has at
  // most this many edges. 0 keeps the exact sample hull.
  std::size_t max_hyperplanes = 12;
  unsigned threads = 1;

  void validate() const {
    if (n_samples < 100) throw ValidationError("CHA needs at least 100 samples");
    if (!(h_bounds.lo <= h_bounds.hi) || !(d_bounds.lo <= d_bounds.hi))
      throw ValidationError("CHA sampling bounds must be ordered");
    if (!std::isfinite(h_bounds.lo) || !std::isfinite(h_bounds.hi) || !std::isfinite(d_bounds.lo) ||
        !std::isfinite(d_bounds.hi))
      throw ValidationError("CHA sampling bounds must be finite");
    if (max_hyperplanes != 0 && max_hyperplanes < 3)
      throw ValidationError("CHA hyperplane cap must be 0 or at least 3");
  }
};

// Frequency model with (H, D) left free, plus the event and the limit being enforced.
struct NadirSystem {
  double droop = 0.0;
  double turbine_fraction = 0.0;
  double time_constant = 0.0;
  double disturbance = 0.0;  // p.u.
  double nominal = 50.0;     // Hz
  double limit = 0.5;        // Hz; +inf accepts everything

  sfr::AggregatedSfrParams at(const Point2& p) const {
    return {p.h, p.d, droop, turbine_fraction, time_constant};
  }
  double nadir(const Point2& p) const { return sfr::delta_f_nadir(at(p), disturbance, nominal).max_deviation; }
  bool feasible(const Point2& p) const { return nadir(p) <= limit; }
};

namespace detail {

inline Point2 sample_point(const ChaConfig& cfg, std::uint64_t index) {
  rng::Stream s(cfg.seed, index);
  const double h = s.uniform(cfg.h_bounds.lo, cfg.h_bounds.hi);
  const double d = s.uniform(cfg.d_bounds.lo, cfg.d_bounds.hi);
  return {h, d};
}

inline double cross(const Point2& o, const Point2& a, const Point2& b) {
  return (a.h - o.h) * (b.d - o.d) - (a.d - o.d) * (b.h - o.h);
}

// Appends the hull vertices strictly between p and q (exclusive) in traversal order.
// `pts` all lie strictly to the right of the directed line p -> q.
inline void find_hull(const Point2& p, const Point2& q, std::vector<Point2>& pts, std::vector<Point2>& out,
                      double eps) {
  if (pts.empty()) return;
  const double len = std::hypot(q.h - p.h, q.d - p.d);
  std::size_t far = 0;
  double best = -1.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double dist = -cross(p, q, pts[i]) / len;
    if (dist > best) {
      best = dist;
      far = i;
    }
  }
  const Point2 c = pts[far];
  std::vector<Point2> right_pc, right_cq;
  const double len_pc = std::hypot(c.h - p.h, c.d - p.d);
  const double len_cq = std::hypot(q.h - c.h, q.d - c.d);
  for (const auto& r : pts) {
    if (-cross(p, c, r) / len_pc > eps)
      right_pc.push_back(r);
    else if (-cross(c, q, r) / len_cq > eps)
      right_cq.push_back(r);
  }
  pts.clear();
  pts.shrink_to_fit();
  find_hull(p, c, right_pc, out, eps);
  out.push_back(c);
  find_hull(c, q, right_cq, out, eps);
}

}  // namespace detail

// Returns the feasible samples in index order. Throws EmptyRegionError when none is feasible.
inline std::vector<Point2> sample_feasible(const ChaConfig& cfg, const NadirSystem& sys) {
  cfg.validate();
  std::vector<unsigned char> keep(cfg.n_samples, 0);
  std::vector<Point2> all(cfg.n_samples);
  parallel_for(cfg.n_samples, cfg.threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      all[i] = detail::sample_point(cfg, i);
      keep[i] = sys.feasible(all[i]) ? 1 : 0;
    }
  });
  std::vector<Point2> out;
  for (std::size_t i = 0; i < all.size(); ++i)
    if (keep[i]) out.push_back(all[i]);
  if (out.empty())
    throw EmptyRegionError("no sampled (H, D) point satisfies the nadir limit of " + std::to_string(sys.limit) +
                           " Hz for disturbance " + std::to_string(sys.disturbance) + " p.u.");
  return out;
}

// 2-D Quickhull. Points within 1e-12 (scaled by coordinate magnitude) of a hull edge are
// not extreme, so the result has no collinear consecutive vertices.
inline ConvexPolygon quickhull2d(std::span<const Point2> points) {
  if (points.empty()) throw ValidationError("quickhull needs at least one point");
  double scale = 1.0;
  for (const auto& p : points) {
    if (!std::isfinite(p.h) || !std::isfinite(p.d)) throw ValidationError("quickhull input must be finite");
    scale = std::max({scale, std::abs(p.h), std::abs(p.d)});
  }
  const double eps = 1e-12 * scale;

  auto lex_less = [](const Point2& a, const Point2& b) { return a.h < b.h || (a.h == b.h && a.d < b.d); };
  const Point2 a = *std::min_element(points.begin(), points.end(), lex_less);
  const Point2 b = *std::max_element(points.begin(), points.end(), lex_less);

  ConvexPolygon poly;
  if (a == b) {
    poly.vertices = {a};
    poly.degenerate = true;
    return poly;
  }
  const double len = std::hypot(b.h - a.h, b.d - a.d);
  std::vector<Point2> below, above;
  for (const auto& p : points) {
    const double dist = detail::cross(a, b, p) / len;
    if (dist < -eps)
      below.push_back(p);
    else if (dist > eps)
      above.push_back(p);
  }
  if (below.empty() && above.empty()) {
    poly.vertices = {a, b};
    poly.degenerate = true;
    return poly;
  }
  poly.vertices.push_back(a);
  detail::find_hull(a, b, below, poly.vertices, eps);
  poly.vertices.push_back(b);
  detail::find_hull(b, a, above, poly.vertices, eps);
  poly.degenerate = poly.vertices.size() < 3;
  return poly;
}

// Shrinks a convex polygon to at most `max_vertices` vertices by repeatedly dropping the
// vertex whose removal loses the least area. The result is contained in the input.
inline ConvexPolygon reduce_inward(ConvexPolygon poly, std::size_t max_vertices) {
  if (poly.degenerate || max_vertices == 0) return poly;
  max_vertices = std::max<std::size_t>(max_vertices, 3);
  auto& v = poly.vertices;
  auto loss = [&](std::size_t i) {
    const std::size_t n = v.size();
    return std::abs(detail::cross(v[(i + n - 1) % n], v[i], v[(i + 1) % n]));
  };
  while (v.size() > max_vertices) {
    std::size_t best = 0;
    double best_loss = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double l = loss(i);
      if (l < best_loss) {
        best_loss = l;
        best = i;
      }
    }
    v.erase(v.begin() + static_cast<std::ptrdiff_t>(best));
  }
  return poly;
}

// One inward-facing unit-normal half-space per edge.
inline HalfspaceSet polygon_to_halfspaces(const ConvexPolygon& poly) {
  if (poly.degenerate || poly.vertices.size() < 3)
    throw ValidationError("cannot build half-spaces from a degenerate polygon");
  HalfspaceSet hs;
  const std::size_t n = poly.vertices.size();
  hs.planes.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = poly.vertices[i];
    const auto& q = poly.vertices[(i + 1) % n];
    // Interior is to the left of p -> q for a CCW polygon; left normal is (-dy, dx).
    double wh = -(q.d - p.d);
    double wd = q.h - p.h;
    const double norm = std::hypot(wh, wd);
    wh /= norm;
    wd /= norm;
    hs.planes.push_back({wh, wd, -(wh * p.h + wd * p.d)});
  }
  return hs;
}

inline bool classify(const HalfspaceSet& hs, const Point2& pt) {
  return std::all_of(hs.planes.begin(), hs.planes.end(), [&](const Halfspace& h) { return h.eval(pt) >= 0.0; });
}

struct ClassificationReport {
  std::size_t n_test = 0;
  std::size_t misclassified = 0;
  std::size_t false_safe = 0;    // accepted by the half-spaces, infeasible in truth
  std::size_t false_unsafe = 0;  // rejected by the half-spaces, feasible in truth
  double error_rate = 0.0;
};

// Test points are uniform in (h_bounds, d_bounds), drawn from streams (seed, i).
inline ClassificationReport classification_error(const HalfspaceSet& hs,
                                                 const std::function<bool(const Point2&)>& exact, Bounds h_bounds,
                                                 Bounds d_bounds, std::size_t n_test, std::uint64_t seed) {
  ChaConfig box;
  box.h_bounds = h_bounds;
  box.d_bounds = d_bounds;
  box.seed = seed;
  ClassificationReport r;
  r.n_test = n_test;
  for (std::size_t i = 0; i < n_test; ++i) {
    const Point2 p = detail::sample_point(box, i);
    const bool predicted = classify(hs, p);
    const bool truth = exact(p);
    if (predicted && !truth) ++r.false_safe;
    if (!predicted && truth) ++r.false_unsafe;
  }
  r.misclassified = r.false_safe + r.false_unsafe;
  r.error_rate = n_test ? static_cast<double>(r.misclassified) / static_cast<double>(n_test) : 0.0;
  return r;
}

inline HalfspaceSet build_nadir_halfspaces(const NadirSystem& sys, const ChaConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  const auto feasible = sample_feasible(cfg, sys);
  const ConvexPolygon hull = quickhull2d(feasible);
  if (hull.degenerate)
    throw EmptyRegionError("feasible nadir samples are collinear; the (H, D) region has no interior");
  HalfspaceSet hs = polygon_to_halfspaces(reduce_inward(hull, cfg.max_hyperplanes));
  hs.info.n_samples = cfg.n_samples;
  hs.info.n_feasible = feasible.size();
  hs.info.hull_vertices = hull.vertices.size();
  hs.info.build_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return hs;
}

// Thread-safe memo of half-space sets keyed on everything that shapes them.
class HalfspaceCache {
 public:
  std::shared_ptr<const HalfspaceSet> get(const NadirSystem& sys, const ChaConfig& cfg) {
    const Key key{sys.droop,      sys.turbine_fraction, sys.time_constant, sys.disturbance, sys.nominal,
                  sys.limit,      cfg.h_bounds.lo,      cfg.h_bounds.hi,   cfg.d_bounds.lo, cfg.d_bounds.hi,
                  cfg.n_samples,  cfg.seed,             cfg.max_hyperplanes};
    {
      std::lock_guard lock(mu_);
      if (auto it = map_.find(key); it != map_.end()) return it->second;
    }
    auto built = std::make_shared<const HalfspaceSet>(build_nadir_halfspaces(sys, cfg));
    std::lock_guard lock(mu_);
    return map_.emplace(key, std::move(built)).first->second;
  }
  std::size_t size() const {
    std::lock_guard lock(mu_);
    return map_.size();
  }

 private:
  using Key = std::tuple<double, double, double, double, double, double, double, double, double, double,
                         std::size_t, std::uint64_t, std::size_t>;
  mutable std::mutex mu_;
  std::map<Key, std::shared_ptr<const HalfspaceSet>> map_;
};

}  // namespace fcsd::cha
