#include "agriscan/bpa.hpp"

#include "agriscan/cloud_ops.hpp"
#include "agriscan/kdtree.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <optional>
#include <unordered_map>

namespace agriscan {

namespace {

enum class EdgeState { Front, Border, Inner };

struct Edge {
  int a = -1;  // directed a -> b as it appears in its first triangle
  int b = -1;
  int opposite = -1;
  Vec3 center = Vec3::Zero();
  int triangles = 0;
  EdgeState state = EdgeState::Front;
};

std::uint64_t edge_key(int u, int v) {
  const auto lo = static_cast<std::uint64_t>(std::min(u, v));
  const auto hi = static_cast<std::uint64_t>(std::max(u, v));
  return (lo << 32) | hi;
}

class Pivoter {
 public:
  Pivoter(const PointCloud& cloud, double max_radius) : pts_(cloud.points), nrm_(cloud.normals), tree_(pts_) {
    (void)max_radius;
    vertex_edges_.resize(pts_.size());
  }

  void run(double radius) {
    r_ = radius;
    // Reactivate border edges whose triangle admits a ball of the new radius.
    for (auto& [key, e] : edges_) {
      if (e.state != EdgeState::Border) continue;
      const auto c = ball_center(e.a, e.b, e.opposite);
      if (!c) continue;
      e.center = *c;
      e.state = EdgeState::Front;
      front_.push_back(key);
    }
    expand_front();
    for (int v = 0; v < static_cast<int>(pts_.size()); ++v) {
      if (!vertex_edges_[v].empty()) continue;
      if (try_seed(v)) {
        ++stats.seeds;
        expand_front();
      }
    }
  }

  TriangleMesh mesh() const {
    std::vector<Vec3> v(pts_.begin(), pts_.end());
    return TriangleMesh::build(std::move(v), triangles_);
  }

  BpaStats stats;

  std::size_t border_count() const {
    std::size_t n = 0;
    for (const auto& [key, e] : edges_) n += e.state != EdgeState::Inner ? 1 : 0;
    return n;
  }

 private:
  // Center of the ball of radius r_ touching the CCW triangle (i, j, k) on the
  // side of its face normal, if the triangle agrees with the point normals.
  std::optional<Vec3> ball_center(int i, int j, int k) const {
    const Vec3& p0 = pts_[static_cast<std::size_t>(i)];
    const Vec3& p1 = pts_[static_cast<std::size_t>(j)];
    const Vec3& p2 = pts_[static_cast<std::size_t>(k)];
    const Vec3 e1 = p1 - p0;
    const Vec3 e2 = p2 - p0;
    const Vec3 cr = e1.cross(e2);
    const double cr2 = cr.squaredNorm();
    if (cr2 <= 1e-30) return std::nullopt;
    const Vec3 face = cr / std::sqrt(cr2);
    const Vec3 ns = nrm_[static_cast<std::size_t>(i)] + nrm_[static_cast<std::size_t>(j)] +
                    nrm_[static_cast<std::size_t>(k)];
    if (face.dot(ns) <= 0.0) return std::nullopt;
    // Circumcenter relative to p0.
    const Vec3 rel = (e1.squaredNorm() * e2.cross(cr) + e2.squaredNorm() * cr.cross(e1)) / (2.0 * cr2);
    const double h2 = r_ * r_ - rel.squaredNorm();
    if (h2 < 0.0) return std::nullopt;
    return Vec3(p0 + rel + std::sqrt(h2) * face);
  }

  bool ball_empty(const Vec3& center, int i, int j, int k) const {
    std::vector<int> inside;
    tree_.radius_search_unsorted(center, r_ * (1.0 - 1e-7), inside);
    for (int q : inside) {
      if (q != i && q != j && q != k) return false;
    }
    return true;
  }

  Edge* find_edge(int u, int v) {
    auto it = edges_.find(edge_key(u, v));
    return it == edges_.end() ? nullptr : &it->second;
  }

  bool vertex_is_inner(int v) const {
    const auto& list = vertex_edges_[static_cast<std::size_t>(v)];
    if (list.empty()) return false;
    for (std::uint64_t key : list) {
      if (edges_.at(key).triangles < 2) return false;
    }
    return true;
  }

  // New triangle (i, j, k) may use the directed edges i->j, j->k, k->i only if
  // existing ones run the opposite way and still have a free side.
  bool edge_compatible(int u, int v) {
    const Edge* e = find_edge(u, v);
    if (!e) return true;
    return e->triangles == 1 && e->a == v && e->b == u;
  }

  void add_triangle(int i, int j, int k, const Vec3& center) {
    triangles_.emplace_back(i, j, k);
    ++stats.triangles;
    const int tri[3] = {i, j, k};
    for (int s = 0; s < 3; ++s) {
      const int u = tri[s];
      const int v = tri[(s + 1) % 3];
      const int w = tri[(s + 2) % 3];
      const std::uint64_t key = edge_key(u, v);
      auto it = edges_.find(key);
      if (it == edges_.end()) {
        Edge e;
        e.a = u;
        e.b = v;
        e.opposite = w;
        e.center = center;
        e.triangles = 1;
        e.state = EdgeState::Front;
        edges_.emplace(key, e);
        vertex_edges_[static_cast<std::size_t>(u)].push_back(key);
        vertex_edges_[static_cast<std::size_t>(v)].push_back(key);
        front_.push_back(key);
      } else {
        it->second.triangles = 2;
        it->second.state = EdgeState::Inner;
      }
    }
  }

  bool try_seed(int v) {
    const Vec3& p = pts_[static_cast<std::size_t>(v)];
    std::vector<int> nb = tree_.radius_search(p, 2.0 * r_);
    nb.erase(std::remove(nb.begin(), nb.end(), v), nb.end());
    for (std::size_t x = 0; x < nb.size(); ++x) {
      const int a = nb[x];
      if (!vertex_edges_[static_cast<std::size_t>(a)].empty()) continue;
      for (std::size_t y = x + 1; y < nb.size(); ++y) {
        const int b = nb[y];
        if (!vertex_edges_[static_cast<std::size_t>(b)].empty()) continue;
        for (const auto& [j, k] : {std::pair{a, b}, std::pair{b, a}}) {
          const auto c = ball_center(v, j, k);
          if (!c || !ball_empty(*c, v, j, k)) continue;
          add_triangle(v, j, k, *c);
          return true;
        }
      }
    }
    return false;
  }

  void expand_front() {
    while (!front_.empty()) {
      const std::uint64_t key = front_.front();
      front_.pop_front();
      auto it = edges_.find(key);
      if (it == edges_.end() || it->second.state != EdgeState::Front) continue;
      pivot(it->second);
    }
  }

  void pivot(Edge& e) {
    const int i = e.a;
    const int j = e.b;
    const Vec3& pi = pts_[static_cast<std::size_t>(i)];
    const Vec3& pj = pts_[static_cast<std::size_t>(j)];
    const Vec3 m = 0.5 * (pi + pj);
    const Vec3 axis = (pj - pi).normalized();
    Vec3 u0 = e.center - m;
    u0 -= axis * axis.dot(u0);

    std::vector<int> nb;
    tree_.radius_search_unsorted(m, 2.0 * r_, nb);
    std::sort(nb.begin(), nb.end());
    int best = -1;
    double best_angle = 0.0;
    Vec3 best_center;
    for (int k : nb) {
      if (k == i || k == j || k == e.opposite) continue;
      // The new triangle crosses the edge the other way: (j, i, k).
      const auto c = ball_center(j, i, k);
      if (!c) continue;
      Vec3 u = *c - m;
      u -= axis * axis.dot(u);
      double angle = std::atan2(u0.cross(u).dot(axis), u0.dot(u));
      if (angle < 0.0) angle = angle > -1e-9 ? 0.0 : angle + 2.0 * kPi;
      if (best < 0 || angle < best_angle) {
        best = k;
        best_angle = angle;
        best_center = *c;
      }
    }
    if (best < 0 || !ball_empty(best_center, i, j, best) || vertex_is_inner(best) || !edge_compatible(i, best) ||
        !edge_compatible(best, j)) {
      e.state = EdgeState::Border;
      return;
    }
    add_triangle(j, i, best, best_center);
  }

  const std::vector<Vec3>& pts_;
  const std::vector<Vec3>& nrm_;
  KdTree tree_;
  double r_ = 0.0;
  std::unordered_map<std::uint64_t, Edge> edges_;
  std::vector<std::vector<std::uint64_t>> vertex_edges_;
  std::deque<std::uint64_t> front_;
  std::vector<Eigen::Vector3i> triangles_;
};

}  // namespace

TriangleMesh reconstruct_surface_bpa(const PointCloud& cloud, const std::vector<double>& radii, BpaStats* stats) {
  if (cloud.empty()) fail(ErrorCode::EmptyCloud, "ball pivoting needs points");
  if (!cloud.has_normals()) fail(ErrorCode::NoNormals, "ball pivoting needs per-point normals");
  if (radii.empty()) fail(ErrorCode::InvalidParams, "no ball radii");
  for (std::size_t k = 0; k < radii.size(); ++k) {
    if (!(radii[k] > 0.0) || (k > 0 && radii[k] <= radii[k - 1])) {
      fail(ErrorCode::InvalidParams, "ball radii must be positive and ascending");
    }
  }
  Pivoter pivoter(cloud, radii.back());
  for (double r : radii) pivoter.run(r);
  if (stats) {
    *stats = pivoter.stats;
    stats->border_edges = pivoter.border_count();
  }
  return pivoter.mesh();
}

std::vector<double> default_bpa_radii(const PointCloud& cloud) {
  const KdTree tree(cloud.points);
  const double s = median_nn_spacing(cloud.points, tree);
  if (!(s > 0.0)) fail(ErrorCode::DegenerateCloud, "zero nearest-neighbor spacing");
  return {2.0 * s, 4.0 * s, 8.0 * s};
}

double leaf_area(const TriangleMesh& mesh) { return mesh.area() * 1e4; }

}  // namespace agriscan
