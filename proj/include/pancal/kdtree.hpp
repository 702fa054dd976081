#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <limits>
#include <numeric>
#include <queue>
#include <stdexcept>
#include <vector>

namespace pancal {

/// Exact nearest-neighbor kd-tree over fixed-dimension points. Construction
/// and queries are fully deterministic (ties broken by point index).
template <int Dim>
class KdTree {
 public:
  using Point = Eigen::Matrix<double, Dim, 1>;

  explicit KdTree(std::vector<Point> points) : points_(std::move(points)) {
    if (points_.empty()) throw std::domain_error("kd-tree requires at least one point");
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), 0);
    nodes_.reserve(points_.size() * 2);
    root_ = build(0, points_.size());
  }

  size_t size() const { return points_.size(); }
  const Point& point(size_t i) const { return points_[i]; }

  struct Hit {
    size_t index;
    double sq_dist;
  };

  Hit nearest(const Point& q) const {
    Hit best{size_t(-1), std::numeric_limits<double>::infinity()};
    search(root_, q, best);
    return best;
  }

  /// k nearest neighbors sorted by (distance, index).
  std::vector<Hit> knn(const Point& q, size_t k) const {
    k = std::min(k, points_.size());
    KnnQueue heap;
    knn_search(root_, q, k, heap);
    std::vector<Hit> out(heap.size());
    for (size_t i = out.size(); i-- > 0;) {
      out[i] = heap.top();
      heap.pop();
    }
    return out;
  }

  /// Indices of all points within `radius`, sorted by index.
  std::vector<size_t> radius_search(const Point& q, double radius) const {
    std::vector<size_t> out;
    radius_collect(root_, q, radius * radius, out);
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  struct Node {
    int axis = -1;       // -1 marks a leaf
    double split = 0.0;
    int left = -1, right = -1;
    uint32_t begin = 0, end = 0;  // leaf range in order_
  };

  struct HitGreater {
    bool operator()(const Hit& a, const Hit& b) const {
      if (a.sq_dist != b.sq_dist) return a.sq_dist < b.sq_dist;
      return a.index < b.index;  // max-heap keeps the worst on top
    }
  };
  using KnnQueue = std::priority_queue<Hit, std::vector<Hit>, HitGreater>;

  static constexpr size_t kLeafSize = 8;

  int build(size_t begin, size_t end) {
    Node node;
    if (end - begin <= kLeafSize) {
      node.begin = static_cast<uint32_t>(begin);
      node.end = static_cast<uint32_t>(end);
      nodes_.push_back(node);
      return static_cast<int>(nodes_.size() - 1);
    }
    Point lo = points_[order_[begin]], hi = lo;
    for (size_t i = begin + 1; i < end; ++i) {
      lo = lo.cwiseMin(points_[order_[i]]);
      hi = hi.cwiseMax(points_[order_[i]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    const size_t mid = (begin + end) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](size_t a, size_t b) {
                       const double pa = points_[a][axis], pb = points_[b][axis];
                       if (pa != pb) return pa < pb;
                       return a < b;
                     });
    node.axis = axis;
    node.split = points_[order_[mid]][axis];
    nodes_.push_back(node);
    const int self = static_cast<int>(nodes_.size() - 1);
    const int left = build(begin, mid);
    const int right = build(mid, end);
    nodes_[self].left = left;
    nodes_[self].right = right;
    return self;
  }

  void scan_leaf(const Node& node, const Point& q, Hit& best) const {
    for (uint32_t i = node.begin; i < node.end; ++i) {
      const size_t idx = order_[i];
      const double d = (points_[idx] - q).squaredNorm();
      if (d < best.sq_dist || (d == best.sq_dist && idx < best.index)) {
        best.sq_dist = d;
        best.index = idx;
      }
    }
  }

  void search(int ni, const Point& q, Hit& best) const {
    const Node& node = nodes_[ni];
    if (node.axis < 0) {
      scan_leaf(node, q, best);
      return;
    }
    const double delta = q[node.axis] - node.split;
    const int near = delta < 0.0 ? node.left : node.right;
    const int far = delta < 0.0 ? node.right : node.left;
    search(near, q, best);
    if (delta * delta <= best.sq_dist) search(far, q, best);
  }

  void knn_search(int ni, const Point& q, size_t k, KnnQueue& heap) const {
    const Node& node = nodes_[ni];
    if (node.axis < 0) {
      for (uint32_t i = node.begin; i < node.end; ++i) {
        const size_t idx = order_[i];
        const double d = (points_[idx] - q).squaredNorm();
        if (heap.size() < k) {
          heap.push({idx, d});
        } else if (HitGreater{}(Hit{idx, d}, heap.top())) {
          heap.pop();
          heap.push({idx, d});
        }
      }
      return;
    }
    const double delta = q[node.axis] - node.split;
    const int near = delta < 0.0 ? node.left : node.right;
    const int far = delta < 0.0 ? node.right : node.left;
    knn_search(near, q, k, heap);
    if (heap.size() < k || delta * delta <= heap.top().sq_dist) knn_search(far, q, k, heap);
  }

  void radius_collect(int ni, const Point& q, double sq_radius, std::vector<size_t>& out) const {
    const Node& node = nodes_[ni];
    if (node.axis < 0) {
      for (uint32_t i = node.begin; i < node.end; ++i) {
        const size_t idx = order_[i];
        if ((points_[idx] - q).squaredNorm() <= sq_radius) out.push_back(idx);
      }
      return;
    }
    const double delta = q[node.axis] - node.split;
    const int near = delta < 0.0 ? node.left : node.right;
    const int far = delta < 0.0 ? node.right : node.left;
    radius_collect(near, q, sq_radius, out);
    if (delta * delta <= sq_radius) radius_collect(far, q, sq_radius, out);
  }

  std::vector<Point> points_;
  std::vector<size_t> order_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

using KdTree2 = KdTree<2>;
using KdTree3 = KdTree<3>;

}  // namespace pancal
