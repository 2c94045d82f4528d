#include "splatcone/kd_tree.hpp"

#include <algorithm>
#include <numeric>

namespace splatcone {

KdTree::KdTree(std::vector<Vec3> points, std::size_t leaf_size)
    : points_(std::move(points)), leaf_size_(std::max<std::size_t>(leaf_size, 1)) {
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0u);
  if (!points_.empty()) {
    nodes_.reserve(2 * points_.size() / leaf_size_ + 1);
    build(0, static_cast<std::uint32_t>(points_.size()));
  }
}

std::int32_t KdTree::build(std::uint32_t begin, std::uint32_t end) {
  Node node;
  node.begin = begin;
  node.end = end;
  node.lo = points_[order_[begin]];
  node.hi = node.lo;
  for (std::uint32_t i = begin + 1; i < end; ++i) {
    node.lo = node.lo.cwiseMin(points_[order_[i]]);
    node.hi = node.hi.cwiseMax(points_[order_[i]]);
  }
  const auto id = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back(node);
  if (end - begin <= leaf_size_) return id;

  Eigen::Index axis = 0;
  (node.hi - node.lo).maxCoeff(&axis);
  const std::uint32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid,
                   order_.begin() + end,
                   [this, axis](std::uint32_t a, std::uint32_t b) {
                     return points_[a][axis] < points_[b][axis];
                   });
  const std::int32_t left = build(begin, mid);
  const std::int32_t right = build(mid, end);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void KdTree::radius_query(const Vec3& q, double radius,
                          std::vector<std::size_t>& out) const {
  if (nodes_.empty() || !(radius >= 0.0)) return;
  const double r2 = radius * radius;
  std::int32_t stack[128];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& node = nodes_[stack[--top]];
    // Squared distance from q to the node box.
    const Vec3 excess =
        (node.lo - q).cwiseMax(Vec3::Zero()) + (q - node.hi).cwiseMax(Vec3::Zero());
    if (excess.squaredNorm() > r2) continue;
    if (node.left < 0) {
      for (std::uint32_t i = node.begin; i < node.end; ++i) {
        const std::uint32_t idx = order_[i];
        if ((points_[idx] - q).squaredNorm() <= r2) out.push_back(idx);
      }
      continue;
    }
    stack[top++] = node.left;
    stack[top++] = node.right;
  }
}

}  // namespace splatcone
