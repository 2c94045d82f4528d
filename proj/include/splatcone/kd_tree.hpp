#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "splatcone/types.hpp"

namespace splatcone {

// Static 3-d tree over a point set with exact radius queries.
class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(std::vector<Vec3> points, std::size_t leaf_size = 16);

  std::size_t size() const { return points_.size(); }

  // Indices i with |points[i] - q| <= radius, in no particular order.
  void radius_query(const Vec3& q, double radius,
                    std::vector<std::size_t>& out) const;

 private:
  struct Node {
    Vec3 lo;
    Vec3 hi;
    std::uint32_t begin = 0;
    std::uint32_t end = 0;
    std::int32_t left = -1;
    std::int32_t right = -1;
  };

  std::int32_t build(std::uint32_t begin, std::uint32_t end);

  std::vector<Vec3> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
  std::size_t leaf_size_ = 16;
};

}  // namespace splatcone
