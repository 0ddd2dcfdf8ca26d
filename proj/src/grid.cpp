#include "lunarsfs/grid.hpp"

#include <algorithm>
#include <numeric>

namespace lunarsfs {

double grid_mean(const Grid& g) {
  if (g.empty()) throw std::invalid_argument("grid_mean: empty grid");
  const auto v = g.values();
  return std::accumulate(v.begin(), v.end(), 0.0L) / static_cast<long double>(v.size());
}

double grid_min(const Grid& g) {
  if (g.empty()) throw std::invalid_argument("grid_min: empty grid");
  return *std::ranges::min_element(g.values());
}

double grid_max(const Grid& g) {
  if (g.empty()) throw std::invalid_argument("grid_max: empty grid");
  return *std::ranges::max_element(g.values());
}

}  // namespace lunarsfs
