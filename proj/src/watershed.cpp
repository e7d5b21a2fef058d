#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "coda/volume.hpp"

namespace coda {
namespace {

// Union-find whose root is always the smallest id of its set. Maxima are
// numbered in sweep order, so the root is the elder maximum.
class ElderUnionFind {
 public:
  std::int64_t make() {
    parent_.push_back(static_cast<std::int64_t>(parent_.size()));
    return parent_.back();
  }
  std::int64_t find(std::int64_t a) {
    while (parent_[a] != a) {
      parent_[a] = parent_[parent_[a]];
      a = parent_[a];
    }
    return a;
  }
  void unite(std::int64_t a, std::int64_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (b < a) std::swap(a, b);
    parent_[b] = a;
  }
  std::int64_t size() const { return static_cast<std::int64_t>(parent_.size()); }

 private:
  std::vector<std::int64_t> parent_;
};

}  // namespace

LabelGrid persistence_watershed(const ScalarGrid& field, const MaskGrid& foreground, double persistence) {
  require_same_geometry(field, foreground, "persistence_watershed");
  if (persistence < 0) throw Error("persistence_watershed: persistence must be >= 0");

  const Dims d = field.dims();
  const std::int64_t n = field.size();
  LabelGrid out(d, field.spacing(), 0);

  std::vector<std::int64_t> order;
  for (std::int64_t i = 0; i < n; ++i)
    if (foreground[i]) order.push_back(i);
  if (order.empty()) return out;
  std::sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
    return field[a] > field[b] || (field[a] == field[b] && a < b);
  });

  constexpr std::int64_t kNone = -1;
  std::vector<std::int64_t> rank(static_cast<std::size_t>(n), kNone);
  std::vector<std::int64_t> basin(static_cast<std::size_t>(n), kNone);
  std::vector<float> seed_value;
  ElderUnionFind level;
  ElderUnionFind merged;

  std::vector<std::int64_t> roots;
  for (std::int64_t r = 0; r < static_cast<std::int64_t>(order.size()); ++r) {
    const std::int64_t v = order[r];
    const auto [x, y, z] = field.coords(v);
    std::int64_t steepest = kNone;
    roots.clear();
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0 && dz == 0) continue;
          if (!field.inside(x + dx, y + dy, z + dz)) continue;
          const std::int64_t nb = field.index(x + dx, y + dy, z + dz);
          if (rank[nb] == kNone) continue;
          if (steepest == kNone || rank[nb] < rank[steepest]) steepest = nb;
          roots.push_back(level.find(basin[nb]));
        }
    rank[v] = r;
    if (steepest == kNone) {
      basin[v] = level.make();
      merged.make();
      seed_value.push_back(field[v]);
      continue;
    }
    basin[v] = basin[steepest];

    std::sort(roots.begin(), roots.end());
    roots.erase(std::unique(roots.begin(), roots.end()), roots.end());
    const std::int64_t elder = roots.front();
    for (std::size_t k = 1; k < roots.size(); ++k) {
      const double pers = static_cast<double>(seed_value[roots[k]]) - static_cast<double>(field[v]);
      if (pers < persistence || pers <= 0.0) merged.unite(roots[k], elder);
      level.unite(roots[k], elder);
    }
  }

  // Roots of `merged` are the oldest maxima of each label; number them in
  // sweep order.
  std::vector<Label> label_of(static_cast<std::size_t>(merged.size()), 0);
  Label next = 0;
  for (std::int64_t m = 0; m < merged.size(); ++m)
    if (merged.find(m) == m) label_of[m] = ++next;
  for (const std::int64_t v : order) out[v] = label_of[merged.find(basin[v])];
  return out;
}

}  // namespace coda
