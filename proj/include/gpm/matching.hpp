#pragma once

#include <utility>
#include <vector>

#include "gpm/geometry.hpp"

namespace gpm {

/// A partial matching: pairs of (a index, b index) plus its cost.
struct Matching {
    std::vector<std::pair<int, int>> pairs;
    double cost = 0.0;
};

/// Canonical cost: pairs sorted by a index, summed in that order. Every
/// solver and oracle reports costs through this so equal pair sets produce
/// bit-identical totals.
double canonical_cost(std::vector<std::pair<int, int>> pairs, const std::vector<Point>& a,
                      const std::vector<Point>& b, const CostParams& params);

/// Structural validity: indices in range, no endpoint reused.
bool valid_matching(const Matching& m, int r, int n);

}  // namespace gpm
