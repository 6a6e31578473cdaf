#include "gpm/matching.hpp"

#include <algorithm>

namespace gpm {

double canonical_cost(std::vector<std::pair<int, int>> pairs, const std::vector<Point>& a,
                      const std::vector<Point>& b, const CostParams& params) {
    std::sort(pairs.begin(), pairs.end());
    double total = 0.0;
    for (const auto& [i, j] : pairs) total += cost(a[i], b[j], params);
    return total;
}

bool valid_matching(const Matching& m, int r, int n) {
    std::vector<char> ua(r, 0), ub(n, 0);
    for (const auto& [i, j] : m.pairs) {
        if (i < 0 || i >= r || j < 0 || j >= n) return false;
        if (ua[i] || ub[j]) return false;
        ua[i] = ub[j] = 1;
    }
    return true;
}

}  // namespace gpm
