#pragma once

#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

namespace gpm {

/// A planar point with a stable index into its owning set.
struct Point {
    double x = 0.0;
    double y = 0.0;
    int id = -1;
};

/// Cost parameters: edge cost is ||a-b||_p ^ q.
struct CostParams {
    int p = 2;
    int q = 1;
};

inline void validate(const CostParams& cp) {
    if (cp.p < 1 || cp.q < 1) throw std::invalid_argument("cost params require p >= 1, q >= 1");
}

/// |dx|^p + |dy|^p. Comparing these values compares L_p distances.
double lp_power_sum(const Point& a, const Point& b, int p);

/// (|dx|^p + |dy|^p)^(q/p). Exact when q is a multiple of p or p == 2q.
double cost(const Point& a, const Point& b, const CostParams& params);

/// Maps an L_p power sum to the final cost value.
double power_sum_to_cost(double power_sum, const CostParams& params);

struct ForestEdge {
    int u = -1;   // global id, A ids first then B ids
    int v = -1;   // u < v
    double cost = 0.0;
};

/// Minimum spanning tree of the complete graph over `points` under the cost
/// function. Computed under the L_p distance (x -> x^q is monotone) with a
/// kd-tree Boruvka; edge costs are re-evaluated under c afterwards. Edges are
/// returned sorted by (L_p distance, u, v), which is also nondecreasing cost.
std::vector<ForestEdge> euclidean_mst(const std::vector<Point>& points, const CostParams& params);

/// Union-find over A u B tracking per-component |A n C| and |B n C| while MST
/// edges are swept in nondecreasing order.
class SpanningForestState {
public:
    SpanningForestState(const std::vector<Point>& a, const std::vector<Point>& b,
                        const CostParams& params);

    const std::vector<ForestEdge>& edges() const { return edges_; }

    /// Adds edge i (0-based) of the sorted list; returns the new value of
    /// sum_C min(|A n C|, |B n C|).
    int add_edge(int i);

    int matchable_pairs() const { return matchable_; }

    /// Pairs of (a index, b index) forming an intra-cluster matching of size k
    /// in the current forest. Requires matchable_pairs() >= k.
    std::vector<std::pair<int, int>> intra_cluster_matching(int k) const;

private:
    int find(int v) const;

    int r_ = 0, n_ = 0;
    std::vector<ForestEdge> edges_;
    mutable std::vector<int> parent_;
    std::vector<int> count_a_, count_b_;
    int matchable_ = 0;
    int next_edge_ = 0;
};

/// Lemma-4 starting scale: the smallest 1-based index i such that T_i admits
/// an intra-cluster matching of size k, plus c(e_{i*}).
struct StartingScale {
    int i_star = 0;
    double e_cost = 0.0;
};

StartingScale starting_scale_index(const std::vector<Point>& a, const std::vector<Point>& b,
                                   int k, const CostParams& params);

}  // namespace gpm
