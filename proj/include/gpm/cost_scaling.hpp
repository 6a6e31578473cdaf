#pragma once

#include <functional>
#include <optional>
#include <set>
#include <vector>

#include "gpm/bcp.hpp"
#include "gpm/flow.hpp"
#include "gpm/geometry.hpp"
#include "gpm/matching.hpp"

namespace gpm {

/// (1+eps)-approximate size-k matching by cost scaling over the unit-capacity
/// network: theta halves from theta_bar to theta_lo; each scale runs
/// Scale-Init then Refine (Hungarian search over alive paths + blocking
/// flow). Potentials are stored as exact integer multiples of the current
/// theta so scale-boundary scans compare exactly.
class ApproxMatcher {
public:
    using i128 = __int128;

    struct Options {
        double epsilon = 0.1;
        /// Invoked after Scale-Init and after Refine of every scale (scan
        /// hooks for tests); the solver state is consistent at those points.
        std::function<void(const ApproxMatcher&, bool after_refine)> on_scale_boundary;
        /// Invoked after every refine iteration (search + blocking flow).
        std::function<void(const ApproxMatcher&)> on_refine_iteration;
    };

    struct ScaleRecord {
        double theta = 0.0;
        int refine_iterations = 0;
        double circulation_cost = 0.0;
    };

    struct Stats {
        int scales = 0;
        long long refine_iterations = 0;
        long long relaxations = 0;
        long long paths_extracted = 0;
        std::vector<ScaleRecord> per_scale;
    };

    ApproxMatcher(std::vector<Point> a, std::vector<Point> b, int k, const CostParams& params,
                  Options opt);

    Matching solve();

    double theta_bar() const { return theta_bar_; }
    double theta_lo() const { return theta_lo_; }
    double e_star_cost() const { return e_star_; }
    const Stats& stats() const { return stats_; }

    // --- inspection hooks for tests -------------------------------------
    double theta() const { return theta_; }
    int r() const { return net_.r; }
    int n() const { return net_.n; }
    int k() const { return net_.k; }
    const Pseudoflow& flow() const { return *f_; }
    bool alive(int node) const { return alive_[node]; }
    /// True potential of a node in cost units; dead nodes are recovered as
    /// pi(s) (dead A) / pi(t) (dead B).
    double potential(int node) const;
    /// Integer potential in units of theta (recovered for dead nodes).
    i128 potential_units(int node) const;
    /// Exhaustive residual-arc scan with recovered potentials: true iff every
    /// residual arc has reduced cost >= -theta (exact comparisons).
    bool theta_optimal_scan() const;
    /// True iff no admissible excess-deficit path exists in the residual
    /// network under the current (recovered) potentials.
    bool no_admissible_augmenting_path() const;
    /// Dead-node degree structure from the paper: dead A nodes have residual
    /// in-degree exactly 1, dead B nodes residual out-degree exactly 1.
    bool dead_degree_scan() const;

private:
    struct Cand {
        double value = 0.0;  // canonical reduced cost
        int kind = 0;        // source identifier for tie-breaking
        int id1 = -1, id2 = -1;
        double cgeo = 0.0;
        i128 dm = 0;           // units: value = cgeo - dm*theta
        int head = -1;         // node entering X when relaxed
        int interior_a = -1;   // dead interiors for alive paths
        int interior_b = -1;
    };

    double fl_units(i128 m) const { return static_cast<double>(m) * theta_; }
    double redcost(double cgeo, i128 dm) const { return cgeo - fl_units(dm); }
    i128 true_m(int v) const { return in_x_[v] ? gamma_m_[v] + delta_m_ : m_[v]; }
    i128 recovered_m(int v) const;
    bool node_deficit(int v) const { return f_->imbalance(v) < 0; }

    void recompute_alive(int v, std::vector<int>* dirty);
    void enter_x(int v);
    void leave_x(int v);
    void refresh_alive_sides();

    void scale_init(bool first);
    void refine();
    void hungarian_search_refine();
    void unwind_search();
    void blocking_flow();
    void commit_iteration();

    std::optional<Cand> best_candidate();
    void relax(const Cand& c);

    // blocking-flow helpers
    struct Dfs;

    std::vector<Point> a_, b_;
    CostParams params_;
    Options opt_;
    FlowNetwork net_;
    std::optional<Pseudoflow> f_;

    double theta_ = 0.0, theta_bar_ = 0.0, theta_lo_ = 0.0, e_star_ = 0.0;
    std::vector<std::pair<int, int>> zero_cost_pairs_;

    std::vector<i128> m_, gamma_m_;
    i128 delta_m_ = 0;
    std::vector<char> in_x_, alive_;

    // four geometric sides; pair queries combine them
    detail::Side alive_a_x_;    // alive A in X (weights gamma_m * theta)
    detail::Side alive_b_out_;  // alive B outside X (weights m * theta)
    detail::Side dead_a_;       // weights 0
    detail::Side dead_b_;       // weights 0

    // per-search structures
    struct BackArc {
        double key;
        int tail, head;
        Arc arc;
    };
    std::vector<BackArc> heap_back_;
    std::vector<std::pair<i128, int>> pq_s_a_;   // (m, a-node), min by m
    std::vector<std::pair<i128, int>> pq_t_b_;   // (gamma_m, b-node), max
    std::vector<int> search_log_;                // nodes entered this search
    std::vector<int> x_roots_;                   // excess nodes currently rooting X
    int terminal_ = -1;

    Stats stats_;
};

Matching solve_approx(const std::vector<Point>& a, const std::vector<Point>& b, int k,
                      const CostParams& params, double epsilon);

}  // namespace gpm
