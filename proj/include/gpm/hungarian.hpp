#pragma once

#include <optional>
#include <vector>

#include "gpm/bcp.hpp"
#include "gpm/geometry.hpp"
#include "gpm/matching.hpp"

namespace gpm {

/// Exact minimum-cost size-k matching: Hungarian algorithm with BCP-driven
/// frontier relaxation, batched potentials (stored gamma + global delta) and
/// the rewinding mechanism between searches.
class ExactMatcher {
public:
    struct Options {
        /// Rebuild the BCP from scratch before each search instead of
        /// rewinding (reference mode for differential tests).
        bool rebuild_bcp = false;
    };

    struct Stats {
        int searches = 0;
        long long relaxations = 0;
        long long max_relaxations_per_search = 0;
        uint64_t bcp_ops = 0;
        uint64_t max_bcp_ops_per_search = 0;
    };

    ExactMatcher(std::vector<Point> a, std::vector<Point> b, const CostParams& params,
                 Options opt);
    ExactMatcher(std::vector<Point> a, std::vector<Point> b, const CostParams& params)
        : ExactMatcher(std::move(a), std::move(b), params, Options()) {}

    Matching solve(int k);

    /// True potentials materialized from (gamma, delta, X); valid after solve.
    const std::vector<double>& potential_a() const { return pi_a_; }
    const std::vector<double>& potential_b() const { return pi_b_; }

    const Stats& stats() const { return stats_; }

    // exposed for invariant tests
    double delta() const { return delta_; }
    double gamma_a(int i) const { return gamma_a_[i]; }
    double gamma_b(int j) const { return gamma_b_[j]; }
    bool in_x_a(int i) const { return in_x_a_[i] != 0; }
    bool in_x_b(int j) const { return in_x_b_[j] != 0; }

private:
    struct PathEdge {
        int a, b;
    };

    void init_structures();
    std::vector<PathEdge> hungarian_search();
    void augment(const std::vector<PathEdge>& path);
    void rewind_search();
    void materialize_potentials();

    std::vector<Point> a_, b_;
    CostParams params_;
    Options opt_;
    int k_ = 0;

    std::optional<BcpStructure> bcp_;
    std::vector<double> gamma_a_, gamma_b_;
    double delta_ = 0.0;
    std::vector<char> in_x_a_, in_x_b_;
    std::vector<int> match_a_, match_b_;  // partner index or -1

    struct Event {
        enum class Kind : uint8_t { EnterB, EnterA } kind;
        int node;
    };
    std::vector<Event> search_log_;
    int last_new_matched_a_ = -1;

    std::vector<int> parent_of_b_;  // the a that relaxed b in, per search
    std::vector<int> parent_of_a_;  // the b whose matching edge pulled a in
    std::vector<int> stamp_a_, stamp_b_;
    int search_id_ = 0;

    std::vector<double> pi_a_, pi_b_;
    Stats stats_;
};

/// Convenience wrapper.
Matching solve_exact(const std::vector<Point>& a, const std::vector<Point>& b, int k,
                     const CostParams& params);

}  // namespace gpm
