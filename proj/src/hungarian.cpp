#include "gpm/hungarian.hpp"

#include <algorithm>
#include <stdexcept>

namespace gpm {

ExactMatcher::ExactMatcher(std::vector<Point> a, std::vector<Point> b, const CostParams& params,
                           Options opt)
    : a_(std::move(a)), b_(std::move(b)), params_(params), opt_(opt) {
    validate(params_);
    for (size_t i = 0; i < a_.size(); ++i) a_[i].id = static_cast<int>(i);
    for (size_t j = 0; j < b_.size(); ++j) b_[j].id = static_cast<int>(j);
}

void ExactMatcher::init_structures() {
    bcp_.emplace(params_);
    std::vector<WeightedPoint> ps, qs;
    ps.reserve(a_.size());
    qs.reserve(b_.size());
    for (size_t i = 0; i < a_.size(); ++i)
        if (in_x_a_[i]) ps.push_back(WeightedPoint{a_[i], gamma_a_[i]});
    for (size_t j = 0; j < b_.size(); ++j)
        if (!in_x_b_[j]) qs.push_back(WeightedPoint{b_[j], gamma_b_[j]});
    bcp_->bulk_load(BcpSideId::P, ps);
    bcp_->bulk_load(BcpSideId::Q, qs);
}

Matching ExactMatcher::solve(int k) {
    const int r = static_cast<int>(a_.size());
    const int n = static_cast<int>(b_.size());
    if (k == 0) return Matching{};
    if (k < 0 || k > std::min(r, n)) throw std::invalid_argument("infeasible k");
    k_ = k;

    gamma_a_.assign(r, 0.0);
    gamma_b_.assign(n, 0.0);
    delta_ = 0.0;
    in_x_a_.assign(r, 1);  // X starts as all (unmatched) nodes of A
    in_x_b_.assign(n, 0);
    match_a_.assign(r, -1);
    match_b_.assign(n, -1);
    parent_of_b_.assign(n, -1);
    parent_of_a_.assign(r, -1);
    stamp_a_.assign(r, -1);
    stamp_b_.assign(n, -1);
    search_log_.clear();
    last_new_matched_a_ = -1;
    stats_ = Stats{};

    init_structures();

    for (int round = 0; round < k; ++round) {
        if (round > 0) {
            if (opt_.rebuild_bcp) {
                // reference mode: drop the log and rebuild from stored state
                for (auto it = search_log_.rbegin(); it != search_log_.rend(); ++it) {
                    if (it->kind == Event::Kind::EnterB) {
                        gamma_b_[it->node] += delta_;
                        in_x_b_[it->node] = 0;
                    } else {
                        gamma_a_[it->node] += delta_;
                        in_x_a_[it->node] = 0;
                    }
                }
                search_log_.clear();
                gamma_a_[last_new_matched_a_] += delta_;
                in_x_a_[last_new_matched_a_] = 0;
                init_structures();
            } else {
                rewind_search();
            }
        }
        const uint64_t ops0 = bcp_op_count();
        ++search_id_;
        ++stats_.searches;
        auto path = hungarian_search();
        augment(path);
        const uint64_t ops = bcp_op_count() - ops0;
        stats_.bcp_ops += ops;
        stats_.max_bcp_ops_per_search = std::max(stats_.max_bcp_ops_per_search, ops);
    }

    materialize_potentials();

    Matching m;
    for (int i = 0; i < r; ++i)
        if (match_a_[i] >= 0) m.pairs.emplace_back(i, match_a_[i]);
    std::sort(m.pairs.begin(), m.pairs.end());
    m.cost = 0.0;
    for (const auto& [i, j] : m.pairs) m.cost += cost(a_[i], b_[j], params_);
    return m;
}

std::vector<ExactMatcher::PathEdge> ExactMatcher::hungarian_search() {
    long long relaxations = 0;
    int terminal_b = -1;
    while (true) {
        const auto q = bcp_->query_min();
        if (!q) throw std::logic_error("hungarian search: empty frontier");
        // true reduced cost of the frontier minimum; clamp rounding noise
        const double rc = std::max(0.0, q->value - delta_);
        delta_ += rc;
        ++relaxations;

        const int b = q->b_id;
        gamma_b_[b] -= delta_;  // entering X: pi(b) = gamma(b) + delta unchanged
        in_x_b_[b] = 1;
        bcp_->erase(BcpSideId::Q, b);
        search_log_.push_back(Event{Event::Kind::EnterB, b});
        parent_of_b_[b] = q->a_id;
        stamp_b_[b] = search_id_;

        if (match_b_[b] < 0) {
            terminal_b = b;
            break;
        }
        const int a2 = match_b_[b];
        gamma_a_[a2] -= delta_;
        in_x_a_[a2] = 1;
        bcp_->insert(BcpSideId::P, WeightedPoint{a_[a2], gamma_a_[a2]});
        search_log_.push_back(Event{Event::Kind::EnterA, a2});
        parent_of_a_[a2] = b;
        stamp_a_[a2] = search_id_;
    }
    stats_.relaxations += relaxations;
    stats_.max_relaxations_per_search = std::max(stats_.max_relaxations_per_search, relaxations);

    // recover the admissible alternating path ending at terminal_b
    std::vector<PathEdge> path;
    int b = terminal_b;
    while (true) {
        const int a = parent_of_b_[b];
        path.push_back(PathEdge{a, b});
        if (stamp_a_[a] != search_id_) break;  // a was an unmatched root
        b = parent_of_a_[a];
    }
    std::reverse(path.begin(), path.end());
    return path;
}

void ExactMatcher::augment(const std::vector<PathEdge>& path) {
    for (const PathEdge& e : path) {
        match_a_[e.a] = e.b;
        match_b_[e.b] = e.a;
    }
    last_new_matched_a_ = path.front().a;  // exactly one A node newly matched
}

void ExactMatcher::rewind_search() {
    // Inverse BCP operations in reverse order; stored potentials are updated
    // as nodes leave X (gamma <- gamma + delta keeps pi unchanged).
    for (auto it = search_log_.rbegin(); it != search_log_.rend(); ++it) {
        if (it->kind == Event::Kind::EnterB) {
            const int b = it->node;
            gamma_b_[b] += delta_;
            in_x_b_[b] = 0;
            bcp_->insert(BcpSideId::Q, WeightedPoint{b_[b], gamma_b_[b]});
        } else {
            const int a = it->node;
            gamma_a_[a] += delta_;
            in_x_a_[a] = 0;
            bcp_->erase(BcpSideId::P, a);
        }
    }
    search_log_.clear();
    // the one extra deletion: the newly matched A node leaves X
    gamma_a_[last_new_matched_a_] += delta_;
    in_x_a_[last_new_matched_a_] = 0;
    bcp_->erase(BcpSideId::P, last_new_matched_a_);
}

void ExactMatcher::materialize_potentials() {
    const int r = static_cast<int>(a_.size());
    const int n = static_cast<int>(b_.size());
    pi_a_.assign(r, 0.0);
    pi_b_.assign(n, 0.0);
    for (int i = 0; i < r; ++i) pi_a_[i] = in_x_a_[i] ? gamma_a_[i] + delta_ : gamma_a_[i];
    for (int j = 0; j < n; ++j) pi_b_[j] = in_x_b_[j] ? gamma_b_[j] + delta_ : gamma_b_[j];
    // pin matched edges to exact-zero reduced cost under the scan expression
    for (int j = 0; j < n; ++j)
        if (match_b_[j] >= 0) pi_b_[j] = pi_a_[match_b_[j]] - cost(a_[match_b_[j]], b_[j], params_);
}

Matching solve_exact(const std::vector<Point>& a, const std::vector<Point>& b, int k,
                     const CostParams& params) {
    ExactMatcher m(a, b, params);
    return m.solve(k);
}

}  // namespace gpm
