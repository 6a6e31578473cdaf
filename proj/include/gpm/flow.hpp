#pragma once

#include <cstdint>
#include <set>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "gpm/geometry.hpp"

namespace gpm {

/// Node numbering for the matching->circulation network of the reduction:
/// 0 = s, 1 = t, 2..2+r-1 = A, 2+r..2+r+n-1 = B.
struct FlowNetwork {
    int r = 0;
    int n = 0;
    int k = 0;
    CostParams params;

    static constexpr int kS = 0;
    static constexpr int kT = 1;
    int node_count() const { return 2 + r + n; }
    int a_node(int i) const { return 2 + i; }
    int b_node(int j) const { return 2 + r + j; }
    bool is_a(int v) const { return v >= 2 && v < 2 + r; }
    bool is_b(int v) const { return v >= 2 + r; }
    int a_index(int v) const { return v - 2; }
    int b_index(int v) const { return v - 2 - r; }

    /// phi(s) = k, phi(t) = -k, 0 elsewhere.
    long long phi(int v) const { return v == kS ? k : (v == kT ? -k : 0); }
};

FlowNetwork build_network(int r, int n, int k, const CostParams& params);

/// An arc of the network. Bipartite arcs are never materialized in bulk;
/// Arc values are created on the fly.
struct Arc {
    enum class Kind : uint8_t { Left, Bipartite, Right } kind;
    int a = -1;  // A index for Left/Bipartite
    int b = -1;  // B index for Bipartite/Right

    static Arc left(int a) { return Arc{Kind::Left, a, -1}; }
    static Arc bipartite(int a, int b) { return Arc{Kind::Bipartite, a, b}; }
    static Arc right(int b) { return Arc{Kind::Right, -1, b}; }
};

/// A residual arc: forward over an idle arc or backward over a saturated one.
struct ResidualArc {
    Arc arc;
    bool forward = true;
};

/// 0/1 pseudoflow stored as the sparse saturated-arc set, with an
/// incrementally maintained imbalance cache.
class Pseudoflow {
public:
    explicit Pseudoflow(const FlowNetwork& net);

    bool left_saturated(int a) const { return left_[a] != 0; }
    bool right_saturated(int b) const { return right_[b] != 0; }
    bool bip_saturated(int a, int b) const;
    bool saturated(const Arc& arc) const;

    void saturate(const Arc& arc);
    void desaturate(const Arc& arc);

    /// Applies an integral residual pseudoflow g (a set of residual arcs):
    /// forward arcs become saturated, backward arcs become idle.
    void augment_by(const std::vector<ResidualArc>& g);

    long long imbalance(int v) const { return imb_[v]; }
    long long total_excess() const { return excess_; }
    int supp_size() const { return supp_; }
    bool is_circulation() const { return excess_ == 0; }

    const std::vector<int>& bip_out(int a) const;   // saturated partners of a
    const std::vector<int>& bip_in(int b) const;    // saturated partners of b
    const std::set<int>& right_saturated_set() const { return right_set_; }

    /// Recomputes the imbalance cache from the saturated set (consistency
    /// check; used by tests and debug builds).
    std::vector<long long> recompute_imbalances() const;

    const FlowNetwork& net() const { return *net_; }

private:
    void bump(int v, long long d);
    void check_support_bound() const;

    const FlowNetwork* net_;
    std::vector<int8_t> left_, right_;
    std::set<int> right_set_;
    std::vector<std::vector<int>> bip_out_, bip_in_;
    std::vector<long long> imb_;
    long long excess_ = 0;
    int supp_ = 0;
};

}  // namespace gpm
