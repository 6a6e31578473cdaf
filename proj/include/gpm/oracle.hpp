#pragma once

#include <optional>
#include <vector>

#include "gpm/geometry.hpp"
#include "gpm/matching.hpp"

namespace gpm::oracle {

/// Reference solvers for differential tests. Deliberately dense and
/// independent of the main solvers; only cost() is shared.
struct DenseInstance {
    std::vector<std::vector<double>> cost;  // |A| x |B|
};

DenseInstance make_dense(const std::vector<Point>& a, const std::vector<Point>& b,
                         const CostParams& params);

/// Exact minimum over all size-k matchings by recursive enumeration with
/// cost pruning. Requires |A|, |B| <= 9.
Matching brute_force_matching(const DenseInstance& inst, int k);

/// Successive shortest augmenting paths with node potentials on an explicit
/// small network.
struct SspGraph {
    int nodes = 0;
    struct Arc {
        int tail, head;
        double cost;
        long long cap;
    };
    std::vector<Arc> arcs;
    std::vector<long long> supply;  // balanced
};

struct SspResult {
    std::vector<long long> flow;  // per arc
    double cost = 0.0;
    std::vector<double> potential;
};

SspResult ssp_mcmf(const SspGraph& g);

/// Min-cost size-k matching via ssp_mcmf on the dense bipartite network.
Matching ssp_matching(const DenseInstance& inst, int k);

/// Min-cost transportation plan via ssp_mcmf; phi positive on A, negative
/// on B, balanced.
struct DensePlan {
    std::vector<std::vector<double>> flow;
    double cost = 0.0;
};

DensePlan ssp_transport(const DenseInstance& inst, const std::vector<long long>& supply_a,
                        const std::vector<long long>& supply_b);

/// Exact dual certificate for a size-k matching: searches for potentials with
/// c_pi >= 0 on every edge and c_pi = 0 on matched edges, using exact dyadic
/// big-integer arithmetic (Bellman-Ford over the difference constraints).
/// Returns false if no such certificate exists.
bool exact_dual_certificate(const std::vector<Point>& a, const std::vector<Point>& b,
                            const CostParams& params, const Matching& m);

}  // namespace gpm::oracle
