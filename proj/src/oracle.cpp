#include "gpm/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <stdexcept>

#include <boost/multiprecision/cpp_int.hpp>

namespace gpm::oracle {

DenseInstance make_dense(const std::vector<Point>& a, const std::vector<Point>& b,
                         const CostParams& cp) {
    DenseInstance inst;
    inst.cost.assign(a.size(), std::vector<double>(b.size(), 0.0));
    for (size_t i = 0; i < a.size(); ++i)
        for (size_t j = 0; j < b.size(); ++j) inst.cost[i][j] = cost(a[i], b[j], cp);
    return inst;
}

// ---------------------------------------------------------------------------
// brute force
// ---------------------------------------------------------------------------

namespace {

struct BruteState {
    const DenseInstance* inst;
    int r, n, k;
    std::vector<int> pick;     // pick[i] = matched b for a_i, or -1
    std::vector<char> used_b;
    double best = std::numeric_limits<double>::infinity();
    std::vector<int> best_pick;

    void rec(int i, int chosen, double acc) {
        if (acc >= best) return;
        if (chosen == k) {
            best = acc;
            best_pick = pick;
            return;
        }
        if (i == r || r - i < k - chosen) return;
        // match a_i to each free b (ascending keeps ties deterministic)
        for (int j = 0; j < n; ++j) {
            if (used_b[j]) continue;
            used_b[j] = 1;
            pick[i] = j;
            rec(i + 1, chosen + 1, acc + inst->cost[i][j]);
            pick[i] = -1;
            used_b[j] = 0;
        }
        rec(i + 1, chosen, acc);  // leave a_i unmatched
    }
};

}  // namespace

Matching brute_force_matching(const DenseInstance& inst, int k) {
    const int r = static_cast<int>(inst.cost.size());
    const int n = r ? static_cast<int>(inst.cost[0].size()) : 0;
    if (r > 9 || n > 9) throw std::invalid_argument("brute_force_matching: instance too large");
    if (k < 0 || k > std::min(r, n)) throw std::invalid_argument("infeasible k");
    BruteState st{&inst, r, n, k, std::vector<int>(r, -1), std::vector<char>(n, 0)};
    st.rec(0, 0, 0.0);
    Matching m;
    std::vector<std::pair<int, int>> pairs;
    for (int i = 0; i < r; ++i)
        if (st.best_pick.size() && st.best_pick[i] >= 0) pairs.emplace_back(i, st.best_pick[i]);
    std::sort(pairs.begin(), pairs.end());
    m.pairs = pairs;
    m.cost = 0.0;
    for (const auto& [i, j] : pairs) m.cost += inst.cost[i][j];
    return m;
}

// ---------------------------------------------------------------------------
// successive shortest paths
// ---------------------------------------------------------------------------

SspResult ssp_mcmf(const SspGraph& g) {
    long long total = 0;
    for (long long s : g.supply) total += s;
    if (total != 0) throw std::invalid_argument("ssp_mcmf: unbalanced supplies");

    const int n = g.nodes;
    const int m = static_cast<int>(g.arcs.size());
    // residual arcs: 2*m, even = forward, odd = backward
    std::vector<long long> res(2 * m);
    std::vector<std::vector<int>> adj(n);
    for (int e = 0; e < m; ++e) {
        res[2 * e] = g.arcs[e].cap;
        res[2 * e + 1] = 0;
        adj[g.arcs[e].tail].push_back(2 * e);
        adj[g.arcs[e].head].push_back(2 * e + 1);
    }
    auto tail = [&](int re) { return (re & 1) ? g.arcs[re >> 1].head : g.arcs[re >> 1].tail; };
    auto head = [&](int re) { return (re & 1) ? g.arcs[re >> 1].tail : g.arcs[re >> 1].head; };
    auto rcost = [&](int re) { return (re & 1) ? -g.arcs[re >> 1].cost : g.arcs[re >> 1].cost; };

    std::vector<long long> excess(g.supply.begin(), g.supply.end());
    std::vector<double> pi(n, 0.0);
    const double inf = std::numeric_limits<double>::infinity();

    while (true) {
        int src = -1;
        for (int v = 0; v < n; ++v)
            if (excess[v] > 0) { src = v; break; }
        if (src < 0) break;

        // Dijkstra over reduced costs from src to any deficit node
        std::vector<double> dist(n, inf);
        std::vector<int> par(n, -1);
        std::vector<char> done(n, 0);
        using QE = std::pair<double, int>;
        std::priority_queue<QE, std::vector<QE>, std::greater<QE>> pq;
        dist[src] = 0.0;
        pq.push({0.0, src});
        int sink = -1;
        while (!pq.empty()) {
            auto [d, v] = pq.top();
            pq.pop();
            if (done[v]) continue;
            done[v] = 1;
            if (excess[v] < 0 && sink < 0) sink = v;
            for (int re : adj[v]) {
                if (res[re] <= 0) continue;
                const int w = head(re);
                if (done[w]) continue;
                const double rc = std::max(0.0, rcost(re) - pi[v] + pi[w]);
                if (dist[v] + rc < dist[w]) {
                    dist[w] = dist[v] + rc;
                    par[w] = re;
                    pq.push({dist[w], w});
                }
            }
        }
        if (sink < 0) throw std::invalid_argument("ssp_mcmf: infeasible supplies");
        for (int v = 0; v < n; ++v)
            if (dist[v] < inf) pi[v] -= std::min(dist[v], dist[sink]);

        long long push = std::min(excess[src], -excess[sink]);
        for (int v = sink; v != src;) {
            const int re = par[v];
            push = std::min(push, res[re]);
            v = tail(re);
        }
        for (int v = sink; v != src;) {
            const int re = par[v];
            res[re] -= push;
            res[re ^ 1] += push;
            v = tail(re);
        }
        excess[src] -= push;
        excess[sink] += push;
    }

    SspResult out;
    out.flow.resize(m);
    out.cost = 0.0;
    for (int e = 0; e < m; ++e) {
        out.flow[e] = res[2 * e + 1];
        out.cost += g.arcs[e].cost * static_cast<double>(out.flow[e]);
    }
    out.potential = pi;
    return out;
}

Matching ssp_matching(const DenseInstance& inst, int k) {
    const int r = static_cast<int>(inst.cost.size());
    const int n = r ? static_cast<int>(inst.cost[0].size()) : 0;
    if (k < 0 || k > std::min(r, n)) throw std::invalid_argument("infeasible k");
    // nodes: 0 = s, 1 = t, 2..2+r-1 = A, 2+r.. = B
    SspGraph g;
    g.nodes = 2 + r + n;
    g.supply.assign(g.nodes, 0);
    g.supply[0] = k;
    g.supply[1] = -k;
    for (int i = 0; i < r; ++i) g.arcs.push_back({0, 2 + i, 0.0, 1});
    for (int j = 0; j < n; ++j) g.arcs.push_back({2 + r + j, 1, 0.0, 1});
    std::vector<std::vector<int>> arc_of(r, std::vector<int>(n));
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < n; ++j) {
            arc_of[i][j] = static_cast<int>(g.arcs.size());
            g.arcs.push_back({2 + i, 2 + r + j, inst.cost[i][j], 1});
        }
    SspResult res = ssp_mcmf(g);
    Matching m;
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < n; ++j)
            if (res.flow[arc_of[i][j]] > 0) m.pairs.emplace_back(i, j);
    std::sort(m.pairs.begin(), m.pairs.end());
    m.cost = 0.0;
    for (const auto& [i, j] : m.pairs) m.cost += inst.cost[i][j];
    return m;
}

DensePlan ssp_transport(const DenseInstance& inst, const std::vector<long long>& sa,
                        const std::vector<long long>& sb) {
    const int r = static_cast<int>(inst.cost.size());
    const int n = r ? static_cast<int>(inst.cost[0].size()) : 0;
    long long total = 0;
    for (long long s : sa) total += s;
    SspGraph g;
    g.nodes = r + n;
    g.supply.assign(g.nodes, 0);
    for (int i = 0; i < r; ++i) g.supply[i] = sa[i];
    for (int j = 0; j < n; ++j) g.supply[r + j] = sb[j];
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < n; ++j) g.arcs.push_back({i, r + j, inst.cost[i][j], total});
    SspResult res = ssp_mcmf(g);
    DensePlan plan;
    plan.flow.assign(r, std::vector<double>(n, 0.0));
    plan.cost = 0.0;
    int e = 0;
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < n; ++j, ++e) {
            plan.flow[i][j] = static_cast<double>(res.flow[e]);
            plan.cost += inst.cost[i][j] * plan.flow[i][j];
        }
    return plan;
}

// ---------------------------------------------------------------------------
// exact dual certificate
// ---------------------------------------------------------------------------

namespace {

// Exact dyadic rational: mant * 2^exp with a big-integer mantissa.
struct Dyad {
    boost::multiprecision::cpp_int mant;
    long exp = 0;

    static Dyad from_double(double v) {
        Dyad d;
        if (v == 0.0) return d;
        int e = 0;
        const double frac = std::frexp(v, &e);
        const double scaled = std::ldexp(frac, 53);  // integer by construction
        d.mant = boost::multiprecision::cpp_int(static_cast<long long>(scaled));
        d.exp = e - 53;
        return d;
    }

    static void align(Dyad& a, Dyad& b) {
        if (a.mant == 0) { a.exp = b.exp; return; }
        if (b.mant == 0) { b.exp = a.exp; return; }
        if (a.exp > b.exp) {
            a.mant <<= static_cast<unsigned>(a.exp - b.exp);
            a.exp = b.exp;
        } else if (b.exp > a.exp) {
            b.mant <<= static_cast<unsigned>(b.exp - a.exp);
            b.exp = a.exp;
        }
    }

    Dyad operator+(Dyad o) const {
        Dyad a = *this;
        align(a, o);
        a.mant += o.mant;
        return a;
    }
    bool operator<(Dyad o) const {
        Dyad a = *this;
        align(a, o);
        return a.mant < o.mant;
    }
};

}  // namespace

bool exact_dual_certificate(const std::vector<Point>& a, const std::vector<Point>& b,
                            const CostParams& cp, const Matching& m) {
    const int r = static_cast<int>(a.size());
    const int n = static_cast<int>(b.size());
    // Difference constraints, pi as shortest distances:
    //   pi(a) - pi(b) <= c(a,b)   for every pair       (arc b -> a, weight c)
    //   pi(b) - pi(a) <= -c(a,b)  for matched pairs    (arc a -> b, weight -c)
    // Feasible iff no negative cycle; then c_pi >= 0 everywhere and = 0 on M.
    std::vector<int> match_of_a(r, -1);
    for (const auto& [i, j] : m.pairs) match_of_a[i] = j;

    std::vector<std::vector<Dyad>> w(r, std::vector<Dyad>(n));
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < n; ++j) w[i][j] = Dyad::from_double(cost(a[i], b[j], cp));

    const int N = r + n;
    std::vector<Dyad> dist(N);  // virtual root at distance 0 to all
    bool changed = true;
    int rounds = 0;
    while (changed) {
        changed = false;
        if (++rounds > N + 1) return false;  // negative cycle: no certificate
        for (int i = 0; i < r; ++i) {
            for (int j = 0; j < n; ++j) {
                // arc b_j -> a_i weight c
                {
                    Dyad cand = dist[r + j] + w[i][j];
                    if (cand < dist[i]) {
                        dist[i] = cand;
                        changed = true;
                    }
                }
                if (match_of_a[i] == j) {
                    Dyad negw = w[i][j];
                    negw.mant = -negw.mant;
                    Dyad cand = dist[i] + negw;
                    if (cand < dist[r + j]) {
                        dist[r + j] = cand;
                        changed = true;
                    }
                }
            }
        }
    }
    // dist is a feasible potential; with exact arithmetic the scan below is
    // guaranteed, but run it anyway as the actual certificate.
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < n; ++j) {
            Dyad negw = w[i][j];
            negw.mant = -negw.mant;
            // c_pi = c - pi(a) + pi(b) >= 0 fails iff pi(b) < pi(a) - c
            Dyad lhs = dist[i] + negw;
            if (dist[r + j] < lhs) return false;
            if (match_of_a[i] == j) {
                Dyad rhs = dist[r + j] + w[i][j];  // need pi(a) == pi(b) + c
                if (dist[i] < rhs || rhs < dist[i]) return false;
            }
        }
    return true;
}

}  // namespace gpm::oracle
