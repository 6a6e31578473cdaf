#include "gpm/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace gpm {

namespace {

double ipow(double x, int e) {
    double r = 1.0;
    while (e > 0) {
        if (e & 1) r *= x;
        x *= x;
        e >>= 1;
    }
    return r;
}

}  // namespace

double lp_power_sum(const Point& a, const Point& b, int p) {
    const double dx = std::fabs(a.x - b.x);
    const double dy = std::fabs(a.y - b.y);
    if (p == 1) return dx + dy;
    if (p == 2) return dx * dx + dy * dy;
    return ipow(dx, p) + ipow(dy, p);
}

double power_sum_to_cost(double s, const CostParams& cp) {
    if (cp.q == cp.p) return s;
    if (cp.q % cp.p == 0) return ipow(s, cp.q / cp.p);
    if (cp.p == 2 * cp.q) return std::sqrt(s);
    return std::pow(s, static_cast<double>(cp.q) / static_cast<double>(cp.p));
}

double cost(const Point& a, const Point& b, const CostParams& cp) {
    return power_sum_to_cost(lp_power_sum(a, b, cp.p), cp);
}

// ---------------------------------------------------------------------------
// kd-tree Boruvka EMST
// ---------------------------------------------------------------------------

namespace {

struct KdNode {
    double xlo, xhi, ylo, yhi;
    int lo, hi;          // range into the permutation array
    int left = -1, right = -1;
    int comp = -1;       // uniform component label of the subtree, -1 if mixed
};

struct MstKd {
    const std::vector<Point>* pts;
    int p;
    std::vector<int> perm;
    std::vector<KdNode> nodes;
    int root = -1;

    static constexpr int kLeaf = 8;

    int build(int lo, int hi) {
        KdNode nd;
        nd.lo = lo;
        nd.hi = hi;
        nd.xlo = nd.ylo = std::numeric_limits<double>::infinity();
        nd.xhi = nd.yhi = -std::numeric_limits<double>::infinity();
        for (int i = lo; i < hi; ++i) {
            const Point& q = (*pts)[perm[i]];
            nd.xlo = std::min(nd.xlo, q.x);
            nd.xhi = std::max(nd.xhi, q.x);
            nd.ylo = std::min(nd.ylo, q.y);
            nd.yhi = std::max(nd.yhi, q.y);
        }
        int idx = static_cast<int>(nodes.size());
        nodes.push_back(nd);
        if (hi - lo > kLeaf) {
            int mid = (lo + hi) / 2;
            const bool split_x = (nd.xhi - nd.xlo) >= (nd.yhi - nd.ylo);
            std::nth_element(perm.begin() + lo, perm.begin() + mid, perm.begin() + hi,
                             [&](int i, int j) {
                                 const Point& u = (*pts)[i];
                                 const Point& v = (*pts)[j];
                                 return split_x ? u.x < v.x : u.y < v.y;
                             });
            int l = build(lo, mid);
            int r = build(mid, hi);
            nodes[idx].left = l;
            nodes[idx].right = r;
        }
        return idx;
    }

    double box_power_dist(const KdNode& nd, const Point& q) const {
        const double dx = std::max({0.0, nd.xlo - q.x, q.x - nd.xhi});
        const double dy = std::max({0.0, nd.ylo - q.y, q.y - nd.yhi});
        Point corner{q.x + dx, q.y + dy, -1};
        return lp_power_sum(q, corner, p);
    }

    int annotate(int idx, const std::vector<int>& comp) {
        KdNode& nd = nodes[idx];
        if (nd.left < 0) {
            int c = comp[perm[nd.lo]];
            for (int i = nd.lo + 1; i < nd.hi; ++i)
                if (comp[perm[i]] != c) { c = -1; break; }
            nd.comp = c;
        } else {
            int cl = annotate(nd.left, comp);
            int cr = annotate(nd.right, comp);
            nd.comp = (cl == cr) ? cl : -1;
        }
        return nd.comp;
    }

    // Nearest point to q in a different component; ties by smaller global id.
    void nearest_other(int idx, const Point& q, int qcomp, const std::vector<int>& comp,
                       double& best, int& best_id) const {
        const KdNode& nd = nodes[idx];
        if (nd.comp == qcomp) return;
        const double lb = box_power_dist(nd, q);
        if (lb > best) return;
        if (nd.left < 0) {
            for (int i = nd.lo; i < nd.hi; ++i) {
                const int gid = perm[i];
                if (comp[gid] == qcomp) continue;
                const double d = lp_power_sum(q, (*pts)[gid], p);
                if (d < best || (d == best && gid < best_id)) {
                    best = d;
                    best_id = gid;
                }
            }
            return;
        }
        const double dl = box_power_dist(nodes[nd.left], q);
        const double dr = box_power_dist(nodes[nd.right], q);
        if (dl <= dr) {
            nearest_other(nd.left, q, qcomp, comp, best, best_id);
            nearest_other(nd.right, q, qcomp, comp, best, best_id);
        } else {
            nearest_other(nd.right, q, qcomp, comp, best, best_id);
            nearest_other(nd.left, q, qcomp, comp, best, best_id);
        }
    }
};

struct Uf {
    std::vector<int> p;
    explicit Uf(int n) : p(n) { std::iota(p.begin(), p.end(), 0); }
    int find(int v) {
        while (p[v] != v) v = p[v] = p[p[v]];
        return v;
    }
    bool unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a == b) return false;
        p[a] = b;
        return true;
    }
};

}  // namespace

std::vector<ForestEdge> euclidean_mst(const std::vector<Point>& points, const CostParams& cp) {
    validate(cp);
    const int n = static_cast<int>(points.size());
    if (n <= 1) return {};

    MstKd kd;
    kd.pts = &points;
    kd.p = cp.p;
    kd.perm.resize(n);
    std::iota(kd.perm.begin(), kd.perm.end(), 0);
    kd.nodes.reserve(2 * n / MstKd::kLeaf + 4);
    kd.root = kd.build(0, n);

    struct RawEdge {
        double psum;
        int u, v;
        bool operator<(const RawEdge& o) const {
            if (psum != o.psum) return psum < o.psum;
            if (u != o.u) return u < o.u;
            return v < o.v;
        }
    };

    Uf uf(n);
    std::vector<int> comp(n);
    std::vector<RawEdge> tree;
    tree.reserve(n - 1);
    int components = n;

    while (components > 1) {
        for (int i = 0; i < n; ++i) comp[i] = uf.find(i);
        kd.annotate(kd.root, comp);

        // cheapest outgoing edge per component under the (psum, u, v) order
        std::vector<RawEdge> best(n, RawEdge{std::numeric_limits<double>::infinity(), n, n});
        for (int i = 0; i < n; ++i) {
            double d = std::numeric_limits<double>::infinity();
            int j = -1;
            kd.nearest_other(kd.root, points[i], comp[i], comp, d, j);
            if (j < 0) continue;
            RawEdge e{d, std::min(i, j), std::max(i, j)};
            RawEdge& slot = best[comp[i]];
            if (e < slot) slot = e;
        }
        for (int c = 0; c < n; ++c) {
            if (best[c].v >= n) continue;
            if (uf.unite(best[c].u, best[c].v)) {
                tree.push_back(best[c]);
                --components;
            }
        }
    }

    std::sort(tree.begin(), tree.end());
    std::vector<ForestEdge> out;
    out.reserve(tree.size());
    for (const RawEdge& e : tree)
        out.push_back(ForestEdge{e.u, e.v, power_sum_to_cost(e.psum, cp)});
    return out;
}

// ---------------------------------------------------------------------------
// SpanningForestState
// ---------------------------------------------------------------------------

SpanningForestState::SpanningForestState(const std::vector<Point>& a, const std::vector<Point>& b,
                                         const CostParams& cp)
    : r_(static_cast<int>(a.size())), n_(static_cast<int>(b.size())) {
    std::vector<Point> merged;
    merged.reserve(a.size() + b.size());
    for (int i = 0; i < r_; ++i) merged.push_back(Point{a[i].x, a[i].y, i});
    for (int j = 0; j < n_; ++j) merged.push_back(Point{b[j].x, b[j].y, r_ + j});
    edges_ = euclidean_mst(merged, cp);
    parent_.resize(r_ + n_);
    std::iota(parent_.begin(), parent_.end(), 0);
    count_a_.assign(r_ + n_, 0);
    count_b_.assign(r_ + n_, 0);
    for (int i = 0; i < r_; ++i) count_a_[i] = 1;
    for (int j = 0; j < n_; ++j) count_b_[r_ + j] = 1;
}

int SpanningForestState::find(int v) const {
    while (parent_[v] != v) v = parent_[v] = parent_[parent_[v]];
    return v;
}

int SpanningForestState::add_edge(int i) {
    if (i != next_edge_) throw std::logic_error("edges must be added in sorted order");
    ++next_edge_;
    int u = find(edges_[i].u);
    int v = find(edges_[i].v);
    if (u != v) {
        matchable_ -= std::min(count_a_[u], count_b_[u]);
        matchable_ -= std::min(count_a_[v], count_b_[v]);
        parent_[u] = v;
        count_a_[v] += count_a_[u];
        count_b_[v] += count_b_[u];
        matchable_ += std::min(count_a_[v], count_b_[v]);
    }
    return matchable_;
}

std::vector<std::pair<int, int>> SpanningForestState::intra_cluster_matching(int k) const {
    if (matchable_ < k) throw std::invalid_argument("forest admits no intra-cluster matching of size k");
    std::vector<std::vector<int>> as(r_ + n_), bs(r_ + n_);
    for (int i = 0; i < r_; ++i) as[find(i)].push_back(i);
    for (int j = 0; j < n_; ++j) bs[find(r_ + j)].push_back(j);
    std::vector<std::pair<int, int>> pairs;
    pairs.reserve(k);
    for (int c = 0; c < r_ + n_ && static_cast<int>(pairs.size()) < k; ++c) {
        const size_t m = std::min(as[c].size(), bs[c].size());
        for (size_t t = 0; t < m && static_cast<int>(pairs.size()) < k; ++t)
            pairs.emplace_back(as[c][t], bs[c][t]);
    }
    return pairs;
}

StartingScale starting_scale_index(const std::vector<Point>& a, const std::vector<Point>& b,
                                   int k, const CostParams& cp) {
    if (k < 1 || k > static_cast<int>(std::min(a.size(), b.size())))
        throw std::invalid_argument("infeasible k");
    SpanningForestState forest(a, b, cp);
    const auto& es = forest.edges();
    for (int i = 0; i < static_cast<int>(es.size()); ++i) {
        if (forest.add_edge(i) >= k) return StartingScale{i + 1, es[i].cost};
    }
    throw std::logic_error("spanning tree exhausted without reaching k matchable pairs");
}

}  // namespace gpm
