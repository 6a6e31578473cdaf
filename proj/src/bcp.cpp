#include "gpm/bcp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <stdexcept>

namespace gpm {

namespace {
thread_local uint64_t g_bcp_ops = 0;
}

uint64_t bcp_op_count() { return g_bcp_ops; }

namespace detail {

// ---------------------------------------------------------------------------
// StaticTree
// ---------------------------------------------------------------------------

StaticTree::StaticTree(std::vector<Entry> entries) : entries_(std::move(entries)) {
    nodes_.reserve(2 * entries_.size() / kLeaf + 4);
    if (!entries_.empty()) root_ = build(0, static_cast<int>(entries_.size()));
    live_ = 0;
    for (const Entry& e : entries_)
        if (!e.dead) ++live_;
}

void StaticTree::pull(Node& nd) {
    nd.xlo = nd.ylo = std::numeric_limits<double>::infinity();
    nd.xhi = nd.yhi = -std::numeric_limits<double>::infinity();
    nd.wmin = std::numeric_limits<double>::infinity();
    nd.wmax = -std::numeric_limits<double>::infinity();
    nd.min_id = std::numeric_limits<int>::max();
    nd.live = 0;
    if (nd.left < 0) {
        for (int i = nd.lo; i < nd.hi; ++i) {
            const Entry& e = entries_[i];
            if (e.dead) continue;
            ++nd.live;
            nd.xlo = std::min(nd.xlo, e.x);
            nd.xhi = std::max(nd.xhi, e.x);
            nd.ylo = std::min(nd.ylo, e.y);
            nd.yhi = std::max(nd.yhi, e.y);
            nd.wmin = std::min(nd.wmin, e.w);
            nd.wmax = std::max(nd.wmax, e.w);
            nd.min_id = std::min(nd.min_id, e.id);
        }
    } else {
        for (int c : {nd.left, nd.right}) {
            const Node& ch = nodes_[c];
            if (ch.live == 0) continue;
            nd.live += ch.live;
            nd.xlo = std::min(nd.xlo, ch.xlo);
            nd.xhi = std::max(nd.xhi, ch.xhi);
            nd.ylo = std::min(nd.ylo, ch.ylo);
            nd.yhi = std::max(nd.yhi, ch.yhi);
            nd.wmin = std::min(nd.wmin, ch.wmin);
            nd.wmax = std::max(nd.wmax, ch.wmax);
            nd.min_id = std::min(nd.min_id, ch.min_id);
        }
    }
}

int StaticTree::build(int lo, int hi) {
    const int idx = static_cast<int>(nodes_.size());
    nodes_.push_back(Node{});
    nodes_[idx].lo = lo;
    nodes_[idx].hi = hi;
    if (hi - lo > kLeaf) {
        double xlo = entries_[lo].x, xhi = xlo, ylo = entries_[lo].y, yhi = ylo;
        for (int i = lo + 1; i < hi; ++i) {
            xlo = std::min(xlo, entries_[i].x);
            xhi = std::max(xhi, entries_[i].x);
            ylo = std::min(ylo, entries_[i].y);
            yhi = std::max(yhi, entries_[i].y);
        }
        const bool split_x = (xhi - xlo) >= (yhi - ylo);
        const int mid = (lo + hi) / 2;
        std::nth_element(entries_.begin() + lo, entries_.begin() + mid, entries_.begin() + hi,
                         [&](const Entry& a, const Entry& b) {
                             return split_x ? a.x < b.x : a.y < b.y;
                         });
        const int l = build(lo, mid);
        const int r = build(mid, hi);
        nodes_[idx].left = l;
        nodes_[idx].right = r;
    }
    pull(nodes_[idx]);
    return idx;
}

void StaticTree::kill(int pos) {
    entries_[pos].dead = true;
    --live_;
    // re-pull aggregates along the root->leaf path containing pos
    int idx = root_;
    std::vector<int> path;
    while (true) {
        path.push_back(idx);
        const Node& nd = nodes_[idx];
        if (nd.left < 0) break;
        idx = (pos < nodes_[nd.left].hi) ? nd.left : nd.right;
    }
    for (auto it = path.rbegin(); it != path.rend(); ++it) pull(nodes_[*it]);
}

std::vector<Entry> StaticTree::live_entries() const {
    std::vector<Entry> out;
    out.reserve(live_);
    for (const Entry& e : entries_)
        if (!e.dead) out.push_back(e);
    return out;
}

// ---------------------------------------------------------------------------
// Side
// ---------------------------------------------------------------------------

namespace {
int size_rank(int live) {
    int r = 0;
    while ((1 << (r + 1)) <= live) ++r;
    return r;
}
}  // namespace

void Side::reindex(size_t slot) {
    const StaticTree& t = *trees_[slot];
    for (int i = 0; i < t.total(); ++i)
        if (!t.entry(i).dead) where_[t.entry(i).id] = {static_cast<int>(slot), i};
}

void Side::normalize() {
    // drop empty trees
    for (size_t i = 0; i < trees_.size();) {
        if (trees_[i]->live() == 0) {
            trees_.erase(trees_.begin() + i);
            for (size_t s = i; s < trees_.size(); ++s) reindex(s);
        } else {
            ++i;
        }
    }
    // merge trees of equal size rank (logarithmic method)
    bool merged = true;
    while (merged) {
        merged = false;
        for (size_t i = 0; i + 1 < trees_.size() && !merged; ++i) {
            for (size_t j = i + 1; j < trees_.size() && !merged; ++j) {
                if (size_rank(trees_[i]->live()) != size_rank(trees_[j]->live())) continue;
                std::vector<Entry> all = trees_[i]->live_entries();
                std::vector<Entry> more = trees_[j]->live_entries();
                all.insert(all.end(), more.begin(), more.end());
                trees_.erase(trees_.begin() + j);
                trees_[i] = std::make_unique<StaticTree>(std::move(all));
                for (size_t s = i; s < trees_.size(); ++s) reindex(s);
                merged = true;
            }
        }
    }
}

void Side::insert(const WeightedPoint& wp) {
    ++g_bcp_ops;
    if (where_.count(wp.point.id))
        throw std::invalid_argument("bcp: duplicate id on side");
    std::vector<Entry> one{Entry{wp.point.x, wp.point.y, wp.weight, wp.point.id, false}};
    trees_.push_back(std::make_unique<StaticTree>(std::move(one)));
    where_[wp.point.id] = {static_cast<int>(trees_.size()) - 1, 0};
    normalize();
}

WeightedPoint Side::erase(int id) {
    ++g_bcp_ops;
    auto it = where_.find(id);
    if (it == where_.end()) throw std::invalid_argument("bcp: erase of missing id");
    auto [ti, pos] = it->second;
    const Entry e = trees_[ti]->entry(pos);
    trees_[ti]->kill(pos);
    where_.erase(it);
    // rebuild a tree once half its entries are tombstones
    if (trees_[ti]->live() * 2 <= trees_[ti]->total()) {
        if (trees_[ti]->live() == 0) {
            trees_.erase(trees_.begin() + ti);
            for (size_t s = ti; s < trees_.size(); ++s) reindex(s);
        } else {
            trees_[ti] = std::make_unique<StaticTree>(trees_[ti]->live_entries());
            reindex(ti);
        }
        normalize();
    }
    return WeightedPoint{Point{e.x, e.y, e.id}, e.w};
}

WeightedPoint Side::get(int id) const {
    auto it = where_.find(id);
    if (it == where_.end()) throw std::invalid_argument("bcp: get of missing id");
    const Entry& e = trees_[it->second.first]->entry(it->second.second);
    return WeightedPoint{Point{e.x, e.y, e.id}, e.w};
}

void Side::bulk_load(const std::vector<WeightedPoint>& pts) {
    std::vector<Entry> all;
    all.reserve(pts.size());
    for (const WeightedPoint& wp : pts)
        all.push_back(Entry{wp.point.x, wp.point.y, wp.weight, wp.point.id, false});
    trees_.clear();
    where_.clear();
    if (all.empty()) return;
    trees_.push_back(std::make_unique<StaticTree>(std::move(all)));
    reindex(0);
    if (where_.size() != pts.size()) throw std::invalid_argument("bcp: duplicate ids in bulk load");
}

void Side::clear() {
    trees_.clear();
    where_.clear();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Pair query: best-first branch and bound over tree pairs
// ---------------------------------------------------------------------------

namespace {

using detail::Side;
using detail::StaticTree;

double box_gap_power(const StaticTree::Node& a, const StaticTree::Node& b, int p) {
    const double gx = std::max({0.0, a.xlo - b.xhi, b.xlo - a.xhi});
    const double gy = std::max({0.0, a.ylo - b.yhi, b.ylo - a.yhi});
    Point o{0.0, 0.0, -1}, g{gx, gy, -1};
    return lp_power_sum(o, g, p);
}

struct Cand {
    double lb;
    int min_a, min_b;
    const StaticTree* tp;
    const StaticTree* tq;
    int np, nq;
    bool operator>(const Cand& o) const {
        if (lb != o.lb) return lb > o.lb;
        if (min_a != o.min_a) return min_a > o.min_a;
        return min_b > o.min_b;
    }
};

struct BestPair {
    double value = std::numeric_limits<double>::infinity();
    int a_id = std::numeric_limits<int>::max();
    int b_id = std::numeric_limits<int>::max();
    bool found = false;

    bool improves(double v, int a, int b) const {
        if (!found) return true;
        if (v != value) return v < value;
        if (a != a_id) return a < a_id;
        return b < b_id;
    }
};

}  // namespace

std::optional<BcpResult> query_pair_min(const Side& p, const Side& q, const CostParams& cp) {
    ++g_bcp_ops;
    if (p.empty() || q.empty()) return std::nullopt;

    BestPair best;
    std::priority_queue<Cand, std::vector<Cand>, std::greater<Cand>> heap;

    auto push = [&](const StaticTree* tp, int np, const StaticTree* tq, int nq) {
        const auto& a = tp->node(np);
        const auto& b = tq->node(nq);
        if (a.live == 0 || b.live == 0) return;
        const double lb =
            power_sum_to_cost(box_gap_power(a, b, cp.p), cp) - a.wmax + b.wmin;
        heap.push(Cand{lb, a.min_id, b.min_id, tp, tq, np, nq});
    };

    for (const auto& tp : p.trees())
        for (const auto& tq : q.trees()) push(tp.get(), tp->root(), tq.get(), tq->root());

    while (!heap.empty()) {
        const Cand c = heap.top();
        heap.pop();
        if (best.found) {
            if (c.lb > best.value) break;
            if (c.lb == best.value &&
                (c.min_a > best.a_id || (c.min_a == best.a_id && c.min_b >= best.b_id)))
                continue;
        }
        const auto& na = c.tp->node(c.np);
        const auto& nb = c.tq->node(c.nq);
        const bool leaf_a = na.left < 0;
        const bool leaf_b = nb.left < 0;
        if (leaf_a && leaf_b) {
            for (int i = na.lo; i < na.hi; ++i) {
                const auto& ea = c.tp->entry(i);
                if (ea.dead) continue;
                for (int j = nb.lo; j < nb.hi; ++j) {
                    const auto& eb = c.tq->entry(j);
                    if (eb.dead) continue;
                    Point pa{ea.x, ea.y, ea.id}, pb{eb.x, eb.y, eb.id};
                    const double v = cost(pa, pb, cp) - ea.w + eb.w;
                    if (best.improves(v, ea.id, eb.id)) {
                        best.value = v;
                        best.a_id = ea.id;
                        best.b_id = eb.id;
                        best.found = true;
                    }
                }
            }
            continue;
        }
        // split the node with more live entries (prefer splitting non-leaves)
        const bool split_a = !leaf_a && (leaf_b || na.live >= nb.live);
        if (split_a) {
            push(c.tp, na.left, c.tq, c.nq);
            push(c.tp, na.right, c.tq, c.nq);
        } else {
            push(c.tp, c.np, c.tq, nb.left);
            push(c.tp, c.np, c.tq, nb.right);
        }
    }
    if (!best.found) return std::nullopt;
    return BcpResult{best.a_id, best.b_id, best.value};
}

std::optional<NnResult> query_nn(const Side& side, const Point& point, const CostParams& cp) {
    ++g_bcp_ops;
    if (side.empty()) return std::nullopt;

    struct NCand {
        double lb;
        int min_id;
        const StaticTree* t;
        int n;
        bool operator>(const NCand& o) const {
            if (lb != o.lb) return lb > o.lb;
            return min_id > o.min_id;
        }
    };
    double best = std::numeric_limits<double>::infinity();
    int best_id = std::numeric_limits<int>::max();
    bool found = false;
    std::priority_queue<NCand, std::vector<NCand>, std::greater<NCand>> heap;

    auto push = [&](const StaticTree* t, int n) {
        const auto& nd = t->node(n);
        if (nd.live == 0) return;
        const double gx = std::max({0.0, nd.xlo - point.x, point.x - nd.xhi});
        const double gy = std::max({0.0, nd.ylo - point.y, point.y - nd.yhi});
        Point o{0.0, 0.0, -1}, g{gx, gy, -1};
        const double lb = power_sum_to_cost(lp_power_sum(o, g, cp.p), cp) + nd.wmin;
        heap.push(NCand{lb, nd.min_id, t, n});
    };
    for (const auto& t : side.trees()) push(t.get(), t->root());

    while (!heap.empty()) {
        const NCand c = heap.top();
        heap.pop();
        if (found && (c.lb > best || (c.lb == best && c.min_id >= best_id))) {
            if (c.lb > best) break;
            continue;
        }
        const auto& nd = c.t->node(c.n);
        if (nd.left < 0) {
            for (int i = nd.lo; i < nd.hi; ++i) {
                const auto& e = c.t->entry(i);
                if (e.dead) continue;
                Point pb{e.x, e.y, e.id};
                const double v = cost(point, pb, cp) + e.w;
                if (!found || v < best || (v == best && e.id < best_id)) {
                    best = v;
                    best_id = e.id;
                    found = true;
                }
            }
        } else {
            push(c.t, nd.left);
            push(c.t, nd.right);
        }
    }
    if (!found) return std::nullopt;
    return NnResult{best_id, best};
}

// ---------------------------------------------------------------------------
// BcpStructure
// ---------------------------------------------------------------------------

void BcpStructure::insert(BcpSideId side, const WeightedPoint& wp) {
    side_of(side).insert(wp);
    log_.push_back(UpdateRecord{UpdateRecord::Kind::Insert, side, wp, next_serial_++});
}

void BcpStructure::erase(BcpSideId side, int id) {
    const WeightedPoint wp = side_of(side).erase(id);
    log_.push_back(UpdateRecord{UpdateRecord::Kind::Delete, side, wp, next_serial_++});
}

std::optional<BcpResult> BcpStructure::query_min() const { return query_pair_min(p_, q_, params_); }

std::optional<NnResult> BcpStructure::nn(BcpSideId side, const Point& point) const {
    return query_nn(side_of(side), point, params_);
}

BcpStructure::Token BcpStructure::checkpoint() const {
    return Token{log_.size(), log_.empty() ? 0 : log_.back().serial, this};
}

void BcpStructure::rewind(const Token& token) {
    if (token.owner != this) throw std::invalid_argument("bcp: token from another structure");
    if (token.log_size > log_.size())
        throw std::invalid_argument("bcp: stale token (already rewound past)");
    if (token.log_size > 0 && log_[token.log_size - 1].serial != token.tail_serial)
        throw std::invalid_argument("bcp: stale token (log diverged)");
    while (log_.size() > token.log_size) {
        const UpdateRecord rec = log_.back();
        log_.pop_back();
        if (rec.kind == UpdateRecord::Kind::Insert)
            side_of(rec.side).erase(rec.wp.point.id);
        else
            side_of(rec.side).insert(rec.wp);
    }
}

void BcpStructure::bulk_load(BcpSideId side, const std::vector<WeightedPoint>& pts) {
    if (!log_.empty()) throw std::logic_error("bcp: bulk_load requires an empty log");
    side_of(side).bulk_load(pts);
}

}  // namespace gpm
