#include "gpm/cost_scaling.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <stdexcept>
#include <tuple>

namespace gpm {

namespace {

double ipow_d(double x, int e) {
    double r = 1.0;
    while (e > 0) {
        if (e & 1) r *= x;
        x *= x;
        e >>= 1;
    }
    return r;
}

}  // namespace

ApproxMatcher::ApproxMatcher(std::vector<Point> a, std::vector<Point> b, int k,
                             const CostParams& params, Options opt)
    : a_(std::move(a)), b_(std::move(b)), params_(params), opt_(std::move(opt)) {
    if (opt_.epsilon <= 0.0) throw std::invalid_argument("epsilon must be positive");
    net_ = build_network(static_cast<int>(a_.size()), static_cast<int>(b_.size()), k, params_);
    for (int i = 0; i < net_.r; ++i) a_[i].id = i;
    for (int j = 0; j < net_.n; ++j) b_[j].id = j;

    SpanningForestState forest(a_, b_, params_);
    const auto& es = forest.edges();
    int i_star = -1;
    for (int i = 0; i < static_cast<int>(es.size()); ++i) {
        if (forest.add_edge(i) >= k) {
            i_star = i;
            break;
        }
    }
    if (i_star < 0) throw std::logic_error("starting scale: no intra-cluster matching of size k");
    e_star_ = es[i_star].cost;
    zero_cost_pairs_ = forest.intra_cluster_matching(k);
    theta_bar_ = ipow_d(static_cast<double>(net_.r + net_.n), params_.q) * e_star_;
    theta_lo_ = opt_.epsilon / (6.0 * static_cast<double>(k)) * e_star_;
}

// ---------------------------------------------------------------------------
// potentials and status
// ---------------------------------------------------------------------------

ApproxMatcher::i128 ApproxMatcher::recovered_m(int v) const {
    if (v == FlowNetwork::kS || v == FlowNetwork::kT || alive_[v]) return true_m(v);
    return net_.is_a(v) ? true_m(FlowNetwork::kS) : true_m(FlowNetwork::kT);
}

double ApproxMatcher::potential(int v) const { return fl_units(recovered_m(v)); }

ApproxMatcher::i128 ApproxMatcher::potential_units(int v) const { return recovered_m(v); }

void ApproxMatcher::recompute_alive(int v, std::vector<int>* dirty) {
    if (v == FlowNetwork::kS || v == FlowNetwork::kT) return;
    bool now;
    if (net_.is_a(v)) {
        const int ia = net_.a_index(v);
        now = f_->imbalance(v) != 0 || f_->left_saturated(ia) || !f_->bip_out(ia).empty();
    } else {
        const int jb = net_.b_index(v);
        now = f_->imbalance(v) != 0 || f_->right_saturated(jb) || !f_->bip_in(jb).empty();
    }
    if (now == static_cast<bool>(alive_[v])) return;
    alive_[v] = now;
    if (now) {
        // birth: recover the potential from s (dead A) / t (dead B)
        m_[v] = net_.is_a(v) ? true_m(FlowNetwork::kS) : true_m(FlowNetwork::kT);
        if (net_.is_a(v))
            dead_a_.erase(net_.a_index(v));
        else
            dead_b_.erase(net_.b_index(v));
    } else {
        if (net_.is_a(v))
            dead_a_.insert(WeightedPoint{a_[net_.a_index(v)], 0.0});
        else
            dead_b_.insert(WeightedPoint{b_[net_.b_index(v)], 0.0});
    }
    if (dirty) dirty->push_back(v);
}

void ApproxMatcher::enter_x(int v) {
    in_x_[v] = 1;
    gamma_m_[v] = m_[v] - delta_m_;
    search_log_.push_back(v);
    if (v == FlowNetwork::kS) return;
    if (v == FlowNetwork::kT) {
        for (int jb : f_->right_saturated_set()) {
            const int w = net_.b_node(jb);
            if (in_x_[w]) continue;
            const double key = redcost(0.0, gamma_m_[v] - m_[w]);
            heap_back_.push_back(BackArc{key, v, w, Arc::right(jb)});
            std::push_heap(heap_back_.begin(), heap_back_.end(),
                           [](const BackArc& x, const BackArc& y) { return x.key > y.key; });
        }
        return;
    }
    if (net_.is_a(v)) {
        const int ia = net_.a_index(v);
        alive_a_x_.insert(WeightedPoint{a_[ia], fl_units(gamma_m_[v])});
        if (f_->left_saturated(ia) && !in_x_[FlowNetwork::kS]) {
            const double key = redcost(0.0, gamma_m_[v] - m_[FlowNetwork::kS]);
            heap_back_.push_back(BackArc{key, v, FlowNetwork::kS, Arc::left(ia)});
            std::push_heap(heap_back_.begin(), heap_back_.end(),
                           [](const BackArc& x, const BackArc& y) { return x.key > y.key; });
        }
    } else {
        const int jb = net_.b_index(v);
        alive_b_out_.erase(jb);
        pq_t_b_.push_back({gamma_m_[v], v});
        std::push_heap(pq_t_b_.begin(), pq_t_b_.end());
        for (int ia : f_->bip_in(jb)) {
            const int w = net_.a_node(ia);
            if (in_x_[w]) continue;
            const double key = redcost(-cost(a_[ia], b_[jb], params_), gamma_m_[v] - m_[w]);
            heap_back_.push_back(BackArc{key, v, w, Arc::bipartite(ia, jb)});
            std::push_heap(heap_back_.begin(), heap_back_.end(),
                           [](const BackArc& x, const BackArc& y) { return x.key > y.key; });
        }
    }
}

void ApproxMatcher::leave_x(int v) {
    m_[v] = gamma_m_[v] + delta_m_;
    in_x_[v] = 0;
    if (v == FlowNetwork::kS || v == FlowNetwork::kT) return;
    if (net_.is_a(v)) {
        alive_a_x_.erase(net_.a_index(v));
    } else if (alive_[v]) {
        alive_b_out_.insert(WeightedPoint{b_[net_.b_index(v)], fl_units(m_[v])});
    }
}

void ApproxMatcher::refresh_alive_sides() {
    alive_a_x_.clear();
    std::vector<WeightedPoint> bs;
    for (int v = 2 + net_.r; v < net_.node_count(); ++v)
        if (alive_[v] && !in_x_[v])
            bs.push_back(WeightedPoint{b_[net_.b_index(v)], fl_units(m_[v])});
    alive_b_out_.clear();
    for (const auto& wp : bs) alive_b_out_.insert(wp);
}

// ---------------------------------------------------------------------------
// Scale-Init
// ---------------------------------------------------------------------------

void ApproxMatcher::scale_init(bool first) {
    if (first) {
        // f = 0, pi = 0: theta_bar-optimal by the starting-scale bound
        return;
    }
    theta_ *= 0.5;
    m_[FlowNetwork::kS] *= 2;
    m_[FlowNetwork::kT] = m_[FlowNetwork::kT] * 2 + 3;
    for (int v = 2; v < net_.node_count(); ++v) {
        if (!alive_[v]) continue;
        m_[v] = m_[v] * 2 + (net_.is_a(v) ? 1 : 2);
    }

    // desaturate every backward arc with reduced cost below -theta
    std::vector<Arc> doomed;
    for (int ia = 0; ia < net_.r; ++ia) {
        if (f_->left_saturated(ia) && m_[net_.a_node(ia)] > m_[FlowNetwork::kS] + 1)
            doomed.push_back(Arc::left(ia));
        for (int jb : f_->bip_out(ia)) {
            const int va = net_.a_node(ia), vb = net_.b_node(jb);
            if (redcost(-cost(a_[ia], b_[jb], params_), m_[vb] - m_[va]) < -theta_)
                doomed.push_back(Arc::bipartite(ia, jb));
        }
    }
    for (int jb : f_->right_saturated_set())
        if (m_[FlowNetwork::kT] - m_[net_.b_node(jb)] > 1) doomed.push_back(Arc::right(jb));

    for (const Arc& arc : doomed) {
        f_->desaturate(arc);
        switch (arc.kind) {
            case Arc::Kind::Left: recompute_alive(net_.a_node(arc.a), nullptr); break;
            case Arc::Kind::Right: recompute_alive(net_.b_node(arc.b), nullptr); break;
            case Arc::Kind::Bipartite:
                recompute_alive(net_.a_node(arc.a), nullptr);
                recompute_alive(net_.b_node(arc.b), nullptr);
                break;
        }
    }
    if (f_->total_excess() > 3LL * net_.k)
        throw std::logic_error("scale-init produced more than 3k excess");
    refresh_alive_sides();
}

// ---------------------------------------------------------------------------
// Hungarian search over alive paths
// ---------------------------------------------------------------------------

std::optional<ApproxMatcher::Cand> ApproxMatcher::best_candidate() {
    std::optional<Cand> best;
    auto consider = [&](Cand c) {
        c.value = redcost(c.cgeo, c.dm);
        if (!best || c.value < best->value ||
            (c.value == best->value &&
             std::tie(c.kind, c.id1, c.id2) < std::tie(best->kind, best->id1, best->id2)))
            best = c;
    };

    // kind 0: backward arcs
    while (!heap_back_.empty()) {
        const BackArc& top = heap_back_.front();
        if (in_x_[top.head]) {
            std::pop_heap(heap_back_.begin(), heap_back_.end(),
                          [](const BackArc& x, const BackArc& y) { return x.key > y.key; });
            heap_back_.pop_back();
            continue;
        }
        Cand c;
        c.kind = 0;
        c.id1 = top.tail;
        c.id2 = top.head;
        c.cgeo = (top.arc.kind == Arc::Kind::Bipartite)
                     ? -cost(a_[top.arc.a], b_[top.arc.b], params_)
                     : 0.0;
        c.dm = (gamma_m_[top.tail] + delta_m_) - m_[top.head];
        c.head = top.head;
        consider(c);
        break;
    }

    const bool s_in_x = in_x_[FlowNetwork::kS];
    const bool t_in_x = in_x_[FlowNetwork::kT];

    // kind 1: s -> a, alive a outside X
    if (s_in_x) {
        while (!pq_s_a_.empty()) {
            auto [mv, v] = pq_s_a_.front();
            if (in_x_[v]) {
                std::pop_heap(pq_s_a_.begin(), pq_s_a_.end(), std::greater<>{});
                pq_s_a_.pop_back();
                continue;
            }
            Cand c;
            c.kind = 1;
            c.id1 = v;
            c.cgeo = 0.0;
            c.dm = (gamma_m_[FlowNetwork::kS] + delta_m_) - mv;
            c.head = v;
            consider(c);
            break;
        }
    }

    // kind 2: b -> t, alive b in X
    if (!t_in_x && !pq_t_b_.empty()) {
        auto [gm, v] = pq_t_b_.front();
        Cand c;
        c.kind = 2;
        c.id1 = v;
        c.cgeo = 0.0;
        c.dm = (gm + delta_m_) - m_[FlowNetwork::kT];
        c.head = FlowNetwork::kT;
        consider(c);
    }

    // kind 3: bipartite alive-alive
    if (auto q = query_pair_min(alive_a_x_, alive_b_out_, params_)) {
        Cand c;
        c.kind = 3;
        c.id1 = q->a_id;
        c.id2 = q->b_id;
        c.cgeo = cost(a_[q->a_id], b_[q->b_id], params_);
        c.dm = (gamma_m_[net_.a_node(q->a_id)] + delta_m_) - m_[net_.b_node(q->b_id)];
        c.head = net_.b_node(q->b_id);
        consider(c);
    }

    // kind 4: length-2 path s -> v -> b (dead v)
    if (s_in_x) {
        if (auto q = query_pair_min(dead_a_, alive_b_out_, params_)) {
            Cand c;
            c.kind = 4;
            c.id1 = q->a_id;
            c.id2 = q->b_id;
            c.cgeo = cost(a_[q->a_id], b_[q->b_id], params_);
            c.dm = (gamma_m_[FlowNetwork::kS] + delta_m_) - m_[net_.b_node(q->b_id)];
            c.head = net_.b_node(q->b_id);
            c.interior_a = q->a_id;
            consider(c);
        }
    }

    // kind 5: length-2 path a -> w -> t (dead w)
    if (!t_in_x) {
        if (auto q = query_pair_min(alive_a_x_, dead_b_, params_)) {
            Cand c;
            c.kind = 5;
            c.id1 = q->a_id;
            c.id2 = q->b_id;
            c.cgeo = cost(a_[q->a_id], b_[q->b_id], params_);
            c.dm = (gamma_m_[net_.a_node(q->a_id)] + delta_m_) - m_[FlowNetwork::kT];
            c.head = FlowNetwork::kT;
            c.interior_b = q->b_id;
            consider(c);
        }
    }

    // kind 6: length-3 path s -> v -> w -> t
    if (s_in_x && !t_in_x) {
        if (auto q = query_pair_min(dead_a_, dead_b_, params_)) {
            Cand c;
            c.kind = 6;
            c.id1 = q->a_id;
            c.id2 = q->b_id;
            c.cgeo = cost(a_[q->a_id], b_[q->b_id], params_);
            c.dm = (gamma_m_[FlowNetwork::kS] + delta_m_) - m_[FlowNetwork::kT];
            c.head = FlowNetwork::kT;
            c.interior_a = q->a_id;
            c.interior_b = q->b_id;
            consider(c);
        }
    }
    return best;
}

void ApproxMatcher::relax(const Cand& c) {
    // raise X potentials in quanta of theta until the chosen path is
    // admissible: minimal R with redcost(cgeo, dm + R) <= 0
    if (redcost(c.cgeo, c.dm) > 0.0) {
        i128 rr = static_cast<i128>(std::ceil(redcost(c.cgeo, c.dm) / theta_));
        if (rr < 0) rr = 0;
        while (redcost(c.cgeo, c.dm + rr) > 0.0) ++rr;
        while (rr > 0 && redcost(c.cgeo, c.dm + (rr - 1)) <= 0.0) --rr;
        delta_m_ += rr;
    }
    ++stats_.relaxations;
    if (node_deficit(c.head)) {
        terminal_ = c.head;
        return;
    }
    enter_x(c.head);
}

void ApproxMatcher::hungarian_search_refine() {
    // rebuild the per-search queues
    heap_back_.clear();
    pq_s_a_.clear();
    pq_t_b_.clear();
    for (int v = 2; v < 2 + net_.r; ++v)
        if (alive_[v] && !in_x_[v]) pq_s_a_.push_back({m_[v], v});
    std::make_heap(pq_s_a_.begin(), pq_s_a_.end(), std::greater<>{});
    for (int v : x_roots_) {
        if (net_.is_b(v)) pq_t_b_.push_back({gamma_m_[v], v});
        // backward arcs out of the roots
        if (net_.is_a(v)) {
            const int ia = net_.a_index(v);
            if (f_->left_saturated(ia) && !in_x_[FlowNetwork::kS])
                heap_back_.push_back(
                    BackArc{redcost(0.0, gamma_m_[v] - m_[FlowNetwork::kS]), v, FlowNetwork::kS,
                            Arc::left(ia)});
        } else if (net_.is_b(v)) {
            const int jb = net_.b_index(v);
            for (int ia : f_->bip_in(jb)) {
                const int w = net_.a_node(ia);
                if (in_x_[w]) continue;
                heap_back_.push_back(
                    BackArc{redcost(-cost(a_[ia], b_[jb], params_), gamma_m_[v] - m_[w]), v, w,
                            Arc::bipartite(ia, jb)});
            }
        }
    }
    std::make_heap(pq_t_b_.begin(), pq_t_b_.end());
    std::make_heap(heap_back_.begin(), heap_back_.end(),
                   [](const BackArc& x, const BackArc& y) { return x.key > y.key; });

    terminal_ = -1;
    search_log_.clear();
    while (terminal_ < 0) {
        auto c = best_candidate();
        if (!c) throw std::logic_error("hungarian search: no deficit reachable");
        relax(*c);
        if (static_cast<long long>(search_log_.size()) > 27LL * net_.k + 16)
            throw std::logic_error("hungarian search explored more than O(k) nodes (Lemma 7)");
    }
}

void ApproxMatcher::unwind_search() {
    for (auto it = search_log_.rbegin(); it != search_log_.rend(); ++it) leave_x(*it);
    search_log_.clear();
}

// ---------------------------------------------------------------------------
// Blocking flow
// ---------------------------------------------------------------------------

struct ApproxMatcher::Dfs {
    ApproxMatcher& M;
    std::vector<int> blocked_stamp, stack_stamp;
    int pass_epoch = 0, attempt_epoch = 0;
    std::set<std::pair<i128, int>> alive_a_avail;  // (m, a-node), s->a candidates
    std::vector<int> dirty;
    std::vector<std::pair<int, int>> temp_removed;  // (side: 0 aliveB, node)
    std::vector<int> touched_nodes;
    bool s_blocked = false, t_blocked = false;

    explicit Dfs(ApproxMatcher& m)
        : M(m), blocked_stamp(m.net_.node_count(), -1), stack_stamp(m.net_.node_count(), -1) {}

    bool blocked(int v) const {
        if (v == FlowNetwork::kS) return s_blocked;
        if (v == FlowNetwork::kT) return t_blocked;
        return blocked_stamp[v] == pass_epoch;
    }
    bool on_stack(int v) const { return stack_stamp[v] == attempt_epoch; }

    void block(int v) {
        if (v == FlowNetwork::kS) { s_blocked = true; return; }
        if (v == FlowNetwork::kT) { t_blocked = true; return; }
        blocked_stamp[v] = pass_epoch;
        if (M.net_.is_b(v)) {
            const int jb = M.net_.b_index(v);
            if (M.alive_b_out_.contains(jb)) M.alive_b_out_.erase(jb);
            dirty.push_back(v);
        } else {
            alive_a_avail.erase({M.m_[v], v});
        }
    }

    // hide a node from forward queries while it sits on the DFS stack
    void hide(int v) {
        stack_stamp[v] = attempt_epoch;
        if (M.net_.is_b(v)) {
            const int jb = M.net_.b_index(v);
            if (M.alive_b_out_.contains(jb)) {
                M.alive_b_out_.erase(jb);
                temp_removed.push_back({0, v});
                dirty.push_back(v);
            }
        } else if (M.net_.is_a(v)) {
            alive_a_avail.erase({M.m_[v], v});
            temp_removed.push_back({1, v});
        }
    }

    void unhide_all() {
        for (auto& [kind, v] : temp_removed) {
            if (blocked(v)) continue;
            if (kind == 0) {
                const int jb = M.net_.b_index(v);
                if (M.alive_[v] && !M.alive_b_out_.contains(jb))
                    M.alive_b_out_.insert(WeightedPoint{M.b_[jb], M.fl_units(M.true_m(v))});
            } else {
                if (M.alive_[v]) alive_a_avail.insert({M.m_[v], v});
            }
        }
        temp_removed.clear();
    }

    struct Move {
        std::vector<ResidualArc> arcs;
        int next = -1;
        std::vector<int> path_nodes;  // nodes whose status may change (incl. interiors)
    };

    // admissibility, canonical form
    bool adm(double cgeo, i128 dm) const { return M.redcost(cgeo, dm) <= 0.0; }

    std::optional<Move> find_move(int u, bool& saw_stack_skip) {
        const auto& net = M.net_;
        auto& f = *M.f_;
        // backward arcs first
        if (net.is_a(u)) {
            const int ia = net.a_index(u);
            if (f.left_saturated(ia) && !blocked(FlowNetwork::kS) && !on_stack(FlowNetwork::kS)) {
                if (M.true_m(FlowNetwork::kS) <= M.true_m(u)) {
                    Move mv;
                    mv.arcs.push_back(ResidualArc{Arc::left(ia), false});
                    mv.next = FlowNetwork::kS;
                    return mv;
                }
            } else if (f.left_saturated(ia) && on_stack(FlowNetwork::kS)) {
                if (M.true_m(FlowNetwork::kS) <= M.true_m(u)) saw_stack_skip = true;
            }
        } else if (net.is_b(u)) {
            const int jb = net.b_index(u);
            for (int ia : f.bip_in(jb)) {
                const int w = net.a_node(ia);
                const bool admissible =
                    adm(-cost(M.a_[ia], M.b_[jb], M.params_), M.true_m(u) - M.true_m(w));
                if (!admissible) continue;
                if (on_stack(w)) { saw_stack_skip = true; continue; }
                if (blocked(w)) continue;
                Move mv;
                mv.arcs.push_back(ResidualArc{Arc::bipartite(ia, jb), false});
                mv.next = w;
                return mv;
            }
        } else if (u == FlowNetwork::kT) {
            for (int jb : f.right_saturated_set()) {
                const int w = net.b_node(jb);
                if (M.true_m(w) > M.true_m(u)) continue;
                if (on_stack(w)) { saw_stack_skip = true; continue; }
                if (blocked(w)) continue;
                Move mv;
                mv.arcs.push_back(ResidualArc{Arc::right(jb), false});
                mv.next = w;
                return mv;
            }
        }

        // forward moves
        if (u == FlowNetwork::kS) {
            // s -> a
            while (!alive_a_avail.empty()) {
                auto [mv_m, v] = *alive_a_avail.begin();
                if (mv_m > M.true_m(u)) break;  // not admissible, and min over set
                Move mv;
                mv.arcs.push_back(ResidualArc{Arc::left(net.a_index(v)), true});
                mv.next = v;
                return mv;
            }
            // s -> v -> b jump over dead v
            if (auto q = query_pair_min(M.dead_a_, M.alive_b_out_, M.params_)) {
                const int vb = net.b_node(q->b_id);
                if (adm(cost(M.a_[q->a_id], M.b_[q->b_id], M.params_),
                        M.true_m(u) - M.true_m(vb))) {
                    Move mv;
                    mv.arcs.push_back(ResidualArc{Arc::left(q->a_id), true});
                    mv.arcs.push_back(ResidualArc{Arc::bipartite(q->a_id, q->b_id), true});
                    mv.next = vb;
                    mv.path_nodes.push_back(net.a_node(q->a_id));
                    return mv;
                }
            }
            // s -> v -> w -> t jump
            if (!blocked(FlowNetwork::kT) && !on_stack(FlowNetwork::kT)) {
                if (auto q = query_pair_min(M.dead_a_, M.dead_b_, M.params_)) {
                    if (adm(cost(M.a_[q->a_id], M.b_[q->b_id], M.params_),
                            M.true_m(u) - M.true_m(FlowNetwork::kT))) {
                        Move mv;
                        mv.arcs.push_back(ResidualArc{Arc::left(q->a_id), true});
                        mv.arcs.push_back(ResidualArc{Arc::bipartite(q->a_id, q->b_id), true});
                        mv.arcs.push_back(ResidualArc{Arc::right(q->b_id), true});
                        mv.next = FlowNetwork::kT;
                        mv.path_nodes.push_back(net.a_node(q->a_id));
                        mv.path_nodes.push_back(net.b_node(q->b_id));
                        return mv;
                    }
                }
            }
            return std::nullopt;
        }  // u == s
        if (net.is_a(u)) {
            const int ia = net.a_index(u);
            // a -> b forward; skip pairs already saturated (temp-delete + requery)
            std::vector<WeightedPoint> shelved;
            std::optional<Move> result;
            while (true) {
                auto q = query_nn(M.alive_b_out_, M.a_[ia], M.params_);
                if (!q) break;
                const int vb = net.b_node(q->id);
                if (!adm(cost(M.a_[ia], M.b_[q->id], M.params_), M.true_m(u) - M.true_m(vb)))
                    break;
                if (f.bip_saturated(ia, q->id)) {
                    shelved.push_back(M.alive_b_out_.get(q->id));
                    M.alive_b_out_.erase(q->id);
                    continue;
                }
                Move mv;
                mv.arcs.push_back(ResidualArc{Arc::bipartite(ia, q->id), true});
                mv.next = vb;
                result = mv;
                break;
            }
            for (const auto& wp : shelved) M.alive_b_out_.insert(wp);
            if (result) return result;
            // a -> w -> t jump over dead w
            if (!blocked(FlowNetwork::kT) && !on_stack(FlowNetwork::kT)) {
                if (auto q = query_nn(M.dead_b_, M.a_[ia], M.params_)) {
                    if (adm(cost(M.a_[ia], M.b_[q->id], M.params_),
                            M.true_m(u) - M.true_m(FlowNetwork::kT))) {
                        Move mv;
                        mv.arcs.push_back(ResidualArc{Arc::bipartite(ia, q->id), true});
                        mv.arcs.push_back(ResidualArc{Arc::right(q->id), true});
                        mv.next = FlowNetwork::kT;
                        mv.path_nodes.push_back(net.b_node(q->id));
                        return mv;
                    }
                }
            }
            return std::nullopt;
        }
        if (net.is_b(u)) {
            const int jb = net.b_index(u);
            if (!f.right_saturated(jb) && M.true_m(FlowNetwork::kT) <= M.true_m(u)) {
                if (on_stack(FlowNetwork::kT)) {
                    saw_stack_skip = true;
                } else if (!blocked(FlowNetwork::kT)) {
                    Move mv;
                    mv.arcs.push_back(ResidualArc{Arc::right(jb), true});
                    mv.next = FlowNetwork::kT;
                    return mv;
                }
            }
            return std::nullopt;
        }
        return std::nullopt;  // u == t: no forward arcs
    }

    void apply_path(const std::vector<Move>& stack_moves, int root) {
        std::vector<ResidualArc> arcs;
        std::vector<int> nodes{root};
        for (const Move& mv : stack_moves) {
            for (const auto& ra : mv.arcs) arcs.push_back(ra);
            for (int v : mv.path_nodes) nodes.push_back(v);
            if (mv.next >= 0) nodes.push_back(mv.next);
        }
        M.f_->augment_by(arcs);
        for (int v : nodes) touched_nodes.push_back(v);
        for (int v : nodes) {
            const bool was_alive = M.alive_[v] || v < 2;
            M.recompute_alive(v, &dirty);
            if (!was_alive && M.alive_[v]) {
                // fresh alive node joins the query structures
                if (M.net_.is_b(v)) {
                    const int jb = M.net_.b_index(v);
                    if (!M.alive_b_out_.contains(jb) && !blocked(v) && !on_stack(v))
                        M.alive_b_out_.insert(WeightedPoint{M.b_[jb], M.fl_units(M.m_[v])});
                    dirty.push_back(v);
                } else if (M.net_.is_a(v)) {
                    if (!blocked(v) && !on_stack(v)) alive_a_avail.insert({M.m_[v], v});
                }
            } else if (was_alive && !M.alive_[v]) {
                // death: drop out of the alive-side structures
                if (M.net_.is_b(v)) {
                    const int jb = M.net_.b_index(v);
                    if (M.alive_b_out_.contains(jb)) M.alive_b_out_.erase(jb);
                    dirty.push_back(v);
                } else if (M.net_.is_a(v)) {
                    alive_a_avail.erase({M.m_[v], v});
                }
                if (M.in_x_[v]) M.leave_x(v);
            }
            // s -> a consumption / release for the avail set
            if (M.net_.is_a(v) && M.alive_[v] && !blocked(v) && !on_stack(v)) {
                const int ia = M.net_.a_index(v);
                if (M.f_->left_saturated(ia))
                    alive_a_avail.erase({M.m_[v], v});
            }
        }
    }
};

void ApproxMatcher::blocking_flow() {
    Dfs dfs(*this);

    // complete mode: excess B roots become visible to forward queries
    for (int v : x_roots_) {
        if (!net_.is_b(v) || !alive_[v]) continue;
        const int jb = net_.b_index(v);
        if (!alive_b_out_.contains(jb))
            alive_b_out_.insert(WeightedPoint{b_[jb], fl_units(true_m(v))});
        dfs.dirty.push_back(v);
    }

    bool progress = true;
    while (progress && f_->total_excess() > 0) {
        progress = false;
        ++dfs.pass_epoch;
        dfs.s_blocked = dfs.t_blocked = false;
        // rebuild the s->a availability set for this pass
        dfs.alive_a_avail.clear();
        for (int v = 2; v < 2 + net_.r; ++v)
            if (alive_[v] && !f_->left_saturated(net_.a_index(v)))
                dfs.alive_a_avail.insert({true_m(v), v});
        // reconcile dirty B membership for complete mode
        std::sort(dfs.dirty.begin(), dfs.dirty.end());
        dfs.dirty.erase(std::unique(dfs.dirty.begin(), dfs.dirty.end()), dfs.dirty.end());
        for (int v : dfs.dirty) {
            if (!net_.is_b(v)) continue;
            const int jb = net_.b_index(v);
            if (alive_[v] && !alive_b_out_.contains(jb))
                alive_b_out_.insert(WeightedPoint{b_[jb], fl_units(true_m(v))});
            if (!alive_[v] && alive_b_out_.contains(jb)) alive_b_out_.erase(jb);
        }

        std::vector<int> roots;
        for (int v = 0; v < net_.node_count(); ++v)
            if (f_->imbalance(v) > 0) roots.push_back(v);

        for (int root : roots) {
            while (f_->imbalance(root) > 0 && !dfs.blocked(root)) {
                // one DFS attempt from root
                ++dfs.attempt_epoch;
                dfs.hide(root);
                std::vector<int> node_stack{root};
                std::vector<Dfs::Move> move_stack;
                bool extracted = false;
                while (!node_stack.empty()) {
                    const int u = node_stack.back();
                    bool saw_stack_skip = false;
                    auto mv = dfs.find_move(u, saw_stack_skip);
                    if (!mv) {
                        if (!saw_stack_skip) dfs.block(u);
                        node_stack.pop_back();
                        if (!move_stack.empty()) move_stack.pop_back();
                        continue;
                    }
                    if (node_deficit(mv->next)) {
                        move_stack.push_back(*mv);
                        dfs.apply_path(move_stack, root);
                        ++stats_.paths_extracted;
                        extracted = true;
                        break;
                    }
                    dfs.hide(mv->next);
                    node_stack.push_back(mv->next);
                    move_stack.push_back(*mv);
                }
                dfs.unhide_all();
                if (extracted)
                    progress = true;
                else
                    break;
            }
        }
    }

    // frontier mode: reconcile every touched B node against (alive, in X)
    std::sort(dfs.dirty.begin(), dfs.dirty.end());
    dfs.dirty.erase(std::unique(dfs.dirty.begin(), dfs.dirty.end()), dfs.dirty.end());
    for (int v : dfs.dirty) {
        if (!net_.is_b(v)) continue;
        const int jb = net_.b_index(v);
        const bool should = alive_[v] && !in_x_[v];
        if (should && !alive_b_out_.contains(jb))
            alive_b_out_.insert(WeightedPoint{b_[jb], fl_units(true_m(v))});
        if (!should && alive_b_out_.contains(jb)) alive_b_out_.erase(jb);
    }
}

void ApproxMatcher::commit_iteration() {
    // drained roots leave X
    std::vector<int> still;
    for (int v : x_roots_) {
        if (!in_x_[v]) continue;  // died during blocking
        if (f_->imbalance(v) > 0) {
            still.push_back(v);
            continue;
        }
        leave_x(v);
    }
    x_roots_ = std::move(still);
}

// ---------------------------------------------------------------------------
// Refine
// ---------------------------------------------------------------------------

void ApproxMatcher::refine() {
    x_roots_.clear();
    for (int v = 0; v < net_.node_count(); ++v) {
        if (f_->imbalance(v) > 0) {
            in_x_[v] = 1;
            gamma_m_[v] = m_[v] - delta_m_;
            if (net_.is_a(v)) {
                alive_a_x_.insert(WeightedPoint{a_[net_.a_index(v)], fl_units(gamma_m_[v])});
            } else if (net_.is_b(v)) {
                const int jb = net_.b_index(v);
                if (alive_b_out_.contains(jb)) alive_b_out_.erase(jb);
            }
            x_roots_.push_back(v);
        }
    }

    int iterations = 0;
    while (f_->total_excess() > 0) {
        ++iterations;
        hungarian_search_refine();
        unwind_search();
        blocking_flow();
        commit_iteration();
        if (opt_.on_refine_iteration) opt_.on_refine_iteration(*this);
        if (iterations > 8 * (net_.k + 8))
            throw std::logic_error("refine failed to drain excess");
    }
    if (!x_roots_.empty()) throw std::logic_error("refine left stale roots in X");
    stats_.refine_iterations += iterations;
    stats_.per_scale.back().refine_iterations = iterations;
}

// ---------------------------------------------------------------------------
// solve
// ---------------------------------------------------------------------------

Matching ApproxMatcher::solve() {
    Matching m;
    if (e_star_ == 0.0) {
        // a zero-cost size-k matching exists; the scale loop would divide by 0
        m.pairs = zero_cost_pairs_;
        std::sort(m.pairs.begin(), m.pairs.end());
        m.cost = 0.0;
        for (const auto& [i, j] : m.pairs) m.cost += cost(a_[i], b_[j], params_);
        return m;
    }

    const int total = net_.node_count();
    m_.assign(total, 0);
    gamma_m_.assign(total, 0);
    delta_m_ = 0;
    in_x_.assign(total, 0);
    alive_.assign(total, 0);
    alive_[FlowNetwork::kS] = alive_[FlowNetwork::kT] = 1;
    f_.emplace(net_);
    theta_ = theta_bar_;
    stats_ = Stats{};

    // everything starts dead: bulk-load the dead sides once
    {
        std::vector<WeightedPoint> da, db;
        for (int i = 0; i < net_.r; ++i) da.push_back(WeightedPoint{a_[i], 0.0});
        for (int j = 0; j < net_.n; ++j) db.push_back(WeightedPoint{b_[j], 0.0});
        dead_a_.bulk_load(da);
        dead_b_.bulk_load(db);
        alive_a_x_.clear();
        alive_b_out_.clear();
    }

    for (int scale = 0;; ++scale) {
        stats_.per_scale.push_back(ScaleRecord{theta_, 0, 0.0});
        scale_init(scale == 0);
        ++stats_.scales;
        if (opt_.on_scale_boundary) opt_.on_scale_boundary(*this, false);
        refine();
        if (!f_->is_circulation()) throw std::logic_error("refine did not return a circulation");
        if (f_->supp_size() > 3 * net_.k)
            throw std::logic_error("circulation support exceeds 3k (Lemma 1)");
        {
            double c = 0.0;
            std::vector<std::pair<int, int>> ps;
            for (int ia = 0; ia < net_.r; ++ia)
                for (int jb : f_->bip_out(ia)) ps.emplace_back(ia, jb);
            std::sort(ps.begin(), ps.end());
            for (const auto& [ia, jb] : ps) c += cost(a_[ia], b_[jb], params_);
            stats_.per_scale.back().circulation_cost = c;
        }
        if (opt_.on_scale_boundary) opt_.on_scale_boundary(*this, true);
        if (theta_ <= theta_lo_) break;
    }

    for (int ia = 0; ia < net_.r; ++ia)
        for (int jb : f_->bip_out(ia)) m.pairs.emplace_back(ia, jb);
    std::sort(m.pairs.begin(), m.pairs.end());
    if (static_cast<int>(m.pairs.size()) != net_.k)
        throw std::logic_error("final circulation does not encode a size-k matching");
    m.cost = 0.0;
    for (const auto& [i, j] : m.pairs) m.cost += cost(a_[i], b_[j], params_);
    return m;
}

// ---------------------------------------------------------------------------
// scans (test hooks)
// ---------------------------------------------------------------------------

bool ApproxMatcher::theta_optimal_scan() const {
    const i128 ms = recovered_m(FlowNetwork::kS);
    const i128 mt = recovered_m(FlowNetwork::kT);
    for (int ia = 0; ia < net_.r; ++ia) {
        const i128 ma = recovered_m(net_.a_node(ia));
        if (f_->left_saturated(ia)) {
            if (ma - ms > 1) return false;  // backward a->s
        } else {
            if (ms - ma > 1) return false;  // forward s->a
        }
        for (int jb = 0; jb < net_.n; ++jb) {
            const i128 mb = recovered_m(net_.b_node(jb));
            const double c = cost(a_[ia], b_[jb], params_);
            if (f_->bip_saturated(ia, jb)) {
                if (redcost(-c, mb - ma) < -theta_) return false;
            } else {
                if (redcost(c, ma - mb) < -theta_) return false;
            }
        }
    }
    for (int jb = 0; jb < net_.n; ++jb) {
        const i128 mb = recovered_m(net_.b_node(jb));
        if (f_->right_saturated(jb)) {
            if (mt - mb > 1) return false;  // backward t->b
        } else {
            if (mb - mt > 1) return false;  // forward b->t
        }
    }
    return true;
}

bool ApproxMatcher::no_admissible_augmenting_path() const {
    // BFS over admissible residual arcs from every excess node
    std::vector<char> seen(net_.node_count(), 0);
    std::vector<int> queue;
    for (int v = 0; v < net_.node_count(); ++v)
        if (f_->imbalance(v) > 0) {
            seen[v] = 1;
            queue.push_back(v);
        }
    auto adm = [&](double cgeo, i128 dm) { return redcost(cgeo, dm) <= 0.0; };
    for (size_t h = 0; h < queue.size(); ++h) {
        const int u = queue[h];
        if (f_->imbalance(u) < 0) return false;
        auto visit = [&](int w) {
            if (!seen[w]) {
                seen[w] = 1;
                queue.push_back(w);
            }
        };
        if (u == FlowNetwork::kS) {
            for (int ia = 0; ia < net_.r; ++ia)
                if (!f_->left_saturated(ia) &&
                    adm(0.0, recovered_m(u) - recovered_m(net_.a_node(ia))))
                    visit(net_.a_node(ia));
        } else if (u == FlowNetwork::kT) {
            for (int jb : f_->right_saturated_set())
                if (adm(0.0, recovered_m(u) - recovered_m(net_.b_node(jb))))
                    visit(net_.b_node(jb));
        } else if (net_.is_a(u)) {
            const int ia = net_.a_index(u);
            if (f_->left_saturated(ia) && adm(0.0, recovered_m(u) - recovered_m(FlowNetwork::kS)))
                visit(FlowNetwork::kS);
            for (int jb = 0; jb < net_.n; ++jb) {
                if (f_->bip_saturated(ia, jb)) continue;
                if (adm(cost(a_[ia], b_[jb], params_),
                        recovered_m(u) - recovered_m(net_.b_node(jb))))
                    visit(net_.b_node(jb));
            }
        } else {
            const int jb = net_.b_index(u);
            if (!f_->right_saturated(jb) &&
                adm(0.0, recovered_m(u) - recovered_m(FlowNetwork::kT)))
                visit(FlowNetwork::kT);
            for (int ia : f_->bip_in(jb))
                if (adm(-cost(a_[ia], b_[jb], params_),
                        recovered_m(u) - recovered_m(net_.a_node(ia))))
                    visit(net_.a_node(ia));
        }
    }
    return true;
}

bool ApproxMatcher::dead_degree_scan() const {
    for (int ia = 0; ia < net_.r; ++ia) {
        const int v = net_.a_node(ia);
        if (alive_[v]) continue;
        // dead A: only residual in-arc is the idle s->a
        if (f_->left_saturated(ia) || !f_->bip_out(ia).empty()) return false;
    }
    for (int jb = 0; jb < net_.n; ++jb) {
        const int v = net_.b_node(jb);
        if (alive_[v]) continue;
        if (f_->right_saturated(jb) || !f_->bip_in(jb).empty()) return false;
    }
    return true;
}

Matching solve_approx(const std::vector<Point>& a, const std::vector<Point>& b, int k,
                      const CostParams& params, double epsilon) {
    ApproxMatcher::Options opt;
    opt.epsilon = epsilon;
    ApproxMatcher m(a, b, k, params, std::move(opt));
    return m.solve();
}

}  // namespace gpm
