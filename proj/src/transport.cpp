#include "gpm/transport.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>
#include <tuple>

#include "gpm/bcp.hpp"

namespace gpm {

// ---------------------------------------------------------------------------
// Dyadic
// ---------------------------------------------------------------------------

void Dyadic::normalize() {
    if (num == 0) {
        shift = 0;
        return;
    }
    while (shift > 0 && (num & 1) == 0) {
        num >>= 1;
        --shift;
    }
    if (shift > 120) throw std::logic_error("dyadic denominator exponent exceeded 2^120");
}

Dyadic Dyadic::operator+(const Dyadic& o) const {
    Dyadic a = *this, b = o;
    const int s = std::max(a.shift, b.shift);
    a.num <<= (s - a.shift);
    b.num <<= (s - b.shift);
    Dyadic r{a.num + b.num, s};
    r.normalize();
    return r;
}

Dyadic Dyadic::operator-(const Dyadic& o) const { return *this + Dyadic{-o.num, o.shift}; }

Dyadic Dyadic::halved() const {
    Dyadic r{num, shift + 1};
    r.normalize();
    return r;
}

Dyadic Dyadic::times(int m) const {
    Dyadic r{num * m, shift};
    r.normalize();
    return r;
}

int Dyadic::cmp(const Dyadic& o) const {
    Dyadic d = *this - o;
    return d.sign();
}

double Dyadic::to_double() const { return std::ldexp(static_cast<double>(num), -shift); }

// ---------------------------------------------------------------------------
// StarIndex
// ---------------------------------------------------------------------------

std::optional<StarIndex::Reclass> StarIndex::after_update(int owner, Entry& e) {
    ++e.updates;
    const bool go_heavy = !e.heavy && static_cast<double>(e.size) > 2.0 * sqrt_n_;
    const bool go_light = e.heavy && static_cast<double>(e.size) < sqrt_n_;
    if (!go_heavy && !go_light) return std::nullopt;
    Reclass ev{owner, go_heavy, e.updates};
    e.heavy = go_heavy;
    if (e.reclassified_before) min_gap_ = std::min(min_gap_, e.updates);
    e.reclassified_before = true;
    e.updates = 0;
    ++reclass_count_;
    return ev;
}

std::optional<StarIndex::Reclass> StarIndex::add_member(int owner) {
    Entry& e = entries_[owner];
    ++e.size;
    return after_update(owner, e);
}

std::optional<StarIndex::Reclass> StarIndex::remove_member(int owner) {
    Entry& e = entries_[owner];
    --e.size;
    return after_update(owner, e);
}

bool StarIndex::heavy(int owner) const {
    auto it = entries_.find(owner);
    return it != entries_.end() && it->second.heavy;
}

int StarIndex::size(int owner) const {
    auto it = entries_.find(owner);
    return it == entries_.end() ? 0 : it->second.size;
}

// ---------------------------------------------------------------------------
// Orlin excess scaling (r <= sqrt(n))
// ---------------------------------------------------------------------------

namespace {

using detail::Side;

long long arc_key(int ia, int jb) { return (static_cast<long long>(ia) << 32) | jb; }

class OrlinTransport {
public:
    struct Parent {
        enum class Kind : uint8_t { Root, Relax, SupForward, SupBackward, Cluster } kind;
        int from = -1;
    };

    OrlinTransport(const std::vector<Point>& a, const std::vector<Point>& b,
                   const std::vector<long long>& pa, const std::vector<long long>& pb,
                   const CostParams& cp, const TransportOptions& opt)
        : a_(a),
          b_(b),
          params_(cp),
          opt_(opt),
          r_(static_cast<int>(a.size())),
          n_(static_cast<int>(b.size())),
          stars_(std::sqrt(static_cast<double>(b.size()))) {
        const int total = r_ + n_;
        phi_.resize(total);
        long long supply = 0;
        for (int i = 0; i < r_; ++i) {
            phi_[i] = Dyadic::from_int(pa[i]);
            supply += pa[i];
        }
        for (int j = 0; j < n_; ++j) phi_[r_ + j] = Dyadic::from_int(pb[j]);
        imb_ = phi_;
        uf_.resize(total);
        std::iota(uf_.begin(), uf_.end(), 0);
        members_.resize(total);
        for (int v = 0; v < total; ++v) {
            members_[v] = {v};
            if (!imb_[v].is_zero()) imbalanced_.insert(v);
        }
        supp_a_.resize(r_);
        supp_b_.resize(n_);
        pi_.assign(total, 0.0);
        gamma_.assign(total, 0.0);
        in_x_.assign(total, 0);
        alive_.assign(total, 0);
        star_of_.assign(n_, -1);
        parent_.resize(total);
        parent_stamp_.assign(total, -1);
        delta_ = Dyadic::from_int(supply);
    }

    TransportResult run();

private:
    int node_a(int ia) const { return ia; }
    int node_b(int jb) const { return r_ + jb; }
    bool is_a(int v) const { return v < r_; }

    int find(int v) {
        while (uf_[v] != v) v = uf_[v] = uf_[uf_[v]];
        return v;
    }
    int find_const(int v) const {
        while (uf_[v] != v) v = uf_[v];
        return v;
    }

    bool active(int root) const {
        Dyadic lhs = imb_[root].times(opt_.alpha_den);
        if (lhs.sign() < 0) lhs = -lhs;
        return !(lhs < delta_.times(opt_.alpha_num));
    }
    bool active_excess(int root) const { return imb_[root].sign() > 0 && active(root); }
    bool active_deficit(int root) const { return imb_[root].sign() < 0 && active(root); }
    void refresh_activity(int root) {
        if (active_excess(root))
            active_ex_.insert(root);
        else
            active_ex_.erase(root);
        if (active_deficit(root))
            active_df_.insert(root);
        else
            active_df_.erase(root);
    }

    double true_pi(int v) const { return in_x_[v] ? gamma_[v] + delta_pi_ : pi_[v]; }
    double heavy_true_offset(int owner) const {
        double off = heavy_offset_.count(owner) ? heavy_offset_.at(owner) : 0.0;
        if (in_x_[node_a(owner)]) off += delta_pi_ - enter_delta_.at(owner);
        return off;
    }

    Dyadic flow(int ia, int jb) const {
        auto it = flow_.find(arc_key(ia, jb));
        return it == flow_.end() ? Dyadic{} : it->second;
    }
    void set_flow(int ia, int jb, const Dyadic& f);

    enum class Home : uint8_t { NonStar, Pool, Heavy };
    Home home_of(int jb) const {
        if (star_of_[jb] < 0) return Home::NonStar;
        return stars_.heavy(star_of_[jb]) ? Home::Heavy : Home::Pool;
    }
    void attach_b(int jb);
    void detach_b(int jb);
    void reindex_star(int jb);
    void on_reclass(const StarIndex::Reclass& ev);

    void wake(int v);
    void enter_x(int v, const Parent& par);
    void leave_x(int v);
    void cascade_from(int v);

    void begin_scale();
    void excess_scale_step();
    void hungarian_search();
    void unwind_search();

    void check_acyclic() const;
    void uncontract(std::vector<Dyadic>& bal, std::map<long long, Dyadic>& final_flow);

    const std::vector<Point>& a_;
    const std::vector<Point>& b_;
    CostParams params_;
    TransportOptions opt_;
    int r_, n_;

    std::vector<Dyadic> phi_, imb_;
    std::vector<int> uf_;
    std::vector<std::vector<int>> members_;
    std::set<int> imbalanced_;
    std::set<int> active_ex_, active_df_;

    std::map<long long, Dyadic> flow_;
    std::vector<std::set<int>> supp_a_, supp_b_;

    struct Contraction {
        int ia, jb;
        Dyadic frozen;
        std::vector<int> small_side;
        bool small_holds_a;
    };
    std::vector<Contraction> contractions_;

    std::vector<double> pi_, gamma_;
    double delta_pi_ = 0.0;
    std::vector<char> in_x_, alive_;
    Dyadic delta_;

    Side x_alive_a_;
    Side nonstar_b_;
    Side pool_b_;
    std::map<int, Side> heavy_b_;
    std::map<int, double> heavy_offset_;
    StarIndex stars_;
    std::vector<int> star_of_;
    std::map<int, std::set<int>> star_members_;

    // per-owner state while the owner sits in X
    std::map<int, double> enter_delta_;
    std::map<int, std::vector<std::pair<int, double>>> dropped_;  // owner -> (jb, weight)

    std::vector<int> search_log_;  // nodes entered, in order
    std::vector<Parent> parent_;
    std::vector<int> parent_stamp_;
    int search_id_ = 0;
    int terminal_ = -1;

    TransportStats stats_;
};

void OrlinTransport::set_flow(int ia, int jb, const Dyadic& f) {
    const long long key = arc_key(ia, jb);
    auto it = flow_.find(key);
    const bool had = it != flow_.end();
    if (f.is_zero()) {
        if (had) {
            flow_.erase(it);
            supp_a_[ia].erase(jb);
            supp_b_[jb].erase(ia);
        }
    } else {
        if (f.sign() < 0) throw std::logic_error("negative transport flow");
        flow_[key] = f;
        if (!had) {
            supp_a_[ia].insert(jb);
            supp_b_[jb].insert(ia);
        }
    }
}

void OrlinTransport::attach_b(int jb) {
    const int v = node_b(jb);
    if (!alive_[v] || in_x_[v]) return;
    switch (home_of(jb)) {
        case Home::NonStar: nonstar_b_.insert(WeightedPoint{b_[jb], pi_[v]}); break;
        case Home::Pool: {
            const int owner = star_of_[jb];
            if (in_x_[node_a(owner)]) {
                // virtually in X with its owner; reappears when the owner leaves
                dropped_[owner].push_back({jb, pi_[v] - (delta_pi_ - enter_delta_.at(owner))});
            } else {
                pool_b_.insert(WeightedPoint{b_[jb], pi_[v]});
            }
            break;
        }
        case Home::Heavy: {
            const int owner = star_of_[jb];
            heavy_b_[owner].insert(WeightedPoint{b_[jb], pi_[v] - heavy_true_offset(owner)});
            break;
        }
    }
}

void OrlinTransport::detach_b(int jb) {
    const int v = node_b(jb);
    if (nonstar_b_.contains(jb)) {
        nonstar_b_.erase(jb);
        return;
    }
    if (pool_b_.contains(jb)) {
        pool_b_.erase(jb);
        return;
    }
    for (auto& [owner, side] : heavy_b_) {
        if (side.contains(jb)) {
            pi_[v] = side.get(jb).weight + heavy_true_offset(owner);
            side.erase(jb);
            return;
        }
    }
    for (auto& [owner, drops] : dropped_) {
        for (size_t i = 0; i < drops.size(); ++i) {
            if (drops[i].first != jb) continue;
            pi_[v] = drops[i].second + (delta_pi_ - enter_delta_.at(owner));
            drops.erase(drops.begin() + i);
            return;
        }
    }
}

void OrlinTransport::on_reclass(const StarIndex::Reclass& ev) {
    const int owner = ev.owner;
    if (in_x_[node_a(owner)]) return;  // sides reconcile when the owner leaves X
    if (ev.now_heavy) {
        Side& side = heavy_b_[owner];
        heavy_offset_[owner] = 0.0;
        for (int jb : star_members_[owner]) {
            if (!pool_b_.contains(jb)) continue;
            const WeightedPoint wp = pool_b_.get(jb);
            pool_b_.erase(jb);
            side.insert(wp);
        }
    } else {
        auto it = heavy_b_.find(owner);
        if (it == heavy_b_.end()) return;
        const double off = heavy_offset_[owner];
        std::vector<int> move;
        for (int jb : star_members_[owner])
            if (it->second.contains(jb)) move.push_back(jb);
        for (int jb : move) {
            WeightedPoint wp = it->second.get(jb);
            it->second.erase(jb);
            wp.weight += off;
            pi_[node_b(jb)] = wp.weight;
            pool_b_.insert(wp);
        }
        heavy_b_.erase(it);
        heavy_offset_.erase(owner);
    }
}

void OrlinTransport::reindex_star(int jb) {
    const int v = node_b(jb);
    int new_owner = -1;
    const int root = find(v);
    const bool singleton = members_[root].size() == 1;
    if (supp_b_[jb].size() == 1 && singleton && !active(root)) new_owner = *supp_b_[jb].begin();
    if (new_owner == star_of_[jb]) return;

    const bool present = alive_[v] && !in_x_[v];
    if (present) detach_b(jb);
    if (star_of_[jb] >= 0) {
        star_members_[star_of_[jb]].erase(jb);
        auto ev = stars_.remove_member(star_of_[jb]);
        if (ev) on_reclass(*ev);
    }
    star_of_[jb] = new_owner;
    if (new_owner >= 0) {
        star_members_[new_owner].insert(jb);
        auto ev = stars_.add_member(new_owner);
        if (ev) on_reclass(*ev);
    }
    if (present) attach_b(jb);
}

void OrlinTransport::wake(int v) {
    if (alive_[v]) return;
    alive_[v] = 1;
    if (!is_a(v)) {
        const int jb = v - r_;
        // dual feasibility against the alive A side may have decayed while dead
        double lo = pi_[v];
        for (int ia = 0; ia < r_; ++ia) {
            if (!alive_[node_a(ia)]) continue;
            lo = std::max(lo, true_pi(node_a(ia)) - cost(a_[ia], b_[jb], params_));
        }
        pi_[v] = lo;
        attach_b(jb);
    }
}

void OrlinTransport::enter_x(int v, const Parent& par) {
    if (in_x_[v]) return;
    if (!is_a(v)) detach_b(v - r_);  // refreshes pi_ for lazily offset members
    in_x_[v] = 1;
    gamma_[v] = pi_[v] - delta_pi_;
    parent_[v] = par;
    parent_stamp_[v] = search_id_;
    search_log_.push_back(v);
    if (is_a(v)) {
        x_alive_a_.insert(WeightedPoint{a_[v], gamma_[v]});
        auto ms = star_members_.find(v);
        if (ms != star_members_.end() && !ms->second.empty()) {
            enter_delta_[v] = delta_pi_;
            if (!stars_.heavy(v)) {
                // light star: its members only lead back to v now
                auto& drops = dropped_[v];
                for (int jb : ms->second) {
                    if (!pool_b_.contains(jb)) continue;
                    drops.push_back({jb, pool_b_.get(jb).weight});
                    pool_b_.erase(jb);
                }
            }
            // heavy star: simply not queried while v is in X
        }
    }
    if (terminal_ < 0 && active_df_.count(find(v))) terminal_ = v;
}

void OrlinTransport::leave_x(int v) {
    if (!in_x_[v]) return;
    pi_[v] = gamma_[v] + delta_pi_;
    in_x_[v] = 0;
    if (is_a(v)) {
        if (x_alive_a_.contains(v)) x_alive_a_.erase(v);
        auto ed = enter_delta_.find(v);
        if (ed != enter_delta_.end()) {
            const double pending = delta_pi_ - ed->second;
            if (auto dit = dropped_.find(v); dit != dropped_.end()) {
                for (auto& [jb, w] : dit->second) {
                    pi_[node_b(jb)] = w + pending;
                    attach_b(jb);
                }
                dropped_.erase(dit);
            }
            if (heavy_offset_.count(v)) heavy_offset_[v] += pending;
            enter_delta_.erase(ed);
            // a reclassification may have flipped the star light while frozen
            if (!stars_.heavy(v) && heavy_b_.count(v))
                on_reclass(StarIndex::Reclass{v, false, 0});
        }
    } else {
        attach_b(v - r_);
    }
}

void OrlinTransport::cascade_from(int start) {
    std::vector<int> queue{start};
    while (!queue.empty() && terminal_ < 0) {
        const int v = queue.back();
        queue.pop_back();
        for (int w : members_[find(v)]) {
            if (in_x_[w]) continue;
            enter_x(w, Parent{Parent::Kind::Cluster, v});
            if (terminal_ >= 0) return;
            queue.push_back(w);
        }
        if (is_a(v)) {
            for (int jb : supp_a_[v]) {
                if (star_of_[jb] == v) continue;  // star members are handled lazily
                const int w = node_b(jb);
                if (in_x_[w]) continue;
                enter_x(w, Parent{Parent::Kind::SupForward, v});
                if (terminal_ >= 0) return;
                queue.push_back(w);
            }
        } else {
            for (int ia : supp_b_[v - r_]) {
                const int w = node_a(ia);
                if (in_x_[w]) continue;
                enter_x(w, Parent{Parent::Kind::SupBackward, v});
                if (terminal_ >= 0) return;
                queue.push_back(w);
            }
        }
    }
}

void OrlinTransport::hungarian_search() {
    ++search_id_;
    terminal_ = -1;
    search_log_.clear();
    long long relax = 0;

    // X grows from the members of every active excess cluster; support arcs
    // (reduced cost 0) relax eagerly, including the contracted cluster trees
    for (int root : active_ex_) {
        for (int v : members_[root]) {
            if (in_x_[v]) continue;
            enter_x(v, Parent{Parent::Kind::Root, -1});
            if (terminal_ >= 0) break;
            cascade_from(v);
            if (terminal_ >= 0) break;
        }
        if (terminal_ >= 0) break;
    }

    while (terminal_ < 0) {
        struct Best {
            double value;
            int a_id, b_id, src;
        };
        std::optional<Best> best;
        auto consider = [&](const std::optional<BcpResult>& q, double offset, int src) {
            if (!q) return;
            const double v = q->value + offset;
            if (!best || v < best->value ||
                (v == best->value && std::tie(src, q->a_id, q->b_id) <
                                         std::tie(best->src, best->a_id, best->b_id)))
                best = Best{v, q->a_id, q->b_id, src};
        };
        consider(query_pair_min(x_alive_a_, nonstar_b_, params_), 0.0, 0);
        consider(query_pair_min(x_alive_a_, pool_b_, params_), 0.0, 1);
        int src = 2;
        for (auto& [owner, side] : heavy_b_) {
            if (!in_x_[node_a(owner)] && stars_.heavy(owner))
                consider(query_pair_min(x_alive_a_, side, params_),
                         heavy_offset_.count(owner) ? heavy_offset_[owner] : 0.0, src);
            ++src;
        }
        if (!best) throw std::logic_error("transport search: no active deficit reachable");

        const double rc = std::max(0.0, best->value - delta_pi_);
        delta_pi_ += rc;
        ++relax;
        const int vb = node_b(best->b_id);
        enter_x(vb, Parent{Parent::Kind::Relax, node_a(best->a_id)});
        if (terminal_ < 0) cascade_from(vb);
        if (relax > 8LL * (r_ + 2))
            throw std::logic_error("transport search exceeded O(r) relaxations");
    }
    stats_.relaxations += relax;
    stats_.max_relax_per_search = std::max(stats_.max_relax_per_search, relax);
}

void OrlinTransport::unwind_search() {
    for (auto it = search_log_.rbegin(); it != search_log_.rend(); ++it) leave_x(*it);
    search_log_.clear();
}

void OrlinTransport::excess_scale_step() {
    hungarian_search();
    const int term = terminal_;

    struct Step {
        Parent::Kind kind;
        int child, from;
    };
    std::vector<Step> steps;
    int v = term;
    while (parent_stamp_[v] == search_id_ && parent_[v].kind != Parent::Kind::Root) {
        steps.push_back(Step{parent_[v].kind, v, parent_[v].from});
        v = parent_[v].from;
    }
    const int source_node = v;
    unwind_search();

    // push exactly Delta along the path
    std::vector<int> churned_b;
    auto bump_flow = [&](int ia, int jb, bool up) {
        Dyadic f = flow(ia, jb);
        Dyadic nf = up ? f + delta_ : f - delta_;
        if (nf.sign() < 0) throw std::logic_error("push drove a support arc negative");
        set_flow(ia, jb, nf);
        churned_b.push_back(jb);
    };
    for (const Step& st : steps) {
        switch (st.kind) {
            case Parent::Kind::Relax:
            case Parent::Kind::SupForward:
                bump_flow(st.from, st.child - r_, true);
                break;
            case Parent::Kind::SupBackward:
                bump_flow(st.child, st.from - r_, false);
                break;
            default: break;
        }
    }

    const int src_root = find(source_node);
    const int dst_root = find(term);
    imb_[src_root] = imb_[src_root] - delta_;
    imb_[dst_root] = imb_[dst_root] + delta_;
    for (int root : {src_root, dst_root}) {
        if (imb_[root].is_zero())
            imbalanced_.erase(root);
        else
            imbalanced_.insert(root);
        refresh_activity(root);
    }

    std::sort(churned_b.begin(), churned_b.end());
    churned_b.erase(std::unique(churned_b.begin(), churned_b.end()), churned_b.end());
    for (int jb : churned_b) reindex_star(jb);
    // activity flips can change star eligibility of cluster members
    for (int root : {src_root, dst_root})
        for (int w : members_[root])
            if (!is_a(w)) reindex_star(w - r_);

    ++stats_.augmentations;
    if (opt_.check_invariants) check_acyclic();
}

void OrlinTransport::begin_scale() {
    delta_ = delta_.halved();
    ++stats_.scales;

    // contract arcs whose flow future scales can never drain
    const Dyadic threshold = delta_.times(3 * (r_ + n_));
    std::vector<std::pair<int, int>> big;
    for (const auto& [key, f] : flow_)
        if (!(f < threshold))
            big.emplace_back(static_cast<int>(key >> 32), static_cast<int>(key & 0xffffffff));
    for (auto [ia, jb] : big) {
        const int ra = find(node_a(ia));
        const int rb = find(node_b(jb));
        if (ra == rb) throw std::logic_error("contraction found a support cycle (Lemma 9)");
        Contraction rec;
        rec.ia = ia;
        rec.jb = jb;
        rec.frozen = flow(ia, jb);
        set_flow(ia, jb, Dyadic{});
        const int small = members_[ra].size() <= members_[rb].size() ? ra : rb;
        const int bigr = small == ra ? rb : ra;
        rec.small_side = members_[small];
        rec.small_holds_a = std::find(rec.small_side.begin(), rec.small_side.end(),
                                      node_a(ia)) != rec.small_side.end();
        contractions_.push_back(std::move(rec));
        ++stats_.contractions;

        imbalanced_.erase(small);
        active_ex_.erase(small);
        active_df_.erase(small);
        uf_[small] = bigr;
        imb_[bigr] = imb_[bigr] + imb_[small];
        for (int w : members_[small]) members_[bigr].push_back(w);
        members_[small].clear();
        if (imb_[bigr].is_zero())
            imbalanced_.erase(bigr);
        else
            imbalanced_.insert(bigr);
        refresh_activity(bigr);
        for (int w : members_[bigr]) {
            wake(w);
            if (!is_a(w)) reindex_star(w - r_);  // no longer a singleton cluster
        }
    }

    // aggressive lowering: no flow anywhere and nothing active
    bool any_active_ex = false;
    for (int root : imbalanced_)
        if (active_excess(root)) {
            any_active_ex = true;
            break;
        }
    if (!any_active_ex && flow_.empty() && contractions_.empty() && !imbalanced_.empty()) {
        Dyadic mx{};
        for (int root : imbalanced_)
            if (mx < imb_[root]) mx = imb_[root];
        if (mx.sign() > 0) delta_ = mx;
    }

    // dead nodes may wake only here; star eligibility follows activity
    for (int v = 0; v < r_ + n_; ++v)
        if (!alive_[v] && active(find(v))) wake(v);
    for (int root : std::vector<int>(imbalanced_.begin(), imbalanced_.end())) {
        refresh_activity(root);
        for (int w : members_[root])
            if (!is_a(w) && alive_[w]) reindex_star(w - r_);
    }
}

void OrlinTransport::check_acyclic() const {
    std::vector<int> p(r_ + n_);
    std::iota(p.begin(), p.end(), 0);
    auto f = [&](int v) {
        while (p[v] != v) v = p[v] = p[p[v]];
        return v;
    };
    auto join = [&](int u, int v) {
        u = f(u);
        v = f(v);
        if (u == v) throw std::logic_error("support cycle detected (Lemma 9)");
        p[u] = v;
    };
    for (const auto& [key, fl] : flow_) {
        (void)fl;
        join(static_cast<int>(key >> 32), r_ + static_cast<int>(key & 0xffffffff));
    }
    for (const auto& c : contractions_) join(c.ia, r_ + c.jb);
}

void OrlinTransport::uncontract(std::vector<Dyadic>& bal,
                                std::map<long long, Dyadic>& final_flow) {
    bal = phi_;
    for (const auto& [key, f] : flow_) {
        const int ia = static_cast<int>(key >> 32);
        const int jb = static_cast<int>(key & 0xffffffff);
        bal[node_a(ia)] = bal[node_a(ia)] - f;
        bal[node_b(jb)] = bal[node_b(jb)] + f;
        final_flow[key] = f;
    }
    for (const auto& c : contractions_) {
        bal[node_a(c.ia)] = bal[node_a(c.ia)] - c.frozen;
        bal[node_b(c.jb)] = bal[node_b(c.jb)] + c.frozen;
    }
    // LIFO expansion: the recorded arc is the only one crossing each split
    for (auto it = contractions_.rbegin(); it != contractions_.rend(); ++it) {
        Dyadic side_defect{};
        for (int v : it->small_side) side_defect = side_defect + bal[v];
        Dyadic x = it->small_holds_a ? side_defect : -side_defect;
        Dyadic nf = it->frozen + x;
        if (nf.sign() < 0) throw std::logic_error("uncontraction produced negative flow");
        const long long key = arc_key(it->ia, it->jb);
        auto fit = final_flow.find(key);
        const Dyadic existing = fit == final_flow.end() ? Dyadic{} : fit->second;
        final_flow[key] = existing + nf;
        bal[node_a(it->ia)] = bal[node_a(it->ia)] + it->frozen - nf;
        bal[node_b(it->jb)] = bal[node_b(it->jb)] - it->frozen + nf;
    }
    for (int v = 0; v < r_ + n_; ++v)
        if (!bal[v].is_zero()) throw std::logic_error("uncontraction violated conservation");
}

TransportResult OrlinTransport::run() {
    stats_.solver = "orlin";
    for (int root : std::vector<int>(imbalanced_.begin(), imbalanced_.end())) {
        refresh_activity(root);
        if (active(root))
            for (int w : members_[root]) wake(w);
    }

    const long long scale_cap =
        512 + 64LL * (r_ + n_) *
                  (64 - __builtin_clzll(static_cast<unsigned long long>(r_ + n_ + 4)));
    while (!imbalanced_.empty()) {
        if (!active_ex_.empty() && !active_df_.empty())
            excess_scale_step();
        else
            begin_scale();
        if (stats_.scales > scale_cap)
            throw std::logic_error("transport failed to terminate within the scale budget");
    }

    std::vector<Dyadic> bal;
    std::map<long long, Dyadic> final_flow;
    uncontract(bal, final_flow);

    TransportResult out;
    out.stats = stats_;
    out.stats.reclassifications = stars_.reclassifications();
    out.stats.min_reclass_gap = stars_.min_update_gap() == std::numeric_limits<long long>::max()
                                    ? -1
                                    : stars_.min_update_gap();
    for (const auto& [key, f] : final_flow) {
        if (f.is_zero()) continue;
        out.plan.entries.push_back(PlanEntry{static_cast<int>(key >> 32),
                                             static_cast<int>(key & 0xffffffff), f.to_double()});
    }
    std::sort(out.plan.entries.begin(), out.plan.entries.end(),
              [](const PlanEntry& x, const PlanEntry& y) {
                  return std::tie(x.a, x.b) < std::tie(y.a, y.b);
              });
    out.plan.cost = 0.0;
    for (const auto& e : out.plan.entries)
        out.plan.cost += cost(a_[e.a], b_[e.b], params_) * e.flow;
    out.potential_a.resize(r_);
    out.potential_b.resize(n_);
    for (int i = 0; i < r_; ++i) out.potential_a[i] = true_pi(node_a(i));
    for (int j = 0; j < n_; ++j) {
        // pull lazily offset members out of their sides for reporting
        for (auto& [owner, side] : heavy_b_)
            if (side.contains(j)) pi_[node_b(j)] = side.get(j).weight + heavy_true_offset(owner);
        out.potential_b[j] = true_pi(node_b(j));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Dense fallback (r > sqrt(n)): BCP-driven successive shortest paths
// ---------------------------------------------------------------------------

class DenseTransport {
public:
    DenseTransport(const std::vector<Point>& a, const std::vector<Point>& b,
                   const std::vector<long long>& pa, const std::vector<long long>& pb,
                   const CostParams& cp, const TransportOptions& opt)
        : a_(a),
          b_(b),
          params_(cp),
          opt_(opt),
          r_(static_cast<int>(a.size())),
          n_(static_cast<int>(b.size())),
          excess_(pa),
          deficit_(pb) {
        supp_a_.resize(r_);
        supp_b_.resize(n_);
        pi_a_.assign(r_, 0.0);
        pi_b_.assign(n_, 0.0);
    }

    TransportResult run();

private:
    long long flow(int ia, int jb) const {
        auto it = flow_.find(arc_key(ia, jb));
        return it == flow_.end() ? 0 : it->second;
    }
    void add_flow(int ia, int jb, long long d);
    void check_acyclic() const;

    const std::vector<Point>& a_;
    const std::vector<Point>& b_;
    CostParams params_;
    TransportOptions opt_;
    int r_, n_;
    std::vector<long long> excess_, deficit_;
    std::map<long long, long long> flow_;
    std::vector<std::set<int>> supp_a_, supp_b_;
    std::vector<double> pi_a_, pi_b_;
    TransportStats stats_;
};

void DenseTransport::add_flow(int ia, int jb, long long d) {
    auto& f = flow_[arc_key(ia, jb)];
    const bool had = f > 0;
    f += d;
    if (f < 0) throw std::logic_error("dense transport drove a flow negative");
    if (f > 0 && !had) {
        supp_a_[ia].insert(jb);
        supp_b_[jb].insert(ia);
    }
    if (f == 0) {
        flow_.erase(arc_key(ia, jb));
        supp_a_[ia].erase(jb);
        supp_b_[jb].erase(ia);
    }
}

void DenseTransport::check_acyclic() const {
    std::vector<int> p(r_ + n_);
    std::iota(p.begin(), p.end(), 0);
    auto f = [&](int v) {
        while (p[v] != v) v = p[v] = p[p[v]];
        return v;
    };
    for (const auto& [key, fl] : flow_) {
        (void)fl;
        int u = f(static_cast<int>(key >> 32));
        int v = f(r_ + static_cast<int>(key & 0xffffffff));
        if (u == v) throw std::logic_error("support cycle detected");
        p[u] = v;
    }
}

TransportResult DenseTransport::run() {
    stats_.solver = "dense";
    while (true) {
        bool any = false;
        for (int i = 0; i < r_; ++i)
            if (excess_[i] > 0) any = true;
        if (!any) break;

        std::vector<char> in_x_a(r_, 0), in_x_b(n_, 0);
        std::vector<double> gam_a(r_, 0.0), gam_b(n_, 0.0);
        std::vector<int> par_b(n_, -1), par_a(r_, -1);
        double delta = 0.0;
        detail::Side xa, bout;
        std::vector<int> stack;
        int term = -1;
        auto enter_b = [&](int jb, int from_a) {
            bout.erase(jb);
            in_x_b[jb] = 1;
            gam_b[jb] = pi_b_[jb] - delta;
            par_b[jb] = from_a;
            if (deficit_[jb] < 0 && term < 0) term = jb;
        };
        auto enter_a = [&](int ia, int from_b) {
            in_x_a[ia] = 1;
            gam_a[ia] = pi_a_[ia] - delta;
            par_a[ia] = from_b;
            xa.insert(WeightedPoint{a_[ia], gam_a[ia]});
            stack.push_back(ia);
        };
        for (int j = 0; j < n_; ++j) bout.insert(WeightedPoint{b_[j], pi_b_[j]});
        for (int i = 0; i < r_; ++i)
            if (excess_[i] > 0) enter_a(i, -1);

        long long relax = 0;
        while (term < 0) {
            // support arcs relax first, at reduced cost zero
            while (!stack.empty() && term < 0) {
                const int ia = stack.back();
                stack.pop_back();
                for (int jb : supp_a_[ia]) {
                    if (in_x_b[jb]) continue;
                    enter_b(jb, ia);
                    if (term >= 0) break;
                    for (int ia2 : supp_b_[jb])
                        if (!in_x_a[ia2]) enter_a(ia2, jb);
                }
            }
            if (term >= 0) break;
            auto q = query_pair_min(xa, bout, params_);
            if (!q) throw std::logic_error("dense transport: no deficit reachable");
            const double rc = std::max(0.0, q->value - delta);
            delta += rc;
            ++relax;
            enter_b(q->b_id, q->a_id);
            if (term >= 0) break;
            for (int ia2 : supp_b_[q->b_id])
                if (!in_x_a[ia2]) enter_a(ia2, q->b_id);
        }
        stats_.relaxations += relax;
        stats_.max_relax_per_search = std::max(stats_.max_relax_per_search, relax);

        // path and bottleneck
        std::vector<std::tuple<int, int, bool>> arcs;
        long long bottleneck = -deficit_[term];
        int jb = term;
        int root = -1;
        while (true) {
            const int ia = par_b[jb];
            arcs.emplace_back(ia, jb, true);
            if (par_a[ia] < 0) {
                root = ia;
                break;
            }
            const int prev_b = par_a[ia];
            bottleneck = std::min(bottleneck, flow(ia, prev_b));
            arcs.emplace_back(ia, prev_b, false);
            jb = prev_b;
        }
        bottleneck = std::min(bottleneck, excess_[root]);
        if (bottleneck <= 0) throw std::logic_error("dense transport: empty bottleneck");
        for (auto [ia2, jb2, fwd] : arcs) add_flow(ia2, jb2, fwd ? bottleneck : -bottleneck);
        excess_[root] -= bottleneck;
        deficit_[term] += bottleneck;
        ++stats_.augmentations;

        for (int i = 0; i < r_; ++i)
            if (in_x_a[i]) pi_a_[i] = gam_a[i] + delta;
        for (int j = 0; j < n_; ++j)
            if (in_x_b[j]) pi_b_[j] = gam_b[j] + delta;
        if (opt_.check_invariants) check_acyclic();
    }

    TransportResult out;
    out.stats = stats_;
    for (const auto& [key, f] : flow_)
        out.plan.entries.push_back(PlanEntry{static_cast<int>(key >> 32),
                                             static_cast<int>(key & 0xffffffff),
                                             static_cast<double>(f)});
    std::sort(out.plan.entries.begin(), out.plan.entries.end(),
              [](const PlanEntry& x, const PlanEntry& y) {
                  return std::tie(x.a, x.b) < std::tie(y.a, y.b);
              });
    out.plan.cost = 0.0;
    for (const auto& e : out.plan.entries)
        out.plan.cost += cost(a_[e.a], b_[e.b], params_) * e.flow;
    out.potential_a = pi_a_;
    out.potential_b = pi_b_;
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// dispatch
// ---------------------------------------------------------------------------

TransportResult solve_transport(const std::vector<Point>& a, const std::vector<Point>& b,
                                const std::vector<long long>& phi_a,
                                const std::vector<long long>& phi_b, const CostParams& params,
                                const TransportOptions& opt) {
    validate(params);
    if (a.empty() || b.empty()) throw std::invalid_argument("transport: empty point set");
    if (a.size() != phi_a.size() || b.size() != phi_b.size())
        throw std::invalid_argument("transport: phi size mismatch");
    if (2 * opt.alpha_num <= opt.alpha_den || opt.alpha_num >= opt.alpha_den)
        throw std::invalid_argument("transport: alpha must lie in (0.5, 1)");
    long long total = 0;
    for (long long s : phi_a) {
        if (s <= 0) throw std::invalid_argument("transport: supplies must be positive on A");
        total += s;
    }
    for (long long d : phi_b) {
        if (d >= 0) throw std::invalid_argument("transport: demands must be negative on B");
        total += d;
    }
    if (total != 0) throw std::invalid_argument("transport: unbalanced phi");

    if (a.size() > b.size()) {
        // swap sides (transposing the plan); demands become supplies
        std::vector<long long> na(phi_b.size()), nb(phi_a.size());
        for (size_t j = 0; j < phi_b.size(); ++j) na[j] = -phi_b[j];
        for (size_t i = 0; i < phi_a.size(); ++i) nb[i] = -phi_a[i];
        TransportResult res = solve_transport(b, a, na, nb, params, opt);
        for (auto& e : res.plan.entries) std::swap(e.a, e.b);
        std::sort(res.plan.entries.begin(), res.plan.entries.end(),
                  [](const PlanEntry& x, const PlanEntry& y) {
                      return std::tie(x.a, x.b) < std::tie(y.a, y.b);
                  });
        std::swap(res.potential_a, res.potential_b);
        double c = 0.0;
        for (const auto& e : res.plan.entries) c += cost(a[e.a], b[e.b], params) * e.flow;
        res.plan.cost = c;
        return res;
    }

    std::vector<Point> aa = a, bb = b;
    for (size_t i = 0; i < aa.size(); ++i) aa[i].id = static_cast<int>(i);
    for (size_t j = 0; j < bb.size(); ++j) bb[j].id = static_cast<int>(j);

    const double sqrt_n = std::sqrt(static_cast<double>(bb.size()));
    const bool use_orlin =
        opt.force_orlin || (!opt.force_dense && static_cast<double>(aa.size()) <= sqrt_n);
    if (use_orlin) {
        OrlinTransport solver(aa, bb, phi_a, phi_b, params, opt);
        return solver.run();
    }
    DenseTransport solver(aa, bb, phi_a, phi_b, params, opt);
    return solver.run();
}

}  // namespace gpm
