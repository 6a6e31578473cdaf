#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "gpm/geometry.hpp"

namespace gpm {

/// Exact dyadic rational: num / 2^shift. Flow quanta are always the total
/// supply divided by a power of two (or an integer supply after an
/// aggressive lowering), so all flows and imbalances live in this set.
struct Dyadic {
    __int128 num = 0;
    int shift = 0;

    static Dyadic from_int(long long v) { return Dyadic{static_cast<__int128>(v), 0}; }
    void normalize();
    Dyadic operator+(const Dyadic& o) const;
    Dyadic operator-(const Dyadic& o) const;
    Dyadic operator-() const { return Dyadic{-num, shift}; }
    Dyadic halved() const;
    Dyadic times(int m) const;
    int cmp(const Dyadic& o) const;  // -1, 0, +1
    bool operator<(const Dyadic& o) const { return cmp(o) < 0; }
    bool operator==(const Dyadic& o) const { return cmp(o) == 0; }
    bool is_zero() const { return num == 0; }
    int sign() const { return num < 0 ? -1 : (num > 0 ? 1 : 0); }
    double to_double() const;
};

/// Lazy heavy/light star classification with hysteresis: a star is
/// reclassified heavy once its size exceeds 2*sqrt(n) and light once it
/// drops below sqrt(n), so at least sqrt(n) membership updates separate two
/// successive reclassifications of the same owner.
class StarIndex {
public:
    explicit StarIndex(double sqrt_n) : sqrt_n_(sqrt_n) {}

    struct Reclass {
        int owner;
        bool now_heavy;
        long long updates_since_last;
    };

    std::optional<Reclass> add_member(int owner);
    std::optional<Reclass> remove_member(int owner);
    bool heavy(int owner) const;
    int size(int owner) const;
    long long reclassifications() const { return reclass_count_; }
    long long min_update_gap() const { return min_gap_; }

private:
    struct Entry {
        int size = 0;
        bool heavy = false;
        long long updates = 0;   // since last reclassification
        bool reclassified_before = false;
    };
    std::optional<Reclass> after_update(int owner, Entry& e);

    double sqrt_n_;
    std::unordered_map<int, Entry> entries_;
    long long reclass_count_ = 0;
    long long min_gap_ = std::numeric_limits<long long>::max();
};

struct PlanEntry {
    int a = -1;
    int b = -1;
    double flow = 0.0;
};

struct TransportPlan {
    std::vector<PlanEntry> entries;  // sorted by (a, b)
    double cost = 0.0;
};

struct TransportOptions {
    // alpha = alpha_num/alpha_den, the active-node threshold, in (0.5, 1)
    int alpha_num = 2;
    int alpha_den = 3;
    bool check_invariants = false;  // per-push acyclicity scans and friends
    bool force_orlin = false;       // bypass the r <= sqrt(n) gate (tests)
    bool force_dense = false;
};

struct TransportStats {
    std::string solver;  // "orlin" or "dense"
    long long scales = 0;
    long long augmentations = 0;
    long long relaxations = 0;
    long long max_relax_per_search = 0;
    long long contractions = 0;
    long long reclassifications = 0;
    long long min_reclass_gap = -1;  // min updates between reclassifications
};

struct TransportResult {
    TransportPlan plan;
    std::vector<double> potential_a;
    std::vector<double> potential_b;
    TransportStats stats;
};

/// Exact planar transportation. phi is positive on A and negative on B and
/// balanced. Dispatches to Orlin excess scaling when r <= sqrt(n) (after
/// swapping so that |A| <= |B|), and to a dense BCP-driven successive
/// shortest path solver otherwise.
TransportResult solve_transport(const std::vector<Point>& a, const std::vector<Point>& b,
                                const std::vector<long long>& phi_a,
                                const std::vector<long long>& phi_b, const CostParams& params,
                                const TransportOptions& opt = {});

}  // namespace gpm
