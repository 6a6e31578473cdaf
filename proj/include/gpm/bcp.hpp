#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <unordered_map>
#include <vector>

#include "gpm/geometry.hpp"

namespace gpm {

/// A point carrying an additive weight (omega, in cost units).
struct WeightedPoint {
    Point point;
    double weight = 0.0;
};

enum class BcpSideId : uint8_t { P, Q };

/// Count of structural BCP operations (insert/delete/query) on this thread.
/// Solvers snapshot deltas for their op-count reports.
uint64_t bcp_op_count();

namespace detail {

struct Entry {
    double x, y, w;
    int id;
    bool dead;
};

// Static kd-tree over a fixed entry array with tombstone deletion.
class StaticTree {
public:
    explicit StaticTree(std::vector<Entry> entries);

    int live() const { return live_; }
    int total() const { return static_cast<int>(entries_.size()); }
    void kill(int pos);
    const Entry& entry(int pos) const { return entries_[pos]; }
    std::vector<Entry> live_entries() const;

    struct Node {
        double xlo, xhi, ylo, yhi;
        double wmin, wmax;
        int min_id;
        int lo, hi;
        int left = -1, right = -1;
        int live = 0;
    };
    const Node& node(int i) const { return nodes_[i]; }
    int root() const { return root_; }
    static constexpr int kLeaf = 8;

private:
    int build(int lo, int hi);
    void pull(Node& nd);

    std::vector<Entry> entries_;
    std::vector<Node> nodes_;
    int root_ = -1;
    int live_ = 0;
};

// Logarithmic collection of static trees (one BCP side).
class Side {
public:
    bool contains(int id) const { return where_.count(id) != 0; }
    int size() const { return static_cast<int>(where_.size()); }
    bool empty() const { return where_.empty(); }
    void insert(const WeightedPoint& wp);
    WeightedPoint erase(int id);
    WeightedPoint get(int id) const;
    void bulk_load(const std::vector<WeightedPoint>& pts);
    void clear();

    const std::vector<std::unique_ptr<StaticTree>>& trees() const { return trees_; }

private:
    void rebuild_slot(size_t slot, std::vector<Entry> extra);
    void reindex(size_t slot);
    void normalize();

    std::vector<std::unique_ptr<StaticTree>> trees_;
    std::unordered_map<int, std::pair<int, int>> where_;  // id -> (tree, pos)
};

}  // namespace detail

struct BcpResult {
    int a_id = -1;
    int b_id = -1;
    double value = 0.0;  // c(a,b) - w(a) + w(b)
};

struct NnResult {
    int id = -1;
    double value = 0.0;  // c(q, b) + w(b)
};

/// Minimum of c(a,b) - w(a) + w(b) over live pairs, ties by (a_id, b_id).
std::optional<BcpResult> query_pair_min(const detail::Side& p, const detail::Side& q,
                                        const CostParams& params);

/// Minimum of c(point, b) + w(b) over the side's live points, ties by id.
std::optional<NnResult> query_nn(const detail::Side& side, const Point& point,
                                 const CostParams& params);

/// Dynamic additively weighted bichromatic closest pair with an operation log
/// and LIFO checkpoint/rewind. Rewind replays inverse operations in reverse
/// log order; contents and query answers are restored exactly.
class BcpStructure {
public:
    explicit BcpStructure(const CostParams& params) : params_(params) {}

    struct Token {
        uint64_t log_size = 0;
        uint64_t tail_serial = 0;
        const void* owner = nullptr;
    };

    void insert(BcpSideId side, const WeightedPoint& wp);
    void erase(BcpSideId side, int id);
    std::optional<BcpResult> query_min() const;
    std::optional<NnResult> nn(BcpSideId side, const Point& point) const;

    Token checkpoint() const;
    void rewind(const Token& token);

    /// Bulk initial load; the log starts empty afterwards.
    void bulk_load(BcpSideId side, const std::vector<WeightedPoint>& pts);

    bool contains(BcpSideId side, int id) const { return side_of(side).contains(id); }
    WeightedPoint get(BcpSideId side, int id) const { return side_of(side).get(id); }
    int size(BcpSideId side) const { return side_of(side).size(); }
    uint64_t log_size() const { return log_.size(); }
    const CostParams& params() const { return params_; }

private:
    struct UpdateRecord {
        enum class Kind : uint8_t { Insert, Delete } kind;
        BcpSideId side;
        WeightedPoint wp;
        uint64_t serial;
    };

    detail::Side& side_of(BcpSideId s) { return s == BcpSideId::P ? p_ : q_; }
    const detail::Side& side_of(BcpSideId s) const { return s == BcpSideId::P ? p_ : q_; }

    CostParams params_;
    detail::Side p_, q_;
    std::vector<UpdateRecord> log_;
    uint64_t next_serial_ = 1;
};

}  // namespace gpm
