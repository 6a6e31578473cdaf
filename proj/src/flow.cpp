#include "gpm/flow.hpp"

#include <algorithm>

namespace gpm {

FlowNetwork build_network(int r, int n, int k, const CostParams& params) {
    if (k < 1 || k > std::min(r, n)) throw std::invalid_argument("infeasible k");
    validate(params);
    FlowNetwork net;
    net.r = r;
    net.n = n;
    net.k = k;
    net.params = params;
    return net;
}

Pseudoflow::Pseudoflow(const FlowNetwork& net)
    : net_(&net),
      left_(net.r, 0),
      right_(net.n, 0),
      bip_out_(net.r),
      bip_in_(net.n),
      imb_(net.node_count(), 0) {
    imb_[FlowNetwork::kS] = net.k;
    imb_[FlowNetwork::kT] = -net.k;
    excess_ = net.k;
}

bool Pseudoflow::bip_saturated(int a, int b) const {
    const auto& out = bip_out_[a];
    return std::find(out.begin(), out.end(), b) != out.end();
}

bool Pseudoflow::saturated(const Arc& arc) const {
    switch (arc.kind) {
        case Arc::Kind::Left: return left_saturated(arc.a);
        case Arc::Kind::Right: return right_saturated(arc.b);
        case Arc::Kind::Bipartite: return bip_saturated(arc.a, arc.b);
    }
    return false;
}

void Pseudoflow::bump(int v, long long d) {
    const long long before = imb_[v];
    imb_[v] += d;
    excess_ += std::max(imb_[v], 0LL) - std::max(before, 0LL);
}

void Pseudoflow::check_support_bound() const {
    // Lemma 1: |supp| <= 3k for circulations, <= 3(k + excess) in general.
    if (supp_ > 3 * (static_cast<long long>(net_->k) + excess_))
        throw std::logic_error("support bound violated (Lemma 1)");
}

void Pseudoflow::saturate(const Arc& arc) {
    if (saturated(arc)) throw std::invalid_argument("saturate: arc already saturated");
    int tail, head;
    switch (arc.kind) {
        case Arc::Kind::Left:
            left_[arc.a] = 1;
            tail = FlowNetwork::kS;
            head = net_->a_node(arc.a);
            break;
        case Arc::Kind::Right:
            right_[arc.b] = 1;
            right_set_.insert(arc.b);
            tail = net_->b_node(arc.b);
            head = FlowNetwork::kT;
            break;
        case Arc::Kind::Bipartite:
        default:
            bip_out_[arc.a].push_back(arc.b);
            bip_in_[arc.b].push_back(arc.a);
            tail = net_->a_node(arc.a);
            head = net_->b_node(arc.b);
            break;
    }
    ++supp_;
    bump(tail, -1);
    bump(head, +1);
}

void Pseudoflow::desaturate(const Arc& arc) {
    if (!saturated(arc)) throw std::invalid_argument("desaturate: arc not saturated");
    int tail, head;
    switch (arc.kind) {
        case Arc::Kind::Left:
            left_[arc.a] = 0;
            tail = FlowNetwork::kS;
            head = net_->a_node(arc.a);
            break;
        case Arc::Kind::Right:
            right_[arc.b] = 0;
            right_set_.erase(arc.b);
            tail = net_->b_node(arc.b);
            head = FlowNetwork::kT;
            break;
        case Arc::Kind::Bipartite:
        default: {
            auto& out = bip_out_[arc.a];
            out.erase(std::find(out.begin(), out.end(), arc.b));
            auto& in = bip_in_[arc.b];
            in.erase(std::find(in.begin(), in.end(), arc.a));
            tail = net_->a_node(arc.a);
            head = net_->b_node(arc.b);
            break;
        }
    }
    --supp_;
    bump(tail, +1);
    bump(head, -1);
}

void Pseudoflow::augment_by(const std::vector<ResidualArc>& g) {
    for (const ResidualArc& ra : g) {
        if (ra.forward) {
            if (saturated(ra.arc)) throw std::invalid_argument("augment_by: non-residual forward arc");
            saturate(ra.arc);
        } else {
            if (!saturated(ra.arc)) throw std::invalid_argument("augment_by: non-residual backward arc");
            desaturate(ra.arc);
        }
    }
    check_support_bound();
}

const std::vector<int>& Pseudoflow::bip_out(int a) const { return bip_out_[a]; }
const std::vector<int>& Pseudoflow::bip_in(int b) const { return bip_in_[b]; }

std::vector<long long> Pseudoflow::recompute_imbalances() const {
    std::vector<long long> imb(net_->node_count(), 0);
    imb[FlowNetwork::kS] = net_->k;
    imb[FlowNetwork::kT] = -net_->k;
    for (int a = 0; a < net_->r; ++a) {
        if (left_[a]) {
            --imb[FlowNetwork::kS];
            ++imb[net_->a_node(a)];
        }
        for (int b : bip_out_[a]) {
            --imb[net_->a_node(a)];
            ++imb[net_->b_node(b)];
        }
    }
    for (int b = 0; b < net_->n; ++b) {
        if (right_[b]) {
            --imb[net_->b_node(b)];
            ++imb[FlowNetwork::kT];
        }
    }
    return imb;
}

}  // namespace gpm
