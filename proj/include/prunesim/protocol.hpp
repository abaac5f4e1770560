#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "prunesim/bytes.hpp"
#include "prunesim/graph.hpp"

namespace prunesim {

enum class Variant { Original, Enhanced };

inline const char* variant_name(Variant v) {
    return v == Variant::Original ? "original" : "enhanced";
}

inline Variant parse_variant(const std::string& s) {
    if (s == "original" || s == "P") return Variant::Original;
    if (s == "enhanced" || s == "I") return Variant::Enhanced;
    throw std::invalid_argument("unknown variant: " + s);
}

enum class NodeStatus { Running, Ended };

// One application-layer neighbor announcement: the sender's newest
// discovery set for the given iteration.
struct AppMessage {
    uint32_t sender{0};
    uint16_t iteration{0};
    std::vector<uint32_t> payload;  // sorted, no duplicates

    friend bool operator==(const AppMessage& a, const AppMessage& b) {
        return a.sender == b.sender && a.iteration == b.iteration && a.payload == b.payload;
    }
};

// Wire form: sender u32, iteration u16, count u32, then sorted u32 ids.
inline std::vector<uint8_t> encode_message(const AppMessage& m) {
    std::vector<uint8_t> out;
    out.reserve(10 + 4 * m.payload.size());
    put_u32(out, m.sender);
    put_u16(out, m.iteration);
    put_u32(out, static_cast<uint32_t>(m.payload.size()));
    for (uint32_t id : m.payload) put_u32(out, id);
    return out;
}

inline AppMessage decode_message(const std::vector<uint8_t>& bytes) {
    ByteReader r(bytes);
    AppMessage m;
    m.sender = r.u32();
    m.iteration = r.u16();
    uint32_t count = r.u32();
    if (r.remaining() != static_cast<size_t>(count) * 4) {
        throw std::runtime_error("decode error: payload length mismatch");
    }
    m.payload.reserve(count);
    for (uint32_t k = 0; k < count; ++k) m.payload.push_back(r.u32());
    return m;
}

// Per-node state of the pruning protocol.
struct NodeState {
    uint32_t node_id{0};
    Variant variant{Variant::Original};
    int t{0};            // current iteration
    int horizon{1};      // D, preset iteration cap
    int final_t{-1};     // T, set at termination
    NodeStatus status{NodeStatus::Running};

    std::vector<uint32_t> neighbors;         // N_i, sorted
    std::vector<uint32_t> active_neighbors;  // N^up, sorted
    std::unordered_set<uint32_t> view;       // N_{i,t}
    std::vector<uint32_t> new_nodes;         // N^(t), sorted
    std::unordered_map<uint32_t, std::vector<uint32_t>> q_map;  // j -> Q_ij
    std::unordered_set<uint32_t> pruned_now;  // F^(t)
    std::unordered_set<uint32_t> pruned_all;  // F_{i,t}
    long long delta{0};
    std::optional<Closeness> estimate;

    bool sent_initial{false};
    bool is_leaf() const { return neighbors.size() == 1; }
    bool self_pruned() const { return pruned_all.count(node_id) > 0; }
};

inline bool is_ended(const NodeState& s) {
    return s.t == s.horizon || s.new_nodes.empty() || s.self_pruned();
}

inline NodeState init_state(uint32_t i, std::vector<uint32_t> neighbors, int d, Variant variant) {
    if (d < 1) throw std::invalid_argument("iteration cap D must be >= 1");
    if (neighbors.empty()) throw std::invalid_argument("isolated node: neighbor set is empty");
    std::sort(neighbors.begin(), neighbors.end());
    NodeState s;
    s.node_id = i;
    s.variant = variant;
    s.horizon = d;
    s.neighbors = neighbors;
    s.active_neighbors = neighbors;
    s.new_nodes = neighbors;  // N^(0)
    s.view.insert(neighbors.begin(), neighbors.end());
    s.delta = static_cast<long long>(neighbors.size());
    return s;
}

inline Closeness closeness_estimate(const NodeState& s) {
    if (s.status != NodeStatus::Ended) throw std::logic_error("estimate requested before termination");
    Closeness c;
    if (s.self_pruned()) {
        c.exact = Ratio{0, 1};
        c.value = 0.0;
        return c;
    }
    c.exact = Ratio{static_cast<long long>(s.view.size()) - 1, s.delta};
    c.exact.reduce();
    c.value = c.exact.value();
    return c;
}

// Termination: freeze T and the estimate.
inline void finalize(NodeState& s) {
    s.final_t = std::min(s.t, s.horizon);
    s.status = NodeStatus::Ended;
    s.estimate = closeness_estimate(s);
}

// Round-0 sends. Enhanced leaves stay silent and drop out immediately;
// their neighbors will treat the silence as a leaf announcement.
inline std::vector<AppMessage> initial_one_hop(NodeState& s) {
    if (s.t != 0 || s.sent_initial) throw std::logic_error("initial_one_hop called out of order");
    s.sent_initial = true;
    if (s.variant == Variant::Enhanced && s.is_leaf()) {
        s.pruned_now.insert(s.node_id);
        s.pruned_all.insert(s.node_id);
        finalize(s);
        return {};
    }
    std::vector<AppMessage> out;
    out.reserve(s.neighbors.size());
    for (uint32_t j : s.neighbors) {
        (void)j;
        out.push_back(AppMessage{s.node_id, 0, s.new_nodes});
    }
    return out;
}

namespace detail {

inline void fuse_payloads(NodeState& s, const std::vector<AppMessage>& delivered,
                          std::vector<uint32_t>& accumulated) {
    for (const auto& m : delivered) {
        accumulated.insert(accumulated.end(), m.payload.begin(), m.payload.end());
    }
    std::sort(accumulated.begin(), accumulated.end());
    accumulated.erase(std::unique(accumulated.begin(), accumulated.end()), accumulated.end());
    s.new_nodes.clear();
    for (uint32_t id : accumulated) {
        if (!s.view.count(id)) s.new_nodes.push_back(id);
    }
    s.view.insert(s.new_nodes.begin(), s.new_nodes.end());
    s.delta += static_cast<long long>(s.t) * static_cast<long long>(s.new_nodes.size());
}

}  // namespace detail

// Round-0 fusion: record Q_ij maps and fold the announced one-hop sets
// into the view. Enhanced runs synthesize Q_ij = {i} for silent neighbors.
inline void initial_update(NodeState& s, const std::vector<AppMessage>& delivered) {
    if (s.t != 0) throw std::logic_error("initial_update called out of order");
    s.t = 1;
    std::vector<uint32_t> accumulated;
    std::unordered_set<uint32_t> heard;
    for (const auto& m : delivered) {
        if (m.iteration != 0) throw std::logic_error("round-0 message with nonzero iteration");
        s.q_map[m.sender] = m.payload;
        heard.insert(m.sender);
    }
    std::vector<AppMessage> all = delivered;
    if (s.variant == Variant::Enhanced) {
        for (uint32_t j : s.neighbors) {
            if (!heard.count(j)) {
                std::vector<uint32_t> synth{s.node_id};
                s.q_map[j] = synth;
                all.push_back(AppMessage{j, 0, synth});
            }
        }
    }
    detail::fuse_payloads(s, all, accumulated);
}

// Q_ii is the node's own one-hop set, so the self checks below are
// well-defined.
inline const std::vector<uint32_t>* q_of(const NodeState& s, uint32_t j) {
    if (j == s.node_id) return &s.neighbors;
    auto it = s.q_map.find(j);
    return it == s.q_map.end() ? nullptr : &it->second;
}

inline void leaves_detection(NodeState& s) {
    for (uint32_t j : s.neighbors) {
        const auto* q = q_of(s, j);
        if (q && q->size() == 1) s.pruned_now.insert(j);
    }
    if (s.neighbors.size() == 1) s.pruned_now.insert(s.node_id);
}

inline void triangle_detection(NodeState& s) {
    auto check = [&](uint32_t j) {
        const auto* q = q_of(s, j);
        if (!q || q->size() != 2) return;
        uint32_t f = (*q)[0], g = (*q)[1];
        // First-round knowledge only: if neither endpoint's Q is known the
        // test is skipped.
        if (const auto* qg = q_of(s, g)) {
            if (std::binary_search(qg->begin(), qg->end(), f)) s.pruned_now.insert(j);
        } else if (const auto* qf = q_of(s, f)) {
            if (std::binary_search(qf->begin(), qf->end(), g)) s.pruned_now.insert(j);
        }
    };
    for (uint32_t j : s.active_neighbors) check(j);
    check(s.node_id);
}

inline void first_pruning_detection(NodeState& s) {
    if (s.t != 1) throw std::logic_error("first_pruning_detection called out of order");
    s.pruned_now.clear();
    leaves_detection(s);
    triangle_detection(s);
    s.pruned_all.insert(s.pruned_now.begin(), s.pruned_now.end());
}

// Rounds >= 1: drop pruned neighbors from N^up and announce the newest
// discovery set to the rest.
inline std::vector<AppMessage> next_one_hop(NodeState& s) {
    if (s.status != NodeStatus::Running) throw std::logic_error("next_one_hop on ended node");
    s.active_neighbors.erase(
        std::remove_if(s.active_neighbors.begin(), s.active_neighbors.end(),
                       [&](uint32_t j) { return s.pruned_all.count(j) > 0; }),
        s.active_neighbors.end());
    std::vector<AppMessage> out;
    out.reserve(s.active_neighbors.size());
    for (uint32_t j : s.active_neighbors) {
        (void)j;
        out.push_back(AppMessage{s.node_id, static_cast<uint16_t>(s.t), s.new_nodes});
    }
    return out;
}

// Only-receiving detection: a neighbor whose announcement contained nothing
// outside the pre-fusion view is pruned; with a single active neighbor and
// fresh discoveries the node prunes itself.
inline void further_pruning_detection(NodeState& s, const std::vector<AppMessage>& delivered) {
    s.pruned_now.clear();
    std::unordered_set<uint32_t> fresh(s.new_nodes.begin(), s.new_nodes.end());
    std::unordered_set<uint32_t> active(s.active_neighbors.begin(), s.active_neighbors.end());
    for (const auto& m : delivered) {
        if (!active.count(m.sender)) continue;
        bool announced_fresh = std::any_of(m.payload.begin(), m.payload.end(),
                                           [&](uint32_t id) { return fresh.count(id) > 0; });
        if (!announced_fresh) s.pruned_now.insert(m.sender);
    }
    if (s.active_neighbors.size() == 1 && !s.new_nodes.empty()) {
        s.pruned_now.insert(s.node_id);
    }
}

inline void next_update(NodeState& s, const std::vector<AppMessage>& delivered) {
    if (s.status != NodeStatus::Running) throw std::logic_error("next_update on ended node");
    for (const auto& m : delivered) {
        if (m.iteration != s.t) throw std::logic_error("message iteration mismatch");
    }
    if (is_ended(s)) {
        finalize(s);
        return;
    }
    s.t += 1;
    std::vector<uint32_t> accumulated;
    detail::fuse_payloads(s, delivered, accumulated);
    further_pruning_detection(s, delivered);
    s.pruned_all.insert(s.pruned_now.begin(), s.pruned_now.end());
}

}  // namespace prunesim
