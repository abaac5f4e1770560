#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <queue>
#include <stdexcept>
#include <vector>

#include "prunesim/bytes.hpp"
#include "prunesim/graph.hpp"
#include "prunesim/protocol.hpp"
#include "prunesim/transport.hpp"

namespace prunesim {

enum class LossModel { PerByte, PerPacket };

struct SimConfig {
    int m{1};                  // packets per application message
    double loss_p{0.0};        // drop probability (see loss_model)
    LossModel loss_model{LossModel::PerByte};
    int latency_ticks{1};      // one-way per-hop delay
    int window{0};             // GBN window, 0 = m (whole message in flight)
    int timeout_ticks{0};      // 0 = 4*latency + largest packet serialization
    long long max_retries{-1}; // -1 = unbounded
    uint64_t seed{0};
    int horizon{12};           // D
    Variant variant{Variant::Original};
    int bandwidth{64};         // bytes per tick per directed link
    bool symmetric_loss{false};  // also drop ACKs (default: DATA only)

    void validate() const {
        if (m < 1) throw std::invalid_argument("m must be >= 1");
        if (loss_p < 0.0 || loss_p >= 1.0) throw std::invalid_argument("loss_p must be in [0,1)");
        if (horizon < 1) throw std::invalid_argument("D must be >= 1");
        if (latency_ticks < 1) throw std::invalid_argument("latency must be >= 1 tick");
        if (bandwidth < 1) throw std::invalid_argument("bandwidth must be >= 1 byte/tick");
    }
};

struct NodeMetrics {
    long long packets_sent{0};        // DATA transmissions incl. retransmissions
    long long packets_received{0};    // DATA arrivals
    long long retransmissions{0};
    long long app_messages_sent{0};
    long long app_messages_lost{0};   // retry exhaustion, attributed to sender
    int active_iterations{0};         // rounds in which this node sent (observed D_i)
    int final_t{0};                   // T
    size_t view_size{0};
    size_t q_size{0};
    long long buffer_peak{0};         // stored ids + peak buffered packet bytes
};

struct RunMetrics {
    Variant variant{Variant::Original};
    std::vector<NodeMetrics> node;
    long long ticks{0};
    double wall_seconds{0.0};
    double avg_msgs{0.0};  // mean per-node packets_sent
    long long max_msgs{0};
    double loss_frac{0.0};  // lost app messages / sent app messages
    long long app_messages_sent{0};
    long long app_messages_lost{0};
    std::vector<Closeness> estimates;
    uint32_t selected_leader{0};
};

// Maximum estimate wins; ties break toward the smaller node id (needed for
// all-pruned graphs where every estimate is zero).
inline uint32_t select_most_central(const RunMetrics& metrics) {
    if (metrics.estimates.empty()) throw std::invalid_argument("no estimates");
    uint32_t best = 0;
    for (uint32_t i = 1; i < metrics.estimates.size(); ++i) {
        if (metrics.estimates[best].exact < metrics.estimates[i].exact) best = i;
    }
    return best;
}

struct OutboundMessage {
    uint32_t from{0};
    uint32_t to{0};
    AppMessage msg;
};

// Test hook: force-drop specific DATA transmissions (keyed by message,
// sequence number and transmission attempt, 0 = first).
struct ExchangeHooks {
    std::function<bool(const MsgKey&, uint16_t seq, int attempt)> force_drop;
};

struct ExchangeResult {
    std::vector<std::vector<AppMessage>> delivered;  // per node, (sender, iteration) order
    long long duration{0};                           // ticks consumed by this exchange
    std::vector<long long> delivery_tick;            // per input message, -1 if lost
    long long app_lost{0};
};

// Drives all per-message GBN machines over lossy FIFO links with a shared
// tick clock. DATA packets occupy link egress for ceil(size/bandwidth)
// ticks; ACKs ride a contention-free control channel.
class ExchangePhase {
public:
    ExchangePhase(uint32_t n, const SimConfig& cfg, std::vector<NodeMetrics>* metrics,
                  std::vector<uint64_t>* link_ordinals, const ExchangeHooks* hooks)
        : n_(n), cfg_(cfg), metrics_(metrics), link_ordinals_(link_ordinals), hooks_(hooks) {}

    ExchangeResult run(const std::vector<OutboundMessage>& outbound) {
        ExchangeResult res;
        res.delivered.resize(n_);
        res.delivery_tick.assign(outbound.size(), -1);
        if (outbound.empty()) return res;

        msgs_.clear();
        msgs_.reserve(outbound.size());
        link_free_.clear();
        events_ = {};
        event_seq_ = 0;
        max_tick_ = 0;
        buf_cur_.assign(n_, 0);
        if (transport_floor_.size() != n_) transport_floor_.assign(n_, 0);
        if (peak_cur_.size() != n_) peak_cur_.assign(n_, 0);

        for (size_t idx = 0; idx < outbound.size(); ++idx) {
            const auto& om = outbound[idx];
            MsgKey key{om.from, om.to, om.msg.iteration};
            auto frags = fragment(encode_message(om.msg), cfg_.m, key);
            Msg st;
            st.key = key;
            size_t max_chunk = 0;
            for (const auto& p : frags) max_chunk = std::max(max_chunk, p.chunk.size());
            st.timeout = cfg_.timeout_ticks > 0
                             ? cfg_.timeout_ticks
                             : 4LL * cfg_.latency_ticks + serialization(max_chunk);
            st.sender = GbnSender(std::move(frags), cfg_.window > 0 ? cfg_.window : cfg_.m,
                                  cfg_.max_retries < 0 ? -1 : static_cast<int>(cfg_.max_retries));
            st.last_depart.assign(cfg_.m, 0);
            st.attempts.assign(cfg_.m, 0);
            msgs_.push_back(std::move(st));
        }

        for (size_t idx = 0; idx < msgs_.size(); ++idx) {
            auto pkts = msgs_[idx].sender.on_send_window();
            for (const auto& p : pkts) grow_buffer(p.key.sender, p.wire_size());
            transmit(idx, pkts, 0);
            arm_timer(idx);
        }

        while (!all_done()) {
            if (events_.empty()) throw std::logic_error("exchange deadlock: running senders but no events");
            Event ev = events_.top();
            events_.pop();
            max_tick_ = std::max(max_tick_, ev.tick);
            switch (ev.type) {
                case Event::Type::DataArrival: on_data_arrival(ev, res); break;
                case Event::Type::AckArrival: on_ack_arrival(ev); break;
                case Event::Type::Timeout: on_timeout(ev, res); break;
            }
        }

        // Failed messages release whatever the receiver had buffered.
        for (auto& m : msgs_) {
            if (m.sender.failed) {
                for (const auto& c : m.receiver.chunks) {
                    shrink_buffer(m.key.receiver, kDataHeaderBytes + c.size());
                }
            }
        }

        res.duration = max_tick_ + 1;
        for (size_t idx = 0; idx < msgs_.size(); ++idx) {
            res.delivery_tick[idx] = msgs_[idx].completed_tick;
            if (msgs_[idx].sender.failed) {
                ++res.app_lost;
                if (metrics_) ++(*metrics_)[msgs_[idx].key.sender].app_messages_lost;
            }
        }
        // Normalize app delivery order: (sender id, iteration).
        for (auto& msg : msgs_) {
            if (msg.delivered_msg) {
                res.delivered[msg.key.receiver].push_back(*msg.delivered_msg);
            }
        }
        for (auto& inbox : res.delivered) {
            std::sort(inbox.begin(), inbox.end(), [](const AppMessage& a, const AppMessage& b) {
                return std::tie(a.sender, a.iteration) < std::tie(b.sender, b.iteration);
            });
        }
        return res;
    }

private:
    struct Msg {
        MsgKey key;
        GbnSender sender;
        GbnReceiver receiver;
        std::vector<long long> last_depart;  // depart_start per seq (latest transmission)
        std::vector<int> attempts;           // transmissions per seq
        long long timeout{0};
        long long expiry{-1};
        long long completed_tick{-1};
        std::optional<AppMessage> delivered_msg;
    };

    struct Event {
        enum class Type { DataArrival, AckArrival, Timeout };
        long long tick{0};
        uint64_t seq{0};  // insertion order tiebreak
        Type type{Type::DataArrival};
        size_t msg_idx{0};
        Packet packet;       // DataArrival
        int ack_value{-1};   // AckArrival
        long long stamp{0};  // Timeout validity check
        bool operator>(const Event& o) const {
            return std::tie(tick, seq) > std::tie(o.tick, o.seq);
        }
    };

    // Line time is charged for payload bytes only (headers are framing on a
    // fast control plane); every packet still occupies at least one tick.
    long long serialization(size_t chunk_bytes) const {
        return std::max<long long>(1, (static_cast<long long>(chunk_bytes) + cfg_.bandwidth - 1) / cfg_.bandwidth);
    }

    bool all_done() const {
        return std::all_of(msgs_.begin(), msgs_.end(), [](const Msg& m) { return m.sender.done(); });
    }

    double drop_probability(size_t chunk_bytes) const {
        if (cfg_.loss_p <= 0.0) return 0.0;
        if (cfg_.loss_model == LossModel::PerPacket) return cfg_.loss_p;
        double exposure = static_cast<double>(std::max<size_t>(1, chunk_bytes));
        return 1.0 - std::pow(1.0 - cfg_.loss_p, exposure);
    }

    bool decide_drop(const Msg& m, const Packet& p, int attempt) {
        if (hooks_ && hooks_->force_drop && hooks_->force_drop(m.key, p.seq, attempt)) return true;
        double prob = drop_probability(p.chunk.size());
        if (prob <= 0.0) return false;
        uint64_t ordinal = next_ordinal(p.key.sender, p.key.receiver);
        uint64_t h = hash_combine(hash_combine(hash_combine(cfg_.seed, p.key.sender), p.key.receiver), ordinal);
        return hash_unit(h) < prob;
    }

    uint64_t next_ordinal(uint32_t from, uint32_t to) {
        if (!link_ordinals_) return local_ordinals_[link_id(from, to)]++;
        return (*link_ordinals_)[link_id(from, to)]++;
    }

    size_t link_id(uint32_t from, uint32_t to) const { return static_cast<size_t>(from) * n_ + to; }

    void transmit(size_t idx, const std::vector<Packet>& pkts, long long now) {
        Msg& m = msgs_[idx];
        for (const auto& p : pkts) {
            long long& link_free = link_free_[link_id(p.key.sender, p.key.receiver)];
            long long depart = std::max(now, link_free);
            long long s = serialization(p.chunk.size());
            link_free = depart + s;
            m.last_depart[p.seq] = depart;
            int attempt = m.attempts[p.seq]++;
            if (metrics_) ++(*metrics_)[p.key.sender].packets_sent;
            if (!decide_drop(m, p, attempt)) {
                push_event(Event{depart + s + cfg_.latency_ticks - 1, 0,
                                 Event::Type::DataArrival, idx, p, -1, 0});
            }
        }
    }

    void arm_timer(size_t idx) {
        Msg& m = msgs_[idx];
        if (m.sender.done() || m.sender.base == m.sender.next_seq) {
            m.expiry = -1;
            return;
        }
        m.expiry = m.last_depart[m.sender.base] + m.timeout;
        Event ev;
        ev.tick = m.expiry;
        ev.type = Event::Type::Timeout;
        ev.msg_idx = idx;
        ev.stamp = m.expiry;
        push_event(std::move(ev));
    }

    void on_data_arrival(const Event& ev, ExchangeResult& res) {
        Msg& m = msgs_[ev.msg_idx];
        if (m.sender.failed) return;  // dead message, packet vanishes
        if (metrics_) ++(*metrics_)[ev.packet.key.receiver].packets_received;
        bool stores = !m.receiver.complete() &&
                      static_cast<int>(ev.packet.seq) == m.receiver.expected_seq;
        auto r = m.receiver.on_data(ev.packet);
        if (stores) grow_buffer(ev.packet.key.receiver, ev.packet.wire_size());
        if (r.completed) {
            m.completed_tick = ev.tick;
            m.delivered_msg = decode_message(r.message_bytes);
            for (const auto& c : m.receiver.chunks) {
                shrink_buffer(ev.packet.key.receiver, kDataHeaderBytes + c.size());
            }
            (void)res;
        }
        // ACK rides the control channel: fixed latency, no egress contention.
        bool drop_ack = false;
        if (cfg_.symmetric_loss && cfg_.loss_p > 0.0) {
            uint64_t ordinal = next_ordinal(r.ack.key.sender, r.ack.key.receiver);
            uint64_t h = hash_combine(
                hash_combine(hash_combine(cfg_.seed ^ 0xacacacacULL, r.ack.key.sender), r.ack.key.receiver),
                ordinal);
            drop_ack = hash_unit(h) < drop_probability(kAckWireBytes);
        }
        if (!drop_ack) {
            Event ack_ev;
            ack_ev.tick = ev.tick + cfg_.latency_ticks;
            ack_ev.type = Event::Type::AckArrival;
            ack_ev.msg_idx = ev.msg_idx;
            ack_ev.ack_value = r.ack.ack;
            push_event(std::move(ack_ev));
        }
    }

    void on_ack_arrival(const Event& ev) {
        Msg& m = msgs_[ev.msg_idx];
        if (m.sender.done()) return;
        int old_base = m.sender.base;
        auto pkts = m.sender.on_ack(ev.ack_value);
        for (int s = old_base; s < m.sender.base; ++s) {
            shrink_buffer(m.key.sender, m.sender.packets[s].wire_size());
        }
        for (const auto& p : pkts) grow_buffer(p.key.sender, p.wire_size());
        transmit(ev.msg_idx, pkts, ev.tick);
        if (m.sender.base != old_base || !pkts.empty()) arm_timer(ev.msg_idx);
    }

    void on_timeout(const Event& ev, ExchangeResult& res) {
        Msg& m = msgs_[ev.msg_idx];
        if (m.sender.done() || ev.stamp != m.expiry) return;
        auto pkts = m.sender.on_timeout();
        if (m.sender.failed) {
            for (int s = m.sender.base; s < m.sender.next_seq; ++s) {
                shrink_buffer(m.key.sender, m.sender.packets[s].wire_size());
            }
            (void)res;
            return;
        }
        if (metrics_) (*metrics_)[m.key.sender].retransmissions += static_cast<long long>(pkts.size());
        transmit(ev.msg_idx, pkts, ev.tick);
        arm_timer(ev.msg_idx);
    }

    void push_event(Event ev) {
        ev.seq = event_seq_++;
        events_.push(std::move(ev));
    }

    void grow_buffer(uint32_t node, size_t bytes) {
        buf_cur_[node] += static_cast<long long>(bytes);
        if (metrics_) {
            auto& nm = (*metrics_)[node];
            nm.buffer_peak = std::max(nm.buffer_peak, transport_floor_[node] + buf_cur_[node]);
        }
        peak_cur_[node] = std::max(peak_cur_[node], buf_cur_[node]);
    }

    void shrink_buffer(uint32_t node, size_t bytes) { buf_cur_[node] -= static_cast<long long>(bytes); }

public:
    // Per-node transport byte peak observed in the last run() call.
    const std::vector<long long>& byte_peaks() const { return peak_cur_; }
    void reset_peaks() {
        peak_cur_.assign(n_, 0);
        transport_floor_.assign(n_, 0);
    }
    void set_floor(const std::vector<long long>& floor) { transport_floor_ = floor; }

private:
    uint32_t n_;
    SimConfig cfg_;
    std::vector<NodeMetrics>* metrics_;
    std::vector<uint64_t>* link_ordinals_;
    const ExchangeHooks* hooks_;

    std::vector<Msg> msgs_;
    std::map<size_t, long long> link_free_;
    std::map<size_t, uint64_t> local_ordinals_;
    std::priority_queue<Event, std::vector<Event>, std::greater<Event>> events_;
    uint64_t event_seq_{0};
    long long max_tick_{0};
    std::vector<long long> buf_cur_;
    std::vector<long long> peak_cur_;
    std::vector<long long> transport_floor_;
};

// One full protocol execution: round barriers drive initial_one_hop /
// initial_update / pruning, then next_one_hop / next_update until every
// node has terminated. Pure function of (graph, config) up to wall_seconds.
inline RunMetrics run_simulation(const Graph& g, const SimConfig& cfg,
                                 const ExchangeHooks* hooks = nullptr) {
    cfg.validate();
    if (!is_connected(g)) throw std::invalid_argument("graph must be connected");
    auto t0 = std::chrono::steady_clock::now();

    const uint32_t n = g.n();
    RunMetrics metrics;
    metrics.variant = cfg.variant;
    metrics.node.resize(n);

    std::vector<NodeState> states;
    states.reserve(n);
    for (uint32_t i = 0; i < n; ++i) {
        states.push_back(init_state(i, g.adj[i], cfg.horizon, cfg.variant));
    }

    std::vector<uint64_t> link_ordinals(static_cast<size_t>(n) * n, 0);
    ExchangePhase exchange(n, cfg, &metrics.node, &link_ordinals, hooks);
    long long global_tick = 0;
    std::vector<long long> proto_ids(n, 0);

    auto record_protocol_footprint = [&](uint32_t i) {
        const NodeState& s = states[i];
        long long ids = static_cast<long long>(s.view.size() + s.new_nodes.size() +
                                               s.active_neighbors.size() + s.pruned_all.size());
        for (const auto& [j, q] : s.q_map) {
            (void)j;
            ids += static_cast<long long>(q.size());
        }
        proto_ids[i] = ids;
        metrics.node[i].buffer_peak = std::max(metrics.node[i].buffer_peak, ids);
    };

    auto do_exchange = [&](const std::vector<OutboundMessage>& sends) {
        exchange.reset_peaks();
        exchange.set_floor(proto_ids);
        auto res = exchange.run(sends);
        global_tick += res.duration;
        metrics.app_messages_lost += res.app_lost;
        return res;
    };

    // Round 0.
    std::vector<OutboundMessage> sends;
    for (uint32_t i = 0; i < n; ++i) {
        auto msgs = initial_one_hop(states[i]);
        if (!msgs.empty()) {
            ++metrics.node[i].active_iterations;
            metrics.node[i].app_messages_sent += static_cast<long long>(msgs.size());
            metrics.app_messages_sent += static_cast<long long>(msgs.size());
            size_t k = 0;
            for (uint32_t j : states[i].neighbors) {
                sends.push_back(OutboundMessage{i, j, std::move(msgs[k++])});
            }
        }
    }
    auto res0 = do_exchange(sends);
    for (uint32_t i = 0; i < n; ++i) {
        if (states[i].status != NodeStatus::Running) continue;
        initial_update(states[i], res0.delivered[i]);
        first_pruning_detection(states[i]);
        record_protocol_footprint(i);
    }

    // Rounds >= 1.
    for (;;) {
        sends.clear();
        std::vector<uint32_t> updating;
        for (uint32_t i = 0; i < n; ++i) {
            NodeState& s = states[i];
            if (s.status != NodeStatus::Running) continue;
            if (is_ended(s)) {
                finalize(s);
                continue;
            }
            updating.push_back(i);
            auto msgs = next_one_hop(s);
            if (!msgs.empty()) {
                ++metrics.node[i].active_iterations;
                metrics.node[i].app_messages_sent += static_cast<long long>(msgs.size());
                metrics.app_messages_sent += static_cast<long long>(msgs.size());
                size_t k = 0;
                for (uint32_t j : s.active_neighbors) {
                    sends.push_back(OutboundMessage{i, j, std::move(msgs[k++])});
                }
            }
        }
        if (updating.empty()) break;
        auto res = do_exchange(sends);
        for (uint32_t i : updating) {
            // Messages addressed to already-ended nodes are simply dropped
            // at the application layer; transport still delivered and
            // ACKed them.
            next_update(states[i], res.delivered[i]);
            record_protocol_footprint(i);
        }
    }

    metrics.ticks = global_tick;
    metrics.estimates.reserve(n);
    long long total_sent = 0;
    for (uint32_t i = 0; i < n; ++i) {
        const NodeState& s = states[i];
        metrics.estimates.push_back(*s.estimate);
        metrics.node[i].final_t = s.final_t;
        metrics.node[i].view_size = s.view.size();
        size_t qs = 0;
        for (const auto& [j, q] : s.q_map) {
            (void)j;
            qs += q.size();
        }
        metrics.node[i].q_size = qs;
        total_sent += metrics.node[i].packets_sent;
        metrics.max_msgs = std::max(metrics.max_msgs, metrics.node[i].packets_sent);
    }
    metrics.avg_msgs = n > 0 ? static_cast<double>(total_sent) / n : 0.0;
    metrics.loss_frac = metrics.app_messages_sent > 0
                            ? static_cast<double>(metrics.app_messages_lost) / metrics.app_messages_sent
                            : 0.0;
    metrics.selected_leader = select_most_central(metrics);
    metrics.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return metrics;
}

}  // namespace prunesim
