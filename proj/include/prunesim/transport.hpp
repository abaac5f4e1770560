#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "prunesim/bytes.hpp"
#include "prunesim/protocol.hpp"

namespace prunesim {

// Identifies one application message on the wire.
struct MsgKey {
    uint32_t sender{0};
    uint32_t receiver{0};
    uint16_t iteration{0};

    friend bool operator==(const MsgKey& a, const MsgKey& b) {
        return a.sender == b.sender && a.receiver == b.receiver && a.iteration == b.iteration;
    }
    friend bool operator<(const MsgKey& a, const MsgKey& b) {
        return std::tie(a.sender, a.receiver, a.iteration) < std::tie(b.sender, b.receiver, b.iteration);
    }
};

enum class PacketKind : uint8_t { Data = 0, Ack = 1 };

// DATA header: kind(1) sender(4) receiver(4) iteration(2) seq(2) total(2) len(4).
inline constexpr size_t kDataHeaderBytes = 19;
inline constexpr size_t kAckWireBytes = 17;

struct Packet {
    PacketKind kind{PacketKind::Data};
    MsgKey key;
    uint16_t seq{0};
    uint16_t total{1};
    std::vector<uint8_t> chunk;  // DATA payload slice
    int32_t ack{-1};             // ACK: last in-order seq received, -1 = none

    size_t wire_size() const {
        return kind == PacketKind::Data ? kDataHeaderBytes + chunk.size() : kAckWireBytes;
    }

    std::vector<uint8_t> encode() const {
        std::vector<uint8_t> out;
        out.reserve(wire_size());
        put_u8(out, static_cast<uint8_t>(kind));
        put_u32(out, key.sender);
        put_u32(out, key.receiver);
        put_u16(out, key.iteration);
        put_u16(out, seq);
        put_u16(out, total);
        if (kind == PacketKind::Data) {
            put_u32(out, static_cast<uint32_t>(chunk.size()));
            out.insert(out.end(), chunk.begin(), chunk.end());
        } else {
            // Cumulative ack in place of the chunk, stored as ack+1 so the
            // "nothing received" case (-1) fits an unsigned field.
            put_u16(out, static_cast<uint16_t>(ack + 1));
        }
        return out;
    }

    static Packet decode(const std::vector<uint8_t>& bytes) {
        ByteReader r(bytes);
        Packet p;
        uint8_t kind = r.u8();
        if (kind > 1) throw std::runtime_error("decode error: bad packet kind");
        p.kind = static_cast<PacketKind>(kind);
        p.key.sender = r.u32();
        p.key.receiver = r.u32();
        p.key.iteration = r.u16();
        p.seq = r.u16();
        p.total = r.u16();
        if (p.kind == PacketKind::Data) {
            uint32_t len = r.u32();
            if (r.remaining() != len) throw std::runtime_error("decode error: chunk length mismatch");
            p.chunk = r.bytes(len);
        } else {
            p.ack = static_cast<int32_t>(r.u16()) - 1;
            if (r.remaining() != 0) throw std::runtime_error("decode error: trailing bytes");
        }
        return p;
    }

    friend bool operator==(const Packet& a, const Packet& b) {
        return a.kind == b.kind && a.key == b.key && a.seq == b.seq && a.total == b.total &&
               a.chunk == b.chunk && a.ack == b.ack;
    }
};

// Split serialized message bytes into m contiguous chunks whose sizes differ
// by at most one (earlier chunks take the remainder). Chunks may be empty
// when the message is shorter than m bytes.
inline std::vector<Packet> fragment(const std::vector<uint8_t>& bytes, int m, MsgKey key) {
    if (m < 1) throw std::invalid_argument("packet count m must be >= 1");
    std::vector<Packet> out;
    out.reserve(m);
    size_t base = bytes.size() / static_cast<size_t>(m);
    size_t rem = bytes.size() % static_cast<size_t>(m);
    size_t pos = 0;
    for (int k = 0; k < m; ++k) {
        size_t len = base + (static_cast<size_t>(k) < rem ? 1 : 0);
        Packet p;
        p.kind = PacketKind::Data;
        p.key = key;
        p.seq = static_cast<uint16_t>(k);
        p.total = static_cast<uint16_t>(m);
        p.chunk.assign(bytes.begin() + pos, bytes.begin() + pos + len);
        pos += len;
        out.push_back(std::move(p));
    }
    return out;
}

// Reassemble a complete packet set (any order) into message bytes.
inline std::vector<uint8_t> assemble_bytes(std::vector<Packet> packets) {
    if (packets.empty()) throw std::invalid_argument("no packets to assemble");
    std::sort(packets.begin(), packets.end(),
              [](const Packet& a, const Packet& b) { return a.seq < b.seq; });
    const MsgKey key = packets.front().key;
    const uint16_t total = packets.front().total;
    if (packets.size() != total) {
        throw std::runtime_error("incomplete message: have " + std::to_string(packets.size()) +
                                 " of " + std::to_string(total) + " packets");
    }
    std::vector<uint8_t> bytes;
    for (uint16_t k = 0; k < total; ++k) {
        const Packet& p = packets[k];
        if (!(p.key == key) || p.total != total) throw std::runtime_error("mixed message keys in assembly");
        if (p.seq != k) throw std::runtime_error("incomplete message: missing seq " + std::to_string(k));
        if (p.kind != PacketKind::Data) throw std::runtime_error("cannot assemble ACK packets");
        bytes.insert(bytes.end(), p.chunk.begin(), p.chunk.end());
    }
    return bytes;
}

inline AppMessage assemble(std::vector<Packet> packets) {
    return decode_message(assemble_bytes(std::move(packets)));
}

// ---------------------------------------------------------------------------
// Go-Back-N endpoint state machines. Pure step functions: timers are owned
// by the caller, which injects TIMEOUT events.

struct GbnSender {
    MsgKey key;
    std::vector<Packet> packets;  // all m fragments
    int window{1};
    int base{0};      // oldest unacked seq
    int next_seq{0};  // next never-sent seq
    int max_retries{-1};  // <0 = unbounded
    int retries_used{0};
    bool failed{false};

    GbnSender() = default;
    GbnSender(std::vector<Packet> frags, int w, int max_r = -1)
        : key(frags.empty() ? MsgKey{} : frags.front().key),
          packets(std::move(frags)),
          window(w),
          max_retries(max_r) {
        if (window < 1) throw std::invalid_argument("window must be >= 1");
    }

    int total() const { return static_cast<int>(packets.size()); }
    bool done() const { return failed || base == total(); }
    bool completed() const { return !failed && base == total(); }

    // Emit previously unsent packets allowed by the window.
    std::vector<Packet> on_send_window() {
        std::vector<Packet> out;
        while (!failed && next_seq < total() && next_seq < base + window) {
            out.push_back(packets[next_seq]);
            ++next_seq;
        }
        return out;
    }

    // Cumulative ACK: base advances to k+1, never backward. Newly opened
    // window slots are transmitted.
    std::vector<Packet> on_ack(int k) {
        if (failed) return {};
        if (k + 1 > base) base = std::min(k + 1, next_seq);
        return on_send_window();
    }

    // Retransmit the whole in-flight window; exhausting retries marks the
    // message as lost.
    std::vector<Packet> on_timeout() {
        if (done() || base == next_seq) return {};
        ++retries_used;
        if (max_retries >= 0 && retries_used > max_retries) {
            failed = true;
            return {};
        }
        std::vector<Packet> out(packets.begin() + base, packets.begin() + next_seq);
        return out;
    }
};

struct GbnReceiver {
    MsgKey key;
    uint16_t total{1};
    int expected_seq{0};
    std::vector<std::vector<uint8_t>> chunks;  // in-order chunks received

    struct Result {
        Packet ack;
        bool completed{false};
        std::vector<uint8_t> message_bytes;
    };

    bool complete() const { return expected_seq == static_cast<int>(total); }

    // In-order packets are stored; everything else is discarded with a
    // duplicate cumulative ACK.
    Result on_data(const Packet& p) {
        if (p.kind != PacketKind::Data) throw std::invalid_argument("receiver fed a non-DATA packet");
        if (chunks.empty() && expected_seq == 0) {
            key = p.key;
            total = p.total;
        }
        Result res;
        if (!complete() && static_cast<int>(p.seq) == expected_seq) {
            chunks.push_back(p.chunk);
            ++expected_seq;
            if (complete()) {
                res.completed = true;
                for (const auto& c : chunks) {
                    res.message_bytes.insert(res.message_bytes.end(), c.begin(), c.end());
                }
            }
        }
        res.ack.kind = PacketKind::Ack;
        res.ack.key = MsgKey{p.key.receiver, p.key.sender, p.key.iteration};
        res.ack.total = p.total;
        res.ack.ack = expected_seq - 1;
        return res;
    }
};

// Event-driven step interface over GbnSender.
struct GbnEvent {
    enum class Type { SendWindow, Ack, Timeout };
    Type type{Type::SendWindow};
    int ack_seq{-1};
};

inline std::vector<Packet> gbn_step(GbnSender& s, const GbnEvent& ev) {
    switch (ev.type) {
        case GbnEvent::Type::SendWindow: return s.on_send_window();
        case GbnEvent::Type::Ack: return s.on_ack(ev.ack_seq);
        case GbnEvent::Type::Timeout: return s.on_timeout();
    }
    return {};
}

}  // namespace prunesim
