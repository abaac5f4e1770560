#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "prunesim/transport.hpp"

using namespace prunesim;

TEST_CASE("fragment: contiguous chunks, sizes differ by at most one") {
    std::vector<uint8_t> bytes(23);
    for (size_t i = 0; i < bytes.size(); ++i) bytes[i] = static_cast<uint8_t>(i);
    auto frags = fragment(bytes, 5, MsgKey{1, 2, 0});
    REQUIRE(frags.size() == 5);
    // 23 = 5+5+5+4+4: earlier chunks take the remainder.
    CHECK(frags[0].chunk.size() == 5);
    CHECK(frags[1].chunk.size() == 5);
    CHECK(frags[2].chunk.size() == 5);
    CHECK(frags[3].chunk.size() == 4);
    CHECK(frags[4].chunk.size() == 4);
    for (uint16_t k = 0; k < 5; ++k) {
        CHECK(frags[k].seq == k);
        CHECK(frags[k].total == 5);
    }
    CHECK(assemble_bytes(frags) == bytes);
}

TEST_CASE("fragment: short messages produce empty chunks") {
    std::vector<uint8_t> bytes{9, 8};
    auto frags = fragment(bytes, 4, MsgKey{0, 1, 2});
    REQUIRE(frags.size() == 4);
    CHECK(frags[0].chunk.size() == 1);
    CHECK(frags[1].chunk.size() == 1);
    CHECK(frags[2].chunk.empty());
    CHECK(frags[3].chunk.empty());
    CHECK(assemble_bytes(frags) == bytes);
    CHECK_THROWS_AS(fragment(bytes, 0, MsgKey{}), std::invalid_argument);
}

TEST_CASE("fragment/assemble round-trip, randomized") {
    std::mt19937_64 rng(123);
    const int ms[] = {1, 10, 20, 30, 50};
    for (int trial = 0; trial < 1000; ++trial) {
        size_t len = rng() % 400;
        std::vector<uint8_t> payload(len);
        for (auto& b : payload) b = static_cast<uint8_t>(rng());
        int m = trial < 250 ? ms[trial % 5] : static_cast<int>(1 + rng() % 64);
        MsgKey key{static_cast<uint32_t>(rng() % 100), static_cast<uint32_t>(rng() % 100),
                   static_cast<uint16_t>(rng() % 16)};
        auto frags = fragment(payload, m, key);
        std::shuffle(frags.begin(), frags.end(), rng);  // assembly sorts by seq
        REQUIRE(assemble_bytes(frags) == payload);
    }
}

TEST_CASE("assemble: error reporting") {
    std::vector<uint8_t> bytes(10, 7);
    auto frags = fragment(bytes, 3, MsgKey{1, 2, 0});
    auto missing = frags;
    missing.erase(missing.begin() + 1);
    CHECK_THROWS_WITH(assemble_bytes(missing), Catch::Matchers::ContainsSubstring("incomplete"));
    auto mixed = frags;
    mixed[2].key.iteration = 9;
    CHECK_THROWS_WITH(assemble_bytes(mixed), Catch::Matchers::ContainsSubstring("mixed"));
    CHECK_THROWS_AS(assemble_bytes({}), std::invalid_argument);
}

TEST_CASE("packet wire format round-trip") {
    Packet d;
    d.kind = PacketKind::Data;
    d.key = MsgKey{3, 4, 2};
    d.seq = 1;
    d.total = 5;
    d.chunk = {0xde, 0xad};
    auto bytes = d.encode();
    CHECK(bytes.size() == kDataHeaderBytes + 2);
    CHECK(Packet::decode(bytes) == d);

    Packet a;
    a.kind = PacketKind::Ack;
    a.key = MsgKey{4, 3, 2};
    a.total = 5;
    a.ack = -1;  // nothing received yet
    auto abytes = a.encode();
    CHECK(abytes.size() == kAckWireBytes);
    CHECK(Packet::decode(abytes) == a);

    auto bad = bytes;
    bad[0] = 7;
    CHECK_THROWS_WITH(Packet::decode(bad), Catch::Matchers::ContainsSubstring("kind"));
    bad = bytes;
    bad.pop_back();
    CHECK_THROWS_WITH(Packet::decode(bad), Catch::Matchers::ContainsSubstring("decode error"));
}

TEST_CASE("go-back-n: loss-free sends exactly m DATA packets") {
    for (int m : {1, 10, 20, 30, 50}) {
        std::vector<uint8_t> payload(97, 0x5a);
        auto frags = fragment(payload, m, MsgKey{1, 2, 0});
        GbnSender s(frags, m);
        GbnReceiver r;
        int data_sent = 0;
        auto window = s.on_send_window();
        std::vector<uint8_t> assembled;
        while (!window.empty()) {
            std::vector<Packet> next;
            for (const auto& p : window) {
                ++data_sent;
                auto res = r.on_data(p);
                if (res.completed) assembled = res.message_bytes;
                auto more = s.on_ack(res.ack.ack);
                next.insert(next.end(), more.begin(), more.end());
            }
            window = std::move(next);
        }
        CHECK(data_sent == m);
        CHECK(s.completed());
        CHECK(assembled == payload);
    }
}

TEST_CASE("go-back-n: frozen scripted-loss transcript") {
    // Message (1 -> 2, iteration 0) carrying ids {5,6,7}; m = 3, window 3.
    // Script: P0 delivered, P1 dropped, P2 delivered out of order, then the
    // timeout retransmits P1,P2 and the transfer completes.
    const std::vector<uint8_t> message = {0x00, 0x00, 0x00, 0x01, 0x00, 0x00, 0x00, 0x00,
                                          0x00, 0x03, 0x00, 0x00, 0x00, 0x05, 0x00, 0x00,
                                          0x00, 0x06, 0x00, 0x00, 0x00, 0x07};
    auto frags = fragment(message, 3, MsgKey{1, 2, 0});
    GbnSender s(frags, 3);
    GbnReceiver r;

    auto first = s.on_send_window();
    REQUIRE(first.size() == 3);
    // Frozen bytes of the first DATA packet (header + 8-byte chunk).
    const std::vector<uint8_t> p0_wire = {
        0x00,                     // kind DATA
        0x00, 0x00, 0x00, 0x01,   // sender
        0x00, 0x00, 0x00, 0x02,   // receiver
        0x00, 0x00,               // iteration
        0x00, 0x00,               // seq
        0x00, 0x03,               // total
        0x00, 0x00, 0x00, 0x08,   // chunk length
        0x00, 0x00, 0x00, 0x01, 0x00, 0x00, 0x00, 0x00};
    CHECK(first[0].encode() == p0_wire);

    auto ack0 = r.on_data(first[0]);
    const std::vector<uint8_t> ack0_wire = {
        0x01,                     // kind ACK
        0x00, 0x00, 0x00, 0x02,   // sender (reversed direction)
        0x00, 0x00, 0x00, 0x01,   // receiver
        0x00, 0x00,               // iteration
        0x00, 0x00,               // seq (unused)
        0x00, 0x03,               // total
        0x00, 0x01};              // cumulative ack 0, stored as ack+1
    CHECK(ack0.ack.encode() == ack0_wire);
    CHECK_FALSE(ack0.completed);

    // P1 lost. P2 arrives out of order: discarded, duplicate ACK 0.
    auto dup = r.on_data(first[2]);
    CHECK(dup.ack.ack == 0);
    CHECK_FALSE(dup.completed);
    CHECK(dup.ack.encode() == ack0_wire);

    CHECK(s.on_ack(ack0.ack.ack).empty());  // base -> 1, window already open
    CHECK(s.base == 1);
    CHECK(s.on_ack(dup.ack.ack).empty());   // duplicate: no change
    CHECK(s.base == 1);

    auto retx = s.on_timeout();
    REQUIRE(retx.size() == 2);  // whole in-flight window [1,3)
    CHECK(retx[0].seq == 1);
    CHECK(retx[1].seq == 2);
    const std::vector<uint8_t> p1_wire = {
        0x00, 0x00, 0x00, 0x00, 0x01, 0x00, 0x00, 0x00, 0x02, 0x00, 0x00,
        0x00, 0x01,               // seq 1
        0x00, 0x03,
        0x00, 0x00, 0x00, 0x07,   // 7-byte chunk
        0x00, 0x03, 0x00, 0x00, 0x00, 0x05, 0x00};
    CHECK(retx[0].encode() == p1_wire);

    auto ack1 = r.on_data(retx[0]);
    CHECK(ack1.ack.ack == 1);
    auto fin = r.on_data(retx[1]);
    CHECK(fin.completed);
    CHECK(fin.ack.ack == 2);
    CHECK(fin.message_bytes == message);

    CHECK(s.on_ack(1).empty());
    CHECK(s.on_ack(2).empty());
    CHECK(s.completed());
    CHECK(decode_message(fin.message_bytes).payload == std::vector<uint32_t>{5, 6, 7});
}

TEST_CASE("go-back-n: stale and duplicate ACKs never move base backward") {
    auto frags = fragment(std::vector<uint8_t>(40, 1), 4, MsgKey{0, 1, 0});
    GbnSender s(frags, 4);
    s.on_send_window();
    s.on_ack(2);
    CHECK(s.base == 3);
    s.on_ack(0);  // stale
    CHECK(s.base == 3);
    s.on_ack(-1);  // "nothing received" dup
    CHECK(s.base == 3);
}

TEST_CASE("go-back-n: window limits in-flight packets") {
    auto frags = fragment(std::vector<uint8_t>(50, 2), 10, MsgKey{0, 1, 0});
    GbnSender s(frags, 3);
    auto w = s.on_send_window();
    CHECK(w.size() == 3);
    auto more = s.on_ack(0);  // one slot opens
    REQUIRE(more.size() == 1);
    CHECK(more[0].seq == 3);
    CHECK(s.on_send_window().empty());  // nothing new until further ACKs
}

TEST_CASE("go-back-n: retry exhaustion fails the message") {
    auto frags = fragment(std::vector<uint8_t>(10, 3), 2, MsgKey{0, 1, 0});
    GbnSender s(frags, 2, /*max_retries=*/2);
    s.on_send_window();
    CHECK(s.on_timeout().size() == 2);
    CHECK(s.on_timeout().size() == 2);
    CHECK(s.on_timeout().empty());  // third timeout exceeds the budget
    CHECK(s.failed);
    CHECK(s.done());
    CHECK_FALSE(s.completed());
    CHECK(s.on_timeout().empty());
    CHECK(s.on_ack(1).empty());
}

TEST_CASE("go-back-n: receiver re-ACKs after completion") {
    auto frags = fragment(std::vector<uint8_t>(9, 4), 3, MsgKey{0, 1, 0});
    GbnReceiver r;
    r.on_data(frags[0]);
    r.on_data(frags[1]);
    auto done = r.on_data(frags[2]);
    CHECK(done.completed);
    auto again = r.on_data(frags[2]);  // retransmitted duplicate
    CHECK_FALSE(again.completed);      // delivered exactly once
    CHECK(again.ack.ack == 2);
}

TEST_CASE("go-back-n: survives random loss with unbounded retries") {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<uint8_t> payload(1 + rng() % 200);
        for (auto& b : payload) b = static_cast<uint8_t>(rng());
        int m = static_cast<int>(1 + rng() % 20);
        auto frags = fragment(payload, m, MsgKey{1, 2, 0});
        GbnSender s(frags, m);
        GbnReceiver r;
        std::vector<uint8_t> assembled;
        auto inflight = s.on_send_window();
        int guard = 0;
        while (!s.completed()) {
            REQUIRE(++guard < 100000);
            std::vector<Packet> next;
            bool progress = false;
            for (const auto& p : inflight) {
                if (rng() % 10 < 3) continue;  // 30% loss
                progress = true;
                auto res = r.on_data(p);
                if (res.completed) assembled = res.message_bytes;
                auto more = s.on_ack(res.ack.ack);
                next.insert(next.end(), more.begin(), more.end());
            }
            if (!progress || next.empty()) {
                auto retx = s.on_timeout();
                next.insert(next.end(), retx.begin(), retx.end());
            }
            inflight = std::move(next);
        }
        CHECK(assembled == payload);
    }
}
