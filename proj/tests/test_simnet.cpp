#include <catch2/catch_amalgamated.hpp>

#include "prunesim/simnet.hpp"

using namespace prunesim;

namespace {

Graph path_graph(int n) {
    std::vector<std::pair<uint32_t, uint32_t>> e;
    for (int i = 0; i + 1 < n; ++i) e.push_back({static_cast<uint32_t>(i), static_cast<uint32_t>(i + 1)});
    return build_graph(n, e);
}

Graph star_graph(int k) {
    std::vector<std::pair<uint32_t, uint32_t>> e;
    for (int i = 1; i <= k; ++i) e.push_back({0u, static_cast<uint32_t>(i)});
    return build_graph(k + 1, e);
}

Graph geo(uint32_t n, uint32_t grid, uint64_t seed) {
    GeometricSpec spec;
    spec.n = n;
    spec.grid_side = grid;
    spec.seed = seed;
    return generate_geometric(spec);
}

ExchangeResult one_exchange(uint32_t n, const SimConfig& cfg,
                            const std::vector<OutboundMessage>& msgs,
                            const ExchangeHooks* hooks = nullptr,
                            std::vector<NodeMetrics>* metrics = nullptr) {
    ExchangePhase phase(n, cfg, metrics, nullptr, hooks);
    phase.reset_peaks();
    return phase.run(msgs);
}

}  // namespace

TEST_CASE("single message is delivered after exactly m+1 ticks") {
    for (int m : {1, 4, 10}) {
        SimConfig cfg;
        cfg.m = m;
        AppMessage msg{0, 0, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10}};
        auto res = one_exchange(2, cfg, {OutboundMessage{0, 1, msg}});
        REQUIRE(res.delivered[1].size() == 1);
        CHECK(res.delivered[1][0] == msg);
        // Pipelined window W=m, one tick of line time per chunk, latency 1:
        // the last chunk lands at tick m, i.e. after m+1 ticks (0..m).
        CHECK(res.delivery_tick[0] == m);
        CHECK(res.app_lost == 0);
    }
}

TEST_CASE("a scripted drop delays delivery by exactly timeout_ticks") {
    SimConfig cfg;
    cfg.m = 1;
    cfg.timeout_ticks = 10;
    AppMessage msg{0, 0, {42}};

    auto base = one_exchange(2, cfg, {OutboundMessage{0, 1, msg}});
    REQUIRE(base.delivery_tick[0] >= 0);

    ExchangeHooks hooks;
    hooks.force_drop = [](const MsgKey&, uint16_t seq, int attempt) {
        return seq == 0 && attempt == 0;
    };
    auto dropped = one_exchange(2, cfg, {OutboundMessage{0, 1, msg}}, &hooks);
    REQUIRE(dropped.delivery_tick[0] >= 0);
    CHECK(dropped.delivery_tick[0] == base.delivery_tick[0] + cfg.timeout_ticks);
    CHECK(dropped.app_lost == 0);
}

TEST_CASE("opposite directions of one link do not contend") {
    SimConfig cfg;
    cfg.m = 3;
    AppMessage a{0, 0, {7, 8}};
    AppMessage b{1, 0, {9}};
    auto res = one_exchange(2, cfg, {OutboundMessage{0, 1, a}, OutboundMessage{1, 0, b}});
    REQUIRE(res.delivered[1].size() == 1);
    REQUIRE(res.delivered[0].size() == 1);
    CHECK(res.delivered[1][0] == a);
    CHECK(res.delivered[0][0] == b);
    CHECK(res.delivery_tick[0] == 3);  // same as if it ran alone
    CHECK(res.delivery_tick[1] == 3);
}

TEST_CASE("same-direction messages are FIFO") {
    SimConfig cfg;
    cfg.m = 2;
    AppMessage first{0, 0, {1, 2, 3}};
    AppMessage second{0, 1, {4}};
    auto res = one_exchange(2, cfg, {OutboundMessage{0, 1, first}, OutboundMessage{0, 1, second}});
    REQUIRE(res.delivered[1].size() == 2);
    CHECK(res.delivery_tick[0] < res.delivery_tick[1]);
    // Inbox normalized by (sender, iteration).
    CHECK(res.delivered[1][0].iteration == 0);
    CHECK(res.delivered[1][1].iteration == 1);
}

TEST_CASE("unbounded retries lose nothing even at loss 0.3") {
    SimConfig cfg;
    cfg.m = 4;
    cfg.loss_p = 0.3;
    cfg.loss_model = LossModel::PerPacket;
    cfg.seed = 5;
    std::vector<OutboundMessage> msgs;
    for (uint32_t k = 0; k < 200; ++k) {
        msgs.push_back(OutboundMessage{0, 1, AppMessage{0, static_cast<uint16_t>(k), {k, k + 1}}});
    }
    std::vector<NodeMetrics> metrics(2);
    auto res = one_exchange(2, cfg, msgs, nullptr, &metrics);
    CHECK(res.app_lost == 0);
    CHECK(res.delivered[1].size() == 200);
    CHECK(metrics[0].retransmissions > 0);  // loss certainly hit something
    CHECK(metrics[1].packets_received >= 200 * 4);
}

TEST_CASE("bounded retries give up and report the loss") {
    SimConfig cfg;
    cfg.m = 2;
    cfg.max_retries = 3;
    cfg.timeout_ticks = 5;
    ExchangeHooks hooks;
    hooks.force_drop = [](const MsgKey&, uint16_t, int) { return true; };  // black hole
    std::vector<NodeMetrics> metrics(2);
    auto res = one_exchange(2, cfg, {OutboundMessage{0, 1, AppMessage{0, 0, {1}}}}, &hooks, &metrics);
    CHECK(res.app_lost == 1);
    CHECK(res.delivery_tick[0] == -1);
    CHECK(res.delivered[1].empty());
    CHECK(metrics[0].app_messages_lost == 1);
    // initial window + 3 retransmissions of 2 packets each
    CHECK(metrics[0].packets_sent == 2 + 3 * 2);
}

TEST_CASE("empty exchange costs zero ticks") {
    SimConfig cfg;
    auto res = one_exchange(3, cfg, {});
    CHECK(res.duration == 0);
    CHECK(res.app_lost == 0);
}

TEST_CASE("run_simulation: golden fixtures") {
    SimConfig cfg;
    cfg.horizon = 12;

    cfg.variant = Variant::Original;
    auto p3 = run_simulation(path_graph(3), cfg);
    CHECK(p3.estimates[0].exact == Ratio{0, 1});
    CHECK(p3.estimates[1].exact == Ratio{2, 3});
    CHECK(p3.estimates[2].exact == Ratio{0, 1});
    CHECK(p3.selected_leader == 1);
    CHECK(p3.node[0].packets_sent == 1);
    CHECK(p3.node[1].packets_sent == 2);
    CHECK(p3.ticks == 3);

    cfg.variant = Variant::Enhanced;
    auto p3e = run_simulation(path_graph(3), cfg);
    CHECK(p3e.estimates[1].exact == Ratio{2, 3});
    CHECK(p3e.node[0].packets_sent == 0);  // silent leaf
    CHECK(p3e.node[2].packets_sent == 0);
    CHECK(p3e.selected_leader == 1);

    cfg.variant = Variant::Original;
    auto p5 = run_simulation(path_graph(5), cfg);
    CHECK(p5.estimates[2].exact == Ratio{4, 5});
    CHECK(p5.selected_leader == 2);
    CHECK(p5.selected_leader == exact_most_central(path_graph(5)));
    for (uint32_t i : {0u, 1u, 3u, 4u}) CHECK(p5.estimates[i].exact == Ratio{0, 1});

    auto k3 = run_simulation(build_graph(3, {{0, 1}, {1, 2}, {0, 2}}), cfg);
    for (auto& c : k3.estimates) CHECK(c.exact == Ratio{0, 1});
    CHECK(k3.selected_leader == 0);  // all-zero tie broken by smallest id

    auto star = run_simulation(star_graph(5), cfg);
    CHECK(star.estimates[0].exact == Ratio{5, 6});
    CHECK(star.selected_leader == 0);
}

TEST_CASE("run_simulation is deterministic") {
    Graph g = geo(60, 45, 3);
    SimConfig cfg;
    cfg.m = 10;
    cfg.loss_p = 0.05;
    cfg.loss_model = LossModel::PerPacket;
    cfg.max_retries = 6;
    cfg.seed = 99;
    auto a = run_simulation(g, cfg);
    auto b = run_simulation(g, cfg);
    CHECK(a.ticks == b.ticks);
    CHECK(a.avg_msgs == b.avg_msgs);
    CHECK(a.max_msgs == b.max_msgs);
    CHECK(a.loss_frac == b.loss_frac);
    CHECK(a.selected_leader == b.selected_leader);
    REQUIRE(a.node.size() == b.node.size());
    for (size_t i = 0; i < a.node.size(); ++i) {
        CHECK(a.node[i].packets_sent == b.node[i].packets_sent);
        CHECK(a.node[i].packets_received == b.node[i].packets_received);
        CHECK(a.node[i].retransmissions == b.node[i].retransmissions);
        CHECK(a.node[i].buffer_peak == b.node[i].buffer_peak);
        CHECK(a.estimates[i].exact == b.estimates[i].exact);
    }
}

TEST_CASE("loss-free packet accounting: packets_sent = m * app messages") {
    Graph g = geo(50, 40, 8);
    for (int m : {1, 7}) {
        SimConfig cfg;
        cfg.m = m;
        cfg.variant = Variant::Original;
        auto r = run_simulation(g, cfg);
        CHECK(r.loss_frac == 0.0);
        CHECK(r.app_messages_lost == 0);
        long long max_seen = 0;
        for (uint32_t i = 0; i < g.n(); ++i) {
            CHECK(r.node[i].packets_sent ==
                  static_cast<long long>(m) * r.node[i].app_messages_sent);
            CHECK(r.node[i].packets_sent <=
                  static_cast<long long>(m) * g.degree(i) * cfg.horizon);
            max_seen = std::max(max_seen, r.node[i].packets_sent);
        }
        CHECK(r.avg_msgs <= static_cast<double>(r.max_msgs));
        CHECK(r.max_msgs == max_seen);
    }
}

TEST_CASE("variant equivalence and leaf savings on one geometric graph") {
    Graph g = geo(80, 55, 12);
    SimConfig cfg;
    cfg.m = 10;
    auto orig = run_simulation(g, cfg);
    cfg.variant = Variant::Enhanced;
    auto enh = run_simulation(g, cfg);
    CHECK(orig.selected_leader == enh.selected_leader);
    for (uint32_t i = 0; i < g.n(); ++i) {
        CHECK(orig.estimates[i].exact == enh.estimates[i].exact);
        CHECK(enh.node[i].packets_sent <= orig.node[i].packets_sent);
        if (g.degree(i) == 1) {
            CHECK(enh.node[i].packets_sent == 0);
            CHECK(orig.node[i].packets_sent >= cfg.m);
        }
    }
}

TEST_CASE("per-byte loss model exposes bigger chunks to more risk") {
    SimConfig cfg;
    cfg.loss_p = 0.01;
    // drop probability grows with the chunk: 1-(1-p)^bytes
    Graph g = path_graph(2);
    (void)g;
    // spot-check through the public math: same loss_p, different m on a
    // fixed payload must shrink ticks spent on retransmissions (medians are
    // asserted at acceptance level; here just make sure runs terminate).
    cfg.max_retries = 4;
    cfg.seed = 3;
    for (int m : {1, 10}) {
        cfg.m = m;
        auto r = run_simulation(geo(40, 35, 2), cfg);
        CHECK(r.ticks > 0);
        CHECK(r.loss_frac >= 0.0);
        CHECK(r.loss_frac <= 1.0);
    }
}

TEST_CASE("config validation") {
    Graph g = path_graph(3);
    SimConfig cfg;
    cfg.m = 0;
    CHECK_THROWS_AS(run_simulation(g, cfg), std::invalid_argument);
    cfg.m = 1;
    cfg.loss_p = 1.0;
    CHECK_THROWS_AS(run_simulation(g, cfg), std::invalid_argument);
    cfg.loss_p = 0.0;
    cfg.horizon = 0;
    CHECK_THROWS_AS(run_simulation(g, cfg), std::invalid_argument);
    cfg.horizon = 12;
    Graph disc = build_graph(4, {{0, 1}, {2, 3}});
    CHECK_THROWS_AS(run_simulation(disc, cfg), std::invalid_argument);
}

TEST_CASE("select_most_central prefers the larger exact ratio") {
    RunMetrics m;
    m.estimates = {{Ratio{1, 3}, 1.0 / 3}, {Ratio{2, 5}, 0.4}, {Ratio{2, 5}, 0.4}};
    CHECK(select_most_central(m) == 1);  // tie with node 2 -> smaller id
    m.estimates[2] = {Ratio{1, 2}, 0.5};
    CHECK(select_most_central(m) == 2);
    RunMetrics empty;
    CHECK_THROWS_AS(select_most_central(empty), std::invalid_argument);
}

TEST_CASE("symmetric ACK loss still completes with unbounded retries") {
    SimConfig cfg;
    cfg.m = 5;
    cfg.loss_p = 0.2;
    cfg.loss_model = LossModel::PerPacket;
    cfg.symmetric_loss = true;
    cfg.seed = 17;
    Graph g = geo(30, 30, 4);
    auto r = run_simulation(g, cfg);
    CHECK(r.app_messages_lost == 0);
    CHECK(r.loss_frac == 0.0);
}
