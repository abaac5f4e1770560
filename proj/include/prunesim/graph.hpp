#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "prunesim/bytes.hpp"

namespace prunesim {

// Exact rational value alongside its double rendering, so centrality
// rankings never depend on float ties.
struct Ratio {
    long long num{0};
    long long den{1};

    double value() const { return static_cast<double>(num) / static_cast<double>(den); }

    void reduce() {
        long long g = std::gcd(num < 0 ? -num : num, den);
        if (g > 1) { num /= g; den /= g; }
    }

    friend bool operator==(const Ratio& a, const Ratio& b) {
        return static_cast<__int128>(a.num) * b.den == static_cast<__int128>(b.num) * a.den;
    }
    friend bool operator<(const Ratio& a, const Ratio& b) {
        return static_cast<__int128>(a.num) * b.den < static_cast<__int128>(b.num) * a.den;
    }
};

// Undirected, connected, simple graph over dense node ids 0..n-1.
struct Graph {
    std::vector<std::vector<uint32_t>> adj;  // sorted neighbor lists
    size_t edge_count{0};

    uint32_t n() const { return static_cast<uint32_t>(adj.size()); }

    uint32_t degree(uint32_t i) const { return static_cast<uint32_t>(adj[i].size()); }

    bool has_edge(uint32_t u, uint32_t v) const {
        const auto& a = adj[u];
        return std::binary_search(a.begin(), a.end(), v);
    }
};

// Builds adjacency from an edge list: drops self-loops and duplicates.
inline Graph build_graph(uint32_t n, const std::vector<std::pair<uint32_t, uint32_t>>& edges) {
    Graph g;
    g.adj.resize(n);
    for (auto [u, v] : edges) {
        if (u == v) continue;
        if (u >= n || v >= n) throw std::invalid_argument("edge endpoint out of range");
        g.adj[u].push_back(v);
        g.adj[v].push_back(u);
    }
    for (auto& nbrs : g.adj) {
        std::sort(nbrs.begin(), nbrs.end());
        nbrs.erase(std::unique(nbrs.begin(), nbrs.end()), nbrs.end());
    }
    for (const auto& nbrs : g.adj) g.edge_count += nbrs.size();
    g.edge_count /= 2;
    return g;
}

inline std::vector<int> bfs_distances(const Graph& g, uint32_t src) {
    std::vector<int> dist(g.n(), -1);
    std::deque<uint32_t> q;
    dist[src] = 0;
    q.push_back(src);
    while (!q.empty()) {
        uint32_t u = q.front();
        q.pop_front();
        for (uint32_t v : g.adj[u]) {
            if (dist[v] < 0) {
                dist[v] = dist[u] + 1;
                q.push_back(v);
            }
        }
    }
    return dist;
}

inline bool is_connected(const Graph& g) {
    if (g.n() == 0) return false;
    auto d = bfs_distances(g, 0);
    return std::none_of(d.begin(), d.end(), [](int x) { return x < 0; });
}

inline int component_count(const Graph& g) {
    std::vector<char> seen(g.n(), 0);
    int comps = 0;
    for (uint32_t s = 0; s < g.n(); ++s) {
        if (seen[s]) continue;
        ++comps;
        std::deque<uint32_t> q{s};
        seen[s] = 1;
        while (!q.empty()) {
            uint32_t u = q.front();
            q.pop_front();
            for (uint32_t v : g.adj[u]) {
                if (!seen[v]) { seen[v] = 1; q.push_back(v); }
            }
        }
    }
    return comps;
}

struct Closeness {
    Ratio exact;    // (n-1) / sum of distances
    double value{0.0};
};

// Closeness centrality of node i: (|V|-1) / sum_j sigma_ij, sigma via BFS.
inline Closeness exact_closeness(const Graph& g, uint32_t i) {
    if (i >= g.n()) throw std::invalid_argument("node id out of range");
    auto dist = bfs_distances(g, i);
    long long sum = 0;
    for (uint32_t j = 0; j < g.n(); ++j) {
        if (dist[j] < 0) throw std::invalid_argument("graph is not connected");
        sum += dist[j];
    }
    Closeness c;
    c.exact = Ratio{static_cast<long long>(g.n()) - 1, sum == 0 ? 1 : sum};
    c.exact.reduce();
    c.value = c.exact.value();
    return c;
}

inline int hop_distance(const Graph& g, uint32_t i, uint32_t j) {
    if (i >= g.n() || j >= g.n()) throw std::invalid_argument("node id out of range");
    if (i == j) return 0;
    auto dist = bfs_distances(g, i);
    if (dist[j] < 0) throw std::invalid_argument("nodes are not connected");
    return dist[j];
}

inline int diameter(const Graph& g) {
    int best = 0;
    for (uint32_t i = 0; i < g.n(); ++i) {
        auto d = bfs_distances(g, i);
        for (int x : d) {
            if (x < 0) throw std::invalid_argument("graph is not connected");
            best = std::max(best, x);
        }
    }
    return best;
}

// Node id of maximum exact closeness, smaller id wins ties.
inline uint32_t exact_most_central(const Graph& g) {
    uint32_t best = 0;
    Ratio best_r = exact_closeness(g, 0).exact;
    for (uint32_t i = 1; i < g.n(); ++i) {
        Ratio r = exact_closeness(g, i).exact;
        if (best_r < r) { best = i; best_r = r; }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Edge-list ingestion (SNAP-compatible: '#' comments, whitespace u v pairs).

enum class LoadPolicy { RejectDisconnected, TakeLargestComponent };

struct LoadResult {
    Graph graph;
    std::vector<uint64_t> original_ids;  // dense id -> id in the input file
};

inline LoadResult load_edge_list(std::istream& in, LoadPolicy policy = LoadPolicy::TakeLargestComponent) {
    std::unordered_map<uint64_t, uint32_t> remap;
    std::vector<uint64_t> original_ids;
    std::vector<std::pair<uint32_t, uint32_t>> edges;
    std::string line;
    size_t line_no = 0;

    auto intern = [&](uint64_t raw) {
        auto it = remap.find(raw);
        if (it != remap.end()) return it->second;
        uint32_t id = static_cast<uint32_t>(original_ids.size());
        remap.emplace(raw, id);
        original_ids.push_back(raw);
        return id;
    };

    while (std::getline(in, line)) {
        ++line_no;
        size_t start = line.find_first_not_of(" \t\r");
        if (start == std::string::npos) continue;
        if (line[start] == '#') continue;
        std::istringstream ls(line);
        long long u = -1, v = -1;
        std::string extra;
        if (!(ls >> u >> v) || u < 0 || v < 0) {
            throw std::runtime_error("parse error at line " + std::to_string(line_no) + ": expected 'u v'");
        }
        if (ls >> extra) {
            throw std::runtime_error("parse error at line " + std::to_string(line_no) + ": trailing tokens");
        }
        uint32_t du = intern(static_cast<uint64_t>(u));
        uint32_t dv = intern(static_cast<uint64_t>(v));
        if (du == dv) continue;  // self-loop dropped
        edges.emplace_back(du, dv);
    }
    if (original_ids.empty()) throw std::runtime_error("empty graph");

    // Dense ids follow ascending original id, so dumping a graph and loading
    // it back yields the identical labeling.
    {
        std::vector<uint32_t> order(original_ids.size());
        for (uint32_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(),
                  [&](uint32_t a, uint32_t b) { return original_ids[a] < original_ids[b]; });
        std::vector<uint32_t> rank(order.size());
        for (uint32_t pos = 0; pos < order.size(); ++pos) rank[order[pos]] = pos;
        std::vector<uint64_t> sorted_ids(original_ids.size());
        for (uint32_t i = 0; i < order.size(); ++i) sorted_ids[rank[i]] = original_ids[i];
        original_ids = std::move(sorted_ids);
        for (auto& [u, v] : edges) { u = rank[u]; v = rank[v]; }
    }

    Graph g = build_graph(static_cast<uint32_t>(original_ids.size()), edges);
    int comps = component_count(g);
    if (comps == 1) return {std::move(g), std::move(original_ids)};

    if (policy == LoadPolicy::RejectDisconnected) {
        throw std::runtime_error("graph is disconnected (" + std::to_string(comps) + " components)");
    }

    // Take the largest connected component, re-densify ids.
    std::vector<int> comp(g.n(), -1);
    std::vector<size_t> comp_size;
    for (uint32_t s = 0; s < g.n(); ++s) {
        if (comp[s] >= 0) continue;
        int c = static_cast<int>(comp_size.size());
        comp_size.push_back(0);
        std::deque<uint32_t> q{s};
        comp[s] = c;
        while (!q.empty()) {
            uint32_t u = q.front();
            q.pop_front();
            ++comp_size[c];
            for (uint32_t v : g.adj[u]) {
                if (comp[v] < 0) { comp[v] = c; q.push_back(v); }
            }
        }
    }
    int keep = static_cast<int>(std::max_element(comp_size.begin(), comp_size.end()) - comp_size.begin());
    std::vector<uint32_t> newid(g.n(), UINT32_MAX);
    std::vector<uint64_t> kept_ids;
    for (uint32_t i = 0; i < g.n(); ++i) {
        if (comp[i] == keep) {
            newid[i] = static_cast<uint32_t>(kept_ids.size());
            kept_ids.push_back(original_ids[i]);
        }
    }
    std::vector<std::pair<uint32_t, uint32_t>> kept_edges;
    for (uint32_t u = 0; u < g.n(); ++u) {
        if (comp[u] != keep) continue;
        for (uint32_t v : g.adj[u]) {
            if (u < v) kept_edges.emplace_back(newid[u], newid[v]);
        }
    }
    Graph sub = build_graph(static_cast<uint32_t>(kept_ids.size()), kept_edges);
    return {std::move(sub), std::move(kept_ids)};
}

inline LoadResult load_edge_list_file(const std::string& path, LoadPolicy policy = LoadPolicy::TakeLargestComponent) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open graph file: " + path);
    return load_edge_list(in, policy);
}

// Dump format: '# n m' comment header, then sorted edge lines u v with u < v.
// Comment header keeps the output loadable by load_edge_list.
inline void dump_graph(const Graph& g, std::ostream& out) {
    out << "# " << g.n() << ' ' << g.edge_count << '\n';
    for (uint32_t u = 0; u < g.n(); ++u) {
        for (uint32_t v : g.adj[u]) {
            if (u < v) out << u << ' ' << v << '\n';
        }
    }
}

inline std::string dump_graph_string(const Graph& g) {
    std::ostringstream os;
    dump_graph(g, os);
    return os.str();
}

// ---------------------------------------------------------------------------
// Random geometric graphs on an integer grid.

struct GeometricSpec {
    uint32_t n{100};
    uint32_t grid_side{250};
    double range{10.0};
    uint64_t seed{0};
};

namespace detail {

// Draw k in [0, bound) from an mt19937_64 stream without distribution
// objects, so results do not depend on the standard library in use.
inline uint64_t rng_below(std::mt19937_64& rng, uint64_t bound) {
    uint64_t threshold = (0 - bound) % bound;
    for (;;) {
        uint64_t r = rng();
        if (r >= threshold) return r % bound;
    }
}

struct Point { int32_t x, y; };

// Sample n distinct cells from the grid (Floyd's algorithm), then connect
// pairs with Euclidean distance strictly less than range.
inline Graph geometric_attempt(const GeometricSpec& spec, uint64_t seed, std::vector<Point>* out_pts) {
    const uint64_t cells = static_cast<uint64_t>(spec.grid_side) * spec.grid_side;
    std::mt19937_64 rng(mix64(seed));
    std::unordered_map<uint64_t, char> chosen;
    std::vector<uint64_t> picks;
    picks.reserve(spec.n);
    for (uint64_t j = cells - spec.n; j < cells; ++j) {
        uint64_t r = rng_below(rng, j + 1);
        if (chosen.count(r)) { chosen[j] = 1; picks.push_back(j); }
        else { chosen[r] = 1; picks.push_back(r); }
    }
    std::sort(picks.begin(), picks.end());

    std::vector<Point> pts(spec.n);
    for (uint32_t i = 0; i < spec.n; ++i) {
        pts[i] = {static_cast<int32_t>(picks[i] % spec.grid_side),
                  static_cast<int32_t>(picks[i] / spec.grid_side)};
    }

    // Bucket by cells of side ~range so only nearby pairs are tested.
    const int32_t cell = std::max<int32_t>(1, static_cast<int32_t>(spec.range));
    std::unordered_map<uint64_t, std::vector<uint32_t>> buckets;
    auto bkey = [&](int32_t bx, int32_t by) {
        return (static_cast<uint64_t>(static_cast<uint32_t>(bx)) << 32) | static_cast<uint32_t>(by);
    };
    for (uint32_t i = 0; i < spec.n; ++i) {
        buckets[bkey(pts[i].x / cell, pts[i].y / cell)].push_back(i);
    }

    const double r2 = spec.range * spec.range;
    std::vector<std::pair<uint32_t, uint32_t>> edges;
    for (uint32_t i = 0; i < spec.n; ++i) {
        int32_t bx = pts[i].x / cell, by = pts[i].y / cell;
        for (int32_t dx = -1; dx <= 1; ++dx) {
            for (int32_t dy = -1; dy <= 1; ++dy) {
                auto it = buckets.find(bkey(bx + dx, by + dy));
                if (it == buckets.end()) continue;
                for (uint32_t j : it->second) {
                    if (j <= i) continue;
                    double ddx = pts[i].x - pts[j].x;
                    double ddy = pts[i].y - pts[j].y;
                    if (ddx * ddx + ddy * ddy < r2) edges.emplace_back(i, j);  // strict <
                }
            }
        }
    }
    if (out_pts) *out_pts = std::move(pts);
    return build_graph(spec.n, edges);
}

}  // namespace detail

// Connected random geometric graph; resamples with incremented sub-seed
// until connected (bounded retries), so the same spec always yields the
// same graph.
inline Graph generate_geometric(const GeometricSpec& spec, int max_retries = 1000) {
    if (spec.range <= 0) throw std::invalid_argument("range must be positive");
    const uint64_t cells = static_cast<uint64_t>(spec.grid_side) * spec.grid_side;
    if (spec.n == 0 || spec.n > cells) {
        throw std::invalid_argument("node count must be in [1, grid_side^2]");
    }
    for (int attempt = 0; attempt < max_retries; ++attempt) {
        // Hash the retry counter in so neighboring seeds never share attempts.
        Graph g = detail::geometric_attempt(spec, hash_combine(spec.seed, static_cast<uint64_t>(attempt)), nullptr);
        if (is_connected(g)) return g;
    }
    throw std::runtime_error("could not generate a connected geometric graph in " +
                             std::to_string(max_retries) +
                             " attempts; increase range or reduce n");
}

}  // namespace prunesim
