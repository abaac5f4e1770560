#pragma once

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "prunesim/graph.hpp"
#include "prunesim/simnet.hpp"
#include "prunesim/stats.hpp"

namespace prunesim {

// ---------------------------------------------------------------------------
// Results CSV

inline constexpr const char* kResultsHeader =
    "graph_id,n,edges,diameter,variant,m,D,loss_p,seed,avg_msgs,max_msgs,ticks,"
    "wall_s,mem_proxy,loss_frac,leader,leader_dist_exact,errors";

struct ResultRow {
    std::string graph_id;
    uint32_t n{0};
    size_t edges{0};
    int diameter{0};
    std::string variant;
    int m{1};
    int D{1};
    double loss_p{0.0};
    uint64_t seed{0};
    double avg_msgs{0.0};
    long long max_msgs{0};
    long long ticks{0};
    double wall_s{0.0};
    long long mem_proxy{0};
    double loss_frac{0.0};
    uint32_t leader{0};
    int leader_dist_exact{0};
    std::string errors;

    // Cell identity: everything the simulation is a function of.
    std::string key() const {
        std::ostringstream os;
        os << graph_id << '|' << variant << '|' << m << '|' << D << '|' << fmt_double(loss_p)
           << '|' << seed;
        return os.str();
    }

    static std::string fmt_double(double v) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.12g", v);
        return buf;
    }

    std::string to_csv() const {
        std::ostringstream os;
        os << graph_id << ',' << n << ',' << edges << ',' << diameter << ',' << variant << ','
           << m << ',' << D << ',' << fmt_double(loss_p) << ',' << seed << ','
           << fmt_double(avg_msgs) << ',' << max_msgs << ',' << ticks << ','
           << fmt_double(wall_s) << ',' << mem_proxy << ',' << fmt_double(loss_frac) << ','
           << leader << ',' << leader_dist_exact << ',' << errors;
        return os.str();
    }

    static ResultRow from_csv(const std::string& line) {
        std::vector<std::string> f;
        std::string cur;
        for (char c : line) {
            if (c == ',') {
                f.push_back(cur);
                cur.clear();
            } else {
                cur += c;
            }
        }
        f.push_back(cur);
        if (f.size() != 18) throw std::runtime_error("results CSV: expected 18 fields, got " +
                                                     std::to_string(f.size()));
        ResultRow r;
        r.graph_id = f[0];
        r.n = static_cast<uint32_t>(std::stoul(f[1]));
        r.edges = std::stoull(f[2]);
        r.diameter = std::stoi(f[3]);
        r.variant = f[4];
        r.m = std::stoi(f[5]);
        r.D = std::stoi(f[6]);
        r.loss_p = std::stod(f[7]);
        r.seed = std::stoull(f[8]);
        r.avg_msgs = std::stod(f[9]);
        r.max_msgs = std::stoll(f[10]);
        r.ticks = std::stoll(f[11]);
        r.wall_s = std::stod(f[12]);
        r.mem_proxy = std::stoll(f[13]);
        r.loss_frac = std::stod(f[14]);
        r.leader = static_cast<uint32_t>(std::stoul(f[15]));
        r.leader_dist_exact = std::stoi(f[16]);
        r.errors = f[17];
        return r;
    }
};

inline std::vector<ResultRow> load_results_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open results file: " + path);
    std::vector<ResultRow> rows;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (first) {
            first = false;
            if (line == kResultsHeader) continue;  // header optional on read
        }
        rows.push_back(ResultRow::from_csv(line));
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Experiment plans

struct GraphSource {
    enum class Kind { Geometric, File };
    Kind kind{Kind::Geometric};
    std::string id;       // base id; generated batches get -NNN suffixes
    std::string path;     // File
    GeometricSpec spec;   // Geometric
    int count{1};         // Geometric: instances, consecutive seeds
};

struct ExperimentPlan {
    std::vector<GraphSource> sources;
    std::vector<int> ms{1};
    std::vector<int> Ds{12};
    std::vector<double> losses{0.0};
    std::vector<Variant> variants{Variant::Original, Variant::Enhanced};
    int repetitions{1};
    uint64_t master_seed{0};
    std::string output;
    long long max_retries{-1};
    int latency_ticks{1};
    int bandwidth{64};
    int window{0};
    int timeout_ticks{0};

    void validate() const {
        if (sources.empty()) throw std::runtime_error("plan has no graph sources");
        if (ms.empty() || Ds.empty() || losses.empty() || variants.empty())
            throw std::runtime_error("plan has an empty factor list");
        if (repetitions < 1) throw std::runtime_error("repetitions must be >= 1");
        if (output.empty()) throw std::runtime_error("plan is missing out=<results.csv>");
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t");
    return s.substr(a, b - a + 1);
}

template <typename F>
inline auto parse_list(const std::string& s, F parse_one) {
    std::vector<decltype(parse_one(std::string{}))> out;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, ',')) {
        cur = trim(cur);
        if (!cur.empty()) out.push_back(parse_one(cur));
    }
    if (out.empty()) throw std::runtime_error("empty list value: " + s);
    return out;
}

}  // namespace detail

// Line-oriented plan format: top-level key=value pairs, then one [graph]
// section per source. '#' starts a comment.
inline ExperimentPlan parse_plan(std::istream& in) {
    ExperimentPlan plan;
    plan.variants = {Variant::Original, Variant::Enhanced};
    GraphSource* cur = nullptr;
    std::string line;
    int lineno = 0;
    auto fail = [&](const std::string& msg) {
        throw std::runtime_error("plan line " + std::to_string(lineno) + ": " + msg);
    };
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        if (line == "[graph]") {
            plan.sources.push_back(GraphSource{});
            cur = &plan.sources.back();
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos) fail("expected key=value, got '" + line + "'");
        std::string key = detail::trim(line.substr(0, eq));
        std::string val = detail::trim(line.substr(eq + 1));
        try {
            if (cur) {
                if (key == "type") {
                    if (val == "geometric") cur->kind = GraphSource::Kind::Geometric;
                    else if (val == "file") cur->kind = GraphSource::Kind::File;
                    else fail("unknown graph type: " + val);
                } else if (key == "id") cur->id = val;
                else if (key == "path") cur->path = val;
                else if (key == "n") cur->spec.n = static_cast<uint32_t>(std::stoul(val));
                else if (key == "grid") cur->spec.grid_side = std::stoi(val);
                else if (key == "range") cur->spec.range = std::stod(val);
                else if (key == "seed") cur->spec.seed = std::stoull(val);
                else if (key == "count") cur->count = std::stoi(val);
                else fail("unknown graph key: " + key);
            } else {
                if (key == "out") plan.output = val;
                else if (key == "seed") plan.master_seed = std::stoull(val);
                else if (key == "m") plan.ms = detail::parse_list(val, [](const std::string& s) { return std::stoi(s); });
                else if (key == "D") plan.Ds = detail::parse_list(val, [](const std::string& s) { return std::stoi(s); });
                else if (key == "loss") plan.losses = detail::parse_list(val, [](const std::string& s) { return std::stod(s); });
                else if (key == "variants") plan.variants = detail::parse_list(val, [](const std::string& s) { return parse_variant(s); });
                else if (key == "reps") plan.repetitions = std::stoi(val);
                else if (key == "max_retries") plan.max_retries = std::stoll(val);
                else if (key == "latency") plan.latency_ticks = std::stoi(val);
                else if (key == "bandwidth") plan.bandwidth = std::stoi(val);
                else if (key == "window") plan.window = std::stoi(val);
                else if (key == "timeout") plan.timeout_ticks = std::stoi(val);
                else fail("unknown plan key: " + key);
            }
        } catch (const std::invalid_argument& e) {
            fail(std::string("bad value for ") + key + ": " + e.what());
        } catch (const std::out_of_range&) {
            fail("value out of range for " + key);
        }
    }
    return plan;
}

inline ExperimentPlan parse_plan_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open plan file: " + path);
    return parse_plan(in);
}

struct NamedGraph {
    std::string id;
    Graph graph;
    int diameter{0};
};

inline std::string source_default_id(const GraphSource& src) {
    if (!src.id.empty()) return src.id;
    if (src.kind == GraphSource::Kind::File) {
        auto slash = src.path.find_last_of('/');
        std::string base = slash == std::string::npos ? src.path : src.path.substr(slash + 1);
        auto dot = base.find_last_of('.');
        return dot == std::string::npos ? base : base.substr(0, dot);
    }
    return "geo" + std::to_string(src.spec.n);
}

// Materialize plan sources. Unreadable/failed sources are reported through
// on_error and skipped; the plan continues with the rest.
inline std::vector<NamedGraph> resolve_sources(
    const std::vector<GraphSource>& sources,
    const std::function<void(const std::string&, const std::string&)>& on_error = {}) {
    std::vector<NamedGraph> out;
    for (const auto& src : sources) {
        std::string base = source_default_id(src);
        if (src.kind == GraphSource::Kind::File) {
            try {
                auto loaded = load_edge_list_file(src.path, LoadPolicy::TakeLargestComponent);
                NamedGraph ng{base, std::move(loaded.graph), 0};
                ng.diameter = diameter(ng.graph);
                out.push_back(std::move(ng));
            } catch (const std::exception& e) {
                if (on_error) on_error(base, e.what());
            }
            continue;
        }
        for (int k = 0; k < src.count; ++k) {
            GeometricSpec spec = src.spec;
            spec.seed = src.spec.seed + static_cast<uint64_t>(k);
            std::string id = src.count == 1 ? base : base + "-" + std::to_string(spec.seed);
            try {
                NamedGraph ng{id, generate_geometric(spec), 0};
                ng.diameter = diameter(ng.graph);
                out.push_back(std::move(ng));
            } catch (const std::exception& e) {
                if (on_error) on_error(id, e.what());
            }
        }
    }
    return out;
}

inline SimConfig plan_cell_config(const ExperimentPlan& plan, Variant v, int m, int D,
                                  double loss, uint64_t seed) {
    SimConfig cfg;
    cfg.variant = v;
    cfg.m = m;
    cfg.horizon = D;
    cfg.loss_p = loss;
    cfg.seed = seed;
    cfg.max_retries = plan.max_retries;
    cfg.latency_ticks = plan.latency_ticks;
    cfg.bandwidth = plan.bandwidth;
    cfg.window = plan.window;
    cfg.timeout_ticks = plan.timeout_ticks;
    return cfg;
}

inline ResultRow run_cell(const NamedGraph& ng, const SimConfig& cfg) {
    ResultRow row;
    row.graph_id = ng.id;
    row.n = ng.graph.n();
    row.edges = ng.graph.edge_count;
    row.diameter = ng.diameter;
    row.variant = variant_name(cfg.variant);
    row.m = cfg.m;
    row.D = cfg.horizon;
    row.loss_p = cfg.loss_p;
    row.seed = cfg.seed;
    try {
        RunMetrics metrics = run_simulation(ng.graph, cfg);
        row.avg_msgs = metrics.avg_msgs;
        row.max_msgs = metrics.max_msgs;
        row.ticks = metrics.ticks;
        row.wall_s = metrics.wall_seconds;
        for (const auto& nm : metrics.node) row.mem_proxy = std::max(row.mem_proxy, nm.buffer_peak);
        row.loss_frac = metrics.loss_frac;
        row.leader = metrics.selected_leader;
        uint32_t exact = exact_most_central(ng.graph);
        row.leader_dist_exact = hop_distance(ng.graph, exact, metrics.selected_leader);
    } catch (const std::exception& e) {
        std::string msg = e.what();
        for (char& c : msg) {
            if (c == ',' || c == '\n') c = ';';
        }
        row.errors = msg;
    }
    return row;
}

struct PlanProgress {
    std::function<void(size_t done, size_t total, const ResultRow&)> on_row;
    std::function<void(const std::string& source, const std::string& error)> on_source_error;
};

// Execute every (graph, variant, m, D, loss, rep) cell. Completed cells found
// in an existing results file are skipped; new rows are appended as they
// finish (crash-resumable), then the file is rewritten in canonical cell
// order so reruns converge to an identical CSV.
inline std::vector<ResultRow> run_plan(const ExperimentPlan& plan, int jobs = 1,
                                       const PlanProgress& progress = {}) {
    plan.validate();
    auto graphs = resolve_sources(plan.sources, progress.on_source_error);
    if (graphs.empty()) throw std::runtime_error("no usable graph sources in plan");

    // Canonical cell order: graph, variant, m, D, loss, rep.
    struct Cell {
        size_t graph_idx;
        Variant variant;
        int m, D;
        double loss;
        int rep;
    };
    std::vector<Cell> cells;
    for (size_t gi = 0; gi < graphs.size(); ++gi)
        for (Variant v : plan.variants)
            for (int m : plan.ms)
                for (int D : plan.Ds)
                    for (double loss : plan.losses)
                        for (int rep = 0; rep < plan.repetitions; ++rep)
                            cells.push_back(Cell{gi, v, m, D, loss, rep});

    std::map<std::string, ResultRow> done;
    {
        std::ifstream probe(plan.output);
        if (probe.good()) {
            for (auto& row : load_results_csv(plan.output)) done[row.key()] = row;
        }
    }

    std::vector<std::optional<ResultRow>> results(cells.size());
    std::vector<size_t> todo;
    for (size_t c = 0; c < cells.size(); ++c) {
        const Cell& cell = cells[c];
        uint64_t seed = hash_combine(plan.master_seed, static_cast<uint64_t>(cell.rep));
        ResultRow probe_row;
        probe_row.graph_id = graphs[cell.graph_idx].id;
        probe_row.variant = variant_name(cell.variant);
        probe_row.m = cell.m;
        probe_row.D = cell.D;
        probe_row.loss_p = cell.loss;
        probe_row.seed = seed;
        auto it = done.find(probe_row.key());
        if (it != done.end()) {
            results[c] = it->second;
        } else {
            todo.push_back(c);
        }
    }

    std::mutex io_mutex;
    std::ofstream append;
    if (!todo.empty()) {
        bool fresh = done.empty();
        append.open(plan.output, std::ios::app);
        if (!append) throw std::runtime_error("cannot write results file: " + plan.output);
        if (fresh) append << kResultsHeader << '\n';
    }
    std::atomic<size_t> next{0};
    std::atomic<size_t> finished{done.size() ? results.size() - todo.size() : 0};
    auto worker = [&]() {
        for (;;) {
            size_t k = next.fetch_add(1);
            if (k >= todo.size()) return;
            size_t c = todo[k];
            const Cell& cell = cells[c];
            uint64_t seed = hash_combine(plan.master_seed, static_cast<uint64_t>(cell.rep));
            SimConfig cfg = plan_cell_config(plan, cell.variant, cell.m, cell.D, cell.loss, seed);
            ResultRow row = run_cell(graphs[cell.graph_idx], cfg);
            std::lock_guard<std::mutex> lock(io_mutex);
            results[c] = row;
            append << row.to_csv() << '\n';
            append.flush();
            size_t done_now = finished.fetch_add(1) + 1;
            if (progress.on_row) progress.on_row(done_now, results.size(), row);
        }
    };
    if (jobs <= 1 || todo.size() <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        int nw = std::min<size_t>(static_cast<size_t>(jobs), todo.size());
        for (int w = 0; w < nw; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (append.is_open()) append.close();

    // Rewrite in canonical order so the final file is run-order independent.
    std::vector<ResultRow> out;
    out.reserve(results.size());
    for (auto& r : results) out.push_back(std::move(*r));
    std::ofstream rewrite(plan.output, std::ios::trunc);
    if (!rewrite) throw std::runtime_error("cannot write results file: " + plan.output);
    rewrite << kResultsHeader << '\n';
    for (const auto& row : out) rewrite << row.to_csv() << '\n';
    return out;
}

// ---------------------------------------------------------------------------
// Leader quality vs the exact oracle

struct QualityRecord {
    std::string graph_id;
    int D{0};
    uint32_t exact_leader{0};
    uint32_t leader_original{0};
    uint32_t leader_enhanced{0};
    int dist_original{0};
    int dist_enhanced{0};
};

inline std::vector<QualityRecord> quality_sweep(const std::string& graph_id, const Graph& g,
                                                const std::vector<int>& Ds, SimConfig base) {
    base.loss_p = 0.0;
    uint32_t exact = exact_most_central(g);
    std::vector<QualityRecord> out;
    for (int D : Ds) {
        QualityRecord rec;
        rec.graph_id = graph_id;
        rec.D = D;
        rec.exact_leader = exact;
        SimConfig cfg = base;
        cfg.horizon = D;
        cfg.variant = Variant::Original;
        rec.leader_original = run_simulation(g, cfg).selected_leader;
        cfg.variant = Variant::Enhanced;
        rec.leader_enhanced = run_simulation(g, cfg).selected_leader;
        rec.dist_original = hop_distance(g, exact, rec.leader_original);
        rec.dist_enhanced = hop_distance(g, exact, rec.leader_enhanced);
        out.push_back(rec);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Summaries over result tables

struct SummaryRow {
    std::string graph_id;
    int m{1};
    int D{1};
    double loss_p{0.0};
    double avg_original{0.0}, avg_enhanced{0.0};
    long long max_original{0}, max_enhanced{0};
    double reduction_pct{0.0};  // (P - I) / P * 100
    long long ticks_original{0}, ticks_enhanced{0};
    double loss_original{0.0}, loss_enhanced{0.0};
    long long mem_original{0}, mem_enhanced{0};
    int runs{0};
};

inline std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows) {
    if (rows.empty()) throw std::runtime_error("no result rows to summarize");
    std::map<std::string, SummaryRow> cells;
    std::map<std::string, std::pair<int, int>> counts;  // original, enhanced
    for (const auto& r : rows) {
        if (!r.errors.empty()) continue;
        std::string key = r.graph_id + '|' + std::to_string(r.m) + '|' + std::to_string(r.D) +
                          '|' + ResultRow::fmt_double(r.loss_p);
        SummaryRow& s = cells[key];
        s.graph_id = r.graph_id;
        s.m = r.m;
        s.D = r.D;
        s.loss_p = r.loss_p;
        auto& [no, ne] = counts[key];
        if (r.variant == "original") {
            ++no;
            s.avg_original += r.avg_msgs;
            s.max_original = std::max(s.max_original, r.max_msgs);
            s.ticks_original += r.ticks;
            s.loss_original += r.loss_frac;
            s.mem_original = std::max(s.mem_original, r.mem_proxy);
        } else {
            ++ne;
            s.avg_enhanced += r.avg_msgs;
            s.max_enhanced = std::max(s.max_enhanced, r.max_msgs);
            s.ticks_enhanced += r.ticks;
            s.loss_enhanced += r.loss_frac;
            s.mem_enhanced = std::max(s.mem_enhanced, r.mem_proxy);
        }
        ++s.runs;
    }
    std::vector<SummaryRow> out;
    for (auto& [key, s] : cells) {
        auto [no, ne] = counts[key];
        if (no > 0) {
            s.avg_original /= no;
            s.loss_original /= no;
            s.ticks_original /= no;
        }
        if (ne > 0) {
            s.avg_enhanced /= ne;
            s.loss_enhanced /= ne;
            s.ticks_enhanced /= ne;
        }
        s.reduction_pct = (no > 0 && ne > 0 && s.avg_original > 0.0)
                              ? (s.avg_original - s.avg_enhanced) / s.avg_original * 100.0
                              : 0.0;
        out.push_back(s);
    }
    return out;
}

// Paired (original, enhanced) values of one metric per cell, for the
// hypothesis tests. Cells missing either variant are skipped.
inline std::vector<PairedSample> paired_metric(const std::vector<ResultRow>& rows,
                                               const std::string& metric) {
    auto pick = [&](const ResultRow& r) -> double {
        if (metric == "avg_msgs") return r.avg_msgs;
        if (metric == "max_msgs") return static_cast<double>(r.max_msgs);
        if (metric == "ticks") return static_cast<double>(r.ticks);
        if (metric == "mem_proxy") return static_cast<double>(r.mem_proxy);
        if (metric == "loss_frac") return r.loss_frac;
        if (metric == "leader_dist_exact") return static_cast<double>(r.leader_dist_exact);
        throw std::runtime_error("unknown metric: " + metric);
    };
    std::map<std::string, PairedSample> cells;
    std::map<std::string, std::pair<bool, bool>> seen;
    for (const auto& r : rows) {
        if (!r.errors.empty()) continue;
        std::string key = r.graph_id + '|' + std::to_string(r.m) + '|' + std::to_string(r.D) +
                          '|' + ResultRow::fmt_double(r.loss_p) + '|' + std::to_string(r.seed);
        PairedSample& p = cells[key];
        p.graph_id = key;
        if (r.variant == "original") {
            p.original = pick(r);
            seen[key].first = true;
        } else {
            p.enhanced = pick(r);
            seen[key].second = true;
        }
    }
    std::vector<PairedSample> out;
    for (auto& [key, p] : cells) {
        if (seen[key].first && seen[key].second) out.push_back(p);
    }
    return out;
}

}  // namespace prunesim
