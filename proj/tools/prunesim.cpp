// prunesim: generation, single runs, paired comparison, plan sweeps,
// leader-quality sweeps, hypothesis tests and plot-data export for the
// distributed pruning-based closeness estimation simulator.
//
// Exit codes: 0 success, 1 operational failure, 2 usage error.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "prunesim/experiment.hpp"

using nlohmann::json;
using namespace prunesim;

namespace {

std::string fmt(double v) { return ResultRow::fmt_double(v); }

std::string out_dir_default() {
    const char* env = std::getenv("PRUNESIM_OUT_DIR");
    return env && *env ? env : ".";
}

LoadResult load_graph_arg(const std::string& path) {
    return load_edge_list_file(path, LoadPolicy::TakeLargestComponent);
}

struct RunFlags {
    std::string graph;
    std::string variant{"original"};
    int m{1};
    int D{12};
    double loss{0.0};
    uint64_t seed{0};
    long long max_retries{std::numeric_limits<long long>::min()};  // sentinel: unset
    int latency{1};
    int bandwidth{64};
    int window{0};
    int timeout{0};

    // Unbounded retries for correctness runs; bounded (16) once loss is in
    // play so lossy runs terminate and report a loss fraction.
    long long effective_retries() const {
        if (max_retries != std::numeric_limits<long long>::min()) return max_retries;
        return loss > 0.0 ? 16 : -1;
    }

    SimConfig to_config(Variant v) const {
        SimConfig cfg;
        cfg.variant = v;
        cfg.m = m;
        cfg.horizon = D;
        cfg.loss_p = loss;
        cfg.seed = seed;
        cfg.max_retries = effective_retries();
        cfg.latency_ticks = latency;
        cfg.bandwidth = bandwidth;
        cfg.window = window;
        cfg.timeout_ticks = timeout;
        return cfg;
    }
};

void add_run_flags(CLI::App* cmd, RunFlags& f, bool with_variant = true) {
    cmd->add_option("--graph", f.graph, "edge-list graph file")->required();
    if (with_variant) {
        cmd->add_option("--variant", f.variant, "original|enhanced")->default_val("original");
    }
    cmd->add_option("--m", f.m, "packets per message")->default_val(1);
    cmd->add_option("--D", f.D, "iteration cap")->default_val(12);
    cmd->add_option("--loss", f.loss, "drop probability")->default_val(0.0);
    cmd->add_option("--seed", f.seed, "run seed")->default_val(0);
    cmd->add_option("--max-retries", f.max_retries,
                    "retransmission bound (-1 unbounded; default: unbounded, 16 when loss > 0)");
    cmd->add_option("--latency", f.latency, "per-hop latency in ticks")->default_val(1);
    cmd->add_option("--bandwidth", f.bandwidth, "bytes per tick per link")->default_val(64);
    cmd->add_option("--window", f.window, "Go-Back-N window (0 = m)")->default_val(0);
    cmd->add_option("--timeout", f.timeout, "retransmission timeout in ticks (0 = auto)")
        ->default_val(0);
}

void print_metrics(const Graph& g, const RunFlags& f, const std::string& variant,
                   const RunMetrics& r) {
    long long mem = 0;
    for (const auto& nm : r.node) mem = std::max(mem, nm.buffer_peak);
    uint32_t exact = exact_most_central(g);
    std::cout << "variant=" << variant << "\n"
              << "n=" << g.n() << "\n"
              << "edges=" << g.edge_count << "\n"
              << "m=" << f.m << "\n"
              << "D=" << f.D << "\n"
              << "loss_p=" << fmt(f.loss) << "\n"
              << "seed=" << f.seed << "\n"
              << "avg_msgs=" << fmt(r.avg_msgs) << "\n"
              << "max_msgs=" << r.max_msgs << "\n"
              << "ticks=" << r.ticks << "\n"
              << "wall_s=" << fmt(r.wall_seconds) << "\n"
              << "mem_proxy=" << mem << "\n"
              << "loss_frac=" << fmt(r.loss_frac) << "\n"
              << "leader=" << r.selected_leader << "\n"
              << "leader_dist_exact=" << hop_distance(g, exact, r.selected_leader) << "\n";
    std::cout << "# " << variant << " run on n=" << g.n() << ": leader " << r.selected_leader
              << ", " << fmt(r.avg_msgs) << " packets/node avg, " << r.ticks << " ticks, "
              << fmt(100.0 * r.loss_frac) << "% app messages lost\n";
}

json metrics_json(const RunMetrics& r) {
    json j;
    j["variant"] = variant_name(r.variant);
    j["ticks"] = r.ticks;
    j["avg_msgs"] = r.avg_msgs;
    j["max_msgs"] = r.max_msgs;
    j["loss_frac"] = r.loss_frac;
    j["leader"] = r.selected_leader;
    json nodes = json::array();
    for (size_t i = 0; i < r.node.size(); ++i) {
        const auto& nm = r.node[i];
        nodes.push_back({{"id", i},
                         {"packets_sent", nm.packets_sent},
                         {"packets_received", nm.packets_received},
                         {"retransmissions", nm.retransmissions},
                         {"app_messages_lost", nm.app_messages_lost},
                         {"active_iterations", nm.active_iterations},
                         {"final_t", nm.final_t},
                         {"view_size", nm.view_size},
                         {"q_size", nm.q_size},
                         {"buffer_peak", nm.buffer_peak},
                         {"estimate", r.estimates[i].value}});
    }
    j["nodes"] = nodes;
    return j;
}

int cmd_gen(uint32_t n, int grid, double range, uint64_t seed, const std::string& out) {
    GeometricSpec spec;
    spec.n = n;
    spec.grid_side = grid;
    spec.range = range;
    spec.seed = seed;
    Graph g = generate_geometric(spec);
    std::ofstream os(out);
    if (!os) throw std::runtime_error("cannot write " + out);
    dump_graph(g, os);
    std::cout << "n=" << g.n() << "\nedges=" << g.edge_count << "\ndiameter=" << diameter(g)
              << "\nout=" << out << "\n";
    return 0;
}

int cmd_run(const RunFlags& f, const std::string& json_out) {
    auto loaded = load_graph_arg(f.graph);
    Variant v = parse_variant(f.variant);
    RunMetrics r = run_simulation(loaded.graph, f.to_config(v));
    print_metrics(loaded.graph, f, variant_name(v), r);
    if (!json_out.empty()) {
        std::ofstream os(json_out);
        if (!os) throw std::runtime_error("cannot write " + json_out);
        os << metrics_json(r).dump(2) << "\n";
    }
    return 0;
}

int cmd_compare(const RunFlags& f) {
    auto loaded = load_graph_arg(f.graph);
    const Graph& g = loaded.graph;
    RunMetrics ro = run_simulation(g, f.to_config(Variant::Original));
    RunMetrics re = run_simulation(g, f.to_config(Variant::Enhanced));
    auto mem = [](const RunMetrics& r) {
        long long m = 0;
        for (const auto& nm : r.node) m = std::max(m, nm.buffer_peak);
        return m;
    };
    std::cout << "n=" << g.n() << "\nedges=" << g.edge_count << "\nm=" << f.m << "\nD=" << f.D
              << "\nloss_p=" << fmt(f.loss) << "\nseed=" << f.seed << "\n";
    std::cout << "avg_msgs_original=" << fmt(ro.avg_msgs) << "\n"
              << "avg_msgs_enhanced=" << fmt(re.avg_msgs) << "\n"
              << "avg_msgs_diff=" << fmt(ro.avg_msgs - re.avg_msgs) << "\n"
              << "max_msgs_original=" << ro.max_msgs << "\n"
              << "max_msgs_enhanced=" << re.max_msgs << "\n"
              << "ticks_original=" << ro.ticks << "\n"
              << "ticks_enhanced=" << re.ticks << "\n"
              << "mem_original=" << mem(ro) << "\n"
              << "mem_enhanced=" << mem(re) << "\n"
              << "loss_frac_original=" << fmt(ro.loss_frac) << "\n"
              << "loss_frac_enhanced=" << fmt(re.loss_frac) << "\n"
              << "leader_original=" << ro.selected_leader << "\n"
              << "leader_enhanced=" << re.selected_leader << "\n";
    double red = ro.avg_msgs > 0 ? (ro.avg_msgs - re.avg_msgs) / ro.avg_msgs * 100.0 : 0.0;
    std::cout << "# enhancement saves " << fmt(red) << "% of packets on this graph/seed\n";
    return 0;
}

int cmd_sweep(const std::string& plan_path, int jobs, bool quiet) {
    ExperimentPlan plan = parse_plan_file(plan_path);
    PlanProgress progress;
    progress.on_source_error = [](const std::string& src, const std::string& err) {
        std::cerr << "warning: skipping source " << src << ": " << err << "\n";
    };
    if (!quiet) {
        progress.on_row = [](size_t done, size_t total, const ResultRow& row) {
            std::cerr << "[" << done << "/" << total << "] " << row.graph_id << " "
                      << row.variant << " m=" << row.m << (row.errors.empty() ? "" : " ERROR")
                      << "\n";
        };
    }
    auto rows = run_plan(plan, jobs, progress);
    size_t errs = 0;
    for (const auto& r : rows) errs += r.errors.empty() ? 0 : 1;
    std::cout << "rows=" << rows.size() << "\nerrors=" << errs << "\nout=" << plan.output << "\n";
    return 0;
}

int cmd_quality(const RunFlags& f, const std::vector<int>& Ds, const std::string& out) {
    auto loaded = load_graph_arg(f.graph);
    std::vector<int> ds = Ds;
    if (ds.empty()) {
        int diam = diameter(loaded.graph);
        for (int d = 2; d <= diam; d += 2) ds.push_back(d);
        if (ds.empty() || ds.back() != diam) ds.push_back(diam);
    }
    auto recs = quality_sweep(f.graph, loaded.graph, ds, f.to_config(Variant::Original));
    std::ostream* os = &std::cout;
    std::ofstream file;
    if (!out.empty()) {
        file.open(out);
        if (!file) throw std::runtime_error("cannot write " + out);
        os = &file;
    }
    *os << "graph_id,D,exact_leader,leader_P,leader_I,dist_P,dist_I\n";
    for (const auto& r : recs) {
        *os << r.graph_id << ',' << r.D << ',' << r.exact_leader << ',' << r.leader_original
            << ',' << r.leader_enhanced << ',' << r.dist_original << ',' << r.dist_enhanced
            << "\n";
    }
    return 0;
}

int cmd_stats(const std::string& results_path, std::vector<std::string> metrics, double alpha) {
    auto rows = load_results_csv(results_path);
    if (metrics.empty()) metrics = {"avg_msgs", "max_msgs", "ticks", "mem_proxy"};
    bool any = false;
    std::string first_error;
    for (const auto& metric : metrics) {
        auto pairs = paired_metric(rows, metric);
        std::cout << "metric=" << metric << "\n";
        std::cout << "pairs=" << pairs.size() << "\n";
        try {
            double p = wilcoxon_signed_rank(pairs);
            double e = effect_size(pairs);
            std::cout << "p_value=" << fmt(p) << "\n"
                      << "effect_size=" << fmt(e) << "\n"
                      << "significant=" << (p < alpha ? "yes" : "no") << "\n";
            any = true;
        } catch (const std::exception& ex) {
            std::cout << "error=" << ex.what() << "\n";
            if (first_error.empty()) first_error = ex.what();
        }
    }
    if (!any) {
        std::cerr << "error: " << (first_error.empty() ? "no testable metrics" : first_error)
                  << "\n";
        return 1;
    }
    return 0;
}

int cmd_plotdata(const std::string& results_path, std::string out_dir) {
    auto rows = load_results_csv(results_path);
    if (out_dir.empty()) out_dir = out_dir_default();
    std::filesystem::create_directories(out_dir);

    // Histogram of paired avg-message differences (positive = enhancement wins).
    {
        auto pairs = paired_metric(rows, "avg_msgs");
        std::vector<double> diffs;
        for (const auto& p : pairs) diffs.push_back(p.diff());
        std::ofstream os(out_dir + "/hist_avg_msgs_diff.csv");
        os << "bin_lo,bin_hi,count\n";
        if (!diffs.empty()) {
            auto [mn_it, mx_it] = std::minmax_element(diffs.begin(), diffs.end());
            double lo = *mn_it, hi = *mx_it;
            if (hi == lo) hi = lo + 1.0;
            const int bins = 20;
            std::vector<int> count(bins, 0);
            for (double d : diffs) {
                int b = std::min(bins - 1, static_cast<int>((d - lo) / (hi - lo) * bins));
                ++count[b];
            }
            for (int b = 0; b < bins; ++b) {
                os << fmt(lo + (hi - lo) * b / bins) << ',' << fmt(lo + (hi - lo) * (b + 1) / bins)
                   << ',' << count[b] << "\n";
            }
        }
    }
    // Boxplot columns: per-cell average messages, P (original) vs I (enhanced).
    {
        auto pairs = paired_metric(rows, "avg_msgs");
        std::ofstream os(out_dir + "/box_avg_msgs.csv");
        os << "P,I\n";
        for (const auto& p : pairs) os << fmt(p.original) << ',' << fmt(p.enhanced) << "\n";
    }
    // Running time and data loss vs m (median per variant).
    {
        std::map<std::pair<int, std::string>, std::pair<std::vector<double>, std::vector<double>>>
            by_m;
        for (const auto& r : rows) {
            if (!r.errors.empty()) continue;
            auto& cell = by_m[{r.m, r.variant}];
            cell.first.push_back(static_cast<double>(r.ticks));
            cell.second.push_back(r.loss_frac);
        }
        auto median = [](std::vector<double> v) {
            std::sort(v.begin(), v.end());
            size_t n = v.size();
            return n == 0 ? 0.0 : (n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0);
        };
        std::ofstream os(out_dir + "/curves_m.csv");
        os << "m,variant,median_ticks,median_loss_frac\n";
        for (const auto& [key, cell] : by_m) {
            os << key.first << ',' << key.second << ',' << fmt(median(cell.first)) << ','
               << fmt(median(cell.second)) << "\n";
        }
    }
    std::cout << "out=" << out_dir << "\nfiles=hist_avg_msgs_diff.csv,box_avg_msgs.csv,curves_m.csv\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"deterministic simulator for pruning-based distributed closeness estimation"};
    app.require_subcommand(1);

    // gen
    uint32_t gen_n = 100;
    int gen_grid = 250;
    double gen_range = 10.0;
    uint64_t gen_seed = 0;
    std::string gen_out;
    auto* gen = app.add_subcommand("gen", "generate a random geometric graph");
    gen->add_option("--n", gen_n, "node count")->required();
    gen->add_option("--grid", gen_grid, "grid side length")->default_val(250);
    gen->add_option("--range", gen_range, "communication range")->default_val(10.0);
    gen->add_option("--seed", gen_seed, "generator seed")->default_val(0);
    gen->add_option("--out", gen_out, "output edge-list path")->required();

    // run
    RunFlags run_flags;
    std::string run_json;
    auto* run = app.add_subcommand("run", "single simulation run");
    add_run_flags(run, run_flags);
    run->add_option("--json", run_json, "write per-node JSON detail to this file");

    // compare
    RunFlags cmp_flags;
    auto* compare = app.add_subcommand("compare", "paired original-vs-enhanced run");
    add_run_flags(compare, cmp_flags, /*with_variant=*/false);

    // sweep
    std::string plan_path;
    int jobs = 1;
    bool quiet = false;
    auto* sweep = app.add_subcommand("sweep", "execute an experiment plan file");
    sweep->add_option("--plan", plan_path, "plan file")->required();
    sweep->add_option("--jobs", jobs, "parallel cells")->default_val(1);
    sweep->add_flag("--quiet", quiet, "suppress per-cell progress");

    // quality
    RunFlags q_flags;
    std::vector<int> q_ds;
    std::string q_out;
    auto* quality = app.add_subcommand("quality", "leader quality vs the exact oracle across D");
    add_run_flags(quality, q_flags, /*with_variant=*/false);
    quality->add_option("--Ds", q_ds, "D values (default: 2,4,...,diameter)")->delimiter(',');
    quality->add_option("--out", q_out, "write CSV here instead of stdout");

    // stats
    std::string stats_results;
    std::vector<std::string> stats_metrics;
    double alpha = 0.01;
    auto* stats = app.add_subcommand("stats", "Wilcoxon signed-rank + effect size over results");
    stats->add_option("--results", stats_results, "results CSV from sweep")->required();
    stats->add_option("--metric", stats_metrics, "metrics to test")->delimiter(',');
    stats->add_option("--alpha", alpha, "significance level")->default_val(0.01);

    // plotdata
    std::string plot_results, plot_out;
    auto* plotdata = app.add_subcommand("plotdata", "export per-figure CSV data");
    plotdata->add_option("--results", plot_results, "results CSV from sweep")->required();
    plotdata->add_option("--out", plot_out, "output directory (default $PRUNESIM_OUT_DIR or .)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) {
            if (static_cast<uint64_t>(gen_n) >
                static_cast<uint64_t>(gen_grid) * static_cast<uint64_t>(gen_grid)) {
                std::cerr << "usage error: n exceeds grid capacity (" << gen_grid << "x"
                          << gen_grid << ")\n";
                return 2;
            }
            return cmd_gen(gen_n, gen_grid, gen_range, gen_seed, gen_out);
        }
        if (run->parsed()) return cmd_run(run_flags, run_json);
        if (compare->parsed()) return cmd_compare(cmp_flags);
        if (sweep->parsed()) return cmd_sweep(plan_path, jobs, quiet);
        if (quality->parsed()) return cmd_quality(q_flags, q_ds, q_out);
        if (stats->parsed()) return cmd_stats(stats_results, stats_metrics, alpha);
        if (plotdata->parsed()) return cmd_plotdata(plot_results, plot_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
