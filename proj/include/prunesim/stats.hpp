#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace prunesim {

// Paired per-graph measurement of one metric under both protocol variants.
struct PairedSample {
    std::string graph_id;
    double original{0.0};
    double enhanced{0.0};
    double diff() const { return original - enhanced; }
};

enum class WilcoxonMethod { Auto, Exact, NormalApprox };

namespace detail {

struct RankedDiffs {
    std::vector<double> abs_diff;   // sorted ascending
    std::vector<int> sign;          // matching abs_diff order
    std::vector<double> midrank;    // matching abs_diff order
    double w_plus{0.0};
    std::vector<size_t> tie_groups; // sizes of tied-rank groups
};

inline RankedDiffs rank_differences(const std::vector<double>& diffs) {
    RankedDiffs r;
    std::vector<std::pair<double, int>> nz;
    for (double d : diffs) {
        if (d != 0.0) nz.emplace_back(std::abs(d), d > 0 ? 1 : -1);
    }
    std::sort(nz.begin(), nz.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    const size_t n = nz.size();
    r.abs_diff.resize(n);
    r.sign.resize(n);
    r.midrank.resize(n);
    for (size_t i = 0; i < n; ++i) {
        r.abs_diff[i] = nz[i].first;
        r.sign[i] = nz[i].second;
    }
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j < n && r.abs_diff[j] == r.abs_diff[i]) ++j;
        // Tied magnitudes share the average of the ranks they occupy.
        double mid = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (size_t k = i; k < j; ++k) r.midrank[k] = mid;
        r.tie_groups.push_back(j - i);
        i = j;
    }
    for (size_t k = 0; k < n; ++k) {
        if (r.sign[k] > 0) r.w_plus += r.midrank[k];
    }
    return r;
}

// Exact two-sided p-value: distribution of W+ over all 2^n sign assignments,
// computed by dynamic programming over doubled midranks (always integral).
inline double wilcoxon_exact(const RankedDiffs& r) {
    const size_t n = r.midrank.size();
    std::vector<long long> r2(n);
    long long total2 = 0;
    for (size_t k = 0; k < n; ++k) {
        r2[k] = static_cast<long long>(std::llround(2.0 * r.midrank[k]));
        total2 += r2[k];
    }
    std::vector<double> ways(static_cast<size_t>(total2) + 1, 0.0);
    ways[0] = 1.0;
    long long reach = 0;
    for (size_t k = 0; k < n; ++k) {
        reach += r2[k];
        for (long long s = reach; s >= r2[k]; --s) ways[s] += ways[s - r2[k]];
    }
    const long long w2 = static_cast<long long>(std::llround(2.0 * r.w_plus));
    double below = 0.0, above = 0.0, all = 0.0;
    for (long long s = 0; s <= total2; ++s) {
        all += ways[s];
        if (s <= w2) below += ways[s];
        if (s >= w2) above += ways[s];
    }
    double p = 2.0 * std::min(below, above) / all;
    return std::min(p, 1.0);
}

// Normal approximation with continuity correction and tie-adjusted variance.
inline double wilcoxon_normal(const RankedDiffs& r) {
    const double n = static_cast<double>(r.midrank.size());
    const double mean = n * (n + 1.0) / 4.0;
    double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0;
    for (size_t t : r.tie_groups) {
        double td = static_cast<double>(t);
        var -= (td * td * td - td) / 48.0;
    }
    if (var <= 0.0) return 1.0;  // all magnitudes tied into one group
    double delta = r.w_plus - mean;
    double corrected = std::max(0.0, std::abs(delta) - 0.5);  // continuity
    double z = corrected / std::sqrt(var);
    double p = std::erfc(z / std::sqrt(2.0));
    return std::min(std::max(p, 1e-300), 1.0);
}

}  // namespace detail

// Two-sided Wilcoxon signed-rank test on the paired differences. Zero
// differences are dropped; tied magnitudes get midranks. Exact enumeration
// up to 25 nonzero pairs, normal approximation beyond.
inline double wilcoxon_signed_rank(const std::vector<double>& diffs,
                                   WilcoxonMethod method = WilcoxonMethod::Auto) {
    auto r = detail::rank_differences(diffs);
    if (r.midrank.size() < 6) {
        throw std::runtime_error("insufficient data: need >= 6 nonzero differences, have " +
                                 std::to_string(r.midrank.size()));
    }
    bool exact = method == WilcoxonMethod::Exact ||
                 (method == WilcoxonMethod::Auto && r.midrank.size() <= 25);
    return exact ? detail::wilcoxon_exact(r) : detail::wilcoxon_normal(r);
}

inline double wilcoxon_signed_rank(const std::vector<PairedSample>& pairs,
                                   WilcoxonMethod method = WilcoxonMethod::Auto) {
    std::vector<double> diffs;
    diffs.reserve(pairs.size());
    for (const auto& p : pairs) diffs.push_back(p.diff());
    return wilcoxon_signed_rank(diffs, method);
}

// Standardized paired mean difference: mean(diff) / sample stddev(diff).
inline double effect_size(const std::vector<double>& diffs) {
    if (diffs.size() < 2) throw std::runtime_error("insufficient data: need >= 2 pairs");
    double mean = 0.0;
    for (double d : diffs) mean += d;
    mean /= static_cast<double>(diffs.size());
    double ss = 0.0;
    for (double d : diffs) ss += (d - mean) * (d - mean);
    double var = ss / static_cast<double>(diffs.size() - 1);
    if (var <= 0.0) throw std::runtime_error("undefined effect: zero variance in differences");
    return mean / std::sqrt(var);
}

inline double effect_size(const std::vector<PairedSample>& pairs) {
    std::vector<double> diffs;
    diffs.reserve(pairs.size());
    for (const auto& p : pairs) diffs.push_back(p.diff());
    return effect_size(diffs);
}

}  // namespace prunesim
