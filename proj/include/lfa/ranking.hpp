#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include "lfa/errors.hpp"

namespace lfa {

/// Cross-model comparison summary. `avg_rank[j]` is model j's accuracy rank
/// averaged over datasets (lower is better). `wins[j]` / `losses[j]` count
/// datasets where the reference model's error is no higher / strictly higher
/// than model j's, i.e. ties score as reference wins; the reference's own
/// slots hold -1.
struct RankSummary {
    std::vector<double> avg_rank;
    std::vector<int> wins;
    std::vector<int> losses;
    int reference = 0;
};

/// Average per-dataset ranks of a models x datasets error table, plus
/// win/loss counts of a chosen reference model against every other model.
/// Ranks are ascending by error; tied values receive the mean of the rank
/// positions they span.
inline RankSummary friedman_rank(
    const std::vector<std::vector<double>>& table, int reference = 0) {
    const int n_models = int(table.size());
    if (n_models == 0) throw ConfigError("friedman_rank: empty table");
    const std::size_t n_datasets = table[0].size();
    for (const auto& row : table)
        if (row.size() != n_datasets)
            throw ConfigError("friedman_rank: ragged table");
    if (n_datasets == 0)
        throw ConfigError("friedman_rank: table has no datasets");
    if (reference < 0 || reference >= n_models)
        throw ConfigError("friedman_rank: reference model out of range");

    RankSummary out;
    out.reference = reference;
    out.avg_rank.assign(std::size_t(n_models), 0.0);

    std::vector<int> order(static_cast<std::size_t>(n_models));
    for (std::size_t d = 0; d < n_datasets; ++d) {
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return table[std::size_t(a)][d] < table[std::size_t(b)][d];
        });
        // walk runs of equal values; each run shares the mean position
        std::size_t pos = 0;
        while (pos < order.size()) {
            std::size_t end = pos + 1;
            while (end < order.size() &&
                   table[std::size_t(order[end])][d] ==
                       table[std::size_t(order[pos])][d])
                ++end;
            const double mean_rank = 0.5 * double(pos + 1 + end);
            for (std::size_t r = pos; r < end; ++r)
                out.avg_rank[std::size_t(order[r])] += mean_rank;
            pos = end;
        }
    }
    for (double& r : out.avg_rank) r /= double(n_datasets);

    out.wins.assign(std::size_t(n_models), -1);
    out.losses.assign(std::size_t(n_models), -1);
    for (int j = 0; j < n_models; ++j) {
        if (j == reference) continue;
        int w = 0, l = 0;
        for (std::size_t d = 0; d < n_datasets; ++d) {
            if (table[std::size_t(reference)][d] <= table[std::size_t(j)][d])
                ++w;
            else
                ++l;
        }
        out.wins[std::size_t(j)] = w;
        out.losses[std::size_t(j)] = l;
    }
    return out;
}

}  // namespace lfa
