#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <utility>
#include <vector>

#include "lfa/convergence.hpp"
#include "lfa/errors.hpp"
#include "lfa/model.hpp"
#include "lfa/parallel.hpp"
#include "lfa/random.hpp"
#include "lfa/ratings.hpp"

namespace lfa {

/// Telemetry for one group refinement. Moment norms are filled only by the
/// Adam-based refiner (mean over the swarm's particles at the final
/// iteration).
struct GroupRefineRecord {
    GroupKind kind = GroupKind::Row;
    int index = 0;
    double pre_fitness = 0.0;
    double post_fitness = 0.0;
    int iters = 0;
    bool has_moment_norms = false;
    double mean_m_norm = 0.0;
    double mean_v_norm = 0.0;
};

using RefineObserver = std::function<void(const GroupRefineRecord&)>;

/// Pass-level budget and early stopping for the refinement stage.
struct RefineBudget {
    int max_passes = 8;
    int patience = 1;
    double min_delta = 1e-4;

    void validate() const {
        if (max_passes < 0)
            throw ConfigError("refine: max_passes must be >= 0");
        if (patience < 1) throw ConfigError("refine: patience must be >= 1");
        if (min_delta < 0.0)
            throw ConfigError("refine: min_delta must be >= 0");
    }
};

struct PassRecord {
    int pass = 0;  ///< 1-based
    double train_rmse = 0.0;
    double val_rmse = 0.0;
    double seconds = 0.0;
};

struct RefineResult {
    LatentState state;  ///< snapshot from the best validation pass
    std::vector<PassRecord> history;
    int best_pass = 0;  ///< 0 means the incoming state was never beaten
    double best_val_rmse = 0.0;
};

namespace detail {

/// Shared pass driver: runs full refinement passes with validation early
/// stopping, tracking the best snapshot (the incoming state included, so a
/// refinement that only hurts hands it back unchanged). `pass_fn(state,
/// pass_seed)` must run one pass in place and return the validation RMSE.
template <typename PassFn>
RefineResult refine_loop(LatentState state, const DataSplit& split,
                         const RefineBudget& budget, std::uint64_t master_seed,
                         PassFn&& pass_fn) {
    budget.validate();
    if (split.validation.size() == 0)
        throw EvalError("refine: validation set is empty");

    RefineResult out;
    out.best_pass = 0;
    out.best_val_rmse = rmse(state, split.validation);
    out.state = state;

    std::vector<double> val_series{out.best_val_rmse};
    for (int pass = 1; pass <= budget.max_passes; ++pass) {
        const auto t0 = std::chrono::steady_clock::now();
        const std::uint64_t pass_seed =
            SeedFanout{master_seed}.derive(seed_stream_pass,
                                           std::uint64_t(pass));
        const double val = pass_fn(state, pass_seed);
        PassRecord rec;
        rec.pass = pass;
        rec.train_rmse = rmse(state, split.train);
        rec.val_rmse = val;
        rec.seconds = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
        out.history.push_back(rec);
        if (val < out.best_val_rmse) {
            out.best_val_rmse = val;
            out.best_pass = pass;
            out.state = state;
        }
        val_series.push_back(val);
        if (convergence_check(val_series, budget.patience, budget.min_delta) ==
            Convergence::Stop)
            break;
    }
    return out;
}

/// Runs one refinement phase (all rows or all columns) with per-group seeds
/// derived from the pass seed, writing refined vectors back. Groups touch
/// disjoint state slices and read only the other side's factors, so the
/// parallel schedule is bit-identical to the sequential one.
template <typename RefineOne>
void refine_phase(LatentState& state, int n_groups, GroupKind kind,
                  std::uint64_t pass_seed, int threads,
                  const RefineObserver& observer, RefineOne&& refine_one) {
    const SeedStream stream = kind == GroupKind::Row ? seed_stream_row_group
                                                     : seed_stream_col_group;
    std::mutex observer_mutex;
    parallel_for(n_groups, threads, [&](int idx) {
        const GroupRef group{kind, idx};
        const std::uint64_t seed =
            SeedFanout{pass_seed}.derive(stream, std::uint64_t(idx));
        GroupRefineRecord record;
        const std::optional<Vector> refined =
            refine_one(group, seed, observer ? &record : nullptr);
        if (refined) {
            set_group_vector(state, group, *refined);
            if (observer) {
                const std::lock_guard<std::mutex> lock(observer_mutex);
                observer(record);
            }
        }
    });
}

}  // namespace detail

}  // namespace lfa
