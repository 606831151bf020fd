#pragma once

#include <cstdint>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lfa/errors.hpp"
#include "lfa/model.hpp"
#include "lfa/parallel.hpp"
#include "lfa/random.hpp"
#include "lfa/ratings.hpp"
#include "lfa/refine.hpp"

namespace lfa {

struct PsoConfig {
    double omega = 0.729;   ///< inertia
    double gamma1 = 1.496;  ///< cognitive acceleration
    double gamma2 = 1.496;  ///< social acceleration
    int swarm_size = 10;
    int iters = 20;  ///< per-group iteration budget
    double init_radius = 0.01;
    /// Classical scalar rd1/rd2 per particle by default; enable for
    /// independent draws per coordinate.
    bool per_dimension_draws = false;

    void validate() const {
        if (swarm_size < 2) throw ConfigError("pso: swarm_size must be >= 2");
        if (iters < 1) throw ConfigError("pso: iters must be >= 1");
        if (init_radius < 0.0)
            throw ConfigError("pso: init_radius must be >= 0");
    }
};

struct Particle {
    Vector x;  ///< position
    Vector v;  ///< velocity
    Vector h;  ///< personal best position
    double h_fitness = std::numeric_limits<double>::infinity();
};

/// One group's particle swarm. Particle 0 starts exactly at the incoming
/// group vector, the rest nearby; the global best therefore never starts
/// worse than the incoming slice. Personal bests replace only on strict
/// improvement and the global best is recomputed once per iteration after
/// every particle has moved, so the cached global-best fitness is exactly
/// non-increasing.
class Swarm {
public:
    template <typename Fitness>
    Swarm(const Vector& origin, const PsoConfig& cfg, Fitness&& fitness,
          std::uint64_t seed)
        : rng_(seed) {
        cfg.validate();
        particles_.resize(std::size_t(cfg.swarm_size));
        const int dim = int(origin.size());
        for (int s = 0; s < cfg.swarm_size; ++s) {
            Particle& p = particles_[std::size_t(s)];
            p.x = origin;
            if (s > 0)
                for (int k = 0; k < dim; ++k)
                    p.x(k) += cfg.init_radius * (2.0 * rng_.uniform() - 1.0);
            p.v = Vector::Zero(dim);
            p.h = p.x;
            p.h_fitness = fitness(p.x);
        }
        update_best();
    }

    /// One synchronous iteration: every particle moves, then the global best
    /// is recomputed from the updated personal bests.
    template <typename Fitness>
    void step(const PsoConfig& cfg, Fitness&& fitness) {
        const Vector g_snapshot = g_;
        for (std::size_t s = 0; s < particles_.size(); ++s) {
            Particle& p = particles_[s];
            if (cfg.per_dimension_draws) {
                for (int k = 0; k < int(p.x.size()); ++k) {
                    const double rd1 = rng_.uniform();
                    const double rd2 = rng_.uniform();
                    p.v(k) = cfg.omega * p.v(k) +
                             cfg.gamma1 * rd1 * (p.h(k) - p.x(k)) +
                             cfg.gamma2 * rd2 * (g_snapshot(k) - p.x(k));
                }
            } else {
                const double rd1 = rng_.uniform();
                const double rd2 = rng_.uniform();
                p.v = cfg.omega * p.v + cfg.gamma1 * rd1 * (p.h - p.x) +
                      cfg.gamma2 * rd2 * (g_snapshot - p.x);
            }
            p.x += p.v;
            if (!p.x.allFinite())
                throw DivergenceError("pso: particle " + std::to_string(s) +
                                      " position became non-finite");
            const double fx = fitness(p.x);
            if (fx < p.h_fitness) {
                p.h = p.x;
                p.h_fitness = fx;
            }
        }
        update_best();
    }

    const std::vector<Particle>& particles() const { return particles_; }
    const Vector& g() const { return g_; }
    double g_fitness() const { return g_fitness_; }

private:
    void update_best() {
        std::size_t best = 0;
        for (std::size_t s = 1; s < particles_.size(); ++s)
            if (particles_[s].h_fitness < particles_[best].h_fitness) best = s;
        g_ = particles_[best].h;
        g_fitness_ = particles_[best].h_fitness;
    }

    std::vector<Particle> particles_;
    Vector g_;
    double g_fitness_ = std::numeric_limits<double>::infinity();
    Rng rng_;
};

/// Refines one row or column group by classical PSO against its fitness with
/// the rest of the state frozen. Returns the refined vector, or nullopt for
/// a group with no known entries (the caller must leave the slice untouched).
/// The result's fitness never exceeds the incoming slice's.
inline std::optional<Vector> refine_group(GroupRef group,
                                          const LatentState& state,
                                          const HdiMatrix& train,
                                          const PsoConfig& cfg, double lambda,
                                          std::uint64_t seed,
                                          GroupRefineRecord* record = nullptr) {
    const auto& ids = group.kind == GroupKind::Row
                          ? train.row_entries(group.index)
                          : train.col_entries(group.index);
    if (ids.empty()) return std::nullopt;
    const GroupFitness fit(group, state, train, lambda);
    const Vector origin = group_vector(state, group);
    Swarm swarm(origin, cfg, fit, seed);
    const double pre = fit(origin);
    for (int it = 0; it < cfg.iters; ++it) swarm.step(cfg, fit);
    if (record) {
        record->kind = group.kind;
        record->index = group.index;
        record->pre_fitness = pre;
        record->post_fitness = swarm.g_fitness();
        record->iters = cfg.iters;
        record->has_moment_norms = false;
        record->mean_m_norm = 0.0;
        record->mean_v_norm = 0.0;
    }
    return swarm.g();
}

/// One full refinement pass: all row groups, then all column groups, each
/// result written back before the next phase. Returns the post-pass
/// validation RMSE.
inline double mpso_pass(LatentState& state, const DataSplit& split,
                        const PsoConfig& cfg, double lambda,
                        std::uint64_t pass_seed, int threads = 1,
                        const RefineObserver& observer = {}) {
    cfg.validate();
    const auto one = [&](GroupRef group, std::uint64_t seed,
                         GroupRefineRecord* rec) {
        return refine_group(group, state, split.train, cfg, lambda, seed, rec);
    };
    detail::refine_phase(state, state.n_rows(), GroupKind::Row, pass_seed,
                         threads, observer, one);
    detail::refine_phase(state, state.n_cols(), GroupKind::Col, pass_seed,
                         threads, observer, one);
    return rmse(state, split.validation);
}

/// Repeated mpso_pass with validation early stopping; returns the
/// best-validation snapshot and per-pass history.
inline RefineResult mpso_refine(const LatentState& pretrained,
                                const DataSplit& split, const PsoConfig& cfg,
                                double lambda, const RefineBudget& budget,
                                std::uint64_t master_seed, int threads = 1,
                                const RefineObserver& observer = {}) {
    cfg.validate();
    return detail::refine_loop(
        pretrained, split, budget, master_seed,
        [&](LatentState& s, std::uint64_t pass_seed) {
            return mpso_pass(s, split, cfg, lambda, pass_seed, threads,
                             observer);
        });
}

}  // namespace lfa
