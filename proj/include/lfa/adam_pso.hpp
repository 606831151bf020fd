#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lfa/errors.hpp"
#include "lfa/gradient.hpp"
#include "lfa/model.hpp"
#include "lfa/random.hpp"
#include "lfa/ratings.hpp"
#include "lfa/refine.hpp"

namespace lfa {

/// Per-particle Adam moment pair over the (F+1)-dimensional group space.
struct AdamMoments {
    Vector m;
    Vector v;
    long step_count = 0;

    static AdamMoments zeros(int dim) {
        AdamMoments mo;
        mo.m = Vector::Zero(dim);
        mo.v = Vector::Zero(dim);
        return mo;
    }
};

/// The swarm displacement vector that stands in for a gradient: the
/// randomly weighted pull toward the personal best plus the pull toward the
/// global best.
inline Vector swarm_gradient(const Vector& x, const Vector& h, const Vector& g,
                             double rd1, double rd2) {
    return rd1 * (h - x) + rd2 * (g - x);
}

/// Adam moment update over one displacement vector; returns the velocity to
/// add to the position (element-wise alpha * m_hat / (sqrt(v_hat) + psi)).
inline Vector adam_moment_step(AdamMoments& mo, const Vector& d,
                               const AdamConfig& cfg) {
    mo.step_count += 1;
    const double c1 =
        adam_correction(cfg.beta1, cfg.power_correction, mo.step_count);
    const double c2 =
        adam_correction(cfg.beta2, cfg.power_correction, mo.step_count);
    mo.m = cfg.beta1 * mo.m + (1.0 - cfg.beta1) * d;
    mo.v = cfg.beta2 * mo.v + (1.0 - cfg.beta2) * d.cwiseProduct(d);
    return (cfg.alpha * (mo.m.array() / c1) /
            ((mo.v.array() / c2).sqrt() + cfg.psi))
        .matrix();
}

struct AdamParticle {
    Vector x;  ///< position
    Vector v;  ///< last applied velocity
    Vector h;  ///< personal best position
    double h_fitness = std::numeric_limits<double>::infinity();
    AdamMoments moments;
};

/// Swarm configuration for the Adam-driven refiner. Deliberately carries no
/// inertia or acceleration coefficients: the Adam step rule replaces them,
/// leaving alpha as the only step-size knob.
struct AdamSwarmConfig {
    int swarm_size = 10;
    int iters = 20;  ///< per-group iteration budget
    double init_radius = 0.01;
    AdamConfig adam;

    void validate() const {
        if (swarm_size < 2)
            throw ConfigError("adam swarm: swarm_size must be >= 2");
        if (iters < 1) throw ConfigError("adam swarm: iters must be >= 1");
        if (init_radius < 0.0)
            throw ConfigError("adam swarm: init_radius must be >= 0");
        adam.validate();
    }
};

/// Same swarm skeleton as the classical refiner (particle 0 at the incoming
/// vector, strict personal-best updates, synchronous global best) but each
/// particle moves by an Adam-corrected step over its swarm displacement
/// vector. Moments are zeroed at construction.
class AdamSwarm {
public:
    template <typename Fitness>
    AdamSwarm(const Vector& origin, const AdamSwarmConfig& cfg,
              Fitness&& fitness, std::uint64_t seed)
        : rng_(seed) {
        cfg.validate();
        particles_.resize(std::size_t(cfg.swarm_size));
        const int dim = int(origin.size());
        for (int s = 0; s < cfg.swarm_size; ++s) {
            AdamParticle& p = particles_[std::size_t(s)];
            p.x = origin;
            if (s > 0)
                for (int k = 0; k < dim; ++k)
                    p.x(k) += cfg.init_radius * (2.0 * rng_.uniform() - 1.0);
            p.v = Vector::Zero(dim);
            p.h = p.x;
            p.h_fitness = fitness(p.x);
            p.moments = AdamMoments::zeros(dim);
        }
        update_best();
    }

    template <typename Fitness>
    void step(const AdamSwarmConfig& cfg, Fitness&& fitness) {
        const Vector g_snapshot = g_;
        for (std::size_t s = 0; s < particles_.size(); ++s) {
            AdamParticle& p = particles_[s];
            const double rd1 = rng_.uniform();
            const double rd2 = rng_.uniform();
            const Vector d = swarm_gradient(p.x, p.h, g_snapshot, rd1, rd2);
            p.v = adam_moment_step(p.moments, d, cfg.adam);
            p.x += p.v;
            if (!p.x.allFinite())
                throw DivergenceError("adam swarm: particle " +
                                      std::to_string(s) +
                                      " position became non-finite");
            const double fx = fitness(p.x);
            if (fx < p.h_fitness) {
                p.h = p.x;
                p.h_fitness = fx;
            }
        }
        update_best();
    }

    const std::vector<AdamParticle>& particles() const { return particles_; }
    const Vector& g() const { return g_; }
    double g_fitness() const { return g_fitness_; }

    double mean_m_norm() const {
        double acc = 0.0;
        for (const AdamParticle& p : particles_) acc += p.moments.m.norm();
        return acc / double(particles_.size());
    }
    double mean_v_norm() const {
        double acc = 0.0;
        for (const AdamParticle& p : particles_) acc += p.moments.v.norm();
        return acc / double(particles_.size());
    }

private:
    void update_best() {
        std::size_t best = 0;
        for (std::size_t s = 1; s < particles_.size(); ++s)
            if (particles_[s].h_fitness < particles_[best].h_fitness) best = s;
        g_ = particles_[best].h;
        g_fitness_ = particles_[best].h_fitness;
    }

    std::vector<AdamParticle> particles_;
    Vector g_;
    double g_fitness_ = std::numeric_limits<double>::infinity();
    Rng rng_;
};

/// Adam-driven counterpart of refine_group; identical contract, including
/// the never-worse-than-incoming guarantee and the empty-group skip.
inline std::optional<Vector> adam_refine_group(
    GroupRef group, const LatentState& state, const HdiMatrix& train,
    const AdamSwarmConfig& cfg, double lambda, std::uint64_t seed,
    GroupRefineRecord* record = nullptr) {
    const auto& ids = group.kind == GroupKind::Row
                          ? train.row_entries(group.index)
                          : train.col_entries(group.index);
    if (ids.empty()) return std::nullopt;
    const GroupFitness fit(group, state, train, lambda);
    const Vector origin = group_vector(state, group);
    AdamSwarm swarm(origin, cfg, fit, seed);
    const double pre = fit(origin);
    for (int it = 0; it < cfg.iters; ++it) swarm.step(cfg, fit);
    if (record) {
        record->kind = group.kind;
        record->index = group.index;
        record->pre_fitness = pre;
        record->post_fitness = swarm.g_fitness();
        record->iters = cfg.iters;
        record->has_moment_norms = true;
        record->mean_m_norm = swarm.mean_m_norm();
        record->mean_v_norm = swarm.mean_v_norm();
    }
    return swarm.g();
}

/// One full Adam-refinement pass: all row groups then all column groups,
/// results written back phase by phase. Returns the post-pass validation
/// RMSE.
inline double adhpl_pass(LatentState& state, const DataSplit& split,
                         const AdamSwarmConfig& cfg, double lambda,
                         std::uint64_t pass_seed, int threads = 1,
                         const RefineObserver& observer = {}) {
    cfg.validate();
    const auto one = [&](GroupRef group, std::uint64_t seed,
                         GroupRefineRecord* rec) {
        return adam_refine_group(group, state, split.train, cfg, lambda, seed,
                                 rec);
    };
    detail::refine_phase(state, state.n_rows(), GroupKind::Row, pass_seed,
                         threads, observer, one);
    detail::refine_phase(state, state.n_cols(), GroupKind::Col, pass_seed,
                         threads, observer, one);
    return rmse(state, split.validation);
}

/// Repeated adhpl_pass with validation early stopping; returns the
/// best-validation snapshot and per-pass history.
inline RefineResult adhpl_refine(const LatentState& pretrained,
                                 const DataSplit& split,
                                 const AdamSwarmConfig& cfg, double lambda,
                                 const RefineBudget& budget,
                                 std::uint64_t master_seed, int threads = 1,
                                 const RefineObserver& observer = {}) {
    cfg.validate();
    return detail::refine_loop(
        pretrained, split, budget, master_seed,
        [&](LatentState& s, std::uint64_t pass_seed) {
            return adhpl_pass(s, split, cfg, lambda, pass_seed, threads,
                              observer);
        });
}

}  // namespace lfa
