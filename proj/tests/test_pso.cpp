#include <catch2/catch_amalgamated.hpp>

#include "lfa/pso.hpp"
#include "lfa/synth.hpp"
#include "oracles.hpp"

using lfa::GroupKind;
using lfa::GroupRef;
using lfa::HdiMatrix;
using lfa::LatentState;
using lfa::PsoConfig;
using lfa::Swarm;
using lfa::Vector;

namespace {

bool exact_eq(const Vector& a, const Vector& b) {
    return a.size() == b.size() && (a - b).cwiseAbs().maxCoeff() == 0.0;
}

double sphere(const Vector& x) { return x.squaredNorm(); }

lfa::DataSplit tiny_split(const HdiMatrix& m) {
    lfa::DataSplit s;
    s.train = m;
    s.validation = m;
    s.test = m;
    return s;
}

}  // namespace

TEST_CASE("pso config validation") {
    PsoConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.swarm_size = 1;
    CHECK_THROWS_AS(cfg.validate(), lfa::ConfigError);
    cfg = {};
    cfg.iters = 0;
    CHECK_THROWS_AS(cfg.validate(), lfa::ConfigError);
    cfg = {};
    cfg.init_radius = -0.1;
    CHECK_THROWS_AS(cfg.validate(), lfa::ConfigError);
}

TEST_CASE("swarm construction") {
    const Vector origin = Vector{{0.5, -0.25, 1.0}};
    PsoConfig cfg;
    cfg.swarm_size = 6;

    SECTION("particle zero sits exactly on the origin") {
        const Swarm swarm(origin, cfg, sphere, 42);
        CHECK(exact_eq(swarm.particles()[0].x, origin));
        CHECK(exact_eq(swarm.particles()[0].h, origin));
        CHECK(swarm.particles()[0].h_fitness == sphere(origin));
    }
    SECTION("other particles stay within the init radius") {
        const Swarm swarm(origin, cfg, sphere, 42);
        for (const lfa::Particle& p : swarm.particles()) {
            CHECK((p.x - origin).cwiseAbs().maxCoeff() <= cfg.init_radius);
            CHECK(p.v.cwiseAbs().maxCoeff() == 0.0);
            CHECK(exact_eq(p.h, p.x));
        }
    }
    SECTION("initial global best never exceeds the origin fitness") {
        const Swarm swarm(origin, cfg, sphere, 42);
        CHECK(swarm.g_fitness() <= sphere(origin));
    }
    SECTION("radius zero collapses the swarm onto the origin") {
        cfg.init_radius = 0.0;
        const Swarm swarm(origin, cfg, sphere, 42);
        for (const lfa::Particle& p : swarm.particles())
            CHECK(exact_eq(p.x, origin));
        CHECK(exact_eq(swarm.g(), origin));
    }
    SECTION("same seed gives the same swarm") {
        const Swarm a(origin, cfg, sphere, 42);
        const Swarm b(origin, cfg, sphere, 42);
        const Swarm c(origin, cfg, sphere, 43);
        for (std::size_t s = 0; s < a.particles().size(); ++s)
            CHECK(exact_eq(a.particles()[s].x, b.particles()[s].x));
        bool any_diff = false;
        for (std::size_t s = 1; s < a.particles().size(); ++s)
            if (!exact_eq(a.particles()[s].x, c.particles()[s].x))
                any_diff = true;
        CHECK(any_diff);
    }
}

TEST_CASE("swarm step replays the documented draw order") {
    const Vector origin = Vector{{0.4, -0.2}};
    PsoConfig cfg;
    cfg.swarm_size = 4;
    const std::uint64_t seed = 77;

    Swarm swarm(origin, cfg, sphere, seed);
    // mirror rng: construction consumed (S-1)*dim uniforms
    lfa::Rng mirror(seed);
    const int dim = int(origin.size());
    std::vector<Vector> x0;
    for (int s = 0; s < cfg.swarm_size; ++s) {
        Vector x = origin;
        if (s > 0)
            for (int k = 0; k < dim; ++k)
                x(k) += cfg.init_radius * (2.0 * mirror.uniform() - 1.0);
        REQUIRE(exact_eq(swarm.particles()[std::size_t(s)].x, x));
        x0.push_back(std::move(x));
    }
    const Vector g0 = swarm.g();

    swarm.step(cfg, sphere);

    // velocities start at zero and h == x, so the first move reduces to the
    // social pull alone: v = gamma2 * rd2 * (g - x)
    for (int s = 0; s < cfg.swarm_size; ++s) {
        const double rd1 = mirror.uniform();
        const double rd2 = mirror.uniform();
        const Vector v = cfg.omega * Vector::Zero(dim) +
                         cfg.gamma1 * rd1 * (x0[std::size_t(s)] -
                                             x0[std::size_t(s)]) +
                         cfg.gamma2 * rd2 * (g0 - x0[std::size_t(s)]);
        const Vector x = x0[std::size_t(s)] + v;
        CHECK(exact_eq(swarm.particles()[std::size_t(s)].v, v));
        CHECK(exact_eq(swarm.particles()[std::size_t(s)].x, x));
    }
}

TEST_CASE("swarm dynamics") {
    const Vector origin = Vector{{0.8, 0.6, -0.4}};
    PsoConfig cfg;

    SECTION("zero accelerations freeze every particle") {
        cfg.gamma1 = 0.0;
        cfg.gamma2 = 0.0;
        Swarm swarm(origin, cfg, sphere, 5);
        std::vector<Vector> before;
        for (const lfa::Particle& p : swarm.particles()) before.push_back(p.x);
        for (int it = 0; it < 10; ++it) swarm.step(cfg, sphere);
        for (std::size_t s = 0; s < before.size(); ++s)
            CHECK(exact_eq(swarm.particles()[s].x, before[s]));
    }
    SECTION("radius zero keeps the whole run stationary") {
        cfg.init_radius = 0.0;
        Swarm swarm(origin, cfg, sphere, 5);
        for (int it = 0; it < 10; ++it) swarm.step(cfg, sphere);
        for (const lfa::Particle& p : swarm.particles())
            CHECK(exact_eq(p.x, origin));
        CHECK(exact_eq(swarm.g(), origin));
    }
    SECTION("constant fitness: ties keep the first personal best as global") {
        const auto flat = [](const Vector&) { return 1.0; };
        Swarm swarm(origin, cfg, flat, 5);
        std::vector<Vector> initial;
        for (const lfa::Particle& p : swarm.particles()) initial.push_back(p.x);
        for (int it = 0; it < 5; ++it) swarm.step(cfg, flat);
        // strict improvement: equal fitness never replaces a personal best
        for (std::size_t s = 0; s < initial.size(); ++s) {
            CHECK(exact_eq(swarm.particles()[s].h, initial[s]));
            CHECK(swarm.particles()[s].h_fitness == 1.0);
        }
        // lowest index wins the tie, and particle 0 started on the origin
        CHECK(exact_eq(swarm.g(), origin));
        // yet positions did move (the swarm keeps exploring)
        bool moved = false;
        for (std::size_t s = 1; s < initial.size(); ++s)
            if (!exact_eq(swarm.particles()[s].x, initial[s])) moved = true;
        CHECK(moved);
    }
    SECTION("global best fitness is exactly non-increasing") {
        lfa::Rng rng(211);
        for (int rep = 0; rep < 20; ++rep) {
            const HdiMatrix m = oracle::random_matrix(6, 7, 18, rng);
            const LatentState st = oracle::random_state(6, 7, 3, rng);
            const GroupRef group = rep % 2
                                       ? GroupRef{GroupKind::Row,
                                                  int(rng.below(6))}
                                       : GroupRef{GroupKind::Col,
                                                  int(rng.below(7))};
            const auto& ids = group.kind == GroupKind::Row
                                  ? m.row_entries(group.index)
                                  : m.col_entries(group.index);
            if (ids.empty()) continue;
            const lfa::GroupFitness fit(group, st, m, rep % 3 ? 0.05 : 0.0);
            Swarm swarm(lfa::group_vector(st, group), cfg, fit,
                        std::uint64_t(rep));
            double last = swarm.g_fitness();
            for (int it = 0; it < 15; ++it) {
                swarm.step(cfg, fit);
                CHECK(swarm.g_fitness() <= last);
                last = swarm.g_fitness();
            }
        }
    }
    SECTION("runaway coefficients raise a divergence error") {
        cfg.omega = 10.0;
        cfg.gamma1 = 3.0;
        cfg.gamma2 = 3.0;
        Swarm swarm(origin, cfg, sphere, 5);
        CHECK_THROWS_AS(
            [&] {
                for (int it = 0; it < 2000; ++it) swarm.step(cfg, sphere);
            }(),
            lfa::DivergenceError);
    }
}

TEST_CASE("refine_group") {
    lfa::Rng rng(307);
    PsoConfig cfg;

    SECTION("a group with no known entries is skipped") {
        const LatentState st = oracle::random_state(3, 3, 2, rng);
        const HdiMatrix m(3, 3, {{0, 0, 2.0}});
        CHECK_FALSE(lfa::refine_group({GroupKind::Row, 1}, st, m, cfg, 0.02, 9)
                        .has_value());
        CHECK_FALSE(lfa::refine_group({GroupKind::Col, 2}, st, m, cfg, 0.02, 9)
                        .has_value());
    }
    SECTION("the refined vector never fits worse than the incoming slice") {
        for (int rep = 0; rep < 20; ++rep) {
            const HdiMatrix m = oracle::random_matrix(5, 6, 16, rng);
            const LatentState st = oracle::random_state(5, 6, 3, rng);
            const GroupRef group{rep % 2 ? GroupKind::Col : GroupKind::Row,
                                 rep % 2 ? int(rng.below(6))
                                         : int(rng.below(5))};
            const double lambda = rep % 3 ? 0.05 : 0.0;
            lfa::GroupRefineRecord rec;
            const auto refined = lfa::refine_group(group, st, m, cfg, lambda,
                                                   std::uint64_t(rep), &rec);
            if (!refined) continue;
            CHECK(rec.post_fitness <= rec.pre_fitness);
            CHECK(rec.iters == cfg.iters);
            CHECK_FALSE(rec.has_moment_norms);
            const double recomputed =
                lfa::group_fitness(*refined, group, st, m, lambda);
            CHECK(recomputed == rec.post_fitness);
        }
    }
    SECTION("radius zero hands back the incoming vector untouched") {
        cfg.init_radius = 0.0;
        const HdiMatrix m = oracle::random_matrix(4, 4, 8, rng);
        const LatentState st = oracle::random_state(4, 4, 2, rng);
        for (int u = 0; u < 4; ++u) {
            if (m.row_entries(u).empty()) continue;
            const auto refined =
                lfa::refine_group({GroupKind::Row, u}, st, m, cfg, 0.02, 3);
            REQUIRE(refined.has_value());
            CHECK(exact_eq(*refined,
                           lfa::group_vector(st, {GroupKind::Row, u})));
        }
    }
    SECTION("the seed pins the outcome") {
        const HdiMatrix m = oracle::random_matrix(4, 4, 10, rng);
        const LatentState st = oracle::random_state(4, 4, 2, rng);
        const GroupRef group{GroupKind::Row, 0};
        if (!m.row_entries(0).empty()) {
            const auto a = lfa::refine_group(group, st, m, cfg, 0.02, 77);
            const auto b = lfa::refine_group(group, st, m, cfg, 0.02, 77);
            REQUIRE(a.has_value());
            REQUIRE(b.has_value());
            CHECK(exact_eq(*a, *b));
        }
    }
}

TEST_CASE("mpso pass and refine") {
    lfa::Rng rng(401);
    PsoConfig cfg;
    cfg.iters = 8;

    SECTION("only groups with entries are touched") {
        const HdiMatrix m(3, 4, {{1, 2, 3.5}});
        LatentState st = oracle::random_state(3, 4, 2, rng);
        const LatentState before = st;
        lfa::mpso_pass(st, tiny_split(m), cfg, 0.0, 99);
        for (int u = 0; u < 3; ++u) {
            if (u == 1) continue;
            CHECK((st.P.row(u) == before.P.row(u)));
            CHECK(st.b(u) == before.b(u));
        }
        for (int i = 0; i < 4; ++i) {
            if (i == 2) continue;
            CHECK((st.Q.row(i) == before.Q.row(i)));
            CHECK(st.c(i) == before.c(i));
        }
    }
    SECTION("a pass never raises the unregularized objective") {
        for (int rep = 0; rep < 10; ++rep) {
            const HdiMatrix m = oracle::random_matrix(6, 8, 24, rng);
            LatentState st = oracle::random_state(6, 8, 3, rng);
            const double pre = lfa::objective(st, m, 0.0);
            lfa::mpso_pass(st, tiny_split(m), cfg, 0.0, std::uint64_t(rep));
            CHECK(lfa::objective(st, m, 0.0) <= pre + 1e-9);
        }
    }
    SECTION("four worker threads replay the single-thread pass bit-exactly") {
        const HdiMatrix m = oracle::random_matrix(12, 14, 70, rng);
        LatentState a = oracle::random_state(12, 14, 3, rng);
        LatentState b = a;
        lfa::mpso_pass(a, tiny_split(m), cfg, 0.02, 55, 1);
        lfa::mpso_pass(b, tiny_split(m), cfg, 0.02, 55, 4);
        CHECK(a == b);
    }
    SECTION("the observer sees one record per refined group") {
        std::vector<lfa::RatingTriple> triples;
        for (int d = 0; d < 5; ++d) triples.push_back({d, d, 2.0 + d});
        triples.push_back({0, 4, 1.5});
        const HdiMatrix m(5, 5, triples);
        LatentState st = oracle::random_state(5, 5, 2, rng);
        int rows = 0, cols = 0;
        lfa::mpso_pass(st, tiny_split(m), cfg, 0.02, 7, 1,
                       [&](const lfa::GroupRefineRecord& r) {
                           (r.kind == GroupKind::Row ? rows : cols) += 1;
                           CHECK(r.post_fitness <= r.pre_fitness);
                           CHECK_FALSE(r.has_moment_norms);
                       });
        CHECK(rows == 5);
        CHECK(cols == 5);
    }
    SECTION("zero passes hand back the incoming state") {
        const HdiMatrix m = oracle::random_matrix(5, 5, 12, rng);
        const LatentState st = oracle::random_state(5, 5, 2, rng);
        const lfa::RefineResult r =
            lfa::mpso_refine(st, tiny_split(m), cfg, 0.02, {0, 1, 1e-4}, 3);
        CHECK(r.history.empty());
        CHECK(r.best_pass == 0);
        CHECK(r.state == st);
    }
    SECTION("refinement never ends worse than it began on validation") {
        const HdiMatrix m = oracle::random_matrix(8, 9, 40, rng);
        const LatentState st = oracle::random_state(8, 9, 3, rng);
        const lfa::DataSplit split = lfa::split(m, {0.6, 0.2, 0.2}, 19);
        const lfa::RefineResult r =
            lfa::mpso_refine(st, split, cfg, 0.02, {4, 1, 1e-6}, 3);
        CHECK(r.best_val_rmse <= lfa::rmse(st, split.validation));
        CHECK(lfa::rmse(r.state, split.validation) ==
              Catch::Approx(r.best_val_rmse));
        for (std::size_t i = 0; i < r.history.size(); ++i)
            CHECK(r.history[i].pass == int(i) + 1);
    }
    SECTION("same master seed reproduces the refinement bit-exactly") {
        const HdiMatrix m = oracle::random_matrix(6, 6, 18, rng);
        const LatentState st = oracle::random_state(6, 6, 2, rng);
        const lfa::DataSplit split = tiny_split(m);
        const lfa::RefineResult a =
            lfa::mpso_refine(st, split, cfg, 0.02, {2, 1, 1e-6}, 13);
        const lfa::RefineResult b =
            lfa::mpso_refine(st, split, cfg, 0.02, {2, 1, 1e-6}, 13);
        CHECK(a.state == b.state);
        REQUIRE(a.history.size() == b.history.size());
        for (std::size_t i = 0; i < a.history.size(); ++i)
            CHECK(a.history[i].val_rmse == b.history[i].val_rmse);
    }
}
