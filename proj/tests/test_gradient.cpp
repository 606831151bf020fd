#include <catch2/catch_amalgamated.hpp>

#include "lfa/gradient.hpp"
#include "lfa/synth.hpp"
#include "oracles.hpp"

using lfa::AdamConfig;
using lfa::HdiMatrix;
using lfa::LatentState;
using lfa::RatingTriple;

namespace {

// tiny state/matrix whose residuals are all exactly zero
struct ExactFit {
    LatentState state;
    HdiMatrix matrix;
};

ExactFit exact_fit_instance(lfa::Rng& rng) {
    LatentState s = oracle::random_state(4, 5, 2, rng);
    std::vector<RatingTriple> triples;
    for (int u = 0; u < 4; ++u)
        for (int i = 0; i < 5; ++i)
            if (rng.uniform() < 0.6)
                triples.push_back({u, i, lfa::predict(s, u, i)});
    if (triples.empty()) triples.push_back({0, 0, lfa::predict(s, 0, 0)});
    return {std::move(s), HdiMatrix(4, 5, std::move(triples))};
}

}  // namespace

TEST_CASE("adam correction divisor") {
    CHECK(lfa::adam_correction(0.9, false, 1) == Catch::Approx(0.1));
    CHECK(lfa::adam_correction(0.9, false, 50) == Catch::Approx(0.1));
    CHECK(lfa::adam_correction(0.9, true, 1) == Catch::Approx(0.1));
    CHECK(lfa::adam_correction(0.9, true, 2) == Catch::Approx(1 - 0.81));
    CHECK(lfa::adam_correction(0.999, true, 1000) ==
          Catch::Approx(1 - std::pow(0.999, 1000)));
}

TEST_CASE("adam config validation") {
    AdamConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.beta1 = 1.0;
    CHECK_THROWS_AS(cfg.validate(), lfa::ConfigError);
    cfg = {};
    cfg.beta2 = -0.1;
    CHECK_THROWS_AS(cfg.validate(), lfa::ConfigError);
    cfg = {};
    cfg.alpha = 0.0;
    CHECK_THROWS_AS(cfg.validate(), lfa::ConfigError);
    cfg = {};
    cfg.psi = 0.0;
    CHECK_THROWS_AS(cfg.validate(), lfa::ConfigError);
    cfg = {};
    cfg.beta1 = 0.0;  // zero decay is legal
    cfg.beta2 = 0.0;
    CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("per-entry gradient matches central finite differences") {
    lfa::Rng rng(101);
    int checked = 0;
    for (int rep = 0; rep < 25; ++rep) {
        const HdiMatrix m = oracle::random_matrix(5, 6, 8, rng);
        LatentState s = oracle::random_state(5, 6, 3, rng);
        const double lambda = rep % 2 ? 0.05 : 0.0;
        const RatingTriple t = m.entry(int(rng.below(m.size())));
        const lfa::EntryGradient g = lfa::entry_gradient(s, t, lambda);

        for (int k = 0; k < 3; ++k) {
            const double fd = oracle::central_diff(
                [&](double x) {
                    LatentState probe = s;
                    probe.P(t.u, k) = x;
                    return lfa::entry_loss(probe, t, lambda);
                },
                s.P(t.u, k));
            CHECK(oracle::rel_err(g.gp(k), fd) < 1e-6);
            const double fdq = oracle::central_diff(
                [&](double x) {
                    LatentState probe = s;
                    probe.Q(t.i, k) = x;
                    return lfa::entry_loss(probe, t, lambda);
                },
                s.Q(t.i, k));
            CHECK(oracle::rel_err(g.gq(k), fdq) < 1e-6);
        }
        const double fdb = oracle::central_diff(
            [&](double x) {
                LatentState probe = s;
                probe.b(t.u) = x;
                return lfa::entry_loss(probe, t, lambda);
            },
            s.b(t.u));
        CHECK(oracle::rel_err(g.gb, fdb) < 1e-6);
        const double fdc = oracle::central_diff(
            [&](double x) {
                LatentState probe = s;
                probe.c(t.i) = x;
                return lfa::entry_loss(probe, t, lambda);
            },
            s.c(t.i));
        CHECK(oracle::rel_err(g.gc, fdc) < 1e-6);
        ++checked;
    }
    CHECK(checked == 25);
}

TEST_CASE("sgd epoch") {
    lfa::Rng rng(103);
    SECTION("zero residual and zero lambda leave the state unchanged") {
        ExactFit fix = exact_fit_instance(rng);
        const LatentState before = fix.state;
        lfa::sgd_epoch(fix.state, fix.matrix, 0.1, 0.0, 9);
        CHECK(fix.state == before);
    }
    SECTION("zero learning rate is the identity") {
        LatentState s = oracle::random_state(4, 5, 2, rng);
        const LatentState before = s;
        const HdiMatrix m = oracle::random_matrix(4, 5, 10, rng);
        lfa::sgd_epoch(s, m, 0.0, 0.3, 9);
        CHECK(s == before);
    }
    SECTION("single entry from all-zero factors only moves the biases") {
        LatentState s;
        s.P = lfa::Matrix::Zero(1, 1);
        s.Q = lfa::Matrix::Zero(1, 1);
        s.b = lfa::Vector::Zero(1);
        s.c = lfa::Vector::Zero(1);
        const HdiMatrix m(1, 1, {{0, 0, 1.0}});
        lfa::sgd_epoch(s, m, 0.1, 0.0, 1);
        CHECK(s.P(0, 0) == 0.0);
        CHECK(s.Q(0, 0) == 0.0);
        CHECK(s.b(0) == Catch::Approx(0.1));
        CHECK(s.c(0) == Catch::Approx(0.1));
    }
    SECTION("one update follows the written rules with p's pre-update value") {
        LatentState s;
        s.P = lfa::Matrix{{0.5}};
        s.Q = lfa::Matrix{{2.0}};
        s.b = lfa::Vector{{0.1}};
        s.c = lfa::Vector{{0.2}};
        const double eta = 0.1, lambda = 0.3, z = 3.0;
        const HdiMatrix m(1, 1, {{0, 0, z}});
        const double e = z - (0.5 * 2.0 + 0.1 + 0.2);
        lfa::sgd_epoch(s, m, eta, lambda, 1);
        CHECK(s.P(0, 0) == Catch::Approx(0.5 + eta * (e * 2.0 - lambda * 0.5)));
        CHECK(s.Q(0, 0) == Catch::Approx(2.0 + eta * (e * 0.5 - lambda * 2.0)));
        CHECK(s.b(0) == Catch::Approx(0.1 + eta * (e - lambda * 0.1)));
        CHECK(s.c(0) == Catch::Approx(0.2 + eta * (e - lambda * 0.2)));
    }
    SECTION("shuffle order depends on the seed but same seed repeats") {
        LatentState s = oracle::random_state(6, 6, 2, rng);
        const HdiMatrix m = oracle::random_matrix(6, 6, 20, rng);
        LatentState a = s, b = s, c = s;
        lfa::sgd_epoch(a, m, 0.05, 0.02, 11);
        lfa::sgd_epoch(b, m, 0.05, 0.02, 11);
        lfa::sgd_epoch(c, m, 0.05, 0.02, 12);
        CHECK(a == b);
        CHECK_FALSE(a == c);
    }
    SECTION("divergence is detected and names the entry") {
        LatentState s = oracle::random_state(2, 2, 1, rng);
        const HdiMatrix m(2, 2, {{0, 0, 5.0}, {1, 1, 5.0}});
        CHECK_THROWS_AS(lfa::sgd_epoch(s, m, 1e200, 1e200, 1),
                        lfa::DivergenceError);
    }
}

TEST_CASE("adam epoch") {
    lfa::Rng rng(107);
    SECTION("zero gradient with fresh moments leaves the state unchanged") {
        ExactFit fix = exact_fit_instance(rng);
        const LatentState before = fix.state;
        lfa::ParamMoments mo = lfa::ParamMoments::zeros(4, 5, 2);
        lfa::adam_epoch(fix.state, fix.matrix, {}, 0.0, mo, 9);
        CHECK(fix.state == before);
        CHECK(mo.step_count == 1);
    }
    SECTION("first step from fresh moments is alpha-bounded sign descent") {
        LatentState s;
        s.P = lfa::Matrix{{0.0}};
        s.Q = lfa::Matrix{{0.0}};
        s.b = lfa::Vector{{0.0}};
        s.c = lfa::Vector{{0.0}};
        const HdiMatrix m(1, 1, {{0, 0, 2.0}});
        AdamConfig cfg;
        lfa::ParamMoments mo = lfa::ParamMoments::zeros(1, 1, 1);
        lfa::adam_epoch(s, m, cfg, 0.0, mo, 1);
        // residual e = 2, bias gradient -e; paper correction gives
        // step = -alpha * g / (|g| + psi) on the very first update
        const double g = -2.0;
        const double want = -cfg.alpha * g / (std::abs(g) + cfg.psi);
        CHECK(s.b(0) == Catch::Approx(want).margin(1e-15));
        CHECK(s.c(0) == Catch::Approx(want).margin(1e-15));
        CHECK(s.P(0, 0) == 0.0);  // factor gradients vanish at zero factors
        CHECK(s.Q(0, 0) == 0.0);
    }
    SECTION("ten epochs on one entry match four scalar oracles") {
        for (const bool power : {false, true}) {
            LatentState s;
            s.P = lfa::Matrix{{0.4}};
            s.Q = lfa::Matrix{{0.7}};
            s.b = lfa::Vector{{0.05}};
            s.c = lfa::Vector{{-0.1}};
            const double lambda = 0.02, z = 3.0;
            const HdiMatrix m(1, 1, {{0, 0, z}});
            AdamConfig cfg;
            cfg.alpha = 0.01;
            cfg.power_correction = power;
            lfa::ParamMoments mo = lfa::ParamMoments::zeros(1, 1, 1);

            double p = 0.4, q = 0.7, b = 0.05, c = -0.1;
            oracle::ScalarAdam op, oq, ob, oc;
            for (oracle::ScalarAdam* o : {&op, &oq, &ob, &oc}) {
                o->alpha = cfg.alpha;
                o->power = power;
            }
            for (int epoch = 0; epoch < 10; ++epoch) {
                lfa::adam_epoch(s, m, cfg, lambda, mo, std::uint64_t(epoch));
                const double e = z - (p * q + b + c);
                const double gp = -e * q + lambda * p;
                const double gq = -e * p + lambda * q;
                p += op.descent_step(gp);
                q += oq.descent_step(gq);
                b += ob.descent_step(-e + lambda * b);
                c += oc.descent_step(-e + lambda * c);
                REQUIRE(std::abs(s.P(0, 0) - p) <= 1e-12);
                REQUIRE(std::abs(s.Q(0, 0) - q) <= 1e-12);
                REQUIRE(std::abs(s.b(0) - b) <= 1e-12);
                REQUIRE(std::abs(s.c(0) - c) <= 1e-12);
            }
            CHECK(mo.step_count == 10);
        }
    }
    SECTION("zero decay degenerates to sign steps of magnitude alpha") {
        lfa::Rng local(11);
        LatentState s = oracle::random_state(3, 3, 2, local);
        const LatentState before = s;
        const HdiMatrix m = oracle::random_matrix(3, 3, 6, local);
        AdamConfig cfg;
        cfg.beta1 = 0.0;
        cfg.beta2 = 0.0;
        cfg.psi = 1e-12;
        lfa::ParamMoments mo = lfa::ParamMoments::zeros(3, 3, 2);
        lfa::adam_epoch(s, m, cfg, 0.0, mo, 5);
        // every parameter that saw exactly one entry moved by +-alpha
        for (int u = 0; u < 3; ++u) {
            if (m.row_entries(u).size() != 1) continue;
            const double moved = std::abs(s.b(u) - before.b(u));
            CHECK(std::abs(moved - cfg.alpha) < 1e-9);
        }
    }
    SECTION("second moments never go negative") {
        lfa::Rng local(13);
        LatentState s = oracle::random_state(5, 5, 3, local);
        const HdiMatrix m = oracle::random_matrix(5, 5, 15, local);
        lfa::ParamMoments mo = lfa::ParamMoments::zeros(5, 5, 3);
        for (int epoch = 0; epoch < 5; ++epoch)
            lfa::adam_epoch(s, m, {}, 0.05, mo, std::uint64_t(epoch));
        CHECK(mo.vP.minCoeff() >= 0.0);
        CHECK(mo.vQ.minCoeff() >= 0.0);
        CHECK(mo.vb.minCoeff() >= 0.0);
        CHECK(mo.vc.minCoeff() >= 0.0);
        CHECK(mo.step_count == 5);
    }
}

TEST_CASE("pretrain") {
    lfa::SynthSpec spec;
    spec.n_rows = 40;
    spec.n_cols = 50;
    spec.rank = 2;
    spec.density = 0.3;
    spec.noise_sigma = 0.0;
    spec.seed = 5;
    const lfa::SynthResult data = lfa::synth_lowrank(spec);
    const lfa::DataSplit split = lfa::split(data.matrix, {0.7, 0.1, 0.2}, 17);
    const lfa::Hyper hyper{0.005, 0.05, 2, 0.01};

    SECTION("zero epochs returns the initial state with empty history") {
        const LatentState init = lfa::init_state(40, 50, 2, 0.01, 23);
        const lfa::PretrainResult r =
            lfa::pretrain(init, split, lfa::TrainMethod::Sgd, hyper, {},
                          {0, 3, 1e-4}, 99);
        CHECK(r.history.empty());
        CHECK(r.best_epoch == 0);
        CHECK(r.state == init);
        CHECK(r.best_val_rmse == lfa::rmse(init, split.validation));
    }
    SECTION("training improves validation over the initial state") {
        const LatentState init = lfa::init_state(40, 50, 2, 0.01, 23);
        const double val0 = lfa::rmse(init, split.validation);
        const lfa::PretrainResult r =
            lfa::pretrain(init, split, lfa::TrainMethod::Sgd, hyper, {},
                          {60, 3, 1e-4}, 99);
        REQUIRE_FALSE(r.history.empty());
        CHECK(r.best_val_rmse < val0);
        CHECK(lfa::rmse(r.state, split.validation) ==
              Catch::Approx(r.best_val_rmse));
        // recorded history is consistent
        for (std::size_t i = 0; i < r.history.size(); ++i)
            CHECK(r.history[i].epoch == int(i) + 1);
    }
    SECTION("adam also improves validation") {
        const LatentState init = lfa::init_state(40, 50, 2, 0.01, 23);
        const double val0 = lfa::rmse(init, split.validation);
        AdamConfig cfg;
        cfg.alpha = 0.01;
        const lfa::PretrainResult r =
            lfa::pretrain(init, split, lfa::TrainMethod::Adam, hyper, cfg,
                          {60, 3, 1e-4}, 99);
        CHECK(r.best_val_rmse < val0);
    }
    SECTION("non-improving validation stops after patience epochs") {
        const LatentState init = lfa::init_state(40, 50, 2, 0.01, 23);
        // min_delta so large nothing ever counts as improving
        const lfa::PretrainResult r =
            lfa::pretrain(init, split, lfa::TrainMethod::Sgd, hyper, {},
                          {60, 2, 100.0}, 99);
        CHECK(r.history.size() == 2);
    }
    SECTION("worsening validation hands back the incoming state") {
        // training set pushes row 0's bias far up; the validation entry wants
        // the original small prediction, so every epoch makes validation worse
        LatentState init = lfa::init_state(1, 2, 1, 0.01, 23);
        lfa::DataSplit rigged;
        rigged.train = HdiMatrix(1, 2, {{0, 0, 10.0}});
        rigged.validation =
            HdiMatrix(1, 2, {{0, 1, lfa::predict(init, 0, 1)}});
        rigged.test = rigged.validation;
        const lfa::PretrainResult r =
            lfa::pretrain(init, rigged, lfa::TrainMethod::Sgd,
                          {0.0, 0.1, 1, 0.01}, {}, {20, 2, 1e-6}, 99);
        CHECK(r.best_epoch == 0);
        CHECK(r.state == init);
        for (std::size_t i = 1; i < r.history.size(); ++i)
            CHECK(r.history[i].val_rmse >= r.history[i - 1].val_rmse);
    }
    SECTION("empty validation set is an error") {
        lfa::DataSplit bad;
        bad.train = data.matrix;
        bad.validation = HdiMatrix(40, 50, {});
        bad.test = HdiMatrix(40, 50, {});
        const LatentState init = lfa::init_state(40, 50, 2, 0.01, 23);
        CHECK_THROWS_AS(lfa::pretrain(init, bad, lfa::TrainMethod::Sgd, hyper,
                                      {}, {5, 3, 1e-4}, 99),
                        lfa::EvalError);
    }
    SECTION("same master seed reproduces the run bit-exactly") {
        const LatentState init = lfa::init_state(40, 50, 2, 0.01, 23);
        const lfa::PretrainResult a = lfa::pretrain(
            init, split, lfa::TrainMethod::Sgd, hyper, {}, {10, 3, 1e-4}, 99);
        const lfa::PretrainResult b = lfa::pretrain(
            init, split, lfa::TrainMethod::Sgd, hyper, {}, {10, 3, 1e-4}, 99);
        CHECK(a.state == b.state);
        REQUIRE(a.history.size() == b.history.size());
        for (std::size_t i = 0; i < a.history.size(); ++i) {
            CHECK(a.history[i].train_rmse == b.history[i].train_rmse);
            CHECK(a.history[i].val_rmse == b.history[i].val_rmse);
        }
    }
}
