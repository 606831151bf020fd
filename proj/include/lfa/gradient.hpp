#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "lfa/convergence.hpp"
#include "lfa/errors.hpp"
#include "lfa/model.hpp"
#include "lfa/random.hpp"
#include "lfa/ratings.hpp"

namespace lfa {

/// Adam step-rule constants, shared by the gradient pre-trainer and the
/// swarm refiner.
struct AdamConfig {
    double beta1 = 0.9;    ///< first-moment decay
    double beta2 = 0.999;  ///< second-moment decay
    double alpha = 0.001;  ///< step size
    double psi = 1e-8;     ///< denominator guard
    /// The default correction divides moments by fixed (1 - beta). Enabling
    /// this switches to the conventional (1 - beta^tau) schedule.
    bool power_correction = false;

    void validate() const {
        if (beta1 < 0.0 || beta1 >= 1.0)
            throw ConfigError("adam: beta1 must lie in [0, 1)");
        if (beta2 < 0.0 || beta2 >= 1.0)
            throw ConfigError("adam: beta2 must lie in [0, 1)");
        if (!(alpha > 0.0)) throw ConfigError("adam: alpha must be > 0");
        if (!(psi > 0.0)) throw ConfigError("adam: psi must be > 0");
    }
};

/// Moment-correction divisor: fixed (1 - beta) by default, (1 - beta^tau)
/// when the power schedule is enabled.
inline double adam_correction(double beta, bool power_correction, long tau) {
    return power_correction ? 1.0 - std::pow(beta, double(tau)) : 1.0 - beta;
}

/// Applies one Adam update to a scalar parameter's moment pair and returns
/// the signed increment to add to the parameter. `g` follows the descent
/// convention (positive gradient pushes the parameter down).
inline double adam_param_step(double& m, double& v, double g,
                              const AdamConfig& cfg, double c1, double c2) {
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
    const double m_hat = m / c1;
    const double v_hat = v / c2;
    return -cfg.alpha * m_hat / (std::sqrt(v_hat) + cfg.psi);
}

/// First/second moment accumulators for every trained parameter of a
/// LatentState, plus the shared step counter (one tick per epoch).
struct ParamMoments {
    Matrix mP, vP;
    Matrix mQ, vQ;
    Vector mb, vb;
    Vector mc, vc;
    long step_count = 0;

    static ParamMoments zeros(int n_rows, int n_cols, int f) {
        ParamMoments pm;
        pm.mP = Matrix::Zero(n_rows, f);
        pm.vP = Matrix::Zero(n_rows, f);
        pm.mQ = Matrix::Zero(n_cols, f);
        pm.vQ = Matrix::Zero(n_cols, f);
        pm.mb = Vector::Zero(n_rows);
        pm.vb = Vector::Zero(n_rows);
        pm.mc = Vector::Zero(n_cols);
        pm.vc = Vector::Zero(n_cols);
        return pm;
    }
};

/// Gradient of one entry's term of the training objective with respect to
/// the entry's own parameters (descent convention): for residual
/// e = z - prediction,
///   d/dp = -e q + lambda p,   d/dq = -e p + lambda q,
///   d/db = -e + lambda b,     d/dc = -e + lambda c.
struct EntryGradient {
    Vector gp, gq;
    double gb = 0.0, gc = 0.0;
};

inline EntryGradient entry_gradient(const LatentState& s,
                                    const RatingTriple& t, double lambda) {
    const double e = t.z - detail::predict_unchecked(s, t.u, t.i);
    EntryGradient g;
    g.gp = (-e) * s.Q.row(t.i).transpose() + lambda * s.P.row(t.u).transpose();
    g.gq = (-e) * s.P.row(t.u).transpose() + lambda * s.Q.row(t.i).transpose();
    g.gb = -e + lambda * s.b(t.u);
    g.gc = -e + lambda * s.c(t.i);
    return g;
}

/// The per-entry loss entry_gradient differentiates; exposed for
/// finite-difference verification.
inline double entry_loss(const LatentState& s, const RatingTriple& t,
                         double lambda) {
    const double e = t.z - detail::predict_unchecked(s, t.u, t.i);
    return 0.5 * e * e +
           0.5 * lambda *
               (s.P.row(t.u).squaredNorm() + s.Q.row(t.i).squaredNorm() +
                s.b(t.u) * s.b(t.u) + s.c(t.i) * s.c(t.i));
}

namespace detail {

inline std::vector<int> shuffled_order(int n, std::uint64_t seed) {
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    shuffle(order, rng);
    return order;
}

inline void check_entry_finite(const LatentState& s, const RatingTriple& t,
                               const char* where) {
    if (!s.P.row(t.u).allFinite() || !s.Q.row(t.i).allFinite() ||
        !std::isfinite(s.b(t.u)) || !std::isfinite(s.c(t.i)))
        throw DivergenceError(std::string(where) +
                              ": non-finite parameter after entry (" +
                              std::to_string(t.u) + ", " +
                              std::to_string(t.i) + ")");
}

}  // namespace detail

/// One stochastic gradient epoch over the training entries in shuffled
/// order. Within one entry, q's update uses p's pre-update value so both
/// factors descend the gradient of the same shared residual.
inline void sgd_epoch(LatentState& s, const HdiMatrix& train, double eta,
                      double lambda, std::uint64_t shuffle_seed) {
    if (!(eta >= 0.0)) throw ConfigError("sgd_epoch: eta must be >= 0");
    const std::vector<int> order =
        detail::shuffled_order(int(train.size()), shuffle_seed);
    for (const int id : order) {
        const RatingTriple& t = train.entry(id);
        const double e = t.z - detail::predict_unchecked(s, t.u, t.i);
        const RowVector p_old = s.P.row(t.u);
        s.P.row(t.u) += eta * (e * s.Q.row(t.i) - lambda * s.P.row(t.u));
        s.Q.row(t.i) += eta * (e * p_old - lambda * s.Q.row(t.i));
        s.b(t.u) += eta * (e - lambda * s.b(t.u));
        s.c(t.i) += eta * (e - lambda * s.c(t.i));
        detail::check_entry_finite(s, t, "sgd_epoch");
    }
}

/// One per-parameter Adam epoch over the training entries in shuffled order.
/// Gradients are the same per-entry directions sgd_epoch descends; both
/// factor gradients use pre-update values. The shared step counter advances
/// once per epoch.
inline void adam_epoch(LatentState& s, const HdiMatrix& train,
                       const AdamConfig& cfg, double lambda,
                       ParamMoments& moments, std::uint64_t shuffle_seed) {
    cfg.validate();
    moments.step_count += 1;
    const double c1 =
        adam_correction(cfg.beta1, cfg.power_correction, moments.step_count);
    const double c2 =
        adam_correction(cfg.beta2, cfg.power_correction, moments.step_count);
    const int f = s.rank();
    const std::vector<int> order =
        detail::shuffled_order(int(train.size()), shuffle_seed);
    for (const int id : order) {
        const RatingTriple& t = train.entry(id);
        const double e = t.z - detail::predict_unchecked(s, t.u, t.i);
        const RowVector p_old = s.P.row(t.u);
        const RowVector q_old = s.Q.row(t.i);
        for (int k = 0; k < f; ++k) {
            const double gp = -e * q_old(k) + lambda * p_old(k);
            s.P(t.u, k) += adam_param_step(moments.mP(t.u, k),
                                           moments.vP(t.u, k), gp, cfg, c1, c2);
            const double gq = -e * p_old(k) + lambda * q_old(k);
            s.Q(t.i, k) += adam_param_step(moments.mQ(t.i, k),
                                           moments.vQ(t.i, k), gq, cfg, c1, c2);
        }
        const double gb = -e + lambda * s.b(t.u);
        s.b(t.u) +=
            adam_param_step(moments.mb(t.u), moments.vb(t.u), gb, cfg, c1, c2);
        const double gc = -e + lambda * s.c(t.i);
        s.c(t.i) +=
            adam_param_step(moments.mc(t.i), moments.vc(t.i), gc, cfg, c1, c2);
        detail::check_entry_finite(s, t, "adam_epoch");
    }
}

enum class TrainMethod { Sgd, Adam };

struct StoppingRule {
    int max_epochs = 200;
    int patience = 3;
    double min_delta = 1e-4;

    void validate() const {
        if (max_epochs < 0)
            throw ConfigError("stopping: max_epochs must be >= 0");
        if (patience < 1) throw ConfigError("stopping: patience must be >= 1");
        if (min_delta < 0.0)
            throw ConfigError("stopping: min_delta must be >= 0");
    }
};

struct EpochRecord {
    int epoch = 0;  ///< 1-based
    double train_rmse = 0.0;
    double val_rmse = 0.0;
    double seconds = 0.0;
};

struct PretrainResult {
    LatentState state;  ///< snapshot from the best validation epoch
    std::vector<EpochRecord> history;
    int best_epoch = 0;  ///< 0 means the incoming state was never beaten
    double best_val_rmse = 0.0;
};

/// Runs gradient epochs with validation-RMSE early stopping and returns the
/// best-validation snapshot. The incoming state is the epoch-0 candidate, so
/// strictly worsening training hands it back unchanged.
inline PretrainResult pretrain(LatentState state, const DataSplit& split,
                               TrainMethod method, const Hyper& hyper,
                               const AdamConfig& adam_cfg,
                               const StoppingRule& stop,
                               std::uint64_t master_seed) {
    hyper.validate();
    stop.validate();
    if (method == TrainMethod::Adam) adam_cfg.validate();
    if (split.validation.size() == 0)
        throw EvalError("pretrain: validation set is empty");

    PretrainResult out;
    out.best_epoch = 0;
    out.best_val_rmse = rmse(state, split.validation);
    out.state = state;

    ParamMoments moments =
        method == TrainMethod::Adam
            ? ParamMoments::zeros(state.n_rows(), state.n_cols(), state.rank())
            : ParamMoments{};

    std::vector<double> val_series{out.best_val_rmse};
    for (int epoch = 1; epoch <= stop.max_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const std::uint64_t epoch_seed =
            SeedFanout{master_seed}.derive(seed_stream_epoch,
                                           std::uint64_t(epoch));
        if (method == TrainMethod::Sgd)
            sgd_epoch(state, split.train, hyper.eta, hyper.lambda, epoch_seed);
        else
            adam_epoch(state, split.train, adam_cfg, hyper.lambda, moments,
                       epoch_seed);
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_rmse = rmse(state, split.train);
        rec.val_rmse = rmse(state, split.validation);
        rec.seconds = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
        out.history.push_back(rec);
        if (rec.val_rmse < out.best_val_rmse) {
            out.best_val_rmse = rec.val_rmse;
            out.best_epoch = epoch;
            out.state = state;
        }
        val_series.push_back(rec.val_rmse);
        if (convergence_check(val_series, stop.patience, stop.min_delta) ==
            Convergence::Stop)
            break;
    }
    return out;
}

}  // namespace lfa
