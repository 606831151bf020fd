#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "lfa/errors.hpp"
#include "lfa/random.hpp"
#include "lfa/ratings.hpp"

namespace lfa {

/// Parameters of the synthetic low-rank generator. The scalar spec plus the
/// seed regenerate the dataset bit-exactly, so this is what gets persisted.
struct SynthSpec {
    int n_rows = 200;
    int n_cols = 300;
    int rank = 5;
    double density = 0.08;
    double noise_sigma = 0.1;
    std::optional<std::pair<double, double>> clip;
    std::uint64_t seed = 1;

    void validate() const {
        if (n_rows < 1 || n_cols < 1) throw ConfigError("synth: empty matrix");
        if (rank < 1) throw ConfigError("synth: rank must be >= 1");
        if (!(density > 0.0) || density > 1.0)
            throw ConfigError("synth: density must be in (0, 1]");
        if (noise_sigma < 0.0) throw ConfigError("synth: negative noise sigma");
        if (clip && clip->first > clip->second)
            throw ConfigError("synth: clip range inverted");
    }

    friend bool operator==(const SynthSpec& a, const SynthSpec& b) {
        return a.n_rows == b.n_rows && a.n_cols == b.n_cols &&
               a.rank == b.rank && a.density == b.density &&
               a.noise_sigma == b.noise_sigma && a.clip == b.clip &&
               a.seed == b.seed;
    }
};

inline void to_json(nlohmann::json& j, const SynthSpec& s) {
    j = nlohmann::json{{"n_rows", s.n_rows},       {"n_cols", s.n_cols},
                       {"rank", s.rank},           {"density", s.density},
                       {"noise_sigma", s.noise_sigma}, {"seed", s.seed}};
    if (s.clip)
        j["clip"] = {s.clip->first, s.clip->second};
    else
        j["clip"] = nullptr;
}

inline void from_json(const nlohmann::json& j, SynthSpec& s) {
    s.n_rows = j.value("n_rows", s.n_rows);
    s.n_cols = j.value("n_cols", s.n_cols);
    s.rank = j.value("rank", s.rank);
    s.density = j.value("density", s.density);
    s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
    s.seed = j.value("seed", s.seed);
    s.clip.reset();
    if (j.contains("clip") && !j.at("clip").is_null()) {
        const auto& c = j.at("clip");
        s.clip = std::make_pair(c.at(0).get<double>(), c.at(1).get<double>());
    }
}

/// Hidden generator parameters, returned so tests can compute oracle errors
/// against the noiseless ground truth.
struct SynthTruth {
    Eigen::MatrixXd P;
    Eigen::MatrixXd Q;
    Eigen::VectorXd b;
    Eigen::VectorXd c;

    double value(int u, int i) const {
        return P.row(u).dot(Q.row(i)) + b(u) + c(i);
    }
};

struct SynthResult {
    HdiMatrix matrix;
    SynthTruth truth;
};

/// Generates an observed matrix from hidden uniform factors in
/// [0, 1/sqrt(rank)] and hidden biases in [0, 0.1]: samples
/// ceil(density * n_rows * n_cols) distinct cells uniformly and observes
/// truth + Gaussian(0, noise_sigma), optionally clipped.
inline SynthResult synth_lowrank(const SynthSpec& spec) {
    spec.validate();
    const std::int64_t total =
        std::int64_t(spec.n_rows) * std::int64_t(spec.n_cols);
    if (spec.density * double(total) < 1.0)
        throw GenerationError("synth: density * n_rows * n_cols < 1");
    const std::int64_t n_cells =
        std::int64_t(std::ceil(spec.density * double(total)));

    Rng rng(spec.seed);
    SynthTruth truth;
    const double factor_max = 1.0 / std::sqrt(double(spec.rank));
    truth.P.resize(spec.n_rows, spec.rank);
    for (int u = 0; u < spec.n_rows; ++u)
        for (int f = 0; f < spec.rank; ++f)
            truth.P(u, f) = rng.uniform(0.0, factor_max);
    truth.Q.resize(spec.n_cols, spec.rank);
    for (int i = 0; i < spec.n_cols; ++i)
        for (int f = 0; f < spec.rank; ++f)
            truth.Q(i, f) = rng.uniform(0.0, factor_max);
    truth.b.resize(spec.n_rows);
    for (int u = 0; u < spec.n_rows; ++u) truth.b(u) = rng.uniform(0.0, 0.1);
    truth.c.resize(spec.n_cols);
    for (int i = 0; i < spec.n_cols; ++i) truth.c(i) = rng.uniform(0.0, 0.1);

    // Partial Fisher-Yates over the flat cell ids picks n_cells distinct cells.
    std::vector<std::int64_t> cells(static_cast<std::size_t>(total));
    std::iota(cells.begin(), cells.end(), std::int64_t(0));
    for (std::int64_t k = 0; k < n_cells; ++k) {
        const std::int64_t j =
            k + std::int64_t(rng.below(std::size_t(total - k)));
        std::swap(cells[std::size_t(k)], cells[std::size_t(j)]);
    }
    cells.resize(std::size_t(n_cells));
    std::sort(cells.begin(), cells.end());

    std::vector<RatingTriple> triples;
    triples.reserve(cells.size());
    for (const std::int64_t cell : cells) {
        const int u = int(cell / spec.n_cols);
        const int i = int(cell % spec.n_cols);
        double z = truth.value(u, i);
        if (spec.noise_sigma > 0.0) z += spec.noise_sigma * rng.normal();
        if (spec.clip) z = std::clamp(z, spec.clip->first, spec.clip->second);
        triples.push_back({u, i, z});
    }

    SynthResult out;
    out.matrix = HdiMatrix(spec.n_rows, spec.n_cols, std::move(triples));
    out.truth = std::move(truth);
    return out;
}

}  // namespace lfa
