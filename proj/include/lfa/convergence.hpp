#pragma once

#include <limits>
#include <vector>

#include "lfa/errors.hpp"

namespace lfa {

enum class Convergence { Continue, Stop };

/// Early-stopping rule over a metric history (lower is better). An entry
/// improves when it beats the best value seen before it by at least min_delta;
/// training stops once `patience` consecutive trailing entries fail to
/// improve. Pure function of the history so callers can replay it.
inline Convergence convergence_check(const std::vector<double>& history,
                                     int patience, double min_delta) {
    if (patience < 1) throw ConfigError("convergence: patience must be >= 1");
    if (min_delta < 0.0)
        throw ConfigError("convergence: min_delta must be >= 0");
    double best = std::numeric_limits<double>::infinity();
    int stale = 0;
    for (const double v : history) {
        // best starts at +inf, so any finite first entry improves
        if (best - v >= min_delta) {
            stale = 0;
        } else {
            ++stale;
        }
        if (v < best) best = v;
    }
    return stale >= patience ? Convergence::Stop : Convergence::Continue;
}

}  // namespace lfa
