#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

#include "lfa/errors.hpp"
#include "lfa/random.hpp"
#include "lfa/ratings.hpp"

namespace lfa {

/// Row-major so that the per-entity rows the optimizers touch are contiguous.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                             Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

/// The latent factor set {P, Q, b, c}: rank-F factor matrices for the row and
/// column entity sets plus per-entity linear biases.
struct LatentState {
    Matrix P;  ///< n_rows x F
    Matrix Q;  ///< n_cols x F
    Vector b;  ///< length n_rows
    Vector c;  ///< length n_cols

    int n_rows() const { return int(P.rows()); }
    int n_cols() const { return int(Q.rows()); }
    int rank() const { return int(P.cols()); }

    bool all_finite() const {
        return P.allFinite() && Q.allFinite() && b.allFinite() && c.allFinite();
    }

    friend bool operator==(const LatentState& a, const LatentState& b) {
        return a.P == b.P && a.Q == b.Q && a.b == b.b && a.c == b.c;
    }
};

/// Core model hyper-parameters shared by every trainer.
struct Hyper {
    double lambda = 0.02;     ///< L2 regularization constant
    double eta = 0.01;        ///< learning rate (gradient trainers only)
    int f = 20;               ///< latent dimension count
    double init_range = 0.01; ///< half-width of the uniform factor init

    void validate() const {
        if (lambda < 0.0) throw ConfigError("hyper: lambda must be >= 0");
        if (!(eta > 0.0)) throw ConfigError("hyper: eta must be > 0");
        if (f < 1) throw ConfigError("hyper: f must be >= 1");
        if (!(init_range > 0.0))
            throw ConfigError("hyper: init_range must be > 0");
    }
};

/// Factors drawn uniformly from (0, init_range], biases start at zero.
inline LatentState init_state(int n_rows, int n_cols, int f, double init_range,
                              std::uint64_t seed) {
    if (f < 1) throw ConfigError("init_state: f must be >= 1");
    if (!(init_range > 0.0))
        throw ConfigError("init_state: init_range must be > 0");
    Rng rng(seed);
    LatentState s;
    s.P.resize(n_rows, f);
    for (int u = 0; u < n_rows; ++u)
        for (int k = 0; k < f; ++k)
            s.P(u, k) = init_range * (1.0 - rng.uniform());
    s.Q.resize(n_cols, f);
    for (int i = 0; i < n_cols; ++i)
        for (int k = 0; k < f; ++k)
            s.Q(i, k) = init_range * (1.0 - rng.uniform());
    s.b = Vector::Zero(n_rows);
    s.c = Vector::Zero(n_cols);
    return s;
}

namespace detail {

inline double predict_unchecked(const LatentState& s, int u, int i) {
    return s.P.row(u).dot(s.Q.row(i)) + s.b(u) + s.c(i);
}

}  // namespace detail

/// Predicted value for cell (u, i): p_u . q_i + b_u + c_i.
inline double predict(const LatentState& s, int u, int i) {
    if (u < 0 || u >= s.n_rows() || i < 0 || i >= s.n_cols())
        throw std::out_of_range("predict: index (" + std::to_string(u) + ", " +
                                std::to_string(i) + ") outside " +
                                std::to_string(s.n_rows()) + "x" +
                                std::to_string(s.n_cols()));
    return detail::predict_unchecked(s, u, i);
}

/// Regularized squared-error objective over the known entries. The L2 term
/// runs over entries, so each entity's factors are penalized once per known
/// rating they participate in (instance-frequency-weighted form).
inline double objective(const LatentState& s, const HdiMatrix& m,
                        double lambda) {
    double residual = 0.0;
    double reg = 0.0;
    for (const RatingTriple& t : m.entries()) {
        const double e = t.z - detail::predict_unchecked(s, t.u, t.i);
        residual += e * e;
        reg += s.P.row(t.u).squaredNorm() + s.Q.row(t.i).squaredNorm() +
               s.b(t.u) * s.b(t.u) + s.c(t.i) * s.c(t.i);
    }
    return 0.5 * residual + 0.5 * lambda * reg;
}

/// Root mean squared error over a nonempty entry set.
inline double rmse(const LatentState& s, const HdiMatrix& m) {
    if (m.size() == 0) throw EvalError("rmse: empty entry set");
    double acc = 0.0;
    for (const RatingTriple& t : m.entries()) {
        const double e = t.z - detail::predict_unchecked(s, t.u, t.i);
        acc += e * e;
    }
    return std::sqrt(acc / double(m.size()));
}

/// A refinement group: one row's [p_u, b_u] or one column's [q_i, c_i].
enum class GroupKind { Row, Col };

struct GroupRef {
    GroupKind kind = GroupKind::Row;
    int index = 0;
};

/// The (F+1)-vector [factors..., bias] for a group, read from the state.
inline Vector group_vector(const LatentState& s, GroupRef g) {
    const int f = s.rank();
    Vector v(f + 1);
    if (g.kind == GroupKind::Row) {
        v.head(f) = s.P.row(g.index).transpose();
        v(f) = s.b(g.index);
    } else {
        v.head(f) = s.Q.row(g.index).transpose();
        v(f) = s.c(g.index);
    }
    return v;
}

inline void set_group_vector(LatentState& s, GroupRef g, const Vector& v) {
    const int f = s.rank();
    if (g.kind == GroupKind::Row) {
        s.P.row(g.index) = v.head(f).transpose();
        s.b(g.index) = v(f);
    } else {
        s.Q.row(g.index) = v.head(f).transpose();
        s.c(g.index) = v(f);
    }
}

/// Fitness of one group's candidate vector with the rest of the state frozen:
/// half the squared error over the group's known entries plus
/// (lambda/2) * ||candidate||^2. Construction fails on a group with no known
/// entries; refining such a group is meaningless and callers must skip it.
class GroupFitness {
public:
    GroupFitness(GroupRef group, const LatentState& state, const HdiMatrix& m,
                 double lambda)
        : group_(group), state_(&state), matrix_(&m), lambda_(lambda),
          entry_ids_(group.kind == GroupKind::Row
                         ? &m.row_entries(group.index)
                         : &m.col_entries(group.index)) {
        if (entry_ids_->empty())
            throw EmptyGroupError(
                "group_fitness: no known entries for " +
                std::string(group.kind == GroupKind::Row ? "row " : "column ") +
                std::to_string(group.index));
    }

    double operator()(const Vector& candidate) const {
        const int f = state_->rank();
        double residual = 0.0;
        if (group_.kind == GroupKind::Row) {
            for (const int e : *entry_ids_) {
                const RatingTriple& t = matrix_->entry(e);
                const double pred = candidate.head(f).dot(
                                        state_->Q.row(t.i).transpose()) +
                                    candidate(f) + state_->c(t.i);
                const double err = t.z - pred;
                residual += err * err;
            }
        } else {
            for (const int e : *entry_ids_) {
                const RatingTriple& t = matrix_->entry(e);
                const double pred = candidate.head(f).dot(
                                        state_->P.row(t.u).transpose()) +
                                    candidate(f) + state_->b(t.u);
                const double err = t.z - pred;
                residual += err * err;
            }
        }
        return 0.5 * residual + 0.5 * lambda_ * candidate.squaredNorm();
    }

    GroupRef group() const { return group_; }
    std::size_t entry_count() const { return entry_ids_->size(); }

private:
    GroupRef group_;
    const LatentState* state_;
    const HdiMatrix* matrix_;
    double lambda_;
    const std::vector<int>* entry_ids_;
};

/// One-shot group fitness evaluation; throws EmptyGroupError on a group with
/// no known entries.
inline double group_fitness(const Vector& candidate, GroupRef group,
                            const LatentState& state, const HdiMatrix& m,
                            double lambda) {
    return GroupFitness(group, state, m, lambda)(candidate);
}

// --- binary snapshot -------------------------------------------------------
// Layout: magic, version, n_rows, n_cols, f, then P (row-major), Q (row-major),
// b, c as raw doubles. Round-trips bit-exactly.

namespace detail {

constexpr std::uint32_t state_magic = 0x4c464153;  // "SALF"
constexpr std::uint32_t state_version = 1;

template <typename T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::istream& is, T& v) {
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
}

}  // namespace detail

inline void save_state(const LatentState& s, std::ostream& os) {
    detail::write_pod(os, detail::state_magic);
    detail::write_pod(os, detail::state_version);
    detail::write_pod(os, std::uint64_t(s.n_rows()));
    detail::write_pod(os, std::uint64_t(s.n_cols()));
    detail::write_pod(os, std::uint64_t(s.rank()));
    os.write(reinterpret_cast<const char*>(s.P.data()),
             std::streamsize(sizeof(double) * std::size_t(s.P.size())));
    os.write(reinterpret_cast<const char*>(s.Q.data()),
             std::streamsize(sizeof(double) * std::size_t(s.Q.size())));
    os.write(reinterpret_cast<const char*>(s.b.data()),
             std::streamsize(sizeof(double) * std::size_t(s.b.size())));
    os.write(reinterpret_cast<const char*>(s.c.data()),
             std::streamsize(sizeof(double) * std::size_t(s.c.size())));
    if (!os) throw IoError("save_state: write failed");
}

inline LatentState load_state(std::istream& is) {
    std::uint32_t magic = 0, version = 0;
    std::uint64_t rows = 0, cols = 0, f = 0;
    detail::read_pod(is, magic);
    detail::read_pod(is, version);
    if (!is || magic != detail::state_magic)
        throw IoError("load_state: not a state snapshot");
    if (version != detail::state_version)
        throw IoError("load_state: unsupported snapshot version " +
                      std::to_string(version));
    detail::read_pod(is, rows);
    detail::read_pod(is, cols);
    detail::read_pod(is, f);
    LatentState s;
    s.P.resize(Eigen::Index(rows), Eigen::Index(f));
    s.Q.resize(Eigen::Index(cols), Eigen::Index(f));
    s.b.resize(Eigen::Index(rows));
    s.c.resize(Eigen::Index(cols));
    is.read(reinterpret_cast<char*>(s.P.data()),
            std::streamsize(sizeof(double) * std::size_t(s.P.size())));
    is.read(reinterpret_cast<char*>(s.Q.data()),
            std::streamsize(sizeof(double) * std::size_t(s.Q.size())));
    is.read(reinterpret_cast<char*>(s.b.data()),
            std::streamsize(sizeof(double) * std::size_t(s.b.size())));
    is.read(reinterpret_cast<char*>(s.c.data()),
            std::streamsize(sizeof(double) * std::size_t(s.c.size())));
    if (!is) throw IoError("load_state: truncated snapshot");
    return s;
}

inline void save_state_file(const LatentState& s, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    save_state(s, os);
}

inline LatentState load_state_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open for reading: " + path);
    return load_state(is);
}

}  // namespace lfa
