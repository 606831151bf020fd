#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "lfa/errors.hpp"
#include "lfa/random.hpp"

namespace lfa {

/// One known entry: row entity u, column entity i, observed value z.
/// Indices are dense, 0-based.
struct RatingTriple {
    int u = 0;
    int i = 0;
    double z = 0.0;

    friend bool operator==(const RatingTriple& a, const RatingTriple& b) {
        return a.u == b.u && a.i == b.i && a.z == b.z;
    }
};

/// Sparse store of the known entries of a high-dimensional incomplete matrix,
/// with row and column adjacency. Immutable after construction; the unknown
/// entry set is implicit as the complement.
class HdiMatrix {
public:
    HdiMatrix() = default;

    HdiMatrix(int n_rows, int n_cols, std::vector<RatingTriple> entries)
        : n_rows_(n_rows), n_cols_(n_cols), entries_(std::move(entries)) {
        if (n_rows_ < 0 || n_cols_ < 0)
            throw ConfigError("HdiMatrix: negative dimensions");
        row_index_.resize(n_rows_);
        col_index_.resize(n_cols_);
        std::unordered_set<std::uint64_t> seen;
        seen.reserve(entries_.size() * 2);
        for (int e = 0; e < int(entries_.size()); ++e) {
            const RatingTriple& t = entries_[e];
            if (t.u < 0 || t.u >= n_rows_ || t.i < 0 || t.i >= n_cols_)
                throw ConfigError("HdiMatrix: entry (" + std::to_string(t.u) +
                                  ", " + std::to_string(t.i) +
                                  ") outside " + std::to_string(n_rows_) + "x" +
                                  std::to_string(n_cols_));
            const std::uint64_t key =
                std::uint64_t(t.u) * std::uint64_t(n_cols_ > 0 ? n_cols_ : 1) +
                std::uint64_t(t.i);
            if (!seen.insert(key).second)
                throw DuplicateEntryError("HdiMatrix: duplicate entry (" +
                                          std::to_string(t.u) + ", " +
                                          std::to_string(t.i) + ")");
            row_index_[t.u].push_back(e);
            col_index_[t.i].push_back(e);
        }
    }

    int n_rows() const { return n_rows_; }
    int n_cols() const { return n_cols_; }
    std::size_t size() const { return entries_.size(); }
    const std::vector<RatingTriple>& entries() const { return entries_; }
    const RatingTriple& entry(int e) const { return entries_[std::size_t(e)]; }

    /// Entry ids of row u's known entries.
    const std::vector<int>& row_entries(int u) const {
        return row_index_[std::size_t(u)];
    }
    /// Entry ids of column i's known entries.
    const std::vector<int>& col_entries(int i) const {
        return col_index_[std::size_t(i)];
    }

private:
    int n_rows_ = 0;
    int n_cols_ = 0;
    std::vector<RatingTriple> entries_;
    std::vector<std::vector<int>> row_index_;
    std::vector<std::vector<int>> col_index_;
};

/// Requested split proportions; must be positive and sum to 1.
struct Fractions {
    double train = 0.7;
    double validation = 0.1;
    double test = 0.2;
};

/// Disjoint train / validation / test partition of one source matrix.
struct DataSplit {
    HdiMatrix train;
    HdiMatrix validation;
    HdiMatrix test;
    std::uint64_t seed = 0;
};

/// Uniformly shuffles the entry list and partitions it. Part sizes follow
/// largest-remainder apportionment, so each part is within one entry of its
/// exact fraction and the three sizes sum to the source size.
inline DataSplit split(const HdiMatrix& matrix, const Fractions& fractions,
                       std::uint64_t seed) {
    const double sum =
        fractions.train + fractions.validation + fractions.test;
    if (fractions.train <= 0 || fractions.validation <= 0 ||
        fractions.test <= 0 || std::abs(sum - 1.0) > 1e-9)
        throw ConfigError("split: fractions must be positive and sum to 1");
    const std::size_t n = matrix.size();
    if (n < 3) throw SplitError("split: need at least 3 entries, have " +
                                std::to_string(n));

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    shuffle(order, rng);

    const std::array<double, 3> f = {fractions.train, fractions.validation,
                                     fractions.test};
    std::array<std::size_t, 3> count;
    std::array<double, 3> frac;
    std::size_t assigned = 0;
    for (int k = 0; k < 3; ++k) {
        const double exact = f[std::size_t(k)] * double(n);
        count[std::size_t(k)] = std::size_t(std::floor(exact));
        frac[std::size_t(k)] = exact - std::floor(exact);
        assigned += count[std::size_t(k)];
    }
    while (assigned < n) {  // hand leftovers to the largest remainders
        int best = 0;
        for (int k = 1; k < 3; ++k)
            if (frac[std::size_t(k)] > frac[std::size_t(best)]) best = k;
        ++count[std::size_t(best)];
        frac[std::size_t(best)] = -1.0;
        ++assigned;
    }

    std::array<std::vector<RatingTriple>, 3> parts;
    std::size_t at = 0;
    for (int k = 0; k < 3; ++k) {
        parts[std::size_t(k)].reserve(count[std::size_t(k)]);
        for (std::size_t j = 0; j < count[std::size_t(k)]; ++j)
            parts[std::size_t(k)].push_back(
                matrix.entry(order[at++]));
    }

    DataSplit out;
    out.train = HdiMatrix(matrix.n_rows(), matrix.n_cols(), std::move(parts[0]));
    out.validation =
        HdiMatrix(matrix.n_rows(), matrix.n_cols(), std::move(parts[1]));
    out.test = HdiMatrix(matrix.n_rows(), matrix.n_cols(), std::move(parts[2]));
    out.seed = seed;
    return out;
}

/// Rating-file format. delimiter '\0' means auto-detect (tab, then comma)
/// from the first data line.
struct RatingsFormat {
    char delimiter = '\0';
};

/// A loaded matrix plus the id remap tables. Raw ids are densely re-indexed
/// from 0 in first-appearance order; row_ids/col_ids invert the mapping.
struct LoadedRatings {
    HdiMatrix matrix;
    std::vector<std::string> row_ids;
    std::vector<std::string> col_ids;
    std::unordered_map<std::string, int> row_lookup;
    std::unordered_map<std::string, int> col_lookup;
};

namespace detail {

inline std::vector<std::string> split_fields(const std::string& line,
                                             char delim) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(delim, start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

inline bool blank(const std::string& s) {
    return s.find_first_not_of(" \t\r") == std::string::npos;
}

}  // namespace detail

/// Reads one triple per line: user id, item id, rating, optional ignored
/// trailing columns. Lines starting with '#' and blank lines are skipped.
/// Duplicate (user, item) pairs and malformed records are errors.
inline LoadedRatings load_ratings(std::istream& in,
                                  const RatingsFormat& format = {}) {
    LoadedRatings out;
    std::vector<RatingTriple> triples;
    char delim = format.delimiter;
    std::string line;
    long line_no = 0;
    std::unordered_set<std::uint64_t> seen;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (detail::blank(line) || line[0] == '#') continue;
        if (delim == '\0')
            delim = line.find('\t') != std::string::npos ? '\t' : ',';
        const std::vector<std::string> fields = detail::split_fields(line, delim);
        if (fields.size() < 3)
            throw ParseError("line " + std::to_string(line_no) +
                             ": expected at least 3 fields, got " +
                             std::to_string(fields.size()));
        const std::string& raw_u = fields[0];
        const std::string& raw_i = fields[1];
        double z = 0.0;
        try {
            std::size_t used = 0;
            z = std::stod(fields[2], &used);
            if (used != fields[2].size()) throw std::invalid_argument("");
        } catch (const std::exception&) {
            throw ParseError("line " + std::to_string(line_no) +
                             ": non-numeric rating '" + fields[2] + "'");
        }
        if (!std::isfinite(z))
            throw ParseError("line " + std::to_string(line_no) +
                             ": non-finite rating '" + fields[2] + "'");

        auto ru = out.row_lookup.emplace(raw_u, int(out.row_ids.size()));
        if (ru.second) out.row_ids.push_back(raw_u);
        auto ri = out.col_lookup.emplace(raw_i, int(out.col_ids.size()));
        if (ri.second) out.col_ids.push_back(raw_i);
        const int u = ru.first->second;
        const int i = ri.first->second;
        const std::uint64_t key =
            (std::uint64_t(std::uint32_t(u)) << 32) | std::uint64_t(std::uint32_t(i));
        if (!seen.insert(key).second)
            throw DuplicateEntryError("line " + std::to_string(line_no) +
                                      ": duplicate pair (" + raw_u + ", " +
                                      raw_i + ")");
        triples.push_back({u, i, z});
    }
    out.matrix = HdiMatrix(int(out.row_ids.size()), int(out.col_ids.size()),
                           std::move(triples));
    return out;
}

inline LoadedRatings load_ratings_file(const std::string& path,
                                       const RatingsFormat& format = {}) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open rating file: " + path);
    return load_ratings(in, format);
}

namespace detail {

inline std::string format_value(double z) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", z);
    return buf;
}

}  // namespace detail

/// Writes the matrix back to the text format, one triple per line, using the
/// raw ids when given (dense indices otherwise). Values keep full precision
/// so a reload reproduces the entry set exactly.
inline void write_ratings(const HdiMatrix& matrix,
                          const std::vector<std::string>& row_ids,
                          const std::vector<std::string>& col_ids,
                          std::ostream& os, char delim = '\t') {
    for (const RatingTriple& t : matrix.entries()) {
        os << row_ids[std::size_t(t.u)] << delim << col_ids[std::size_t(t.i)]
           << delim << detail::format_value(t.z) << '\n';
    }
}

inline void write_ratings(const HdiMatrix& matrix, std::ostream& os,
                          char delim = '\t') {
    for (const RatingTriple& t : matrix.entries()) {
        os << t.u << delim << t.i << delim << detail::format_value(t.z) << '\n';
    }
}

}  // namespace lfa
