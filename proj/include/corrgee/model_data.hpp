#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "corrgee/error.hpp"
#include "corrgee/links.hpp"

namespace corrgee {

// One cluster of correlated binary observations.  Rows of x line up with y;
// weight is a frequency multiplier (w copies of the whole cluster).
struct Cluster {
    std::string id;
    Eigen::VectorXd y;   // n_i entries, each exactly 0 or 1
    Eigen::MatrixXd x;   // n_i x p mean-model design
    double weight = 1.0;

    Eigen::Index size() const { return y.size(); }
};

inline Eigen::Index pair_count(Eigen::Index n) { return n * (n - 1) / 2; }

struct ClusterDataset {
    std::vector<Cluster> clusters;
    Eigen::Index p = 0;  // mean-covariate count

    Eigen::Index cluster_count() const { return static_cast<Eigen::Index>(clusters.size()); }
    Eigen::Index total_obs() const {
        Eigen::Index n = 0;
        for (const auto& c : clusters) n += c.size();
        return n;
    }
    Eigen::Index total_pairs() const {
        Eigen::Index m = 0;
        for (const auto& c : clusters) m += pair_count(c.size());
        return m;
    }
};

// Pair-level correlation covariates, one block per cluster in dataset order.
// Block i has n_i(n_i-1)/2 rows in the canonical order (1,2),(1,3),...,(1,n),
// (2,3),...,(n-1,n); size-1 clusters contribute an empty block.
struct PairCovariates {
    std::vector<Eigen::MatrixXd> blocks;
    Eigen::Index q = 0;  // correlation-covariate count
};

enum class ShrinkMode { None, Alpha, Theta };

inline const char* shrink_name(ShrinkMode m) {
    switch (m) {
        case ShrinkMode::None: return "none";
        case ShrinkMode::Alpha: return "alpha";
        case ShrinkMode::Theta: return "theta";
    }
    return "?";
}

inline ShrinkMode parse_shrink(const std::string& name) {
    if (name == "none") return ShrinkMode::None;
    if (name == "alpha") return ShrinkMode::Alpha;
    if (name == "theta") return ShrinkMode::Theta;
    throw ConfigError("unknown shrink mode: '" + name + "'");
}

// Fitting options; defaults follow the macro-style conventions this tool
// mirrors (logit mean link, identity correlation link, 20 iterations,
// tolerance 1e-5, all starting alphas 0.01).
struct FitConfig {
    LinkKind mean_link = LinkKind::Logit;
    LinkKind corr_link = LinkKind::Identity;
    int max_iter = 20;
    double epsilon = 1e-5;
    std::optional<Eigen::VectorXd> start_beta;   // default: independence IRLS
    std::optional<Eigen::VectorXd> start_alpha;  // default: 0.01 everywhere
    bool fix_alpha = false;
    bool make_v_one = false;
    ShrinkMode shrink = ShrinkMode::None;
    bool print_range = false;
    bool detailed = false;
};

// 1-based row of pair (j,k) within a cluster of size n under the canonical
// ordering.  Bijective onto 1..n(n-1)/2.
inline Eigen::Index pair_row_offset(Eigen::Index j, Eigen::Index k, Eigen::Index n) {
    if (j < 1 || j >= k || k > n) {
        throw Error("pair_row_offset: invalid pair (" + std::to_string(j) + "," +
                    std::to_string(k) + ") for cluster size " + std::to_string(n));
    }
    return (j - 1) * (2 * n - j) / 2 + (k - j);
}

// Inverse of pair_row_offset: the (j,k) pair sitting at 1-based `row`.
inline std::pair<Eigen::Index, Eigen::Index> pair_from_offset(Eigen::Index row, Eigen::Index n) {
    if (row < 1 || row > pair_count(n)) {
        throw Error("pair_from_offset: row " + std::to_string(row) + " out of range for n=" +
                    std::to_string(n));
    }
    Eigen::Index j = 1;
    Eigen::Index remaining = row;
    while (remaining > n - j) {
        remaining -= n - j;
        ++j;
    }
    return {j, j + remaining};
}

// ---------------------------------------------------------------------------
// Delimited-text loading
// ---------------------------------------------------------------------------

namespace detail {

inline std::string trim(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

inline std::vector<std::string> split_line(const std::string& line, char delim) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, delim)) out.push_back(field);
    if (!line.empty() && line.back() == delim) out.emplace_back();
    return out;
}

struct TextTable {
    std::string path;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;  // raw (untrimmed) fields

    Eigen::Index column(const std::string& name) const {
        for (size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) return static_cast<Eigen::Index>(i);
        }
        throw InputError(path + ": no column named '" + name + "'");
    }
};

inline TextTable read_table(const std::string& path, char delim) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open input file: " + path);
    TextTable t;
    t.path = path;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (first) {
            for (auto& h : split_line(line, delim)) t.header.push_back(trim(h));
            first = false;
            continue;
        }
        if (trim(line).empty()) continue;
        auto fields = split_line(line, delim);
        if (fields.size() != t.header.size()) {
            throw InputError(path + " line " + std::to_string(t.rows.size() + 2) + ": expected " +
                             std::to_string(t.header.size()) + " fields, found " +
                             std::to_string(fields.size()));
        }
        t.rows.push_back(std::move(fields));
    }
    if (first) throw InputError(path + ": empty file (missing header row)");
    return t;
}

inline double parse_number(const TextTable& t, size_t row, Eigen::Index col) {
    const std::string raw = trim(t.rows[row][static_cast<size_t>(col)]);
    if (raw.empty() || raw == "." || raw == "NA" || raw == "nan" || raw == "NaN") {
        throw InputError(t.path + " line " + std::to_string(row + 2) + ", column '" +
                         t.header[static_cast<size_t>(col)] + "': missing value");
    }
    double v = 0.0;
    const char* begin = raw.data();
    const char* end = raw.data() + raw.size();
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc() || ptr != end || !std::isfinite(v)) {
        throw InputError(t.path + " line " + std::to_string(row + 2) + ", column '" +
                         t.header[static_cast<size_t>(col)] + "': non-numeric value '" + raw + "'");
    }
    return v;
}

}  // namespace detail

// Column-name selection for the three input files.
struct InputNames {
    std::string id;                  // cluster identifier (xy and w files)
    std::string y;                   // 0/1 outcome (xy file)
    std::vector<std::string> x;      // mean covariates (xy file)
    std::vector<std::string> z;      // correlation covariates (z file)
    std::string w;                   // frequency weight (w file)
    char delimiter = ',';
};

// Loads and validates the three inputs.  Clusters keep first-occurrence file
// order; rows with a previously seen id append to that cluster.  The z file
// carries no ids: its rows are consumed blockwise in cluster order, m_i rows
// per cluster.
inline std::pair<ClusterDataset, PairCovariates> load_inputs(const std::string& xy_path,
                                                             const std::string& z_path,
                                                             const std::string& w_path,
                                                             const InputNames& names) {
    if (names.x.empty()) throw ConfigError("at least one mean covariate column is required");
    if (names.z.empty()) throw ConfigError("at least one correlation covariate column is required");

    const auto xy = detail::read_table(xy_path, names.delimiter);
    const Eigen::Index id_col = xy.column(names.id);
    const Eigen::Index y_col = xy.column(names.y);
    std::vector<Eigen::Index> x_cols;
    for (const auto& n : names.x) x_cols.push_back(xy.column(n));
    const Eigen::Index p = static_cast<Eigen::Index>(x_cols.size());

    ClusterDataset data;
    data.p = p;
    std::unordered_map<std::string, size_t> index_of;
    std::vector<std::vector<double>> ys;
    std::vector<std::vector<double>> xs;  // row-major n_i * p

    for (size_t r = 0; r < xy.rows.size(); ++r) {
        const std::string id = detail::trim(xy.rows[r][static_cast<size_t>(id_col)]);
        if (id.empty()) {
            throw InputError(xy_path + " line " + std::to_string(r + 2) + ": empty cluster id");
        }
        auto it = index_of.find(id);
        if (it == index_of.end()) {
            it = index_of.emplace(id, data.clusters.size()).first;
            data.clusters.push_back(Cluster{id, {}, {}, 1.0});
            ys.emplace_back();
            xs.emplace_back();
        }
        const size_t ci = it->second;
        const double yv = detail::parse_number(xy, r, y_col);
        if (yv != 0.0 && yv != 1.0) {
            throw InputError(xy_path + " line " + std::to_string(r + 2) + ", column '" + names.y +
                             "': outcome must be 0 or 1, found " + std::to_string(yv));
        }
        ys[ci].push_back(yv);
        for (Eigen::Index c : x_cols) xs[ci].push_back(detail::parse_number(xy, r, c));
    }
    if (data.clusters.empty()) throw InputError(xy_path + ": no data rows");

    for (size_t ci = 0; ci < data.clusters.size(); ++ci) {
        const Eigen::Index n = static_cast<Eigen::Index>(ys[ci].size());
        data.clusters[ci].y = Eigen::Map<Eigen::VectorXd>(ys[ci].data(), n);
        data.clusters[ci].x =
            Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
                xs[ci].data(), n, p);
    }

    // weights, joined by cluster id
    const auto wt = detail::read_table(w_path, names.delimiter);
    const Eigen::Index wid_col = wt.column(names.id);
    const Eigen::Index w_col = wt.column(names.w);
    std::unordered_map<std::string, double> weight_of;
    for (size_t r = 0; r < wt.rows.size(); ++r) {
        const std::string id = detail::trim(wt.rows[r][static_cast<size_t>(wid_col)]);
        if (weight_of.count(id)) {
            throw InputError(w_path + " line " + std::to_string(r + 2) + ": duplicate weight row for cluster '" +
                             id + "'");
        }
        weight_of[id] = detail::parse_number(wt, r, w_col);
    }
    for (auto& c : data.clusters) {
        auto it = weight_of.find(c.id);
        if (it == weight_of.end()) {
            throw InputError(w_path + ": no weight for cluster '" + c.id + "'");
        }
        if (it->second <= 0.0) {
            throw InputError(w_path + ": cluster '" + c.id + "' has non-positive weight " +
                             std::to_string(it->second));
        }
        c.weight = it->second;
    }

    // correlation covariates, blockwise in cluster order
    const auto zt = detail::read_table(z_path, names.delimiter);
    std::vector<Eigen::Index> z_cols;
    for (const auto& n : names.z) z_cols.push_back(zt.column(n));
    const Eigen::Index q = static_cast<Eigen::Index>(z_cols.size());

    const Eigen::Index expected = data.total_pairs();
    if (static_cast<Eigen::Index>(zt.rows.size()) != expected) {
        std::ostringstream msg;
        msg << z_path << ": expected " << expected << " pair rows, found " << zt.rows.size()
            << "; per-cluster expectation (id: n -> pairs):";
        Eigen::Index shown = 0;
        for (const auto& c : data.clusters) {
            if (shown++ == 8) {
                msg << " ...";
                break;
            }
            msg << " " << c.id << ": " << c.size() << " -> " << pair_count(c.size()) << ";";
        }
        throw InputError(msg.str());
    }

    PairCovariates pairs;
    pairs.q = q;
    size_t zr = 0;
    for (const auto& c : data.clusters) {
        const Eigen::Index m = pair_count(c.size());
        Eigen::MatrixXd block(m, q);
        for (Eigen::Index r = 0; r < m; ++r, ++zr) {
            for (Eigen::Index j = 0; j < q; ++j) {
                block(r, j) = detail::parse_number(zt, zr, z_cols[static_cast<size_t>(j)]);
            }
        }
        pairs.blocks.push_back(std::move(block));
    }
    return {std::move(data), std::move(pairs)};
}

}  // namespace corrgee
