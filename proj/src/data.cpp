#include "pcgrbm/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "pcgrbm/rng.hpp"

namespace pcgrbm {

namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\"");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\"");
    return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_row(const std::string& line) {
    std::vector<std::string> cells;
    std::string_view rest(line);
    while (true) {
        const auto comma = rest.find(',');
        cells.push_back(trim(rest.substr(0, comma)));
        if (comma == std::string_view::npos) break;
        rest.remove_prefix(comma + 1);
    }
    return cells;
}

bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    const char* begin = s.data();
    if (*begin == '+') ++begin;
    const auto [ptr, ec] = std::from_chars(begin, s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

Index selection_count(double fraction, Index class_size) {
    // The epsilon keeps e.g. 0.07 * 100 from rounding up to 8.
    const auto c = static_cast<Index>(std::ceil(fraction * static_cast<double>(class_size) - 1e-9));
    return std::clamp<Index>(c, 1, class_size);
}

IndexPair ordered(Index a, Index b) { return a < b ? IndexPair{a, b} : IndexPair{b, a}; }

ConstraintSet pairs_from_selection(std::vector<Index> selected, const Labels& labels) {
    std::sort(selected.begin(), selected.end());
    ConstraintSet c;
    for (std::size_t x = 0; x < selected.size(); ++x) {
        for (std::size_t y = x + 1; y < selected.size(); ++y) {
            const Index i = selected[x];
            const Index j = selected[y];
            (labels[i] == labels[j] ? c.must : c.cannot).emplace_back(i, j);
        }
    }
    return c;
}

}  // namespace

int Dataset::num_classes() const {
    if (!labels || labels->empty()) return 0;
    return *std::max_element(labels->begin(), labels->end()) + 1;
}

void Dataset::validate() const {
    if (features.rows() < 1 || features.cols() < 1) throw InvalidArgument("dataset must have n >= 1 and p >= 1");
    if (!features.allFinite()) throw InvalidArgument("dataset contains non-finite feature values");
    if (labels) {
        if (labels->size() != rows()) throw InvalidArgument("label count does not match row count");
        std::set<int> distinct(labels->begin(), labels->end());
        for (int l : *labels) {
            if (l < 0 || l >= static_cast<int>(distinct.size()))
                throw InvalidArgument("labels must be dense in 0..K-1");
        }
    }
}

Dataset Dataset::subset(const std::vector<Index>& rows) const {
    Dataset out;
    out.name = name;
    out.normalized = normalized;
    out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r] >= this->rows()) throw InvalidArgument("subset row index out of range");
        out.features.row(static_cast<Eigen::Index>(r)) = features.row(static_cast<Eigen::Index>(rows[r]));
    }
    if (labels) {
        Labels l;
        l.reserve(rows.size());
        for (Index r : rows) l.push_back((*labels)[r]);
        out.labels = std::move(l);
    }
    return out;
}

void ConstraintSet::validate(Index n) const {
    std::set<IndexPair> seen_must;
    for (auto [i, j] : must) {
        if (i == j) throw InvalidArgument("constraint pair (" + std::to_string(i) + "," + std::to_string(i) + ")");
        if (i >= n || j >= n) throw InvalidArgument("constraint index out of range");
        seen_must.insert(ordered(i, j));
    }
    for (auto [i, j] : cannot) {
        if (i == j) throw InvalidArgument("constraint pair (" + std::to_string(i) + "," + std::to_string(i) + ")");
        if (i >= n || j >= n) throw InvalidArgument("constraint index out of range");
        if (seen_must.count(ordered(i, j)))
            throw InvalidArgument("pair (" + std::to_string(i) + "," + std::to_string(j) + ") is both must and cannot");
    }
}

std::uint64_t ConstraintSet::fingerprint() const {
    auto hash_list = [](std::vector<IndexPair> pairs, std::uint64_t tag) {
        for (auto& p : pairs) p = ordered(p.first, p.second);
        std::sort(pairs.begin(), pairs.end());
        std::uint64_t h = mix64(tag);
        for (auto [i, j] : pairs) h = mix64(h ^ mix64(i * 0x100000001b3ULL + j));
        return h;
    };
    return hash_list(must, 1) ^ (hash_list(cannot, 2) * 3);
}

Dataset load_csv(const std::filesystem::path& path, const std::optional<std::string>& label_column) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());

    std::string line;
    if (!std::getline(in, line)) throw IoError(path.string() + ": empty file");
    const auto header = split_row(line);

    std::optional<std::size_t> label_idx;
    if (label_column) {
        const auto it = std::find(header.begin(), header.end(), *label_column);
        if (it == header.end()) throw IoError(path.string() + ": unknown label column '" + *label_column + "'");
        label_idx = static_cast<std::size_t>(it - header.begin());
    }

    std::vector<std::vector<double>> rows;
    Labels labels;
    std::map<std::string, int> label_ids;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto cells = split_row(line);
        if (cells.size() != header.size()) {
            throw IoError(path.string() + ":" + std::to_string(line_no) + ": ragged row (" +
                          std::to_string(cells.size()) + " cells, header has " + std::to_string(header.size()) + ")");
        }
        std::vector<double> row;
        row.reserve(cells.size());
        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (label_idx && c == *label_idx) {
                const auto [it, inserted] = label_ids.emplace(cells[c], static_cast<int>(label_ids.size()));
                labels.push_back(it->second);
                continue;
            }
            double v = 0.0;
            if (!parse_double(cells[c], v)) {
                throw IoError(path.string() + ":" + std::to_string(line_no) + ": non-numeric value '" + cells[c] +
                              "' in column '" + header[c] + "'");
            }
            row.push_back(v);
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw IoError(path.string() + ": no data rows");
    if (rows.front().empty()) throw IoError(path.string() + ": no feature columns");

    Dataset d;
    d.name = path.stem().string();
    d.features.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r].size(); ++c)
            d.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    if (label_idx) d.labels = std::move(labels);
    return d;
}

void save_csv(const Dataset& d, const std::filesystem::path& path, const std::string& label_column) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out.precision(17);
    for (Eigen::Index c = 0; c < d.features.cols(); ++c) out << (c ? "," : "") << "x" << c;
    if (d.labels) out << "," << label_column;
    out << "\n";
    for (Eigen::Index r = 0; r < d.features.rows(); ++r) {
        for (Eigen::Index c = 0; c < d.features.cols(); ++c) out << (c ? "," : "") << d.features(r, c);
        if (d.labels) out << "," << (*d.labels)[static_cast<std::size_t>(r)];
        out << "\n";
    }
    if (!out) throw IoError("write failed for " + path.string());
}

Dataset normalize(const Dataset& d) {
    Dataset out = d;
    const auto n = static_cast<double>(d.features.rows());
    for (Eigen::Index c = 0; c < d.features.cols(); ++c) {
        auto col = out.features.col(c);
        const double mean = col.sum() / n;
        col.array() -= mean;
        const double sd = std::sqrt(col.squaredNorm() / n);
        // Anything this small relative to the mean is a constant column plus rounding.
        if (sd <= 1e-12 * std::max(1.0, std::abs(mean))) {
            col.setZero();
        } else {
            col /= sd;
        }
    }
    out.normalized = true;
    return out;
}

std::vector<FoldSplit> kfold(Index n, Index k, std::uint64_t seed) {
    if (k < 2 || k > n) throw InvalidArgument("kfold requires 2 <= k <= n");
    std::vector<Index> perm(n);
    std::iota(perm.begin(), perm.end(), Index{0});
    Engine rng(derive_seed(seed, {0x6b666f6c64ULL}));
    shuffle(perm, rng);

    std::vector<FoldSplit> folds(k);
    std::vector<Index> fold_of(n);
    for (Index pos = 0; pos < n; ++pos) fold_of[perm[pos]] = pos % k;
    for (Index i = 0; i < n; ++i) {
        for (Index f = 0; f < k; ++f) {
            (fold_of[i] == f ? folds[f].test_indices : folds[f].train_indices).push_back(i);
        }
    }
    return folds;
}

std::vector<ConstraintSet> sample_constraints_incremental(const Labels& labels, const std::vector<double>& fractions,
                                                          std::uint64_t seed) {
    if (labels.empty()) throw InvalidArgument("constraint sampling requires labels");
    if (fractions.empty()) throw InvalidArgument("constraint sampling requires at least one fraction");
    for (std::size_t i = 0; i < fractions.size(); ++i) {
        if (!(fractions[i] > 0.0 && fractions[i] <= 1.0)) throw InvalidArgument("fractions must lie in (0, 1]");
        if (i > 0 && !(fractions[i] > fractions[i - 1])) throw InvalidArgument("fractions must be strictly ascending");
    }

    std::map<int, std::vector<Index>> members;
    for (Index i = 0; i < labels.size(); ++i) members[labels[i]].push_back(i);
    if (members.size() < 2) throw InvalidArgument("constraint sampling requires at least two classes");

    // One permutation per class; each fraction takes a prefix of it, so selections nest.
    for (auto& [label, idx] : members) {
        Engine rng(derive_seed(seed, {static_cast<std::uint64_t>(label)}));
        shuffle(idx, rng);
    }

    std::vector<ConstraintSet> out;
    out.reserve(fractions.size());
    for (double f : fractions) {
        std::vector<Index> selected;
        std::size_t contributing = 0;
        for (const auto& [label, idx] : members) {
            const Index count = selection_count(f, idx.size());
            if (count > 0) ++contributing;
            selected.insert(selected.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(count));
        }
        if (contributing < 2) throw InvalidArgument("fraction selects instances from fewer than two classes");
        out.push_back(pairs_from_selection(std::move(selected), labels));
    }
    return out;
}

ConstraintSet sample_constraints(const Labels& labels, double fraction, std::uint64_t seed) {
    return sample_constraints_incremental(labels, {fraction}, seed).front();
}

ConstraintSet transitive_closure(const ConstraintSet& c) {
    std::map<Index, Index> parent;
    auto find = [&](Index x) {
        parent.try_emplace(x, x);
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    };
    for (auto [i, j] : c.must) {
        const Index ri = find(i);
        const Index rj = find(j);
        parent[ri] = rj;
    }

    std::map<Index, std::vector<Index>> comps;
    for (const auto& entry : parent) comps[find(entry.first)].push_back(entry.first);
    auto component = [&](Index x) -> std::vector<Index> {
        if (!parent.count(x)) return {x};
        return comps[find(x)];
    };

    std::set<IndexPair> must;
    for (const auto& [root, nodes] : comps)
        for (std::size_t a = 0; a < nodes.size(); ++a)
            for (std::size_t b = a + 1; b < nodes.size(); ++b) must.insert(ordered(nodes[a], nodes[b]));

    std::set<IndexPair> cannot;
    for (auto [i, j] : c.cannot) {
        if (parent.count(i) && parent.count(j) && find(i) == find(j)) {
            throw InvalidArgument("cannot-link (" + std::to_string(i) + "," + std::to_string(j) +
                                  ") joins a must-link component");
        }
        for (Index x : component(i))
            for (Index y : component(j)) cannot.insert(ordered(x, y));
    }
    return ConstraintSet{{must.begin(), must.end()}, {cannot.begin(), cannot.end()}};
}

ConstraintSet remap(const ConstraintSet& c, const std::vector<Index>& index_map) {
    ConstraintSet out;
    auto map_pair = [&](IndexPair p) {
        if (p.first >= index_map.size() || p.second >= index_map.size())
            throw InvalidArgument("constraint index outside remap table");
        return ordered(index_map[p.first], index_map[p.second]);
    };
    for (auto p : c.must) out.must.push_back(map_pair(p));
    for (auto p : c.cannot) out.cannot.push_back(map_pair(p));
    return out;
}

Dataset synth_blobs(Index n, Index k, Index p, double separation, std::uint64_t seed) {
    if (k < 1 || n < k || p < 1) throw InvalidArgument("synth_blobs requires n >= k >= 1 and p >= 1");
    if (!(separation > 0.0)) throw InvalidArgument("synth_blobs requires separation > 0");
    Engine rng(derive_seed(seed, {0x626c6f6273ULL}));
    const auto P = static_cast<Eigen::Index>(p);

    Matrix centers(static_cast<Eigen::Index>(k), P);
    if (k <= p) {
        // Scaled simplex vertices (pairwise distance exactly `separation`) under a random rotation.
        Matrix g(P, P);
        for (Eigen::Index i = 0; i < P; ++i)
            for (Eigen::Index j = 0; j < P; ++j) g(i, j) = standard_normal(rng);
        const Matrix q = Eigen::HouseholderQR<Matrix>(g).householderQ();
        centers.setZero();
        for (Eigen::Index c = 0; c < centers.rows(); ++c) centers(c, c) = separation / std::sqrt(2.0);
        centers = centers * q.transpose();
    } else {
        double half_width = separation * static_cast<double>(k);
        for (Eigen::Index c = 0; c < centers.rows();) {
            bool placed = false;
            for (int attempt = 0; attempt < 10000 && !placed; ++attempt) {
                for (Eigen::Index j = 0; j < P; ++j) centers(c, j) = (2.0 * uniform01(rng) - 1.0) * half_width;
                placed = true;
                for (Eigen::Index o = 0; o < c && placed; ++o)
                    placed = (centers.row(c) - centers.row(o)).norm() >= separation;
            }
            if (placed) {
                ++c;
            } else {
                half_width *= 2.0;
            }
        }
    }

    Dataset d;
    d.name = "blobs";
    d.features.resize(static_cast<Eigen::Index>(n), P);
    Labels labels(n);
    for (Index i = 0; i < n; ++i) {
        const auto c = static_cast<Eigen::Index>(i % k);
        labels[i] = static_cast<int>(c);
        for (Eigen::Index j = 0; j < P; ++j)
            d.features(static_cast<Eigen::Index>(i), j) = centers(c, j) + standard_normal(rng);
    }
    d.labels = std::move(labels);
    return d;
}

ConstraintSet load_constraints(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    ConstraintSet c;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto cells = split_row(line);
        if (line_no == 1 && !cells.empty() && cells[0] == "kind") continue;
        if (trim(line).empty()) continue;
        double i = 0, j = 0;
        if (cells.size() != 3 || !parse_double(cells[1], i) || !parse_double(cells[2], j) || i < 0 || j < 0 ||
            i != std::floor(i) || j != std::floor(j)) {
            throw IoError(path.string() + ":" + std::to_string(line_no) + ": expected kind,i,j");
        }
        const IndexPair pair = ordered(static_cast<Index>(i), static_cast<Index>(j));
        if (cells[0] == "must") {
            c.must.push_back(pair);
        } else if (cells[0] == "cannot") {
            c.cannot.push_back(pair);
        } else {
            throw IoError(path.string() + ":" + std::to_string(line_no) + ": unknown constraint kind '" + cells[0] + "'");
        }
    }
    return c;
}

void save_constraints(const ConstraintSet& c, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "kind,i,j\n";
    for (auto [i, j] : c.must) out << "must," << i << "," << j << "\n";
    for (auto [i, j] : c.cannot) out << "cannot," << i << "," << j << "\n";
}

}  // namespace pcgrbm
