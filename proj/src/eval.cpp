#include "pcgrbm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/special_functions/gamma.hpp>

namespace pcgrbm {

namespace {

using EIdx = Eigen::Index;

void require(bool ok, const std::string& what) {
    if (!ok) throw InvalidArgument(what);
}

/// Contingency counts, rows = predicted cluster, cols = true class, padded square when `square`.
Matrix contingency(const Labels& truth, const ClusteringResult& result, bool square) {
    require(truth.size() == result.assignments.size(), "label and assignment lengths differ");
    require(!truth.empty(), "evaluation needs at least one instance");
    Index clusters = result.k;
    for (Index a : result.assignments) clusters = std::max(clusters, a + 1);
    int classes = 0;
    for (int l : truth) {
        require(l >= 0, "labels must be non-negative");
        classes = std::max(classes, l + 1);
    }
    EIdx rows = static_cast<EIdx>(clusters);
    EIdx cols = classes;
    if (square) rows = cols = std::max(rows, cols);
    Matrix c = Matrix::Zero(rows, cols);
    for (std::size_t i = 0; i < truth.size(); ++i) c(static_cast<EIdx>(result.assignments[i]), truth[i]) += 1.0;
    return c;
}

}  // namespace

std::vector<Index> max_weight_assignment(const Matrix& weights) {
    require(weights.rows() == weights.cols(), "assignment needs a square matrix");
    const EIdx n = weights.rows();
    if (n == 0) return {};
    const double top = weights.maxCoeff();
    // Minimize cost = top - weight with the 1-indexed potentials formulation.
    auto cost = [&](EIdx i, EIdx j) { return top - weights(i - 1, j - 1); };
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(static_cast<std::size_t>(n + 1), 0.0), v(static_cast<std::size_t>(n + 1), 0.0);
    std::vector<EIdx> match(static_cast<std::size_t>(n + 1), 0), way(static_cast<std::size_t>(n + 1), 0);

    for (EIdx i = 1; i <= n; ++i) {
        match[0] = i;
        EIdx j0 = 0;
        std::vector<double> minv(static_cast<std::size_t>(n + 1), inf);
        std::vector<bool> used(static_cast<std::size_t>(n + 1), false);
        do {
            used[static_cast<std::size_t>(j0)] = true;
            const EIdx i0 = match[static_cast<std::size_t>(j0)];
            double delta = inf;
            EIdx j1 = 0;
            for (EIdx j = 1; j <= n; ++j) {
                const auto uj = static_cast<std::size_t>(j);
                if (used[uj]) continue;
                const double cur = cost(i0, j) - u[static_cast<std::size_t>(i0)] - v[uj];
                if (cur < minv[uj]) {
                    minv[uj] = cur;
                    way[uj] = j0;
                }
                if (minv[uj] < delta) {
                    delta = minv[uj];
                    j1 = j;
                }
            }
            for (EIdx j = 0; j <= n; ++j) {
                const auto uj = static_cast<std::size_t>(j);
                if (used[uj]) {
                    u[static_cast<std::size_t>(match[uj])] += delta;
                    v[uj] -= delta;
                } else {
                    minv[uj] -= delta;
                }
            }
            j0 = j1;
        } while (match[static_cast<std::size_t>(j0)] != 0);
        do {
            const EIdx j1 = way[static_cast<std::size_t>(j0)];
            match[static_cast<std::size_t>(j0)] = match[static_cast<std::size_t>(j1)];
            j0 = j1;
        } while (j0 != 0);
    }

    std::vector<Index> row_to_col(static_cast<std::size_t>(n));
    for (EIdx j = 1; j <= n; ++j) row_to_col[static_cast<std::size_t>(match[static_cast<std::size_t>(j)] - 1)] = static_cast<Index>(j - 1);
    return row_to_col;
}

double accuracy(const Labels& truth, const ClusteringResult& result) {
    const Matrix c = contingency(truth, result, true);
    const auto map = max_weight_assignment(c);
    double matched = 0.0;
    for (EIdx r = 0; r < c.rows(); ++r) matched += c(r, static_cast<EIdx>(map[static_cast<std::size_t>(r)]));
    return matched / static_cast<double>(truth.size());
}

double purity(const Labels& truth, const ClusteringResult& result) {
    const Matrix c = contingency(truth, result, false);
    return c.rowwise().maxCoeff().sum() / static_cast<double>(truth.size());
}

void ScoreMatrix::validate() const {
    require(scores.rows() >= 2 && scores.cols() >= 2, "score matrix needs at least 2 datasets and 2 algorithms");
    require(scores.allFinite(), "score matrix entries must be finite");
    require(row_names.empty() || row_names.size() == static_cast<std::size_t>(scores.rows()), "row name count mismatch");
    require(col_names.empty() || col_names.size() == static_cast<std::size_t>(scores.cols()), "column name count mismatch");
}

RankTable rank_table_from_ranks(const Matrix& ranks) {
    RankTable t;
    t.ranks = ranks;
    t.row_sums = ranks.rowwise().sum();
    t.col_sums = ranks.colwise().sum().transpose();
    return t;
}

RankTable aligned_ranks(const ScoreMatrix& m, bool higher_is_better) {
    m.validate();
    const EIdx d = m.scores.rows();
    const EIdx g = m.scores.cols();
    Matrix aligned = m.scores;
    for (EIdx i = 0; i < d; ++i) aligned.row(i).array() -= m.scores.row(i).mean();
    if (higher_is_better) aligned = -aligned;  // rank ascending, so best comes first

    const EIdx total = d * g;
    std::vector<EIdx> order(static_cast<std::size_t>(total));
    std::iota(order.begin(), order.end(), EIdx{0});
    const double* values = aligned.data();
    std::stable_sort(order.begin(), order.end(), [&](EIdx x, EIdx y) { return values[x] < values[y]; });

    // Row alignment leaves ~1e-16 noise on values that are equal in exact arithmetic.
    const double tie_tol = 1e-12 * std::max(1.0, aligned.cwiseAbs().maxCoeff());
    Matrix ranks(d, g);
    double* out = ranks.data();
    for (EIdx start = 0; start < total;) {
        EIdx end = start + 1;
        while (end < total && values[order[static_cast<std::size_t>(end)]] -
                                      values[order[static_cast<std::size_t>(end - 1)]] <= tie_tol)
            ++end;
        const double mid = 0.5 * static_cast<double>(start + 1 + end);
        for (EIdx k = start; k < end; ++k) out[order[static_cast<std::size_t>(k)]] = mid;
        start = end;
    }
    return rank_table_from_ranks(ranks);
}

double friedman_aligned_statistic(const RankTable& r) {
    const auto d = static_cast<double>(r.ranks.rows());
    const auto g = static_cast<double>(r.ranks.cols());
    const double gd = g * d;
    const double col_sq = r.col_sums.squaredNorm();
    const double row_sq = r.row_sums.squaredNorm();
    const double numerator = (g - 1.0) * (col_sq - (g * d * d / 4.0) * (gd + 1.0) * (gd + 1.0));
    const double denominator = gd * (gd + 1.0) * (2.0 * gd + 1.0) / 6.0 - row_sq / g;
    if (!(std::abs(denominator) > 1e-12 * gd * gd * gd))
        throw InvalidArgument("Friedman aligned statistic: zero denominator (degenerate ranks)");
    return numerator / denominator;
}

double chi_square_sf(double t, int df) {
    require(df >= 1, "chi-square needs df >= 1");
    require(t >= 0.0 && std::isfinite(t), "chi-square statistic must be finite and >= 0");
    if (t == 0.0) return 1.0;
    return boost::math::gamma_q(0.5 * df, 0.5 * t);
}

FriedmanSummary friedman_test(const RankTable& r) {
    FriedmanSummary s;
    s.statistic = friedman_aligned_statistic(r);
    s.df = static_cast<int>(r.ranks.cols()) - 1;
    s.p_one_tailed = chi_square_sf(std::max(0.0, s.statistic), s.df);
    s.p_two_tailed = std::min(1.0, 2.0 * s.p_one_tailed);
    return s;
}

}  // namespace pcgrbm
