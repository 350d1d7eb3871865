#pragma once

#include <string>
#include <vector>

#include "pcgrbm/clustering.hpp"
#include "pcgrbm/types.hpp"

namespace pcgrbm {

/// Fraction of instances correctly labeled under the best one-to-one map from cluster ids to classes.
double accuracy(const Labels& truth, const ClusteringResult& result);

/// Weighted mean over clusters of the dominant-class fraction.
double purity(const Labels& truth, const ClusteringResult& result);

/// Maximum-weight perfect matching on a square matrix (Hungarian algorithm).
/// Returns column assigned to each row.
std::vector<Index> max_weight_assignment(const Matrix& weights);

/// Rows are datasets, columns are algorithms.
struct ScoreMatrix {
    Matrix scores;
    std::vector<std::string> row_names;
    std::vector<std::string> col_names;

    void validate() const;
};

struct RankTable {
    Matrix ranks;
    Vector row_sums;
    Vector col_sums;
};

/// Aligns by row mean then ranks all cells jointly; rank 1 is best, ties share the mean rank.
RankTable aligned_ranks(const ScoreMatrix& m, bool higher_is_better = true);

/// Builds a RankTable from an already-ranked matrix.
RankTable rank_table_from_ranks(const Matrix& ranks);

/// Friedman Aligned Ranks statistic; chi-square with G - 1 degrees of freedom under the null.
double friedman_aligned_statistic(const RankTable& r);

/// Upper tail P(X >= t) for X ~ chi-square(df).
double chi_square_sf(double t, int df);

struct FriedmanSummary {
    double statistic = 0.0;
    int df = 0;
    double p_one_tailed = 1.0;
    double p_two_tailed = 1.0;
};

FriedmanSummary friedman_test(const RankTable& r);

}  // namespace pcgrbm
