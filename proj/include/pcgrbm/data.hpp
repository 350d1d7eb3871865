#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pcgrbm/types.hpp"

namespace pcgrbm {

/// An n x p feature matrix with optional class labels.
struct Dataset {
    std::string name;
    Matrix features;
    std::optional<Labels> labels;
    bool normalized = false;

    [[nodiscard]] Index rows() const { return static_cast<Index>(features.rows()); }
    [[nodiscard]] Index cols() const { return static_cast<Index>(features.cols()); }
    /// Number of distinct classes; 0 when unlabeled.
    [[nodiscard]] int num_classes() const;
    /// Throws InvalidArgument when a Dataset invariant does not hold.
    void validate() const;
    /// Copy restricted to the given rows, in the given order.
    [[nodiscard]] Dataset subset(const std::vector<Index>& rows) const;
};

struct FoldSplit {
    std::vector<Index> train_indices;
    std::vector<Index> test_indices;
};

/// Unordered index pair, stored with first < second.
using IndexPair = std::pair<Index, Index>;

struct ConstraintSet {
    std::vector<IndexPair> must;
    std::vector<IndexPair> cannot;

    [[nodiscard]] bool empty() const { return must.empty() && cannot.empty(); }
    /// Throws InvalidArgument for self pairs, pairs present in both lists or indices >= n.
    void validate(Index n) const;
    /// Order-independent 64-bit hash of both pair lists.
    [[nodiscard]] std::uint64_t fingerprint() const;
};

Dataset load_csv(const std::filesystem::path& path, const std::optional<std::string>& label_column);

/// Writes features (and labels under `label_column` when present) with a header row.
void save_csv(const Dataset& d, const std::filesystem::path& path, const std::string& label_column = "label");

/// Per-column z-score with the population standard deviation. Constant columns become zero.
Dataset normalize(const Dataset& d);

std::vector<FoldSplit> kfold(Index n, Index k, std::uint64_t seed);

ConstraintSet sample_constraints(const Labels& labels, double fraction, std::uint64_t seed);

/// Nested selections: the instances chosen at fractions[i] are a prefix-subset of those at fractions[i+1].
std::vector<ConstraintSet> sample_constraints_incremental(const Labels& labels, const std::vector<double>& fractions,
                                                          std::uint64_t seed);

/// Closes must-links transitively and propagates cannot-links across must-link components.
ConstraintSet transitive_closure(const ConstraintSet& c);

/// Relabels local indices through `index_map` (local i -> index_map[i]).
ConstraintSet remap(const ConstraintSet& c, const std::vector<Index>& index_map);

Dataset synth_blobs(Index n, Index k, Index p, double separation, std::uint64_t seed);

/// Constraint CSV: header `kind,i,j`, kind in {must, cannot}.
ConstraintSet load_constraints(const std::filesystem::path& path);
void save_constraints(const ConstraintSet& c, const std::filesystem::path& path);

}  // namespace pcgrbm
