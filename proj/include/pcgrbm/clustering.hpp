#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pcgrbm/data.hpp"
#include "pcgrbm/types.hpp"

namespace pcgrbm {

struct ClusteringResult {
    std::vector<Index> assignments;
    Index k = 0;
    bool converged = false;
    Index iterations = 0;

    /// Throws InvalidArgument if some id >= k or some id in 0..k-1 is unused.
    void validate() const;
};

/// Renumbers cluster ids densely in order of first appearance.
ClusteringResult compact(ClusteringResult r);

/// Thrown by cop_kmeans when an instance has no cluster satisfying its constraints.
class InfeasibleConstraints : public std::runtime_error {
public:
    explicit InfeasibleConstraints(Index instance);
    [[nodiscard]] Index instance() const { return instance_; }

private:
    Index instance_;
};

struct KMeansOptions {
    Index restarts = 10;
    Index max_iterations = 300;
};

/// A single k-means fit with its diagnostics.
struct KMeansFit {
    ClusteringResult result;
    Matrix centroids;
    double wcss = 0.0;
    std::vector<double> wcss_trace;  ///< after each Lloyd update
};

double within_cluster_ss(const Matrix& data, const std::vector<Index>& assignments, const Matrix& centroids);

/// k-means++ seeding for one restart.
Matrix kmeanspp_seed(const Matrix& data, Index k, std::uint64_t seed);

KMeansFit kmeans_fit(const Matrix& data, Index k, std::uint64_t seed, const KMeansOptions& options = {});
ClusteringResult kmeans(const Matrix& data, Index k, Index restarts, std::uint64_t seed);

struct SpectralOptions {
    std::optional<double> kernel_width;  ///< median pairwise distance when unset
    Index kmeans_restarts = 10;
    double jacobi_tolerance = 1e-10;
};

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Eigenvalues come back in descending order, eigenvectors as matching columns.
struct SymmetricEigen {
    Vector values;
    Matrix vectors;
    Index sweeps = 0;
};
SymmetricEigen jacobi_eigen(const Matrix& symmetric, double tolerance = 1e-10, Index max_sweeps = 100);

/// D^{-1/2} A D^{-1/2} for the Gaussian affinity with zero diagonal.
Matrix normalized_affinity(const Matrix& data, double kernel_width);
double median_pairwise_distance(const Matrix& data);

ClusteringResult spectral(const Matrix& data, Index k, std::uint64_t seed, const SpectralOptions& options = {});

struct ApConfig {
    double damping = 0.9;
    Index max_iterations = 200;
    Index convergence_window = 15;
    std::optional<double> preference;  ///< median off-diagonal similarity when unset

    void validate() const;
};

struct ApFit {
    ClusteringResult result;
    std::vector<Index> exemplars;  ///< exemplar of cluster c is exemplars[c]
};

ApFit affinity_propagation_fit(const Matrix& data, const ApConfig& cfg = {});
ClusteringResult affinity_propagation(const Matrix& data, const ApConfig& cfg = {});

struct CopKMeansOptions {
    Index restarts = 10;
    Index max_iterations = 300;
};

/// Constrained k-means. Every restart must be feasible; the best by WCSS is returned.
ClusteringResult cop_kmeans(const Matrix& data, Index k, const ConstraintSet& constraints, std::uint64_t seed,
                            const CopKMeansOptions& options = {});

/// Number of must pairs split and cannot pairs joined by `assignments`.
Index count_violations(const std::vector<Index>& assignments, const ConstraintSet& constraints);

}  // namespace pcgrbm
