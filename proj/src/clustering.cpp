#include "pcgrbm/clustering.hpp"

#include <algorithm>
#include <functional>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "pcgrbm/kernels.hpp"
#include "pcgrbm/rng.hpp"

namespace pcgrbm {

namespace {

using EIdx = Eigen::Index;

void require(bool ok, const std::string& what) {
    if (!ok) throw InvalidArgument(what);
}

Matrix centroid_means(const Matrix& data, const std::vector<Index>& assignments, const Matrix& previous) {
    Matrix sums = Matrix::Zero(previous.rows(), previous.cols());
    std::vector<Index> counts(static_cast<std::size_t>(previous.rows()), 0);
    for (std::size_t i = 0; i < assignments.size(); ++i) {
        sums.row(static_cast<EIdx>(assignments[i])) += data.row(static_cast<EIdx>(i));
        ++counts[assignments[i]];
    }
    for (EIdx c = 0; c < sums.rows(); ++c) {
        if (counts[static_cast<std::size_t>(c)] == 0) {
            sums.row(c) = previous.row(c);
        } else {
            sums.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
        }
    }
    return sums;
}

using AssignStep = std::function<void(const Matrix& centroids, std::vector<Index>& assignment, Vector& sq_distance)>;
using CanMove = std::function<bool(Index row)>;

/// Lloyd iterations shared by k-means and COP-KMeans. Empty clusters take the admissible
/// point farthest from its centroid (lowest index on ties).
KMeansFit lloyd(const Matrix& data, Matrix centroids, Index max_iterations, const AssignStep& assign,
                const CanMove& can_move) {
    const Index k = static_cast<Index>(centroids.rows());
    KMeansFit fit;
    std::vector<Index> assignment;
    std::vector<Index> previous;
    Vector sq_distance;
    Index iteration = 0;
    bool converged = false;

    while (iteration < max_iterations) {
        ++iteration;
        assign(centroids, assignment, sq_distance);

        std::vector<Index> counts(k, 0);
        for (Index c : assignment) ++counts[c];
        bool had_empty = false;
        for (Index c = 0; c < k; ++c) {
            if (counts[c] > 0) continue;
            had_empty = true;
            Index far = assignment.size();
            double far_d = -1.0;
            for (Index i = 0; i < assignment.size(); ++i) {
                if (counts[assignment[i]] <= 1 || !can_move(i)) continue;
                if (sq_distance(static_cast<EIdx>(i)) > far_d) {
                    far_d = sq_distance(static_cast<EIdx>(i));
                    far = i;
                }
            }
            if (far == assignment.size()) continue;
            centroids.row(static_cast<EIdx>(c)) = data.row(static_cast<EIdx>(far));
            --counts[assignment[far]];
            assignment[far] = c;
            counts[c] = 1;
            sq_distance(static_cast<EIdx>(far)) = 0.0;
        }

        if (!had_empty && assignment == previous) {
            converged = true;
            break;
        }
        centroids = centroid_means(data, assignment, centroids);
        fit.wcss_trace.push_back(within_cluster_ss(data, assignment, centroids));
        previous = assignment;
    }

    fit.centroids = std::move(centroids);
    fit.wcss = within_cluster_ss(data, assignment, fit.centroids);
    fit.result.assignments = std::move(assignment);
    fit.result.k = k;
    fit.result.converged = converged;
    fit.result.iterations = iteration;
    return fit;
}

}  // namespace

void ClusteringResult::validate() const {
    require(k >= 1, "clustering result needs k >= 1");
    std::vector<bool> used(k, false);
    for (Index a : assignments) {
        require(a < k, "cluster id out of range");
        used[a] = true;
    }
    require(std::all_of(used.begin(), used.end(), [](bool u) { return u; }), "cluster ids are not dense");
}

ClusteringResult compact(ClusteringResult r) {
    std::map<Index, Index> ids;
    for (Index& a : r.assignments) {
        const auto [it, inserted] = ids.emplace(a, ids.size());
        a = it->second;
    }
    r.k = ids.size();
    return r;
}

InfeasibleConstraints::InfeasibleConstraints(Index instance)
    : std::runtime_error("COP-KMeans: no feasible cluster for instance " + std::to_string(instance)),
      instance_(instance) {}

double within_cluster_ss(const Matrix& data, const std::vector<Index>& assignments, const Matrix& centroids) {
    double total = 0.0;
    for (std::size_t i = 0; i < assignments.size(); ++i)
        total += (data.row(static_cast<EIdx>(i)) - centroids.row(static_cast<EIdx>(assignments[i]))).squaredNorm();
    return total;
}

Matrix kmeanspp_seed(const Matrix& data, Index k, std::uint64_t seed) {
    const auto n = static_cast<Index>(data.rows());
    require(k >= 1 && k <= n, "k-means needs 1 <= k <= n");
    Engine rng(derive_seed(seed, {0x6b6d2b2bULL}));
    Matrix centroids(static_cast<EIdx>(k), data.cols());
    std::vector<bool> chosen(n, false);

    Index first = uniform_index(rng, n);
    centroids.row(0) = data.row(static_cast<EIdx>(first));
    chosen[first] = true;
    Vector nearest(static_cast<EIdx>(n));
    for (Index i = 0; i < n; ++i) nearest(static_cast<EIdx>(i)) = (data.row(static_cast<EIdx>(i)) - centroids.row(0)).squaredNorm();

    for (Index c = 1; c < k; ++c) {
        const double total = nearest.sum();
        Index pick = n;
        if (total > 0.0) {
            const double target = uniform01(rng) * total;
            double acc = 0.0;
            for (Index i = 0; i < n; ++i) {
                acc += nearest(static_cast<EIdx>(i));
                if (acc > target && nearest(static_cast<EIdx>(i)) > 0.0) {
                    pick = i;
                    break;
                }
            }
            if (pick == n) {
                // Rounding left target beyond the running sum: take the last positive weight.
                for (Index i = n; i-- > 0;)
                    if (nearest(static_cast<EIdx>(i)) > 0.0) {
                        pick = i;
                        break;
                    }
            }
        } else {
            // Every point coincides with a chosen centroid.
            for (Index i = 0; i < n && pick == n; ++i)
                if (!chosen[i]) pick = i;
        }
        chosen[pick] = true;
        centroids.row(static_cast<EIdx>(c)) = data.row(static_cast<EIdx>(pick));
        for (Index i = 0; i < n; ++i) {
            const double d = (data.row(static_cast<EIdx>(i)) - centroids.row(static_cast<EIdx>(c))).squaredNorm();
            nearest(static_cast<EIdx>(i)) = std::min(nearest(static_cast<EIdx>(i)), d);
        }
    }
    return centroids;
}

KMeansFit kmeans_fit(const Matrix& data, Index k, std::uint64_t seed, const KMeansOptions& options) {
    require(k >= 1 && k <= static_cast<Index>(data.rows()), "k-means needs 1 <= k <= n");
    auto assign = [&](const Matrix& centroids, std::vector<Index>& assignment, Vector& sq_distance) {
        kernels::assign_nearest(data, centroids, assignment, sq_distance);
    };
    return lloyd(data, kmeanspp_seed(data, k, seed), options.max_iterations, assign, [](Index) { return true; });
}

ClusteringResult kmeans(const Matrix& data, Index k, Index restarts, std::uint64_t seed) {
    require(k >= 1 && k <= static_cast<Index>(data.rows()), "k-means needs 1 <= k <= n (k=" + std::to_string(k) +
                                                                ", n=" + std::to_string(data.rows()) + ")");
    KMeansOptions options;
    options.restarts = std::max<Index>(1, restarts);
    std::optional<KMeansFit> best;
    for (Index r = 0; r < options.restarts; ++r) {
        KMeansFit fit = kmeans_fit(data, k, derive_seed(seed, {r}), options);
        if (!best || fit.wcss < best->wcss) best = std::move(fit);
    }
    return best->result;
}

SymmetricEigen jacobi_eigen(const Matrix& symmetric, double tolerance, Index max_sweeps) {
    require(symmetric.rows() == symmetric.cols(), "jacobi_eigen needs a square matrix");
    const EIdx n = symmetric.rows();
    Matrix a = symmetric;
    Matrix v = Matrix::Identity(n, n);
    SymmetricEigen out;

    auto off_norm = [&] {
        double s = 0.0;
        for (EIdx i = 0; i < n; ++i)
            for (EIdx j = i + 1; j < n; ++j) s += a(i, j) * a(i, j);
        return std::sqrt(2.0 * s);
    };

    while (out.sweeps < max_sweeps && off_norm() > tolerance) {
        ++out.sweeps;
        for (EIdx p = 0; p < n; ++p) {
            for (EIdx q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(1.0 + theta * theta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;
                for (EIdx k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (EIdx k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (EIdx k = 0; k < n; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<EIdx> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), EIdx{0});
    std::stable_sort(order.begin(), order.end(), [&](EIdx x, EIdx y) { return a(x, x) > a(y, y); });
    out.values.resize(n);
    out.vectors.resize(n, n);
    for (EIdx c = 0; c < n; ++c) {
        out.values(c) = a(order[static_cast<std::size_t>(c)], order[static_cast<std::size_t>(c)]);
        out.vectors.col(c) = v.col(order[static_cast<std::size_t>(c)]);
    }
    return out;
}

double median_pairwise_distance(const Matrix& data) {
    const Matrix sq = kernels::squared_distances(data);
    std::vector<double> d;
    d.reserve(static_cast<std::size_t>(data.rows() * (data.rows() - 1) / 2));
    for (EIdx i = 0; i < sq.rows(); ++i)
        for (EIdx j = i + 1; j < sq.cols(); ++j) d.push_back(std::sqrt(sq(i, j)));
    require(!d.empty(), "median distance needs at least two points");
    const auto mid = d.size() / 2;
    std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid), d.end());
    const double upper = d[mid];
    if (d.size() % 2 == 1) return upper;
    const double lower = *std::max_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
}

Matrix normalized_affinity(const Matrix& data, double kernel_width) {
    require(kernel_width > 0.0, "spectral kernel width must be positive");
    Matrix a = kernels::squared_distances(data);
    const double scale = 1.0 / (2.0 * kernel_width * kernel_width);
    for (EIdx i = 0; i < a.rows(); ++i)
        for (EIdx j = 0; j < a.cols(); ++j) a(i, j) = (i == j) ? 0.0 : std::exp(-a(i, j) * scale);
    const Vector degree = a.rowwise().sum();
    for (EIdx i = 0; i < degree.size(); ++i)
        if (!(degree(i) > 0.0)) throw InvalidArgument("spectral: point " + std::to_string(i) + " has zero degree");
    const Vector inv_sqrt = degree.cwiseSqrt().cwiseInverse();
    return inv_sqrt.asDiagonal() * a * inv_sqrt.asDiagonal();
}

ClusteringResult spectral(const Matrix& data, Index k, std::uint64_t seed, const SpectralOptions& options) {
    const auto n = static_cast<Index>(data.rows());
    require(k >= 2 && k <= n, "spectral clustering needs 2 <= k <= n");
    const double width = options.kernel_width ? *options.kernel_width : median_pairwise_distance(data);
    if (!(width > 0.0)) throw InvalidArgument("spectral: all points coincide (zero kernel width)");

    const SymmetricEigen eig = jacobi_eigen(normalized_affinity(data, width), options.jacobi_tolerance);
    Matrix embedding = eig.vectors.leftCols(static_cast<EIdx>(k));
    for (EIdx i = 0; i < embedding.rows(); ++i) {
        const double norm = embedding.row(i).norm();
        if (norm > 0.0) embedding.row(i) /= norm;
    }
    ClusteringResult r = kmeans(embedding, k, options.kmeans_restarts, seed);
    r.converged = r.converged && eig.sweeps < 100;
    return r;
}

void ApConfig::validate() const {
    require(damping >= 0.5 && damping < 1.0, "AP damping must lie in [0.5, 1)");
    require(max_iterations >= 1, "AP needs max_iterations >= 1");
    require(convergence_window >= 1, "AP needs convergence_window >= 1");
}

ApFit affinity_propagation_fit(const Matrix& data, const ApConfig& cfg) {
    cfg.validate();
    const EIdx n = data.rows();
    require(n >= 2, "affinity propagation needs n >= 2");

    Matrix s = -kernels::squared_distances(data);
    double preference = 0.0;
    if (cfg.preference) {
        preference = *cfg.preference;
    } else {
        std::vector<double> off;
        off.reserve(static_cast<std::size_t>(n * (n - 1)));
        for (EIdx i = 0; i < n; ++i)
            for (EIdx j = 0; j < n; ++j)
                if (i != j) off.push_back(s(i, j));
        const auto mid = off.size() / 2;
        std::nth_element(off.begin(), off.begin() + static_cast<std::ptrdiff_t>(mid), off.end());
        preference = off[mid];
        if (off.size() % 2 == 0) {
            const double lower = *std::max_element(off.begin(), off.begin() + static_cast<std::ptrdiff_t>(mid));
            preference = 0.5 * (preference + lower);
        }
    }
    s.diagonal().setConstant(preference);

    Matrix r = Matrix::Zero(n, n);
    Matrix a = Matrix::Zero(n, n);
    const double keep = cfg.damping;
    std::vector<Index> exemplars;
    std::vector<Index> last;
    Index stable = 0;
    Index iteration = 0;
    bool converged = false;

    auto current_exemplars = [&] {
        std::vector<Index> e;
        for (EIdx k = 0; k < n; ++k)
            if (r(k, k) + a(k, k) > 0.0) e.push_back(static_cast<Index>(k));
        return e;
    };

    while (iteration < cfg.max_iterations) {
        ++iteration;
        r = keep * r + (1.0 - keep) * kernels::ap_responsibility(s, a);
        a = keep * a + (1.0 - keep) * kernels::ap_availability(r);
        exemplars = current_exemplars();
        stable = (iteration > 1 && exemplars == last) ? stable + 1 : 1;
        last = exemplars;
        if (stable >= cfg.convergence_window && !exemplars.empty()) {
            converged = true;
            break;
        }
    }

    if (exemplars.empty()) {
        EIdx best = 0;
        for (EIdx k = 1; k < n; ++k)
            if (r(k, k) + a(k, k) > r(best, best) + a(best, best)) best = k;
        exemplars.push_back(static_cast<Index>(best));
    }

    ApFit fit;
    fit.exemplars = exemplars;
    fit.result.k = exemplars.size();
    fit.result.converged = converged;
    fit.result.iterations = iteration;
    fit.result.assignments.resize(static_cast<std::size_t>(n));
    for (EIdx i = 0; i < n; ++i) {
        Index best = 0;
        for (Index c = 0; c < exemplars.size(); ++c) {
            if (static_cast<EIdx>(exemplars[c]) == i) {
                best = c;
                break;
            }
            if (s(i, static_cast<EIdx>(exemplars[c])) > s(i, static_cast<EIdx>(exemplars[best]))) best = c;
        }
        fit.result.assignments[static_cast<std::size_t>(i)] = best;
    }
    return fit;
}

ClusteringResult affinity_propagation(const Matrix& data, const ApConfig& cfg) {
    return affinity_propagation_fit(data, cfg).result;
}

ClusteringResult cop_kmeans(const Matrix& data, Index k, const ConstraintSet& constraints, std::uint64_t seed,
                            const CopKMeansOptions& options) {
    const auto n = static_cast<Index>(data.rows());
    require(k >= 1 && k <= n, "COP-KMeans needs 1 <= k <= n");
    constraints.validate(n);

    std::vector<std::vector<Index>> must(n), cannot(n);
    for (auto [i, j] : constraints.must) {
        must[i].push_back(j);
        must[j].push_back(i);
    }
    for (auto [i, j] : constraints.cannot) {
        cannot[i].push_back(j);
        cannot[j].push_back(i);
    }

    constexpr Index unassigned = std::numeric_limits<Index>::max();
    auto assign = [&](const Matrix& centroids, std::vector<Index>& assignment, Vector& sq_distance) {
        assignment.assign(n, unassigned);
        sq_distance.resize(static_cast<EIdx>(n));
        std::vector<std::pair<double, Index>> order(k);
        for (Index i = 0; i < n; ++i) {
            for (Index c = 0; c < k; ++c)
                order[c] = {(data.row(static_cast<EIdx>(i)) - centroids.row(static_cast<EIdx>(c))).squaredNorm(), c};
            std::sort(order.begin(), order.end());
            bool placed = false;
            for (const auto& [dist, c] : order) {
                const bool violates =
                    std::any_of(must[i].begin(), must[i].end(),
                                [&](Index j) { return assignment[j] != unassigned && assignment[j] != c; }) ||
                    std::any_of(cannot[i].begin(), cannot[i].end(), [&](Index j) { return assignment[j] == c; });
                if (!violates) {
                    assignment[i] = c;
                    sq_distance(static_cast<EIdx>(i)) = dist;
                    placed = true;
                    break;
                }
            }
            if (!placed) throw InfeasibleConstraints(i);
        }
    };
    // A singleton never violates cannot-links; moving a must-linked point would split its pair.
    auto can_move = [&](Index i) { return must[i].empty(); };

    std::optional<KMeansFit> best;
    for (Index r = 0; r < std::max<Index>(1, options.restarts); ++r) {
        KMeansFit fit =
            lloyd(data, kmeanspp_seed(data, k, derive_seed(seed, {r})), options.max_iterations, assign, can_move);
        if (!best || fit.wcss < best->wcss) best = std::move(fit);
    }
    std::vector<bool> used(k, false);
    for (Index a : best->result.assignments) used[a] = true;
    if (std::all_of(used.begin(), used.end(), [](bool u) { return u; })) return best->result;
    return compact(best->result);
}

Index count_violations(const std::vector<Index>& assignments, const ConstraintSet& constraints) {
    Index violations = 0;
    for (auto [i, j] : constraints.must)
        if (assignments.at(i) != assignments.at(j)) ++violations;
    for (auto [i, j] : constraints.cannot)
        if (assignments.at(i) == assignments.at(j)) ++violations;
    return violations;
}

}  // namespace pcgrbm
