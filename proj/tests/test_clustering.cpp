#include <doctest.h>

#include <algorithm>
#include <set>

#include <Eigen/Eigenvalues>

#include "pcgrbm/clustering.hpp"
#include "pcgrbm/eval.hpp"
#include "test_util.hpp"

using namespace pcgrbm;

namespace {

Labels as_labels(const std::vector<Index>& a) { return Labels(a.begin(), a.end()); }

bool same_partition(const std::vector<Index>& a, const std::vector<Index>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = i + 1; j < a.size(); ++j)
            if ((a[i] == a[j]) != (b[i] == b[j])) return false;
    return true;
}

}  // namespace

TEST_SUITE("clustering") {
    TEST_CASE("compact renumbers by first appearance") {
        ClusteringResult r;
        r.assignments = {5, 2, 5, 9};
        r.k = 10;
        const ClusteringResult c = compact(r);
        CHECK(c.assignments == std::vector<Index>{0, 1, 0, 2});
        CHECK(c.k == 3);
        CHECK_NOTHROW(c.validate());
        CHECK_THROWS_AS(r.validate(), InvalidArgument);
    }

    TEST_CASE("k-means with k = n reaches zero within-cluster sum of squares") {
        const Matrix x = synth_blobs(12, 3, 2, 2.0, 1).features;
        const KMeansFit fit = kmeans_fit(x, 12, 4);
        CHECK(fit.wcss == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(std::set<Index>(fit.result.assignments.begin(), fit.result.assignments.end()).size() == 12);
    }

    TEST_CASE("k-means with k = 1 places the centroid at the mean") {
        const Matrix x = synth_blobs(30, 3, 4, 2.0, 2).features;
        const KMeansFit fit = kmeans_fit(x, 1, 1);
        CHECK((fit.centroids.row(0) - x.colwise().mean()).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(std::all_of(fit.result.assignments.begin(), fit.result.assignments.end(), [](Index a) { return a == 0; }));
    }

    TEST_CASE("Lloyd iterations never increase the within-cluster sum of squares") {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            const Matrix x = synth_blobs(120, 4, 3, 1.0, seed).features;
            KMeansOptions opt;
            opt.restarts = 1;
            const KMeansFit fit = kmeans_fit(x, 4, seed, opt);
            for (std::size_t i = 1; i < fit.wcss_trace.size(); ++i)
                CHECK(fit.wcss_trace[i] <= fit.wcss_trace[i - 1] + 1e-9);
            CHECK(fit.wcss == doctest::Approx(within_cluster_ss(x, fit.result.assignments, fit.centroids)));
        }
    }

    TEST_CASE("k-means is deterministic and recovers separated blobs") {
        const Dataset d = synth_blobs(150, 3, 2, 30.0, 5);
        const ClusteringResult a = kmeans(d.features, 3, 10, 11);
        CHECK(a.assignments == kmeans(d.features, 3, 10, 11).assignments);
        CHECK(accuracy(*d.labels, a) == 1.0);
        CHECK_THROWS_AS(kmeans(d.features, 0, 10, 1), InvalidArgument);
        CHECK_THROWS_AS(kmeans(d.features, 151, 10, 1), InvalidArgument);
    }

    TEST_CASE("k-means++ picks distinct data rows") {
        const Matrix x = synth_blobs(40, 4, 3, 5.0, 3).features;
        const Matrix c = kmeanspp_seed(x, 4, 9);
        REQUIRE(c.rows() == 4);
        for (Eigen::Index i = 0; i < 4; ++i) {
            bool found = false;
            for (Eigen::Index r = 0; r < x.rows(); ++r) found = found || (x.row(r) == c.row(i));
            CHECK(found);
        }
        for (Eigen::Index i = 0; i < 4; ++i)
            for (Eigen::Index j = i + 1; j < 4; ++j) CHECK(c.row(i) != c.row(j));
    }

    TEST_CASE("Jacobi eigensolver agrees with a library solver") {
        Engine rng(4);
        for (Eigen::Index n : {1, 2, 5, 12}) {
            const Matrix a = testutil::random_matrix(rng, n, n);
            const Matrix s = (a + a.transpose()) / 2;
            const SymmetricEigen mine = jacobi_eigen(s);
            const Eigen::MatrixXd dense = s;
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ref(dense);
            const Vector expected = ref.eigenvalues().reverse();
            CHECK((mine.values - expected).cwiseAbs().maxCoeff() < 1e-9);
            for (Eigen::Index i = 1; i < n; ++i) CHECK(mine.values(i) <= mine.values(i - 1));
            CHECK((s * mine.vectors - mine.vectors * mine.values.asDiagonal()).cwiseAbs().maxCoeff() < 1e-8);
            CHECK((mine.vectors.transpose() * mine.vectors - Matrix::Identity(n, n)).cwiseAbs().maxCoeff() < 1e-9);
        }
    }

    TEST_CASE("normalized affinity spectrum lies in [-1, 1]") {
        const Matrix x = synth_blobs(30, 3, 2, 3.0, 6).features;
        const Matrix m = normalized_affinity(x, median_pairwise_distance(x));
        CHECK((m - m.transpose()).cwiseAbs().maxCoeff() < 1e-15);
        CHECK(m.diagonal().isZero());
        const SymmetricEigen e = jacobi_eigen(m);
        CHECK(e.values(0) == doctest::Approx(1.0));
        CHECK(e.values.minCoeff() >= -1.0 - 1e-9);
    }

    TEST_CASE("median pairwise distance") {
        Matrix x(3, 1);
        x << 0, 1, 3;
        CHECK(median_pairwise_distance(x) == 2.0);
    }

    TEST_CASE("spectral clustering co-clusters duplicates and recovers blobs") {
        Dataset d = synth_blobs(60, 3, 2, 20.0, 8);
        Matrix x(61, 2);
        x << d.features, d.features.row(7);
        const ClusteringResult r = spectral(x, 3, 1);
        CHECK(r.assignments[7] == r.assignments[60]);
        const ClusteringResult clean = spectral(d.features, 3, 1);
        CHECK(accuracy(*d.labels, clean) == 1.0);
    }

    TEST_CASE("spectral clustering is invariant to row order") {
        const Dataset d = synth_blobs(45, 3, 2, 15.0, 9);
        std::vector<Index> perm(45);
        for (Index i = 0; i < 45; ++i) perm[i] = i;
        Engine rng(2);
        shuffle(perm, rng);
        const Dataset shuffled = d.subset(perm);
        const ClusteringResult a = spectral(d.features, 3, 3);
        const ClusteringResult b = spectral(shuffled.features, 3, 3);
        std::vector<Index> back(45);
        for (Index i = 0; i < 45; ++i) back[perm[i]] = b.assignments[i];
        CHECK(same_partition(a.assignments, back));
    }

    TEST_CASE("affinity propagation on two identical points") {
        Matrix x(2, 2);
        x << 1, 1, 1, 1;
        const ApFit fit = affinity_propagation_fit(x);
        CHECK(fit.result.k == 1);
        CHECK(fit.exemplars.size() == 1);
        CHECK(fit.result.assignments[0] == fit.result.assignments[1]);
    }

    TEST_CASE("affinity propagation exemplars label themselves") {
        const Matrix x = synth_blobs(60, 3, 2, 20.0, 10).features;
        const ApFit fit = affinity_propagation_fit(x);
        REQUIRE(fit.exemplars.size() == fit.result.k);
        for (Index c = 0; c < fit.result.k; ++c) CHECK(fit.result.assignments[fit.exemplars[c]] == c);
        CHECK_NOTHROW(fit.result.validate());
    }

    TEST_CASE("affinity propagation damping rarely changes the fixed point") {
        int compared = 0, agreed = 0;
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            const Matrix x = synth_blobs(45, 3, 2, 20.0, seed).features;
            ApConfig slow;
            slow.damping = 0.9;
            slow.max_iterations = 5000;
            ApConfig fast = slow;
            fast.damping = 0.5;
            ApConfig mid = slow;
            mid.damping = 0.7;
            const ApFit a = affinity_propagation_fit(x, slow);
            const ApFit b = affinity_propagation_fit(x, fast);
            const ApFit c = affinity_propagation_fit(x, mid);
            REQUIRE(a.result.converged);
            REQUIRE(c.result.converged);
            std::vector<Index> ea = a.exemplars, eb = b.exemplars, ec = c.exemplars;
            std::sort(ea.begin(), ea.end());
            std::sort(eb.begin(), eb.end());
            std::sort(ec.begin(), ec.end());
            CHECK(ea == ec);
            if (!b.result.converged) continue;
            ++compared;
            agreed += ea == eb;
        }
        CHECK(compared >= 8);
        CHECK(agreed >= 7);
    }

    TEST_CASE("affinity propagation config validation") {
        ApConfig cfg;
        cfg.damping = 1.0;
        CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
        cfg.damping = 0.4;
        CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
    }

    TEST_CASE("COP-KMeans without constraints matches k-means") {
        const Matrix x = synth_blobs(90, 3, 3, 2.0, 13).features;
        const ClusteringResult cop = cop_kmeans(x, 3, ConstraintSet{}, 21);
        const ClusteringResult plain = kmeans(x, 3, 10, 21);
        CHECK(same_partition(cop.assignments, plain.assignments));
    }

    TEST_CASE("COP-KMeans honors a must-link across blobs") {
        const Dataset d = synth_blobs(40, 2, 2, 30.0, 14);
        Index a = 0, b = 0;
        for (Index i = 0; i < 40; ++i) {
            if ((*d.labels)[i] == 0) a = i;
            if ((*d.labels)[i] == 1) b = i;
        }
        ConstraintSet c;
        c.must = {{std::min(a, b), std::max(a, b)}};
        const ClusteringResult r = cop_kmeans(d.features, 2, c, 3);
        CHECK(r.assignments[a] == r.assignments[b]);
        CHECK(count_violations(r.assignments, c) == 0);
    }

    TEST_CASE("COP-KMeans reports the infeasible instance") {
        Matrix x(3, 1);
        x << 0, 1, 2;
        ConstraintSet c;
        c.must = {{0, 1}, {1, 2}};
        c.cannot = {{0, 2}};
        try {
            cop_kmeans(x, 2, c, 1);
            FAIL("expected infeasibility");
        } catch (const InfeasibleConstraints& e) {
            CHECK(e.instance() < 3);
        }
    }

    TEST_CASE("count_violations") {
        ConstraintSet c;
        c.must = {{0, 1}, {2, 3}};
        c.cannot = {{0, 2}};
        CHECK(count_violations({0, 0, 1, 1}, c) == 0);
        CHECK(count_violations({0, 1, 0, 0}, c) == 2);
        CHECK(as_labels({1, 2}) == Labels{1, 2});
    }
}
