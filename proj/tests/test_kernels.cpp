#include <doctest.h>

#include <cmath>

#include "pcgrbm/kernels.hpp"
#include "test_util.hpp"

using namespace pcgrbm;
using kernels::Exec;

TEST_SUITE("kernels") {
    TEST_CASE("logistic is stable at extreme inputs") {
        CHECK(kernels::logistic(0.0) == 0.5);
        CHECK(kernels::logistic(800.0) == 1.0);
        CHECK(kernels::logistic(-800.0) == 0.0);
        CHECK(kernels::logistic(1.0) == doctest::Approx(0.7310585786300049));
        CHECK(kernels::logistic(-3.0) + kernels::logistic(3.0) == doctest::Approx(1.0));
    }

    TEST_CASE("serial and parallel paths agree for every kernel") {
        Engine rng(17);
        const Matrix v = testutil::random_matrix(rng, 37, 6);
        const Matrix w = testutil::random_matrix(rng, 6, 5, 0.3);
        const Vector b = testutil::random_matrix(rng, 5, 1).col(0);
        Vector sigma = Vector::Ones(6);
        sigma(2) = 0.5;
        const Vector a = testutil::random_matrix(rng, 6, 1).col(0);

        for (int threads : {1, 2, 4}) {
            kernels::set_num_threads(threads);
            const Matrix hs = kernels::hidden_probs(v, w, b, sigma, Exec::serial);
            const Matrix hp = kernels::hidden_probs(v, w, b, sigma, Exec::parallel);
            CHECK((hs - hp).cwiseAbs().maxCoeff() <= 1e-14);

            const Matrix rs = kernels::reconstruct(hs, w, a, Exec::serial);
            const Matrix rp = kernels::reconstruct(hs, w, a, Exec::parallel);
            CHECK((rs - rp).cwiseAbs().maxCoeff() <= 1e-13);

            const Matrix ds = kernels::squared_distances(v, Exec::serial);
            const Matrix dp = kernels::squared_distances(v, Exec::parallel);
            CHECK((ds - dp).cwiseAbs().maxCoeff() <= 1e-12);

            const Matrix diffs = testutil::random_unit(rng, 9, 5) - testutil::random_unit(rng, 9, 5);
            const Matrix gs = kernels::constraint_gradient(w, diffs, Exec::serial);
            const Matrix gp = kernels::constraint_gradient(w, diffs, Exec::parallel);
            CHECK((gs - gp).cwiseAbs().maxCoeff() <= 1e-12);

            const Matrix centroids = v.topRows(4);
            std::vector<Index> as, ap;
            Vector ss, sp;
            kernels::assign_nearest(v, centroids, as, ss, Exec::serial);
            kernels::assign_nearest(v, centroids, ap, sp, Exec::parallel);
            CHECK(as == ap);
            CHECK((ss - sp).cwiseAbs().maxCoeff() <= 1e-12);

            const Matrix s = -ds;
            const Matrix avail = testutil::random_matrix(rng, 37, 37, 0.1);
            const Matrix r1 = kernels::ap_responsibility(s, avail, Exec::serial);
            const Matrix r2 = kernels::ap_responsibility(s, avail, Exec::parallel);
            CHECK((r1 - r2).cwiseAbs().maxCoeff() <= 1e-12);
            const Matrix a1 = kernels::ap_availability(r1, Exec::serial);
            const Matrix a2 = kernels::ap_availability(r1, Exec::parallel);
            CHECK((a1 - a2).cwiseAbs().maxCoeff() <= 1e-12);
        }
        kernels::set_num_threads(1);
    }

    TEST_CASE("squared distances are symmetric with a zero diagonal") {
        Engine rng(3);
        const Matrix x = testutil::random_matrix(rng, 8, 3);
        const Matrix d = kernels::squared_distances(x);
        CHECK((d - d.transpose()).cwiseAbs().maxCoeff() == 0.0);
        CHECK(d.diagonal().cwiseAbs().maxCoeff() == 0.0);
        CHECK(d(1, 4) == doctest::Approx((x.row(1) - x.row(4)).squaredNorm()));
    }

    TEST_CASE("assign_nearest breaks ties toward the lowest centroid") {
        Matrix x(1, 1);
        x << 0.0;
        Matrix c(2, 1);
        c << -1.0, 1.0;
        std::vector<Index> a;
        Vector d;
        kernels::assign_nearest(x, c, a, d);
        CHECK(a[0] == 0);
        CHECK(d(0) == 1.0);
    }

    TEST_CASE("responsibility matches its definition on a small case") {
        Matrix s(3, 3);
        s << -1, -2, -4, -3, -1, -5, -6, -2, -1;
        const Matrix a = Matrix::Zero(3, 3);
        const Matrix r = kernels::ap_responsibility(s, a);
        for (Eigen::Index i = 0; i < 3; ++i) {
            for (Eigen::Index k = 0; k < 3; ++k) {
                double best = -1e300;
                for (Eigen::Index kk = 0; kk < 3; ++kk)
                    if (kk != k) best = std::max(best, a(i, kk) + s(i, kk));
                CHECK(r(i, k) == doctest::Approx(s(i, k) - best));
            }
        }
    }

    TEST_CASE("availability matches its definition on a small case") {
        Matrix r(3, 3);
        r << 0.5, -1, 2, -0.5, 1, -2, 3, 0.25, -1;
        const Matrix a = kernels::ap_availability(r);
        for (Eigen::Index i = 0; i < 3; ++i) {
            for (Eigen::Index k = 0; k < 3; ++k) {
                double positive = 0.0;
                for (Eigen::Index ii = 0; ii < 3; ++ii)
                    if (ii != i && ii != k) positive += std::max(0.0, r(ii, k));
                const double expected = i == k ? positive : std::min(0.0, r(k, k) + positive);
                CHECK(a(i, k) == doctest::Approx(expected));
            }
        }
    }

    TEST_CASE("dimension mismatches are rejected") {
        const Matrix v = Matrix::Zero(2, 3);
        const Matrix w = Matrix::Zero(4, 2);
        CHECK_THROWS_AS(kernels::hidden_probs(v, w, Vector::Zero(2), Vector::Ones(4)), InvalidArgument);
        CHECK_THROWS_AS(kernels::reconstruct(Matrix::Zero(2, 3), w, Vector::Zero(4)), InvalidArgument);
    }
}
