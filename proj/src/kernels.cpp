#include "pcgrbm/kernels.hpp"

#include <cmath>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace pcgrbm::kernels {

namespace {

using EIdx = Eigen::Index;

void check(bool ok, const char* what) {
    if (!ok) throw InvalidArgument(what);
}

}  // namespace

void set_num_threads(int threads) {
#ifdef _OPENMP
    if (threads > 0) omp_set_num_threads(threads);
#else
    (void)threads;
#endif
}

int num_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

double logistic(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Matrix hidden_probs(const Matrix& visible, const Matrix& weights, const Vector& hidden_bias, const Vector& sigma,
                    Exec exec) {
    check(visible.cols() == weights.rows(), "hidden_probs: visible width does not match W rows");
    check(hidden_bias.size() == weights.cols(), "hidden_probs: hidden bias length does not match W cols");
    check(sigma.size() == weights.rows(), "hidden_probs: sigma length does not match W rows");
    const EIdx n = visible.rows();
    const EIdx p = weights.rows();
    const EIdx q = weights.cols();
    Matrix out(n, q);

    if (exec == Exec::serial) {
        for (EIdx r = 0; r < n; ++r) {
            for (EIdx j = 0; j < q; ++j) {
                double act = hidden_bias(j);
                for (EIdx i = 0; i < p; ++i) act += visible(r, i) / sigma(i) * weights(i, j);
                out(r, j) = logistic(act);
            }
        }
        return out;
    }

    const RowVector inv_sigma = sigma.cwiseInverse().transpose();
    const RowVector bias = hidden_bias.transpose();
#pragma omp parallel for schedule(static)
    for (EIdx r = 0; r < n; ++r) {
        const RowVector scaled = visible.row(r).cwiseProduct(inv_sigma);
        RowVector act = scaled * weights + bias;
        for (EIdx j = 0; j < q; ++j) out(r, j) = logistic(act(j));
    }
    return out;
}

Matrix reconstruct(const Matrix& hidden, const Matrix& weights, const Vector& visible_bias, Exec exec) {
    check(hidden.cols() == weights.cols(), "reconstruct: hidden width does not match W cols");
    check(visible_bias.size() == weights.rows(), "reconstruct: visible bias length does not match W rows");
    const EIdx n = hidden.rows();
    const EIdx p = weights.rows();
    const EIdx q = weights.cols();
    Matrix out(n, p);

    if (exec == Exec::serial) {
        for (EIdx r = 0; r < n; ++r) {
            for (EIdx i = 0; i < p; ++i) {
                double v = visible_bias(i);
                for (EIdx j = 0; j < q; ++j) v += hidden(r, j) * weights(i, j);
                out(r, i) = v;
            }
        }
        return out;
    }

    const RowVector bias = visible_bias.transpose();
#pragma omp parallel for schedule(static)
    for (EIdx r = 0; r < n; ++r) out.row(r) = hidden.row(r) * weights.transpose() + bias;
    return out;
}

Matrix squared_distances(const Matrix& x, Exec exec) {
    const EIdx n = x.rows();
    Matrix out(n, n);
    if (exec == Exec::serial) {
        for (EIdx i = 0; i < n; ++i) {
            out(i, i) = 0.0;
            for (EIdx j = i + 1; j < n; ++j) {
                double s = 0.0;
                for (EIdx c = 0; c < x.cols(); ++c) {
                    const double d = x(i, c) - x(j, c);
                    s += d * d;
                }
                out(i, j) = s;
                out(j, i) = s;
            }
        }
        return out;
    }

    // Each (i, j) is computed independently as (x_i - x_j)^2 so out is exactly symmetric.
#pragma omp parallel for schedule(dynamic, 16)
    for (EIdx i = 0; i < n; ++i) {
        for (EIdx j = 0; j < n; ++j) {
            if (i == j) {
                out(i, j) = 0.0;
            } else if (i < j) {
                out(i, j) = (x.row(i) - x.row(j)).squaredNorm();
            } else {
                out(i, j) = (x.row(j) - x.row(i)).squaredNorm();
            }
        }
    }
    return out;
}

Matrix constraint_gradient(const Matrix& weights, const Matrix& diffs, Exec exec) {
    check(diffs.cols() == weights.cols(), "constraint_gradient: pair width does not match W cols");
    const EIdx p = weights.rows();
    const EIdx q = weights.cols();
    const EIdx pairs = diffs.rows();
    Matrix grad = Matrix::Zero(p, q);
    if (pairs == 0) return grad;
    const double inv_n = 1.0 / static_cast<double>(pairs);

    if (exec == Exec::serial) {
        for (EIdx i = 0; i < p; ++i) {
            for (EIdx j = 0; j < q; ++j) {
                double acc = 0.0;
                for (EIdx m = 0; m < pairs; ++m) {
                    // h' keeps only component j of d = h_s - h_t.
                    const double masked = diffs(m, j);
                    // (h_s - h_t) W^T restricted to visible unit i, times (h')^T.
                    double proj_row = 0.0;
                    for (EIdx k = 0; k < q; ++k) proj_row += diffs(m, k) * weights(i, k);
                    const double first = proj_row * masked;
                    // h' W (h_s - h_t)^T, same visible unit i.
                    double proj_col = 0.0;
                    for (EIdx k = 0; k < q; ++k) proj_col += weights(i, k) * diffs(m, k);
                    const double second = masked * proj_col;
                    acc += first + second;
                }
                grad(i, j) = acc * inv_n;
            }
        }
        return grad;
    }

#pragma omp parallel for schedule(static)
    for (EIdx i = 0; i < p; ++i) {
        const Vector proj = diffs * weights.row(i).transpose();  // W_i d^T for every pair
        grad.row(i) = (2.0 * inv_n) * (proj.transpose() * diffs);
    }
    return grad;
}

void assign_nearest(const Matrix& x, const Matrix& centroids, std::vector<Index>& assignment, Vector& sq_distance,
                    Exec exec) {
    check(x.cols() == centroids.cols(), "assign_nearest: dimension mismatch");
    check(centroids.rows() >= 1, "assign_nearest: no centroids");
    const EIdx n = x.rows();
    const EIdx k = centroids.rows();
    assignment.assign(static_cast<std::size_t>(n), 0);
    sq_distance.resize(n);

    auto nearest = [&](EIdx r, auto&& dist) {
        Index best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (EIdx c = 0; c < k; ++c) {
            const double d = dist(r, c);
            if (d < best_d) {
                best_d = d;
                best = static_cast<Index>(c);
            }
        }
        assignment[static_cast<std::size_t>(r)] = best;
        sq_distance(r) = best_d;
    };

    if (exec == Exec::serial) {
        auto dist = [&](EIdx r, EIdx c) {
            double s = 0.0;
            for (EIdx j = 0; j < x.cols(); ++j) {
                const double d = x(r, j) - centroids(c, j);
                s += d * d;
            }
            return s;
        };
        for (EIdx r = 0; r < n; ++r) nearest(r, dist);
        return;
    }

    auto dist = [&](EIdx r, EIdx c) { return (x.row(r) - centroids.row(c)).squaredNorm(); };
#pragma omp parallel for schedule(static)
    for (EIdx r = 0; r < n; ++r) nearest(r, dist);
}

Matrix ap_responsibility(const Matrix& similarity, const Matrix& availability, Exec exec) {
    const EIdx n = similarity.rows();
    check(similarity.cols() == n && availability.rows() == n && availability.cols() == n,
          "ap_responsibility: matrices must be n x n");
    Matrix r(n, n);

    auto row = [&](EIdx i) {
        // Largest and second largest of a(i,k) + s(i,k); ties keep the lowest index as "largest".
        double first = -std::numeric_limits<double>::infinity();
        double second = first;
        EIdx arg = 0;
        for (EIdx k = 0; k < n; ++k) {
            const double v = availability(i, k) + similarity(i, k);
            if (v > first) {
                second = first;
                first = v;
                arg = k;
            } else if (v > second) {
                second = v;
            }
        }
        for (EIdx k = 0; k < n; ++k) r(i, k) = similarity(i, k) - (k == arg ? second : first);
    };

    if (exec == Exec::serial) {
        for (EIdx i = 0; i < n; ++i) row(i);
        return r;
    }
#pragma omp parallel for schedule(static)
    for (EIdx i = 0; i < n; ++i) row(i);
    return r;
}

Matrix ap_availability(const Matrix& responsibility, Exec exec) {
    const EIdx n = responsibility.rows();
    check(responsibility.cols() == n, "ap_availability: matrix must be n x n");
    Matrix a(n, n);

    auto column = [&](EIdx k) {
        double positive_sum = 0.0;
        for (EIdx i = 0; i < n; ++i)
            if (i != k) positive_sum += std::max(0.0, responsibility(i, k));
        for (EIdx i = 0; i < n; ++i) {
            if (i == k) {
                a(k, k) = positive_sum;
            } else {
                const double without_i = positive_sum - std::max(0.0, responsibility(i, k));
                a(i, k) = std::min(0.0, responsibility(k, k) + without_i);
            }
        }
    };

    if (exec == Exec::serial) {
        for (EIdx k = 0; k < n; ++k) column(k);
        return a;
    }
#pragma omp parallel for schedule(static)
    for (EIdx k = 0; k < n; ++k) column(k);
    return a;
}

}  // namespace pcgrbm::kernels
