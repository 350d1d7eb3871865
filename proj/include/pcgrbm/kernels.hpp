#pragma once

// Data-parallel inner loops. Every kernel has a serial reference path (plain loops,
// kept for tests and benchmarks) and an OpenMP path that parallelizes over independent
// rows. The OpenMP path never reduces across threads, so its output does not depend on
// the thread count.

#include <vector>

#include "pcgrbm/types.hpp"

namespace pcgrbm::kernels {

enum class Exec { serial, parallel };

/// Sets the OpenMP thread count used by parallel kernels (no-op without OpenMP).
void set_num_threads(int threads);
int num_threads();

double logistic(double x);

/// Row r: logistic(b + (V_r ./ sigma) W). V is n x p, W is p x q; result is n x q.
Matrix hidden_probs(const Matrix& visible, const Matrix& weights, const Vector& hidden_bias, const Vector& sigma,
                    Exec exec = Exec::parallel);

/// Row r: a + H_r W^T. H is n x q; result is n x p.
Matrix reconstruct(const Matrix& hidden, const Matrix& weights, const Vector& visible_bias,
                   Exec exec = Exec::parallel);

/// Symmetric n x n matrix of squared Euclidean distances between rows.
Matrix squared_distances(const Matrix& x, Exec exec = Exec::parallel);

/// Mean gradient of ||d W^T||^2 over the rows d of `diffs` (N x q); result is p x q.
/// The serial path evaluates the two-term per-entry bracket literally; the parallel path
/// uses the equivalent matrix identity (2/N) sum (W d^T) d.
Matrix constraint_gradient(const Matrix& weights, const Matrix& diffs, Exec exec = Exec::parallel);

/// Nearest centroid per row, ties to the lowest centroid index.
void assign_nearest(const Matrix& x, const Matrix& centroids, std::vector<Index>& assignment,
                    Vector& sq_distance, Exec exec = Exec::parallel);

/// Affinity propagation responsibility update r(i,k) = s(i,k) - max_{k' != k} (a(i,k') + s(i,k')), undamped.
Matrix ap_responsibility(const Matrix& similarity, const Matrix& availability, Exec exec = Exec::parallel);

/// Affinity propagation availability update from responsibilities, undamped.
Matrix ap_availability(const Matrix& responsibility, Exec exec = Exec::parallel);

}  // namespace pcgrbm::kernels
