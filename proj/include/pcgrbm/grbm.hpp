#pragma once

#include <cstdint>
#include <functional>

#include "pcgrbm/data.hpp"
#include "pcgrbm/rng.hpp"
#include "pcgrbm/types.hpp"

namespace pcgrbm {

/// Gaussian-visible, binary-hidden RBM parameters. W is p x q.
struct GrbmParams {
    Matrix weights;
    Vector visible_bias;
    Vector hidden_bias;
    Vector sigma;

    [[nodiscard]] Index visible() const { return static_cast<Index>(weights.rows()); }
    [[nodiscard]] Index hidden() const { return static_cast<Index>(weights.cols()); }
    void validate() const;

    /// W ~ N(0, 0.01^2) i.i.d., zero biases, unit sigma.
    static GrbmParams initialize(Index p, Index q, std::uint64_t seed);
};

/// Batch-averaged contrastive-divergence statistics.
struct CdStats {
    Matrix pos_assoc;  ///< <v h^T> under the data
    Matrix neg_assoc;  ///< <v h^T> under the one-step reconstruction
    Vector pos_v, neg_v;
    Vector pos_h, neg_h;
    Index batch_size = 0;
    double recon_sq_error = 0.0;  ///< mean over rows of ||v0 - v1||^2 / p

    static CdStats zeros(Index p, Index q);
};

struct TrainConfig {
    double epsilon = 1e-8;
    Index epochs = 1;
    Index batch_size = 0;  ///< 0 means full batch
    std::uint64_t seed = 0;

    void validate() const;
};

/// Everything one Gibbs half-chain produces for a batch of rows.
struct GibbsPass {
    Matrix hidden_prob;    ///< p(h|v0)
    Matrix hidden_sample;  ///< h0 ~ Bernoulli(hidden_prob)
    Matrix recon;          ///< v1 = a + h0 W^T
    Matrix recon_hidden;   ///< p(h|v1)
};

double energy(const GrbmParams& params, const Vector& v, const Vector& h);

Vector hidden_prob(const GrbmParams& params, const Vector& v);

/// Independent Bernoulli draws; u < p gives 1.
Vector sample_hidden(const Vector& probs, Engine& rng);

/// Noise-free reconstruction a + h W^T.
Vector reconstruct_visible(const GrbmParams& params, const Vector& h);

/// Seed of the random stream for row `row` in a pass seeded with `pass_seed`.
std::uint64_t row_stream(std::uint64_t pass_seed, Index row);

/// Seed for the pass of `epoch` (0-based) and mini-batch `batch` of a training run.
std::uint64_t epoch_stream(std::uint64_t train_seed, Index epoch, Index batch);

/// One Gibbs half-chain for every row of `batch`. Row r samples from row_stream(pass_seed, row_offset + r).
GibbsPass gibbs_pass(const GrbmParams& params, const Matrix& batch, std::uint64_t pass_seed, Index row_offset = 0);

/// Averages of a Gibbs pass. Associations use hidden probabilities on both ends.
CdStats summarize(const Matrix& batch, const GibbsPass& pass);

CdStats cd1_step(const GrbmParams& params, const Matrix& batch, std::uint64_t pass_seed, Index row_offset = 0);

GrbmParams apply_cd_update(const GrbmParams& params, const CdStats& stats, double epsilon);

struct EpochReport {
    Index epoch = 0;  ///< 1-based
    double recon_mse = 0.0;
    double j_must = 0.0;
    double j_cannot = 0.0;
    double mean_must_distance = 0.0;
    double mean_cannot_distance = 0.0;
};

using EpochObserver = std::function<void(const EpochReport&, const GrbmParams&)>;

/// Row ranges of each mini-batch for n rows; one range when batch_size is 0 or >= n.
std::vector<std::pair<Index, Index>> batch_ranges(Index n, Index batch_size);

GrbmParams train_grbm(const Dataset& d, const TrainConfig& cfg, Index q, const EpochObserver& observer = {});

/// Hidden probabilities for every row; no sampling.
Matrix extract_features(const GrbmParams& params, const Dataset& d);

}  // namespace pcgrbm
