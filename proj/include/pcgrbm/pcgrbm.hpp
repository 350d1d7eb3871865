#pragma once

#include <string>

#include "pcgrbm/data.hpp"
#include "pcgrbm/grbm.hpp"
#include "pcgrbm/kernels.hpp"

namespace pcgrbm {

/// How the constraint term enters the weight update.
///  - paper_exact: W += lambda*eps*(pos - neg) + (1 - lambda)*(F_M - F_C)
///  - descent:     W += lambda*eps*(pos - neg) - (1 - lambda)*rate*(F_M - F_C)
enum class SignMode { paper_exact, descent };

std::string to_string(SignMode mode);
SignMode parse_sign_mode(const std::string& text);

struct PcgrbmConfig {
    TrainConfig base;
    double lambda = 0.7;
    SignMode sign_mode = SignMode::paper_exact;
    double constraint_rate = 1.0;  ///< descent mode only
    bool use_sampled_hidden = true;

    void validate() const;
};

/// Hidden representations of the two endpoints of each constraint pair.
/// Row m of `*_first` is h_s and row m of `*_second` is h_t for pair m.
struct HiddenPairBatch {
    Matrix must_first, must_second;
    Matrix cannot_first, cannot_second;

    [[nodiscard]] Matrix must_diffs() const { return must_first - must_second; }
    [[nodiscard]] Matrix cannot_diffs() const { return cannot_first - cannot_second; }
};

/// Gathers rows of `hidden` at each pair's endpoints.
HiddenPairBatch gather_pairs(const Matrix& hidden, const ConstraintSet& constraints);

struct Penalty {
    double must = 0.0;
    double cannot = 0.0;
};

struct ConstraintGradient {
    Matrix must;
    Matrix cannot;
};

/// J_M and J_C: mean squared distance between the reconstructions h_s W^T and h_t W^T.
Penalty pairwise_penalty(const GrbmParams& params, const HiddenPairBatch& batch);

ConstraintGradient constraint_gradient(const GrbmParams& params, const HiddenPairBatch& batch,
                                       kernels::Exec exec = kernels::Exec::parallel);

GrbmParams combined_update(const GrbmParams& params, const CdStats& stats, const Matrix& grad_must,
                           const Matrix& grad_cannot, const PcgrbmConfig& cfg);

/// Trains with CD-1 plus the constraint penalties. Under mini-batching, pairs whose endpoints share
/// a batch are applied with that batch; the rest are applied in a constraint-only pass at epoch end.
GrbmParams train_pcgrbm(const Dataset& d, const ConstraintSet& constraints, const PcgrbmConfig& cfg, Index q,
                        const EpochObserver& observer = {});

struct PenaltyTrace {
    double j_must = 0.0;
    double j_cannot = 0.0;
    double recon_mse = 0.0;
};

/// Penalties on current hidden probabilities, plus mean squared noise-free reconstruction error.
PenaltyTrace penalty_trace(const GrbmParams& params, const Dataset& d, const ConstraintSet& constraints);

}  // namespace pcgrbm
