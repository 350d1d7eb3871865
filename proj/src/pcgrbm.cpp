#include "pcgrbm/pcgrbm.hpp"

#include <cmath>
#include <vector>

namespace pcgrbm {

namespace {

using EIdx = Eigen::Index;

void require(bool ok, const char* what) {
    if (!ok) throw InvalidArgument(what);
}

double mean_squared_norm(const Matrix& diffs, const Matrix& weights) {
    if (diffs.rows() == 0) return 0.0;
    return (diffs * weights.transpose()).squaredNorm() / static_cast<double>(diffs.rows());
}

double mean_norm(const Matrix& diffs, const Matrix& weights) {
    if (diffs.rows() == 0) return 0.0;
    const Matrix projected = diffs * weights.transpose();
    return projected.rowwise().norm().sum() / static_cast<double>(diffs.rows());
}

void fill_rows(const Matrix& hidden, const std::vector<IndexPair>& pairs, Matrix& first, Matrix& second) {
    first.resize(static_cast<EIdx>(pairs.size()), hidden.cols());
    second.resize(static_cast<EIdx>(pairs.size()), hidden.cols());
    for (std::size_t m = 0; m < pairs.size(); ++m) {
        const auto [s, t] = pairs[m];
        require(s < static_cast<Index>(hidden.rows()) && t < static_cast<Index>(hidden.rows()),
                "constraint index out of range");
        first.row(static_cast<EIdx>(m)) = hidden.row(static_cast<EIdx>(s));
        second.row(static_cast<EIdx>(m)) = hidden.row(static_cast<EIdx>(t));
    }
}

}  // namespace

std::string to_string(SignMode mode) { return mode == SignMode::descent ? "descent" : "paper-exact"; }

SignMode parse_sign_mode(const std::string& text) {
    if (text == "paper-exact" || text == "paper_exact") return SignMode::paper_exact;
    if (text == "descent") return SignMode::descent;
    throw InvalidArgument("unknown sign mode '" + text + "' (expected paper-exact or descent)");
}

void PcgrbmConfig::validate() const {
    base.validate();
    require(lambda > 0.0 && lambda < 1.0, "lambda must lie in (0, 1)");
    require(constraint_rate > 0.0 && std::isfinite(constraint_rate), "constraint rate must be positive");
}

HiddenPairBatch gather_pairs(const Matrix& hidden, const ConstraintSet& constraints) {
    HiddenPairBatch batch;
    fill_rows(hidden, constraints.must, batch.must_first, batch.must_second);
    fill_rows(hidden, constraints.cannot, batch.cannot_first, batch.cannot_second);
    return batch;
}

Penalty pairwise_penalty(const GrbmParams& params, const HiddenPairBatch& batch) {
    require(batch.must_first.rows() == 0 || batch.must_first.cols() == params.weights.cols(),
            "must-link hidden width does not match q");
    require(batch.cannot_first.rows() == 0 || batch.cannot_first.cols() == params.weights.cols(),
            "cannot-link hidden width does not match q");
    return {mean_squared_norm(batch.must_diffs(), params.weights),
            mean_squared_norm(batch.cannot_diffs(), params.weights)};
}

ConstraintGradient constraint_gradient(const GrbmParams& params, const HiddenPairBatch& batch, kernels::Exec exec) {
    const auto p = params.weights.rows();
    const auto q = params.weights.cols();
    ConstraintGradient g{Matrix::Zero(p, q), Matrix::Zero(p, q)};
    if (batch.must_first.rows() > 0) g.must = kernels::constraint_gradient(params.weights, batch.must_diffs(), exec);
    if (batch.cannot_first.rows() > 0)
        g.cannot = kernels::constraint_gradient(params.weights, batch.cannot_diffs(), exec);
    return g;
}

GrbmParams combined_update(const GrbmParams& params, const CdStats& stats, const Matrix& grad_must,
                           const Matrix& grad_cannot, const PcgrbmConfig& cfg) {
    const double eps = cfg.base.epsilon;
    GrbmParams out = params;
    const Matrix constraint_term = grad_must - grad_cannot;
    out.weights += cfg.lambda * eps * (stats.pos_assoc - stats.neg_assoc);
    if (cfg.sign_mode == SignMode::paper_exact) {
        out.weights += (1.0 - cfg.lambda) * constraint_term;
    } else {
        out.weights -= (1.0 - cfg.lambda) * cfg.constraint_rate * constraint_term;
    }
    out.visible_bias += eps * (stats.pos_v - stats.neg_v);
    out.hidden_bias += eps * (stats.pos_h - stats.neg_h);
    return out;
}

GrbmParams train_pcgrbm(const Dataset& d, const ConstraintSet& constraints, const PcgrbmConfig& cfg, Index q,
                        const EpochObserver& observer) {
    cfg.validate();
    require(d.normalized, "train_pcgrbm requires normalized input");
    d.validate();
    constraints.validate(d.rows());

    GrbmParams params = GrbmParams::initialize(d.cols(), q, cfg.base.seed);
    const auto ranges = batch_ranges(d.rows(), cfg.base.batch_size);
    const auto n = static_cast<EIdx>(d.rows());

    // batch_of[i] = mini-batch holding row i
    std::vector<Index> batch_of(d.rows());
    for (Index b = 0; b < ranges.size(); ++b)
        for (Index i = ranges[b].first; i < ranges[b].second; ++i) batch_of[i] = b;
    std::vector<ConstraintSet> in_batch(ranges.size());
    ConstraintSet deferred;
    for (auto pair : constraints.must)
        (batch_of[pair.first] == batch_of[pair.second] ? in_batch[batch_of[pair.first]].must : deferred.must)
            .push_back(pair);
    for (auto pair : constraints.cannot)
        (batch_of[pair.first] == batch_of[pair.second] ? in_batch[batch_of[pair.first]].cannot : deferred.cannot)
            .push_back(pair);

    Matrix hidden(n, static_cast<EIdx>(q));
    for (Index epoch = 0; epoch < cfg.base.epochs; ++epoch) {
        double sq_error = 0.0;
        for (Index b = 0; b < ranges.size(); ++b) {
            const auto [begin, end] = ranges[b];
            const auto rows = static_cast<EIdx>(end - begin);
            const Matrix batch = d.features.middleRows(static_cast<EIdx>(begin), rows);
            const GibbsPass pass = gibbs_pass(params, batch, epoch_stream(cfg.base.seed, epoch, b), begin);
            const CdStats stats = summarize(batch, pass);
            sq_error += stats.recon_sq_error * static_cast<double>(rows);
            hidden.middleRows(static_cast<EIdx>(begin), rows) =
                cfg.use_sampled_hidden ? pass.hidden_sample : pass.hidden_prob;

            const HiddenPairBatch pairs = gather_pairs(hidden, in_batch[b]);
            const ConstraintGradient grad = constraint_gradient(params, pairs);
            params = combined_update(params, stats, grad.must, grad.cannot, cfg);
        }
        if (!deferred.empty()) {
            const HiddenPairBatch pairs = gather_pairs(hidden, deferred);
            const ConstraintGradient grad = constraint_gradient(params, pairs);
            params = combined_update(params, CdStats::zeros(d.cols(), q), grad.must, grad.cannot, cfg);
        }

        if (observer) {
            const HiddenPairBatch all = gather_pairs(hidden, constraints);
            const Penalty penalty = pairwise_penalty(params, all);
            EpochReport report;
            report.epoch = epoch + 1;
            report.recon_mse = sq_error / static_cast<double>(d.rows());
            report.j_must = penalty.must;
            report.j_cannot = penalty.cannot;
            report.mean_must_distance = mean_norm(all.must_diffs(), params.weights);
            report.mean_cannot_distance = mean_norm(all.cannot_diffs(), params.weights);
            observer(report, params);
        }
    }
    return params;
}

PenaltyTrace penalty_trace(const GrbmParams& params, const Dataset& d, const ConstraintSet& constraints) {
    require(d.cols() == params.visible(), "penalty_trace: dataset width does not match p");
    const Matrix probs = kernels::hidden_probs(d.features, params.weights, params.hidden_bias, params.sigma);
    const Penalty penalty = pairwise_penalty(params, gather_pairs(probs, constraints));
    const Matrix recon = kernels::reconstruct(probs, params.weights, params.visible_bias);
    PenaltyTrace trace;
    trace.j_must = penalty.must;
    trace.j_cannot = penalty.cannot;
    trace.recon_mse = (d.features - recon).squaredNorm() / static_cast<double>(d.rows() * d.cols());
    return trace;
}

}  // namespace pcgrbm
