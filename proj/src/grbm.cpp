#include "pcgrbm/grbm.hpp"

#include <algorithm>
#include <cmath>

#include "pcgrbm/kernels.hpp"

namespace pcgrbm {

namespace {

using EIdx = Eigen::Index;

void require(bool ok, const char* what) {
    if (!ok) throw InvalidArgument(what);
}

}  // namespace

void GrbmParams::validate() const {
    require(weights.rows() >= 1 && weights.cols() >= 1, "GRBM needs p, q >= 1");
    require(visible_bias.size() == weights.rows(), "visible bias length must equal p");
    require(hidden_bias.size() == weights.cols(), "hidden bias length must equal q");
    require(sigma.size() == weights.rows(), "sigma length must equal p");
    require(weights.allFinite() && visible_bias.allFinite() && hidden_bias.allFinite() && sigma.allFinite(),
            "GRBM parameters must be finite");
    require((sigma.array() > 0.0).all(), "sigma entries must be positive");
}

GrbmParams GrbmParams::initialize(Index p, Index q, std::uint64_t seed) {
    require(p >= 1 && q >= 1, "GRBM needs p, q >= 1");
    GrbmParams params;
    const auto P = static_cast<EIdx>(p);
    const auto Q = static_cast<EIdx>(q);
    Engine rng(derive_seed(seed, {0x696e6974ULL}));
    params.weights.resize(P, Q);
    for (EIdx i = 0; i < P; ++i)
        for (EIdx j = 0; j < Q; ++j) params.weights(i, j) = 0.01 * standard_normal(rng);
    params.visible_bias = Vector::Zero(P);
    params.hidden_bias = Vector::Zero(Q);
    params.sigma = Vector::Ones(P);
    return params;
}

CdStats CdStats::zeros(Index p, Index q) {
    const auto P = static_cast<EIdx>(p);
    const auto Q = static_cast<EIdx>(q);
    CdStats s;
    s.pos_assoc = Matrix::Zero(P, Q);
    s.neg_assoc = Matrix::Zero(P, Q);
    s.pos_v = Vector::Zero(P);
    s.neg_v = Vector::Zero(P);
    s.pos_h = Vector::Zero(Q);
    s.neg_h = Vector::Zero(Q);
    s.batch_size = 1;
    return s;
}

void TrainConfig::validate() const {
    require(epsilon >= 0.0 && std::isfinite(epsilon), "learning rate must be finite and non-negative");
    require(epochs >= 1, "epochs must be >= 1");
}

double energy(const GrbmParams& params, const Vector& v, const Vector& h) {
    require(v.size() == params.weights.rows(), "energy: visible length does not match p");
    require(h.size() == params.weights.cols(), "energy: hidden length does not match q");
    const Vector scaled = v.cwiseQuotient(params.sigma);
    const double quadratic =
        ((v - params.visible_bias).array().square() / (2.0 * params.sigma.array().square())).sum();
    return quadratic - params.hidden_bias.dot(h) - scaled.dot(params.weights * h);
}

Vector hidden_prob(const GrbmParams& params, const Vector& v) {
    require(v.size() == params.weights.rows(), "hidden_prob: visible length does not match p");
    const Matrix row = v.transpose();
    return kernels::hidden_probs(row, params.weights, params.hidden_bias, params.sigma, kernels::Exec::serial)
        .row(0)
        .transpose();
}

Vector sample_hidden(const Vector& probs, Engine& rng) {
    Vector h(probs.size());
    for (EIdx j = 0; j < probs.size(); ++j) {
        require(probs(j) >= 0.0 && probs(j) <= 1.0, "sample_hidden: probability outside [0, 1]");
        h(j) = uniform01(rng) < probs(j) ? 1.0 : 0.0;
    }
    return h;
}

Vector reconstruct_visible(const GrbmParams& params, const Vector& h) {
    require(h.size() == params.weights.cols(), "reconstruct_visible: hidden length does not match q");
    return params.visible_bias + params.weights * h;
}

std::uint64_t row_stream(std::uint64_t pass_seed, Index row) { return derive_seed(pass_seed, {row}); }

std::uint64_t epoch_stream(std::uint64_t train_seed, Index epoch, Index batch) {
    return derive_seed(train_seed, {0x65706f6368ULL, epoch, batch});
}

GibbsPass gibbs_pass(const GrbmParams& params, const Matrix& batch, std::uint64_t pass_seed, Index row_offset) {
    require(batch.rows() >= 1, "gibbs pass needs a non-empty batch");
    require(batch.cols() == params.weights.rows(), "batch width does not match p");
    GibbsPass pass;
    pass.hidden_prob = kernels::hidden_probs(batch, params.weights, params.hidden_bias, params.sigma);
    pass.hidden_sample.resize(pass.hidden_prob.rows(), pass.hidden_prob.cols());
    const EIdx n = batch.rows();
#pragma omp parallel for schedule(static)
    for (EIdx r = 0; r < n; ++r) {
        Engine rng(row_stream(pass_seed, row_offset + static_cast<Index>(r)));
        for (EIdx j = 0; j < pass.hidden_prob.cols(); ++j)
            pass.hidden_sample(r, j) = uniform01(rng) < pass.hidden_prob(r, j) ? 1.0 : 0.0;
    }
    pass.recon = kernels::reconstruct(pass.hidden_sample, params.weights, params.visible_bias);
    pass.recon_hidden = kernels::hidden_probs(pass.recon, params.weights, params.hidden_bias, params.sigma);
    return pass;
}

CdStats summarize(const Matrix& batch, const GibbsPass& pass) {
    const double inv_n = 1.0 / static_cast<double>(batch.rows());
    CdStats s;
    s.batch_size = static_cast<Index>(batch.rows());
    s.pos_assoc = inv_n * (batch.transpose() * pass.hidden_prob);
    s.neg_assoc = inv_n * (pass.recon.transpose() * pass.recon_hidden);
    s.pos_v = inv_n * batch.colwise().sum().transpose();
    s.neg_v = inv_n * pass.recon.colwise().sum().transpose();
    s.pos_h = inv_n * pass.hidden_prob.colwise().sum().transpose();
    s.neg_h = inv_n * pass.recon_hidden.colwise().sum().transpose();
    s.recon_sq_error = inv_n * (batch - pass.recon).squaredNorm() / static_cast<double>(batch.cols());
    return s;
}

CdStats cd1_step(const GrbmParams& params, const Matrix& batch, std::uint64_t pass_seed, Index row_offset) {
    return summarize(batch, gibbs_pass(params, batch, pass_seed, row_offset));
}

GrbmParams apply_cd_update(const GrbmParams& params, const CdStats& stats, double epsilon) {
    GrbmParams out = params;
    out.weights += epsilon * (stats.pos_assoc - stats.neg_assoc);
    out.visible_bias += epsilon * (stats.pos_v - stats.neg_v);
    out.hidden_bias += epsilon * (stats.pos_h - stats.neg_h);
    return out;
}

std::vector<std::pair<Index, Index>> batch_ranges(Index n, Index batch_size) {
    std::vector<std::pair<Index, Index>> ranges;
    const Index step = (batch_size == 0 || batch_size >= n) ? n : batch_size;
    for (Index start = 0; start < n; start += step) ranges.emplace_back(start, std::min(n, start + step));
    return ranges;
}

GrbmParams train_grbm(const Dataset& d, const TrainConfig& cfg, Index q, const EpochObserver& observer) {
    cfg.validate();
    require(d.normalized, "train_grbm requires normalized input");
    d.validate();
    GrbmParams params = GrbmParams::initialize(d.cols(), q, cfg.seed);
    const auto ranges = batch_ranges(d.rows(), cfg.batch_size);

    for (Index epoch = 0; epoch < cfg.epochs; ++epoch) {
        double sq_error = 0.0;
        for (Index b = 0; b < ranges.size(); ++b) {
            const auto [begin, end] = ranges[b];
            const Matrix batch = d.features.middleRows(static_cast<EIdx>(begin), static_cast<EIdx>(end - begin));
            const CdStats stats = cd1_step(params, batch, epoch_stream(cfg.seed, epoch, b), begin);
            sq_error += stats.recon_sq_error * static_cast<double>(end - begin);
            params = apply_cd_update(params, stats, cfg.epsilon);
        }
        if (observer) {
            EpochReport report;
            report.epoch = epoch + 1;
            report.recon_mse = sq_error / static_cast<double>(d.rows());
            observer(report, params);
        }
    }
    return params;
}

Matrix extract_features(const GrbmParams& params, const Dataset& d) {
    require(d.normalized, "extract_features requires normalized input");
    require(d.cols() == params.visible(), "extract_features: dataset width does not match p");
    return kernels::hidden_probs(d.features, params.weights, params.hidden_bias, params.sigma);
}

}  // namespace pcgrbm
