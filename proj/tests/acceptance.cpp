// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <nlohmann/json.hpp>

#include "pcgrbm/cli.hpp"
#include "pcgrbm/clustering.hpp"
#include "pcgrbm/data.hpp"
#include "pcgrbm/eval.hpp"
#include "pcgrbm/pcgrbm.hpp"
#include "pcgrbm/rng.hpp"

using namespace pcgrbm;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

Matrix read_rank_fixture(const fs::path& path) {
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::getline(ss, cell, ',');
        std::vector<double> row;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        rows.push_back(row);
    }
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.at(0).size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return m;
}

Outcome friedman_reproduction() {
    const RankTable t = rank_table_from_ranks(read_rank_fixture(fs::path(PCGRBM_FIXTURE_DIR) / "ranks_12x9.csv"));
    const double col_sq = t.col_sums.squaredNorm();
    const double row_sq = t.row_sums.squaredNorm();
    const double total = t.ranks.sum();
    const FriedmanSummary s = friedman_test(t);
    const bool sums = col_sq == 4523296.0 && row_sq == 2908948.0 && total == 5886.0;
    const bool stat = std::abs(s.statistic - 52.5741) <= 1e-3 && s.df == 8;
    const bool p = s.p_one_tailed >= 1.5e-9 && s.p_one_tailed <= 2.5e-9;
    return {sums && stat && p,
            fmt("sum C^2=%.0f sum R^2=%.0f total=%.0f T=%.6f df=%d p_one=%.4g (band [1.5e-9, 2.5e-9]) p_two=%.4g%s",
                col_sq, row_sq, total, s.statistic, s.df, s.p_one_tailed, s.p_two_tailed,
                p ? "" : "; p outside band")};
}

/// Mean squared reconstruction distance with fixed hidden vectors; the function the gradients differentiate.
double penalty_of(const Matrix& w, const Matrix& first, const Matrix& second) {
    const Matrix diff = (first - second) * w.transpose();
    return diff.squaredNorm() / static_cast<double>(first.rows());
}

Outcome gradient_correctness() {
    Engine rng(derive_seed(2, {0}));
    double worst_fd = 0.0;
    double worst_identity = 0.0;
    bool ok = true;
    for (int instance = 0; instance < 50; ++instance) {
        const auto p = static_cast<Eigen::Index>(1 + uniform_index(rng, 8));
        const auto q = static_cast<Eigen::Index>(1 + uniform_index(rng, 8));
        GrbmParams params = GrbmParams::initialize(static_cast<Index>(p), static_cast<Index>(q), instance);
        for (Eigen::Index i = 0; i < params.weights.size(); ++i) params.weights.data()[i] = standard_normal(rng);
        auto random_rows = [&](Eigen::Index n) {
            Matrix m(n, q);
            for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform01(rng);
            return m;
        };
        HiddenPairBatch batch;
        const auto nm = static_cast<Eigen::Index>(1 + uniform_index(rng, 6));
        const auto nc = static_cast<Eigen::Index>(1 + uniform_index(rng, 6));
        batch.must_first = random_rows(nm);
        batch.must_second = random_rows(nm);
        batch.cannot_first = random_rows(nc);
        batch.cannot_second = random_rows(nc);

        const ConstraintGradient serial = constraint_gradient(params, batch, kernels::Exec::serial);
        const ConstraintGradient parallel = constraint_gradient(params, batch, kernels::Exec::parallel);
        worst_identity = std::max({worst_identity, (serial.must - parallel.must).cwiseAbs().maxCoeff(),
                                   (serial.cannot - parallel.cannot).cwiseAbs().maxCoeff()});

        const double h = 1e-6;
        for (int side = 0; side < 2; ++side) {
            const Matrix& a = side == 0 ? batch.must_first : batch.cannot_first;
            const Matrix& b = side == 0 ? batch.must_second : batch.cannot_second;
            const Matrix& g = side == 0 ? parallel.must : parallel.cannot;
            for (Eigen::Index r = 0; r < p; ++r) {
                for (Eigen::Index c = 0; c < q; ++c) {
                    Matrix plus = params.weights, minus = params.weights;
                    plus(r, c) += h;
                    minus(r, c) -= h;
                    const double fd = (penalty_of(plus, a, b) - penalty_of(minus, a, b)) / (2 * h);
                    const double err = std::abs(fd - g(r, c));
                    worst_fd = std::max(worst_fd, err);
                    if (err > 1e-8 && err > 1e-5 * std::abs(fd)) ok = false;
                }
            }
        }
    }
    ok = ok && worst_identity <= 1e-12;
    return {ok, fmt("50 instances; max |FD - analytic| = %.3g; max |matrix form - elementwise| = %.3g", worst_fd,
                    worst_identity)};
}

Outcome reduction_law() {
    double worst_w = 0.0;
    double worst_bias = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Engine rng(derive_seed(seed, {3}));
        const Index p = 2 + uniform_index(rng, 7), q = 2 + uniform_index(rng, 7), n = 5 + uniform_index(rng, 20);
        Matrix v(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
        for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = standard_normal(rng);
        GrbmParams params = GrbmParams::initialize(p, q, seed);
        params.weights *= 30.0;
        params.hidden_bias.setConstant(0.1);

        for (SignMode mode : {SignMode::paper_exact, SignMode::descent}) {
            PcgrbmConfig cfg;
            cfg.base.epsilon = 0.05;
            cfg.lambda = 0.3 + 0.05 * static_cast<double>(seed % 10);
            cfg.sign_mode = mode;
            const std::uint64_t pass_seed = derive_seed(seed, {4});
            const GibbsPass pass = gibbs_pass(params, v, pass_seed);
            const CdStats stats = summarize(v, pass);
            const HiddenPairBatch pairs = gather_pairs(pass.hidden_sample, ConstraintSet{});
            const ConstraintGradient grad = constraint_gradient(params, pairs);
            const GrbmParams pc = combined_update(params, stats, grad.must, grad.cannot, cfg);
            const GrbmParams plain = apply_cd_update(params, stats, cfg.base.epsilon);

            const Matrix dw_pc = pc.weights - params.weights;
            const Matrix dw_plain = plain.weights - params.weights;
            worst_w = std::max(worst_w, (dw_pc - cfg.lambda * dw_plain).cwiseAbs().maxCoeff());
            worst_bias = std::max({worst_bias, (pc.visible_bias - plain.visible_bias).cwiseAbs().maxCoeff(),
                                   (pc.hidden_bias - plain.hidden_bias).cwiseAbs().maxCoeff()});
        }
    }
    return {worst_w <= 1e-12 && worst_bias == 0.0,
            fmt("20 seeds x 2 sign modes; max |dW_pc - lambda dW_grbm| = %.3g; max bias difference = %.3g", worst_w,
                worst_bias)};
}

Outcome directional_effect() {
    const double separation = 2.0;
    int wins = 0;
    double raw_acc = 0.0, grbm_acc = 0.0, pc_acc = 0.0;
    double first_sum = 0.0, last_sum = 0.0;
    int seeds_dropping = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Dataset d = normalize(synth_blobs(300, 3, 10, separation, seed));
        const ConstraintSet c = sample_constraints(*d.labels, 0.05, derive_seed(seed, {1}));
        PcgrbmConfig cfg;
        cfg.base.epsilon = 0.05;
        cfg.base.epochs = 30;
        cfg.base.batch_size = 10;
        cfg.base.seed = derive_seed(seed, {2});
        cfg.sign_mode = SignMode::descent;
        cfg.constraint_rate = 0.01;

        double first = 0.0, last = 0.0;
        const GrbmParams pc = train_pcgrbm(d, c, cfg, 16, [&](const EpochReport& r, const GrbmParams&) {
            if (r.epoch == 1) first = r.mean_must_distance;
            last = r.mean_must_distance;
        });
        const GrbmParams grbm = train_grbm(d, cfg.base, 16);
        const std::uint64_t km = derive_seed(seed, {5});
        const double a_raw = accuracy(*d.labels, kmeans(d.features, 3, 10, km));
        const double a_grbm = accuracy(*d.labels, kmeans(extract_features(grbm, d), 3, 10, km));
        const double a_pc = accuracy(*d.labels, kmeans(extract_features(pc, d), 3, 10, km));
        wins += a_pc >= a_grbm;
        raw_acc += a_raw / 10;
        grbm_acc += a_grbm / 10;
        pc_acc += a_pc / 10;
        first_sum += first;
        last_sum += last;
        seeds_dropping += last <= 0.8 * first;
    }
    const double drop = 1.0 - last_sum / first_sum;
    const bool a = drop >= 0.2;
    const bool b = wins >= 8;
    return {a && b, fmt("raw k-means acc %.3f; (a) mean must distance epoch 1 %.4g -> final %.4g, drop %.1f%% "
                        "(need >= 20%%, %d/10 seeds drop) %s; (b) pcGRBM >= GRBM in %d/10 seeds "
                        "(mean %.3f vs %.3f) %s",
                        raw_acc, first_sum / 10, last_sum / 10, 100 * drop, seeds_dropping, a ? "ok" : "FAIL", wins,
                        pc_acc, grbm_acc, b ? "ok" : "FAIL")};
}

double exhaustive_accuracy(const Labels& truth, const std::vector<Index>& assign) {
    int m = 0;
    for (int l : truth) m = std::max(m, l + 1);
    for (Index a : assign) m = std::max(m, static_cast<int>(a) + 1);
    std::vector<std::vector<int>> count(m, std::vector<int>(m, 0));
    for (std::size_t i = 0; i < truth.size(); ++i) ++count[assign[i]][truth[i]];
    std::vector<int> perm(m);
    std::iota(perm.begin(), perm.end(), 0);
    int best = 0;
    do {
        int hit = 0;
        for (int r = 0; r < m; ++r) hit += count[r][perm[r]];
        best = std::max(best, hit);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return static_cast<double>(best) / static_cast<double>(truth.size());
}

double direct_purity(const Labels& truth, const std::vector<Index>& assign) {
    std::map<Index, std::map<int, int>> by_cluster;
    for (std::size_t i = 0; i < truth.size(); ++i) ++by_cluster[assign[i]][truth[i]];
    double total = 0.0;
    for (const auto& [cluster, classes] : by_cluster) {
        int best = 0;
        for (const auto& [label, n] : classes) best = std::max(best, n);
        total += best;
    }
    return total / static_cast<double>(truth.size());
}

Outcome metric_oracles() {
    Engine rng(derive_seed(5, {0}));
    double worst_acc = 0.0, worst_pur = 0.0;
    int order_violations = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const int kt = 1 + static_cast<int>(uniform_index(rng, 5));
        const Index kp = 1 + uniform_index(rng, 5);
        const Index n = 1 + uniform_index(rng, 40);
        Labels truth(n);
        ClusteringResult r;
        r.k = kp;
        for (Index i = 0; i < n; ++i) {
            truth[i] = static_cast<int>(uniform_index(rng, kt));
            r.assignments.push_back(uniform_index(rng, kp));
        }
        const double acc = accuracy(truth, r);
        const double pur = purity(truth, r);
        worst_acc = std::max(worst_acc, std::abs(acc - exhaustive_accuracy(truth, r.assignments)));
        worst_pur = std::max(worst_pur, std::abs(pur - direct_purity(truth, r.assignments)));
        order_violations += pur < acc - 1e-12;
    }
    return {worst_acc <= 1e-12 && worst_pur <= 1e-12 && order_violations == 0,
            fmt("200 cases; max accuracy error vs permutation search %.3g; max purity error %.3g; purity < accuracy "
                "in %d cases",
                worst_acc, worst_pur, order_violations)};
}

Outcome cop_contract() {
    Index violations = 0;
    int infeasible = 0;
    std::size_t pairs = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const Dataset d = synth_blobs(90, 3, 4, 3.0, seed);
        const ConstraintSet c = sample_constraints(*d.labels, 0.15, derive_seed(seed, {6}));
        pairs += c.must.size() + c.cannot.size();
        try {
            const ClusteringResult r = cop_kmeans(d.features, 3, c, derive_seed(seed, {7}));
            violations += count_violations(r.assignments, c);
        } catch (const InfeasibleConstraints&) {
            ++infeasible;
        }
    }
    Matrix tri(3, 2);
    tri << 0, 0, 1, 0, 0, 1;
    ConstraintSet triangle;
    triangle.must = {{0, 1}, {1, 2}};
    triangle.cannot = {{0, 2}};
    bool named = false;
    std::string message = "no error";
    try {
        cop_kmeans(tri, 2, triangle, 1);
    } catch (const InfeasibleConstraints& e) {
        message = e.what();
        named = e.instance() <= 2 && message.find(std::to_string(e.instance())) != std::string::npos;
    }
    return {violations == 0 && infeasible == 0 && named,
            fmt("100 runs, %zu constraint pairs, %lld violations, %d infeasible runs; triangle: \"%s\"", pairs,
                static_cast<long long>(violations), infeasible, message.c_str())};
}

Outcome clustering_sanity() {
    double worst_sp = 1.0, worst_km = 1.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Dataset d = synth_blobs(200, 2, 2, 50.0, seed);
        worst_km = std::min(worst_km, accuracy(*d.labels, kmeans(d.features, 2, 10, seed)));
        worst_sp = std::min(worst_sp, accuracy(*d.labels, spectral(d.features, 2, seed)));
    }
    int three = 0;
    std::string counts;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Dataset d = synth_blobs(60, 3, 2, 20.0, seed + 100);
        const ApFit fit = affinity_propagation_fit(d.features);
        three += fit.exemplars.size() == 3;
        counts += (counts.empty() ? "" : ",") + std::to_string(fit.exemplars.size());
    }
    return {worst_km >= 0.98 && worst_sp >= 0.98 && three >= 8,
            fmt("two blobs at separation 50: min k-means acc %.3f, min spectral acc %.3f over 10 seeds; AP found 3 "
                "exemplars in %d/10 seeds (counts %s)",
                worst_km, worst_sp, three, counts.c_str())};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

Outcome end_to_end_determinism() {
    const fs::path root = fs::temp_directory_path() / ("pcgrbm_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(root);
    fs::create_directories(root);
    nlohmann::json cfg{{"datasets",
                        {{{"name", "blobs_a"}, {"synth", {{"n", 90}, {"k", 3}, {"p", 5}, {"separation", 4.0}, {"seed", 1}}}},
                         {{"name", "blobs_b"}, {"synth", {{"n", 80}, {"k", 2}, {"p", 4}, {"separation", 3.0}, {"seed", 2}}}}}},
                       {"hidden", 8},
                       {"epochs", 3},
                       {"epsilon", 0.01},
                       {"sign_mode", "descent"},
                       {"constraint_rate", 0.01},
                       {"fractions", {0.05, 0.1}},
                       {"folds", 3},
                       {"seeds", {0, 1}},
                       {"algorithms", {"kmeans.raw", "kmeans.grbm", "kmeans.pcgrbm", "spectral.pcgrbm", "ap.raw",
                                       "cop_kmeans.raw", "cop_kmeans.pcgrbm"}},
                       {"formats", {"csv", "json", "markdown"}}};
    std::ofstream(root / "config.json") << cfg.dump(2);

    std::string failures;
    auto run = [&](const std::string& out, const std::string& threads) {
        const std::string config = (root / "config.json").string();
        const std::string dir = (root / out).string();
        const char* argv[] = {"pcgrbm", "experiment", "--config", config.c_str(), "--seed", "11",
                              "--out", dir.c_str(), "--threads", threads.c_str()};
        std::ostringstream o, e;
        const int code = run_cli(10, argv, o, e);
        if (code != 0) failures += "exit " + std::to_string(code) + " for " + out + ": " + e.str();
    };
    run("first", "1");
    run("second", "1");
    run("threaded", "3");

    std::set<std::string> names;
    int compared = 0, differing = 0;
    for (const auto& entry : fs::directory_iterator(root / "first")) names.insert(entry.path().filename().string());
    for (const auto& name : names) {
        const std::string a = slurp(root / "first" / name);
        for (const char* other : {"second", "threaded"}) {
            ++compared;
            if (!fs::exists(root / other / name) || slurp(root / other / name) != a) {
                ++differing;
                failures += std::string(other) + "/" + name + " differs; ";
            }
        }
    }

    std::size_t records = 0, pairs = 0, leaks = 0;
    std::ifstream prov(root / "first" / "provenance.jsonl");
    std::string line;
    while (std::getline(prov, line)) {
        const auto j = nlohmann::json::parse(line);
        ++records;
        const auto test = j.at("test_indices").get<std::vector<Index>>();
        const std::set<Index> held_out(test.begin(), test.end());
        for (const char* kind : {"must", "cannot"}) {
            for (const auto& pair : j.at(kind)) {
                ++pairs;
                leaks += held_out.count(pair.at(0).get<Index>()) + held_out.count(pair.at(1).get<Index>());
            }
        }
    }
    fs::remove_all(root);
    const bool ok = failures.empty() && names.size() >= 7 && differing == 0 && records > 0 && pairs > 0 && leaks == 0;
    return {ok, fmt("%zu report files, %d comparisons, %d differ; provenance: %zu fold records, %zu pairs, %zu "
                    "test-index references%s%s",
                    names.size(), compared, differing, records, pairs, leaks, failures.empty() ? "" : "; ",
                    failures.c_str())};
}

}  // namespace

int main() {
    struct Criterion {
        const char* name;
        double budget_seconds;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria{
        {"Friedman reproduction", 1.0, friedman_reproduction},
        {"Constraint-gradient correctness", 10.0, gradient_correctness},
        {"Reduction law", 0.0, reduction_law},
        {"Directional semi-supervision effect", 120.0, directional_effect},
        {"Metric oracles", 5.0, metric_oracles},
        {"COP-KMeans contract", 0.0, cop_contract},
        {"Clustering sanity", 0.0, clustering_sanity},
        {"End-to-end determinism", 0.0, end_to_end_determinism},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].run();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const double budget = criteria[i].budget_seconds;
        if (budget > 0 && secs > budget) {
            o.pass = false;
            o.detail += fmt("; over time budget %.0f s", budget);
        }
        failed += !o.pass;
        std::printf("[%s] %zu. %s: %s (%.2f s)\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].name, o.detail.c_str(),
                    secs);
        std::fflush(stdout);
    }
    std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
