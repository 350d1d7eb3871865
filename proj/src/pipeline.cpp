#include "pcgrbm/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <sstream>

#include "pcgrbm/kernels.hpp"
#include "pcgrbm/rng.hpp"

namespace pcgrbm {

namespace {

using EIdx = Eigen::Index;
using nlohmann::json;

void require(bool ok, const std::string& what) {
    if (!ok) throw InvalidArgument(what);
}

std::map<std::string, ClusteringAdapter>& adapter_registry() {
    static std::map<std::string, ClusteringAdapter> registry = [] {
        std::map<std::string, ClusteringAdapter> r;
        r["kmeans"] = {[](const Matrix& x, Index k, const ConstraintSet&, std::uint64_t seed) {
                           return kmeans(x, k, 10, seed);
                       },
                       false};
        r["spectral"] = {[](const Matrix& x, Index k, const ConstraintSet&, std::uint64_t seed) {
                             return spectral(x, k, seed);
                         },
                         false};
        r["ap"] = {[](const Matrix& x, Index, const ConstraintSet&, std::uint64_t) {
                       return affinity_propagation(x);
                   },
                   false};
        r["cop_kmeans"] = {[](const Matrix& x, Index k, const ConstraintSet& c, std::uint64_t seed) {
                               return cop_kmeans(x, k, c, seed);
                           },
                           true};
        return r;
    }();
    return registry;
}

std::mutex& registry_mutex() {
    static std::mutex m;
    return m;
}

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string frac(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::vector<double> fractions_for(const ExperimentConfig& cfg) { return cfg.fractions; }

/// Scores of one (dataset, seed, fold) task, indexed [algorithm][fraction].
struct TaskResult {
    std::vector<std::vector<double>> accuracy;
    std::vector<std::vector<double>> purity;
    std::vector<std::vector<std::string>> error;
    std::vector<FoldProvenance> provenance;
};

struct LoadedDataset {
    std::optional<Dataset> data;
    std::string error;
};

LoadedDataset load_source(const DatasetSource& src) {
    LoadedDataset out;
    try {
        Dataset d;
        if (src.synth) {
            d = synth_blobs(src.synth->n, src.synth->k, src.synth->p, src.synth->separation, src.synth->seed);
        } else {
            d = load_csv(*src.csv, src.label_column);
        }
        d.name = src.name;
        d.validate();
        if (!d.labels) throw InvalidArgument("dataset has no labels");
        out.data = normalize(d);
    } catch (const std::exception& e) {
        out.error = e.what();
    }
    return out;
}

Matrix stack_rows(const Matrix& top, const Matrix& bottom) {
    Matrix out(top.rows() + bottom.rows(), top.cols());
    out << top, bottom;
    return out;
}

TaskResult run_task(const ExperimentConfig& cfg, const Dataset& data, Index dataset_id, Index seed_id, Index fold_id,
                    std::uint64_t master_seed) {
    const auto& algorithms = cfg.algorithms;
    const auto fractions = fractions_for(cfg);
    const std::size_t A = algorithms.size();
    const std::size_t F = fractions.size();
    const std::uint64_t seed_value = cfg.seeds[seed_id];

    TaskResult out;
    out.accuracy.assign(A, std::vector<double>(F, 0.0));
    out.purity.assign(A, std::vector<double>(F, 0.0));
    out.error.assign(A, std::vector<std::string>(F));
    auto fail_all = [&](const std::string& why) {
        for (auto& row : out.error)
            for (auto& e : row)
                if (e.empty()) e = why;
    };

    try {
        const auto folds = kfold(data.rows(), cfg.folds, derive_seed(master_seed, {dataset_id, seed_value}));
        const FoldSplit& split = folds[fold_id];
        const std::uint64_t task_seed = derive_seed(master_seed, {dataset_id, fold_id, seed_value});
        const Dataset train = data.subset(split.train_indices);
        const Dataset test = data.subset(split.test_indices);
        const auto k = static_cast<Index>(data.num_classes());

        auto need = [&](FeatureSource s) {
            return std::any_of(algorithms.begin(), algorithms.end(), [&](const auto& a) { return a.source == s; });
        };
        const bool any_constraint_use =
            need(FeatureSource::pcgrbm) || std::any_of(algorithms.begin(), algorithms.end(), [](const auto& a) {
                return clustering_adapter(a.algorithm).uses_constraints;
            });

        // Constraint sets in training-subset coordinates, one per fraction, nested.
        std::vector<ConstraintSet> local;
        if (any_constraint_use) {
            local = sample_constraints_incremental(*train.labels, fractions, derive_seed(task_seed, {0x636f6eULL}));
            if (cfg.transitive_closure)
                for (auto& c : local) c = transitive_closure(c);
        } else {
            local.assign(F, ConstraintSet{});
        }

        std::vector<bool> is_test(data.rows(), false);
        for (Index i : split.test_indices) is_test[i] = true;
        for (std::size_t f = 0; f < F; ++f) {
            FoldProvenance prov;
            prov.dataset = data.name;
            prov.seed = seed_value;
            prov.fold = fold_id;
            prov.fraction = fractions[f];
            prov.test_indices = split.test_indices;
            prov.constraints = remap(local[f], split.train_indices);
            for (const auto* list : {&prov.constraints.must, &prov.constraints.cannot})
                for (auto [i, j] : *list)
                    if (is_test[i] || is_test[j])
                        throw std::logic_error("constraint pair references a test-fold index");
            out.provenance.push_back(std::move(prov));
        }

        std::optional<GrbmParams> grbm;
        std::string grbm_error;
        if (need(FeatureSource::grbm)) {
            try {
                TrainConfig tc = cfg.pcgrbm.base;
                tc.seed = derive_seed(task_seed, {0x6772626dULL});
                grbm = train_grbm(train, tc, cfg.hidden);
                if (!grbm->weights.allFinite()) throw std::runtime_error("GRBM training diverged");
            } catch (const std::exception& e) {
                grbm_error = std::string("grbm training: ") + e.what();
            }
        }

        for (std::size_t f = 0; f < F; ++f) {
            std::optional<GrbmParams> pc;
            std::string pc_error;
            if (need(FeatureSource::pcgrbm)) {
                try {
                    PcgrbmConfig pcfg = cfg.pcgrbm;
                    pcfg.base.seed = derive_seed(task_seed, {0x7063ULL});
                    pc = train_pcgrbm(train, local[f], pcfg, cfg.hidden);
                    if (!pc->weights.allFinite()) throw std::runtime_error("pcGRBM training diverged");
                } catch (const std::exception& e) {
                    pc_error = std::string("pcgrbm training: ") + e.what();
                }
            }

            for (std::size_t a = 0; a < A; ++a) {
                const AlgorithmSpec& spec = algorithms[a];
                try {
                    const GrbmParams* model = nullptr;
                    if (spec.source == FeatureSource::grbm) {
                        if (!grbm) throw std::runtime_error(grbm_error);
                        model = &*grbm;
                    } else if (spec.source == FeatureSource::pcgrbm) {
                        if (!pc) throw std::runtime_error(pc_error);
                        model = &*pc;
                    }
                    auto features = [&](const Dataset& d) { return model ? extract_features(*model, d) : d.features; };

                    const ClusteringAdapter& adapter = clustering_adapter(spec.algorithm);
                    const std::uint64_t run_seed = derive_seed(task_seed, {0x636c7573ULL, a, f});
                    ClusteringResult result;
                    if (adapter.uses_constraints) {
                        const Matrix both = stack_rows(features(train), features(test));
                        ClusteringResult full = adapter.run(both, k, local[f], run_seed);
                        result.k = full.k;
                        result.converged = full.converged;
                        result.iterations = full.iterations;
                        result.assignments.assign(full.assignments.begin() + static_cast<std::ptrdiff_t>(train.rows()),
                                                  full.assignments.end());
                    } else {
                        result = adapter.run(features(test), k, ConstraintSet{}, run_seed);
                    }
                    out.accuracy[a][f] = accuracy(*test.labels, result);
                    out.purity[a][f] = purity(*test.labels, result);
                } catch (const InfeasibleConstraints& e) {
                    out.error[a][f] = std::string("infeasible: ") + e.what();
                } catch (const std::exception& e) {
                    out.error[a][f] = e.what();
                }
            }
        }
    } catch (const std::logic_error& e) {
        if (dynamic_cast<const InvalidArgument*>(&e)) {
            fail_all(e.what());
        } else {
            throw;
        }
    } catch (const std::exception& e) {
        fail_all(e.what());
    }
    return out;
}

}  // namespace

std::string to_string(FeatureSource source) {
    switch (source) {
        case FeatureSource::raw: return "raw";
        case FeatureSource::grbm: return "grbm";
        case FeatureSource::pcgrbm: return "pcgrbm";
    }
    return "raw";
}

FeatureSource parse_feature_source(const std::string& text) {
    if (text == "raw") return FeatureSource::raw;
    if (text == "grbm") return FeatureSource::grbm;
    if (text == "pcgrbm") return FeatureSource::pcgrbm;
    throw InvalidArgument("unknown feature source '" + text + "' (expected raw, grbm or pcgrbm)");
}

AlgorithmSpec AlgorithmSpec::parse(const std::string& label) {
    const auto dot = label.rfind('.');
    AlgorithmSpec spec;
    spec.algorithm = label.substr(0, dot);
    spec.source = dot == std::string::npos ? FeatureSource::raw : parse_feature_source(label.substr(dot + 1));
    clustering_adapter(spec.algorithm);  // throws for unknown names
    return spec;
}

void register_clustering_adapter(const std::string& name, ClusteringAdapter adapter) {
    require(!name.empty() && name.find('.') == std::string::npos, "adapter names must be non-empty without '.'");
    require(static_cast<bool>(adapter.run), "adapter needs a callable");
    std::lock_guard lock(registry_mutex());
    adapter_registry()[name] = std::move(adapter);
}

const ClusteringAdapter& clustering_adapter(const std::string& name) {
    std::lock_guard lock(registry_mutex());
    const auto& registry = adapter_registry();
    const auto it = registry.find(name);
    if (it == registry.end()) throw InvalidArgument("unknown clustering algorithm '" + name + "'");
    return it->second;
}

std::vector<std::string> clustering_adapter_names() {
    std::lock_guard lock(registry_mutex());
    std::vector<std::string> names;
    for (const auto& [name, adapter] : adapter_registry()) names.push_back(name);
    return names;
}

std::vector<AlgorithmSpec> default_algorithms() {
    std::vector<AlgorithmSpec> out;
    for (const char* a : {"kmeans", "spectral", "ap"})
        for (auto s : {FeatureSource::raw, FeatureSource::grbm, FeatureSource::pcgrbm}) out.push_back({a, s});
    out.push_back({"cop_kmeans", FeatureSource::raw});
    out.push_back({"cop_kmeans", FeatureSource::pcgrbm});
    return out;
}

void ExperimentConfig::validate() const {
    require(!datasets.empty(), "experiment needs at least one dataset");
    require(!algorithms.empty(), "experiment needs at least one algorithm");
    require(!seeds.empty(), "experiment needs at least one seed");
    require(!fractions.empty(), "experiment needs at least one constraint fraction");
    for (std::size_t i = 0; i < fractions.size(); ++i) {
        require(fractions[i] > 0.0 && fractions[i] <= 1.0, "fractions must lie in (0, 1]");
        require(i == 0 || fractions[i] > fractions[i - 1], "fractions must be strictly ascending");
    }
    require(folds >= 2, "experiment needs folds >= 2");
    require(hidden >= 1, "hidden width must be >= 1");
    require(threads >= 1, "threads must be >= 1");
    for (const auto& f : formats)
        require(f == "csv" || f == "json" || f == "markdown", "unknown report format '" + f + "'");
    std::set<std::string> names;
    for (const auto& d : datasets) {
        require(!d.name.empty(), "every dataset needs a name");
        require(names.insert(d.name).second, "duplicate dataset name '" + d.name + "'");
        require(d.csv.has_value() != d.synth.has_value(), "dataset '" + d.name + "' needs exactly one of csv or synth");
    }
    pcgrbm.validate();
}

ExperimentConfig ExperimentConfig::from_json(const json& j, const std::filesystem::path& base_dir) {
    static const std::set<std::string> known{"datasets",    "hidden",          "epsilon",    "epochs",
                                             "batch_size",  "lambda",          "sign_mode",  "constraint_rate",
                                             "use_sampled_hidden", "fractions", "folds",     "algorithms",
                                             "seeds",       "output_dir",      "formats",    "threads",
                                             "transitive_closure"};
    require(j.is_object(), "experiment config must be a JSON object");
    for (const auto& [key, value] : j.items())
        require(known.count(key) > 0, "unknown experiment config key '" + key + "'");

    ExperimentConfig cfg;
    cfg.pcgrbm.base.epochs = 30;
    try {
        for (const auto& d : j.at("datasets")) {
            DatasetSource src;
            src.name = d.at("name").get<std::string>();
            if (d.contains("csv")) {
                std::filesystem::path p = d.at("csv").get<std::string>();
                src.csv = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
                src.label_column = d.value("label_column", std::string("label"));
            }
            if (d.contains("synth")) {
                const auto& s = d.at("synth");
                SynthSpec spec;
                spec.n = s.value("n", spec.n);
                spec.k = s.value("k", spec.k);
                spec.p = s.value("p", spec.p);
                spec.separation = s.value("separation", spec.separation);
                spec.seed = s.value("seed", spec.seed);
                src.synth = spec;
            }
            cfg.datasets.push_back(std::move(src));
        }
        cfg.hidden = j.value("hidden", cfg.hidden);
        cfg.pcgrbm.base.epsilon = j.value("epsilon", cfg.pcgrbm.base.epsilon);
        cfg.pcgrbm.base.epochs = j.value("epochs", cfg.pcgrbm.base.epochs);
        cfg.pcgrbm.base.batch_size = j.value("batch_size", cfg.pcgrbm.base.batch_size);
        cfg.pcgrbm.lambda = j.value("lambda", cfg.pcgrbm.lambda);
        if (j.contains("sign_mode")) cfg.pcgrbm.sign_mode = parse_sign_mode(j.at("sign_mode").get<std::string>());
        cfg.pcgrbm.constraint_rate = j.value("constraint_rate", cfg.pcgrbm.constraint_rate);
        cfg.pcgrbm.use_sampled_hidden = j.value("use_sampled_hidden", cfg.pcgrbm.use_sampled_hidden);
        if (j.contains("fractions")) cfg.fractions = j.at("fractions").get<std::vector<double>>();
        cfg.folds = j.value("folds", cfg.folds);
        if (j.contains("algorithms")) {
            for (const auto& a : j.at("algorithms")) cfg.algorithms.push_back(AlgorithmSpec::parse(a.get<std::string>()));
        } else {
            cfg.algorithms = default_algorithms();
        }
        if (j.contains("seeds")) cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        if (j.contains("output_dir")) {
            std::filesystem::path p = j.at("output_dir").get<std::string>();
            cfg.output_dir = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
        }
        if (j.contains("formats")) {
            const auto f = j.at("formats").get<std::vector<std::string>>();
            cfg.formats = {f.begin(), f.end()};
        }
        cfg.threads = j.value("threads", cfg.threads);
        cfg.transitive_closure = j.value("transitive_closure", cfg.transitive_closure);
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("experiment config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

json ExperimentConfig::to_json() const {
    json j;
    j["datasets"] = json::array();
    for (const auto& d : datasets) {
        json e{{"name", d.name}};
        if (d.csv) {
            e["csv"] = d.csv->string();
            e["label_column"] = d.label_column;
        }
        if (d.synth)
            e["synth"] = {{"n", d.synth->n},
                          {"k", d.synth->k},
                          {"p", d.synth->p},
                          {"separation", d.synth->separation},
                          {"seed", d.synth->seed}};
        j["datasets"].push_back(e);
    }
    j["hidden"] = hidden;
    j["epsilon"] = pcgrbm.base.epsilon;
    j["epochs"] = pcgrbm.base.epochs;
    j["batch_size"] = pcgrbm.base.batch_size;
    j["lambda"] = pcgrbm.lambda;
    j["sign_mode"] = to_string(pcgrbm.sign_mode);
    j["constraint_rate"] = pcgrbm.constraint_rate;
    j["use_sampled_hidden"] = pcgrbm.use_sampled_hidden;
    j["fractions"] = fractions;
    j["folds"] = folds;
    j["algorithms"] = json::array();
    for (const auto& a : algorithms) j["algorithms"].push_back(a.label());
    j["seeds"] = seeds;
    j["output_dir"] = output_dir.string();
    j["formats"] = std::vector<std::string>(formats.begin(), formats.end());
    j["threads"] = threads;
    j["transitive_closure"] = transitive_closure;
    return j;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw InvalidArgument(path.string() + ": " + e.what());
    }
    return ExperimentConfig::from_json(j, path.parent_path());
}

MetricSummary summarize_metric(const std::vector<double>& values) {
    MetricSummary m;
    m.count = values.size();
    if (values.empty()) return m;
    double sum = 0.0;
    for (double v : values) sum += v;
    m.mean = sum / static_cast<double>(values.size());
    if (values.size() > 1) {
        double sq = 0.0;
        for (double v : values) sq += (v - m.mean) * (v - m.mean);
        m.variance = sq / static_cast<double>(values.size() - 1);
    }
    return m;
}

const ReportCell& ReportTable::cell(const std::string& dataset, const std::string& algorithm, double fraction) const {
    for (const auto& c : cells)
        if (c.dataset == dataset && c.algorithm == algorithm && std::abs(c.fraction - fraction) < 1e-12) return c;
    throw InvalidArgument("no report cell for " + dataset + "/" + algorithm + "/" + frac(fraction));
}

bool ReportTable::any_failed() const {
    return std::any_of(cells.begin(), cells.end(), [](const ReportCell& c) { return c.failed; });
}

ReportTable run_experiment(const ExperimentConfig& cfg, std::uint64_t master_seed) {
    cfg.validate();
    const auto fractions = fractions_for(cfg);
    const std::size_t D = cfg.datasets.size();
    const std::size_t A = cfg.algorithms.size();
    const std::size_t F = fractions.size();
    const std::size_t S = cfg.seeds.size();
    for (const auto& a : cfg.algorithms) clustering_adapter(a.algorithm);

    std::vector<LoadedDataset> data(D);
    for (std::size_t d = 0; d < D; ++d) data[d] = load_source(cfg.datasets[d]);

    struct Task {
        Index dataset, seed, fold;
    };
    std::vector<Task> tasks;
    for (Index d = 0; d < D; ++d) {
        if (!data[d].data) continue;
        for (Index s = 0; s < S; ++s)
            for (Index f = 0; f < cfg.folds; ++f) tasks.push_back({d, s, f});
    }

    std::vector<TaskResult> results(tasks.size());
    std::vector<std::string> fatal(tasks.size());
    const int previous_threads = kernels::num_threads();
    kernels::set_num_threads(cfg.threads);
    const auto task_count = static_cast<std::ptrdiff_t>(tasks.size());
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t t = 0; t < task_count; ++t) {
        const Task& task = tasks[static_cast<std::size_t>(t)];
        try {
            results[static_cast<std::size_t>(t)] =
                run_task(cfg, *data[task.dataset].data, task.dataset, task.seed, task.fold, master_seed);
        } catch (const std::exception& e) {
            fatal[static_cast<std::size_t>(t)] = e.what();
        }
    }
    kernels::set_num_threads(previous_threads);
    for (const auto& f : fatal)
        if (!f.empty()) throw std::logic_error(f);

    ReportTable report;
    report.fractions = fractions;
    for (const auto& d : cfg.datasets) report.datasets.push_back(d.name);
    for (const auto& a : cfg.algorithms) report.algorithms.push_back(a.label());

    std::size_t t0 = 0;
    for (Index d = 0; d < D; ++d) {
        const std::size_t task_begin = t0;
        const std::size_t task_end = data[d].data ? t0 + S * cfg.folds : t0;
        t0 = task_end;
        for (std::size_t t = task_begin; t < task_end; ++t)
            for (const auto& p : results[t].provenance) report.provenance.push_back(p);

        for (Index a = 0; a < A; ++a) {
            for (Index f = 0; f < F; ++f) {
                ReportCell cell;
                cell.dataset = cfg.datasets[d].name;
                cell.algorithm = cfg.algorithms[a].label();
                cell.fraction = fractions[f];
                if (!data[d].data) {
                    cell.failed = true;
                    cell.failure = "dataset: " + data[d].error;
                    report.cells.push_back(std::move(cell));
                    continue;
                }
                std::vector<double> acc, pur;
                std::vector<Observation> obs;
                for (std::size_t t = task_begin; t < task_end; ++t) {
                    const auto& r = results[t];
                    if (!r.error[a][f].empty()) {
                        if (!cell.failed) cell.failure = r.error[a][f];
                        cell.failed = true;
                        continue;
                    }
                    acc.push_back(r.accuracy[a][f]);
                    pur.push_back(r.purity[a][f]);
                    const std::uint64_t seed = cfg.seeds[tasks[t].seed];
                    obs.push_back({cell.dataset, cell.algorithm, cell.fraction, seed, tasks[t].fold, "accuracy",
                                   r.accuracy[a][f]});
                    obs.push_back({cell.dataset, cell.algorithm, cell.fraction, seed, tasks[t].fold, "purity",
                                   r.purity[a][f]});
                }
                if (!cell.failed) {
                    cell.accuracy = summarize_metric(acc);
                    cell.purity = summarize_metric(pur);
                    report.observations.insert(report.observations.end(), obs.begin(), obs.end());
                }
                report.cells.push_back(std::move(cell));
            }
        }
    }

    // Friedman test over datasets whose every algorithm succeeded at the largest fraction.
    const double last = fractions.back();
    ScoreMatrix scores;
    scores.col_names = report.algorithms;
    std::vector<std::vector<double>> rows;
    for (const auto& name : report.datasets) {
        std::vector<double> row;
        bool ok = true;
        for (const auto& alg : report.algorithms) {
            const ReportCell& c = report.cell(name, alg, last);
            if (c.failed) {
                ok = false;
                break;
            }
            row.push_back(c.accuracy.mean);
        }
        if (ok) {
            scores.row_names.push_back(name);
            rows.push_back(std::move(row));
        }
    }
    if (rows.size() >= 2 && A >= 2) {
        scores.scores.resize(static_cast<EIdx>(rows.size()), static_cast<EIdx>(A));
        for (std::size_t r = 0; r < rows.size(); ++r)
            for (std::size_t c = 0; c < A; ++c) scores.scores(static_cast<EIdx>(r), static_cast<EIdx>(c)) = rows[r][c];
        report.scores = scores;
        report.ranks = aligned_ranks(scores, true);
        try {
            report.friedman = friedman_test(*report.ranks);
        } catch (const InvalidArgument& e) {
            report.friedman_note = e.what();
        }
    } else {
        report.friedman_note = "Friedman test needs at least 2 complete datasets and 2 algorithms";
    }
    return report;
}

std::string format_cell(const MetricSummary& m) { return num(m.mean) + "±" + num(m.variance); }

namespace {

std::string cell_text(const ReportCell& c, bool accuracy_metric) {
    if (c.failed) return "failed";
    return format_cell(accuracy_metric ? c.accuracy : c.purity);
}

void write_file(const std::filesystem::path& path, const std::string& text, std::vector<std::filesystem::path>& written) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed for " + path.string());
    written.push_back(path);
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) out += (ch == '"') ? std::string("\"\"") : std::string(1, ch);
    return out + "\"";
}

std::string wide_csv(const ReportTable& r, bool accuracy_metric) {
    std::ostringstream out;
    out << "dataset,fraction";
    for (const auto& a : r.algorithms) out << "," << a;
    out << "\n";
    for (const auto& d : r.datasets) {
        for (double f : r.fractions) {
            out << csv_escape(d) << "," << frac(f);
            for (const auto& a : r.algorithms) out << "," << cell_text(r.cell(d, a, f), accuracy_metric);
            out << "\n";
        }
    }
    return out.str();
}

std::string failures_csv(const ReportTable& r) {
    std::ostringstream out;
    out << "dataset,algorithm,fraction,reason\n";
    for (const auto& c : r.cells)
        if (c.failed) out << csv_escape(c.dataset) << "," << c.algorithm << "," << frac(c.fraction) << "," << csv_escape(c.failure) << "\n";
    return out.str();
}

std::string long_csv(const ReportTable& r) {
    std::ostringstream out;
    out << "dataset,algorithm,fraction,seed,fold,metric,value\n";
    for (const auto& o : r.observations)
        out << csv_escape(o.dataset) << "," << o.algorithm << "," << frac(o.fraction) << "," << o.seed << "," << o.fold
            << "," << o.metric << "," << num(o.value) << "\n";
    return out.str();
}

std::string ranks_csv(const ReportTable& r) {
    std::ostringstream out;
    out << "dataset";
    for (const auto& a : r.scores->col_names) out << "," << a;
    out << ",total\n";
    for (EIdx i = 0; i < r.ranks->ranks.rows(); ++i) {
        out << csv_escape(r.scores->row_names[static_cast<std::size_t>(i)]);
        for (EIdx j = 0; j < r.ranks->ranks.cols(); ++j) out << "," << num(r.ranks->ranks(i, j));
        out << "," << num(r.ranks->row_sums(i)) << "\n";
    }
    out << "total";
    for (EIdx j = 0; j < r.ranks->col_sums.size(); ++j) out << "," << num(r.ranks->col_sums(j));
    out << "," << num(r.ranks->col_sums.sum()) << "\n";
    return out.str();
}

std::string stats_csv(const ReportTable& r) {
    std::ostringstream out;
    out << "statistic,df,p_one_tailed,p_two_tailed,note\n";
    if (r.friedman) {
        out << num(r.friedman->statistic) << "," << r.friedman->df << "," << num(r.friedman->p_one_tailed) << ","
            << num(r.friedman->p_two_tailed) << ",\n";
    } else {
        out << ",,,," << csv_escape(r.friedman_note) << "\n";
    }
    return out.str();
}

json report_json(const ReportTable& r) {
    json j;
    j["datasets"] = r.datasets;
    j["algorithms"] = r.algorithms;
    j["fractions"] = r.fractions;
    j["cells"] = json::array();
    for (const auto& c : r.cells) {
        json e{{"dataset", c.dataset}, {"algorithm", c.algorithm}, {"fraction", c.fraction}, {"failed", c.failed}};
        if (c.failed) {
            e["failure"] = c.failure;
        } else {
            e["accuracy"] = {{"mean", c.accuracy.mean}, {"variance", c.accuracy.variance}, {"count", c.accuracy.count}};
            e["purity"] = {{"mean", c.purity.mean}, {"variance", c.purity.variance}, {"count", c.purity.count}};
        }
        j["cells"].push_back(e);
    }
    if (r.ranks) {
        json ranks = json::array();
        for (EIdx i = 0; i < r.ranks->ranks.rows(); ++i) {
            std::vector<double> row(r.ranks->ranks.row(i).begin(), r.ranks->ranks.row(i).end());
            ranks.push_back({{"dataset", r.scores->row_names[static_cast<std::size_t>(i)]},
                             {"ranks", row},
                             {"total", r.ranks->row_sums(i)}});
        }
        j["ranks"] = {{"rows", ranks},
                      {"column_totals", std::vector<double>(r.ranks->col_sums.begin(), r.ranks->col_sums.end())},
                      {"algorithms", r.scores->col_names}};
    }
    if (r.friedman) {
        j["friedman"] = {{"statistic", r.friedman->statistic},
                         {"df", r.friedman->df},
                         {"p_one_tailed", r.friedman->p_one_tailed},
                         {"p_two_tailed", r.friedman->p_two_tailed}};
    } else {
        j["friedman"] = {{"note", r.friedman_note}};
    }
    return j;
}

std::string markdown(const ReportTable& r) {
    std::ostringstream out;
    out << "# Experiment report\n";
    for (const char* metric : {"accuracy", "purity"}) {
        const bool is_acc = std::string(metric) == "accuracy";
        for (double f : r.fractions) {
            out << "\n## " << metric << ", fraction " << frac(f) << "\n\n| dataset |";
            for (const auto& a : r.algorithms) out << " " << a << " |";
            out << "\n|---|";
            for (std::size_t i = 0; i < r.algorithms.size(); ++i) out << "---|";
            out << "\n";
            for (const auto& d : r.datasets) {
                out << "| " << d << " |";
                for (const auto& a : r.algorithms) out << " " << cell_text(r.cell(d, a, f), is_acc) << " |";
                out << "\n";
            }
        }
    }
    if (r.ranks) {
        out << "\n## Aligned ranks (accuracy, fraction " << frac(r.fractions.back()) << ")\n\n| dataset |";
        for (const auto& a : r.scores->col_names) out << " " << a << " |";
        out << " total |\n|---|";
        for (std::size_t i = 0; i <= r.scores->col_names.size(); ++i) out << "---|";
        out << "\n";
        for (EIdx i = 0; i < r.ranks->ranks.rows(); ++i) {
            out << "| " << r.scores->row_names[static_cast<std::size_t>(i)] << " |";
            for (EIdx j = 0; j < r.ranks->ranks.cols(); ++j) out << " " << num(r.ranks->ranks(i, j)) << " |";
            out << " " << num(r.ranks->row_sums(i)) << " |\n";
        }
        out << "| total |";
        for (EIdx j = 0; j < r.ranks->col_sums.size(); ++j) out << " " << num(r.ranks->col_sums(j)) << " |";
        out << " " << num(r.ranks->col_sums.sum()) << " |\n";
    }
    out << "\n## Friedman aligned ranks test\n\n";
    if (r.friedman) {
        out << "| T | df | p (one-tailed) | p (two-tailed) |\n|---|---|---|---|\n| " << num(r.friedman->statistic) << " | "
            << r.friedman->df << " | " << num(r.friedman->p_one_tailed) << " | " << num(r.friedman->p_two_tailed)
            << " |\n";
    } else {
        out << r.friedman_note << "\n";
    }
    bool header = false;
    for (const auto& c : r.cells) {
        if (!c.failed) continue;
        if (!header) {
            out << "\n## Failed cells\n\n| dataset | algorithm | fraction | reason |\n|---|---|---|---|\n";
            header = true;
        }
        out << "| " << c.dataset << " | " << c.algorithm << " | " << frac(c.fraction) << " | " << c.failure << " |\n";
    }
    return out.str();
}

std::string provenance_jsonl(const ReportTable& r) {
    std::ostringstream out;
    for (const auto& p : r.provenance) {
        json must = json::array();
        json cannot = json::array();
        for (auto [i, j] : p.constraints.must) must.push_back({i, j});
        for (auto [i, j] : p.constraints.cannot) cannot.push_back({i, j});
        json e{{"dataset", p.dataset}, {"seed", p.seed},         {"fold", p.fold},
               {"fraction", p.fraction}, {"test_indices", p.test_indices}, {"must", must},
               {"cannot", cannot}};
        out << e.dump() << "\n";
    }
    return out.str();
}

std::vector<std::string> split_cells(const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, '|');  // leading empty segment
    while (std::getline(ss, cell, '|')) {
        const auto b = cell.find_first_not_of(' ');
        const auto e = cell.find_last_not_of(' ');
        cells.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
    }
    if (!cells.empty() && cells.back().empty()) cells.pop_back();
    return cells;
}

}  // namespace

std::vector<std::filesystem::path> emit_report(const ReportTable& r, const std::set<std::string>& formats,
                                               const std::filesystem::path& dir) {
    require(!formats.empty(), "emit_report needs at least one format");
    for (const auto& f : formats)
        require(f == "csv" || f == "json" || f == "markdown", "unknown report format '" + f + "'");
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());

    std::vector<std::filesystem::path> written;
    if (formats.count("csv")) {
        write_file(dir / "accuracy.csv", wide_csv(r, true), written);
        write_file(dir / "purity.csv", wide_csv(r, false), written);
        write_file(dir / "long.csv", long_csv(r), written);
        write_file(dir / "failures.csv", failures_csv(r), written);
        write_file(dir / "stats.csv", stats_csv(r), written);
        if (r.ranks) write_file(dir / "ranks.csv", ranks_csv(r), written);
    }
    if (formats.count("json")) write_file(dir / "report.json", report_json(r).dump(2) + "\n", written);
    if (formats.count("markdown")) write_file(dir / "report.md", markdown(r), written);
    write_file(dir / "provenance.jsonl", provenance_jsonl(r), written);
    std::sort(written.begin(), written.end());
    return written;
}

std::map<std::tuple<std::string, double, std::string, std::string>, std::pair<double, double>> parse_markdown_report(
    const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::map<std::tuple<std::string, double, std::string, std::string>, std::pair<double, double>> out;
    std::string line, metric;
    double fraction = 0.0;
    std::vector<std::string> header;
    bool in_table = false;
    while (std::getline(in, line)) {
        if (line.rfind("## ", 0) == 0) {
            in_table = false;
            const auto comma = line.find(", fraction ");
            if (comma == std::string::npos) {
                metric.clear();
                continue;
            }
            metric = line.substr(3, comma - 3);
            fraction = std::stod(line.substr(comma + 11));
            continue;
        }
        if (metric.empty() || line.empty() || line[0] != '|') continue;
        auto cells = split_cells(line);
        if (!in_table) {
            header = cells;
            in_table = true;
            continue;
        }
        if (!cells.empty() && cells[0].rfind("---", 0) == 0) continue;
        for (std::size_t c = 1; c < cells.size() && c < header.size(); ++c) {
            const auto pm = cells[c].find("±");
            if (pm == std::string::npos) continue;
            out[{metric, fraction, cells[0], header[c]}] = {std::stod(cells[c].substr(0, pm)),
                                                            std::stod(cells[c].substr(pm + std::string("±").size()))};
        }
    }
    return out;
}

}  // namespace pcgrbm
