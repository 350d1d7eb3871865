#include "pcgrbm/cli.hpp"

#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "pcgrbm/clustering.hpp"
#include "pcgrbm/data.hpp"
#include "pcgrbm/eval.hpp"
#include "pcgrbm/grbm.hpp"
#include "pcgrbm/kernels.hpp"
#include "pcgrbm/model_io.hpp"
#include "pcgrbm/pcgrbm.hpp"
#include "pcgrbm/pipeline.hpp"
#include "pcgrbm/rng.hpp"

namespace pcgrbm {

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Runs `fn` and reports any InvalidArgument it throws as a usage error.
template <class Fn>
auto checked(Fn&& fn) {
    try {
        return fn();
    } catch (const InvalidArgument& e) {
        throw UsageError(e.what());
    }
}

struct Options {
    std::string input;
    std::string labels_column = "label";
    std::string model;
    std::string out;
    Index hidden = 100;
    Index epochs = 30;
    double epsilon = 1e-8;
    Index batch_size = 0;
    double lambda = 0.7;
    std::string sign_mode = "paper-exact";
    double constraint_rate = 1.0;
    bool hidden_probabilities = false;
    std::string constraints;
    std::optional<double> fraction;
    std::optional<Index> k;
    std::string algorithm = "kmeans";
    std::uint64_t seed = 0;
    int threads = 1;
    std::vector<std::string> format;
    std::string config;
    bool ranks = false;
    bool lower_is_better = false;
};

std::optional<std::string> label_option(const Options& o) {
    if (o.labels_column.empty() || o.labels_column == "none") return std::nullopt;
    return o.labels_column;
}

std::string num(double v) {
    std::ostringstream s;
    s.precision(17);
    s << v;
    return s.str();
}

/// Header plus string cells of a comma-separated file.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    [[nodiscard]] std::size_t column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw InvalidArgument("column '" + name + "' not found");
    }
};

std::vector<std::string> split_line(std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

CsvTable read_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    CsvTable t;
    std::string line;
    if (!std::getline(in, line)) throw InvalidArgument(path + ": empty file");
    t.header = split_line(line);
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        auto cells = split_line(line);
        if (cells.size() != t.header.size())
            throw InvalidArgument(path + ": row " + std::to_string(t.rows.size() + 2) + " has " +
                                  std::to_string(cells.size()) + " cells, expected " + std::to_string(t.header.size()));
        t.rows.push_back(std::move(cells));
    }
    return t;
}

double parse_number(const std::string& text, const std::string& where) {
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used == text.size()) return v;
    } catch (const std::exception&) {
    }
    throw InvalidArgument(where + ": '" + text + "' is not a number");
}

Dataset load_normalized(const Options& o) { return normalize(load_csv(o.input, label_option(o))); }

TrainConfig train_config(const Options& o) {
    TrainConfig cfg;
    cfg.epsilon = o.epsilon;
    cfg.epochs = o.epochs;
    cfg.batch_size = o.batch_size;
    cfg.seed = o.seed;
    checked([&] {
        cfg.validate();
        return 0;
    });
    return cfg;
}

bool json_format(const Options& o) {
    if (o.format.empty()) return false;
    if (o.format.size() == 1 && (o.format[0] == "text" || o.format[0] == "json")) return o.format[0] == "json";
    throw UsageError("--format must be text or json for this subcommand");
}

int cmd_normalize(const Options& o, std::ostream& out) {
    const Dataset d = load_normalized(o);
    save_csv(d, o.out, label_option(o).value_or("label"));
    out << "normalized " << d.rows() << " rows x " << d.cols() << " columns -> " << o.out << "\n";
    return 0;
}

int cmd_train_grbm(const Options& o, std::ostream& out) {
    const TrainConfig cfg = train_config(o);
    checked([&] { return o.hidden >= 1 ? 0 : throw InvalidArgument("--hidden must be >= 1"); });
    const Dataset d = load_normalized(o);
    ModelFile model{train_grbm(d, cfg, o.hidden), cfg, std::nullopt};
    save_model(model, o.out);
    out << "trained GRBM p=" << d.cols() << " q=" << o.hidden << " epochs=" << cfg.epochs << " -> " << o.out << "\n";
    return 0;
}

int cmd_train_pcgrbm(const Options& o, std::ostream& out) {
    PcgrbmConfig cfg;
    cfg.base = train_config(o);
    cfg.lambda = o.lambda;
    cfg.constraint_rate = o.constraint_rate;
    cfg.use_sampled_hidden = !o.hidden_probabilities;
    checked([&] {
        cfg.sign_mode = parse_sign_mode(o.sign_mode);
        cfg.validate();
        if (o.hidden < 1) throw InvalidArgument("--hidden must be >= 1");
        if (o.constraints.empty() == !o.fraction.has_value())
            throw InvalidArgument("give exactly one of --constraints or --fraction");
        return 0;
    });
    const Dataset d = load_normalized(o);
    ConstraintSet constraints;
    if (o.fraction) {
        if (!d.labels) throw InvalidArgument("--fraction needs a labeled input");
        constraints = sample_constraints(*d.labels, *o.fraction, derive_seed(o.seed, {0x636f6eULL}));
    } else {
        constraints = load_constraints(o.constraints);
    }
    constraints.validate(d.rows());
    ConstraintProvenance prov;
    prov.lambda = cfg.lambda;
    prov.sign_mode = cfg.sign_mode;
    prov.constraint_rate = cfg.constraint_rate;
    prov.use_sampled_hidden = cfg.use_sampled_hidden;
    prov.must_count = constraints.must.size();
    prov.cannot_count = constraints.cannot.size();
    prov.fingerprint = constraints.fingerprint();
    ModelFile model{train_pcgrbm(d, constraints, cfg, o.hidden), cfg.base, prov};
    if (!model.params.weights.allFinite()) throw std::runtime_error("training diverged to non-finite weights");
    save_model(model, o.out);
    out << "trained pcGRBM p=" << d.cols() << " q=" << o.hidden << " must=" << prov.must_count
        << " cannot=" << prov.cannot_count << " -> " << o.out << "\n";
    return 0;
}

int cmd_extract(const Options& o, std::ostream& out) {
    const ModelFile model = load_model(o.model);
    const Dataset d = load_normalized(o);
    if (d.cols() != model.params.visible())
        throw InvalidArgument("input has " + std::to_string(d.cols()) + " features, model expects " +
                              std::to_string(model.params.visible()));
    Dataset features{d.name, extract_features(model.params, d), d.labels, false};
    save_csv(features, o.out, label_option(o).value_or("label"));
    out << "extracted " << features.rows() << " x " << features.cols() << " hidden features -> " << o.out << "\n";
    return 0;
}

int cmd_cluster(const Options& o, std::ostream& out) {
    const ClusteringAdapter& adapter = checked([&]() -> const ClusteringAdapter& { return clustering_adapter(o.algorithm); });
    const Dataset d = load_csv(o.input, label_option(o));
    Index k = 0;
    if (o.k) {
        k = *o.k;
    } else if (d.labels) {
        k = static_cast<Index>(d.num_classes());
    } else {
        throw UsageError("--k is required when the input has no labels");
    }
    ConstraintSet constraints;
    if (!o.constraints.empty()) {
        if (!adapter.uses_constraints) throw UsageError("algorithm '" + o.algorithm + "' does not take constraints");
        constraints = load_constraints(o.constraints);
        constraints.validate(d.rows());
    }
    const ClusteringResult r = adapter.run(d.features, k, constraints, o.seed);
    std::ofstream file(o.out);
    if (!file) throw IoError("cannot write " + o.out);
    file << "cluster";
    if (d.labels) file << "," << *label_option(o);
    file << "\n";
    for (std::size_t i = 0; i < r.assignments.size(); ++i) {
        file << r.assignments[i];
        if (d.labels) file << "," << (*d.labels)[i];
        file << "\n";
    }
    if (!file) throw IoError("write failed for " + o.out);
    out << o.algorithm << ": " << d.rows() << " instances in " << r.k << " clusters"
        << (r.converged ? "" : " (not converged)") << " -> " << o.out << "\n";
    return 0;
}

int cmd_evaluate(const Options& o, std::ostream& out) {
    const bool as_json = json_format(o);
    const auto label = label_option(o);
    if (!label) throw UsageError("evaluate needs --labels-column");
    const CsvTable t = read_table(o.input);
    const std::size_t cc = t.column("cluster");
    const std::size_t lc = t.column(*label);
    Labels truth;
    ClusteringResult r;
    std::map<std::string, int> classes;
    for (const auto& row : t.rows) {
        const auto [it, fresh] = classes.emplace(row[lc], static_cast<int>(classes.size()));
        truth.push_back(it->second);
        const double a = parse_number(row[cc], o.input);
        if (a < 0 || a != static_cast<double>(static_cast<Index>(a)))
            throw InvalidArgument(o.input + ": cluster ids must be non-negative integers");
        r.assignments.push_back(static_cast<Index>(a));
        r.k = std::max(r.k, r.assignments.back() + 1);
    }
    const double acc = accuracy(truth, r);
    const double pur = purity(truth, r);
    if (as_json) {
        out << nlohmann::json{{"accuracy", acc}, {"purity", pur}, {"n", truth.size()}}.dump() << "\n";
    } else {
        out << "accuracy=" << num(acc) << "\npurity=" << num(pur) << "\n";
    }
    return 0;
}

int cmd_stats(const Options& o, std::ostream& out) {
    const bool as_json = json_format(o);
    const CsvTable t = read_table(o.input);
    if (t.header.size() < 3) throw InvalidArgument(o.input + ": need a name column and at least 2 algorithm columns");
    ScoreMatrix m;
    m.col_names.assign(t.header.begin() + 1, t.header.end());
    m.scores.resize(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(m.col_names.size()));
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        m.row_names.push_back(t.rows[i][0]);
        for (std::size_t j = 1; j < t.header.size(); ++j)
            m.scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j - 1)) = parse_number(t.rows[i][j], o.input);
    }
    m.validate();
    const RankTable ranks = o.ranks ? rank_table_from_ranks(m.scores) : aligned_ranks(m, !o.lower_is_better);
    const FriedmanSummary s = friedman_test(ranks);
    if (as_json) {
        out << nlohmann::json{{"T", s.statistic},
                              {"df", s.df},
                              {"p_one_tailed", s.p_one_tailed},
                              {"p_two_tailed", s.p_two_tailed}}
                   .dump()
            << "\n";
    } else {
        char buf[256];
        std::snprintf(buf, sizeof buf, "T=%.4f\ndf=%d\np_one_tailed=%.6g\np_two_tailed=%.6g\n", s.statistic, s.df,
                      s.p_one_tailed, s.p_two_tailed);
        out << buf;
    }
    return 0;
}

int cmd_experiment(const Options& o, const CLI::App& sub, std::ostream& out, std::ostream& err) {
    ExperimentConfig cfg = checked([&] { return load_experiment_config(o.config); });
    if (sub.count("--threads")) cfg.threads = o.threads;
    if (sub.count("--out")) cfg.output_dir = o.out;
    if (!o.format.empty()) cfg.formats = {o.format.begin(), o.format.end()};
    checked([&] {
        cfg.validate();
        return 0;
    });
    const ReportTable report = run_experiment(cfg, o.seed);
    const auto files = emit_report(report, cfg.formats, cfg.output_dir);
    Index failed = 0;
    for (const auto& c : report.cells) {
        if (!c.failed) continue;
        ++failed;
        err << "failed cell: " << c.dataset << " / " << c.algorithm << " / " << c.fraction << ": " << c.failure << "\n";
    }
    out << "cells=" << report.cells.size() << " failed=" << failed << "\n";
    if (report.friedman) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "T=%.4f df=%d p_one_tailed=%.6g\n", report.friedman->statistic,
                      report.friedman->df, report.friedman->p_one_tailed);
        out << buf;
    } else {
        out << "friedman: " << report.friedman_note << "\n";
    }
    for (const auto& f : files) out << "wrote " << f.string() << "\n";
    return failed == 0 ? 0 : 1;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    Options o;
    CLI::App app{"pcGRBM feature learning, constrained clustering and rank statistics"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1, 1);

    auto add_input = [&](CLI::App* s, const std::string& what) {
        s->add_option("--input", o.input, what)->required();
    };
    auto add_labels = [&](CLI::App* s) {
        s->add_option("--labels-column", o.labels_column, "label column name, or 'none'");
    };
    auto add_seed = [&](CLI::App* s) { s->add_option("--seed", o.seed, "random seed")->required(); };
    auto add_threads = [&](CLI::App* s) {
        s->add_option("--threads", o.threads, "OpenMP threads")->check(CLI::PositiveNumber);
    };
    auto add_training = [&](CLI::App* s) {
        add_input(s, "training CSV");
        add_labels(s);
        s->add_option("--out", o.out, "model file to write")->required();
        s->add_option("--hidden", o.hidden, "hidden width q");
        s->add_option("--epochs", o.epochs, "training epochs");
        s->add_option("--epsilon", o.epsilon, "CD-1 learning rate");
        s->add_option("--batch-size", o.batch_size, "mini-batch rows (0 = full batch)");
        add_seed(s);
        add_threads(s);
    };

    auto* normalize_cmd = app.add_subcommand("normalize", "z-score every feature column");
    add_input(normalize_cmd, "dataset CSV");
    add_labels(normalize_cmd);
    normalize_cmd->add_option("--out", o.out, "normalized CSV to write")->required();

    auto* grbm_cmd = app.add_subcommand("train-grbm", "train a GRBM with CD-1");
    add_training(grbm_cmd);

    auto* pc_cmd = app.add_subcommand("train-pcgrbm", "train a pcGRBM with pairwise constraints");
    add_training(pc_cmd);
    pc_cmd->add_option("--lambda", o.lambda, "weight of the CD-1 term");
    pc_cmd->add_option("--sign-mode", o.sign_mode, "constraint update sign")
        ->check(CLI::IsMember({"paper-exact", "descent"}));
    pc_cmd->add_option("--constraint-rate", o.constraint_rate, "step size of the constraint term in descent mode");
    pc_cmd->add_flag("--hidden-probabilities", o.hidden_probabilities,
                     "use hidden probabilities instead of samples for constraint pairs");
    pc_cmd->add_option("--constraints", o.constraints, "constraint CSV (kind,i,j)");
    pc_cmd->add_option("--fraction", o.fraction, "sample constraints from this fraction of each class");

    auto* extract_cmd = app.add_subcommand("extract", "hidden-unit probabilities for a dataset");
    extract_cmd->add_option("--model", o.model, "model file")->required();
    add_input(extract_cmd, "dataset CSV");
    add_labels(extract_cmd);
    extract_cmd->add_option("--out", o.out, "feature CSV to write")->required();
    add_threads(extract_cmd);

    auto* cluster_cmd = app.add_subcommand("cluster", "cluster a feature CSV");
    add_input(cluster_cmd, "feature CSV, used as given");
    add_labels(cluster_cmd);
    cluster_cmd->add_option("--algorithm", o.algorithm, "kmeans, spectral, ap or cop_kmeans");
    cluster_cmd->add_option("--k", o.k, "number of clusters (default: number of classes)");
    cluster_cmd->add_option("--constraints", o.constraints, "constraint CSV for cop_kmeans");
    cluster_cmd->add_option("--out", o.out, "assignment CSV to write")->required();
    add_seed(cluster_cmd);
    add_threads(cluster_cmd);

    auto* eval_cmd = app.add_subcommand("evaluate", "accuracy and purity of an assignment CSV");
    add_input(eval_cmd, "CSV with a 'cluster' column and a label column");
    add_labels(eval_cmd);
    eval_cmd->add_option("--format", o.format, "text or json")->expected(1);

    auto* stats_cmd = app.add_subcommand("stats", "Friedman aligned ranks test on a score matrix");
    add_input(stats_cmd, "CSV: name column, then one column per algorithm");
    stats_cmd->add_flag("--ranks", o.ranks, "input already holds aligned ranks");
    stats_cmd->add_flag("--lower-is-better", o.lower_is_better, "rank low scores first");
    stats_cmd->add_option("--format", o.format, "text or json")->expected(1);

    auto* exp_cmd = app.add_subcommand("experiment", "run the cross-validated experiment from a config file");
    exp_cmd->add_option("--config", o.config, "experiment config JSON")->required();
    add_seed(exp_cmd);
    add_threads(exp_cmd);
    exp_cmd->add_option("--out", o.out, "output directory (overrides the config)");
    exp_cmd->add_option("--format", o.format, "report formats: csv, json, markdown")->delimiter(',');

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        kernels::set_num_threads(o.threads);
        if (*normalize_cmd) return cmd_normalize(o, out);
        if (*grbm_cmd) return cmd_train_grbm(o, out);
        if (*pc_cmd) return cmd_train_pcgrbm(o, out);
        if (*extract_cmd) return cmd_extract(o, out);
        if (*cluster_cmd) return cmd_cluster(o, out);
        if (*eval_cmd) return cmd_evaluate(o, out);
        if (*stats_cmd) return cmd_stats(o, out);
        if (*exp_cmd) return cmd_experiment(o, *exp_cmd, out, err);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\nRun with --help for usage.\n";
        return 2;
    } catch (const InfeasibleConstraints& e) {
        err << "error[infeasible]: " << e.what() << "\n";
        return 1;
    } catch (const IoError& e) {
        err << "error[io]: " << e.what() << "\n";
        return 1;
    } catch (const InvalidArgument& e) {
        err << "error[invalid-input]: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error[runtime]: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

}  // namespace pcgrbm
