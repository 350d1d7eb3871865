#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pcgrbm/clustering.hpp"
#include "pcgrbm/data.hpp"
#include "pcgrbm/eval.hpp"
#include "pcgrbm/pcgrbm.hpp"

namespace pcgrbm {

struct SynthSpec {
    Index n = 300;
    Index k = 3;
    Index p = 10;
    double separation = 8.0;
    std::uint64_t seed = 0;
};

struct DatasetSource {
    std::string name;
    std::optional<std::filesystem::path> csv;
    std::string label_column = "label";
    std::optional<SynthSpec> synth;
};

enum class FeatureSource { raw, grbm, pcgrbm };

std::string to_string(FeatureSource source);
FeatureSource parse_feature_source(const std::string& text);

/// A clustering algorithm applied to one feature source, written `<algorithm>.<source>`.
struct AlgorithmSpec {
    std::string algorithm;
    FeatureSource source = FeatureSource::raw;

    [[nodiscard]] std::string label() const { return algorithm + "." + to_string(source); }
    static AlgorithmSpec parse(const std::string& label);
};

/// Clustering routine the pipeline can call. Adapters with `uses_constraints` run on the
/// training rows followed by the test rows, with constraints over the training rows only,
/// and are scored on the test rows.
struct ClusteringAdapter {
    using Fn = std::function<ClusteringResult(const Matrix& features, Index k, const ConstraintSet& constraints,
                                              std::uint64_t seed)>;
    Fn run;
    bool uses_constraints = false;
};

/// Registers (or replaces) an adapter under `name`. Built-ins: kmeans, spectral, ap, cop_kmeans.
void register_clustering_adapter(const std::string& name, ClusteringAdapter adapter);
const ClusteringAdapter& clustering_adapter(const std::string& name);
std::vector<std::string> clustering_adapter_names();

struct ExperimentConfig {
    std::vector<DatasetSource> datasets;
    Index hidden = 100;
    PcgrbmConfig pcgrbm;
    std::vector<double> fractions{0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.08};
    Index folds = 10;
    std::vector<AlgorithmSpec> algorithms;
    std::vector<std::uint64_t> seeds{0};
    std::filesystem::path output_dir = "report";
    std::set<std::string> formats{"csv", "json", "markdown"};
    int threads = 1;
    bool transitive_closure = false;

    void validate() const;
    static ExperimentConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
    [[nodiscard]] nlohmann::json to_json() const;
};

ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Default algorithm list: kmeans, spectral, ap on raw/grbm/pcgrbm features plus cop_kmeans on raw/pcgrbm.
std::vector<AlgorithmSpec> default_algorithms();

struct MetricSummary {
    double mean = 0.0;
    double variance = 0.0;  ///< sample variance; 0 for a single observation
    Index count = 0;
};

MetricSummary summarize_metric(const std::vector<double>& values);

struct ReportCell {
    std::string dataset;
    std::string algorithm;
    double fraction = 0.0;
    bool failed = false;
    std::string failure;
    MetricSummary accuracy;
    MetricSummary purity;
};

struct Observation {
    std::string dataset;
    std::string algorithm;
    double fraction = 0.0;
    std::uint64_t seed = 0;
    Index fold = 0;
    std::string metric;
    double value = 0.0;
};

/// Constraint pairs used for one (dataset, seed, fold, fraction), in dataset row indices.
struct FoldProvenance {
    std::string dataset;
    std::uint64_t seed = 0;
    Index fold = 0;
    double fraction = 0.0;
    std::vector<Index> test_indices;
    ConstraintSet constraints;
};

struct ReportTable {
    std::vector<std::string> datasets;
    std::vector<std::string> algorithms;
    std::vector<double> fractions;
    std::vector<ReportCell> cells;  ///< dataset-major, then algorithm, then fraction
    std::vector<Observation> observations;
    std::vector<FoldProvenance> provenance;

    std::optional<ScoreMatrix> scores;  ///< mean accuracy at the largest fraction
    std::optional<RankTable> ranks;
    std::optional<FriedmanSummary> friedman;
    std::string friedman_note;

    [[nodiscard]] const ReportCell& cell(const std::string& dataset, const std::string& algorithm,
                                         double fraction) const;
    [[nodiscard]] bool any_failed() const;
};

ReportTable run_experiment(const ExperimentConfig& cfg, std::uint64_t master_seed);

/// Writes the report into `dir` in each requested format (csv, json, markdown), plus
/// provenance.jsonl. Returns the paths written, sorted.
std::vector<std::filesystem::path> emit_report(const ReportTable& r, const std::set<std::string>& formats,
                                               const std::filesystem::path& dir);

/// `mean±variance` cell text as emitted in the wide tables.
std::string format_cell(const MetricSummary& m);

/// Reads the per-metric markdown tables back: (metric, fraction, dataset, algorithm) -> (mean, variance).
std::map<std::tuple<std::string, double, std::string, std::string>, std::pair<double, double>> parse_markdown_report(
    const std::filesystem::path& path);

}  // namespace pcgrbm
