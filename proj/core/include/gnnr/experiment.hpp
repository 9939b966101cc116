#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gnnr/edge_slim.hpp"
#include "gnnr/graph.hpp"
#include "gnnr/loss.hpp"
#include "gnnr/meta_graph.hpp"
#include "gnnr/metrics.hpp"
#include "gnnr/model.hpp"
#include "gnnr/padding.hpp"
#include "gnnr/reagg.hpp"
#include "gnnr/synth.hpp"
#include "gnnr/training.hpp"

namespace gnnr {

enum class Method { vanilla, retrain, metafp, edgslim, metagp, reagg, metafp_reagg };

std::string_view to_string(Method m) noexcept;
Method parse_method(std::string_view name);

/// Where a task's data comes from. A synthetic spec is regenerated for every
/// run with seed = synth.seed + run seed; a dataset file is loaded as is.
struct DataSource {
  std::optional<SynthTaskSpec> synth;
  std::optional<std::filesystem::path> dataset;
  /// Node-level only: keep these classes, relabelled 0..n-1.
  std::vector<std::int64_t> classes;
  /// Re-split train/val/test with these fractions.
  std::optional<std::array<double, 3>> split;
};

struct SourceShape {
  std::size_t feat_dim = 0;
  TaskKind task_kind = TaskKind::node_classification;
  std::optional<std::size_t> num_classes;
};

/// Shape of the data without generating it (dataset files are read).
SourceShape source_shape(const DataSource& source);

GraphDataset load_source(const DataSource& source, std::uint64_t run_seed);

struct PretrainConfig {
  DataSource data;
  /// Reuse this model for every seed instead of pretraining.
  std::optional<std::filesystem::path> model;
  /// in_dim, out_dim and readout are derived from the data.
  Architecture arch;
  TrainOptions opt;
};

struct DownstreamConfig {
  DataSource data;
  /// Default: cross-entropy over the downstream classes, MSE for regression.
  std::optional<LossSpec> loss;
};

struct MethodParams {
  /// nullopt = pretrained_dim - downstream_dim.
  std::optional<std::size_t> pad_size;
  PadPosition position = PadPosition::end;
  double init_std = 0.01;
  /// Optimizer for paddings, meta features and attack perturbations.
  ReprogramOptions reprogram;
  SlimOptions slim;
  std::size_t num_meta_nodes = 10;
  double tau = 1.0;
  std::vector<Aggregator> candidates{kAllAggregators.begin(), kAllAggregators.end()};
  EmbeddingSource embedding = EmbeddingSource::raw_mean;
  ReaggOptions reagg;
};

/// Method-specific optimizer defaults: the newton rule for feature padding,
/// Adam for meta-graph features and attack perturbations.
ReprogramOptions default_reprogram_options(Method method);

struct ExperimentConfig {
  PretrainConfig pretrain;
  DownstreamConfig downstream;
  Method method = Method::vanilla;
  MethodParams params;
  std::vector<std::uint64_t> seeds{0};
  /// Empty: nothing is written.
  std::filesystem::path output_dir;
};

/// Parses the JSON config. Unknown keys are rejected.
ExperimentConfig config_from_json(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Shapes of both tasks after the dimension and method checks pass.
struct TaskShapes {
  std::size_t pretrained_dim = 0;
  std::size_t downstream_dim = 0;
  std::size_t pad_size = 0;
  std::size_t out_dim = 0;
  TaskKind pretrain_kind = TaskKind::node_classification;
  TaskKind downstream_kind = TaskKind::node_classification;
};

/// Every config/dimension contradiction surfaces here, before any compute.
TaskShapes check_config(const ExperimentConfig& cfg, Method method);

struct SeedRecord {
  std::uint64_t seed = 0;
  /// Split name -> metrics. Downstream splits are "train", "val", "test";
  /// the pretrained model on its own task is "pretrain-train"/"pretrain-test".
  std::vector<std::pair<std::string, Metrics>> metrics;
  std::vector<double> pretrain_losses;
  std::vector<double> method_losses;
  double wall_clock_s = 0.0;
  std::string hash_before;
  std::string hash_after;

  std::optional<PaddingSpec> padding;
  std::optional<SlimPlan> slim;
  std::size_t edges_before = 0;
  std::size_t edges_after = 0;
  std::optional<MetaGraph> meta;
  std::size_t attachments = 0;
  std::size_t attachments_preserved = 0;
  std::optional<AggregatorChoice> choice;
  std::vector<std::size_t> selection_histogram;
  /// Retrain only: hash of the freshly trained downstream model.
  std::string retrained_hash;

  const Metrics* find(std::string_view split) const;
};

struct RunReport {
  Method method = Method::vanilla;
  TaskKind task_kind = TaskKind::node_classification;
  std::vector<SeedRecord> records;
};

RunReport run_experiment(const ExperimentConfig& cfg);

/// One report per method; each seed pretrains once and every method reuses
/// that model and data. Writes report_<method>.json and metrics_<method>.csv
/// when output_dir is set.
std::vector<RunReport> run_methods(const ExperimentConfig& cfg, std::span<const Method> methods);

/// `method,seed,split,metric,value`, one row per reported number. Contains no
/// timing, so identical runs give identical bytes.
std::string metrics_csv(const RunReport& report);
std::string report_to_json(const RunReport& report);
/// Reads back method, task kind, seeds and metrics.
RunReport report_from_json(std::string_view text);

struct AttackRecord {
  std::uint64_t seed = 0;
  Metrics before;
  Metrics after;
  std::vector<double> losses;
  Tensor perturbation;  // 1 x feat_dim
  std::string hash_before;
  std::string hash_after;
};

struct AttackReport {
  TaskKind task_kind = TaskKind::node_classification;
  std::vector<AttackRecord> records;
};

/// The pretrained model is the victim and the downstream task the attacker's.
/// A single perturbation, added to every node's raw features, is optimized on
/// the attacker's training split; test metrics are reported before and after.
/// Requires equal feature widths.
AttackReport attack_demo(const ExperimentConfig& cfg);
/// Rows with method "vanilla" (before) and "attack" (after).
std::string attack_csv(const AttackReport& report);

}  // namespace gnnr
