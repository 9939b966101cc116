#include "gnnr/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <initializer_list>

#include "gnnr/errors.hpp"
#include "gnnr/graph_io.hpp"
#include "gnnr/model_io.hpp"
#include "gnnr/program.hpp"
#include "json_util.hpp"

namespace gnnr {

using detail::json;

std::string_view to_string(Method m) noexcept {
  switch (m) {
    case Method::vanilla: return "vanilla";
    case Method::retrain: return "retrain";
    case Method::metafp: return "metafp";
    case Method::edgslim: return "edgslim";
    case Method::metagp: return "metagp";
    case Method::reagg: return "reagg";
    case Method::metafp_reagg: return "metafp+reagg";
  }
  return "vanilla";
}

Method parse_method(std::string_view name) {
  for (const auto m : {Method::vanilla, Method::retrain, Method::metafp, Method::edgslim, Method::metagp,
                       Method::reagg, Method::metafp_reagg}) {
    if (name == to_string(m)) return m;
  }
  throw ValidationError("unknown method '" + std::string(name) +
                        "' (expected vanilla, retrain, metafp, edgslim, metagp, reagg or metafp+reagg)");
}

ReprogramOptions default_reprogram_options(Method method) {
  ReprogramOptions opt;
  if (method != Method::metafp && method != Method::metafp_reagg) {
    opt.rule = StepRule::adam;
    opt.lr = 0.1;
    opt.epochs = 50;
  }
  return opt;
}

// ---------------------------------------------------------------------------
// Config parsing

namespace {

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) throw ValidationError(where + ": expected a JSON object");
  for (const auto& [key, value] : obj.items()) {
    const bool known =
        std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; });
    if (!known) throw ValidationError(where + ": unknown key '" + key + "'");
  }
}

SynthTaskSpec synth_from_json(const json& j) {
  check_keys(j, {"seed", "task_kind", "num_nodes", "num_graphs", "feat_dim", "num_classes", "intra_p", "inter_p",
                 "noise_std", "class_signal", "signal_scale", "feature_shift"},
             "synth");
  SynthTaskSpec s;
  s.seed = detail::field_or<std::uint64_t>(j, "seed", s.seed);
  if (j.contains("task_kind")) s.task_kind = parse_task_kind(detail::field<std::string>(j, "task_kind"));
  s.num_nodes = detail::field_or<std::size_t>(j, "num_nodes", s.num_nodes);
  s.num_graphs = detail::field_or<std::size_t>(j, "num_graphs", s.num_graphs);
  s.feat_dim = detail::field_or<std::size_t>(j, "feat_dim", s.feat_dim);
  s.num_classes = detail::field_or<std::size_t>(j, "num_classes", s.num_classes);
  s.intra_p = detail::field_or<double>(j, "intra_p", s.intra_p);
  s.inter_p = detail::field_or<double>(j, "inter_p", s.inter_p);
  s.noise_std = detail::field_or<double>(j, "noise_std", s.noise_std);
  if (j.contains("class_signal")) {
    s.class_signal = parse_class_signal(detail::field<std::string>(j, "class_signal"));
  }
  s.signal_scale = detail::field_or<double>(j, "signal_scale", s.signal_scale);
  s.feature_shift = detail::field_or<double>(j, "feature_shift", s.feature_shift);
  s.validate();
  return s;
}

DataSource source_from_json(const json& j, const std::string& where, std::initializer_list<const char*> extra) {
  std::vector<const char*> keys{"synth", "dataset", "classes", "split"};
  keys.insert(keys.end(), extra.begin(), extra.end());
  for (const auto& [key, value] : j.items()) {
    if (std::find_if(keys.begin(), keys.end(), [&](const char* k) { return key == k; }) == keys.end()) {
      throw ValidationError(where + ": unknown key '" + key + "'");
    }
  }
  DataSource src;
  if (j.contains("synth")) src.synth = synth_from_json(j["synth"]);
  if (j.contains("dataset")) src.dataset = detail::field<std::string>(j, "dataset");
  src.classes = detail::field_or<std::vector<std::int64_t>>(j, "classes", {});
  if (j.contains("split")) {
    const auto r = detail::field<std::vector<double>>(j, "split");
    if (r.size() != 3) throw ValidationError(where + ".split: expected [train, val, test]");
    src.split = std::array<double, 3>{r[0], r[1], r[2]};
  }
  return src;
}

Architecture arch_from_json(const json& j) {
  check_keys(j, {"hidden_dim", "propagation_layers", "aggregator", "self_loops", "attention_params"},
             "pretrain.arch");
  Architecture a;
  a.hidden_dim = detail::field_or<std::size_t>(j, "hidden_dim", a.hidden_dim);
  a.propagation_layers = detail::field_or<std::size_t>(j, "propagation_layers", a.propagation_layers);
  if (j.contains("aggregator")) a.aggregator = parse_aggregator(detail::field<std::string>(j, "aggregator"));
  a.self_loops = detail::field_or<bool>(j, "self_loops", a.self_loops);
  a.attention_params = detail::field_or<bool>(j, "attention_params", a.attention_params);
  return a;
}

LossSpec loss_from_json(const json& j) {
  check_keys(j, {"kind", "output_slice"}, "downstream.loss");
  LossSpec l;
  l.kind = parse_loss_kind(detail::field<std::string>(j, "kind"));
  if (j.contains("output_slice") && !j["output_slice"].is_null()) {
    const auto s = detail::field<std::vector<std::size_t>>(j, "output_slice");
    if (s.size() != 2) throw ValidationError("downstream.loss.output_slice: expected [start, length]");
    l.output_slice = OutputSlice{s[0], s[1]};
  }
  return l;
}

void params_from_json(const json& j, Method method, MethodParams& p) {
  check_keys(j, {"pad_size", "position", "init_std", "lr", "epochs", "rule", "early_stop", "recompute_every",
                 "max_deletions", "num_meta_nodes", "tau", "tau_final", "candidates", "embedding",
                 "straight_through"},
             "params");
  if (j.contains("pad_size") && !(j["pad_size"].is_string() && j["pad_size"] == "auto")) {
    p.pad_size = detail::field<std::size_t>(j, "pad_size");
  }
  if (j.contains("position")) p.position = parse_pad_position(detail::field<std::string>(j, "position"));
  p.init_std = detail::field_or<double>(j, "init_std", p.init_std);
  const bool reagg = method == Method::reagg || method == Method::metafp_reagg;
  double& lr = reagg ? p.reagg.lr : p.reprogram.lr;
  std::size_t& epochs = reagg ? p.reagg.epochs : p.reprogram.epochs;
  lr = detail::field_or<double>(j, "lr", lr);
  epochs = detail::field_or<std::size_t>(j, "epochs", epochs);
  if (j.contains("rule")) p.reprogram.rule = parse_step_rule(detail::field<std::string>(j, "rule"));
  p.reprogram.early_stop = detail::field_or<double>(j, "early_stop", p.reprogram.early_stop);
  p.slim.recompute_every = detail::field_or<std::size_t>(j, "recompute_every", p.slim.recompute_every);
  if (j.contains("max_deletions") && !j["max_deletions"].is_null()) {
    p.slim.max_deletions = detail::field<std::size_t>(j, "max_deletions");
  }
  p.num_meta_nodes = detail::field_or<std::size_t>(j, "num_meta_nodes", p.num_meta_nodes);
  p.tau = detail::field_or<double>(j, "tau", p.tau);
  if (j.contains("tau_final") && !j["tau_final"].is_null()) p.reagg.tau_final = detail::field<double>(j, "tau_final");
  if (j.contains("candidates")) {
    p.candidates.clear();
    for (const auto& name : detail::field<std::vector<std::string>>(j, "candidates")) {
      p.candidates.push_back(parse_aggregator(name));
    }
  }
  if (j.contains("embedding")) p.embedding = parse_embedding_source(detail::field<std::string>(j, "embedding"));
  p.reagg.straight_through = detail::field_or<bool>(j, "straight_through", p.reagg.straight_through);
}

}  // namespace

ExperimentConfig config_from_json(std::string_view text) {
  const json j = detail::parse_json(text);
  check_keys(j, {"pretrain", "downstream", "method", "params", "seeds", "output_dir"}, "config");
  ExperimentConfig cfg;
  if (!j.contains("pretrain")) throw ValidationError("config: missing 'pretrain'");
  if (!j.contains("downstream")) throw ValidationError("config: missing 'downstream'");

  const json& pj = j["pretrain"];
  if (!pj.is_object()) throw ValidationError("pretrain: expected a JSON object");
  cfg.pretrain.data = source_from_json(pj, "pretrain", {"model", "arch", "opt"});
  if (pj.contains("model")) cfg.pretrain.model = detail::field<std::string>(pj, "model");
  if (pj.contains("arch")) cfg.pretrain.arch = arch_from_json(pj["arch"]);
  if (pj.contains("opt")) {
    check_keys(pj["opt"], {"lr", "epochs"}, "pretrain.opt");
    cfg.pretrain.opt.lr = detail::field_or<double>(pj["opt"], "lr", cfg.pretrain.opt.lr);
    cfg.pretrain.opt.epochs = detail::field_or<std::size_t>(pj["opt"], "epochs", cfg.pretrain.opt.epochs);
  }

  const json& dj = j["downstream"];
  if (!dj.is_object()) throw ValidationError("downstream: expected a JSON object");
  cfg.downstream.data = source_from_json(dj, "downstream", {"loss"});
  if (dj.contains("loss") && !dj["loss"].is_null()) cfg.downstream.loss = loss_from_json(dj["loss"]);

  cfg.method = parse_method(detail::field_or<std::string>(j, "method", "vanilla"));
  cfg.params.reprogram = default_reprogram_options(cfg.method);
  if (j.contains("params")) params_from_json(j["params"], cfg.method, cfg.params);
  if (j.contains("seeds")) cfg.seeds = detail::field<std::vector<std::uint64_t>>(j, "seeds");
  cfg.output_dir = detail::field_or<std::string>(j, "output_dir", "");
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  return config_from_json(read_text_file(path));
}

// ---------------------------------------------------------------------------
// Data

SourceShape source_shape(const DataSource& source) {
  if (source.synth.has_value() == source.dataset.has_value()) {
    throw ValidationError("data source: give exactly one of 'synth' or 'dataset'");
  }
  SourceShape shape;
  if (source.synth) {
    shape.feat_dim = source.synth->feat_dim;
    shape.task_kind = source.synth->task_kind;
    if (is_classification(shape.task_kind)) shape.num_classes = source.synth->num_classes;
  } else {
    const GraphDataset ds = load_dataset(*source.dataset);
    shape.feat_dim = ds.feat_dim();
    shape.task_kind = ds.task_kind;
    shape.num_classes = ds.num_classes;
  }
  if (!source.classes.empty()) {
    if (is_graph_level(shape.task_kind) || !is_classification(shape.task_kind)) {
      throw ValidationError("classes: only node classification tasks can select classes");
    }
    for (const auto c : source.classes) {
      if (c < 0 || (shape.num_classes && static_cast<std::size_t>(c) >= *shape.num_classes)) {
        throw ValidationError("classes: class " + std::to_string(c) + " out of range");
      }
    }
    shape.num_classes = source.classes.size();
  }
  return shape;
}

GraphDataset load_source(const DataSource& source, std::uint64_t run_seed) {
  source_shape(source);
  GraphDataset ds;
  std::uint64_t seed = run_seed;
  if (source.synth) {
    SynthTaskSpec spec = *source.synth;
    spec.seed += run_seed;
    seed = spec.seed;
    ds = generate_synthetic(spec);
  } else {
    ds = load_dataset(*source.dataset);
  }
  if (!source.classes.empty()) ds = select_classes(ds, source.classes, seed);
  if (source.split) ds = split_dataset(ds, (*source.split)[0], (*source.split)[1], (*source.split)[2], seed);
  return ds;
}

namespace {

std::size_t output_width(const SourceShape& s) {
  if (!is_classification(s.task_kind)) return 1;
  if (!s.num_classes) throw ValidationError("classification dataset without num_classes");
  return *s.num_classes;
}

bool split_empty(const GraphDataset& ds, Split split) {
  if (ds.graph_level()) return ds.split[split].empty();
  return mask_indices(ds.graphs.front(), split).empty();
}

}  // namespace

TaskShapes check_config(const ExperimentConfig& cfg, Method method) {
  if (cfg.seeds.empty()) throw ValidationError("seeds: at least one seed is required");
  TaskShapes t;
  const SourceShape down = source_shape(cfg.downstream.data);
  t.downstream_dim = down.feat_dim;
  t.downstream_kind = down.task_kind;

  const bool has_pretrain_data = cfg.pretrain.data.synth || cfg.pretrain.data.dataset;
  if (cfg.pretrain.model) {
    const FrozenModel m = load_model(*cfg.pretrain.model);
    t.pretrained_dim = m.in_dim();
    t.out_dim = m.out_dim();
    t.pretrain_kind = m.readout() == Readout::mean_pool ? TaskKind::graph_classification
                                                        : TaskKind::node_classification;
    if (has_pretrain_data) {
      const SourceShape pre = source_shape(cfg.pretrain.data);
      if (pre.feat_dim != t.pretrained_dim) {
        throw ValidationError("pretrain: model in_dim=" + std::to_string(t.pretrained_dim) +
                              " does not match pretrain data feat_dim=" + std::to_string(pre.feat_dim));
      }
      t.pretrain_kind = pre.task_kind;
    }
  } else {
    if (!has_pretrain_data) throw ValidationError("pretrain: give 'model' or a data source");
    const SourceShape pre = source_shape(cfg.pretrain.data);
    t.pretrained_dim = pre.feat_dim;
    t.out_dim = output_width(pre);
    t.pretrain_kind = pre.task_kind;
  }

  if (method == Method::retrain) return t;

  if (is_graph_level(t.pretrain_kind) != is_graph_level(t.downstream_kind)) {
    throw ValidationError("pretrained task is " + std::string(to_string(t.pretrain_kind)) +
                          " but downstream task is " + std::string(to_string(t.downstream_kind)) +
                          "; reuse needs both node-level or both graph-level");
  }
  if (t.downstream_dim > t.pretrained_dim) {
    throw ValidationError("downstream feat_dim=" + std::to_string(t.downstream_dim) +
                          " exceeds the pretrained in_dim=" + std::to_string(t.pretrained_dim) +
                          "; only retrain can handle it");
  }
  t.pad_size = t.pretrained_dim - t.downstream_dim;
  const bool pads = method == Method::metafp || method == Method::metafp_reagg || method == Method::vanilla;
  if (t.pad_size > 0 && !pads) {
    throw ValidationError("heterogeneous dims (pretrained " + std::to_string(t.pretrained_dim) + ", downstream " +
                          std::to_string(t.downstream_dim) + ") require metafp, metafp+reagg, vanilla or retrain");
  }
  if (cfg.params.pad_size && *cfg.params.pad_size != t.pad_size) {
    if (t.pad_size == 0) throw ValidationError("params.pad_size: homogeneous dims forbid a nonzero pad_size");
    throw ValidationError("params.pad_size=" + std::to_string(*cfg.params.pad_size) +
                          " but the dimension difference is " + std::to_string(t.pad_size));
  }
  if (method == Method::edgslim && is_graph_level(t.downstream_kind)) {
    throw ValidationError("edgslim is transductive only; use metagp for graph-level tasks");
  }
  if (method == Method::metagp && !is_graph_level(t.downstream_kind)) {
    throw ValidationError("metagp needs a graph-level task; use edgslim or metafp for node-level tasks");
  }
  if (is_classification(t.downstream_kind) != is_classification(t.pretrain_kind) && !cfg.downstream.loss) {
    throw ValidationError("classification/regression mismatch between tasks needs an explicit downstream.loss");
  }
  const LossSpec loss = cfg.downstream.loss.value_or(default_loss(down.task_kind, down.num_classes));
  loss.slice_for(t.out_dim);
  if (method == Method::reagg || method == Method::metafp_reagg) {
    if (cfg.params.candidates.size() < 2) throw ValidationError("params.candidates: need at least 2");
    if (!(cfg.params.tau > 0)) throw ValidationError("params.tau: must be positive");
  }
  return t;
}

// ---------------------------------------------------------------------------
// Running

const Metrics* SeedRecord::find(std::string_view split) const {
  for (const auto& [name, m] : metrics)
    if (name == split) return &m;
  return nullptr;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void add_split_metrics(SeedRecord& rec, const GraphDataset& ds, const LossSpec& loss, const Predictor& predict,
                       std::string_view prefix) {
  for (const auto split : {Split::train, Split::val, Split::test}) {
    if (split_empty(ds, split)) continue;
    rec.metrics.emplace_back(std::string(prefix) + std::string(to_string(split)),
                             evaluate_with(ds, split, loss, predict));
  }
}

struct SeedContext {
  std::uint64_t seed = 0;
  const ExperimentConfig* cfg = nullptr;
  const TaskShapes* shapes = nullptr;
  FrozenModel model;
  std::vector<double> pretrain_losses;
  std::optional<GraphDataset> pretrain_data;
  GraphDataset downstream;
  LossSpec loss;
};

SeedRecord apply_method(const SeedContext& ctx, Method method) {
  const ExperimentConfig& cfg = *ctx.cfg;
  const MethodParams& p = cfg.params;
  const FrozenModel& model = ctx.model;
  const GraphDataset& ds = ctx.downstream;
  const std::size_t raw_dim = ctx.shapes->downstream_dim;
  const std::size_t target_dim = ctx.shapes->pretrained_dim;

  SeedRecord rec;
  rec.seed = ctx.seed;
  rec.pretrain_losses = ctx.pretrain_losses;
  rec.hash_before = model.current_hash();

  ReprogramOptions ropt = p.reprogram;
  ropt.seed = ctx.seed;
  ReaggOptions gopt = p.reagg;
  gopt.seed = ctx.seed;

  switch (method) {
    case Method::vanilla: {
      if (ctx.shapes->pad_size > 0) {
        rec.padding = zero_padding(raw_dim, target_dim, p.position, ctx.seed);
        const PaddingSpec& spec = *rec.padding;
        add_split_metrics(rec, ds, ctx.loss, [&](std::size_t i) { return infer_with_padding(model, ds.graphs[i], spec); },
                          "");
      } else {
        add_split_metrics(rec, ds, ctx.loss, [&](std::size_t i) { return forward(model, ds.graphs[i]); }, "");
      }
      break;
    }
    case Method::retrain: {
      const SourceShape shape = source_shape(cfg.downstream.data);
      Architecture arch = cfg.pretrain.arch;
      arch.in_dim = raw_dim;
      arch.out_dim = output_width(shape);
      arch.readout = ds.graph_level() ? Readout::mean_pool : Readout::none;
      TrainOptions opt = cfg.pretrain.opt;
      opt.seed = ctx.seed;
      const LossSpec own = cfg.downstream.loss.value_or(default_loss(ds.task_kind, ds.num_classes));
      auto fresh = pretrain(ds, arch, opt, own);
      rec.method_losses = std::move(fresh.losses);
      rec.retrained_hash = fresh.model.param_hash();
      const FrozenModel& m = fresh.model;
      add_split_metrics(rec, ds, own, [&](std::size_t i) { return forward(m, ds.graphs[i]); }, "");
      break;
    }
    case Method::metafp: {
      const PaddingSpec init = make_padding(raw_dim, target_dim, p.position, ctx.seed, p.init_std);
      auto result = optimize_padding(model, ds, init, ctx.loss, ropt);
      rec.method_losses = std::move(result.losses);
      rec.padding = std::move(result.spec);
      const PaddingSpec& spec = *rec.padding;
      add_split_metrics(rec, ds, ctx.loss, [&](std::size_t i) { return infer_with_padding(model, ds.graphs[i], spec); },
                        "");
      break;
    }
    case Method::edgslim: {
      auto result = slim_edges(model, ds.graphs.front(), ctx.loss, p.slim);
      rec.edges_before = ds.graphs.front().edges.size();
      rec.edges_after = result.graph.edges.size();
      for (const auto& it : result.plan.iterations) rec.method_losses.push_back(it.loss);
      rec.slim = std::move(result.plan);
      GraphDataset slimmed = ds;
      slimmed.graphs.front() = std::move(result.graph);
      add_split_metrics(rec, slimmed, ctx.loss, [&](std::size_t i) { return forward(model, slimmed.graphs[i]); }, "");
      break;
    }
    case Method::metagp: {
      const MetaGraph init = make_meta_graph(p.num_meta_nodes, raw_dim, ctx.seed, p.init_std);
      auto result = optimize_meta_features(model, ds, init, ctx.loss, ropt);
      rec.method_losses = std::move(result.losses);
      rec.meta = std::move(result.meta);
      const MetaGraph& meta = *rec.meta;
      for (const auto& g : ds.graphs) {
        ++rec.attachments;
        if (preserves_original(g, attach_meta_graph(g, meta))) ++rec.attachments_preserved;
      }
      add_split_metrics(rec, ds, ctx.loss, [&](std::size_t i) { return infer_with_meta_graph(model, ds.graphs[i], meta); },
                        "");
      break;
    }
    case Method::reagg:
    case Method::metafp_reagg: {
      std::optional<PaddingSpec> padding;
      if (method == Method::metafp_reagg) {
        padding = make_padding(raw_dim, target_dim, p.position, ctx.seed, p.init_std);
      }
      AggregatorChoice choice =
          make_choice(p.candidates, embedding_dim(p.embedding, model, raw_dim), ctx.seed);
      choice.tau = p.tau;
      choice.source = p.embedding;
      auto result = train_reagg(model, ds, choice, ctx.loss, gopt, padding);
      rec.method_losses = std::move(result.losses);
      if (!result.histogram.empty()) rec.selection_histogram = result.histogram.back();
      rec.choice = std::move(result.choice);
      rec.padding = std::move(result.padding);
      const Reprogramming r{rec.padding ? &*rec.padding : nullptr, nullptr, nullptr,
                            selected_aggregator(*rec.choice)};
      add_split_metrics(rec, ds, ctx.loss, [&](std::size_t i) { return reprogrammed_forward(model, ds.graphs[i], r); },
                        "");
      break;
    }
  }
  rec.hash_after = model.current_hash();
  if (method != Method::retrain && rec.hash_after != model.param_hash()) {
    throw ContractError(std::string(to_string(method)) + ": frozen model parameters changed (param_hash mismatch)");
  }
  return rec;
}

SeedContext prepare_seed(const ExperimentConfig& cfg, const TaskShapes& shapes, std::uint64_t seed) {
  SeedContext ctx;
  ctx.seed = seed;
  ctx.cfg = &cfg;
  ctx.shapes = &shapes;
  if (cfg.pretrain.data.synth || cfg.pretrain.data.dataset) ctx.pretrain_data = load_source(cfg.pretrain.data, seed);
  if (cfg.pretrain.model) {
    ctx.model = load_model(*cfg.pretrain.model);
    if (!ctx.model.frozen()) ctx.model = FrozenModel::freeze(ctx.model.params());
  } else {
    Architecture arch = cfg.pretrain.arch;
    arch.in_dim = shapes.pretrained_dim;
    arch.out_dim = shapes.out_dim;
    arch.readout = is_graph_level(shapes.pretrain_kind) ? Readout::mean_pool : Readout::none;
    TrainOptions opt = cfg.pretrain.opt;
    opt.seed = seed;
    auto result = pretrain(*ctx.pretrain_data, arch, opt);
    ctx.model = std::move(result.model);
    ctx.pretrain_losses = std::move(result.losses);
  }
  ctx.downstream = load_source(cfg.downstream.data, seed);
  ctx.loss = cfg.downstream.loss.value_or(default_loss(ctx.downstream.task_kind, ctx.downstream.num_classes));
  return ctx;
}

void add_pretrain_metrics(SeedRecord& rec, const SeedContext& ctx) {
  if (!ctx.pretrain_data) return;
  const GraphDataset& pds = *ctx.pretrain_data;
  if (pds.feat_dim() != ctx.model.in_dim()) return;
  const LossSpec loss = default_loss(pds.task_kind, pds.num_classes);
  std::vector<std::pair<std::string, Metrics>> own;
  SeedRecord tmp;
  add_split_metrics(tmp, pds, loss, [&](std::size_t i) { return forward(ctx.model, pds.graphs[i]); }, "pretrain-");
  for (auto& entry : tmp.metrics) {
    if (entry.first == "pretrain-val") continue;
    own.push_back(std::move(entry));
  }
  rec.metrics.insert(rec.metrics.begin(), own.begin(), own.end());
}

void write_outputs(const ExperimentConfig& cfg, const RunReport& report) {
  if (cfg.output_dir.empty()) return;
  const std::string name(to_string(report.method));
  write_text_file(cfg.output_dir / ("report_" + name + ".json"), report_to_json(report) + "\n");
  write_text_file(cfg.output_dir / ("metrics_" + name + ".csv"), metrics_csv(report));
  for (const auto& rec : report.records) {
    if (rec.slim) {
      write_text_file(cfg.output_dir / ("slim_plan_seed" + std::to_string(rec.seed) + ".csv"),
                      slim_plan_csv(*rec.slim));
    }
  }
}

}  // namespace

std::vector<RunReport> run_methods(const ExperimentConfig& cfg, std::span<const Method> methods) {
  if (methods.empty()) throw ValidationError("run_methods: no methods given");
  std::vector<TaskShapes> shapes;
  for (const auto m : methods) shapes.push_back(check_config(cfg, m));

  std::vector<RunReport> reports(methods.size());
  for (std::size_t k = 0; k < methods.size(); ++k) {
    reports[k].method = methods[k];
    reports[k].task_kind = shapes[k].downstream_kind;
  }
  for (const auto seed : cfg.seeds) {
    const auto start = Clock::now();
    const SeedContext ctx = prepare_seed(cfg, shapes.front(), seed);
    const double shared = seconds_since(start);
    for (std::size_t k = 0; k < methods.size(); ++k) {
      const auto method_start = Clock::now();
      SeedContext local = ctx;
      local.shapes = &shapes[k];
      SeedRecord rec = apply_method(local, methods[k]);
      add_pretrain_metrics(rec, ctx);
      rec.wall_clock_s = shared + seconds_since(method_start);
      reports[k].records.push_back(std::move(rec));
    }
  }
  for (const auto& r : reports) write_outputs(cfg, r);
  return reports;
}

RunReport run_experiment(const ExperimentConfig& cfg) {
  const Method methods[] = {cfg.method};
  return std::move(run_methods(cfg, methods).front());
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

void metric_rows(std::string& out, std::string_view method, std::uint64_t seed, std::string_view split,
                 const Metrics& m) {
  auto row = [&](std::string_view metric, double value) {
    out += method;
    out += ',';
    out += std::to_string(seed);
    out += ',';
    out += split;
    out += ',';
    out += metric;
    out += ',';
    out += detail::format_double(value);
    out += '\n';
  };
  if (m.accuracy) row("accuracy", *m.accuracy);
  if (m.roc_auc) row("roc_auc", *m.roc_auc);
  if (m.mae) row("mae", *m.mae);
  if (m.rmse) row("rmse", *m.rmse);
  row("loss", m.loss);
}

json metrics_to_json(const Metrics& m) {
  json j;
  j["loss"] = m.loss;
  j["count"] = m.count;
  if (m.accuracy) j["accuracy"] = *m.accuracy;
  if (m.roc_auc) j["roc_auc"] = *m.roc_auc;
  if (m.mae) j["mae"] = *m.mae;
  if (m.rmse) j["rmse"] = *m.rmse;
  return j;
}

Metrics metrics_from_json(const json& j) {
  Metrics m;
  m.loss = detail::field_or<double>(j, "loss", 0.0);
  m.count = detail::field_or<std::size_t>(j, "count", 0);
  if (j.contains("accuracy")) m.accuracy = detail::field<double>(j, "accuracy");
  if (j.contains("roc_auc")) m.roc_auc = detail::field<double>(j, "roc_auc");
  if (j.contains("mae")) m.mae = detail::field<double>(j, "mae");
  if (j.contains("rmse")) m.rmse = detail::field<double>(j, "rmse");
  return m;
}

}  // namespace

std::string metrics_csv(const RunReport& report) {
  std::string out = "method,seed,split,metric,value\n";
  for (const auto& rec : report.records)
    for (const auto& [split, m] : rec.metrics) metric_rows(out, to_string(report.method), rec.seed, split, m);
  return out;
}

std::string report_to_json(const RunReport& report) {
  json j;
  j["method"] = std::string(to_string(report.method));
  j["task_kind"] = std::string(to_string(report.task_kind));
  json records = json::array();
  for (const auto& rec : report.records) {
    json r;
    r["seed"] = rec.seed;
    json metrics = json::array();
    for (const auto& [split, m] : rec.metrics) {
      json entry = metrics_to_json(m);
      entry["split"] = split;
      metrics.push_back(std::move(entry));
    }
    r["metrics"] = std::move(metrics);
    r["pretrain_losses"] = rec.pretrain_losses;
    r["method_losses"] = rec.method_losses;
    r["wall_clock_s"] = rec.wall_clock_s;
    r["param_hash_before"] = rec.hash_before;
    r["param_hash_after"] = rec.hash_after;
    json artifacts = json::object();
    if (rec.padding) artifacts["padding"] = json::parse(padding_to_json(*rec.padding));
    if (rec.slim) {
      json iters = json::array();
      for (const auto& it : rec.slim->iterations) {
        iters.push_back({{"iteration", it.iteration},
                         {"num_edges", it.num_edges},
                         {"loss", it.loss},
                         {"abs_gradient_sum", it.abs_gradient_sum},
                         {"positive", it.positive}});
      }
      artifacts["slim"] = {{"deletions", rec.slim->steps.size()},
                           {"edges_before", rec.edges_before},
                           {"edges_after", rec.edges_after},
                           {"recompute_every", rec.slim->recompute_every},
                           {"iterations", std::move(iters)}};
    }
    if (rec.meta) {
      artifacts["meta_graph"] = json::parse(meta_graph_to_json(*rec.meta));
      artifacts["attachments"] = rec.attachments;
      artifacts["attachments_preserved"] = rec.attachments_preserved;
    }
    if (rec.choice) {
      artifacts["aggregator_choice"] = json::parse(choice_to_json(*rec.choice));
      artifacts["selection_histogram"] = rec.selection_histogram;
    }
    if (!rec.retrained_hash.empty()) artifacts["retrained_param_hash"] = rec.retrained_hash;
    r["artifacts"] = std::move(artifacts);
    records.push_back(std::move(r));
  }
  j["records"] = std::move(records);
  return j.dump(2);
}

RunReport report_from_json(std::string_view text) {
  const json j = detail::parse_json(text);
  if (!j.is_object()) throw ValidationError("report: expected a JSON object");
  RunReport report;
  report.method = parse_method(detail::field<std::string>(j, "method"));
  report.task_kind = parse_task_kind(detail::field<std::string>(j, "task_kind"));
  const auto it = j.find("records");
  if (it == j.end() || !it->is_array()) throw ValidationError("records: expected an array");
  for (const auto& r : *it) {
    SeedRecord rec;
    rec.seed = detail::field<std::uint64_t>(r, "seed");
    if (r.contains("metrics")) {
      for (const auto& m : r["metrics"]) {
        rec.metrics.emplace_back(detail::field<std::string>(m, "split"), metrics_from_json(m));
      }
    }
    rec.hash_before = detail::field_or<std::string>(r, "param_hash_before", "");
    rec.hash_after = detail::field_or<std::string>(r, "param_hash_after", "");
    report.records.push_back(std::move(rec));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Attack demonstration

AttackReport attack_demo(const ExperimentConfig& cfg) {
  const TaskShapes shapes = check_config(cfg, Method::vanilla);
  if (shapes.pad_size != 0) {
    throw ValidationError("attack-demo: victim in_dim=" + std::to_string(shapes.pretrained_dim) +
                          " and attacker feat_dim=" + std::to_string(shapes.downstream_dim) +
                          " differ; the demo only adds perturbations to equal-width features");
  }
  AttackReport report;
  report.task_kind = shapes.downstream_kind;
  for (const auto seed : cfg.seeds) {
    const SeedContext ctx = prepare_seed(cfg, shapes, seed);
    const FrozenModel& model = ctx.model;
    const GraphDataset& ds = ctx.downstream;
    HashGuard guard(model, "attack-demo");

    AttackRecord rec;
    rec.seed = seed;
    rec.hash_before = model.current_hash();
    rec.before = evaluate(model, ds, ctx.loss, Split::test);

    std::vector<PreparedGraph> prepared;
    for (const auto& g : ds.graphs) prepared.push_back(prepare_graph(g, model.params()));
    Tensor perturbation(1, shapes.downstream_dim);
    ReprogramOptions opt = cfg.params.reprogram;
    opt.seed = seed;
    rec.losses = descend(perturbation, opt, "attack-demo", [&](Tape& tape, const Var& artifact) {
      const BoundModel bound = bind(tape, model.params(), false);
      TapeProgram program;
      program.perturbation = artifact;
      return dataset_loss(tape, ds, Split::train, ctx.loss, [&](Tape& t, std::size_t i) {
        return program_forward(t, bound, prepared[i], program);
      });
    });
    const Reprogramming r{nullptr, nullptr, &perturbation, std::nullopt};
    rec.after = evaluate_with(ds, Split::test, ctx.loss,
                              [&](std::size_t i) { return reprogrammed_forward(model, ds.graphs[i], r); });
    rec.perturbation = std::move(perturbation);
    guard.verify();
    rec.hash_after = model.current_hash();
    report.records.push_back(std::move(rec));
  }
  if (!cfg.output_dir.empty()) write_text_file(cfg.output_dir / "metrics_attack.csv", attack_csv(report));
  return report;
}

std::string attack_csv(const AttackReport& report) {
  std::string out = "method,seed,split,metric,value\n";
  for (const auto& rec : report.records) {
    metric_rows(out, "vanilla", rec.seed, "test", rec.before);
    metric_rows(out, "attack", rec.seed, "test", rec.after);
  }
  return out;
}

}  // namespace gnnr
