#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gnnr/errors.hpp"
#include "gnnr/experiment.hpp"
#include "gnnr/graph_io.hpp"
#include "gnnr/model_io.hpp"
#include "gnnr/report.hpp"

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

gnnr::ExperimentConfig load_with_overrides(const Globals& g) {
  if (g.config.empty()) throw gnnr::ValidationError("--config is required for this command");
  gnnr::ExperimentConfig cfg = gnnr::load_config(g.config);
  if (g.seed) cfg.seeds = {*g.seed};
  if (!g.out.empty()) cfg.output_dir = g.out;
  return cfg;
}

std::string shortest(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string format_metrics(const gnnr::Metrics& m) {
  std::ostringstream s;
  s.precision(6);
  s << "loss=" << m.loss;
  if (m.accuracy) s << " accuracy=" << *m.accuracy;
  if (m.roc_auc) s << " roc_auc=" << *m.roc_auc;
  if (m.mae) s << " mae=" << *m.mae;
  if (m.rmse) s << " rmse=" << *m.rmse;
  s << " n=" << m.count;
  return s.str();
}

gnnr::GraphDataset eval_data(const Globals& g, const std::string& data) {
  if (!data.empty()) return gnnr::load_dataset(data);
  const gnnr::ExperimentConfig cfg = load_with_overrides(g);
  return gnnr::load_source(cfg.downstream.data, cfg.seeds.front());
}

int run(int argc, char** argv) {
  CLI::App app{"Reprogram frozen graph neural networks for new tasks"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "Experiment config (JSON)");
  app.add_option("--seed", g.seed, "Run only this seed (overrides the config's seeds)");
  app.add_option("--out", g.out, "Output path (file or directory, per command)");

  auto* generate = app.add_subcommand("generate", "Write the pretrain or downstream dataset of a config");
  std::string which = "downstream";
  generate->add_option("--task", which, "pretrain or downstream")->check(CLI::IsMember({"pretrain", "downstream"}));

  auto* pretrain = app.add_subcommand("pretrain", "Pretrain and freeze a model, save it to --out");

  auto* reprogram = app.add_subcommand("reprogram", "Run the config's method for every seed");
  std::vector<std::string> methods;
  reprogram->add_option("--method", methods, "Method(s) to run instead of the config's")->delimiter(',');

  auto* eval = app.add_subcommand("eval", "Evaluate a saved model");
  std::string model_path, data_path, aggregator, split = "test";
  eval->add_option("--model", model_path, "Model JSON")->required();
  eval->add_option("--data", data_path, "Dataset JSON (default: the config's downstream data)");
  eval->add_option("--aggregator", aggregator, "Override the aggregator");
  eval->add_option("--split", split, "train, val or test");

  auto* attack = app.add_subcommand("attack-demo", "Optimize a shared feature perturbation against a frozen model");

  auto* sweep = app.add_subcommand("sweep-aggregators", "Evaluate a model under every aggregator");
  std::vector<std::string> candidates{"sum", "mean", "max", "attention-lite"};
  sweep->add_option("--model", model_path, "Model JSON")->required();
  sweep->add_option("--data", data_path, "Dataset JSON (default: the config's downstream data)");
  sweep->add_option("--candidates", candidates, "Aggregators to try")->delimiter(',');

  auto* report = app.add_subcommand("report", "Summarize run reports");
  std::vector<std::string> report_paths;
  report->add_option("reports", report_paths, "report_<method>.json files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  if (generate->parsed()) {
    if (g.out.empty()) throw gnnr::ValidationError("generate: --out is required");
    const gnnr::ExperimentConfig cfg = load_with_overrides({g.config, g.seed, ""});
    const auto& source = which == "pretrain" ? cfg.pretrain.data : cfg.downstream.data;
    gnnr::save_dataset(gnnr::load_source(source, cfg.seeds.front()), g.out);
    return 0;
  }

  if (pretrain->parsed()) {
    if (g.out.empty()) throw gnnr::ValidationError("pretrain: --out is required");
    gnnr::ExperimentConfig cfg = load_with_overrides({g.config, g.seed, ""});
    const auto shapes = gnnr::check_config(cfg, gnnr::Method::retrain);
    const std::uint64_t seed = cfg.seeds.front();
    const gnnr::GraphDataset ds = gnnr::load_source(cfg.pretrain.data, seed);
    gnnr::Architecture arch = cfg.pretrain.arch;
    arch.in_dim = shapes.pretrained_dim;
    arch.out_dim = shapes.out_dim;
    arch.readout = ds.graph_level() ? gnnr::Readout::mean_pool : gnnr::Readout::none;
    gnnr::TrainOptions opt = cfg.pretrain.opt;
    opt.seed = seed;
    const auto result = gnnr::pretrain(ds, arch, opt);
    gnnr::save_model(result.model, g.out);
    const auto loss = gnnr::default_loss(ds.task_kind, ds.num_classes);
    std::cout << "param_hash " << result.model.param_hash() << "\n";
    std::cout << "test " << format_metrics(gnnr::evaluate(result.model, ds, loss, gnnr::Split::test)) << "\n";
    return 0;
  }

  if (reprogram->parsed()) {
    const gnnr::ExperimentConfig cfg = load_with_overrides(g);
    std::vector<gnnr::Method> ms;
    for (const auto& m : methods) ms.push_back(gnnr::parse_method(m));
    if (ms.empty()) ms.push_back(cfg.method);
    const auto reports = gnnr::run_methods(cfg, ms);
    std::cout << gnnr::summary_table(gnnr::report_summary(reports));
    return 0;
  }

  if (eval->parsed()) {
    const gnnr::FrozenModel model = gnnr::load_model(model_path);
    const gnnr::GraphDataset ds = eval_data(g, data_path);
    const auto loss = gnnr::default_loss(ds.task_kind, ds.num_classes);
    std::optional<gnnr::Aggregator> override_agg;
    if (!aggregator.empty()) override_agg = gnnr::parse_aggregator(aggregator);
    const auto m = gnnr::evaluate(model, ds, loss, gnnr::parse_split(split), override_agg);
    std::cout << split << " " << format_metrics(m) << "\n";
    return 0;
  }

  if (attack->parsed()) {
    const gnnr::ExperimentConfig cfg = load_with_overrides(g);
    const auto result = gnnr::attack_demo(cfg);
    for (const auto& r : result.records) {
      std::cout << "seed " << r.seed << " before " << format_metrics(r.before) << "\n";
      std::cout << "seed " << r.seed << " after  " << format_metrics(r.after) << "\n";
    }
    return 0;
  }

  if (sweep->parsed()) {
    const gnnr::FrozenModel model = gnnr::load_model(model_path);
    const gnnr::GraphDataset ds = eval_data(g, data_path);
    const auto loss = gnnr::default_loss(ds.task_kind, ds.num_classes);
    std::vector<gnnr::Aggregator> aggs;
    for (const auto& c : candidates) aggs.push_back(gnnr::parse_aggregator(c));
    std::string csv = "aggregator,metric,value\n";
    for (const auto& e : gnnr::aggregator_sweep(model, ds, loss, aggs)) {
      std::cout << gnnr::to_string(e.aggregator) << " " << format_metrics(e.metrics) << "\n";
      if (e.metrics.accuracy) csv += std::string(gnnr::to_string(e.aggregator)) + ",accuracy," +
                                     shortest(*e.metrics.accuracy) + "\n";
      csv += std::string(gnnr::to_string(e.aggregator)) + ",loss," + shortest(e.metrics.loss) + "\n";
    }
    if (!g.out.empty()) gnnr::write_text_file(g.out, csv);
    return 0;
  }

  if (report->parsed()) {
    std::vector<gnnr::RunReport> reports;
    for (const auto& p : report_paths) reports.push_back(gnnr::report_from_json(gnnr::read_text_file(p)));
    const auto rows = gnnr::report_summary(reports);
    std::cout << gnnr::summary_table(rows);
    if (!g.out.empty()) gnnr::write_text_file(g.out, gnnr::summary_csv(rows));
    return 0;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const gnnr::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
