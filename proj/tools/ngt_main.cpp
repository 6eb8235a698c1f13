// ngt: n-gram tensor experiments over labeled text corpora.
//
// Subcommands: stats | features | train-eval | baseline | sweep.
// Precedence: built-in defaults < --config file < explicit flags.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ngt/experiment.hpp"

namespace {

struct CliValues {
  std::string config_path;
  std::string data;
  std::string schema = "toy";
  std::string subset = "all";
  std::size_t n = 2;
  std::size_t group_size = 1;
  std::size_t k = 0;
  std::string decomp = "svd";
  std::string variant = "freq";
  std::uint64_t seed = 0;
  std::size_t epochs = 20;
  double lr = 1e-4;
  std::size_t batch_size = 32;
  std::uint64_t shuffle_seed = 0;
  std::uint64_t split_seed = 0;
  std::uint64_t group_seed = 0;
  std::uint64_t init_seed = 0;
  std::uint64_t decomp_seed = 0;
  double split_fraction = 0.8;
  std::size_t cp_rank = 0;
  std::size_t max_iters = 100;
  double tol = 1e-6;
  std::size_t budget_mb = 2048;
  std::string out = "out";
  std::string method = "rouge_l";
  std::vector<std::size_t> sizes = {1, 5, 20, 40};
};

ngt::SchemaDescriptor resolve_schema(const std::string& value) {
  try {
    return ngt::SchemaDescriptor::preset(value);
  } catch (const std::invalid_argument&) {
    // Not a preset name; treat as a path to a schema descriptor JSON file.
  }
  std::ifstream is(value, std::ios::binary);
  if (!is)
    throw std::runtime_error("schema '" + value +
                             "' is neither a preset name nor a readable file");
  nlohmann::json j;
  is >> j;
  return ngt::SchemaDescriptor::from_json(j);
}

void add_common_options(CLI::App* cmd, CliValues& v) {
  cmd->add_option("--config", v.config_path, "JSON config file (flags override it)");
  cmd->add_option("--data", v.data, "JSONL dataset path");
  cmd->add_option("--schema", v.schema,
                  "schema preset (toy, halueval-dialogue, halueval-summarization, "
                  "halueval-general) or path to a schema JSON");
  cmd->add_option("--subset", v.subset, "subset filter: general|dialogue|summary|other|all");
  cmd->add_option("--n", v.n, "n-gram order (tensor order)");
  cmd->add_option("--out", v.out, "output directory");
  cmd->add_option("--seed", v.seed, "master seed fanned out to all stages");
  cmd->add_option("--split-seed", v.split_seed, "train/eval split seed");
  cmd->add_option("--split-fraction", v.split_fraction, "train fraction in (0,1)");
}

void add_feature_options(CLI::App* cmd, CliValues& v) {
  cmd->add_option("--group-size", v.group_size, "documents per same-label group (M)");
  cmd->add_option("--k", v.k, "feature length (0 = default: 20 for M<20, else 40)");
  cmd->add_option("--decomp", v.decomp, "decomposition: svd|tucker|cp")
      ->check(CLI::IsMember({"svd", "tucker", "cp"}));
  cmd->add_option("--variant", v.variant, "tensor weights: freq|binary|log")
      ->check(CLI::IsMember({"freq", "binary", "log"}));
  cmd->add_option("--group-seed", v.group_seed, "grouping shuffle seed");
  cmd->add_option("--decomp-seed", v.decomp_seed, "decomposition init seed (cp)");
  cmd->add_option("--cp-rank", v.cp_rank, "cp rank (0 = feature length)");
  cmd->add_option("--max-iters", v.max_iters, "cp ALS sweep cap");
  cmd->add_option("--tol", v.tol, "cp ALS relative fit tolerance");
  cmd->add_option("--budget-mb", v.budget_mb, "memory guard for dense work, in MB");
}

void add_train_options(CLI::App* cmd, CliValues& v) {
  cmd->add_option("--epochs", v.epochs, "training epochs");
  cmd->add_option("--lr", v.lr, "learning rate");
  cmd->add_option("--batch-size", v.batch_size, "mini-batch size");
  cmd->add_option("--shuffle-seed", v.shuffle_seed, "epoch shuffle seed");
  cmd->add_option("--init-seed", v.init_seed, "weight init seed");
}

/// defaults < config file < explicitly passed flags.
ngt::ExperimentConfig build_config(const CLI::App* cmd, const CliValues& v) {
  ngt::ExperimentConfig cfg;
  if (cmd->count("--config")) {
    std::ifstream is(v.config_path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read config file " + v.config_path);
    nlohmann::json j;
    is >> j;
    cfg = ngt::ExperimentConfig::from_json(j);
  }
  auto passed = [&](const std::string& name) {
    return cmd->get_option_no_throw(name) && cmd->count(name) > 0;
  };
  if (passed("--seed")) cfg.apply_master_seed(v.seed);
  if (passed("--data")) cfg.data_path = v.data;
  if (passed("--schema")) cfg.schema = resolve_schema(v.schema);
  if (passed("--subset")) {
    if (v.subset == "all")
      cfg.subset_filter.reset();
    else
      cfg.subset_filter = ngt::parse_subset(v.subset);
  }
  if (passed("--n")) cfg.ngram_order = v.n;
  if (passed("--group-size")) cfg.group_size = v.group_size;
  if (passed("--k")) {
    cfg.feature_length = v.k;
    cfg.decomp.k = v.k ? v.k : cfg.decomp.k;
  }
  if (passed("--decomp")) cfg.decomp.kind = ngt::parse_decomp_kind(v.decomp);
  if (passed("--variant")) cfg.variant = ngt::parse_variant(v.variant);
  if (passed("--epochs")) cfg.train.epochs = v.epochs;
  if (passed("--lr")) cfg.train.learning_rate = v.lr;
  if (passed("--batch-size")) cfg.train.batch_size = v.batch_size;
  if (passed("--shuffle-seed")) cfg.train.shuffle_seed = v.shuffle_seed;
  if (passed("--split-seed")) cfg.split.seed = v.split_seed;
  if (passed("--split-fraction")) cfg.split.train_fraction = v.split_fraction;
  if (passed("--group-seed")) cfg.group_seed = v.group_seed;
  if (passed("--init-seed")) cfg.init_seed = v.init_seed;
  if (passed("--decomp-seed")) cfg.decomp.seed = v.decomp_seed;
  if (passed("--cp-rank")) cfg.decomp.cp_rank = v.cp_rank;
  if (passed("--max-iters")) cfg.decomp.max_iters = v.max_iters;
  if (passed("--tol")) cfg.decomp.tol = v.tol;
  if (passed("--budget-mb")) cfg.memory_budget_mb = v.budget_mb;
  if (passed("--out")) cfg.out_dir = v.out;
  if (passed("--method")) cfg.baseline_method = v.method;
  cfg.decomp.k = cfg.resolved_k();
  return cfg;
}

void print_report_line(const ngt::EvalReport& r) {
  auto cell = [](const std::optional<double>& v) {
    if (!v) return std::string("--");
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", *v);
    return std::string(buf);
  };
  std::printf("%s %s: auroc=%s aupr=%s f1=%.4f acc=%.4f\n", r.dataset.c_str(),
              r.method.c_str(), cell(r.auroc).c_str(), cell(r.aupr).c_str(), r.f1,
              r.accuracy);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"n-gram tensor features for hallucination detection"};
  app.require_subcommand(1);
  CliValues v;

  CLI::App* stats = app.add_subcommand("stats", "corpus statistics table");
  add_common_options(stats, v);

  CLI::App* features = app.add_subcommand("features", "extract feature CSVs");
  add_common_options(features, v);
  add_feature_options(features, v);

  CLI::App* train_eval =
      app.add_subcommand("train-eval", "train the classifier and evaluate");
  add_common_options(train_eval, v);
  add_feature_options(train_eval, v);
  add_train_options(train_eval, v);

  CLI::App* baseline = app.add_subcommand("baseline", "classical baseline scorers");
  add_common_options(baseline, v);
  baseline->add_option("--method", v.method, "rouge_l or perplexity")
      ->check(CLI::IsMember({"rouge_l", "perplexity"}));

  CLI::App* sweep = app.add_subcommand("sweep", "train-eval across group sizes");
  add_common_options(sweep, v);
  add_feature_options(sweep, v);
  add_train_options(sweep, v);
  sweep->add_option("--sizes", v.sizes, "group sizes to sweep")->delimiter(',');

  CLI11_PARSE(app, argc, argv);

  try {
    if (stats->parsed()) {
      ngt::ExperimentConfig cfg = build_config(stats, v);
      auto rows = ngt::run_stats(cfg);
      std::fputs(ngt::format_stats_table(rows, cfg.ngram_order).c_str(), stdout);
    } else if (features->parsed()) {
      ngt::ExperimentConfig cfg = build_config(features, v);
      ngt::FeatureSets fs = ngt::run_features(cfg);
      std::printf("features: %zu train groups, %zu eval groups, k=%zu -> %s\n",
                  fs.train.size(), fs.eval.size(), cfg.resolved_k(),
                  cfg.out_dir.c_str());
    } else if (train_eval->parsed()) {
      ngt::ExperimentConfig cfg = build_config(train_eval, v);
      ngt::EvalReport r = ngt::run_train_eval(cfg);
      print_report_line(r);
    } else if (baseline->parsed()) {
      ngt::ExperimentConfig cfg = build_config(baseline, v);
      ngt::EvalReport r = ngt::run_baseline(cfg);
      print_report_line(r);
    } else if (sweep->parsed()) {
      ngt::ExperimentConfig cfg = build_config(sweep, v);
      auto rows = ngt::run_sweep(cfg, v.sizes);
      for (const auto& row : rows) {
        if (row.ok)
          print_report_line(row.report);
        else
          std::printf("G%zu: failed (%s)\n", row.group_size, row.error.c_str());
      }
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
