#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ngt/baselines.hpp"
#include "ngt/corpus.hpp"
#include "ngt/decomp.hpp"
#include "ngt/metrics.hpp"
#include "ngt/mlp.hpp"
#include "ngt/ngram.hpp"
#include "ngt/prng.hpp"
#include "ngt/tensor.hpp"

namespace ngt {

/// Everything one experiment needs, seeds included, round-trippable through
/// JSON so any output can be replayed from its own config echo.
struct ExperimentConfig {
  std::string data_path;
  SchemaDescriptor schema = SchemaDescriptor::toy();
  std::optional<Subset> subset_filter;
  std::size_t ngram_order = 2;
  std::size_t group_size = 1;
  std::size_t feature_length = 0;  // 0 resolves from group size
  WeightVariant variant = WeightVariant::frequency;
  DecompConfig decomp;
  TrainConfig train;
  SplitConfig split;
  std::uint64_t group_seed = 0;
  std::uint64_t init_seed = 0;
  std::size_t memory_budget_mb = 2048;
  std::string out_dir = "out";
  std::string baseline_method = "rouge_l";

  /// Feature length: explicit value wins; otherwise 20 for small groups
  /// (M < 20) and 40 for large ones.
  std::size_t resolved_k() const {
    if (feature_length) return feature_length;
    return group_size < 20 ? 20 : 40;
  }

  /// One master seed fans out to every stage deterministically.
  void apply_master_seed(std::uint64_t s) {
    split.seed = s;
    group_seed = splitmix64(s + 1);
    decomp.seed = splitmix64(s + 2);
    train.shuffle_seed = splitmix64(s + 3);
    init_seed = splitmix64(s + 4);
  }

  std::string dataset_name() const {
    if (subset_filter) return to_string(*subset_filter);
    return to_string(schema.subset);
  }

  std::string method_name() const {
    std::string base;
    switch (decomp.kind) {
      case DecompKind::svd: base = "SVD"; break;
      case DecompKind::tucker: base = "TUCKER"; break;
      default: base = "CPD"; break;
    }
    return base + "-G" + std::to_string(group_size);
  }

  void validate() const {
    if (ngram_order < 2)
      throw std::invalid_argument("n-gram order must be >= 2 to form a tensor");
    if (decomp.kind == DecompKind::svd && ngram_order != 2)
      throw std::invalid_argument(
          "svd features need n = 2 (a matrix); use tucker or cp for higher orders");
    if (decomp.kind == DecompKind::cp && ngram_order < 3)
      throw std::invalid_argument("cp features need n >= 3; use svd or tucker for n = 2");
    if (group_size < 1) throw std::invalid_argument("group size must be >= 1");
    if (resolved_k() < 1) throw std::invalid_argument("feature length must be >= 1");
    if (!(split.train_fraction > 0.0 && split.train_fraction < 1.0))
      throw std::invalid_argument("train fraction must lie strictly between 0 and 1");
    if (memory_budget_mb < 1) throw std::invalid_argument("memory budget must be >= 1 MB");
    schema.validate();
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["data_path"] = data_path;
    j["schema"] = schema.to_json();
    j["subset"] = subset_filter ? to_string(*subset_filter) : "all";
    j["ngram_order"] = ngram_order;
    j["group_size"] = group_size;
    j["feature_length"] = feature_length;
    j["resolved_k"] = resolved_k();
    j["variant"] = to_string(variant);
    j["decomp"] = decomp.to_json();
    j["train"] = train.to_json();
    j["split_fraction"] = split.train_fraction;
    j["split_seed"] = split.seed;
    j["group_seed"] = group_seed;
    j["init_seed"] = init_seed;
    j["memory_budget_mb"] = memory_budget_mb;
    j["out_dir"] = out_dir;
    j["baseline_method"] = baseline_method;
    return j;
  }

  static ExperimentConfig from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    c.data_path = j.value("data_path", std::string());
    if (j.contains("schema")) c.schema = SchemaDescriptor::from_json(j["schema"]);
    std::string sub = j.value("subset", std::string("all"));
    if (sub != "all") c.subset_filter = parse_subset(sub);
    c.ngram_order = j.value("ngram_order", std::size_t{2});
    c.group_size = j.value("group_size", std::size_t{1});
    c.feature_length = j.value("feature_length", std::size_t{0});
    c.variant = parse_variant(j.value("variant", std::string("freq")));
    if (j.contains("decomp")) c.decomp = DecompConfig::from_json(j["decomp"]);
    if (j.contains("train")) c.train = TrainConfig::from_json(j["train"]);
    c.split.train_fraction = j.value("split_fraction", 0.8);
    c.split.seed = j.value("split_seed", std::uint64_t{0});
    c.group_seed = j.value("group_seed", std::uint64_t{0});
    c.init_seed = j.value("init_seed", std::uint64_t{0});
    c.memory_budget_mb = j.value("memory_budget_mb", std::size_t{2048});
    c.out_dir = j.value("out_dir", std::string("out"));
    c.baseline_method = j.value("baseline_method", std::string("rouge_l"));
    return c;
  }
};

namespace detail {

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << content;
}

inline std::string format_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

/// Upper-bound estimate of the dense working memory one decomposition needs.
inline std::size_t estimate_decomp_bytes(const SparseCountTensor& t,
                                         const DecompConfig& cfg, std::size_t k) {
  const std::size_t order = t.order();
  const std::size_t dim = t.dim();
  const std::size_t nnz = t.nnz();
  const std::size_t unfold_bytes = nnz * (24 + 8 * order);

  auto svd_side_bytes = [&](std::size_t top) {
    // Compact sides are bounded by nnz on both axes.
    std::size_t side = std::min<std::size_t>(dim, nnz);
    if (side <= 256) return 2 * side * side * 8 + unfold_bytes;
    std::size_t basis = std::min(side, std::max<std::size_t>(8 * top + 80, 320));
    return side * basis * 8 + unfold_bytes;
  };

  switch (cfg.kind) {
    case DecompKind::svd:
      return svd_side_bytes(k);
    case DecompKind::tucker: {
      std::size_t rank = 10;
      for (std::size_t r : cfg.tucker_ranks) rank = std::max(rank, r);
      rank = std::min(rank, dim);
      std::size_t core = 1;
      for (std::size_t m = 0; m < order; ++m) {
        std::size_t r = cfg.tucker_ranks.empty()
                            ? std::min<std::size_t>(dim, 10)
                            : std::min(cfg.tucker_ranks[m], dim);
        if (core > (std::size_t{1} << 40) / std::max<std::size_t>(r, 1)) {
          core = std::size_t{1} << 40;  // saturate; will trip the guard
          break;
        }
        core *= r;
      }
      return svd_side_bytes(rank) + core * 8 + order * dim * rank * 8;
    }
    default: {
      std::size_t rank = cfg.cp_rank ? cfg.cp_rank : k;
      return (order + 1) * dim * rank * 8 + rank * rank * 8 * (order + 2) + unfold_bytes;
    }
  }
}

inline std::vector<double> decompose_one(const SparseCountTensor& t,
                                         const DecompConfig& cfg, std::size_t k) {
  DecompConfig local = cfg;
  local.k = k;
  switch (cfg.kind) {
    case DecompKind::svd:
      return svd_singular_values(unfold(t, 1), k);
    case DecompKind::tucker:
      return tucker_features(t, local);
    default:
      return cp_features(t, local);
  }
}

}  // namespace detail

struct FeatureSets {
  std::vector<FeatureVector> train;
  std::vector<FeatureVector> eval;
  std::vector<std::size_t> train_vocab_sizes;
  std::vector<std::size_t> eval_vocab_sizes;
  std::size_t dropped_empty_docs = 0;
};

inline std::string features_to_csv(const std::vector<FeatureVector>& fvs, std::size_t k) {
  std::ostringstream os;
  os << "label";
  for (std::size_t j = 1; j <= k; ++j) os << ",v" << j;
  os << '\n';
  for (const auto& fv : fvs) {
    os << fv.label;
    for (double v : fv.values) os << ',' << detail::format_value(v);
    os << '\n';
  }
  return os.str();
}

/// Full feature pipeline: load, filter, split, group per side, then one
/// tensor + decomposition per group. Writes train/eval CSVs plus a sidecar
/// JSON describing the run when out_dir is non-empty.
inline FeatureSets run_features(const ExperimentConfig& cfg, bool write_outputs = true) {
  cfg.validate();
  std::vector<Document> docs = load_jsonl(cfg.data_path, cfg.schema);
  FeatureSets out;
  {
    std::vector<Document> kept;
    for (auto& d : docs) {
      if (cfg.subset_filter && d.subset != *cfg.subset_filter) continue;
      if (detail::whitespace_only(d.text)) {
        ++out.dropped_empty_docs;
        continue;
      }
      kept.push_back(std::move(d));
    }
    docs = std::move(kept);
  }
  if (docs.empty()) throw std::runtime_error("no usable documents after filtering");

  auto [train_docs, eval_docs] = split_train_eval(docs, cfg.split);
  const std::size_t k = cfg.resolved_k();

  auto process_side = [&](const std::vector<Document>& side,
                          std::vector<FeatureVector>& sink,
                          std::vector<std::size_t>& vocab_sizes) {
    std::vector<LabeledGroup> groups = group_by_label(side, cfg.group_size, cfg.group_seed);
    for (const auto& g : groups) {
      std::vector<std::vector<NGram>> per_member;
      per_member.reserve(g.members.size());
      for (const auto& d : g.members)
        per_member.push_back(extract_ngrams(tokenize(d.text), cfg.ngram_order));
      Vocabulary vocab = build_vocabulary(per_member);
      vocab_sizes.push_back(vocab.size());

      SparseCountTensor t = build_count_tensor(g, cfg.ngram_order, vocab);
      SparseCountTensor weighted = apply_variant(t, cfg.variant);

      std::size_t need = detail::estimate_decomp_bytes(weighted, cfg.decomp, k);
      std::size_t budget = cfg.memory_budget_mb * std::size_t{1024} * 1024;
      if (need > budget)
        throw std::runtime_error(
            "memory budget exceeded for group " + g.id + ": estimated " +
            std::to_string(need / (1024 * 1024) + 1) + " MB of dense work, budget " +
            std::to_string(cfg.memory_budget_mb) + " MB");

      std::vector<double> segment = detail::decompose_one(weighted, cfg.decomp, k);
      FeatureProvenance prov{g.id, cfg.decomp.kind, cfg.ngram_order, cfg.group_size};
      sink.push_back(assemble_feature_vector({std::move(segment)}, k,
                                             g.label == Label::hallucinated ? 1 : 0,
                                             std::move(prov)));
    }
  };

  process_side(train_docs, out.train, out.train_vocab_sizes);
  process_side(eval_docs, out.eval, out.eval_vocab_sizes);

  if (write_outputs && !cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    detail::write_text_file(cfg.out_dir + "/train_features.csv",
                            features_to_csv(out.train, k));
    detail::write_text_file(cfg.out_dir + "/eval_features.csv",
                            features_to_csv(out.eval, k));
    nlohmann::json side;
    side["config"] = cfg.to_json();
    side["train_group_count"] = out.train.size();
    side["eval_group_count"] = out.eval.size();
    side["train_vocab_sizes"] = out.train_vocab_sizes;
    side["eval_vocab_sizes"] = out.eval_vocab_sizes;
    side["dropped_empty_docs"] = out.dropped_empty_docs;
    detail::write_text_file(cfg.out_dir + "/features.json", side.dump(2) + "\n");
  }
  return out;
}

/// Features -> standardize -> train MLP -> score the eval groups. Returns the
/// report; writes model.json + report.json(.txt) when out_dir is non-empty.
inline EvalReport run_train_eval(const ExperimentConfig& cfg, bool write_outputs = true,
                                 FeatureSets* reuse = nullptr) {
  FeatureSets fs = reuse ? std::move(*reuse) : run_features(cfg, write_outputs);
  if (fs.train.empty() || fs.eval.empty())
    throw std::runtime_error("not enough groups to train and evaluate");

  TrainResult trace;
  TrainedClassifier clf = train_classifier(fs.train, cfg.train, cfg.init_seed, &trace);

  std::vector<double> scores;
  std::vector<int> preds, labels;
  for (const auto& fv : fs.eval) {
    Prediction p = clf.predict(fv.values);
    scores.push_back(p.probability);
    preds.push_back(p.label);
    labels.push_back(fv.label);
  }

  EvalReport report;
  report.dataset = cfg.dataset_name();
  report.method = cfg.method_name();
  bool pos = std::find(labels.begin(), labels.end(), 1) != labels.end();
  bool neg = std::find(labels.begin(), labels.end(), 0) != labels.end();
  if (pos && neg) {
    report.auroc = auroc(scores, labels);
    report.aupr = aupr(scores, labels);
  } else if (pos) {
    report.aupr = aupr(scores, labels);
  }
  ThresholdedScores ts = confusion_and_scores(preds, labels);
  report.counts = ts.counts;
  report.f1 = ts.f1;
  report.accuracy = ts.accuracy;
  report.config_echo = cfg.to_json();
  report.config_echo["epoch_mean_loss_first"] =
      trace.epoch_mean_loss.empty() ? 0.0 : trace.epoch_mean_loss.front();
  report.config_echo["epoch_mean_loss_last"] =
      trace.epoch_mean_loss.empty() ? 0.0 : trace.epoch_mean_loss.back();

  if (write_outputs && !cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    clf.save(cfg.out_dir + "/model.json");
    emit_report(report, cfg.out_dir + "/report.json");
  }
  return report;
}

/// Classical baseline: score documents, calibrate a Youden threshold on the
/// train split, classify the eval split. AUROC/AUPR come from the raw eval
/// scores without any direction flip.
inline EvalReport run_baseline(const ExperimentConfig& cfg, bool write_outputs = true) {
  if (cfg.baseline_method != "rouge_l" && cfg.baseline_method != "perplexity")
    throw std::invalid_argument("baseline method must be rouge_l or perplexity");
  cfg.schema.validate();
  std::vector<Document> docs = load_jsonl(cfg.data_path, cfg.schema);
  {
    std::vector<Document> kept;
    for (auto& d : docs) {
      if (cfg.subset_filter && d.subset != *cfg.subset_filter) continue;
      if (detail::whitespace_only(d.text)) continue;
      kept.push_back(std::move(d));
    }
    docs = std::move(kept);
  }
  if (docs.empty()) throw std::runtime_error("no usable documents after filtering");
  auto [train_docs, eval_docs] = split_train_eval(docs, cfg.split);

  std::optional<NgramLm> lm;
  if (cfg.baseline_method == "perplexity") lm = NgramLm::train(train_docs, 2);

  auto score_doc = [&](const Document& d) -> double {
    if (cfg.baseline_method == "perplexity") return perplexity(*lm, d);
    return rouge_l(tokenize(d.text), tokenize(d.ref_text));
  };
  auto score_side = [&](const std::vector<Document>& side, std::vector<double>& scores,
                        std::vector<int>& labels) {
    for (const auto& d : side) {
      scores.push_back(score_doc(d));
      labels.push_back(d.label == Label::hallucinated ? 1 : 0);
    }
  };

  std::vector<double> train_scores, eval_scores;
  std::vector<int> train_labels, eval_labels;
  score_side(train_docs, train_scores, train_labels);
  score_side(eval_docs, eval_scores, eval_labels);

  CalibratedThreshold cal = youden_threshold(train_scores, train_labels);
  std::vector<int> preds = threshold_classify(eval_scores, cal);

  EvalReport report;
  report.dataset = cfg.dataset_name();
  report.method = cfg.baseline_method;
  report.auroc = auroc(eval_scores, eval_labels);
  report.aupr = aupr(eval_scores, eval_labels);
  ThresholdedScores ts = confusion_and_scores(preds, eval_labels);
  report.counts = ts.counts;
  report.f1 = ts.f1;
  report.accuracy = ts.accuracy;
  report.config_echo = cfg.to_json();
  report.config_echo["calibration"] = {{"threshold", cal.threshold},
                                       {"direction", to_string(cal.direction)},
                                       {"j_statistic", cal.j_statistic}};

  if (write_outputs && !cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    emit_report(report, cfg.out_dir + "/baseline_" + cfg.baseline_method + ".json");
  }
  return report;
}

struct SweepRow {
  std::size_t group_size = 0;
  bool ok = false;
  std::string error;
  EvalReport report;
};

/// Feature + train-eval run per group size. A failing size records its error
/// and the sweep moves on; its CSV cells render as "--".
inline std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg,
                                       const std::vector<std::size_t>& group_sizes,
                                       bool write_outputs = true) {
  std::vector<SweepRow> rows;
  for (std::size_t m : group_sizes) {
    SweepRow row;
    row.group_size = m;
    ExperimentConfig sub = cfg;
    sub.group_size = m;
    // Explicit feature length carries over; otherwise each size resolves its
    // own default (20 for M < 20, else 40).
    if (!cfg.out_dir.empty()) sub.out_dir = cfg.out_dir + "/g" + std::to_string(m);
    try {
      row.report = run_train_eval(sub, write_outputs);
      row.ok = true;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }

  if (write_outputs && !cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    std::ostringstream os;
    os << "# group_sizes:";
    for (std::size_t i = 0; i < group_sizes.size(); ++i)
      os << (i ? "," : " ") << group_sizes[i];
    os << '\n';
    os << "group_size,auroc,aupr,f1,accuracy\n";
    for (const auto& row : rows) {
      os << row.group_size << ',';
      if (row.ok) {
        os << (row.report.auroc ? detail::fixed6(*row.report.auroc) : "--") << ','
           << (row.report.aupr ? detail::fixed6(*row.report.aupr) : "--") << ','
           << detail::fixed6(row.report.f1) << ',' << detail::fixed6(row.report.accuracy);
      } else {
        os << "--,--,--,--";
      }
      os << '\n';
    }
    detail::write_text_file(cfg.out_dir + "/sweep.csv", os.str());
  }
  return rows;
}

/// Corpus statistics over the (optionally subset-filtered) full dataset.
inline std::vector<StatsRow> run_stats(const ExperimentConfig& cfg,
                                       bool write_outputs = true) {
  cfg.schema.validate();
  std::vector<Document> docs = load_jsonl(cfg.data_path, cfg.schema);
  if (cfg.subset_filter) {
    std::vector<Document> kept;
    for (auto& d : docs)
      if (d.subset == *cfg.subset_filter) kept.push_back(std::move(d));
    docs = std::move(kept);
  }
  std::vector<StatsRow> rows = corpus_stats(docs, cfg.ngram_order);
  if (write_outputs && !cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    detail::write_text_file(cfg.out_dir + "/stats.txt",
                            format_stats_table(rows, cfg.ngram_order));
    detail::write_text_file(cfg.out_dir + "/stats.json",
                            stats_to_json(rows, cfg.ngram_order).dump(2) + "\n");
  }
  return rows;
}

}  // namespace ngt
