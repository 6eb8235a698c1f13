#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "ngt/experiment.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;
using ngt::ExperimentConfig;

namespace {

const std::string kToyPath = std::string(NGT_TEST_DATA_DIR) + "/toy.jsonl";

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

ExperimentConfig toy_config(const std::string& out_dir) {
  ExperimentConfig cfg;
  cfg.data_path = kToyPath;
  cfg.schema = ngt::SchemaDescriptor::toy();
  cfg.ngram_order = 2;
  cfg.group_size = 1;
  cfg.feature_length = 4;
  cfg.out_dir = out_dir;
  cfg.apply_master_seed(7);
  return cfg;
}

// Simple whitespace split; test texts are pre-normalized lowercase.
std::vector<std::string> split_words(const std::string& text) {
  std::istringstream ss(text);
  std::vector<std::string> out;
  std::string w;
  while (ss >> w) out.push_back(w);
  return out;
}

// First-occurrence bigram count matrix, built without any library helpers.
Eigen::MatrixXd bigram_matrix(const std::string& text) {
  auto toks = split_words(text);
  std::map<std::string, int> pos;
  std::vector<std::pair<int, int>> grams;
  for (std::size_t i = 0; i + 1 < toks.size(); ++i) {
    for (const auto& t : {toks[i], toks[i + 1]})
      if (!pos.count(t)) {
        int next = static_cast<int>(pos.size());
        pos[t] = next;
      }
    grams.emplace_back(pos[toks[i]], pos[toks[i + 1]]);
  }
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(pos.size()),
                                            static_cast<Eigen::Index>(pos.size()));
  for (auto [a, b] : grams) m(a, b) += 1.0;
  return m;
}

void write_lines(const std::string& path, const std::vector<nlohmann::json>& lines) {
  std::ofstream os(path, std::ios::binary);
  REQUIRE(os);
  for (const auto& j : lines) os << j.dump() << '\n';
}

}  // namespace

TEST_CASE("toy corpus features have the configured shape") {
  TempDir dir("exp_shape_out");
  ExperimentConfig cfg = toy_config(dir.file("run"));
  auto fs_out = ngt::run_features(cfg);

  CHECK(fs_out.train.size() + fs_out.eval.size() == 12);  // M = 1: one group per doc
  bool pos = false, neg = false;
  for (const auto& set : {fs_out.train, fs_out.eval})
    for (const auto& fv : set) {
      CHECK(fv.values.size() == 4);
      (fv.label ? pos : neg) = true;
      for (std::size_t i = 0; i + 1 < fv.values.size(); ++i)
        CHECK(fv.values[i] >= fv.values[i + 1]);  // spectra arrive sorted
    }
  CHECK(pos);
  CHECK(neg);
  CHECK(fs_out.train_vocab_sizes.size() == fs_out.train.size());
  CHECK(fs_out.dropped_empty_docs == 0);

  std::string train_csv = slurp(cfg.out_dir + "/train_features.csv");
  CHECK(train_csv.rfind("label,v1,v2,v3,v4\n", 0) == 0);
  auto side = nlohmann::json::parse(slurp(cfg.out_dir + "/features.json"));
  CHECK(side["train_group_count"] == fs_out.train.size());
  CHECK(side["eval_group_count"] == fs_out.eval.size());
  CHECK(side["config"]["ngram_order"] == 2);
}

TEST_CASE("feature CSVs are byte-identical across reruns") {
  TempDir dir("exp_bytes_out");
  ExperimentConfig a = toy_config(dir.file("a"));
  ExperimentConfig b = toy_config(dir.file("b"));
  ngt::run_features(a);
  ngt::run_features(b);
  CHECK(slurp(a.out_dir + "/train_features.csv") ==
        slurp(b.out_dir + "/train_features.csv"));
  CHECK(slurp(a.out_dir + "/eval_features.csv") ==
        slurp(b.out_dir + "/eval_features.csv"));
}

TEST_CASE("feature values match an independent end-to-end spectral oracle") {
  TempDir dir("exp_oracle_out");
  std::string fact_text = "the cat sat on the mat the cat ran";
  std::string hall_text = "purple clocks dream beneath seven singing mountains again";
  write_lines(dir.file("two.jsonl"),
              {{{"text", fact_text}, {"label", "factual"}},
               {{"text", hall_text}, {"label", "hallucinated"}}});

  ExperimentConfig cfg;
  cfg.data_path = dir.file("two.jsonl");
  cfg.schema = ngt::SchemaDescriptor::toy();
  cfg.group_size = 1;
  cfg.feature_length = 6;
  cfg.split.train_fraction = 0.5;
  cfg.out_dir.clear();
  auto out = ngt::run_features(cfg, false);
  REQUIRE(out.train.size() == 1);
  REQUIRE(out.eval.size() == 1);

  for (const auto& fv : {out.train.front(), out.eval.front()}) {
    const std::string& text = fv.label ? hall_text : fact_text;
    auto expect = oracle::singular_values_via_gram(bigram_matrix(text));
    REQUIRE(fv.values.size() == 6);
    double scale = std::max(expect[0], 1.0);
    for (std::size_t i = 0; i < 6; ++i) {
      double want = i < expect.size() ? expect[i] : 0.0;
      if (want < scale * 1e-12) want = 0.0;  // below the library's rank cutoff
      CHECK(std::fabs(fv.values[i] - want) <= 1e-6 * scale);
    }
  }
}

TEST_CASE("experiment config json round trip") {
  ExperimentConfig cfg;
  cfg.data_path = "some/data.jsonl";
  cfg.schema = ngt::SchemaDescriptor::halueval_dialogue();
  cfg.subset_filter = ngt::Subset::dialogue;
  cfg.ngram_order = 3;
  cfg.group_size = 5;
  cfg.feature_length = 24;
  cfg.variant = ngt::WeightVariant::log_frequency;
  cfg.decomp.kind = ngt::DecompKind::tucker;
  cfg.decomp.tucker_ranks = {6, 6, 6};
  cfg.train.epochs = 9;
  cfg.split.train_fraction = 0.7;
  cfg.split.seed = 41;
  cfg.group_seed = 42;
  cfg.init_seed = 43;
  cfg.memory_budget_mb = 512;
  cfg.out_dir = "elsewhere";
  cfg.baseline_method = "perplexity";

  ExperimentConfig back = ExperimentConfig::from_json(cfg.to_json());
  CHECK(back.data_path == cfg.data_path);
  CHECK(back.schema.name == "halueval-dialogue");
  REQUIRE(back.subset_filter.has_value());
  CHECK(*back.subset_filter == ngt::Subset::dialogue);
  CHECK(back.ngram_order == 3);
  CHECK(back.group_size == 5);
  CHECK(back.feature_length == 24);
  CHECK(back.variant == ngt::WeightVariant::log_frequency);
  CHECK(back.decomp.kind == ngt::DecompKind::tucker);
  CHECK(back.decomp.tucker_ranks == std::vector<std::size_t>{6, 6, 6});
  CHECK(back.train.epochs == 9);
  CHECK(back.split.train_fraction == 0.7);
  CHECK(back.split.seed == 41);
  CHECK(back.group_seed == 42);
  CHECK(back.init_seed == 43);
  CHECK(back.memory_budget_mb == 512);
  CHECK(back.out_dir == "elsewhere");
  CHECK(back.baseline_method == "perplexity");

  ExperimentConfig plain;
  CHECK(!ExperimentConfig::from_json(plain.to_json()).subset_filter.has_value());
}

TEST_CASE("master seed fans out deterministically to distinct stage seeds") {
  ExperimentConfig a, b;
  a.apply_master_seed(1234);
  b.apply_master_seed(1234);
  CHECK(a.split.seed == 1234);
  CHECK(a.group_seed == b.group_seed);
  CHECK(a.decomp.seed == b.decomp.seed);
  CHECK(a.train.shuffle_seed == b.train.shuffle_seed);
  CHECK(a.init_seed == b.init_seed);

  std::set<std::uint64_t> seeds{a.split.seed, a.group_seed, a.decomp.seed,
                                a.train.shuffle_seed, a.init_seed};
  CHECK(seeds.size() == 5);

  ExperimentConfig c;
  c.apply_master_seed(1235);
  CHECK(c.group_seed != a.group_seed);
}

TEST_CASE("feature length resolution and method naming") {
  ExperimentConfig cfg;
  cfg.group_size = 1;
  CHECK(cfg.resolved_k() == 20);
  cfg.group_size = 19;
  CHECK(cfg.resolved_k() == 20);
  cfg.group_size = 20;
  CHECK(cfg.resolved_k() == 40);
  cfg.group_size = 40;
  CHECK(cfg.resolved_k() == 40);
  cfg.feature_length = 7;
  CHECK(cfg.resolved_k() == 7);

  cfg.group_size = 5;
  cfg.decomp.kind = ngt::DecompKind::svd;
  CHECK(cfg.method_name() == "SVD-G5");
  cfg.decomp.kind = ngt::DecompKind::tucker;
  cfg.group_size = 3;
  CHECK(cfg.method_name() == "TUCKER-G3");
  cfg.decomp.kind = ngt::DecompKind::cp;
  cfg.group_size = 2;
  CHECK(cfg.method_name() == "CPD-G2");

  CHECK(cfg.dataset_name() == "other");  // toy schema default subset
  cfg.subset_filter = ngt::Subset::summary;
  CHECK(cfg.dataset_name() == "summary");
}

TEST_CASE("config validation rejects inconsistent setups") {
  ExperimentConfig cfg = toy_config("unused");

  ExperimentConfig bad = cfg;
  bad.ngram_order = 3;  // svd needs a matrix
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = cfg;
  bad.decomp.kind = ngt::DecompKind::cp;
  bad.ngram_order = 2;  // cp needs order >= 3
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = cfg;
  bad.ngram_order = 1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = cfg;
  bad.group_size = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = cfg;
  bad.split.train_fraction = 1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = cfg;
  bad.memory_budget_mb = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("run_train_eval emits a complete, reproducible report") {
  TempDir dir("exp_traineval_out");
  ExperimentConfig cfg = toy_config(dir.file("run"));
  cfg.train.epochs = 2;
  cfg.train.learning_rate = 1e-3;

  ngt::EvalReport report = ngt::run_train_eval(cfg);
  REQUIRE(report.auroc.has_value());
  REQUIRE(report.aupr.has_value());
  CHECK(report.counts.tp + report.counts.fp + report.counts.tn + report.counts.fn == 3);
  CHECK(report.dataset == "other");
  CHECK(report.method == "SVD-G1");
  CHECK(report.config_echo["ngram_order"] == 2);
  CHECK(report.config_echo.contains("epoch_mean_loss_first"));
  CHECK(report.config_echo.contains("epoch_mean_loss_last"));

  CHECK(fs::exists(cfg.out_dir + "/model.json"));
  CHECK(fs::exists(cfg.out_dir + "/report.json"));
  CHECK(fs::exists(cfg.out_dir + "/report.json.txt"));

  std::string model_a = slurp(cfg.out_dir + "/model.json");
  std::string report_a = slurp(cfg.out_dir + "/report.json");
  ngt::run_train_eval(cfg);
  CHECK(slurp(cfg.out_dir + "/model.json") == model_a);
  CHECK(slurp(cfg.out_dir + "/report.json") == report_a);
}

TEST_CASE("run_baseline calibrates on train and scores eval") {
  TempDir dir("exp_baseline_out");
  std::vector<nlohmann::json> lines;
  const char* rights[] = {"paris is the capital of france",
                          "water boils at one hundred degrees",
                          "the moon orbits the earth each month",
                          "dogs are loyal household animals"};
  const char* wrongs[] = {"paris is the capital of mars colony",
                          "water boils when frozen solid overnight",
                          "the moon is a giant cheese wheel",
                          "dogs vote in municipal elections yearly"};
  for (int i = 0; i < 4; ++i)
    lines.push_back({{"dialogue_history", "[human]: tell me a fact"},
                     {"right_response", rights[i]},
                     {"hallucinated_response", wrongs[i]}});
  write_lines(dir.file("dlg.jsonl"), lines);

  ExperimentConfig cfg;
  cfg.data_path = dir.file("dlg.jsonl");
  cfg.schema = ngt::SchemaDescriptor::halueval_dialogue();
  cfg.split.train_fraction = 0.5;
  cfg.out_dir = dir.file("run");
  cfg.baseline_method = "rouge_l";

  ngt::EvalReport report = ngt::run_baseline(cfg);
  CHECK(report.method == "rouge_l");
  CHECK(report.dataset == "dialogue");
  REQUIRE(report.auroc.has_value());
  REQUIRE(report.aupr.has_value());
  CHECK(report.counts.tp + report.counts.fp + report.counts.tn + report.counts.fn == 4);
  CHECK(report.config_echo["calibration"].contains("threshold"));
  CHECK(report.config_echo["calibration"].contains("direction"));
  CHECK(fs::exists(cfg.out_dir + "/baseline_rouge_l.json"));

  cfg.baseline_method = "perplexity";
  ngt::EvalReport perp = ngt::run_baseline(cfg);
  CHECK(perp.method == "perplexity");
  CHECK(fs::exists(cfg.out_dir + "/baseline_perplexity.json"));

  cfg.baseline_method = "bertscore";
  CHECK_THROWS_AS(ngt::run_baseline(cfg), std::invalid_argument);
}

TEST_CASE("run_sweep emits one row per group size plus a header echo") {
  TempDir dir("exp_sweep_out");
  ExperimentConfig cfg = toy_config(dir.file("run"));
  cfg.train.epochs = 1;

  auto rows = ngt::run_sweep(cfg, {1, 2});
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].group_size == 1);
  CHECK(rows[1].group_size == 2);
  CHECK(rows[0].ok);
  CHECK(rows[1].ok);

  std::string csv = slurp(cfg.out_dir + "/sweep.csv");
  CHECK(csv.rfind("# group_sizes: 1,2\n", 0) == 0);
  CHECK(csv.find("group_size,auroc,aupr,f1,accuracy\n") != std::string::npos);
  CHECK(fs::exists(cfg.out_dir + "/g1/report.json"));
  CHECK(fs::exists(cfg.out_dir + "/g2/report.json"));
}

TEST_CASE("memory guard aborts oversized decompositions with a clear message") {
  TempDir dir("exp_budget_out");
  // Two long all-distinct-token documents: the unfolded side is far beyond the
  // dense threshold, so the estimated iterative workspace exceeds 1 MB.
  auto big_text = [](const std::string& prefix) {
    std::ostringstream ss;
    for (int i = 0; i < 600; ++i) ss << (i ? " " : "") << prefix << i;
    return ss.str();
  };
  write_lines(dir.file("big.jsonl"),
              {{{"text", big_text("alpha")}, {"label", "factual"}},
               {{"text", big_text("beta")}, {"label", "hallucinated"}}});

  ExperimentConfig cfg;
  cfg.data_path = dir.file("big.jsonl");
  cfg.schema = ngt::SchemaDescriptor::toy();
  cfg.split.train_fraction = 0.5;
  cfg.memory_budget_mb = 1;
  cfg.out_dir.clear();
  CHECK_THROWS_WITH(ngt::run_features(cfg, false),
                    Catch::Matchers::ContainsSubstring("memory budget exceeded"));

  // Through the sweep the same failure is recorded, not thrown.
  cfg.out_dir = dir.file("sweep");
  auto rows = ngt::run_sweep(cfg, {1});
  REQUIRE(rows.size() == 1);
  CHECK(!rows[0].ok);
  CHECK(rows[0].error.find("memory budget exceeded") != std::string::npos);
  std::string csv = slurp(cfg.out_dir + "/sweep.csv");
  CHECK(csv.find("1,--,--,--,--") != std::string::npos);
}

TEST_CASE("run_stats aggregates per subset and label") {
  TempDir dir("exp_stats_out");
  ExperimentConfig cfg = toy_config(dir.file("run"));
  auto rows = ngt::run_stats(cfg);
  REQUIRE(rows.size() == 2);  // toy corpus: (other, factual) and (other, hallucinated)
  for (const auto& r : rows) {
    CHECK(r.n_docs == 6);
    CHECK(r.avg_length > 5.0);
  }
  CHECK(slurp(cfg.out_dir + "/stats.txt").find("factual") != std::string::npos);
  auto j = nlohmann::json::parse(slurp(cfg.out_dir + "/stats.json"));
  CHECK(j["cells"].size() == 2);
  CHECK(j["ngram_order"] == 2);
}

TEST_CASE("whitespace-only documents are dropped and counted") {
  TempDir dir("exp_drop_out");
  write_lines(dir.file("gap.jsonl"),
              {{{"text", "one normal factual sentence here"}, {"label", "factual"}},
               {{"text", "   "}, {"label", "factual"}},
               {{"text", "a second factual line of text"}, {"label", "factual"}},
               {{"text", "utter nonsense about flying rocks"}, {"label", "hallucinated"}},
               {{"text", "more nonsense about singing stones"}, {"label", "hallucinated"}}});

  ExperimentConfig cfg;
  cfg.data_path = dir.file("gap.jsonl");
  cfg.schema = ngt::SchemaDescriptor::toy();
  cfg.split.train_fraction = 0.5;
  cfg.feature_length = 4;
  cfg.out_dir.clear();
  auto out = ngt::run_features(cfg, false);
  CHECK(out.dropped_empty_docs == 1);
  CHECK(out.train.size() + out.eval.size() == 4);
}
