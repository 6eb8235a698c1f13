#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ngt/ngram.hpp"
#include "ngt/prng.hpp"

namespace ngt {

enum class Label : int { factual = 0, hallucinated = 1 };
enum class Subset : int { general = 0, dialogue = 1, summary = 2, other = 3 };

inline std::string to_string(Label l) {
  return l == Label::hallucinated ? "hallucinated" : "factual";
}

inline std::string to_string(Subset s) {
  switch (s) {
    case Subset::general: return "general";
    case Subset::dialogue: return "dialogue";
    case Subset::summary: return "summary";
    default: return "other";
  }
}

inline Subset parse_subset(const std::string& s) {
  if (s == "general") return Subset::general;
  if (s == "dialogue") return Subset::dialogue;
  if (s == "summary") return Subset::summary;
  if (s == "other") return Subset::other;
  throw std::invalid_argument("unknown subset '" + s + "'");
}

struct Document {
  std::string id;
  std::string text;
  Label label = Label::factual;
  Subset subset = Subset::other;
  std::string ref_text;  // paired opposite-label text, or the record's context field
};

struct LabeledGroup {
  std::vector<Document> members;
  Label label = Label::factual;
  std::size_t target_size = 1;
  std::string id;
};

struct SplitConfig {
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
};

/// Field mapping for one JSONL flavor. Two modes:
///  - pair mode: hallucinated_field + factual_field both set, each record
///    yields two opposite-label documents referencing each other;
///  - single mode: text_field holds the text, label_field == positive_value
///    marks the hallucinated class, reference_field (optional) fills ref_text.
struct SchemaDescriptor {
  std::string name = "custom";
  std::string text_field;
  std::string label_field;
  std::string positive_value;
  std::string hallucinated_field;
  std::string factual_field;
  std::string reference_field;
  Subset subset = Subset::other;

  bool pair_mode() const { return !hallucinated_field.empty() && !factual_field.empty(); }

  void validate() const {
    if (pair_mode()) return;
    if (text_field.empty() || label_field.empty() || positive_value.empty())
      throw std::invalid_argument(
          "schema '" + name +
          "': need either hallucinated_field+factual_field or "
          "text_field+label_field+positive_value");
  }

  static SchemaDescriptor toy() {
    SchemaDescriptor s;
    s.name = "toy";
    s.text_field = "text";
    s.label_field = "label";
    s.positive_value = "hallucinated";
    s.subset = Subset::other;
    return s;
  }

  static SchemaDescriptor halueval_dialogue() {
    SchemaDescriptor s;
    s.name = "halueval-dialogue";
    s.hallucinated_field = "hallucinated_response";
    s.factual_field = "right_response";
    s.reference_field = "dialogue_history";
    s.subset = Subset::dialogue;
    return s;
  }

  static SchemaDescriptor halueval_summarization() {
    SchemaDescriptor s;
    s.name = "halueval-summarization";
    s.hallucinated_field = "hallucinated_summary";
    s.factual_field = "right_summary";
    s.reference_field = "document";
    s.subset = Subset::summary;
    return s;
  }

  static SchemaDescriptor halueval_general() {
    SchemaDescriptor s;
    s.name = "halueval-general";
    s.text_field = "chatgpt_response";
    s.label_field = "hallucination";
    s.positive_value = "yes";
    s.reference_field = "user_query";
    s.subset = Subset::general;
    return s;
  }

  static SchemaDescriptor preset(const std::string& name) {
    if (name == "toy") return toy();
    if (name == "halueval-dialogue") return halueval_dialogue();
    if (name == "halueval-summarization") return halueval_summarization();
    if (name == "halueval-general") return halueval_general();
    throw std::invalid_argument("unknown schema preset '" + name + "'");
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["name"] = name;
    j["text_field"] = text_field;
    j["label_field"] = label_field;
    j["positive_value"] = positive_value;
    j["hallucinated_field"] = hallucinated_field;
    j["factual_field"] = factual_field;
    j["reference_field"] = reference_field;
    j["subset"] = to_string(subset);
    return j;
  }

  static SchemaDescriptor from_json(const nlohmann::json& j) {
    SchemaDescriptor s;
    s.name = j.value("name", std::string("custom"));
    s.text_field = j.value("text_field", std::string());
    s.label_field = j.value("label_field", std::string());
    s.positive_value = j.value("positive_value", std::string());
    s.hallucinated_field = j.value("hallucinated_field", std::string());
    s.factual_field = j.value("factual_field", std::string());
    s.reference_field = j.value("reference_field", std::string());
    s.subset = parse_subset(j.value("subset", std::string("other")));
    s.validate();
    return s;
  }
};

namespace detail {

inline std::string json_field_as_text(const nlohmann::json& obj, const std::string& field,
                                      std::size_t line_no) {
  if (!obj.contains(field))
    throw std::runtime_error("line " + std::to_string(line_no) + ": missing field '" +
                             field + "'");
  const auto& v = obj.at(field);
  if (v.is_string()) return v.get<std::string>();
  // HaluEval "hallucination" is a bare yes/no string, but be tolerant of
  // booleans or numbers in custom data.
  if (v.is_boolean()) return v.get<bool>() ? "yes" : "no";
  return v.dump();
}

inline bool whitespace_only(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace detail

/// One document per (text, label) extracted per the schema; pair-mode records
/// yield two documents with opposite labels. Input order preserved; ids are
/// "<line>:<label>" with 1-based line numbers.
inline std::vector<Document> load_jsonl(const std::string& path,
                                        const SchemaDescriptor& schema) {
  schema.validate();
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open dataset file " + path);
  std::vector<Document> docs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::whitespace_only(line)) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("line " + std::to_string(line_no) +
                               ": malformed JSON: " + e.what());
    }
    if (!obj.is_object())
      throw std::runtime_error("line " + std::to_string(line_no) +
                               ": malformed JSON: not an object");
    if (schema.pair_mode()) {
      std::string bad = detail::json_field_as_text(obj, schema.hallucinated_field, line_no);
      std::string good = detail::json_field_as_text(obj, schema.factual_field, line_no);
      Document h{std::to_string(line_no) + ":hallucinated", bad, Label::hallucinated,
                 schema.subset, good};
      Document f{std::to_string(line_no) + ":factual", good, Label::factual,
                 schema.subset, bad};
      docs.push_back(std::move(h));
      docs.push_back(std::move(f));
    } else {
      std::string text = detail::json_field_as_text(obj, schema.text_field, line_no);
      std::string label_raw = detail::json_field_as_text(obj, schema.label_field, line_no);
      Label label =
          (label_raw == schema.positive_value) ? Label::hallucinated : Label::factual;
      Document d{std::to_string(line_no) + ":" + to_string(label), text, label,
                 schema.subset, std::string()};
      if (!schema.reference_field.empty() && obj.contains(schema.reference_field))
        d.ref_text = detail::json_field_as_text(obj, schema.reference_field, line_no);
      docs.push_back(std::move(d));
    }
  }
  return docs;
}

namespace detail {

/// Indices of docs with the given label, sorted by (hash(id, seed), id) so the
/// outcome depends on ids and seed but never on file order.
inline std::vector<std::size_t> hash_sorted_indices(const std::vector<Document>& docs,
                                                    Label label, std::uint64_t seed) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < docs.size(); ++i)
    if (docs[i].label == label) idx.push_back(i);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    std::uint64_t ha = hash_string(docs[a].id, seed);
    std::uint64_t hb = hash_string(docs[b].id, seed);
    if (ha != hb) return ha < hb;
    return docs[a].id < docs[b].id;
  });
  return idx;
}

}  // namespace detail

/// Stratified deterministic split. |train| = floor(fraction * |docs|) with
/// per-label quotas by largest remainder; when a label has >= 2 documents both
/// sides keep at least one of them (compensated on the other label when
/// possible so the total stays exact).
inline std::pair<std::vector<Document>, std::vector<Document>> split_train_eval(
    const std::vector<Document>& docs, const SplitConfig& cfg) {
  if (docs.empty()) throw std::invalid_argument("empty corpus");
  if (!(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0))
    throw std::invalid_argument("train_fraction must lie strictly between 0 and 1");

  const Label labels[2] = {Label::hallucinated, Label::factual};
  std::vector<std::size_t> per_label[2];
  for (int li = 0; li < 2; ++li)
    per_label[li] = detail::hash_sorted_indices(docs, labels[li], cfg.seed);

  std::size_t n = docs.size();
  std::size_t total_target =
      static_cast<std::size_t>(cfg.train_fraction * static_cast<double>(n) + 1e-9);

  std::size_t take[2];
  double remainder[2];
  std::size_t base_sum = 0;
  for (int li = 0; li < 2; ++li) {
    double q = cfg.train_fraction * static_cast<double>(per_label[li].size());
    take[li] = static_cast<std::size_t>(q + 1e-9);
    remainder[li] = q - static_cast<double>(take[li]);
    base_sum += take[li];
  }
  // Largest remainder for the leftover slots, hallucinated first on ties.
  for (std::size_t extra = base_sum; extra < total_target; ++extra) {
    int pick = (remainder[0] >= remainder[1]) ? 0 : 1;
    if (take[pick] >= per_label[pick].size()) pick = 1 - pick;
    ++take[pick];
    remainder[pick] = -1.0;
  }
  // Presence clamps: a label with >= 2 docs contributes to both sides.
  for (int li = 0; li < 2; ++li) {
    std::size_t sz = per_label[li].size();
    if (sz >= 2) {
      if (take[li] < 1) take[li] = 1;
      if (take[li] > sz - 1) take[li] = sz - 1;
    } else {
      if (take[li] > sz) take[li] = sz;
    }
  }
  // Restore the exact total if clamping drifted, respecting the other label's
  // own clamp bounds.
  std::size_t cur = take[0] + take[1];
  for (int li = 0; li < 2 && cur != total_target; ++li) {
    std::size_t sz = per_label[li].size();
    std::size_t lo = (sz >= 2) ? 1 : 0;
    std::size_t hi = (sz >= 2) ? sz - 1 : sz;
    while (cur < total_target && take[li] < hi) {
      ++take[li];
      ++cur;
    }
    while (cur > total_target && take[li] > lo) {
      --take[li];
      --cur;
    }
  }

  std::vector<char> in_train(docs.size(), 0);
  for (int li = 0; li < 2; ++li)
    for (std::size_t j = 0; j < take[li]; ++j) in_train[per_label[li][j]] = 1;

  std::vector<Document> train, eval;
  for (std::size_t i = 0; i < docs.size(); ++i)
    (in_train[i] ? train : eval).push_back(docs[i]);
  return {std::move(train), std::move(eval)};
}

/// Partition by label, deterministic shuffle per label, chunk into blocks of
/// group_size. A final partial block is kept as a smaller group.
inline std::vector<LabeledGroup> group_by_label(const std::vector<Document>& docs,
                                                std::size_t group_size,
                                                std::uint64_t seed) {
  if (group_size < 1) throw std::invalid_argument("group size must be >= 1");
  std::vector<LabeledGroup> groups;
  const Label labels[2] = {Label::hallucinated, Label::factual};
  for (Label label : labels) {
    auto idx = detail::hash_sorted_indices(docs, label, seed);
    for (std::size_t start = 0; start < idx.size(); start += group_size) {
      LabeledGroup g;
      g.label = label;
      g.target_size = group_size;
      g.id = to_string(label) + "-" + std::to_string(start / group_size + 1);
      std::size_t end = std::min(start + group_size, idx.size());
      for (std::size_t j = start; j < end; ++j) {
        const Document& d = docs[idx[j]];
        if (detail::whitespace_only(d.text))
          throw std::invalid_argument("document '" + d.id +
                                      "' has empty text and cannot join a group");
        g.members.push_back(d);
      }
      groups.push_back(std::move(g));
    }
  }
  return groups;
}

struct StatsRow {
  Subset subset = Subset::other;
  Label label = Label::factual;
  std::size_t n_docs = 0;
  double avg_length = 0.0;    // mean token count per document
  double avg_repeated = 0.0;  // mean count of distinct n-grams occurring >= 2x in a doc
};

/// Per (subset, label) cell: document count, mean token length, mean number of
/// distinct N-grams that repeat within a single document.
inline std::vector<StatsRow> corpus_stats(const std::vector<Document>& docs,
                                          std::size_t n) {
  std::map<std::pair<int, int>, StatsRow> cells;
  for (const auto& d : docs) {
    auto key = std::make_pair(static_cast<int>(d.subset), static_cast<int>(d.label));
    auto& row = cells[key];
    row.subset = d.subset;
    row.label = d.label;
    TokenSequence toks = tokenize(d.text);
    std::map<NGram, std::size_t> counts;
    for (auto& g : extract_ngrams(toks, n)) ++counts[g];
    std::size_t repeated = 0;
    for (const auto& [gram, c] : counts)
      if (c >= 2) ++repeated;
    row.n_docs += 1;
    row.avg_length += static_cast<double>(toks.size());
    row.avg_repeated += static_cast<double>(repeated);
  }
  std::vector<StatsRow> rows;
  for (auto& [key, row] : cells) {
    row.avg_length /= static_cast<double>(row.n_docs);
    row.avg_repeated /= static_cast<double>(row.n_docs);
    rows.push_back(row);
  }
  return rows;
}

inline std::string format_stats_table(const std::vector<StatsRow>& rows, std::size_t n) {
  std::ostringstream os;
  os << "subset      label         docs   avg_len   avg_repeated_" << n << "grams\n";
  for (const auto& r : rows) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-11s %-13s %5zu  %8.3f   %8.3f\n",
                  to_string(r.subset).c_str(), to_string(r.label).c_str(), r.n_docs,
                  r.avg_length, r.avg_repeated);
    os << buf;
  }
  return os.str();
}

inline nlohmann::json stats_to_json(const std::vector<StatsRow>& rows, std::size_t n) {
  nlohmann::json j;
  j["ngram_order"] = n;
  j["cells"] = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json cell;
    cell["subset"] = to_string(r.subset);
    cell["label"] = to_string(r.label);
    cell["n_docs"] = r.n_docs;
    cell["avg_length"] = r.avg_length;
    cell["avg_repeated"] = r.avg_repeated;
    j["cells"].push_back(cell);
  }
  return j;
}

}  // namespace ngt
