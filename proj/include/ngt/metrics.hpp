#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace ngt {

/// Mann-Whitney AUROC: probability a random positive outscores a random
/// negative, ties credited 1/2. Concordant/tied pair counts are integers, so
/// the result is exact up to the single final division.
inline double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw std::invalid_argument("auroc: score/label count mismatch");
  std::vector<double> pos, neg;
  for (std::size_t i = 0; i < scores.size(); ++i)
    (labels[i] ? pos : neg).push_back(scores[i]);
  if (pos.empty() || neg.empty())
    throw std::invalid_argument("auroc: both classes required");
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());

  // For each positive, count negatives strictly below and equal via two
  // pointers over the sorted negatives: twice_sum = 2*below + equal.
  unsigned long long twice_sum = 0;
  std::size_t lo = 0, hi = 0;
  for (double p : pos) {
    while (lo < neg.size() && neg[lo] < p) ++lo;
    if (hi < lo) hi = lo;
    while (hi < neg.size() && neg[hi] <= p) ++hi;
    twice_sum += 2ull * lo + (hi - lo);
  }
  return static_cast<double>(twice_sum) /
         (2.0 * static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

/// Average precision: descending-score sweep, precision recorded at every
/// positive hit, averaged over the positive count. Equal scores keep their
/// input order (stable sort), making the sweep deterministic.
inline double aupr(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw std::invalid_argument("aupr: score/label count mismatch");
  std::size_t total_pos = 0;
  for (int y : labels) total_pos += (y != 0);
  if (total_pos == 0) throw std::invalid_argument("aupr: no positive labels");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });

  double ap = 0.0;
  std::size_t hits = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (labels[order[rank]]) {
      ++hits;
      ap += static_cast<double>(hits) / static_cast<double>(rank + 1);
    }
  }
  return ap / static_cast<double>(total_pos);
}

struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

struct ThresholdedScores {
  ConfusionCounts counts;
  double f1 = 0.0;
  double accuracy = 0.0;
};

inline ThresholdedScores confusion_and_scores(const std::vector<int>& preds,
                                              const std::vector<int>& labels) {
  if (preds.size() != labels.size())
    throw std::invalid_argument("confusion: prediction/label count mismatch");
  if (preds.empty()) throw std::invalid_argument("confusion: empty input");
  ThresholdedScores out;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] && labels[i]) ++out.counts.tp;
    else if (preds[i] && !labels[i]) ++out.counts.fp;
    else if (!preds[i] && labels[i]) ++out.counts.fn;
    else ++out.counts.tn;
  }
  std::size_t f1_den = 2 * out.counts.tp + out.counts.fp + out.counts.fn;
  out.f1 = f1_den ? 2.0 * static_cast<double>(out.counts.tp) /
                        static_cast<double>(f1_den)
                  : 0.0;
  out.accuracy = static_cast<double>(out.counts.tp + out.counts.tn) /
                 static_cast<double>(preds.size());
  return out;
}

struct EvalReport {
  std::string dataset;
  std::string method;
  std::optional<double> auroc;
  std::optional<double> aupr;
  double f1 = 0.0;
  double accuracy = 0.0;
  ConfusionCounts counts;
  nlohmann::json config_echo = nlohmann::json::object();
};

namespace detail {

inline std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace detail

/// Deterministic report serialization: alphabetical keys, metrics at fixed six
/// decimal places, absent optional metrics omitted entirely. Hand-rolled so
/// the same report always produces byte-identical output.
inline std::string report_to_json_string(const EvalReport& r) {
  std::string out = "{\n";
  out += "  \"accuracy\": " + detail::fixed6(r.accuracy) + ",\n";
  if (r.aupr) out += "  \"aupr\": " + detail::fixed6(*r.aupr) + ",\n";
  if (r.auroc) out += "  \"auroc\": " + detail::fixed6(*r.auroc) + ",\n";
  nlohmann::json cfg = r.config_echo.is_null() ? nlohmann::json::object() : r.config_echo;
  out += "  \"config\": " + cfg.dump(-1, ' ', false,
                                     nlohmann::json::error_handler_t::replace) + ",\n";
  out += "  \"counts\": {\"fn\": " + std::to_string(r.counts.fn) +
         ", \"fp\": " + std::to_string(r.counts.fp) +
         ", \"tn\": " + std::to_string(r.counts.tn) +
         ", \"tp\": " + std::to_string(r.counts.tp) + "},\n";
  out += "  \"dataset\": " + nlohmann::json(r.dataset).dump() + ",\n";
  out += "  \"f1\": " + detail::fixed6(r.f1) + ",\n";
  out += "  \"method\": " + nlohmann::json(r.method).dump() + "\n";
  out += "}\n";
  return out;
}

inline std::string report_table_row(const EvalReport& r) {
  auto cell = [](const std::optional<double>& v) {
    return v ? detail::fixed6(*v) : std::string("--");
  };
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-12s %-14s %8s %8s %8s %8s\n", r.dataset.c_str(),
                r.method.c_str(), cell(r.auroc).c_str(), cell(r.aupr).c_str(),
                detail::fixed6(r.f1).c_str(), detail::fixed6(r.accuracy).c_str());
  std::string row = "dataset      method           auroc     aupr       f1      acc\n";
  row += buf;
  return row;
}

/// Writes <path> (JSON) and <path>.txt (table row).
inline void emit_report(const EvalReport& r, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write report file " + path);
  os << report_to_json_string(r);
  os.close();
  std::ofstream ts(path + ".txt", std::ios::binary);
  if (!ts) throw std::runtime_error("cannot write report file " + path + ".txt");
  ts << report_table_row(r);
}

inline EvalReport read_report(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read report file " + path);
  nlohmann::json j;
  is >> j;
  EvalReport r;
  r.dataset = j.value("dataset", std::string());
  r.method = j.value("method", std::string());
  if (j.contains("auroc")) r.auroc = j.at("auroc").get<double>();
  if (j.contains("aupr")) r.aupr = j.at("aupr").get<double>();
  r.f1 = j.value("f1", 0.0);
  r.accuracy = j.value("accuracy", 0.0);
  if (j.contains("counts")) {
    r.counts.tp = j["counts"].value("tp", std::size_t{0});
    r.counts.fp = j["counts"].value("fp", std::size_t{0});
    r.counts.tn = j["counts"].value("tn", std::size_t{0});
    r.counts.fn = j["counts"].value("fn", std::size_t{0});
  }
  if (j.contains("config")) r.config_echo = j["config"];
  return r;
}

}  // namespace ngt
