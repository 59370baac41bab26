#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "patchlab/common.hpp"

namespace patchlab {

// Shortest decimal text that round-trips the exact double. Used everywhere a
// float crosses a file boundary so identical runs produce identical bytes.
inline std::string fmt_double(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{}) throw IoError("bad number: " + std::string(s));
  return v;
}

struct ScoredExample {
  std::string image_id;
  int y_true = 0;      // {0,1}
  double score = 0.5;  // sigmoid probability, in (0,1)
};

struct ConfusionMetrics {
  double accuracy = 0.0;
  double sensitivity = 0.0;  // TP / (TP + FN)
  double specificity = 0.0;  // TN / (TN + FP)
};

namespace detail {
inline void require_both_classes(const std::vector<ScoredExample>& scored,
                                 const char* op) {
  long pos = 0, neg = 0;
  for (const auto& e : scored) (e.y_true ? pos : neg)++;
  if (pos == 0 || neg == 0)
    throw ContractError(std::string(op) +
                        ": needs at least one positive and one negative example");
}
}  // namespace detail

// Threshold rule is "predict 1 iff score >= t".
inline ConfusionMetrics confusion_at_threshold(const std::vector<ScoredExample>& scored,
                                               double t) {
  detail::require_both_classes(scored, "confusion_at_threshold");
  long tp = 0, tn = 0, fp = 0, fn = 0;
  for (const auto& e : scored) {
    bool pred = e.score >= t;
    if (e.y_true) (pred ? tp : fn)++;
    else (pred ? fp : tn)++;
  }
  ConfusionMetrics m;
  m.accuracy = static_cast<double>(tp + tn) / static_cast<double>(scored.size());
  m.sensitivity = static_cast<double>(tp) / static_cast<double>(tp + fn);
  m.specificity = static_cast<double>(tn) / static_cast<double>(tn + fp);
  return m;
}

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  bool operator==(const RocPoint&) const = default;
};

// Threshold sweep over the distinct scores descending, plus a sentinel above
// the max so the curve starts at (0,0). Ties collapse into a single step.
inline std::vector<RocPoint> roc_curve(std::vector<ScoredExample> scored) {
  detail::require_both_classes(scored, "roc_curve");
  std::sort(scored.begin(), scored.end(),
            [](const ScoredExample& a, const ScoredExample& b) { return a.score > b.score; });
  long n_pos = 0, n_neg = 0;
  for (const auto& e : scored) (e.y_true ? n_pos : n_neg)++;

  std::vector<RocPoint> pts;
  pts.push_back({0.0, 0.0});
  long tp = 0, fp = 0;
  for (std::size_t i = 0; i < scored.size();) {
    std::size_t j = i;
    while (j < scored.size() && scored[j].score == scored[i].score) {
      (scored[j].y_true ? tp : fp)++;
      ++j;
    }
    pts.push_back({static_cast<double>(fp) / n_neg, static_cast<double>(tp) / n_pos});
    i = j;
  }
  return pts;
}

inline void validate_roc(const std::vector<RocPoint>& roc) {
  if (roc.size() < 2 || roc.front() != RocPoint{0.0, 0.0} ||
      roc.back() != RocPoint{1.0, 1.0})
    throw ContractError("ROC curve must run from (0,0) to (1,1)");
  for (std::size_t i = 1; i < roc.size(); ++i)
    if (roc[i].fpr < roc[i - 1].fpr || roc[i].tpr < roc[i - 1].tpr)
      throw ContractError("ROC coordinates must be non-decreasing");
}

inline double auc_trapezoid(const std::vector<RocPoint>& roc) {
  double a = 0.0;
  for (std::size_t i = 1; i < roc.size(); ++i)
    a += (roc[i].fpr - roc[i - 1].fpr) * (roc[i].tpr + roc[i - 1].tpr) * 0.5;
  return a;
}

// Per-configuration evaluation result; the JSON form of this struct is the
// report file interface.
struct EvalReport {
  std::string config_name;
  std::string scale;  // "large"/"medium"/"small", or "all" for FULL_FACE
  std::string split;
  long n_pos = 0;
  long n_neg = 0;
  ConfusionMetrics at_half;  // threshold 0.5
  std::vector<RocPoint> roc;
  double auc = 0.0;
  std::string plot_path;

  static EvalReport from_scores(std::string config_name, std::string scale,
                                std::string split,
                                const std::vector<ScoredExample>& scored) {
    EvalReport r;
    r.config_name = std::move(config_name);
    r.scale = std::move(scale);
    r.split = std::move(split);
    for (const auto& e : scored) (e.y_true ? r.n_pos : r.n_neg)++;
    r.at_half = confusion_at_threshold(scored, 0.5);
    r.roc = roc_curve(scored);
    validate_roc(r.roc);
    r.auc = auc_trapezoid(r.roc);
    return r;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["schema"] = "patchlab.report.v1";
    j["config"] = config_name;
    j["scale"] = scale;
    j["split"] = split;
    j["n_pos"] = n_pos;
    j["n_neg"] = n_neg;
    j["accuracy"] = at_half.accuracy;
    j["sensitivity"] = at_half.sensitivity;
    j["specificity"] = at_half.specificity;
    j["auc"] = auc;
    auto pts = nlohmann::ordered_json::array();
    for (const auto& p : roc) pts.push_back({p.fpr, p.tpr});
    j["roc"] = pts;
    j["plot_path"] = plot_path;
    return j;
  }

  static EvalReport from_json(const nlohmann::json& j) {
    if (!j.contains("schema") || j.at("schema") != "patchlab.report.v1")
      throw ConfigError("report: unsupported or missing schema");
    EvalReport r;
    r.config_name = j.at("config").get<std::string>();
    r.scale = j.at("scale").get<std::string>();
    r.split = j.value("split", "");
    r.n_pos = j.at("n_pos").get<long>();
    r.n_neg = j.at("n_neg").get<long>();
    r.at_half.accuracy = j.at("accuracy").get<double>();
    r.at_half.sensitivity = j.at("sensitivity").get<double>();
    r.at_half.specificity = j.at("specificity").get<double>();
    r.auc = j.at("auc").get<double>();
    for (const auto& p : j.at("roc"))
      r.roc.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    r.plot_path = j.value("plot_path", "");
    return r;
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write report " + path);
    out << to_json().dump(2) << "\n";
  }
  static EvalReport load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open report " + path);
    nlohmann::json j;
    in >> j;
    return from_json(j);
  }
};

inline void save_scores(const std::vector<ScoredExample>& scored, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write scores " + path);
  out << "image_id,y_true,score\n";
  for (const auto& e : scored)
    out << e.image_id << "," << e.y_true << "," << fmt_double(e.score) << "\n";
}

inline std::vector<ScoredExample> load_scores(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open scores " + path);
  std::vector<ScoredExample> out;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto cols = split(line, ',');
    if (cols.size() != 3) throw IoError("bad scores row: " + line);
    ScoredExample e;
    e.image_id = cols[0];
    e.y_true = std::stoi(cols[1]);
    e.score = parse_double(cols[2]);
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace patchlab
