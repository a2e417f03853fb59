#include "fgvc/eval.hpp"

#include <chrono>
#include <cstdio>
#include <map>
#include <sstream>

#include <json.hpp>

#include "fgvc/knn.hpp"
#include "fgvc/random.hpp"

namespace fgvc {

using json = nlohmann::ordered_json;

std::string to_string(FoldLevel level) { return level == FoldLevel::View ? "view" : "instance"; }

std::vector<std::size_t> FoldPlan::members(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignment.size(); ++i)
    if (assignment[i] == fold) out.push_back(i);
  return out;
}

std::vector<std::size_t> FoldPlan::fold_sizes() const {
  std::vector<std::size_t> out(static_cast<std::size_t>(fold_count), 0);
  for (int f : assignment) ++out[static_cast<std::size_t>(f)];
  return out;
}

FoldPlan make_folds(const DatasetManifest& manifest, std::uint64_t seed, int fold_count, bool stratified,
                    FoldLevel level) {
  if (fold_count < 2) throw InvalidArgument("need at least 2 folds");
  if (manifest.view_count() < static_cast<std::size_t>(fold_count))
    throw InvalidArgument("cannot split " + std::to_string(manifest.view_count()) + " views into " +
                          std::to_string(fold_count) + " folds");

  FoldPlan plan;
  plan.seed = seed;
  plan.fold_count = fold_count;
  plan.stratified = stratified;
  plan.level = level;
  for (const auto& e : manifest.entries) {
    plan.row_ids.push_back({e.instance, e.view});
    plan.labels.push_back(e.category);
  }
  plan.assignment.assign(manifest.entries.size(), -1);

  // Units: single rows, or all rows of one (category, instance).
  std::vector<std::vector<std::size_t>> units;
  std::vector<std::string> unit_stratum;
  {
    std::map<std::pair<std::string, std::string>, std::size_t> by_instance;
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
      const auto& e = manifest.entries[i];
      if (level == FoldLevel::Instance) {
        auto [it, fresh] = by_instance.emplace(std::make_pair(e.category, e.instance), units.size());
        if (fresh) {
          units.emplace_back();
          unit_stratum.push_back(stratified ? e.category : std::string());
        }
        units[it->second].push_back(i);
      } else {
        units.push_back({i});
        unit_stratum.push_back(stratified ? e.category : std::string());
      }
    }
  }
  if (units.size() < static_cast<std::size_t>(fold_count))
    throw InvalidArgument("cannot split " + std::to_string(units.size()) + " " + to_string(level) + " units into " +
                          std::to_string(fold_count) + " folds");

  std::map<std::string, std::vector<std::size_t>> strata;
  for (std::size_t u = 0; u < units.size(); ++u) strata[unit_stratum[u]].push_back(u);

  Rng rng(seed);
  std::size_t deal = 0;
  for (auto& [name, members] : strata) {
    rng.shuffle(members.begin(), members.end());
    for (std::size_t u : members) {
      const int fold = static_cast<int>(deal++ % static_cast<std::size_t>(fold_count));
      for (std::size_t row : units[u]) plan.assignment[row] = fold;
    }
  }
  return plan;
}

double accuracy(std::span<const std::string> predictions, std::span<const std::string> truth) {
  if (predictions.empty()) throw InvalidArgument("accuracy over no predictions");
  if (predictions.size() != truth.size())
    throw InvalidArgument("accuracy needs equal lengths (" + std::to_string(predictions.size()) + " vs " +
                          std::to_string(truth.size()) + ")");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) hits += predictions[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

EvalReport cross_validate(const EmbeddingMatrix& embeddings, std::span<const std::string> labels, const FoldPlan& plan,
                          const Metric& metric, int k, const CrossValidationOptions& options) {
  using clock = std::chrono::steady_clock;
  if (labels.size() != plan.row_ids.size())
    throw InvalidArgument("cross-validation has " + std::to_string(labels.size()) + " labels for " +
                          std::to_string(plan.row_ids.size()) + " plan rows");
  std::vector<Eigen::Index> rows;
  try {
    rows = embeddings.index_of(plan.row_ids);
  } catch (const AlignmentError& e) {
    throw EvaluationError(std::string("embeddings do not cover the fold plan: ") + e.what());
  }

  EvalReport report;
  report.config.pipeline = embeddings.encoder_id;
  report.config.modality = to_string(embeddings.modality);
  auto fusion = embeddings.provenance.find("fusion");
  report.config.fusion = fusion == embeddings.provenance.end() ? "-" : fusion->second;
  report.config.metric = metric;
  report.config.k = k;
  report.config.seed = plan.seed;
  report.config.folds = plan.fold_count;
  report.config.stratified = plan.stratified;
  report.config.level = plan.level;
  report.config.config_hash = embeddings.config_hash;
  report.fallback_events = options.fallback_events;
  report.fold_sizes = plan.fold_sizes();

  double build_seconds = 0.0, classify_seconds = 0.0;
  const auto t_all = clock::now();
  for (int fold = 0; fold < plan.fold_count; ++fold) {
    std::vector<std::size_t> test, train;
    for (std::size_t i = 0; i < plan.assignment.size(); ++i) (plan.assignment[i] == fold ? test : train).push_back(i);
    if (test.empty()) throw EvaluationError("fold " + std::to_string(fold) + " is empty");

    EmbeddingMatrix train_m;
    train_m.encoder_id = embeddings.encoder_id;
    train_m.modality = embeddings.modality;
    train_m.rows.resize(static_cast<Eigen::Index>(train.size()), embeddings.dim());
    std::vector<std::string> train_labels;
    for (std::size_t t = 0; t < train.size(); ++t) {
      train_m.rows.row(static_cast<Eigen::Index>(t)) = embeddings.rows.row(rows[train[t]]);
      train_m.row_ids.push_back(plan.row_ids[train[t]]);
      train_labels.push_back(labels[train[t]]);
    }
    RowMatrix<float> queries(static_cast<Eigen::Index>(test.size()), embeddings.dim());
    std::vector<std::string> truth;
    for (std::size_t t = 0; t < test.size(); ++t) {
      queries.row(static_cast<Eigen::Index>(t)) = embeddings.rows.row(rows[test[t]]);
      truth.push_back(labels[test[t]]);
    }

    auto t0 = clock::now();
    const auto index = KnnIndex::build(std::move(train_m), std::move(train_labels), metric, k);
    auto t1 = clock::now();
    const auto predictions = index.classify_batch(queries, options.jobs);
    auto t2 = clock::now();
    build_seconds += std::chrono::duration<double>(t1 - t0).count();
    classify_seconds += std::chrono::duration<double>(t2 - t1).count();

    std::vector<std::string> predicted;
    for (const auto& p : predictions) predicted.push_back(p.label);
    report.per_fold_accuracy.push_back(accuracy(predicted, truth));
  }
  double sum = 0.0;
  for (double a : report.per_fold_accuracy) sum += a;
  report.mean_accuracy = sum / static_cast<double>(report.per_fold_accuracy.size());
  report.timings = {{"index_build", build_seconds},
                    {"classify", classify_seconds},
                    {"total", std::chrono::duration<double>(clock::now() - t_all).count()}};
  return report;
}

std::string EvalReport::to_json(bool include_timings) const {
  json j;
  j["config"] = {{"pipeline", config.pipeline},
                 {"modality", config.modality},
                 {"fusion", config.fusion},
                 {"metric", to_string(config.metric.kind)},
                 {"epsilon", config.metric.epsilon},
                 {"k", config.k},
                 {"folds", config.folds},
                 {"seed", config.seed},
                 {"stratified", config.stratified},
                 {"fold_level", to_string(config.level)},
                 {"config_hash", config.config_hash}};
  j["per_fold_accuracy"] = per_fold_accuracy;
  j["fold_sizes"] = fold_sizes;
  j["mean_accuracy"] = mean_accuracy;
  j["fallback_events"] = fallback_events;
  if (include_timings) {
    json t = json::object();
    for (const auto& [stage, seconds] : timings) t[stage] = seconds;
    j["timings"] = t;
  }
  return j.dump(2) + "\n";
}

namespace {

std::string table_header() {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-24s %-8s %-8s %-14s %3s %5s %8s\n", "config", "modality", "fusion", "metric", "k",
                "folds", "accuracy");
  return std::string(buf) + std::string(76, '-') + "\n";
}

std::string table_row(const EvalReport& r) {
  char buf[200];
  std::snprintf(buf, sizeof buf, "%-24s %-8s %-8s %-14s %3d %5d %8.4f\n", r.config.pipeline.c_str(),
                r.config.modality.c_str(), r.config.fusion.c_str(), to_string(r.config.metric.kind).c_str(), r.config.k,
                r.config.folds, r.mean_accuracy);
  return buf;
}

}  // namespace

std::string EvalReport::to_table() const { return table_header() + table_row(*this); }

std::string reports_table(std::span<const EvalReport> reports) {
  std::string out = table_header();
  for (const auto& r : reports) out += table_row(r);
  return out;
}

}  // namespace fgvc
