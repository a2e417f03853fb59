#include "fgvc/knn.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace fgvc {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::string vote(const std::vector<std::string>& ranked_labels) {
  if (ranked_labels.empty()) throw InvalidArgument("vote over no neighbours");
  std::map<std::string, std::size_t> counts;
  std::size_t best = 0;
  for (const auto& l : ranked_labels) best = std::max(best, ++counts[l]);
  for (const auto& l : ranked_labels)
    if (counts[l] == best) return l;
  return ranked_labels.front();
}

KnnIndex KnnIndex::build(EmbeddingMatrix train, std::vector<std::string> labels, Metric metric, int k) {
  metric.validate();
  if (train.size() == 0) throw InvalidArgument("kNN training set is empty");
  if (static_cast<std::size_t>(train.size()) != labels.size())
    throw InvalidArgument("kNN has " + std::to_string(labels.size()) + " labels for " + std::to_string(train.size()) +
                          " training rows");
  if (k < 1 || k > train.size())
    throw InvalidArgument("k=" + std::to_string(k) + " is outside [1, " + std::to_string(train.size()) + "]");
  train.validate();

  KnnIndex index;
  index.prepared_ = prepare_rows(metric, train.rows);
  index.train_ = std::move(train);
  index.labels_ = std::move(labels);
  index.metric_ = metric;
  index.k_ = k;
  return index;
}

void KnnIndex::check_dim(Eigen::Index dim) const {
  if (dim != train_.dim())
    throw DimensionMismatch("query dimension " + std::to_string(dim) + " does not match training dimension " +
                            std::to_string(train_.dim()));
}

Prediction KnnIndex::classify_prepared(const Eigen::VectorXd& query) const {
  const Eigen::Index n = prepared_.rows();
  const Eigen::Index dim = prepared_.cols();
  std::vector<std::pair<double, Eigen::Index>> d(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i)
    d[static_cast<std::size_t>(i)] = {prepared_distance(metric_, query.data(), &prepared_(i, 0), dim), i};

  const auto kth = d.begin() + k_;
  std::partial_sort(d.begin(), kth, d.end());

  Prediction p;
  std::vector<std::string> ranked;
  for (auto it = d.begin(); it != kth; ++it) {
    p.neighbors.push_back({it->second, train_.row_ids[static_cast<std::size_t>(it->second)], it->first});
    ranked.push_back(labels_[static_cast<std::size_t>(it->second)]);
  }
  p.label = vote(ranked);
  return p;
}

std::vector<Prediction> KnnIndex::classify_batch(const RowMatrix<float>& queries, int jobs) const {
  check_dim(queries.cols());
  const Eigen::Index n = queries.rows();
  std::vector<Prediction> out(static_cast<std::size_t>(n));
  auto run = [&](Eigen::Index begin, Eigen::Index end) {
    for (Eigen::Index i = begin; i < end; ++i) out[static_cast<std::size_t>(i)] = classify(queries.row(i));
  };
  const Eigen::Index workers = std::clamp<Eigen::Index>(jobs, 1, std::max<Eigen::Index>(n, 1));
  if (workers == 1) {
    run(0, n);
    return out;
  }
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  for (Eigen::Index w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      try {
        run(w * n / workers, (w + 1) * n / workers);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

fs::path labels_sidecar(const fs::path& index_path) { return index_path.string() + ".labels.json"; }

void KnnIndex::save(const fs::path& path) const {
  write_embeddings(train_, path);
  json j;
  j["metric"] = to_string(metric_.kind);
  j["epsilon"] = metric_.epsilon;
  j["k"] = k_;
  j["labels"] = labels_;
  write_file_atomic(labels_sidecar(path), j.dump(2) + "\n");
}

KnnIndex KnnIndex::load(const fs::path& path) {
  auto train = read_embeddings(path);
  std::ifstream in(labels_sidecar(path));
  if (!in) throw IoError("cannot open " + labels_sidecar(path).string());
  std::ostringstream ss;
  ss << in.rdbuf();
  Metric metric;
  int k = 1;
  std::vector<std::string> labels;
  try {
    const auto j = json::parse(ss.str());
    metric.kind = parse_metric(j.at("metric").get<std::string>());
    if (j.contains("epsilon")) metric.epsilon = j["epsilon"].get<double>();
    k = j.at("k").get<int>();
    labels = j.at("labels").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw FormatError(labels_sidecar(path).string() + ": " + e.what());
  }
  return build(std::move(train), std::move(labels), metric, k);
}

}  // namespace fgvc
