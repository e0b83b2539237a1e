#include "iotad/models.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "iotad/error.hpp"
#include "iotad/rng.hpp"

namespace iotad {

const char* to_string(Label label) {
  return label == Label::kBenign ? "BENIGN" : "ANOMALOUS";
}

// ---------------------------------------------------------------------------
// normalization

Normalizer Normalizer::fit(const std::vector<FeatureVector>& rows) {
  if (rows.empty()) fail(ErrorCode::kEmptyDataset, "cannot fit on zero rows");
  Normalizer norm;
  for (std::size_t i = 0; i < kFeatureDim; ++i) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& row : rows) {
      lo = std::min(lo, row[i]);
      hi = std::max(hi, row[i]);
    }
    norm.mins[i] = lo;
    norm.maxs[i] = hi;
  }
  return norm;
}

FeatureVector Normalizer::apply(const FeatureVector& fv) const {
  FeatureVector out;
  for (std::size_t i = 0; i < kFeatureDim; ++i) {
    const double span = maxs[i] - mins[i];
    out[i] = span == 0.0 ? 0.5 : (fv[i] - mins[i]) / span;
  }
  return out;
}

std::pair<LabeledDataset, Normalizer> normalize(const LabeledDataset& dataset) {
  if (dataset.rows.empty())
    fail(ErrorCode::kEmptyDataset, "cannot normalize an empty dataset");
  Normalizer norm = Normalizer::fit(dataset.rows);
  LabeledDataset out;
  out.labels = dataset.labels;
  out.rows.reserve(dataset.rows.size());
  for (const auto& row : dataset.rows) out.rows.push_back(norm.apply(row));
  return {std::move(out), norm};
}

// ---------------------------------------------------------------------------
// kNN

KnnModel KnnModel::train(const LabeledDataset& dataset, int k) {
  if (dataset.rows.empty()) fail(ErrorCode::kEmptyDataset, "kNN needs rows");
  if (k < 1 || k % 2 == 0)
    fail(ErrorCode::kInvalidArgument, "k must be a positive odd integer");
  if (std::size_t(k) > dataset.rows.size())
    fail(ErrorCode::kInvalidArgument, "k exceeds the training row count");
  auto [normalized, norm] = normalize(dataset);
  return KnnModel(k, norm, std::move(normalized.rows),
                  std::move(normalized.labels));
}

Label KnnModel::predict(const FeatureVector& raw) const {
  const FeatureVector q = norm_.apply(raw);
  const std::size_t n = rows_.size();

  std::vector<std::pair<double, std::size_t>> dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    double d2 = 0.0;
    for (std::size_t j = 0; j < kFeatureDim; ++j) {
      const double d = q[j] - rows_[i][j];
      d2 += d * d;
    }
    dist[i] = {d2, i};
  }
  // Distance ties break toward the earlier training-row index.
  const auto kth = dist.begin() + k_;
  std::nth_element(dist.begin(), kth - 1, dist.end());
  std::size_t votes_anomalous = 0;
  std::sort(dist.begin(), kth);
  for (int i = 0; i < k_; ++i)
    if (labels_[dist[std::size_t(i)].second] == Label::kAnomalous)
      votes_anomalous++;
  return 2 * votes_anomalous > std::size_t(k_) ? Label::kAnomalous
                                               : Label::kBenign;
}

// ---------------------------------------------------------------------------
// decision trees

Label Tree::predict(const FeatureVector& normalized) const {
  std::size_t node = 0;
  while (!nodes[node].leaf) {
    node = normalized[nodes[node].feature] <= nodes[node].threshold
               ? std::size_t(nodes[node].left)
               : std::size_t(nodes[node].right);
  }
  return nodes[node].label;
}

namespace {

// Exact Gini split selection. For a split with child class counts
// (bL, aL | bR, aR) the weighted child impurity is minimized exactly when
// S = ((bL^2+aL^2)*nR + (bR^2+aR^2)*nL) / (nL*nR) is maximized; improvement
// over the parent holds iff S_num * n > (b^2+a^2) * S_den. Integer
// comparisons keep tie handling deterministic and oracle-exact.
struct SplitScore {
  __int128 num = 0;
  std::uint64_t den = 1;

  bool better_than(const SplitScore& other) const {
    return num * __int128(other.den) > other.num * __int128(den);
  }
};

struct BestSplit {
  bool found = false;
  std::size_t feature = 0;
  double threshold = 0.0;
  SplitScore score;
};

class TreeBuilder {
 public:
  TreeBuilder(const std::vector<FeatureVector>& rows,
              const std::vector<Label>& labels, DtParams params,
              int features_per_split, SplitMix64* rng)
      : rows_(rows), labels_(labels), params_(params),
        features_per_split_(features_per_split), rng_(rng) {}

  Tree build(std::vector<std::size_t> indices) {
    Tree tree;
    grow(tree, std::move(indices), 0);
    return tree;
  }

 private:
  std::size_t grow(Tree& tree, std::vector<std::size_t> indices, int depth) {
    std::size_t benign = 0, anomalous = 0;
    for (std::size_t idx : indices)
      (labels_[idx] == Label::kBenign ? benign : anomalous)++;

    const std::size_t node_index = tree.nodes.size();
    tree.nodes.emplace_back();
    tree.nodes[node_index].count_benign = benign;
    tree.nodes[node_index].count_anomalous = anomalous;
    // Exact label ties fail safe to ANOMALOUS.
    tree.nodes[node_index].label =
        benign > anomalous ? Label::kBenign : Label::kAnomalous;

    const std::size_t n = indices.size();
    const bool pure = benign == 0 || anomalous == 0;
    if (pure || depth >= params_.max_depth ||
        n < 2 * std::size_t(params_.min_samples_leaf)) {
      return node_index;
    }

    const BestSplit best = find_best_split(indices, benign, anomalous);
    if (!best.found) return node_index;

    std::vector<std::size_t> left, right;
    left.reserve(n);
    right.reserve(n);
    for (std::size_t idx : indices) {
      (rows_[idx][best.feature] <= best.threshold ? left : right)
          .push_back(idx);
    }
    indices.clear();
    indices.shrink_to_fit();

    const std::size_t left_index = grow(tree, std::move(left), depth + 1);
    const std::size_t right_index = grow(tree, std::move(right), depth + 1);
    DtNode& node = tree.nodes[node_index];
    node.leaf = false;
    node.feature = best.feature;
    node.threshold = best.threshold;
    node.left = std::int32_t(left_index);
    node.right = std::int32_t(right_index);
    return node_index;
  }

  std::vector<std::size_t> candidate_features() {
    std::vector<std::size_t> features(kFeatureDim);
    std::iota(features.begin(), features.end(), 0);
    if (!rng_ || features_per_split_ >= int(kFeatureDim)) return features;
    // Partial Fisher-Yates, then sorted so tie resolution stays by index.
    for (int i = 0; i < features_per_split_; ++i) {
      const std::size_t j =
          std::size_t(i) + std::size_t(rng_->below(kFeatureDim - std::size_t(i)));
      std::swap(features[std::size_t(i)], features[j]);
    }
    features.resize(std::size_t(features_per_split_));
    std::sort(features.begin(), features.end());
    return features;
  }

  BestSplit find_best_split(const std::vector<std::size_t>& indices,
                            std::size_t benign, std::size_t anomalous) {
    const std::size_t n = indices.size();
    const std::uint64_t msl = std::uint64_t(params_.min_samples_leaf);
    const __int128 parent_sq =
        __int128(benign) * __int128(benign) +
        __int128(anomalous) * __int128(anomalous);

    BestSplit best;
    std::vector<std::pair<double, Label>> values(n);
    for (const std::size_t f : candidate_features()) {
      for (std::size_t i = 0; i < n; ++i)
        values[i] = {rows_[indices[i]][f], labels_[indices[i]]};
      std::sort(values.begin(), values.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });

      std::uint64_t bl = 0, al = 0;
      std::size_t i = 0;
      while (i < n) {
        // Consume one group of equal feature values.
        const double v = values[i].first;
        while (i < n && values[i].first == v) {
          (values[i].second == Label::kBenign ? bl : al)++;
          ++i;
        }
        if (i == n) break;

        const std::uint64_t nl = bl + al;
        const std::uint64_t nr = std::uint64_t(n) - nl;
        if (nl < msl || nr < msl) continue;

        const std::uint64_t br = benign - bl;
        const std::uint64_t ar = anomalous - al;
        SplitScore score;
        score.num = (__int128(bl) * bl + __int128(al) * al) * nr +
                    (__int128(br) * br + __int128(ar) * ar) * nl;
        score.den = nl * nr;

        // Positive impurity decrease required.
        if (!(score.num * __int128(n) > parent_sq * __int128(score.den)))
          continue;

        if (!best.found || score.better_than(best.score)) {
          best.found = true;
          best.feature = f;
          best.threshold = (v + values[i].first) / 2.0;
          best.score = score;
        }
      }
    }
    return best;
  }

  const std::vector<FeatureVector>& rows_;
  const std::vector<Label>& labels_;
  DtParams params_;
  int features_per_split_;
  SplitMix64* rng_;
};

}  // namespace

DecisionTreeModel DecisionTreeModel::train(const LabeledDataset& dataset,
                                           DtParams params) {
  if (dataset.rows.empty())
    fail(ErrorCode::kEmptyDataset, "decision tree needs rows");
  auto [normalized, norm] = normalize(dataset);

  std::vector<std::size_t> indices(normalized.rows.size());
  std::iota(indices.begin(), indices.end(), 0);
  TreeBuilder builder(normalized.rows, normalized.labels, params,
                      int(kFeatureDim), nullptr);
  return DecisionTreeModel(builder.build(std::move(indices)), norm, params);
}

Label DecisionTreeModel::predict(const FeatureVector& raw) const {
  return tree_.predict(norm_.apply(raw));
}

RandomForestModel RandomForestModel::train(const LabeledDataset& dataset,
                                           RfParams params) {
  if (dataset.rows.empty())
    fail(ErrorCode::kEmptyDataset, "random forest needs rows");
  if (params.n_trees < 1)
    fail(ErrorCode::kInvalidArgument, "n_trees must be >= 1");
  auto [normalized, norm] = normalize(dataset);
  const std::size_t n = normalized.rows.size();

  std::vector<Tree> trees;
  trees.reserve(std::size_t(params.n_trees));
  for (int t = 0; t < params.n_trees; ++t) {
    SplitMix64 rng(mix_seed(params.seed, std::uint64_t(t)));
    std::vector<std::size_t> indices(n);
    if (params.bootstrap) {
      for (std::size_t i = 0; i < n; ++i) indices[i] = rng.below(n);
    } else {
      std::iota(indices.begin(), indices.end(), 0);
    }
    TreeBuilder builder(normalized.rows, normalized.labels, params.tree,
                        params.features_per_split, &rng);
    trees.push_back(builder.build(std::move(indices)));
  }
  return RandomForestModel(std::move(trees), norm, params);
}

Label RandomForestModel::predict(const FeatureVector& raw) const {
  const FeatureVector q = norm_.apply(raw);
  std::size_t votes_anomalous = 0;
  for (const auto& tree : trees_)
    if (tree.predict(q) == Label::kAnomalous) votes_anomalous++;
  return 2 * votes_anomalous >= trees_.size() ? Label::kAnomalous
                                              : Label::kBenign;
}

// ---------------------------------------------------------------------------
// autoencoder

AeNet AeNet::zeros(int hidden) {
  AeNet net;
  net.hidden = hidden;
  net.w1.assign(std::size_t(hidden) * kFeatureDim, 0.0);
  net.b1.assign(std::size_t(hidden), 0.0);
  net.w2.assign(kFeatureDim * std::size_t(hidden), 0.0);
  net.b2.assign(kFeatureDim, 0.0);
  return net;
}

AeNet AeNet::random_init(int hidden, std::uint64_t seed) {
  AeNet net = zeros(hidden);
  SplitMix64 rng(seed);
  for (auto* vec : {&net.w1, &net.b1, &net.w2, &net.b2})
    for (double& w : *vec) w = rng.uniform(-0.5, 0.5);
  return net;
}

std::vector<double> AeNet::reconstruct(const FeatureVector& x) const {
  const std::size_t h = std::size_t(hidden);
  std::vector<double> a(h);
  for (std::size_t k = 0; k < h; ++k) {
    double z = b1[k];
    for (std::size_t i = 0; i < kFeatureDim; ++i)
      z += w1[k * kFeatureDim + i] * x[i];
    a[k] = std::tanh(z);
  }
  std::vector<double> y(kFeatureDim);
  for (std::size_t j = 0; j < kFeatureDim; ++j) {
    double v = b2[j];
    for (std::size_t k = 0; k < h; ++k) v += w2[j * h + k] * a[k];
    y[j] = v;
  }
  return y;
}

double AeNet::sample_error(const FeatureVector& x) const {
  const auto y = reconstruct(x);
  double err = 0.0;
  for (std::size_t j = 0; j < kFeatureDim; ++j) {
    const double d = y[j] - x[j];
    err += d * d;
  }
  return err / double(kFeatureDim);
}

double AeNet::batch_loss(const std::vector<FeatureVector>& rows) const {
  double loss = 0.0;
  for (const auto& row : rows) loss += sample_error(row);
  return rows.empty() ? 0.0 : loss / double(rows.size());
}

AeNet AeNet::batch_gradient(const std::vector<FeatureVector>& rows) const {
  const std::size_t h = std::size_t(hidden);
  AeNet grad = zeros(hidden);
  const double scale = 1.0 / (double(rows.size()) * double(kFeatureDim));

  std::vector<double> a(h), dz(h);
  for (const auto& x : rows) {
    for (std::size_t k = 0; k < h; ++k) {
      double z = b1[k];
      for (std::size_t i = 0; i < kFeatureDim; ++i)
        z += w1[k * kFeatureDim + i] * x[i];
      a[k] = std::tanh(z);
    }
    std::fill(dz.begin(), dz.end(), 0.0);
    for (std::size_t j = 0; j < kFeatureDim; ++j) {
      double y = b2[j];
      for (std::size_t k = 0; k < h; ++k) y += w2[j * h + k] * a[k];
      const double dy = 2.0 * (y - x[j]) * scale;
      grad.b2[j] += dy;
      for (std::size_t k = 0; k < h; ++k) {
        grad.w2[j * h + k] += dy * a[k];
        dz[k] += dy * w2[j * h + k];
      }
    }
    for (std::size_t k = 0; k < h; ++k) {
      const double d = dz[k] * (1.0 - a[k] * a[k]);
      grad.b1[k] += d;
      for (std::size_t i = 0; i < kFeatureDim; ++i)
        grad.w1[k * kFeatureDim + i] += d * x[i];
    }
  }
  return grad;
}

AutoencoderModel AutoencoderModel::train(const LabeledDataset& benign_only,
                                         AeParams params) {
  if (benign_only.rows.empty())
    fail(ErrorCode::kEmptyDataset, "autoencoder needs benign rows");
  for (Label label : benign_only.labels)
    if (label != Label::kBenign)
      fail(ErrorCode::kInvalidArgument,
           "autoencoder training set must be benign-only");

  auto [normalized, norm] = normalize(benign_only);
  AeNet net = AeNet::random_init(params.hidden, params.seed);

  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    const AeNet grad = net.batch_gradient(normalized.rows);
    const auto update = [&](std::vector<double>& w,
                            const std::vector<double>& g) {
      for (std::size_t i = 0; i < w.size(); ++i)
        w[i] -= params.learning_rate * g[i];
    };
    update(net.w1, grad.w1);
    update(net.b1, grad.b1);
    update(net.w2, grad.w2);
    update(net.b2, grad.b2);

    const double loss = net.batch_loss(normalized.rows);
    if (!std::isfinite(loss))
      fail(ErrorCode::kDiverged,
           "training loss became non-finite at epoch " + std::to_string(epoch));
  }

  std::vector<double> errors;
  errors.reserve(normalized.rows.size());
  for (const auto& row : normalized.rows)
    errors.push_back(net.sample_error(row));
  std::sort(errors.begin(), errors.end());
  const std::size_t rank = std::size_t(
      std::ceil(0.99 * double(errors.size())));
  const double threshold = errors[std::min(rank, errors.size()) - 1];

  return AutoencoderModel(std::move(net), norm, threshold, params);
}

double AutoencoderModel::reconstruction_error(const FeatureVector& raw) const {
  return net_.sample_error(norm_.apply(raw));
}

Label AutoencoderModel::predict(const FeatureVector& raw) const {
  return reconstruction_error(raw) > threshold_ ? Label::kAnomalous
                                                : Label::kBenign;
}

// ---------------------------------------------------------------------------
// evaluation

EvalMetrics metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t tn,
                                std::size_t fn) {
  EvalMetrics m;
  m.tp = tp;
  m.fp = fp;
  m.tn = tn;
  m.fn = fn;
  const std::size_t total = tp + fp + tn + fn;
  m.accuracy = total == 0 ? 0.0 : double(tp + tn) / double(total);
  m.precision = tp + fp == 0 ? 0.0 : double(tp) / double(tp + fp);
  m.recall = tp + fn == 0 ? 0.0 : double(tp) / double(tp + fn);
  m.f1 = m.precision + m.recall == 0.0
             ? 0.0
             : 2.0 * m.precision * m.recall / (m.precision + m.recall);
  return m;
}

namespace {

EvalMetrics finish_eval(const LabeledDataset& test_set,
                        const std::vector<Label>& predictions,
                        std::vector<double> times_ms,
                        std::vector<Label>* predictions_out) {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const bool predicted = predictions[i] == Label::kAnomalous;
    const bool actual = test_set.labels[i] == Label::kAnomalous;
    if (predicted && actual) tp++;
    else if (predicted && !actual) fp++;
    else if (!predicted && !actual) tn++;
    else fn++;
  }
  EvalMetrics m = metrics_from_counts(tp, fp, tn, fn);

  double sum = 0.0;
  for (double t : times_ms) sum += t;
  m.mean_inference_ms = times_ms.empty() ? 0.0 : sum / double(times_ms.size());
  std::sort(times_ms.begin(), times_ms.end());
  if (!times_ms.empty()) {
    const std::size_t rank =
        std::size_t(std::ceil(0.95 * double(times_ms.size())));
    m.p95_inference_ms = times_ms[std::min(rank, times_ms.size()) - 1];
  }

  if (predictions_out) *predictions_out = predictions;
  return m;
}

}  // namespace

EvalMetrics evaluate_serial(const Model& model, const LabeledDataset& test_set,
                            std::vector<Label>* predictions_out) {
  if (test_set.rows.empty())
    fail(ErrorCode::kEmptyDataset, "cannot evaluate on an empty test set");
  const std::size_t n = test_set.rows.size();
  std::vector<Label> predictions(n);
  std::vector<double> times_ms(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    predictions[i] = model.predict(test_set.rows[i]);
    const auto t1 = std::chrono::steady_clock::now();
    times_ms[i] = std::chrono::duration<double, std::milli>(t1 - t0).count();
  }
  return finish_eval(test_set, predictions, std::move(times_ms),
                     predictions_out);
}

EvalMetrics evaluate(const Model& model, const LabeledDataset& test_set,
                     bool parallel, std::vector<Label>* predictions_out) {
  if (!parallel) return evaluate_serial(model, test_set, predictions_out);
  if (test_set.rows.empty())
    fail(ErrorCode::kEmptyDataset, "cannot evaluate on an empty test set");

  const std::size_t n = test_set.rows.size();
  std::vector<Label> predictions(n);
  std::vector<double> times_ms(n);
  // Each thread owns its index range; the per-index slots are the
  // thread-local accumulators, merged by finish_eval.
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < std::int64_t(n); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    predictions[std::size_t(i)] = model.predict(test_set.rows[std::size_t(i)]);
    const auto t1 = std::chrono::steady_clock::now();
    times_ms[std::size_t(i)] =
        std::chrono::duration<double, std::milli>(t1 - t0).count();
  }
  return finish_eval(test_set, predictions, std::move(times_ms),
                     predictions_out);
}

// ---------------------------------------------------------------------------
// model files

namespace {

nlohmann::ordered_json norm_to_json(const Normalizer& norm) {
  return {{"min", norm.mins}, {"max", norm.maxs}};
}

Normalizer norm_from_json(const nlohmann::json& obj) {
  Normalizer norm;
  const auto mins = obj.at("min").get<std::vector<double>>();
  const auto maxs = obj.at("max").get<std::vector<double>>();
  if (mins.size() != kFeatureDim || maxs.size() != kFeatureDim)
    fail(ErrorCode::kDimensionMismatch, "normalization dimension mismatch");
  std::copy(mins.begin(), mins.end(), norm.mins.begin());
  std::copy(maxs.begin(), maxs.end(), norm.maxs.begin());
  return norm;
}

nlohmann::ordered_json tree_to_json(const Tree& tree) {
  nlohmann::ordered_json nodes = nlohmann::ordered_json::array();
  for (const auto& n : tree.nodes) {
    nodes.push_back({{"leaf", n.leaf},
                     {"feature", n.feature},
                     {"threshold", n.threshold},
                     {"left", n.left},
                     {"right", n.right},
                     {"label", int(n.label)},
                     {"benign", n.count_benign},
                     {"anomalous", n.count_anomalous}});
  }
  return nodes;
}

Tree tree_from_json(const nlohmann::json& nodes) {
  Tree tree;
  for (const auto& obj : nodes) {
    DtNode n;
    n.leaf = obj.at("leaf").get<bool>();
    n.feature = obj.at("feature").get<std::size_t>();
    n.threshold = obj.at("threshold").get<double>();
    n.left = obj.at("left").get<std::int32_t>();
    n.right = obj.at("right").get<std::int32_t>();
    n.label = Label(obj.at("label").get<int>());
    n.count_benign = obj.at("benign").get<std::size_t>();
    n.count_anomalous = obj.at("anomalous").get<std::size_t>();
    tree.nodes.push_back(n);
  }
  return tree;
}

std::vector<Label> labels_from_json(const nlohmann::json& arr) {
  std::vector<Label> out;
  for (const auto& v : arr) out.push_back(Label(v.get<int>()));
  return out;
}

std::vector<FeatureVector> rows_from_json(const nlohmann::json& arr) {
  std::vector<FeatureVector> out;
  for (const auto& row : arr) {
    const auto vals = row.get<std::vector<double>>();
    if (vals.size() != kFeatureDim)
      fail(ErrorCode::kDimensionMismatch,
           "stored row has dimension " + std::to_string(vals.size()) +
               ", expected " + std::to_string(kFeatureDim));
    FeatureVector fv;
    std::copy(vals.begin(), vals.end(), fv.begin());
    out.push_back(fv);
  }
  return out;
}

}  // namespace

void save_model(const std::string& path, const Model& model) {
  nlohmann::ordered_json obj;
  obj["format"] = "iotad-model";
  obj["version"] = 1;
  obj["kind"] = model.kind();
  obj["dim"] = kFeatureDim;
  obj["normalization"] = norm_to_json(model.normalizer());

  if (const auto* knn = dynamic_cast<const KnnModel*>(&model)) {
    obj["k"] = knn->k();
    obj["rows"] = knn->rows();
    nlohmann::ordered_json labels = nlohmann::ordered_json::array();
    for (Label l : knn->labels()) labels.push_back(int(l));
    obj["labels"] = labels;
  } else if (const auto* dt = dynamic_cast<const DecisionTreeModel*>(&model)) {
    obj["max_depth"] = dt->params().max_depth;
    obj["min_samples_leaf"] = dt->params().min_samples_leaf;
    obj["nodes"] = tree_to_json(dt->tree());
  } else if (const auto* rf = dynamic_cast<const RandomForestModel*>(&model)) {
    obj["n_trees"] = rf->params().n_trees;
    obj["features_per_split"] = rf->params().features_per_split;
    obj["bootstrap"] = rf->params().bootstrap;
    obj["seed"] = rf->params().seed;
    obj["max_depth"] = rf->params().tree.max_depth;
    obj["min_samples_leaf"] = rf->params().tree.min_samples_leaf;
    nlohmann::ordered_json trees = nlohmann::ordered_json::array();
    for (const auto& tree : rf->trees()) trees.push_back(tree_to_json(tree));
    obj["trees"] = trees;
  } else if (const auto* ae = dynamic_cast<const AutoencoderModel*>(&model)) {
    obj["hidden"] = ae->params().hidden;
    obj["epochs"] = ae->params().epochs;
    obj["learning_rate"] = ae->params().learning_rate;
    obj["seed"] = ae->params().seed;
    obj["threshold"] = ae->threshold();
    obj["w1"] = ae->net().w1;
    obj["b1"] = ae->net().b1;
    obj["w2"] = ae->net().w2;
    obj["b2"] = ae->net().b2;
  } else {
    fail(ErrorCode::kModelKindUnknown, "cannot serialize this model type");
  }

  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::kIoError, "cannot write " + path);
  out << obj.dump(2) << '\n';
}

std::unique_ptr<Model> load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIoError, "cannot open " + path);
  nlohmann::json obj;
  try {
    in >> obj;
  } catch (const nlohmann::json::exception&) {
    fail(ErrorCode::kParseError, "bad JSON in model file " + path);
  }
  if (obj.value("format", "") != "iotad-model")
    fail(ErrorCode::kParseError, path + " is not a model file");
  if (obj.value("dim", std::size_t(0)) != kFeatureDim)
    fail(ErrorCode::kDimensionMismatch,
         "model dimension " + std::to_string(obj.value("dim", std::size_t(0))) +
             " does not match feature dimension " +
             std::to_string(kFeatureDim));

  const Normalizer norm = norm_from_json(obj.at("normalization"));
  const std::string kind = obj.at("kind").get<std::string>();
  if (kind == "knn") {
    return std::make_unique<KnnModel>(obj.at("k").get<int>(), norm,
                                      rows_from_json(obj.at("rows")),
                                      labels_from_json(obj.at("labels")));
  }
  if (kind == "dtree") {
    DtParams params{obj.at("max_depth").get<int>(),
                    obj.at("min_samples_leaf").get<int>()};
    return std::make_unique<DecisionTreeModel>(tree_from_json(obj.at("nodes")),
                                               norm, params);
  }
  if (kind == "rforest") {
    RfParams params;
    params.n_trees = obj.at("n_trees").get<int>();
    params.features_per_split = obj.at("features_per_split").get<int>();
    params.bootstrap = obj.at("bootstrap").get<bool>();
    params.seed = obj.at("seed").get<std::uint64_t>();
    params.tree = DtParams{obj.at("max_depth").get<int>(),
                           obj.at("min_samples_leaf").get<int>()};
    std::vector<Tree> trees;
    for (const auto& t : obj.at("trees")) trees.push_back(tree_from_json(t));
    return std::make_unique<RandomForestModel>(std::move(trees), norm, params);
  }
  if (kind == "autoenc") {
    AeParams params;
    params.hidden = obj.at("hidden").get<int>();
    params.epochs = obj.at("epochs").get<int>();
    params.learning_rate = obj.at("learning_rate").get<double>();
    params.seed = obj.at("seed").get<std::uint64_t>();
    AeNet net = AeNet::zeros(params.hidden);
    net.w1 = obj.at("w1").get<std::vector<double>>();
    net.b1 = obj.at("b1").get<std::vector<double>>();
    net.w2 = obj.at("w2").get<std::vector<double>>();
    net.b2 = obj.at("b2").get<std::vector<double>>();
    if (net.w1.size() != std::size_t(params.hidden) * kFeatureDim ||
        net.w2.size() != kFeatureDim * std::size_t(params.hidden))
      fail(ErrorCode::kDimensionMismatch, "autoencoder weight shape mismatch");
    return std::make_unique<AutoencoderModel>(
        std::move(net), norm, obj.at("threshold").get<double>(), params);
  }
  fail(ErrorCode::kModelKindUnknown, "unknown model kind '" + kind + "'");
}

std::unique_ptr<Model> train_model(const std::string& kind,
                                   const LabeledDataset& dataset,
                                   std::uint64_t seed) {
  if (kind == "knn") {
    const int k = dataset.rows.size() >= 5 ? 5 : 1;
    return std::make_unique<KnnModel>(KnnModel::train(dataset, k));
  }
  if (kind == "dtree") {
    return std::make_unique<DecisionTreeModel>(
        DecisionTreeModel::train(dataset, DtParams{}));
  }
  if (kind == "rforest") {
    RfParams params;
    params.seed = seed;
    return std::make_unique<RandomForestModel>(
        RandomForestModel::train(dataset, params));
  }
  if (kind == "autoenc") {
    LabeledDataset benign;
    for (std::size_t i = 0; i < dataset.rows.size(); ++i) {
      if (dataset.labels[i] == Label::kBenign) {
        benign.rows.push_back(dataset.rows[i]);
        benign.labels.push_back(Label::kBenign);
      }
    }
    AeParams params;
    params.seed = seed;
    return std::make_unique<AutoencoderModel>(
        AutoencoderModel::train(benign, params));
  }
  fail(ErrorCode::kModelKindUnknown, "unknown model kind '" + kind + "'");
}

}  // namespace iotad
