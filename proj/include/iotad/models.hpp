#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "iotad/event_engine.hpp"

namespace iotad {

enum class Label : std::uint8_t { kBenign = 0, kAnomalous = 1 };

const char* to_string(Label label);

struct LabeledDataset {
  std::vector<FeatureVector> rows;
  std::vector<Label> labels;

  std::size_t size() const { return rows.size(); }
};

// Per-feature min-max scaling fitted on the training set. Constant features
// map to 0.5.
struct Normalizer {
  FeatureVector mins{};
  FeatureVector maxs{};

  static Normalizer fit(const std::vector<FeatureVector>& rows);
  FeatureVector apply(const FeatureVector& fv) const;
};

// Scales every row to [0,1] and returns the fitted params.
std::pair<LabeledDataset, Normalizer> normalize(const LabeledDataset& dataset);

// A trained detector: predict takes a raw (unnormalized) feature vector and
// applies the stored normalization internally. Implementations are immutable
// after training and safe for concurrent read-only prediction.
class Model {
 public:
  virtual ~Model() = default;
  virtual Label predict(const FeatureVector& raw) const = 0;
  virtual const char* kind() const = 0;
  virtual const Normalizer& normalizer() const = 0;
};

// ---------------------------------------------------------------------------
// k-nearest neighbors

class KnnModel final : public Model {
 public:
  // k must be odd and <= row count.
  static KnnModel train(const LabeledDataset& dataset, int k);

  Label predict(const FeatureVector& raw) const override;
  const char* kind() const override { return "knn"; }
  const Normalizer& normalizer() const override { return norm_; }

  int k() const { return k_; }
  const std::vector<FeatureVector>& rows() const { return rows_; }
  const std::vector<Label>& labels() const { return labels_; }

  KnnModel(int k, Normalizer norm, std::vector<FeatureVector> rows,
           std::vector<Label> labels)
      : k_(k), norm_(norm), rows_(std::move(rows)),
        labels_(std::move(labels)) {}

 private:
  int k_;
  Normalizer norm_;
  std::vector<FeatureVector> rows_;  // normalized
  std::vector<Label> labels_;
};

// ---------------------------------------------------------------------------
// decision tree / random forest

struct DtNode {
  bool leaf = true;
  std::size_t feature = 0;
  double threshold = 0.0;
  std::int32_t left = -1;
  std::int32_t right = -1;
  Label label = Label::kBenign;
  std::size_t count_benign = 0;
  std::size_t count_anomalous = 0;
};

// Bare tree over normalized features; nodes_[0] is the root.
struct Tree {
  std::vector<DtNode> nodes;

  Label predict(const FeatureVector& normalized) const;
};

struct DtParams {
  int max_depth = 12;
  int min_samples_leaf = 1;
};

class DecisionTreeModel final : public Model {
 public:
  // Deterministic: greedy Gini splits, candidate thresholds are midpoints
  // between sorted distinct values, ties resolved to the lowest feature
  // index then lowest threshold.
  static DecisionTreeModel train(const LabeledDataset& dataset,
                                 DtParams params = {});

  Label predict(const FeatureVector& raw) const override;
  const char* kind() const override { return "dtree"; }
  const Normalizer& normalizer() const override { return norm_; }

  const Tree& tree() const { return tree_; }
  const DtParams& params() const { return params_; }

  DecisionTreeModel(Tree tree, Normalizer norm, DtParams params)
      : tree_(std::move(tree)), norm_(norm), params_(params) {}

 private:
  Tree tree_;
  Normalizer norm_;
  DtParams params_;
};

struct RfParams {
  int n_trees = 25;
  int features_per_split = 4;
  DtParams tree = {};
  bool bootstrap = true;
  std::uint64_t seed = 0;
};

class RandomForestModel final : public Model {
 public:
  static RandomForestModel train(const LabeledDataset& dataset,
                                 RfParams params);

  // Majority vote; exact ties go to ANOMALOUS (fail-safe).
  Label predict(const FeatureVector& raw) const override;
  const char* kind() const override { return "rforest"; }
  const Normalizer& normalizer() const override { return norm_; }

  const std::vector<Tree>& trees() const { return trees_; }
  const RfParams& params() const { return params_; }

  RandomForestModel(std::vector<Tree> trees, Normalizer norm, RfParams params)
      : trees_(std::move(trees)), norm_(norm), params_(params) {}

 private:
  std::vector<Tree> trees_;
  Normalizer norm_;
  RfParams params_;
};

// ---------------------------------------------------------------------------
// autoencoder

struct AeParams {
  int hidden = 8;
  int epochs = 800;
  double learning_rate = 0.05;
  std::uint64_t seed = 0;
};

// 12 -> h -> 12 fully connected net, tanh hidden activation, linear output.
// Weight layout: w1[h][12] row-major, b1[h], w2[12][h] row-major, b2[12].
struct AeNet {
  int hidden = 0;
  std::vector<double> w1, b1, w2, b2;

  static AeNet zeros(int hidden);
  static AeNet random_init(int hidden, std::uint64_t seed);

  std::vector<double> reconstruct(const FeatureVector& normalized) const;
  // Mean squared error over the 12 outputs for one sample.
  double sample_error(const FeatureVector& normalized) const;
  // Mean over samples of sample_error.
  double batch_loss(const std::vector<FeatureVector>& rows) const;
  // Full-batch gradient of batch_loss, same layout as the weights.
  AeNet batch_gradient(const std::vector<FeatureVector>& rows) const;
};

class AutoencoderModel final : public Model {
 public:
  // dataset must contain only BENIGN rows (reconstruction-based detection).
  // Threshold is set to the 99th percentile of training reconstruction
  // errors. Throws DIVERGED if the loss becomes non-finite.
  static AutoencoderModel train(const LabeledDataset& benign_only,
                                AeParams params);

  // Strict exceedance: error > threshold -> ANOMALOUS.
  Label predict(const FeatureVector& raw) const override;
  const char* kind() const override { return "autoenc"; }
  const Normalizer& normalizer() const override { return norm_; }

  double reconstruction_error(const FeatureVector& raw) const;
  double threshold() const { return threshold_; }
  const AeNet& net() const { return net_; }
  const AeParams& params() const { return params_; }

  AutoencoderModel(AeNet net, Normalizer norm, double threshold,
                   AeParams params)
      : net_(std::move(net)), norm_(norm), threshold_(threshold),
        params_(params) {}

 private:
  AeNet net_;
  Normalizer norm_;
  double threshold_;
  AeParams params_;
};

// ---------------------------------------------------------------------------
// evaluation

struct EvalMetrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double mean_inference_ms = 0.0;
  double p95_inference_ms = 0.0;
};

EvalMetrics metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t tn,
                                std::size_t fn);

// ANOMALOUS is the positive class. The parallel path partitions the test set
// across OpenMP threads with thread-local timing, merged at the end; the
// serial path is the reference implementation and must produce identical
// predictions and counts.
EvalMetrics evaluate(const Model& model, const LabeledDataset& test_set,
                     bool parallel = true,
                     std::vector<Label>* predictions_out = nullptr);
EvalMetrics evaluate_serial(const Model& model, const LabeledDataset& test_set,
                            std::vector<Label>* predictions_out = nullptr);

// ---------------------------------------------------------------------------
// model files

void save_model(const std::string& path, const Model& model);
// Rejects files whose feature dimension differs from kFeatureDim.
std::unique_ptr<Model> load_model(const std::string& path);
std::unique_ptr<Model> train_model(const std::string& kind,
                                   const LabeledDataset& dataset,
                                   std::uint64_t seed);

}  // namespace iotad
