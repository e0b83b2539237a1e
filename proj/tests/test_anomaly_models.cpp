#include <algorithm>
#include <cmath>
#include <fstream>

#include "doctest.h"
#include "iotad/models.hpp"
#include "iotad/rng.hpp"
#include "test_helpers.hpp"

using namespace iotad;
using testutil::expect_error;

namespace {

FeatureVector fv_of(std::initializer_list<double> head) {
  FeatureVector fv{};
  std::size_t i = 0;
  for (double v : head) fv[i++] = v;
  return fv;
}

LabeledDataset random_dataset(std::size_t n, std::uint64_t seed,
                              double anomaly_share = 0.3) {
  SplitMix64 rng(seed);
  LabeledDataset ds;
  for (std::size_t i = 0; i < n; ++i) {
    FeatureVector fv;
    const bool anomalous = rng.next_double() < anomaly_share;
    for (auto& v : fv) v = rng.uniform(0, 1) + (anomalous ? 1.5 : 0.0);
    ds.rows.push_back(fv);
    ds.labels.push_back(anomalous ? Label::kAnomalous : Label::kBenign);
  }
  return ds;
}

// Test-local constant predictor for exercising evaluate().
class FixedModel final : public Model {
 public:
  explicit FixedModel(std::vector<Label> script) : script_(std::move(script)) {
    norm_.mins.fill(0);
    norm_.maxs.fill(1);
  }
  Label predict(const FeatureVector& fv) const override {
    const auto i = std::size_t(fv[0]);
    return script_[i % script_.size()];
  }
  const char* kind() const override { return "fixed"; }
  const Normalizer& normalizer() const override { return norm_; }

 private:
  std::vector<Label> script_;
  Normalizer norm_;
};

}  // namespace

TEST_CASE("min-max normalization with constant-feature fallback") {
  LabeledDataset ds;
  ds.rows.push_back(fv_of({0, 5, 1}));
  ds.rows.push_back(fv_of({10, 5, 3}));
  ds.labels = {Label::kBenign, Label::kAnomalous};

  const auto [normalized, params] = normalize(ds);
  CHECK(normalized.rows[0][0] == 0.0);
  CHECK(normalized.rows[1][0] == 1.0);
  CHECK(normalized.rows[0][1] == 0.5);  // constant column
  CHECK(normalized.rows[1][1] == 0.5);

  SUBCASE("formula oracle on random columns") {
    const auto big = random_dataset(200, 11);
    const auto [norm_big, p] = normalize(big);
    for (std::size_t r = 0; r < big.rows.size(); ++r) {
      for (std::size_t i = 0; i < kFeatureDim; ++i) {
        const double span = p.maxs[i] - p.mins[i];
        const double expected =
            span == 0 ? 0.5 : (big.rows[r][i] - p.mins[i]) / span;
        CHECK(std::abs(norm_big.rows[r][i] - expected) < 1e-12);
      }
    }
  }

  SUBCASE("re-applying normalization is the identity") {
    const auto big = random_dataset(100, 12);
    const auto [once, p1] = normalize(big);
    const auto [twice, p2] = normalize(once);
    CHECK(once.rows == twice.rows);

    // and therefore predictions cannot change
    const auto m1 = KnnModel::train(once, 5);
    const auto m2 = KnnModel::train(twice, 5);
    SplitMix64 rng(3);
    for (int q = 0; q < 50; ++q) {
      FeatureVector probe;
      for (auto& v : probe) v = rng.uniform(0, 1);
      CHECK(m1.predict(probe) == m2.predict(probe));
    }
  }

  expect_error(ErrorCode::kEmptyDataset, [] { normalize(LabeledDataset{}); });
}

TEST_CASE("kNN basics and parameter checks") {
  LabeledDataset ds;
  ds.rows = {fv_of({0, 0}), fv_of({1, 1}), fv_of({2, 2})};
  ds.labels = {Label::kBenign, Label::kBenign, Label::kAnomalous};

  SUBCASE("k=1 on a training point returns its label") {
    const auto model = KnnModel::train(ds, 1);
    CHECK(model.predict(ds.rows[0]) == Label::kBenign);
    CHECK(model.predict(ds.rows[2]) == Label::kAnomalous);
  }

  SUBCASE("k=3 majority of {B,B,A} is BENIGN") {
    const auto model = KnnModel::train(ds, 3);
    CHECK(model.predict(fv_of({0.5, 0.5})) == Label::kBenign);
  }

  expect_error(ErrorCode::kInvalidArgument, [&] { KnnModel::train(ds, 2); });
  expect_error(ErrorCode::kInvalidArgument, [&] { KnnModel::train(ds, 5); });
  expect_error(ErrorCode::kEmptyDataset,
               [] { KnnModel::train(LabeledDataset{}, 1); });
}

TEST_CASE("kNN agrees exactly with a brute-force full-scan oracle") {
  const auto train = random_dataset(500, 2024);
  const auto model = KnnModel::train(train, 5);

  // Oracle: independent full scan in the same normalized space.
  const Normalizer norm = Normalizer::fit(train.rows);
  std::vector<FeatureVector> norm_rows;
  for (const auto& r : train.rows) norm_rows.push_back(norm.apply(r));

  SplitMix64 rng(555);
  for (int q = 0; q < 100; ++q) {
    FeatureVector probe;
    for (auto& v : probe) v = rng.uniform(-0.2, 1.4) * 2.0;
    const FeatureVector np = norm.apply(probe);

    std::vector<std::pair<double, std::size_t>> dist;
    for (std::size_t i = 0; i < norm_rows.size(); ++i) {
      double d = 0;
      for (std::size_t j = 0; j < kFeatureDim; ++j)
        d += (np[j] - norm_rows[i][j]) * (np[j] - norm_rows[i][j]);
      dist.emplace_back(d, i);
    }
    std::sort(dist.begin(), dist.end());
    int votes = 0;
    for (int i = 0; i < 5; ++i)
      votes += train.labels[dist[std::size_t(i)].second] == Label::kAnomalous;
    const Label expected = votes > 2 ? Label::kAnomalous : Label::kBenign;
    CHECK(model.predict(probe) == expected);
  }
}

TEST_CASE("decision tree training basics") {
  SUBCASE("single-class data yields a single leaf") {
    LabeledDataset ds;
    ds.rows = {fv_of({0}), fv_of({1})};
    ds.labels = {Label::kBenign, Label::kBenign};
    const auto model = DecisionTreeModel::train(ds);
    CHECK(model.tree().nodes.size() == 1);
    CHECK(model.tree().nodes[0].leaf);
    CHECK(model.predict(fv_of({99})) == Label::kBenign);
  }

  SUBCASE("1-D two-point dataset splits at the midpoint") {
    LabeledDataset ds;
    ds.rows = {fv_of({0}), fv_of({1})};
    ds.labels = {Label::kBenign, Label::kAnomalous};
    const auto model = DecisionTreeModel::train(ds);
    REQUIRE(!model.tree().nodes[0].leaf);
    CHECK(model.tree().nodes[0].feature == 0);
    CHECK(model.tree().nodes[0].threshold == 0.5);  // normalized midpoint

    // boundary value routes left by contract
    CHECK(model.predict(fv_of({0.5})) == Label::kBenign);
    CHECK(model.predict(fv_of({0.51})) == Label::kAnomalous);
  }

  SUBCASE("training is deterministic") {
    const auto ds = random_dataset(200, 8);
    const auto a = DecisionTreeModel::train(ds);
    const auto b = DecisionTreeModel::train(ds);
    const auto pa = testutil::temp_path("dt_a.json");
    const auto pb = testutil::temp_path("dt_b.json");
    save_model(pa, a);
    save_model(pb, b);
    std::ifstream fa(pa), fb(pb);
    const std::string sa((std::istreambuf_iterator<char>(fa)),
                         std::istreambuf_iterator<char>());
    const std::string sb((std::istreambuf_iterator<char>(fb)),
                         std::istreambuf_iterator<char>());
    CHECK(sa == sb);
  }

  expect_error(ErrorCode::kEmptyDataset,
               [] { DecisionTreeModel::train(LabeledDataset{}); });
}

namespace {

// Independent exhaustive split enumeration with exact rational comparison.
struct OracleSplit {
  bool found = false;
  std::size_t feature = 0;
  double threshold = 0.0;
  long double score = -1.0;  // weighted-child-impurity gain numerator form
};

OracleSplit oracle_root_split(const std::vector<FeatureVector>& rows,
                              const std::vector<Label>& labels) {
  const std::size_t n = rows.size();
  long long b_total = 0, a_total = 0;
  for (Label l : labels) (l == Label::kBenign ? b_total : a_total)++;

  OracleSplit best;
  for (std::size_t f = 0; f < kFeatureDim; ++f) {
    std::vector<double> values;
    for (const auto& r : rows) values.push_back(r[f]);
    std::vector<double> distinct = values;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()),
                   distinct.end());
    for (std::size_t v = 0; v + 1 < distinct.size(); ++v) {
      const double threshold = (distinct[v] + distinct[v + 1]) / 2.0;
      long long bl = 0, al = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (rows[i][f] <= threshold)
          (labels[i] == Label::kBenign ? bl : al)++;
      }
      const long long nl = bl + al;
      const long long nr = (long long)n - nl;
      if (nl == 0 || nr == 0) continue;
      const long long br = b_total - bl;
      const long long ar = a_total - al;
      // Gini decrease > 0 and maximal <=> S = ((bl^2+al^2)nr + (br^2+ar^2)nl)
      // / (nl*nr) maximal and S*n > (b^2+a^2).
      const long double s =
          ((long double)(bl * bl + al * al) * nr +
           (long double)(br * br + ar * ar) * nl) /
          ((long double)nl * nr);
      if (s * (long double)n <=
          (long double)(b_total * b_total + a_total * a_total))
        continue;
      if (!best.found || s > best.score) {
        best.found = true;
        best.feature = f;
        best.threshold = threshold;
        best.score = s;
      }
    }
  }
  return best;
}

}  // namespace

TEST_CASE("root split matches exhaustive enumeration on 8-row datasets") {
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    SplitMix64 rng(seed);
    LabeledDataset ds;
    for (int i = 0; i < 8; ++i) {
      FeatureVector fv{};
      fv[0] = double(rng.below(4));
      fv[1] = double(rng.below(4));
      ds.rows.push_back(fv);
      ds.labels.push_back(rng.below(2) ? Label::kAnomalous : Label::kBenign);
    }

    // Oracle runs on the same normalized values the tree sees.
    const auto [normalized, p] = normalize(ds);
    const auto oracle = oracle_root_split(normalized.rows, normalized.labels);
    const auto model = DecisionTreeModel::train(ds);
    const auto& root = model.tree().nodes[0];

    if (!oracle.found) {
      CHECK(root.leaf);
    } else {
      REQUIRE(!root.leaf);
      CHECK(root.feature == oracle.feature);
      CHECK(root.threshold == doctest::Approx(oracle.threshold).epsilon(1e-12));
    }
  }
}

TEST_CASE("tree predictions agree with a manual tree walk") {
  const auto ds = random_dataset(300, 19);
  const auto model = DecisionTreeModel::train(ds);
  SplitMix64 rng(77);
  for (int q = 0; q < 100; ++q) {
    FeatureVector probe;
    for (auto& v : probe) v = rng.uniform(-0.5, 3.0);
    // manual walk in normalized space
    const FeatureVector np = model.normalizer().apply(probe);
    std::size_t at = 0;
    const auto& nodes = model.tree().nodes;
    while (!nodes[at].leaf)
      at = np[nodes[at].feature] <= nodes[at].threshold
               ? std::size_t(nodes[at].left)
               : std::size_t(nodes[at].right);
    CHECK(model.predict(probe) == nodes[at].label);
  }
}

TEST_CASE("random forest") {
  const auto ds = random_dataset(400, 5);

  SUBCASE("degenerate forest equals the decision tree on 1000 inputs") {
    RfParams params;
    params.n_trees = 1;
    params.bootstrap = false;
    params.features_per_split = int(kFeatureDim);
    const auto forest = RandomForestModel::train(ds, params);
    const auto tree = DecisionTreeModel::train(ds);
    SplitMix64 rng(6);
    for (int q = 0; q < 1000; ++q) {
      FeatureVector probe;
      for (auto& v : probe) v = rng.uniform(-0.5, 3.0);
      CHECK(forest.predict(probe) == tree.predict(probe));
    }
  }

  SUBCASE("exact vote ties fail safe to ANOMALOUS") {
    // Two single-leaf trees with opposite labels: 1 vote each.
    Tree benign_leaf, anomalous_leaf;
    benign_leaf.nodes.push_back(DtNode{});
    anomalous_leaf.nodes.push_back(DtNode{});
    anomalous_leaf.nodes[0].label = Label::kAnomalous;
    Normalizer identity;
    identity.mins.fill(0);
    identity.maxs.fill(1);
    const RandomForestModel forest({benign_leaf, anomalous_leaf}, identity,
                                   RfParams{});
    CHECK(forest.predict(fv_of({0.5})) == Label::kAnomalous);
  }

  SUBCASE("fixed seed reproduces a bit-identical model") {
    RfParams params;
    params.seed = 31;
    const auto a = RandomForestModel::train(ds, params);
    const auto b = RandomForestModel::train(ds, params);
    const auto pa = testutil::temp_path("rf_a.json");
    const auto pb = testutil::temp_path("rf_b.json");
    save_model(pa, a);
    save_model(pb, b);
    std::ifstream fa(pa), fb(pb);
    const std::string sa((std::istreambuf_iterator<char>(fa)),
                         std::istreambuf_iterator<char>());
    const std::string sb((std::istreambuf_iterator<char>(fb)),
                         std::istreambuf_iterator<char>());
    CHECK(sa == sb);
  }

  expect_error(ErrorCode::kInvalidArgument, [&] {
    RfParams params;
    params.n_trees = 0;
    RandomForestModel::train(ds, params);
  });
}

TEST_CASE("autoencoder math") {
  SUBCASE("zero net on zero inputs has loss 0") {
    const AeNet net = AeNet::zeros(4);
    std::vector<FeatureVector> rows(3);
    for (auto& r : rows) r.fill(0.0);
    CHECK(net.batch_loss(rows) == 0.0);
  }

  SUBCASE("analytic gradient matches central finite differences") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      AeNet net = AeNet::random_init(4, seed);
      SplitMix64 rng(seed * 101);
      std::vector<FeatureVector> rows(3);
      for (auto& r : rows)
        for (auto& v : r) v = rng.uniform(0, 1);

      const AeNet grad = net.batch_gradient(rows);
      const double eps = 1e-5;
      const auto check_block = [&](std::vector<double>& w,
                                   const std::vector<double>& g) {
        for (std::size_t i = 0; i < w.size(); ++i) {
          const double saved = w[i];
          w[i] = saved + eps;
          const double up = net.batch_loss(rows);
          w[i] = saved - eps;
          const double down = net.batch_loss(rows);
          w[i] = saved;
          const double fd = (up - down) / (2 * eps);
          const double denom = std::max({std::abs(fd), std::abs(g[i]), 1e-6});
          CHECK(std::abs(fd - g[i]) / denom < 1e-4);
        }
      };
      check_block(net.w1, grad.w1);
      check_block(net.b1, grad.b1);
      check_block(net.w2, grad.w2);
      check_block(net.b2, grad.b2);
    }
  }

  SUBCASE("gradient descent decreases the loss monotonically") {
    SplitMix64 rng(44);
    std::vector<FeatureVector> rows(40);
    for (auto& r : rows)
      for (auto& v : r) v = rng.uniform(0, 1);
    AeNet net = AeNet::random_init(8, 7);
    double prev = net.batch_loss(rows);
    for (int epoch = 0; epoch < 50; ++epoch) {
      const AeNet grad = net.batch_gradient(rows);
      for (std::size_t i = 0; i < net.w1.size(); ++i) net.w1[i] -= 0.01 * grad.w1[i];
      for (std::size_t i = 0; i < net.b1.size(); ++i) net.b1[i] -= 0.01 * grad.b1[i];
      for (std::size_t i = 0; i < net.w2.size(); ++i) net.w2[i] -= 0.01 * grad.w2[i];
      for (std::size_t i = 0; i < net.b2.size(); ++i) net.b2[i] -= 0.01 * grad.b2[i];
      const double loss = net.batch_loss(rows);
      CHECK(loss <= prev + 1e-9);
      prev = loss;
    }
  }
}

TEST_CASE("autoencoder training and prediction semantics") {
  LabeledDataset benign;
  SplitMix64 rng(21);
  for (int i = 0; i < 300; ++i) {
    FeatureVector fv;
    for (auto& v : fv) v = rng.uniform(0, 1);
    benign.rows.push_back(fv);
    benign.labels.push_back(Label::kBenign);
  }

  SUBCASE("threshold is the 99th percentile of training errors") {
    AeParams params;
    params.epochs = 100;
    const auto model = AutoencoderModel::train(benign, params);
    std::size_t above = 0;
    for (const auto& row : benign.rows)
      if (model.reconstruction_error(row) > model.threshold()) above++;
    CHECK(double(above) / double(benign.rows.size()) <= 0.011);
    CHECK(model.threshold() >= 0.0);
  }

  SUBCASE("errors at or under the threshold stay benign (strict exceedance)") {
    Normalizer identity;
    identity.mins.fill(0.0);
    identity.maxs.fill(1.0);
    // Zero net reconstructs everything to 0: error = mean(x^2).
    FeatureVector probe;
    probe.fill(0.3);
    const double err = 0.3 * 0.3;
    const AutoencoderModel exact(AeNet::zeros(4), identity, err, AeParams{});
    CHECK(exact.reconstruction_error(probe) == doctest::Approx(err));
    CHECK(exact.predict(probe) == Label::kBenign);  // == threshold

    const AutoencoderModel below(AeNet::zeros(4), identity, err - 1e-6,
                                 AeParams{});
    CHECK(below.predict(probe) == Label::kAnomalous);  // > threshold
  }

  SUBCASE("anomalous rows are rejected from training") {
    LabeledDataset bad = benign;
    bad.labels[0] = Label::kAnomalous;
    expect_error(ErrorCode::kInvalidArgument,
                 [&] { AutoencoderModel::train(bad, AeParams{}); });
  }

  SUBCASE("a divergent learning rate is reported") {
    AeParams params;
    params.learning_rate = 1e18;
    params.epochs = 200;
    expect_error(ErrorCode::kDiverged,
                 [&] { AutoencoderModel::train(benign, params); });
  }

  expect_error(ErrorCode::kEmptyDataset, [] {
    AutoencoderModel::train(LabeledDataset{}, AeParams{});
  });
}

TEST_CASE("evaluation metrics and identities") {
  SUBCASE("all-correct predictions give accuracy and F1 of 1") {
    const auto m = metrics_from_counts(10, 0, 10, 0);
    CHECK(m.accuracy == 1.0);
    CHECK(m.f1 == 1.0);
  }

  SUBCASE("tp=9 fp=1 gives precision 0.9") {
    const auto m = metrics_from_counts(9, 1, 5, 5);
    CHECK(m.precision == doctest::Approx(0.9));
  }

  SUBCASE("identities hold exactly on random confusion counts") {
    SplitMix64 rng(1);
    for (int i = 0; i < 50; ++i) {
      const std::size_t tp = rng.below(100), fp = rng.below(100),
                        tn = rng.below(100), fn = rng.below(100);
      const std::size_t n = tp + fp + tn + fn;
      if (n == 0) continue;
      const auto m = metrics_from_counts(tp, fp, tn, fn);
      CHECK(m.accuracy * double(n) == doctest::Approx(double(tp + tn)));
      if (m.precision + m.recall > 0)
        CHECK(m.f1 == doctest::Approx(2 * m.precision * m.recall /
                                      (m.precision + m.recall)));
    }
  }

  SUBCASE("evaluate recounts match a recomputation from the predictions") {
    // fv[0] indexes the script; labels alternate.
    LabeledDataset test;
    std::vector<Label> script;
    SplitMix64 rng(88);
    for (int i = 0; i < 200; ++i) {
      FeatureVector fv{};
      fv[0] = double(i);
      test.rows.push_back(fv);
      test.labels.push_back(rng.below(2) ? Label::kAnomalous : Label::kBenign);
      script.push_back(rng.below(2) ? Label::kAnomalous : Label::kBenign);
    }
    const FixedModel model(script);
    std::vector<Label> predictions;
    const auto m = evaluate_serial(model, test, &predictions);

    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
      const bool p = predictions[i] == Label::kAnomalous;
      const bool a = test.labels[i] == Label::kAnomalous;
      tp += p && a;
      fp += p && !a;
      tn += !p && !a;
      fn += !p && a;
    }
    CHECK(m.tp == tp);
    CHECK(m.fp == fp);
    CHECK(m.tn == tn);
    CHECK(m.fn == fn);
  }

  SUBCASE("parallel evaluation is prediction-identical to the serial path") {
    const auto train = random_dataset(300, 71);
    const auto test = random_dataset(250, 72);
    const auto model = KnnModel::train(train, 5);

    std::vector<Label> serial_preds, parallel_preds;
    const auto serial = evaluate_serial(model, test, &serial_preds);
    const auto parallel = evaluate(model, test, true, &parallel_preds);
    CHECK(serial_preds == parallel_preds);
    CHECK(serial.tp == parallel.tp);
    CHECK(serial.fp == parallel.fp);
    CHECK(serial.tn == parallel.tn);
    CHECK(serial.fn == parallel.fn);
    CHECK(serial.accuracy == parallel.accuracy);
  }

  expect_error(ErrorCode::kEmptyDataset, [] {
    evaluate_serial(FixedModel({Label::kBenign}), LabeledDataset{});
  });
}

TEST_CASE("model files round-trip and reject mismatches") {
  const auto ds = random_dataset(120, 99);

  const auto roundtrip = [&](const Model& model, const std::string& name) {
    const auto path = testutil::temp_path(name);
    save_model(path, model);
    const auto loaded = load_model(path);
    CHECK(std::string(loaded->kind()) == model.kind());
    SplitMix64 rng(4);
    for (int q = 0; q < 50; ++q) {
      FeatureVector probe;
      for (auto& v : probe) v = rng.uniform(-0.5, 3.0);
      CHECK(loaded->predict(probe) == model.predict(probe));
    }
  };

  roundtrip(KnnModel::train(ds, 5), "m_knn.json");
  roundtrip(DecisionTreeModel::train(ds), "m_dt.json");
  RfParams rf;
  rf.n_trees = 5;
  rf.seed = 3;
  roundtrip(RandomForestModel::train(ds, rf), "m_rf.json");
  LabeledDataset benign;
  for (std::size_t i = 0; i < ds.rows.size(); ++i) {
    if (ds.labels[i] == Label::kBenign) {
      benign.rows.push_back(ds.rows[i]);
      benign.labels.push_back(Label::kBenign);
    }
  }
  AeParams ae;
  ae.epochs = 50;
  roundtrip(AutoencoderModel::train(benign, ae), "m_ae.json");

  SUBCASE("dimension mismatches are rejected at load") {
    const auto path = testutil::write_text(
        "m_dim.json",
        R"({"format":"iotad-model","version":1,"kind":"knn","dim":11,)"
        R"("normalization":{"min":[0],"max":[1]},"k":1,"rows":[],"labels":[]})");
    expect_error(ErrorCode::kDimensionMismatch, [&] { load_model(path); });
  }

  SUBCASE("unknown kinds are rejected") {
    expect_error(ErrorCode::kModelKindUnknown,
                 [&] { train_model("svm", ds, 1); });
  }
}
