#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <random>
#include <set>

#include "core/error.hpp"
#include "core/lstm.hpp"
#include "core/metrics.hpp"
#include "core/mlp.hpp"
#include "core/model_io.hpp"
#include "core/svm.hpp"

using namespace lrp4rag;

namespace {

using Bools = std::vector<bool>;

Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Matrix m(r, c);
  for (auto& v : m.values()) v = d(rng);
  return m;
}

Bools random_labels(std::size_t n, std::mt19937_64& rng) {
  Bools out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = rng() & 1;
  out[0] = true;
  out[1] = false;
  return out;
}

// Central differences over every parameter of `model`, compared per element
// with relative error |a - n| / max(|a|, |n|, 1e-3).
template <class Model, class Loss, class Grad>
double worst_relative_error(Model model, Loss loss, Grad analytic) {
  Model grad = model.zeros_like();
  analytic(model, grad);
  auto params = model.blocks();
  auto grads = grad.blocks();
  double worst = 0.0;
  const double h = 1e-6;
  for (std::size_t b = 0; b < params.size(); ++b) {
    for (std::size_t i = 0; i < params[b].size(); ++i) {
      const double saved = params[b][i];
      params[b][i] = saved + h;
      const double up = loss(model);
      params[b][i] = saved - h;
      const double down = loss(model);
      params[b][i] = saved;
      const double numeric = (up - down) / (2 * h);
      const double a = grads[b][i];
      worst = std::max(worst, std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-3}));
    }
  }
  return worst;
}

}  // namespace

TEST(Metrics, Examples) {
  const Bools labels{true, false, true, false, true};
  const auto perfect = compute_metrics(labels, labels);
  EXPECT_EQ(perfect.accuracy, 1.0);
  EXPECT_EQ(perfect.precision, 1.0);
  EXPECT_EQ(perfect.recall, 1.0);
  EXPECT_EQ(perfect.f1, 1.0);

  const auto m = compute_metrics({true, true, false, false}, {true, false, false, true});
  EXPECT_EQ(m.accuracy, 0.5);
  EXPECT_EQ(m.precision, 0.5);
  EXPECT_EQ(m.recall, 0.5);
  EXPECT_EQ(m.f1, 0.5);
  EXPECT_EQ(m.tp + m.fp + m.tn + m.fn, 4u);

  const auto none = compute_metrics({false, false, false}, {true, false, true});
  EXPECT_EQ(none.recall, 0.0);
  EXPECT_EQ(none.precision, 0.0);
  EXPECT_EQ(none.f1, 0.0);
  EXPECT_THROW(compute_metrics({true}, {true, false}), Error);
  EXPECT_THROW(compute_metrics({}, {}), Error);
}

TEST(Metrics, IdentitiesOnRandomPairs) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 1 + rng() % 40;
    Bools p(n), l(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = rng() & 1;
      l[i] = rng() & 1;
    }
    const auto m = compute_metrics(p, l);
    EXPECT_EQ(m.total(), n);
    const double f1 = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    EXPECT_NEAR(m.f1, f1, 1e-12);
    EXPECT_NEAR(m.accuracy, static_cast<double>(m.tp + m.tn) / static_cast<double>(n), 1e-12);
  }
}

TEST(Metrics, FormatPercent) {
  EXPECT_EQ(format_percent(0.6916), "69.16%");
  EXPECT_EQ(format_percent(1.0), "100.00%");
  EXPECT_EQ(format_percent(0.0), "0.00%");
}

TEST(Metrics, PublishedRowsFixture) {
  std::ifstream in(std::filesystem::path(LRP4RAG_FIXTURE_DIR) / "reported_metrics.json");
  ASSERT_TRUE(in.good());
  const auto doc = nlohmann::json::parse(in);
  const auto parse = [](const std::string& s) { return std::stod(s.substr(0, s.size() - 1)) / 100.0; };
  std::size_t rows = 0;
  for (const char* table : {"threshold_rows", "classifier_rows"}) {
    for (const auto& row : doc.at(table)) {
      ++rows;
      for (const char* key : {"accuracy", "precision", "recall", "f1"}) {
        const std::string text = row.at(key);
        EXPECT_EQ(format_percent(parse(text)), text);
      }
      // F1 averaged over folds never exceeds the F1 of the averaged
      // precision and recall (the harmonic mean is concave).
      const double p = parse(row.at("precision")), r = parse(row.at("recall"));
      EXPECT_LE(parse(row.at("f1")), 2 * p * r / (p + r) + 1e-4) << row.dump();
    }
  }
  EXPECT_EQ(rows, 26u);
}

TEST(Threshold, RuleDirectionAndMonotonicity) {
  EXPECT_TRUE(threshold_classify(0.2, 0.3));
  EXPECT_FALSE(threshold_classify(0.9, 0.3));
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u;
  std::vector<double> scores(200);
  for (auto& s : scores) s = u(rng);
  const auto labels = random_labels(200, rng);
  std::size_t prev_pos = 0;
  double prev_recall = 0;
  for (double t = 0.41; t <= 0.53 + 1e-12; t += 0.01) {
    std::size_t pos = 0;
    for (double s : scores) pos += threshold_classify(s, t);
    EXPECT_GE(pos, prev_pos);
    prev_pos = pos;
  }
  for (const auto& row : threshold_sweep(scores, labels, {})) {
    EXPECT_GE(row.metrics.recall, prev_recall);
    prev_recall = row.metrics.recall;
  }
}

TEST(Threshold, SweepGridAndSeparableData) {
  EXPECT_EQ(ThresholdGrid{}.values().size(), 101u);
  const std::vector<double> scores{0.1, 0.15, 0.2, 0.7, 0.8, 0.9};
  const Bools labels{true, true, true, false, false, false};
  const auto rows = threshold_sweep(scores, labels, {});
  double best = 0;
  for (const auto& r : rows) best = std::max(best, r.metrics.accuracy);
  EXPECT_EQ(best, 1.0);
  EXPECT_NEAR(sweep_auc(rows), 1.0, 1e-12);
  const double t = best_threshold(scores, labels, {});
  EXPECT_GE(t, 0.2);
  EXPECT_LT(t, 0.7);
}

TEST(Threshold, ExhaustiveSweepBeatsMajorityRate) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> scores(60);
    for (auto& s : scores) s = u(rng);
    auto labels = random_labels(60, rng);
    std::shuffle(labels.begin(), labels.end(), rng);
    double pos = 0;
    for (bool l : labels) pos += l;
    const double majority = std::max(pos, 60 - pos) / 60;
    double best = 0;
    for (const auto& r : threshold_sweep(scores, labels, {-0.001, 1.001, 0.001})) best = std::max(best, r.metrics.accuracy);
    EXPECT_GE(best, majority - 1e-12);
  }
}

TEST(Kfold, PartitionProperties) {
  for (std::size_t n = 5; n <= 200; ++n) {
    for (std::size_t k : {2u, 5u, 10u}) {
      if (n < k) continue;
      const auto folds = kfold_partition(n, k, n * 31 + k);
      ASSERT_EQ(folds.size(), k);
      std::set<std::size_t> seen;
      std::size_t lo = n, hi = 0;
      for (const auto& f : folds) {
        lo = std::min(lo, f.size());
        hi = std::max(hi, f.size());
        for (auto i : f) ASSERT_TRUE(seen.insert(i).second);
      }
      EXPECT_EQ(seen.size(), n);
      EXPECT_LE(hi - lo, 1u);
    }
  }
  const auto ten = kfold_partition(10, 5, 4);
  for (const auto& f : ten) EXPECT_EQ(f.size(), 2u);
  EXPECT_EQ(kfold_partition(50, 5, 9), kfold_partition(50, 5, 9));
}

TEST(Kfold, Errors) {
  try {
    kfold_partition(10, 1, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConfig);
  }
  EXPECT_THROW(kfold_partition(3, 5, 0), Error);
}

TEST(Kfold, ConstantPredictorGivesBaseRate) {
  Bools labels(30, false);
  for (std::size_t i = 0; i < 12; ++i) labels[i] = true;
  const auto cv = kfold_cv(labels, 5, 1, [](std::span<const std::size_t>, std::span<const std::size_t> test) {
    return Bools(test.size(), false);
  });
  EXPECT_NEAR(cv.pooled.accuracy, 18.0 / 30.0, 1e-12);
  EXPECT_EQ(cv.folds.size(), 5u);
}

TEST(Svm, XorIsSeparated) {
  const auto x = Matrix::from_rows({{0, 0}, {1, 1}, {0, 1}, {1, 0}});
  const Bools y{false, false, true, true};
  SvmOptions o;
  o.gamma = 1.0;
  o.c = 10.0;
  const auto m = train_svm_rbf(x, y, o);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(m.predict(x.row(i)), y[i]);
  EXPECT_LE(m.kkt_gap, 1e-3);
}

TEST(Svm, SymmetricPairSplitsAtMidpoint) {
  const auto x = Matrix::from_rows({{-1}, {1}});
  SvmOptions o;
  o.gamma = 0.5;
  o.c = 100.0;
  const auto m = train_svm_rbf(x, {true, false}, o);
  const std::vector<double> mid{0.0}, left{-0.05}, right{0.05};
  EXPECT_NEAR(m.decision(mid), 0.0, 1e-3);
  EXPECT_TRUE(m.predict(left));
  EXPECT_FALSE(m.predict(right));
  EXPECT_LE(m.kkt_gap, 1e-3);
}

TEST(Svm, HardMarginInterpolatesTrainingPoints) {
  std::mt19937_64 rng(5);
  const auto x = random_matrix(30, 3, rng);
  Bools y(30);
  for (std::size_t i = 0; i < 30; ++i) y[i] = x(i, 0) + 0.5 * x(i, 1) > 0;
  SvmOptions o;
  o.c = 1e4;
  o.seed = 3;
  const auto m = train_svm_rbf(x, y, o);
  for (std::size_t i = 0; i < 30; ++i) EXPECT_EQ(m.predict(x.row(i)), y[i]);
  EXPECT_LE(m.kkt_gap, 1e-3);
  const auto again = train_svm_rbf(x, y, o);
  EXPECT_EQ(again.coef, m.coef);
  EXPECT_EQ(again.bias, m.bias);
}

TEST(Svm, SingleClassIsATrainingError) {
  try {
    train_svm_rbf(Matrix::from_rows({{0}, {1}}), {true, true});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kTraining);
  }
}

TEST(Mlp, LearnsAnd) {
  const auto x = Matrix::from_rows({{0, 0}, {0, 1}, {1, 0}, {1, 1}});
  const Bools y{false, false, false, true};
  MlpOptions o;
  o.hidden = 4;
  o.epochs = 2000;
  o.lr = 0.5;
  o.seed = 7;
  const auto m = train_mlp(x, y, o);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(m.predict(x.row(i)), y[i]);
}

TEST(Mlp, ZeroEpochsIsDeterministicInit) {
  std::mt19937_64 rng(6);
  const auto x = random_matrix(10, 3, rng);
  const auto y = random_labels(10, rng);
  MlpOptions o;
  o.epochs = 0;
  o.seed = 11;
  const auto a = train_mlp(x, y, o);
  const auto b = train_mlp(x, y, o);
  const auto init = MlpModel::init(3, o.hidden, 11);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(a.logit(x.row(i)), b.logit(x.row(i)));
    EXPECT_EQ(a.logit(x.row(i)), init.logit(x.row(i)));
  }
}

TEST(Mlp, FirstStepDescends) {
  std::mt19937_64 rng(7);
  const auto x = random_matrix(20, 4, rng);
  const auto y = random_labels(20, rng);
  MlpOptions o;
  o.epochs = 1;
  o.lr = 0.01;
  std::vector<double> history;
  train_mlp(x, y, o, &history);
  ASSERT_EQ(history.size(), 2u);
  EXPECT_LT(history[1], history[0]);
}

TEST(Mlp, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(8);
  const auto x = random_matrix(7, 5, rng);
  const auto y = random_labels(7, rng);
  const auto model = MlpModel::init(5, 6, 3);
  const double err = worst_relative_error(
      model, [&](const MlpModel& m) { return mlp_loss(m, x, y); },
      [&](const MlpModel& m, MlpModel& g) { mlp_loss_and_grad(m, x, y, g); });
  EXPECT_LT(err, 1e-5);
}

TEST(Lstm, StepExamples) {
  LstmLayer zero{Matrix(8, 3), std::vector<double>(8, 0.0)};
  const std::vector<double> x{0.3};
  const auto s0 = lstm_step(x, {{0, 0}, {0, 0}}, zero);
  EXPECT_EQ(s0.c, (std::vector<double>{0, 0}));
  EXPECT_EQ(s0.h, (std::vector<double>{0, 0}));
  const auto s1 = lstm_step(x, {{0, 0}, {1, 1}}, zero);
  EXPECT_DOUBLE_EQ(s1.c[0], 0.5);
  EXPECT_DOUBLE_EQ(s1.h[0], 0.5 * std::tanh(0.5));
}

TEST(Lstm, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(9);
  std::vector<Matrix> seqs;
  for (int i = 0; i < 5; ++i) seqs.push_back(random_matrix(4, 3, rng));
  const auto y = random_labels(5, rng);
  const auto model = LstmModel::init(3, 4, 2, 5);
  const std::vector<std::size_t> all;
  const double err = worst_relative_error(
      model,
      [&](const LstmModel& m) {
        LstmModel scratch = m.zeros_like();
        return lstm_loss_and_grad(m, seqs, y, all, scratch);
      },
      [&](const LstmModel& m, LstmModel& g) { lstm_loss_and_grad(m, seqs, y, all, g); });
  EXPECT_LT(err, 1e-5);
}

TEST(Lstm, ZeroEpochsAndOrderInvariance) {
  std::mt19937_64 rng(11);
  std::vector<Matrix> seqs;
  for (int i = 0; i < 12; ++i) seqs.push_back(random_matrix(5, 3, rng));
  const auto y = random_labels(12, rng);
  LstmOptions o;
  o.hidden = 4;
  o.epochs = 0;
  o.seed = 2;
  const auto a = train_lstm(seqs, y, o);
  const auto init = LstmModel::init(3, 4, 2, 2);
  EXPECT_EQ(a.logit(seqs[0]), init.logit(seqs[0]));

  // Full-batch steps without shuffling: the gradient is a sum over samples,
  // so a permuted corpus reaches the same weights up to summation order.
  o.epochs = 5;
  o.shuffle = false;
  o.batch_size = 12;
  const auto m1 = train_lstm(seqs, y, o);
  std::vector<std::size_t> perm(12);
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.end());
  std::vector<Matrix> seqs2;
  Bools y2;
  for (auto i : perm) {
    seqs2.push_back(seqs[i]);
    y2.push_back(y[i]);
  }
  const auto m2 = train_lstm(seqs2, y2, o);
  for (std::size_t i = 0; i < 12; ++i) EXPECT_NEAR(m1.logit(seqs[i]), m2.logit(seqs[i]), 1e-12);
  const auto m3 = train_lstm(seqs, y, o);
  EXPECT_EQ(m1.head_w, m3.head_w);
}

TEST(Lstm, InconsistentShapesThrow) {
  std::vector<Matrix> seqs{Matrix(4, 3), Matrix(4, 2)};
  try {
    train_lstm(seqs, {true, false});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kShape);
  }
}

TEST(ModelIo, RoundTripsEveryKind) {
  std::mt19937_64 rng(12);
  const auto dir = std::filesystem::temp_directory_path();
  const auto x = random_matrix(20, 3, rng);
  const auto y = random_labels(20, rng);
  SvmOptions so;
  so.c = 5;
  const auto svm = train_svm_rbf(x, y, so);
  const auto mlp = MlpModel::init(3, 5, 1);
  const auto lstm = LstmModel::init(3, 4, 2, 1);
  const ClassifierModel models[] = {ThresholdModel{0.42}, svm, mlp, lstm};
  for (std::size_t k = 0; k < 4; ++k) {
    const auto path = dir / ("lrp4rag_model_" + std::to_string(k) + ".rpcm");
    save_model(models[k], path);
    const auto back = load_model(path);
    ASSERT_EQ(back.index(), models[k].index());
    if (k == 0) EXPECT_EQ(std::get<ThresholdModel>(back).threshold, 0.42);
    if (k == 1) EXPECT_EQ(std::get<SvmModel>(back).decision(x.row(3)), svm.decision(x.row(3)));
    if (k == 2) EXPECT_EQ(std::get<MlpModel>(back).logit(x.row(3)), mlp.logit(x.row(3)));
    if (k == 3) EXPECT_EQ(std::get<LstmModel>(back).logit(x), lstm.logit(x));
    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 1);
    EXPECT_THROW(load_model(path), Error);
    std::filesystem::remove(path);
  }
}
