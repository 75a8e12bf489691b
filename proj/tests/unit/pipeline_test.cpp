#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "core/corpus.hpp"
#include "core/error.hpp"
#include "core/figures.hpp"
#include "core/matrix_file.hpp"
#include "core/pipeline.hpp"
#include "core/stats.hpp"

using namespace lrp4rag;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("lrp4rag_pipeline_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  return static_cast<ErrorKind>(-1);
}

SynthSpec oracle_spec(double delta_sigmas, std::size_t n, std::uint64_t seed) {
  SynthSpec s;
  s.n_samples = n;
  s.sigma = 0.25;
  s.delta = delta_sigmas * s.sigma;
  s.rows = 8;
  s.cols = 24;
  s.seed = seed;
  return s;
}

std::vector<RelevanceSample> constant_samples(std::size_t n_normal, std::size_t n_hall) {
  std::vector<RelevanceSample> out;
  for (std::size_t i = 0; i < n_normal + n_hall; ++i) {
    out.push_back({"c" + std::to_string(i), Matrix(6, 10, 0.3), i < n_hall});
  }
  return out;
}

}  // namespace

TEST(Corpus, MinimalRecord) {
  std::istringstream in(R"({"id":"1","context":"c","question":"q","template":"{C} {Q}","label":true})");
  const auto recs = parse_corpus(in);
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0].id, "1");
  EXPECT_EQ(recs[0].label, std::optional<bool>(true));
  EXPECT_FALSE(recs[0].response.has_value());
}

TEST(Corpus, MissingFieldNamesFieldAndLine) {
  std::istringstream in(R"({"id":"1","context":"c","template":"{C} {Q}"})");
  try {
    parse_corpus(in, "corpus.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kFormat);
    const std::string msg = e.what();
    EXPECT_NE(msg.find("question"), std::string::npos) << msg;
    EXPECT_NE(msg.find(":1:"), std::string::npos) << msg;
  }
}

TEST(Corpus, RejectsBadTemplatesAndTypes) {
  std::istringstream dup(R"({"id":"1","context":"c","question":"q","template":"{C} {C} {Q}"})");
  EXPECT_THROW(parse_corpus(dup), Error);
  std::istringstream lbl("\n" R"({"id":"1","context":"c","question":"q","template":"{C}{Q}","label":"yes"})");
  try {
    parse_corpus(lbl, "x");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("x:2:"), std::string::npos);
  }
  std::istringstream junk("{not json");
  EXPECT_THROW(parse_corpus(junk), Error);
}

TEST(Corpus, LabelSplitCounting) {
  // Shape of a 989-record export: labels load as given.
  std::ostringstream text;
  for (int i = 0; i < 989; ++i) {
    text << R"({"id":")" << i << R"(","context":"c","question":"q","template":"{C} {Q}","label":)"
         << (i < 510 ? "true" : "false") << "}\n";
  }
  std::istringstream in(text.str());
  const auto recs = parse_corpus(in);
  std::size_t hall = 0;
  for (const auto& r : recs) hall += *r.label;
  EXPECT_EQ(recs.size(), 989u);
  EXPECT_EQ(hall, 510u);
}

TEST(Tokenizer, StableAndInRange) {
  const auto a = tokenize_words("the cat  sat\tthe", 50);
  ASSERT_EQ(a.size(), 4u);
  EXPECT_EQ(a[0], a[3]);
  for (auto t : a) {
    EXPECT_GE(t, 1);
    EXPECT_LT(t, 50);
  }
  const auto templ = tokenize_template("ctx: {C} q: {Q}", 50);
  EXPECT_EQ(templ.size(), 4u);
  EXPECT_EQ(templ[1], kContextMarker);
  EXPECT_EQ(templ[3], kQuestionMarker);
}

TEST(MatrixFile, RoundTripAtF32) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> d;
  Matrix m(3, 5);
  for (auto& v : m.values()) v = d(rng);
  const auto back = decode_matrix(encode_matrix(m));
  ASSERT_EQ(back.rows(), 3u);
  ASSERT_EQ(back.cols(), 5u);
  for (std::size_t i = 0; i < m.size(); ++i) {
    EXPECT_EQ(back.values()[i], static_cast<double>(static_cast<float>(m.values()[i])));
  }
}

TEST(MatrixFile, TruncationAndMagic) {
  auto bytes = encode_matrix(Matrix(2, 2, 1.0));
  auto cut = bytes;
  cut.pop_back();
  EXPECT_EQ(kind_of([&] { decode_matrix(cut); }), ErrorKind::kFormat);
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_EQ(kind_of([&] { decode_matrix(bad); }), ErrorKind::kFormat);
  auto extra = bytes;
  extra.push_back(0);
  EXPECT_EQ(kind_of([&] { decode_matrix(extra); }), ErrorKind::kFormat);
  EXPECT_EQ(kind_of([&] { decode_matrix({'L', 'R'}); }), ErrorKind::kFormat);
}

TEST(MatrixFile, LargeMatrixByteIdentical) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1, 1);
  Matrix m(200, 400);
  for (auto& v : m.values()) v = u(rng);
  const auto dir = scratch("big");
  export_matrix(m, dir / "a.lrpm");
  export_matrix(import_matrix(dir / "a.lrpm"), dir / "b.lrpm");
  EXPECT_EQ(std::hash<std::string>{}(slurp(dir / "a.lrpm")), std::hash<std::string>{}(slurp(dir / "b.lrpm")));
  EXPECT_EQ(fs::file_size(dir / "a.lrpm"), 4u + 4u + 16u + 200u * 400u * 4u);
}

TEST(MatrixFile, Csv) {
  std::istringstream in("1, 2.5,-3\n4,5,6\n");
  const auto m = read_matrix_csv(in);
  EXPECT_EQ(m, Matrix::from_rows({{1, 2.5, -3}, {4, 5, 6}}));
  std::ostringstream out;
  write_matrix_csv(m, out);
  EXPECT_EQ(out.str(), "1,2.5,-3\n4,5,6\n");
  std::istringstream ragged("1,2\n3\n");
  EXPECT_THROW(read_matrix_csv(ragged), Error);
}

TEST(Synth, DeterministicBytesAndExactRate) {
  const auto spec = oracle_spec(3, 50, 7);
  const auto a = scratch("synth_a"), b = scratch("synth_b");
  write_dataset(synth_corpus(spec), a);
  write_dataset(synth_corpus(spec), b);
  for (const auto& e : fs::directory_iterator(a)) EXPECT_EQ(slurp(e.path()), slurp(b / e.path().filename()));
  const auto loaded = load_dataset(a);
  std::size_t hall = 0;
  for (const auto& s : loaded) {
    hall += *s.label;
    for (double v : s.r_star.values()) EXPECT_GE(v, 0.0);
  }
  EXPECT_EQ(hall, 25u);
  EXPECT_THROW(synth_corpus(SynthSpec{10, 1.0}), Error);
}

TEST(Synth, SeparatedCorpusSweepsCleanly) {
  const auto samples = synth_corpus(oracle_spec(3, 500, 1));
  const auto sweep = run_sweep(samples, FeatureSource::kResponse, 100);
  double best_f1 = 0;
  for (const auto& r : sweep.rows) best_f1 = std::max(best_f1, r.metrics.f1);
  EXPECT_GT(best_f1, 0.9);
}

TEST(Synth, NoGapGivesChanceAuc) {
  const auto samples = synth_corpus(oracle_spec(0, 500, 1));
  const auto sweep = run_sweep(samples, FeatureSource::kResponse, 100);
  EXPECT_NEAR(sweep.auc, 0.5, 0.05);
}

TEST(Profiles, MeanScoreExamples) {
  EXPECT_NEAR(mean_score({{}, {0.2, 0.4}}, FeatureSource::kResponse), 0.3, 1e-15);
  EXPECT_EQ(mean_score({std::vector<double>(7, 0.5), {}}, FeatureSource::kPrompt), 0.5);
  std::vector<double> ramp(100);
  std::iota(ramp.begin(), ramp.end(), 0.0);
  const auto norm = clip_normalize(resample_1d(ramp, 100), 0, 100);
  EXPECT_NEAR(mean_score({norm, {}}, FeatureSource::kPrompt), 0.5, 1e-9);
}

TEST(Relevance, ToyCorpusShapesDeterminismAndIsolation) {
  TransformerConfig cfg;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.d_model = 16;
  cfg.d_ff = 32;
  cfg.max_seq_len = 40;
  const auto params = TransformerParams::random(cfg, 5);
  std::vector<CorpusRecord> corpus{
      {"a", "red fox jumps", "what jumps", "ctx {C} q {Q} a", std::nullopt, true},
      {"b", "one two three", "count", "{C} {Q}", std::string("one two"), false},
      {"c", "x", "y", "{Q} then {C}", std::nullopt, std::nullopt},
  };
  RelevanceOptions opts;
  opts.max_new = 5;
  opts.stop_token = 0;
  opts.jobs = 2;
  const auto d1 = scratch("rel1"), d2 = scratch("rel2");
  const auto r1 = run_relevance(corpus, params, d1, opts);
  const auto r2 = run_relevance(corpus, params, d2, opts);
  ASSERT_TRUE(r1.failures.empty());
  ASSERT_EQ(r1.manifest.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    TokenSequence response;
    const auto m = record_relevance(corpus[i], params, opts, &response);
    const auto prompt = assemble_prompt(prompt_parts(corpus[i], cfg.vocab_size));
    EXPECT_EQ(r1.manifest[i].rows, response.size());
    EXPECT_EQ(r1.manifest[i].cols, prompt.tokens.size());
    EXPECT_EQ(import_matrix(d1 / r1.manifest[i].file).rows(), response.size());
  }
  EXPECT_EQ(r1.manifest[1].rows, 2u);
  EXPECT_EQ(slurp(d1 / kManifestName), slurp(d2 / kManifestName));
  for (const auto& e : r1.manifest) EXPECT_EQ(slurp(d1 / e.file), slurp(d2 / e.file));

  std::string long_text;
  for (int i = 0; i < 60; ++i) long_text += "w ";
  corpus.insert(corpus.begin() + 1, CorpusRecord{"long", long_text, "q", "{C} {Q}", std::nullopt, false});
  const auto d3 = scratch("rel3");
  const auto r3 = run_relevance(corpus, params, d3, opts);
  ASSERT_EQ(r3.failures.size(), 1u);
  EXPECT_EQ(r3.failures[0].id, "long");
  EXPECT_NE(r3.failures[0].message.find("max_seq_len"), std::string::npos);
  EXPECT_EQ(r3.manifest.size(), 3u);
  EXPECT_TRUE(fs::exists(d3 / "failures.log"));
}

TEST(Detect, ThresholdOnSeparatedCorpus) {
  DetectOptions o;
  o.method = DetectMethod::kThreshold;
  o.l_new = 100;
  o.seed = 3;
  const auto report = run_detect(synth_corpus(oracle_spec(3, 500, 2)), o);
  EXPECT_GT(report.cv.pooled.f1, 0.9);
  EXPECT_EQ(report.cv.folds.size(), 5u);
  const auto csv = detect_csv(report);
  EXPECT_EQ(csv.rfind("fold,n,accuracy,precision,recall,f1,tp,fp,tn,fn\n", 0), 0u);
  EXPECT_NE(csv.find("\npooled,500,"), std::string::npos);
}

TEST(Detect, ConstantMatricesGiveMajorityRate) {
  const auto samples = constant_samples(20, 10);
  for (const auto method : {DetectMethod::kThreshold, DetectMethod::kSvm, DetectMethod::kMlp, DetectMethod::kLstm}) {
    DetectOptions o;
    o.method = method;
    o.l_new = 20;
    o.mlp.epochs = 300;
    o.lstm.hidden = 6;
    o.lstm.epochs = 40;
    o.lstm.lr = 1e-2;
    o.t_fix = 4;
    o.p_fix = 5;
    const auto r = run_detect(samples, o);
    EXPECT_NEAR(r.cv.pooled.accuracy, 20.0 / 30.0, 1e-12) << method_name(method);
  }
}

TEST(Detect, FeatureSourcesAndLabels) {
  auto samples = synth_corpus(oracle_spec(3, 60, 4));
  DetectOptions o;
  o.method = DetectMethod::kMlp;
  o.mlp.epochs = 50;
  o.l_new = 30;
  for (const auto f : {FeatureSource::kPrompt, FeatureSource::kResponse, FeatureSource::kConcat}) {
    o.feature = f;
    EXPECT_NO_THROW(run_detect(samples, o));
  }
  const auto profiles = normalized_profiles(samples, 30);
  EXPECT_EQ(vector_features(profiles, FeatureSource::kConcat).cols(), 60u);
  samples[3].label.reset();
  EXPECT_EQ(kind_of([&] { run_detect(samples, o); }), ErrorKind::kFormat);
}

TEST(Detect, MixedFeatureShapesThrow) {
  std::vector<RelevanceProfile> profiles{{{0.1, 0.2}, {0.3}}, {{0.1}, {0.3}}};
  EXPECT_EQ(kind_of([&] { vector_features(profiles, FeatureSource::kPrompt); }), ErrorKind::kShape);
}

// A held-out sample's prediction may depend only on the other folds: flipping
// the held-out labels, or reshuffling which training sample sits where, must
// leave that fold's predictions unchanged.
TEST(Detect, NoLeakageFromHeldOutFold) {
  auto samples = synth_corpus(oracle_spec(1, 100, 6));
  // A distinctive sample duplicated into the dataset.
  samples[10].r_star = Matrix(8, 24, 5.0);
  samples[11] = samples[10];
  DetectOptions o;
  o.method = DetectMethod::kThreshold;
  o.l_new = 24;
  o.seed = 12;
  const auto base = run_detect(samples, o);
  const auto folds = kfold_partition(samples.size(), o.k, o.seed);
  const auto& held = folds[0];

  auto flipped = samples;
  for (auto i : held) flipped[i].label = !*flipped[i].label;
  const auto f1 = run_detect(flipped, o);
  EXPECT_EQ(f1.cv.folds[0].predictions, base.cv.folds[0].predictions);

  auto permuted = samples;
  std::vector<std::size_t> others;
  for (std::size_t f = 1; f < folds.size(); ++f) others.insert(others.end(), folds[f].begin(), folds[f].end());
  auto shuffled = others;
  std::mt19937_64 rng(1);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  for (std::size_t i = 0; i < others.size(); ++i) permuted[others[i]] = samples[shuffled[i]];
  const auto p1 = run_detect(permuted, o);
  EXPECT_EQ(p1.cv.folds[0].predictions, base.cv.folds[0].predictions);

  // kfold_cv never hands a test index to the trainer.
  std::vector<bool> labels = require_labels(samples);
  kfold_cv(labels, 5, 3, [](std::span<const std::size_t> train, std::span<const std::size_t> test) {
    for (auto t : test) EXPECT_EQ(std::find(train.begin(), train.end(), t), train.end());
    return std::vector<bool>(test.size(), false);
  });
}

TEST(Detect, SaveModelFitsAllSamples) {
  const auto samples = synth_corpus(oracle_spec(3, 40, 8));
  DetectOptions o;
  o.method = DetectMethod::kSvm;
  o.l_new = 20;
  const auto m = fit_detector(samples, o);
  EXPECT_TRUE(std::holds_alternative<SvmModel>(m));
}

TEST(Utest, SeparatedAndDeterministic) {
  const auto samples = synth_corpus(oracle_spec(3, 500, 3));
  UtestOptions o;
  o.n = 200;
  o.iters = 20;
  o.seed = 4;
  const auto rows = run_utest(samples, o);
  ASSERT_EQ(rows.size(), 2u);
  for (const auto& r : rows) EXPECT_LT(r.median_p, 0.05);
  EXPECT_EQ(utest_csv(rows, o), utest_csv(run_utest(samples, o), o));
  o.n = 300;
  EXPECT_EQ(kind_of([&] { run_utest(samples, o); }), ErrorKind::kSize);
}

TEST(Figures, BoxDegenerateQuartiles) {
  std::vector<RelevanceSample> samples{{"n", Matrix(3, 4, 1.0), false}, {"h", Matrix(3, 4, 0.2), true}};
  const auto csv = figure_csv(FigureKind::kBox, samples);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "statistic,class,n,min,q1,median,q3,max,whisker_low,whisker_high,outliers");
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    ASSERT_GE(cells.size(), 8u);
    EXPECT_EQ(cells[2], "1");
    EXPECT_EQ(cells[3], cells[5]);
    EXPECT_EQ(cells[5], cells[7]);
  }
  EXPECT_EQ(rows, 4);
  const auto b = box_stats({1, 2, 3, 4, 100});
  EXPECT_EQ(b.median, 3);
  EXPECT_EQ(b.q1, 2);
  EXPECT_EQ(b.q3, 4);
  EXPECT_EQ(b.whisker_high, 4);
  EXPECT_EQ(b.outliers, std::vector<double>{100});
}

TEST(Figures, LineHasHundredPositionsPerClass) {
  const auto samples = synth_corpus(oracle_spec(3, 40, 5));
  const auto csv = figure_csv(FigureKind::kLine, samples);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "statistic,class,position,value");
  std::map<std::string, int> counts;
  while (std::getline(in, line)) {
    const auto a = line.find(','), b = line.find(',', a + 1);
    ++counts[line.substr(0, b)];
  }
  ASSERT_EQ(counts.size(), 4u);
  for (const auto& [k, n] : counts) EXPECT_EQ(n, 100) << k;
}

TEST(Figures, HeatmapSeparatesClasses) {
  const auto samples = synth_corpus(oracle_spec(3, 200, 6));
  FigureOptions o;
  const auto csv = figure_csv(FigureKind::kHeatmap, samples, o);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "class,row,col,value");
  std::map<std::pair<int, int>, double> normal, hall;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string cls, r, c, v;
    std::getline(ss, cls, ',');
    std::getline(ss, r, ',');
    std::getline(ss, c, ',');
    std::getline(ss, v, ',');
    (cls == "normal" ? normal : hall)[{std::stoi(r), std::stoi(c)}] = std::stod(v);
  }
  ASSERT_EQ(normal.size(), o.heat_rows * o.heat_cols);
  std::size_t lower = 0;
  for (const auto& [cell, v] : hall) lower += v < normal[cell];
  EXPECT_GE(static_cast<double>(lower), 0.95 * static_cast<double>(hall.size()));
}

TEST(Manifest, RoundTripAndShapeCheck) {
  const auto dir = scratch("manifest");
  const auto samples = synth_corpus(oracle_spec(1, 5, 1));
  write_dataset(samples, dir);
  const auto back = load_dataset(dir / kManifestName);
  ASSERT_EQ(back.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(back[i].id, samples[i].id);
    EXPECT_EQ(back[i].label, samples[i].label);
  }
  auto entries = read_manifest(dir / kManifestName);
  entries[0].rows = 99;
  write_manifest(entries, dir / kManifestName);
  EXPECT_EQ(kind_of([&] { load_dataset(dir); }), ErrorKind::kFormat);
}
