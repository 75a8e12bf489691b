#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "lrp4rag/lrp4rag.h"

extern "C" int capi_c_roundtrip(const char* path);

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("lrp4rag_capi_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST(Capi, CallableFromC) {
  const auto dir = scratch("c");
  EXPECT_EQ(capi_c_roundtrip((dir / "m.lrpm").c_str()), 1);
}

TEST(Capi, NullArgumentsReportErrors) {
  lrp_matrix* m = nullptr;
  EXPECT_EQ(lrp_matrix_create(1, 1, nullptr, nullptr), LRP_ERR_ARGUMENT);
  EXPECT_STRNE(lrp_last_error(), "");
  EXPECT_EQ(lrp_matrix_import(nullptr, &m), LRP_ERR_ARGUMENT);
  EXPECT_EQ(lrp_dataset_size(nullptr), 0u);
  lrp_matrix_free(nullptr);
  lrp_dataset_free(nullptr);
  lrp_report_free(nullptr);
  EXPECT_STREQ(lrp_status_name(LRP_ERR_FORMAT), "format error");
}

TEST(Capi, FormatErrorsMapToStatus) {
  const auto dir = scratch("fmt");
  {
    std::ofstream bad(dir / "bad.lrpm", std::ios::binary);
    bad << "LRPMxxxx";
  }
  lrp_matrix* m = nullptr;
  EXPECT_EQ(lrp_matrix_import((dir / "bad.lrpm").c_str(), &m), LRP_ERR_FORMAT);
  EXPECT_EQ(m, nullptr);
  EXPECT_EQ(lrp_matrix_import((dir / "missing.lrpm").c_str(), &m), LRP_ERR_IO);
  lrp_matrix* ok = nullptr;
  ASSERT_EQ(lrp_matrix_create(1, 1, nullptr, &ok), LRP_OK);
  EXPECT_STREQ(lrp_last_error(), "");
  double buf[1];
  EXPECT_EQ(lrp_matrix_read(ok, buf, 0), LRP_ERR_SIZE);
  lrp_matrix_free(ok);
}

TEST(Capi, SynthDetectSweepUtestFigures) {
  lrp_synth_spec spec;
  lrp_synth_spec_default(&spec);
  spec.n_samples = 200;
  spec.delta = 0.75;
  spec.rows = 8;
  spec.cols = 16;
  spec.seed = 3;
  lrp_dataset* ds = nullptr;
  ASSERT_EQ(lrp_synth(&spec, &ds), LRP_OK);
  EXPECT_EQ(lrp_dataset_size(ds), 200u);
  int label = 7;
  ASSERT_EQ(lrp_dataset_label(ds, 0, &label), LRP_OK);
  EXPECT_TRUE(label == 0 || label == 1);
  EXPECT_EQ(lrp_dataset_label(ds, 200, &label), LRP_ERR_SIZE);

  const auto dir = scratch("pipeline");
  ASSERT_EQ(lrp_dataset_save(ds, dir.c_str()), LRP_OK);
  lrp_dataset* loaded = nullptr;
  ASSERT_EQ(lrp_dataset_load(dir.c_str(), &loaded), LRP_OK);
  EXPECT_EQ(lrp_dataset_size(loaded), 200u);

  lrp_detect_options det;
  lrp_detect_options_default(&det);
  EXPECT_EQ(det.l_new, 220u);
  EXPECT_EQ(det.k, 5u);
  det.method = LRP_METHOD_THRESHOLD;
  det.l_new = 50;
  lrp_report* r = nullptr;
  ASSERT_EQ(lrp_detect(loaded, &det, &r), LRP_OK) << lrp_last_error();
  lrp_metrics pooled;
  ASSERT_EQ(lrp_report_metrics(r, -1, &pooled), LRP_OK);
  EXPECT_GT(pooled.f1, 0.9);
  EXPECT_EQ(lrp_report_fold_count(r), 5u);
  EXPECT_NE(std::strstr(lrp_report_csv(r), "pooled,200,"), nullptr);
  EXPECT_NE(std::strstr(lrp_report_text(r), "pooled"), nullptr);
  lrp_report_free(r);

  det.method = static_cast<lrp_method>(42);
  EXPECT_EQ(lrp_detect(loaded, &det, &r), LRP_ERR_CONFIG);
  det.method = LRP_METHOD_SVM;
  ASSERT_EQ(lrp_detect_save_model(loaded, &det, (dir / "svm.rpcm").c_str()), LRP_OK);
  EXPECT_TRUE(fs::exists(dir / "svm.rpcm"));

  ASSERT_EQ(lrp_sweep(loaded, LRP_FEATURE_RESPONSE, 100, 0, 1, 0.01, &r), LRP_OK);
  double auc = 0;
  ASSERT_EQ(lrp_report_scalar(r, "auc", &auc), LRP_OK);
  EXPECT_GT(auc, 0.95);
  EXPECT_EQ(lrp_report_scalar(r, "nope", &auc), LRP_ERR_ARGUMENT);
  lrp_report_free(r);

  lrp_utest_options ut;
  lrp_utest_options_default(&ut);
  ut.n = 50;
  ut.iters = 10;
  ASSERT_EQ(lrp_utest(loaded, &ut, &r), LRP_OK);
  double p = 1;
  ASSERT_EQ(lrp_report_scalar(r, "response", &p), LRP_OK);
  EXPECT_LT(p, 0.05);
  lrp_report_free(r);
  ut.n = 150;
  EXPECT_EQ(lrp_utest(loaded, &ut, &r), LRP_ERR_SIZE);

  for (auto kind : {LRP_FIGURE_BOX, LRP_FIGURE_LINE, LRP_FIGURE_HEATMAP}) {
    const auto path = dir / ("fig" + std::to_string(kind) + ".csv");
    ASSERT_EQ(lrp_figure_csv(loaded, kind, 100, 8, 8, path.c_str()), LRP_OK);
    EXPECT_GT(fs::file_size(path), 20u);
  }
  lrp_dataset_free(loaded);
  lrp_dataset_free(ds);
}

TEST(Capi, RelevancePartialFailure) {
  const auto dir = scratch("relevance");
  {
    std::ofstream corpus(dir / "corpus.jsonl");
    corpus << R"({"id":"ok","context":"a b c","question":"d","template":"{C} {Q}","label":false})" << '\n';
    std::string long_ctx;
    for (int i = 0; i < 40; ++i) long_ctx += "w ";
    corpus << R"({"id":"long","context":")" << long_ctx << R"(","question":"d","template":"{C} {Q}"})" << '\n';
  }
  lrp_model_config cfg;
  lrp_model_config_default(&cfg);
  cfg.n_layers = 1;
  cfg.max_seq_len = 32;
  lrp_model* model = nullptr;
  ASSERT_EQ(lrp_model_random(&cfg, 1, &model), LRP_OK);
  ASSERT_EQ(lrp_model_save(model, (dir / "m.rptw").c_str()), LRP_OK);
  lrp_model* loaded = nullptr;
  ASSERT_EQ(lrp_model_load((dir / "m.rptw").c_str(), &loaded), LRP_OK);

  lrp_relevance_options opts;
  lrp_relevance_options_default(&opts);
  opts.max_new = 3;
  size_t failed = 0;
  EXPECT_EQ(lrp_run_relevance(loaded, (dir / "corpus.jsonl").c_str(), (dir / "out").c_str(), &opts, &failed),
            LRP_ERR_PARTIAL);
  EXPECT_EQ(failed, 1u);
  EXPECT_NE(std::string(lrp_last_error()).find("long"), std::string::npos);
  lrp_dataset* ds = nullptr;
  ASSERT_EQ(lrp_dataset_load((dir / "out").c_str(), &ds), LRP_OK);
  EXPECT_EQ(lrp_dataset_size(ds), 1u);
  lrp_dataset_free(ds);

  cfg.n_heads = 3;
  lrp_model* bad = nullptr;
  EXPECT_EQ(lrp_model_random(&cfg, 1, &bad), LRP_ERR_CONFIG);
  lrp_model_free(model);
  lrp_model_free(loaded);
}
