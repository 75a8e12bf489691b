// Command-line front end; talks to the library only through the C API.
#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>

#include "lrp4rag/lrp4rag.h"

namespace {

constexpr int kExitPartial = 1;
constexpr int kExitError = 2;

struct Freer {
  void operator()(lrp_matrix* p) const { lrp_matrix_free(p); }
  void operator()(lrp_model* p) const { lrp_model_free(p); }
  void operator()(lrp_dataset* p) const { lrp_dataset_free(p); }
  void operator()(lrp_report* p) const { lrp_report_free(p); }
};
template <class T>
using Handle = std::unique_ptr<T, Freer>;

// Thrown to unwind out of a subcommand with an exit code.
struct Exit {
  int code;
};

void check(lrp_status s, const char* what) {
  if (s == LRP_OK) return;
  std::fprintf(stderr, "lrp4rag: %s: %s: %s\n", what, lrp_status_name(s), lrp_last_error());
  throw Exit{s == LRP_ERR_PARTIAL ? kExitPartial : kExitError};
}

Handle<lrp_dataset> load(const std::string& path) {
  lrp_dataset* ds = nullptr;
  check(lrp_dataset_load(path.c_str(), &ds), "loading dataset");
  return Handle<lrp_dataset>(ds);
}

void emit(const lrp_report* r, const std::string& out) {
  if (out.empty() || out == "-") {
    std::fputs(lrp_report_csv(r), stdout);
  } else {
    check(lrp_report_write_csv(r, out.c_str()), "writing report");
  }
}

const std::map<std::string, lrp_feature> kFeatures{
    {"prompt", LRP_FEATURE_PROMPT}, {"response", LRP_FEATURE_RESPONSE}, {"concat", LRP_FEATURE_CONCAT}};
const std::map<std::string, lrp_method> kMethods{
    {"threshold", LRP_METHOD_THRESHOLD}, {"svm", LRP_METHOD_SVM}, {"mlp", LRP_METHOD_MLP}, {"lstm", LRP_METHOD_LSTM}};

void add_model_flags(CLI::App* cmd, lrp_model_config& cfg) {
  cmd->add_option("--vocab", cfg.vocab_size, "Vocabulary size")->capture_default_str();
  cmd->add_option("--d-model", cfg.d_model, "Model width")->capture_default_str();
  cmd->add_option("--heads", cfg.n_heads, "Attention heads")->capture_default_str();
  cmd->add_option("--layers", cfg.n_layers, "Transformer blocks")->capture_default_str();
  cmd->add_option("--d-ff", cfg.d_ff, "Feed-forward width")->capture_default_str();
  cmd->add_option("--max-seq", cfg.max_seq_len, "Context length")->capture_default_str();
  cmd->add_option("--embedding-std", cfg.embedding_std, "Token embedding init scale")->capture_default_str();
  cmd->add_flag("--tie-head", cfg.tie_head, "Initialise the output head from the embedding");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Relevance propagation and hallucination detection for RAG outputs"};
  app.require_subcommand(1);
  app.set_version_flag("--version", lrp_version());

  std::uint64_t seed = 0;
  std::string out;

  // init-model
  lrp_model_config model_cfg;
  lrp_model_config_default(&model_cfg);
  auto* init_cmd = app.add_subcommand("init-model", "Write a seeded random toy transformer");
  add_model_flags(init_cmd, model_cfg);
  init_cmd->add_option("--seed", seed, "Initialisation seed")->capture_default_str();
  init_cmd->add_option("--out", out, "Parameter file")->required();

  // relevance
  lrp_relevance_options rel_opts;
  lrp_relevance_options_default(&rel_opts);
  std::string corpus_path, model_path;
  auto* rel_cmd = app.add_subcommand("relevance", "Compute a relevance matrix for every corpus record");
  rel_cmd->add_option("--corpus", corpus_path, "JSONL corpus")->required()->check(CLI::ExistingFile);
  rel_cmd->add_option("--model", model_path, "Parameter file (default: seeded random model)");
  add_model_flags(rel_cmd, model_cfg);
  rel_cmd->add_option("--seed", seed, "Seed for the random model")->capture_default_str();
  rel_cmd->add_option("--max-new", rel_opts.max_new, "Greedy decoding budget")->capture_default_str();
  rel_cmd->add_option("--stop-token", rel_opts.stop_token, "Stop token id")->capture_default_str();
  rel_cmd->add_option("--jobs", rel_opts.jobs, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  rel_cmd->add_option("--epsilon", rel_opts.epsilon, "Relevance normalization stabilizer")->capture_default_str();
  rel_cmd->add_flag("--normalize-per-entry", rel_opts.normalize_per_entry,
                    "Re-normalize relevance after every traced operation");
  rel_cmd->add_option("--out", out, "Output directory")->required();

  // synth
  lrp_synth_spec synth;
  lrp_synth_spec_default(&synth);
  auto* synth_cmd = app.add_subcommand("synth", "Generate a labelled synthetic relevance corpus");
  synth_cmd->add_option("--n", synth.n_samples, "Samples")->capture_default_str();
  synth_cmd->add_option("--rate", synth.hallucination_rate, "Hallucinated fraction")->capture_default_str();
  synth_cmd->add_option("--delta", synth.delta, "Mean gap of hallucinated cells")->capture_default_str();
  synth_cmd->add_option("--rows", synth.rows, "Response length")->capture_default_str();
  synth_cmd->add_option("--cols", synth.cols, "Prompt length")->capture_default_str();
  synth_cmd->add_option("--mu", synth.mu, "Normal-class cell mean")->capture_default_str();
  synth_cmd->add_option("--sigma", synth.sigma, "Cell noise")->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed, "Seed")->capture_default_str();
  synth_cmd->add_option("--out", out, "Output directory")->required();

  // detect
  lrp_detect_options det;
  lrp_detect_options_default(&det);
  std::string data, text_out, model_out;
  auto* det_cmd = app.add_subcommand("detect", "Cross-validated hallucination detection");
  det_cmd->add_option("--data", data, "Manifest or dataset directory")->required();
  det_cmd->add_option("--method", det.method, "threshold|svm|mlp|lstm")
      ->transform(CLI::CheckedTransformer(kMethods))
      ->default_str("svm");
  det_cmd->add_option("--feature", det.feature, "prompt|response|concat")
      ->transform(CLI::CheckedTransformer(kFeatures))
      ->default_str("response");
  det_cmd->add_option("--l-new", det.l_new, "Resampled profile length")->capture_default_str();
  det_cmd->add_option("--k", det.k, "Folds")->capture_default_str();
  det_cmd->add_option("--seed", det.seed, "Seed")->capture_default_str();
  det_cmd->add_option("--svm-gamma", det.svm_gamma, "RBF width (<= 0: automatic)")->capture_default_str();
  det_cmd->add_option("--svm-c", det.svm_c, "SVM box constraint")->capture_default_str();
  det_cmd->add_option("--mlp-hidden", det.mlp_hidden, "MLP hidden units")->capture_default_str();
  det_cmd->add_option("--mlp-epochs", det.mlp_epochs, "MLP epochs")->capture_default_str();
  det_cmd->add_option("--mlp-lr", det.mlp_lr, "MLP learning rate")->capture_default_str();
  det_cmd->add_option("--lstm-hidden", det.lstm_hidden, "LSTM hidden size")->capture_default_str();
  det_cmd->add_option("--lstm-layers", det.lstm_layers, "LSTM layers")->capture_default_str();
  det_cmd->add_option("--lstm-epochs", det.lstm_epochs, "LSTM epochs")->capture_default_str();
  det_cmd->add_option("--lstm-lr", det.lstm_lr, "LSTM learning rate")->capture_default_str();
  det_cmd->add_option("--lstm-batch", det.lstm_batch, "LSTM mini-batch size")->capture_default_str();
  det_cmd->add_option("--t-fix", det.t_fix, "LSTM steps (resampled response axis)")->capture_default_str();
  det_cmd->add_option("--p-fix", det.p_fix, "LSTM inputs (resampled prompt axis)")->capture_default_str();
  det_cmd->add_option("--out", out, "Metrics CSV (default stdout)");
  det_cmd->add_option("--text", text_out, "Also write the readable report here");
  det_cmd->add_option("--save-model", model_out, "Fit on all samples and save the classifier");

  // sweep
  lrp_feature sweep_feature = LRP_FEATURE_RESPONSE;
  std::size_t sweep_l_new = 100;
  double grid_start = 0.0, grid_stop = 1.0, grid_step = 0.01;
  auto* sweep_cmd = app.add_subcommand("sweep", "Threshold sweep over mean relevance scores");
  sweep_cmd->add_option("--data", data, "Manifest or dataset directory")->required();
  sweep_cmd->add_option("--feature", sweep_feature, "prompt|response|concat")
      ->transform(CLI::CheckedTransformer(kFeatures))
      ->default_str("response");
  sweep_cmd->add_option("--l-new", sweep_l_new, "Resampled profile length")->capture_default_str();
  sweep_cmd->add_option("--start", grid_start, "First threshold")->capture_default_str();
  sweep_cmd->add_option("--stop", grid_stop, "Last threshold")->capture_default_str();
  sweep_cmd->add_option("--step", grid_step, "Threshold step")->capture_default_str();
  sweep_cmd->add_option("--seed", seed, "Unused; accepted for uniformity");
  sweep_cmd->add_option("--out", out, "Sweep CSV (default stdout)");

  // utest
  lrp_utest_options ut;
  lrp_utest_options_default(&ut);
  std::string statistic = "both";
  auto* ut_cmd = app.add_subcommand("utest", "Repeated-subsample Mann-Whitney U test between classes");
  ut_cmd->add_option("--data", data, "Manifest or dataset directory")->required();
  ut_cmd->add_option("--n", ut.n, "Samples drawn per class")->capture_default_str();
  ut_cmd->add_option("--iters", ut.iters, "Repetitions")->capture_default_str();
  ut_cmd->add_option("--seed", ut.seed, "Seed")->capture_default_str();
  ut_cmd->add_option("--l-new", ut.l_new, "Resampled profile length")->capture_default_str();
  ut_cmd->add_option("--statistic", statistic, "prompt|response|both")
      ->check(CLI::IsMember({"prompt", "response", "both"}))
      ->capture_default_str();
  ut_cmd->add_option("--out", out, "Report CSV (default stdout)");

  // figures
  std::string figure = "all";
  std::size_t fig_l_new = 100, heat_rows = 32, heat_cols = 64;
  auto* fig_cmd = app.add_subcommand("figures", "Emit box, line and heatmap data as CSV");
  fig_cmd->add_option("--data", data, "Manifest or dataset directory")->required();
  fig_cmd->add_option("--kind", figure, "box|line|heatmap|all")
      ->check(CLI::IsMember({"box", "line", "heatmap", "all"}))
      ->capture_default_str();
  fig_cmd->add_option("--l-new", fig_l_new, "Resampled profile length")->capture_default_str();
  fig_cmd->add_option("--heat-rows", heat_rows, "Heatmap rows")->capture_default_str();
  fig_cmd->add_option("--heat-cols", heat_cols, "Heatmap columns")->capture_default_str();
  fig_cmd->add_option("--seed", seed, "Unused; accepted for uniformity");
  fig_cmd->add_option("--out", out, "CSV file, or a directory for --kind all")->required();

  // export-matrix / import-matrix
  std::string in_path;
  auto* exp_cmd = app.add_subcommand("export-matrix", "Convert a CSV matrix to an LRPM file");
  exp_cmd->add_option("--in", in_path, "CSV matrix")->required()->check(CLI::ExistingFile);
  exp_cmd->add_option("--out", out, "LRPM file")->required();
  auto* imp_cmd = app.add_subcommand("import-matrix", "Convert an LRPM file to CSV");
  imp_cmd->add_option("--in", in_path, "LRPM file")->required()->check(CLI::ExistingFile);
  imp_cmd->add_option("--out", out, "CSV file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitError;
  }

  try {
    if (init_cmd->parsed()) {
      lrp_model* m = nullptr;
      check(lrp_model_random(&model_cfg, seed, &m), "creating model");
      Handle<lrp_model> model(m);
      check(lrp_model_save(model.get(), out.c_str()), "saving model");
    } else if (rel_cmd->parsed()) {
      lrp_model* m = nullptr;
      if (model_path.empty()) {
        check(lrp_model_random(&model_cfg, seed, &m), "creating model");
      } else {
        check(lrp_model_load(model_path.c_str(), &m), "loading model");
      }
      Handle<lrp_model> model(m);
      std::size_t failed = 0;
      const auto s = lrp_run_relevance(model.get(), corpus_path.c_str(), out.c_str(), &rel_opts, &failed);
      if (s == LRP_ERR_PARTIAL) {
        std::fprintf(stderr, "lrp4rag: %zu records failed, see %s\n", failed,
                     (std::filesystem::path(out) / "failures.log").c_str());
      }
      check(s, "relevance");
    } else if (synth_cmd->parsed()) {
      lrp_dataset* ds = nullptr;
      check(lrp_synth(&synth, &ds), "generating corpus");
      Handle<lrp_dataset> dataset(ds);
      check(lrp_dataset_save(dataset.get(), out.c_str()), "writing corpus");
    } else if (det_cmd->parsed()) {
      auto dataset = load(data);
      lrp_report* r = nullptr;
      check(lrp_detect(dataset.get(), &det, &r), "detect");
      Handle<lrp_report> report(r);
      emit(report.get(), out);
      if (!out.empty() && out != "-") std::fputs(lrp_report_text(report.get()), stdout);
      if (!text_out.empty()) {
        std::FILE* f = std::fopen(text_out.c_str(), "w");
        if (!f) {
          std::fprintf(stderr, "lrp4rag: cannot open %s\n", text_out.c_str());
          return kExitError;
        }
        std::fputs(lrp_report_text(report.get()), f);
        std::fclose(f);
      }
      if (!model_out.empty()) check(lrp_detect_save_model(dataset.get(), &det, model_out.c_str()), "saving model");
    } else if (sweep_cmd->parsed()) {
      auto dataset = load(data);
      lrp_report* r = nullptr;
      check(lrp_sweep(dataset.get(), sweep_feature, sweep_l_new, grid_start, grid_stop, grid_step, &r), "sweep");
      Handle<lrp_report> report(r);
      emit(report.get(), out);
      if (!out.empty() && out != "-") std::fputs(lrp_report_text(report.get()), stdout);
    } else if (ut_cmd->parsed()) {
      ut.prompt = statistic != "response";
      ut.response = statistic != "prompt";
      auto dataset = load(data);
      lrp_report* r = nullptr;
      check(lrp_utest(dataset.get(), &ut, &r), "utest");
      Handle<lrp_report> report(r);
      emit(report.get(), out);
      if (!out.empty() && out != "-") std::fputs(lrp_report_text(report.get()), stdout);
    } else if (fig_cmd->parsed()) {
      auto dataset = load(data);
      const std::pair<const char*, lrp_figure> kinds[] = {
          {"box", LRP_FIGURE_BOX}, {"line", LRP_FIGURE_LINE}, {"heatmap", LRP_FIGURE_HEATMAP}};
      if (figure == "all") std::filesystem::create_directories(out);
      for (const auto& [name, kind] : kinds) {
        if (figure != "all" && figure != name) continue;
        const std::string path = figure == "all" ? (std::filesystem::path(out) / (std::string(name) + ".csv")).string() : out;
        check(lrp_figure_csv(dataset.get(), kind, fig_l_new, heat_rows, heat_cols, path.c_str()), "figures");
      }
    } else if (exp_cmd->parsed()) {
      lrp_matrix* m = nullptr;
      check(lrp_matrix_import_csv(in_path.c_str(), &m), "reading CSV");
      Handle<lrp_matrix> matrix(m);
      check(lrp_matrix_export(matrix.get(), out.c_str()), "writing matrix");
    } else if (imp_cmd->parsed()) {
      lrp_matrix* m = nullptr;
      check(lrp_matrix_import(in_path.c_str(), &m), "reading matrix");
      Handle<lrp_matrix> matrix(m);
      check(lrp_matrix_export_csv(matrix.get(), out.c_str()), "writing CSV");
    }
  } catch (const Exit& e) {
    return e.code;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "lrp4rag: %s\n", e.what());
    return kExitError;
  }
  return 0;
}
