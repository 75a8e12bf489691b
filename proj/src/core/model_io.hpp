#pragma once

#include <filesystem>
#include <variant>

#include "core/lstm.hpp"
#include "core/mlp.hpp"
#include "core/svm.hpp"

namespace lrp4rag {

struct ThresholdModel {
  double threshold = 0.5;
};

using ClassifierModel = std::variant<ThresholdModel, SvmModel, MlpModel, LstmModel>;

// "RPCM": magic, u32 version, u32 kind tag, hyperparameters, weights.
void save_model(const ClassifierModel& model, const std::filesystem::path& path);
ClassifierModel load_model(const std::filesystem::path& path);

}  // namespace lrp4rag
