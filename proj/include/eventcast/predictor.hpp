#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>
#include <variant>

#include "eventcast/feedforward.hpp"
#include "eventcast/lstm.hpp"
#include "eventcast/observables.hpp"
#include "eventcast/reservoir.hpp"
#include "json.hpp"

namespace eventcast {

enum class PredictorKind { Feedforward, Lstm, Reservoir };

std::string_view to_string(PredictorKind kind);
PredictorKind predictor_kind_from_string(std::string_view name);

using PredictorConfig = std::variant<FfConfig, LstmConfig, RcConfig>;

PredictorKind kind_of(const PredictorConfig& config);

nlohmann::json to_json(const PredictorConfig& config);
PredictorConfig predictor_config_from_json(PredictorKind kind, const nlohmann::json& j);

struct InputSchema {
    Eigen::Index r = 0;
    std::optional<DelayEmbedding> embedding;

    static InputSchema of(const ObservationDataset& ds) { return {ds.dim(), ds.embedding}; }
    bool operator==(const InputSchema& o) const;
};

struct PredictorModel {
    PredictorConfig config;
    InputSchema schema;
    std::uint64_t seed = 0;
    TrainingLog log;
    std::variant<FfModel, LstmModel, RcModel> impl;

    PredictorKind kind() const { return kind_of(config); }
};

/// Feedforward models consume delay-embedded rows; recurrent models the raw sequence.
/// A non-negative `train_rows` restricts training to the first rows of the record.
PredictorModel train_predictor(const ObservationDataset& ds, const PredictorConfig& config, std::uint64_t seed,
                               Eigen::Index train_rows = -1);

/// Predictions aligned with test_targets(ds). Recurrent models run causally
/// from the start of the record, so row k never sees inputs after k.
Eigen::VectorXd predict_test(const PredictorModel& model, const ObservationDataset& ds);
/// Predictions aligned with training_pairs(ds).targets.
Eigen::VectorXd predict_train(const PredictorModel& model, const ObservationDataset& ds);

/// Binary container: "EVCM", u32 version, u64 header length, JSON header,
/// then u64-length-prefixed little-endian float64 blocks.
void save_model(const std::filesystem::path& path, const PredictorModel& model);
PredictorModel load_model(const std::filesystem::path& path);

}  // namespace eventcast
