#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "eventcast/evaluation.hpp"
#include "eventcast/observables.hpp"
#include "eventcast/predictor.hpp"
#include "eventcast/spectral_flow.hpp"
#include "eventcast/systems.hpp"
#include "json.hpp"

namespace eventcast {

enum class SystemKind { Rossler, Fhn, Kolmogorov };

std::string_view to_string(SystemKind kind);
SystemKind system_kind_from_string(std::string_view name);

/// What to simulate. `duration` is the integration horizon measured from
/// t = 0 and includes the discarded transient.
struct SystemSpec {
    SystemKind kind = SystemKind::Rossler;
    double duration = 600.0;
    double dt = 0.05;
    double discard = 100.0;
    Eigen::Vector3d rossler_x0{1.0, 1.0, 0.0};
    RosslerParams rossler;
    Eigen::Index fhn_units = 101;
    double fhn_v0 = 0.1;
    double fhn_w0 = 0.1;
    FlowParams flow;  // dt_sample and discard mirror dt and discard

    static SystemSpec defaults(SystemKind kind);
    SystemTag record_tag() const;
    void validate() const;
    /// Canonical description; its hash keys the trajectory cache.
    nlohmann::json to_json() const;
};

TrajectoryRecord simulate_system(const SystemSpec& spec, std::uint64_t master_seed);

/// Loads the trajectory for (spec, seed) from `cache_dir`, simulating and
/// storing it on a miss. `simulated` reports whether a simulation ran.
TrajectoryRecord cached_trajectory(const SystemSpec& spec, std::uint64_t master_seed,
                                   const std::filesystem::path& cache_dir, bool* simulated = nullptr);
std::filesystem::path cache_entry(const SystemSpec& spec, std::uint64_t master_seed,
                                  const std::filesystem::path& cache_dir);

/// Delay embedding with the spacing in time units.
struct EmbeddingSpec {
    Eigen::Index m = 1;
    double spacing = 0.0;
};

/// A named hyperparameter bundle for one (system, network) pair.
struct Preset {
    std::string name;
    SystemKind system;
    ObservableSpec observable;
    PredictorConfig predictor;
    std::optional<EmbeddingSpec> embedding;
    double tau = 0.0;
    double noise_train = 0.0;
};

const std::vector<Preset>& preset_registry();
const Preset& find_preset(std::string_view name);

struct ExperimentConfig {
    std::string name;
    std::string preset;
    SystemSpec system;
    ObservableSpec observable;
    PredictorConfig predictor;
    std::optional<EmbeddingSpec> embedding;
    std::vector<double> taus;
    std::vector<double> noise_train{0.0};
    std::vector<double> noise_test{0.0};
    Eigen::Index repetitions = 10;
    std::uint64_t seed = 1;
    double q_e = 0.0;
    double split = 0.75;
    Eigen::Index grid_size = 201;
    std::vector<double> event_durations;  // prefixes for the event-count study
    std::filesystem::path output_dir = "eventcast-out";
    std::filesystem::path cache_dir = ".eventcast-cache";
    unsigned threads = 1;
    bool save_models = false;

    /// Preset defaults, then every key present in the document.
    static ExperimentConfig from_json(const nlohmann::json& doc);
    static ExperimentConfig from_preset(std::string_view preset);
    static ExperimentConfig load(const std::filesystem::path& path);
    void validate() const;
    nlohmann::json to_json() const;

    DatasetOptions dataset_options(double tau, double alpha_train, double alpha_test) const;
};

struct RunResult {
    double tau = 0.0;
    double alpha_train = 0.0;
    double alpha_test = 0.0;
    Eigen::Index repetition = 0;
    std::uint64_t init_seed = 0;
    bool ok = false;
    std::string error;
    EvalReport report;
    Eigen::Index train_events = 0;
    Eigen::Index test_events = 0;
    std::string stop_reason;
};

struct SummaryRow {
    double tau = 0.0;
    double alpha_train = 0.0;
    double alpha_test = 0.0;
    Eigen::Index succeeded = 0;
    Eigen::Index failed = 0;
    RepetitionStats nrmse;
    RepetitionStats auc;
};

struct ExperimentResult {
    std::vector<RunResult> runs;
    std::vector<SummaryRow> summary;
    bool simulated = false;

    bool all_ok() const;
    const SummaryRow& row(double tau, double alpha_train, double alpha_test) const;
};

/// Every (tau, alpha_train, repetition) trains one model, evaluated against
/// each alpha_test. Writes runs.csv, summary.csv and per-run reports.
ExperimentResult run_experiment(const ExperimentConfig& config);
ExperimentResult run_experiment(const ExperimentConfig& config, const TrajectoryRecord& trajectory);

/// Same grid with the given tau list; adds auc_vs_tau.csv.
ExperimentResult sweep_tau(ExperimentConfig config, const std::vector<double>& taus);
/// Same grid with the given noise lists; adds auc_vs_noise.csv.
ExperimentResult sweep_noise(ExperimentConfig config, const std::vector<double>& alpha_train,
                             const std::vector<double>& alpha_test);

struct EventCountRow {
    double duration = 0.0;
    Eigen::Index train_rows = 0;
    Eigen::Index train_events = 0;
    bool skipped = false;
    std::string note;
    Eigen::Index succeeded = 0;
    RepetitionStats nrmse;
    RepetitionStats auc;
};

/// Trains on nested prefixes of the training portion and tests every prefix
/// on the same held-out portion. Uses the first tau and noise levels.
std::vector<EventCountRow> event_count_study(const ExperimentConfig& config, const std::vector<double>& durations);
std::vector<EventCountRow> event_count_study(const ExperimentConfig& config, const std::vector<double>& durations,
                                             const TrajectoryRecord& trajectory);

}  // namespace eventcast
