#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

#include "eventcast/spectral_flow.hpp"
#include "eventcast/systems.hpp"

namespace eventcast {

enum class ObservableKind { StateCoordinates, FourierMode, VorticityProbes };
enum class QoiKind { Coordinate, MeanVoltage, DissipationRate };

std::string_view to_string(ObservableKind kind);
std::string_view to_string(QoiKind kind);
ObservableKind observable_kind_from_string(std::string_view name);
QoiKind qoi_kind_from_string(std::string_view name);

struct ObservableSpec {
    ObservableKind kind = ObservableKind::StateCoordinates;
    std::vector<Eigen::Index> indices;  // StateCoordinates
    int kx = 1, ky = 0;                 // FourierMode: p = (Re a, Im a)
    std::vector<Point2> points;         // VorticityProbes
    QoiKind qoi = QoiKind::Coordinate;
    Eigen::Index qoi_index = 0;         // QoiKind::Coordinate

    static ObservableSpec rossler();
    static ObservableSpec fhn();
    static ObservableSpec kolmogorov_fourier();
    static ObservableSpec kolmogorov_probes();
};

/// Default extreme-event threshold of each system.
double default_threshold(SystemTag tag);

struct Observables {
    RowMatrixXd p;
    Eigen::VectorXd q;
};

/// `flow` supplies the viscosity and grid for KolmogorovGrid records.
Observables extract(const TrajectoryRecord& traj, const ObservableSpec& spec, const FlowParams& flow = {});

/// Population standard deviation of each column.
Eigen::RowVectorXd column_std(const RowMatrixXd& p);

/// p + alpha * xi with xi_i ~ N(0, sigma_i), sigma_i the column std of p.
template <typename Derived>
RowMatrixXd add_noise(const Eigen::MatrixBase<Derived>& p, double alpha, std::uint64_t seed);

struct DelayEmbedding {
    Eigen::Index m = 1;
    Eigen::Index s_steps = 1;

    Eigen::Index history() const { return (m - 1) * s_steps; }
    void validate() const;
};

/// Row t - history() of the result is [p(t), p(t - s), ..., p(t - (m-1)s)].
RowMatrixXd delay_embed(const RowMatrixXd& p, const DelayEmbedding& emb);

/// One row of delay_embed without materialising the matrix.
void embed_row(const RowMatrixXd& p, const DelayEmbedding& emb, Eigen::Index t, Eigen::Ref<Eigen::RowVectorXd> out);

struct ObservationDataset {
    double dt = 0.0;
    double t0 = 0.0;
    RowMatrixXd p;      // noise already applied, train and test portions separately
    Eigen::VectorXd q;  // clean
    Eigen::Index tau_steps = 0;
    Eigen::Index split_index = 0;
    double q_e = 0.0;
    double noise_alpha_train = 0.0;
    double noise_alpha_test = 0.0;
    std::uint64_t seed = 0;
    std::optional<DelayEmbedding> embedding;  // set for feedforward inputs

    Eigen::Index size() const { return p.rows(); }
    Eigen::Index dim() const { return p.cols(); }
    Eigen::Index input_dim() const { return embedding ? dim() * embedding->m : dim(); }
    double tau() const { return static_cast<double>(tau_steps) * dt; }
    Eigen::Index history() const { return embedding ? embedding->history() : 0; }

    /// Input rows [begin, end) whose targets q(t + tau) fall in the training portion.
    Eigen::Index train_begin() const { return history(); }
    Eigen::Index train_end() const { return split_index - tau_steps; }
    Eigen::Index test_begin() const { return split_index + history(); }
    Eigen::Index test_end() const { return size() - tau_steps; }

    void validate() const;
};

/// Inputs (embedded when the dataset carries an embedding) and targets for rows [begin, end).
struct SupervisedSet {
    RowMatrixXd inputs;
    Eigen::VectorXd targets;
};

SupervisedSet training_pairs(const ObservationDataset& ds);
SupervisedSet test_pairs(const ObservationDataset& ds);
Eigen::VectorXd test_targets(const ObservationDataset& ds);

struct DatasetOptions {
    double tau = 0.0;  // time units; must be a whole number of samples
    double split = 0.75;
    double q_e = 0.0;
    double noise_alpha_train = 0.0;
    double noise_alpha_test = 0.0;
    std::uint64_t seed = 0;
    std::optional<DelayEmbedding> embedding;
};

/// Converts a duration to a sample count, rejecting non-integral ratios.
Eigen::Index to_steps(double duration, double dt);

ObservationDataset make_dataset(const Observables& obs, double dt, const DatasetOptions& options, double t0 = 0.0);
ObservationDataset make_dataset(const TrajectoryRecord& traj, const ObservableSpec& spec, const DatasetOptions& options,
                                const FlowParams& flow = {});

/// Number of maximal runs with q > q_e.
Eigen::Index count_events(const Eigen::Ref<const Eigen::VectorXd>& q, double q_e);

/// `time, p_1..p_r, q` with shortest round-trip decimals plus a `.json` sidecar.
void write_dataset(const std::filesystem::path& csv_path, const ObservationDataset& ds);
ObservationDataset read_dataset(const std::filesystem::path& csv_path);

}  // namespace eventcast

#include "eventcast/bits/observables_impl.hpp"
