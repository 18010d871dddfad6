#pragma once

#include <Eigen/Dense>

#include <cstdint>

#include "eventcast/rng.hpp"
#include "eventcast/training.hpp"

namespace eventcast {

struct RcConfig {
    Eigen::Index num_nodes = 300;
    double spectral_radius = 0.9;
    double leaking_rate = 1.0;
    double input_density = 1.0;
    double reservoir_density = 0.2;
    double input_scale = 1.0;  // W_in entries ~ U(-a, a)
    double input_bias = 1.0;   // constant input fed through its own W_in column
    double ridge_beta = 1e-4;
    Eigen::Index washout = 100;

    void validate() const;
};

/// Largest eigenvalue magnitude.
double spectral_radius(const Eigen::MatrixXd& a);

/// a * (rho / spectral_radius(a)); throws DomainError for a zero spectral radius.
Eigen::MatrixXd rescale_spectral_radius(const Eigen::MatrixXd& a, double rho);

/// Echo-state reservoir: r <- (1 - l) r + l tanh(A r + W_in p + b), where b is
/// the bias input times its W_in column.
class Reservoir {
public:
    Reservoir() = default;
    Reservoir(Eigen::MatrixXd a, Eigen::MatrixXd w_in, Eigen::VectorXd r0, double leaking_rate,
              Eigen::VectorXd bias = {});

    /// Random W_in and Erdos-Renyi A rescaled to the configured spectral radius.
    /// Draws with zero spectral radius are replaced from the next substream.
    static Reservoir build(const RcConfig& config, Eigen::Index input_dim, std::uint64_t seed);

    Eigen::Index size() const { return a_.rows(); }
    Eigen::Index input_dim() const { return w_in_.cols(); }
    const Eigen::MatrixXd& adjacency() const { return a_; }
    const Eigen::MatrixXd& input_weights() const { return w_in_; }
    const Eigen::VectorXd& initial_state() const { return r0_; }
    const Eigen::VectorXd& bias() const { return bias_; }
    double leaking_rate() const { return leak_; }
    /// Substream index of the accepted draw.
    std::uint64_t draw() const { return draw_; }

    void update(Eigen::VectorXd& r, const Eigen::Ref<const Eigen::VectorXd>& p) const;

private:
    Eigen::MatrixXd a_;
    Eigen::MatrixXd w_in_;
    Eigen::VectorXd r0_;
    Eigen::VectorXd bias_;
    double leak_ = 1.0;
    std::uint64_t draw_ = 0;
};

/// Accumulated normal equations of a linear readout with bias feature.
struct RidgeSystem {
    Eigen::MatrixXd gram;  // sum phi phi^T
    Eigen::VectorXd rhs;   // sum phi y
    Eigen::Index samples = 0;

    explicit RidgeSystem(Eigen::Index features = 0);
    void add(const Eigen::MatrixXd& phi, const Eigen::Ref<const Eigen::VectorXd>& y);
    /// Solves (gram + beta I) w = rhs; at beta = 0 an ill-conditioned gram falls
    /// back to the minimum-norm pseudoinverse solution.
    Eigen::VectorXd solve(double beta, bool* used_pseudoinverse = nullptr) const;
};

/// Columns of `states` are feature vectors; y has one entry per column.
Eigen::VectorXd ridge_readout(const Eigen::MatrixXd& states, const Eigen::Ref<const Eigen::VectorXd>& y, double beta,
                              bool* used_pseudoinverse = nullptr);

struct RcModel {
    Reservoir reservoir;
    Eigen::VectorXd w_out;  // size N + 1, bias last
    Scaling input;
    TargetScaling target;

    /// Drives the reservoir from its initial state over every row of p; one prediction per row.
    Eigen::VectorXd predict_sequence(const RowMatrixXd& p) const;
};

RcModel rc_train(const RowMatrixXd& p, const Eigen::VectorXd& y, const RcConfig& config, std::uint64_t seed,
                 TrainingLog* log = nullptr);

}  // namespace eventcast
