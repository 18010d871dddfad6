#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "eventcast/rng.hpp"
#include "eventcast/training.hpp"

namespace eventcast {

enum class Activation { Tanh, LogSigmoid, Linear };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view name);

struct FfConfig {
    std::vector<Eigen::Index> layer_sizes{6, 6, 6};
    Activation activation = Activation::Tanh;
    int max_epochs = 1000;
    double val_fraction = 0.15;
    int patience = 6;
    double lm_lambda0 = 1e-3;
    double lm_up = 10.0;
    double lm_down = 0.1;
    double lm_lambda_max = 1e10;
    double min_grad = 1e-7;

    void validate() const;
};

/// Fully connected network with a linear scalar output. Parameters live in one
/// flat vector: per hidden layer W (out x in, row-major) then b, then the
/// output weights and bias.
class FfNetwork {
public:
    FfNetwork() = default;
    FfNetwork(Eigen::Index input_dim, std::vector<Eigen::Index> hidden, Activation activation);

    Eigen::Index input_dim() const { return input_dim_; }
    const std::vector<Eigen::Index>& hidden() const { return hidden_; }
    Activation activation() const { return activation_; }
    Eigen::Index num_params() const { return params_.size(); }

    Eigen::VectorXd& params() { return params_; }
    const Eigen::VectorXd& params() const { return params_; }

    /// Uniform +-sqrt(6 / (fan_in + fan_out)) weights, zero biases.
    void init_glorot(Rng& rng);

    Eigen::VectorXd forward(const Eigen::Ref<const RowMatrixXd>& x) const;
    double forward_one(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;

    /// out(s) = N(x_s); row s of jac = d out(s) / d params.
    void jacobian(const Eigen::Ref<const RowMatrixXd>& x, Eigen::Ref<Eigen::VectorXd> out,
                  Eigen::Ref<RowMatrixXd> jac) const;

private:
    struct Layer {
        Eigen::Index in, out, w, b;  // sizes and offsets into params_
    };

    Eigen::Index input_dim_ = 0;
    std::vector<Eigen::Index> hidden_;
    Activation activation_ = Activation::Tanh;
    std::vector<Layer> layers_;
    Eigen::Index out_w_ = 0, out_b_ = 0;
    Eigen::VectorXd params_;
};

/// Damped Gauss-Newton step: solves (JtJ + mu I) dx = -g. Empty when the
/// factorisation fails or yields non-finite values.
std::optional<Eigen::VectorXd> lm_step(const Eigen::MatrixXd& jtj, const Eigen::VectorXd& g, double mu);

struct FfModel {
    FfNetwork net;
    Scaling input;
    TargetScaling target;

    Eigen::VectorXd predict(const RowMatrixXd& x) const;
};

/// Levenberg-Marquardt on the full-batch MSE with a random validation hold-out;
/// returns the best-validation weights.
FfModel ff_train(const RowMatrixXd& x, const Eigen::VectorXd& y, const FfConfig& config, std::uint64_t seed,
                 TrainingLog* log = nullptr);

}  // namespace eventcast
