#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <utility>
#include <vector>

#include "eventcast/rng.hpp"
#include "eventcast/training.hpp"

namespace eventcast {

struct LstmConfig {
    std::vector<Eigen::Index> hidden{55, 55};
    int max_epochs = 250;
    double lr = 5e-3;
    double lr_final_fraction = 1.0;  // lr decays geometrically to lr * fraction over the epochs
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    Eigen::Index bptt_chunk = 200;
    Eigen::Index streams = 8;  // contiguous segments trained side by side
    double clip_norm = 1.0;

    void validate() const;
};

/// Gate rows are ordered [i, f, g, o].
struct LstmCellWeights {
    Eigen::MatrixXd wx;  // 4H x in
    Eigen::MatrixXd wh;  // 4H x H
    Eigen::VectorXd b;   // 4H
};

/// One step of the standard cell; returns (h, c).
std::pair<Eigen::VectorXd, Eigen::VectorXd> lstm_cell_step(const LstmCellWeights& w, const Eigen::VectorXd& x,
                                                           const Eigen::VectorXd& h_prev, const Eigen::VectorXd& c_prev);

/// Per-layer hidden and cell states, one column per stream.
struct LstmState {
    std::vector<Eigen::MatrixXd> h;
    std::vector<Eigen::MatrixXd> c;
};

/// Stacked LSTM with a linear scalar readout. Flat parameters: per layer
/// Wx, Wh (column-major), b; then readout weights and bias.
class LstmNetwork {
public:
    LstmNetwork() = default;
    LstmNetwork(Eigen::Index input_dim, std::vector<Eigen::Index> hidden);

    Eigen::Index input_dim() const { return input_dim_; }
    const std::vector<Eigen::Index>& hidden() const { return hidden_; }
    Eigen::Index num_params() const { return params_.size(); }
    Eigen::VectorXd& params() { return params_; }
    const Eigen::VectorXd& params() const { return params_; }

    /// Uniform fan-in/fan-out weights, zero biases except forget gates at 1.
    void init(Rng& rng);
    LstmCellWeights layer_weights(std::size_t layer) const;

    LstmState zero_state(Eigen::Index streams) const;

    /// x[t] is input_dim x streams. Returns outputs (T x streams) and advances `state`.
    Eigen::MatrixXd forward(const std::vector<Eigen::MatrixXd>& x, LstmState& state) const;

    /// Mean squared error of the chunk against y (T x streams) and its
    /// gradient by backpropagation through time; `state` is advanced.
    double loss_and_gradient(const std::vector<Eigen::MatrixXd>& x, const Eigen::MatrixXd& y, LstmState& state,
                             Eigen::VectorXd& grad) const;

private:
    struct Layer {
        Eigen::Index in, h, wx, wh, b;
    };

    Eigen::Index input_dim_ = 0;
    std::vector<Eigen::Index> hidden_;
    std::vector<Layer> layers_;
    Eigen::Index out_w_ = 0, out_b_ = 0;
    Eigen::VectorXd params_;
};

struct LstmModel {
    LstmNetwork net;
    Scaling input;
    TargetScaling target;

    /// Runs causally over every row of p from a zero state; one prediction per row.
    Eigen::VectorXd predict_sequence(const RowMatrixXd& p) const;
};

/// Sequence regression: y[t] is the target paired with input row p[t].
LstmModel lstm_train(const RowMatrixXd& p, const Eigen::VectorXd& y, const LstmConfig& config, std::uint64_t seed,
                     TrainingLog* log = nullptr);

}  // namespace eventcast
