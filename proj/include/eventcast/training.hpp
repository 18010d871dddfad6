#pragma once

#include <Eigen/Dense>

#include <limits>
#include <string>
#include <vector>

#include "eventcast/systems.hpp"

namespace eventcast {

/// Per-column affine standardisation fitted on training rows; zero spread maps to scale 1.
struct Scaling {
    Eigen::RowVectorXd mean;
    Eigen::RowVectorXd scale;

    static Scaling fit(const RowMatrixXd& x);
    static Scaling identity(Eigen::Index dim);

    RowMatrixXd apply(const RowMatrixXd& x) const { return (x.rowwise() - mean).array().rowwise() / scale.array(); }
};

struct TargetScaling {
    double mean = 0.0;
    double scale = 1.0;

    static TargetScaling fit(const Eigen::Ref<const Eigen::VectorXd>& y);

    Eigen::VectorXd apply(const Eigen::Ref<const Eigen::VectorXd>& y) const {
        return (y.array() - mean) / scale;
    }
    Eigen::VectorXd invert(const Eigen::Ref<const Eigen::VectorXd>& z) const { return z.array() * scale + mean; }
};

struct TrainingLog {
    std::vector<double> train_loss;  // per epoch, standardised units
    std::vector<double> val_loss;
    std::vector<double> best_val_loss;
    std::string stop_reason;
    long long clipped_updates = 0;
};

/// Stops after `patience` consecutive epochs without a new best validation loss.
class EarlyStopper {
public:
    explicit EarlyStopper(int patience) : patience_(patience) {}

    /// Returns true when training should stop.
    bool update(double val_loss) {
        if (val_loss < best_) {
            best_ = val_loss;
            fails_ = 0;
            improved_ = true;
            return false;
        }
        improved_ = false;
        return ++fails_ >= patience_;
    }

    bool improved() const { return improved_; }
    double best() const { return best_; }
    int fails() const { return fails_; }

private:
    int patience_;
    int fails_ = 0;
    bool improved_ = false;
    double best_ = std::numeric_limits<double>::infinity();
};

}  // namespace eventcast
