#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace eventcast {

struct ConfusionCounts {
    Eigen::Index tp = 0;
    Eigen::Index tn = 0;
    Eigen::Index fp = 0;
    Eigen::Index fn = 0;

    Eigen::Index total() const { return tp + tn + fp + fn; }
    std::optional<double> precision() const;
    std::optional<double> recall() const;
};

/// RMS(q - q_hat) / std(q), population std.
double nrmse(const Eigen::Ref<const Eigen::VectorXd>& q, const Eigen::Ref<const Eigen::VectorXd>& q_hat);

/// Truth q > q_e, prediction q_hat > q_hat_e.
ConfusionCounts classify(const Eigen::Ref<const Eigen::VectorXd>& q, const Eigen::Ref<const Eigen::VectorXd>& q_hat,
                         double q_e, double q_hat_e);

/// Only thresholds with a defined precision appear.
struct PrCurve {
    std::vector<double> thresholds;
    std::vector<double> precision;
    std::vector<double> recall;
    std::vector<ConfusionCounts> counts;
    Eigen::Index grid_size = 0;
    double auc = 0.0;
};

/// Trapezoidal area under (recall, precision) points, anchored at recall 0
/// with the precision of the lowest-recall point, clamped to [0, 1].
double pr_area(std::vector<double> recall, std::vector<double> precision);

PrCurve pr_curve_on_grid(const Eigen::Ref<const Eigen::VectorXd>& q, const Eigen::Ref<const Eigen::VectorXd>& q_hat,
                         double q_e, const std::vector<double>& thresholds);

/// Ascending, de-duplicated thresholds spanning [min q_hat - eps, max q_hat + eps]:
/// `grid_size` equally spaced values merged with `grid_size - 2` equally spaced
/// order statistics of q_hat. The former resolves rare high predictions, the
/// latter clustered ones; series shorter than the grid get every distinct
/// prediction as a threshold.
std::vector<double> threshold_grid(const Eigen::Ref<const Eigen::VectorXd>& q_hat, Eigen::Index grid_size = 201);

/// Thresholds bracketing the predictions at true events: for each (or, beyond
/// `grid_size` events, each rank-spaced) event prediction v, v itself and the
/// next lower distinct prediction. With them the area equals the exhaustive one.
std::vector<double> event_thresholds(const Eigen::Ref<const Eigen::VectorXd>& q,
                                     const Eigen::Ref<const Eigen::VectorXd>& q_hat, double q_e,
                                     Eigen::Index grid_size = 201);

/// Precision-recall sweep over threshold_grid plus event_thresholds.
PrCurve pr_curve(const Eigen::Ref<const Eigen::VectorXd>& q, const Eigen::Ref<const Eigen::VectorXd>& q_hat, double q_e,
                 Eigen::Index grid_size = 201);

struct RepetitionStats {
    double mean = 0.0;
    double min = 0.0;
    double max = 0.0;
};

RepetitionStats repetition_stats(const std::vector<double>& values);

struct EvalReport {
    std::string preset;
    double nrmse = 0.0;
    double sigma_q = 0.0;
    PrCurve curve;
    double tau = 0.0;
    double noise_alpha_train = 0.0;
    double noise_alpha_test = 0.0;
    std::uint64_t seed = 0;
    Eigen::Index repetition = 0;

    double auc() const { return curve.auc; }
};

EvalReport evaluate(const Eigen::Ref<const Eigen::VectorXd>& q, const Eigen::Ref<const Eigen::VectorXd>& q_hat,
                    double q_e, Eigen::Index grid_size = 201);

/// One CSV row per threshold plus a JSON summary next to it.
void write_report(const std::filesystem::path& csv_path, const EvalReport& report);

/// Shortest round-trip decimal text for a double.
std::string format_double(double v);

}  // namespace eventcast
