#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <string>
#include <string_view>

#include "eventcast/errors.hpp"

namespace eventcast {

using RowMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class SystemTag {
    Generic,
    Rossler,
    FitzHughNagumo,
    KolmogorovGrid,         // rows are the full vorticity grid, row-major
    KolmogorovDiagnostics,  // rows are [D, Re a(1,0), Im a(1,0), probe vorticities...]
};

std::string_view to_string(SystemTag tag);
SystemTag system_tag_from_string(std::string_view name);

struct RosslerParams {
    double a = 0.2;
    double b = 0.2;
    double c = 5.7;
};

/// Network of diffusively coupled FitzHugh–Nagumo units.
struct FhnParams {
    Eigen::VectorXd a;
    Eigen::VectorXd b;
    Eigen::VectorXd c;
    double k = 0.00128;
    Eigen::MatrixXd adjacency;  // symmetric, binary, zero diagonal

    Eigen::Index n_units() const { return a.size(); }

    /// Chaotic configuration with extreme synchronisation bursts.
    static FhnParams defaults(Eigen::Index n_units = 101);

    /// Throws ShapeError/DomainError when the arrays or adjacency are malformed.
    void validate() const;
};

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, 3, 1> rossler_rhs(const Eigen::MatrixBase<Derived>& x,
                                                         const RosslerParams& p = {}) {
    EIGEN_STATIC_ASSERT_VECTOR_SPECIFIC_SIZE(Derived, 3)
    if (!x.allFinite()) throw DomainError("rossler_rhs: non-finite state");
    using Scalar = typename Derived::Scalar;
    return {-x(1) - x(2), x(0) + Scalar(p.a) * x(1), Scalar(p.b) + x(2) * (x(0) - Scalar(p.c))};
}

/// State ordered [v1, w1, ..., vn, wn].
Eigen::VectorXd fhn_rhs(const Eigen::VectorXd& state, const FhnParams& p);

/// A uniformly sampled solution x(t0 + k dt), one row per sample.
struct TrajectoryRecord {
    double dt = 0.0;
    double t0 = 0.0;
    RowMatrixXd states;
    SystemTag system_tag = SystemTag::Generic;

    Eigen::Index size() const { return states.rows(); }
    Eigen::Index dim() const { return states.cols(); }
    double time(Eigen::Index k) const { return t0 + static_cast<double>(k) * dt; }

    void validate() const;
};

using VectorField = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct IntegrationStats {
    long long accepted = 0;
    long long rejected = 0;
};

struct IntegrationOptions {
    double rel_tol = 1e-8;
    double abs_tol = 1e-10;
    double discard = 0.0;         // leading transient dropped from the record
    double initial_step = 0.0;    // 0 selects a step automatically
    long long max_steps = 500'000'000;
    IntegrationStats* stats = nullptr;  // optional step counters
};

/// Adaptive Dormand–Prince 5(4) integration of an autonomous field with
/// dense output at t_start + j * dt_sample. Samples before t_start + discard
/// are dropped.
TrajectoryRecord integrate(const VectorField& rhs, const Eigen::VectorXd& x0, double t_start, double t_end,
                           double dt_sample, const IntegrationOptions& options = {},
                           SystemTag tag = SystemTag::Generic);

TrajectoryRecord simulate_rossler(const Eigen::Vector3d& x0, double duration, double dt_sample,
                                  const RosslerParams& params = {}, IntegrationOptions options = {});

/// Default options for FHN runs: the first 100 time units are transient.
inline IntegrationOptions fhn_default_options() {
    IntegrationOptions o;
    o.discard = 100.0;
    return o;
}

/// Uniform initial condition (v_i, w_i) = (v0, w0) for every unit.
TrajectoryRecord simulate_fhn(const FhnParams& params, double duration, double dt_sample,
                              const IntegrationOptions& options = fhn_default_options(), double v0 = 0.1,
                              double w0 = 0.1);

}  // namespace eventcast
