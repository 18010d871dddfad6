#include "eventcast/systems.hpp"

#include <algorithm>
#include <array>
#include <limits>

namespace eventcast {

std::string_view to_string(SystemTag tag) {
    switch (tag) {
        case SystemTag::Generic: return "generic";
        case SystemTag::Rossler: return "rossler";
        case SystemTag::FitzHughNagumo: return "fhn";
        case SystemTag::KolmogorovGrid: return "kolmogorov-grid";
        case SystemTag::KolmogorovDiagnostics: return "kolmogorov-diagnostics";
    }
    return "generic";
}

SystemTag system_tag_from_string(std::string_view name) {
    for (auto tag : {SystemTag::Generic, SystemTag::Rossler, SystemTag::FitzHughNagumo, SystemTag::KolmogorovGrid,
                     SystemTag::KolmogorovDiagnostics}) {
        if (to_string(tag) == name) return tag;
    }
    throw ConfigError("unknown system tag '" + std::string(name) + "'");
}

FhnParams FhnParams::defaults(Eigen::Index n) {
    FhnParams p;
    p.a = Eigen::VectorXd::Constant(n, -0.02651);
    p.c = Eigen::VectorXd::Constant(n, 0.02);
    p.b.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        p.b(i) = n > 1 ? 0.006 + 0.008 * static_cast<double>(i) / static_cast<double>(n - 1) : 0.006;
    }
    p.k = 0.00128;
    p.adjacency = Eigen::MatrixXd::Ones(n, n);
    p.adjacency.diagonal().setZero();
    return p;
}

void FhnParams::validate() const {
    const auto n = a.size();
    if (b.size() != n || c.size() != n || adjacency.rows() != n || adjacency.cols() != n) {
        throw ShapeError("FhnParams: per-unit arrays and adjacency must all have n_units entries");
    }
    if (!(a.allFinite() && b.allFinite() && c.allFinite() && std::isfinite(k))) {
        throw DomainError("FhnParams: non-finite parameter");
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        if (adjacency(i, i) != 0.0) throw DomainError("FhnParams: adjacency diagonal must be zero");
        for (Eigen::Index j = 0; j < n; ++j) {
            const double v = adjacency(i, j);
            if ((v != 0.0 && v != 1.0) || v != adjacency(j, i)) {
                throw DomainError("FhnParams: adjacency must be symmetric and binary");
            }
        }
    }
}

Eigen::VectorXd fhn_rhs(const Eigen::VectorXd& state, const FhnParams& p) {
    const Eigen::Index n = p.n_units();
    if (state.size() != 2 * n) {
        throw ShapeError("fhn_rhs: state length " + std::to_string(state.size()) + " != 2 * n_units (" +
                         std::to_string(2 * n) + ")");
    }
    Eigen::Map<const Eigen::VectorXd, 0, Eigen::InnerStride<2>> v(state.data(), n);
    Eigen::Map<const Eigen::VectorXd, 0, Eigen::InnerStride<2>> w(state.data() + 1, n);

    // sum_j A_ij (v_j - v_i) = (A v)_i - deg_i v_i
    const Eigen::VectorXd coupling = p.adjacency * v - (p.adjacency.rowwise().sum().array() * v.array()).matrix();

    Eigen::VectorXd out(2 * n);
    Eigen::Map<Eigen::VectorXd, 0, Eigen::InnerStride<2>> dv(out.data(), n);
    Eigen::Map<Eigen::VectorXd, 0, Eigen::InnerStride<2>> dw(out.data() + 1, n);
    dv = (v.array() * (p.a.array() - v.array()) * (v.array() - 1.0) - w.array() + p.k * coupling.array()).matrix();
    dw = (p.b.array() * v.array() - p.c.array() * w.array()).matrix();
    return out;
}

void TrajectoryRecord::validate() const {
    if (!(dt > 0.0)) throw DomainError("TrajectoryRecord: dt must be positive");
    if (states.rows() < 2) throw InsufficientData("TrajectoryRecord: need at least two samples");
    if (!states.allFinite()) throw DomainError("TrajectoryRecord: non-finite entries");
}

namespace {

// Dormand–Prince 5(4) tableau.
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784, a76 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;
// Continuous extension of order 4.
constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                 d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                 d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

double error_norm(const Eigen::VectorXd& err, const Eigen::VectorXd& y0, const Eigen::VectorXd& y1,
                  const IntegrationOptions& o) {
    const Eigen::ArrayXd scale = o.abs_tol + o.rel_tol * y0.array().abs().max(y1.array().abs());
    return std::sqrt((err.array() / scale).square().mean());
}

double initial_step(const VectorField& f, const Eigen::VectorXd& y0, const Eigen::VectorXd& f0,
                    const IntegrationOptions& o, double span) {
    const Eigen::ArrayXd scale = o.abs_tol + o.rel_tol * y0.array().abs();
    const double d0 = std::sqrt((y0.array() / scale).square().mean());
    const double d1n = std::sqrt((f0.array() / scale).square().mean());
    double h0 = (d0 < 1e-5 || d1n < 1e-5) ? 1e-6 : 0.01 * d0 / d1n;
    h0 = std::min(h0, span);
    const Eigen::VectorXd y1 = y0 + h0 * f0;
    const Eigen::VectorXd f1 = f(y1);
    const double d2 = std::sqrt(((f1 - f0).array() / scale).square().mean()) / h0;
    const double h1 = std::max(d1n, d2) <= 1e-15 ? std::max(1e-6, h0 * 1e-3)
                                                  : std::pow(0.01 / std::max(d1n, d2), 1.0 / 5.0);
    return std::min({100.0 * h0, h1, span});
}

}  // namespace

TrajectoryRecord integrate(const VectorField& f, const Eigen::VectorXd& x0, double t_start, double t_end,
                           double dt_sample, const IntegrationOptions& o, SystemTag tag) {
    if (!(dt_sample > 0.0)) throw DomainError("integrate: dt_sample must be positive");
    if (!(t_end - t_start > o.discard)) throw DomainError("integrate: t_end - t_start must exceed discard");
    if (!x0.allFinite()) throw DomainError("integrate: non-finite initial condition");

    // Sample j sits at t_start + j * dt_sample; keep j in [first, last].
    const auto first = static_cast<long long>(std::ceil(o.discard / dt_sample - 1e-9));
    const auto last = static_cast<long long>(std::floor((t_end - t_start) / dt_sample + 1e-9));
    if (last - first + 1 < 2) throw InsufficientData("integrate: fewer than two samples after discard");

    TrajectoryRecord rec;
    rec.dt = dt_sample;
    rec.t0 = t_start + static_cast<double>(first) * dt_sample;
    rec.system_tag = tag;
    rec.states.resize(last - first + 1, x0.size());

    auto sample_time = [&](long long j) { return t_start + static_cast<double>(j) * dt_sample; };
    long long next = first;
    double t = t_start;
    Eigen::VectorXd y = x0;
    if (next == 0) rec.states.row(next++ - first) = y.transpose();

    Eigen::VectorXd k1 = f(y);
    const double span = t_end - t_start;
    double h = o.initial_step > 0.0 ? o.initial_step : initial_step(f, y, k1, o, span);
    double fac_max = 10.0;

    Eigen::VectorXd k2, k3, k4, k5, k6, k7, y_new, err, r5;
    long long steps = 0;
    while (next <= last) {
        if (++steps > o.max_steps) throw IntegrationError("integrate: step budget exhausted", t);
        const double t_target = sample_time(last);
        if (t + h > t_target) h = t_target - t;
        if (h <= 16.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(t))) {
            throw IntegrationError("integrate: step size underflow at t=" + std::to_string(t), t);
        }

        k2 = f(y + h * (a21 * k1));
        k3 = f(y + h * (a31 * k1 + a32 * k2));
        k4 = f(y + h * (a41 * k1 + a42 * k2 + a43 * k3));
        k5 = f(y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
        k6 = f(y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
        y_new = y + h * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
        k7 = f(y_new);
        err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

        double en = error_norm(err, y, y_new, o);
        if (!std::isfinite(en) || !y_new.allFinite()) en = 1e10;

        if (en <= 1.0) {
            const double t_new = (t + h >= t_target) ? t_target : t + h;
            if (next <= last && sample_time(next) <= t_new) {
                const Eigen::VectorXd ydiff = y_new - y;
                const Eigen::VectorXd bspl = h * k1 - ydiff;
                const Eigen::VectorXd r4 = ydiff - h * k7 - bspl;
                r5 = h * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7);
                while (next <= last && sample_time(next) <= t_new) {
                    const double ts = sample_time(next);
                    if (ts == t_new) {
                        rec.states.row(next - first) = y_new.transpose();
                    } else {
                        const double th = (ts - t) / h;
                        const double th1 = 1.0 - th;
                        rec.states.row(next - first) =
                            (y + th * (ydiff + th1 * (bspl + th * (r4 + th1 * r5)))).transpose();
                    }
                    ++next;
                }
            }
            t = t_new;
            y.swap(y_new);
            k1.swap(k7);
            const double fac = en == 0.0 ? fac_max : std::min(fac_max, std::max(0.2, 0.9 * std::pow(en, -0.2)));
            h *= fac;
            fac_max = 10.0;
            if (o.stats) ++o.stats->accepted;
        } else {
            h *= std::max(0.2, 0.9 * std::pow(en, -0.2));
            fac_max = 1.0;
            if (o.stats) ++o.stats->rejected;
        }
    }
    return rec;
}

TrajectoryRecord simulate_rossler(const Eigen::Vector3d& x0, double duration, double dt_sample,
                                  const RosslerParams& params, IntegrationOptions options) {
    VectorField f = [params](const Eigen::VectorXd& x) -> Eigen::VectorXd {
        return rossler_rhs(Eigen::Vector3d(x), params);
    };
    return integrate(f, x0, 0.0, duration, dt_sample, options, SystemTag::Rossler);
}

TrajectoryRecord simulate_fhn(const FhnParams& params, double duration, double dt_sample,
                              const IntegrationOptions& options, double v0, double w0) {
    params.validate();
    Eigen::VectorXd x0(2 * params.n_units());
    for (Eigen::Index i = 0; i < params.n_units(); ++i) {
        x0(2 * i) = v0;
        x0(2 * i + 1) = w0;
    }
    VectorField f = [&params](const Eigen::VectorXd& x) { return fhn_rhs(x, params); };
    return integrate(f, x0, 0.0, duration, dt_sample, options, SystemTag::FitzHughNagumo);
}

}  // namespace eventcast
