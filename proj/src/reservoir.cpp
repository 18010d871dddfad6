#include "eventcast/reservoir.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <random>

#include "eventcast/errors.hpp"

namespace eventcast {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

void RcConfig::validate() const {
    if (num_nodes < 1) throw ConfigError("reservoir needs at least one node");
    if (!(spectral_radius > 0.0)) throw ConfigError("spectral radius must be positive");
    if (!(leaking_rate > 0.0 && leaking_rate <= 1.0)) throw ConfigError("leaking rate must lie in (0, 1]");
    if (!(input_density > 0.0 && input_density <= 1.0) || !(reservoir_density > 0.0 && reservoir_density <= 1.0))
        throw ConfigError("densities must lie in (0, 1]");
    if (!(input_scale > 0.0)) throw ConfigError("input scale must be positive");
    if (!std::isfinite(input_bias)) throw ConfigError("input bias must be finite");
    if (!(ridge_beta >= 0.0)) throw ConfigError("ridge beta must be non-negative");
    if (washout < 0) throw ConfigError("washout must be non-negative");
}

double spectral_radius(const MatrixXd& a) {
    if (a.rows() != a.cols()) throw ShapeError("spectral_radius needs a square matrix");
    if (a.size() == 0) return 0.0;
    Eigen::EigenSolver<MatrixXd> es(a, false);
    if (es.info() != Eigen::Success) throw Error("eigenvalue iteration did not converge");
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

MatrixXd rescale_spectral_radius(const MatrixXd& a, double rho) {
    const double current = spectral_radius(a);
    if (!(current > 1e-10)) throw DomainError("matrix has zero spectral radius");
    return a * (rho / current);
}

Reservoir::Reservoir(MatrixXd a, MatrixXd w_in, VectorXd r0, double leaking_rate, VectorXd bias)
    : a_(std::move(a)), w_in_(std::move(w_in)), r0_(std::move(r0)), bias_(std::move(bias)), leak_(leaking_rate) {
    if (bias_.size() == 0) bias_ = VectorXd::Zero(a_.rows());
    if (a_.rows() != a_.cols() || w_in_.rows() != a_.rows() || r0_.size() != a_.rows() || bias_.size() != a_.rows())
        throw ShapeError("reservoir matrices are inconsistent");
}

Reservoir Reservoir::build(const RcConfig& config, Index input_dim, std::uint64_t seed) {
    config.validate();
    if (input_dim < 1) throw ShapeError("reservoir input dimension must be >= 1");
    const Index n = config.num_nodes;
    constexpr std::uint64_t kMaxDraws = 1000;
    for (std::uint64_t draw = 0; draw < kMaxDraws; ++draw) {
        Rng rng = make_rng(seed, "reservoir", draw);
        std::uniform_real_distribution<double> unit(0.0, 1.0), sym(-1.0, 1.0);
        MatrixXd w_in = MatrixXd::Zero(n, input_dim);
        for (Index j = 0; j < input_dim; ++j)
            for (Index i = 0; i < n; ++i) {
                const double keep = unit(rng);
                const double w = config.input_scale * sym(rng);
                if (keep < config.input_density) w_in(i, j) = w;
            }
        MatrixXd a = MatrixXd::Zero(n, n);
        for (Index j = 0; j < n; ++j)
            for (Index i = 0; i < n; ++i) {
                if (i == j) continue;
                const double keep = unit(rng);
                const double w = sym(rng);
                if (keep < config.reservoir_density) a(i, j) = w;
            }
        VectorXd r0(n);
        for (auto& v : r0) v = sym(rng);
        VectorXd bias(n);
        for (auto& v : bias) {
            const double keep = unit(rng);
            const double w = config.input_scale * sym(rng);
            v = keep < config.input_density ? config.input_bias * w : 0.0;
        }
        // nilpotent draws show up as round-off sized eigenvalues
        const double rho = spectral_radius(a), norm = a.norm();
        bool degenerate = !(rho > 1e-6 * norm);
        if (!degenerate) {
            a *= config.spectral_radius / rho;
            // eigenvalues scale exactly; only near-nilpotent draws need a second look
            if (rho < 1e-3 * norm)
                degenerate = std::abs(spectral_radius(a) - config.spectral_radius) > 1e-9 * config.spectral_radius;
        }
        if (degenerate) {
            spdlog::debug("reservoir draw {} has zero spectral radius; redrawing", draw);
            continue;
        }
        Reservoir res(std::move(a), std::move(w_in), std::move(r0), config.leaking_rate, std::move(bias));
        res.draw_ = draw;
        return res;
    }
    throw ConfigError("reservoir density too low: every draw had zero spectral radius");
}

void Reservoir::update(VectorXd& r, const Eigen::Ref<const VectorXd>& p) const {
    if (r.size() != size() || p.size() != input_dim()) throw ShapeError("reservoir update: dimension mismatch");
    VectorXd pre = w_in_ * p + bias_;
    pre.noalias() += a_ * r;
    r = (1.0 - leak_) * r + leak_ * pre.array().tanh().matrix();
}

RidgeSystem::RidgeSystem(Index features) : gram(MatrixXd::Zero(features, features)), rhs(VectorXd::Zero(features)) {}

void RidgeSystem::add(const MatrixXd& phi, const Eigen::Ref<const VectorXd>& y) {
    if (phi.rows() != gram.rows() || phi.cols() != y.size()) throw ShapeError("ridge: feature block shape mismatch");
    gram.selfadjointView<Eigen::Lower>().rankUpdate(phi);
    rhs.noalias() += phi * y;
    samples += phi.cols();
}

VectorXd RidgeSystem::solve(double beta, bool* used_pseudoinverse) const {
    if (!(beta >= 0.0)) throw DomainError("ridge beta must be non-negative");
    MatrixXd g = gram.selfadjointView<Eigen::Lower>();
    g.diagonal().array() += beta;
    if (used_pseudoinverse) *used_pseudoinverse = false;
    Eigen::LDLT<MatrixXd> ldlt(g);
    const bool ok = ldlt.info() == Eigen::Success && ldlt.isPositive();
    const VectorXd d = ldlt.vectorD().cwiseAbs();
    const double pivot_ratio = d.size() > 0 && d.maxCoeff() > 0.0 ? d.minCoeff() / d.maxCoeff() : 0.0;
    if (ok && (beta > 0.0 || pivot_ratio > 1e-12)) {
        VectorXd w = ldlt.solve(rhs);
        if (w.allFinite()) return w;
    }
    spdlog::warn("ridge normal matrix is ill-conditioned (pivot ratio {:.2e}); using the pseudoinverse", pivot_ratio);
    if (used_pseudoinverse) *used_pseudoinverse = true;
    Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(g);
    return cod.solve(rhs);
}

VectorXd ridge_readout(const MatrixXd& states, const Eigen::Ref<const VectorXd>& y, double beta,
                       bool* used_pseudoinverse) {
    RidgeSystem sys(states.rows());
    sys.add(states, y);
    return sys.solve(beta, used_pseudoinverse);
}

VectorXd RcModel::predict_sequence(const RowMatrixXd& p) const {
    const RowMatrixXd ps = input.apply(p);
    VectorXd r = reservoir.initial_state();
    const Index n = reservoir.size();
    VectorXd out(p.rows());
    for (Index t = 0; t < p.rows(); ++t) {
        reservoir.update(r, ps.row(t).transpose());
        out(t) = w_out.head(n).dot(r) + w_out(n);
    }
    return target.invert(out);
}

RcModel rc_train(const RowMatrixXd& p, const VectorXd& y, const RcConfig& config, std::uint64_t seed,
                 TrainingLog* log) {
    config.validate();
    if (p.rows() != y.size()) throw ShapeError("rc_train: inputs and targets differ in length");
    if (p.rows() <= config.washout) throw InsufficientData("rc_train: sequence shorter than the washout");

    RcModel model;
    model.input = Scaling::fit(p);
    model.target = TargetScaling::fit(y);
    model.reservoir = Reservoir::build(config, p.cols(), seed);
    const RowMatrixXd ps = model.input.apply(p);
    const VectorXd ys = model.target.apply(y);

    const Index n = model.reservoir.size();
    constexpr Index kBlock = 256;
    RidgeSystem sys(n + 1);
    MatrixXd phi(n + 1, kBlock);
    VectorXd yb(kBlock);
    Index fill = 0;
    VectorXd r = model.reservoir.initial_state();
    for (Index t = 0; t < p.rows(); ++t) {
        model.reservoir.update(r, ps.row(t).transpose());
        if (t < config.washout) continue;
        phi.col(fill).head(n) = r;
        phi(n, fill) = 1.0;
        yb(fill) = ys(t);
        if (++fill == kBlock) {
            sys.add(phi, yb);
            fill = 0;
        }
    }
    if (fill > 0) sys.add(phi.leftCols(fill), yb.head(fill));
    bool pinv = false;
    model.w_out = sys.solve(config.ridge_beta, &pinv);
    if (!model.w_out.allFinite()) throw TrainingFailure("reservoir readout is non-finite");
    if (log) {
        *log = {};
        const VectorXd fit = model.predict_sequence(p).tail(p.rows() - config.washout);
        log->train_loss.push_back((model.target.apply(fit) - ys.tail(p.rows() - config.washout)).squaredNorm() /
                                  static_cast<double>(fit.size()));
        log->stop_reason = pinv ? "pseudoinverse" : "ridge";
    }
    return model;
}

}  // namespace eventcast
