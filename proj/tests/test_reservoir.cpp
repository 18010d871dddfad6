#include "doctest.h"

#include <cmath>
#include <limits>
#include <random>

#include "eventcast/errors.hpp"
#include "eventcast/reservoir.hpp"

using namespace eventcast;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Gelfand's formula by repeated squaring with renormalisation: ||A^(2^k)||^(2^-k).
double gelfand_radius(MatrixXd a, int squarings = 40) {
    double log_scale = 0.0;
    for (int k = 0; k < squarings; ++k) {
        const double norm = a.norm();
        a /= norm;
        log_scale = 2.0 * (log_scale + std::log(norm));
        a = a * a;
    }
    return std::exp((log_scale + std::log(a.norm())) / std::ldexp(1.0, squarings));
}

}  // namespace

TEST_CASE("spectral radius rescaling") {
    RcConfig cfg;
    cfg.num_nodes = 120;
    cfg.spectral_radius = 0.3;
    const Reservoir res = Reservoir::build(cfg, 2, 17);
    CHECK(std::abs(gelfand_radius(res.adjacency()) - 0.3) < 1e-6);
    CHECK(spectral_radius(res.adjacency()) == doctest::Approx(0.3).epsilon(1e-12));

    const MatrixXd diag = VectorXd{{1.0, -4.0, 2.0, 0.5}}.asDiagonal();
    CHECK((rescale_spectral_radius(diag, 0.3) - 0.3 / 4.0 * diag).norm() < 1e-15);
    CHECK_THROWS_AS(rescale_spectral_radius(MatrixXd::Zero(3, 3), 0.3), DomainError);
}

TEST_CASE("adjacency and input densities") {
    RcConfig cfg;
    cfg.num_nodes = 850;
    cfg.reservoir_density = 0.2;
    cfg.input_density = 0.5;
    cfg.input_scale = 0.7;
    const Reservoir res = Reservoir::build(cfg, 3, 5);
    const double n = 850.0;
    const double frac = static_cast<double>((res.adjacency().array() != 0.0).count()) / (n * n);
    CHECK(std::abs(frac - 0.2) < 0.01);
    CHECK(res.adjacency().diagonal().isZero(0.0));
    const double in_frac = static_cast<double>((res.input_weights().array() != 0.0).count()) / (3 * n);
    CHECK(std::abs(in_frac - 0.5) < 0.03);
    CHECK(res.input_weights().cwiseAbs().maxCoeff() <= 0.7);
    CHECK(res.initial_state().cwiseAbs().maxCoeff() <= 1.0);
    const double bias_frac = static_cast<double>((res.bias().array() != 0.0).count()) / n;
    CHECK(std::abs(bias_frac - 0.5) < 0.06);
    CHECK(res.bias().cwiseAbs().maxCoeff() <= 0.7);
}

TEST_CASE("the bias input breaks the odd symmetry of the state map") {
    RcConfig cfg;
    cfg.num_nodes = 50;
    const RowMatrixXd p = RowMatrixXd::Random(30, 2);
    auto drive = [&](const Reservoir& res, const RowMatrixXd& input) {
        VectorXd r = VectorXd::Zero(res.size());
        for (Eigen::Index t = 0; t < input.rows(); ++t) res.update(r, input.row(t).transpose());
        return r;
    };
    cfg.input_bias = 0.0;
    const Reservoir plain = Reservoir::build(cfg, 2, 4);
    CHECK(plain.bias().isZero(0.0));
    CHECK((drive(plain, p) + drive(plain, -p)).norm() < 1e-14);

    cfg.input_bias = 1.0;
    const Reservoir biased = Reservoir::build(cfg, 2, 4);
    CHECK(biased.adjacency() == plain.adjacency());
    CHECK(biased.input_weights() == plain.input_weights());
    CHECK((drive(biased, p) + drive(biased, -p)).norm() > 1e-3);
}

TEST_CASE("degenerate draws are replaced") {
    RcConfig cfg;
    cfg.num_nodes = 3;
    cfg.reservoir_density = 0.25;
    cfg.spectral_radius = 0.5;
    int redrawn = 0;
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        const Reservoir res = Reservoir::build(cfg, 1, seed);
        redrawn += res.draw() > 0;
        CHECK(spectral_radius(res.adjacency()) == doctest::Approx(0.5).epsilon(1e-9));
    }
    CHECK(redrawn > 0);
}

TEST_CASE("reservoir update rule") {
    const MatrixXd a = MatrixXd::Random(4, 4), w_in = MatrixXd::Random(4, 2);
    const Reservoir full(a, w_in, VectorXd::Zero(4), 1.0);
    VectorXd r = VectorXd::Zero(4);
    full.update(r, VectorXd::Zero(2));
    CHECK(r.isZero(0.0));

    const Reservoir frozen(a, w_in, VectorXd::Zero(4), 0.0);
    VectorXd s = VectorXd::Random(4);
    const VectorXd keep = s;
    frozen.update(s, VectorXd::Random(2));
    CHECK(s == keep);

    const Reservoir open(MatrixXd::Zero(4, 4), w_in, VectorXd::Zero(4), 1.0);
    const VectorXd p = VectorXd::Random(2);
    VectorXd q = VectorXd::Random(4);
    open.update(q, p);
    CHECK((q - (w_in * p).array().tanh().matrix()).norm() < 1e-15);

    const VectorXd b = VectorXd::Random(4);
    const Reservoir biased(MatrixXd::Zero(4, 4), w_in, VectorXd::Zero(4), 1.0, b);
    VectorXd z = VectorXd::Random(4);
    biased.update(z, p);
    CHECK((z - (w_in * p + b).array().tanh().matrix()).norm() < 1e-15);

    const Reservoir leaky(a, w_in, VectorXd::Zero(4), 0.3);
    VectorXd l = VectorXd::Random(4);
    const VectorXd expect = 0.7 * l + 0.3 * (a * l + w_in * p).array().tanh().matrix();
    leaky.update(l, p);
    CHECK((l - expect).norm() < 1e-15);
}

TEST_CASE("ridge readout") {
    std::mt19937_64 gen(4);
    std::normal_distribution<double> nrm;
    MatrixXd states(30, 500);
    for (auto& v : states.reshaped()) v = nrm(gen);
    VectorXd w(30);
    for (auto& v : w) v = nrm(gen);
    const VectorXd y = states.transpose() * w;

    const VectorXd exact = ridge_readout(states, y, 0.0);
    CHECK((states.transpose() * exact - y).cwiseAbs().maxCoeff() < 1e-8);

    const VectorXd shrunk = ridge_readout(states, y, 1e6);
    CHECK(shrunk.norm() < 1e-3 * w.norm() * 1e3);
    CHECK(ridge_readout(states, y, 1e12).norm() < 1e-3);

    const double beta = 0.7;
    const VectorXd wr = ridge_readout(states, y, beta);
    const MatrixXd g = states * states.transpose() + beta * MatrixXd::Identity(30, 30);
    const VectorXd residual = g * wr - states * y;
    CHECK(residual.cwiseAbs().maxCoeff() / (states * y).cwiseAbs().maxCoeff() < 1e-8);

    // rank-deficient features at beta = 0 fall back to the pseudoinverse
    MatrixXd dup(3, 200);
    dup.row(0) = states.row(0).head(200);
    dup.row(1) = dup.row(0);
    dup.row(2) = states.row(1).head(200);
    const VectorXd yd = dup.row(0).transpose() + 2.0 * dup.row(2).transpose();
    bool pinv = false;
    const VectorXd wd = ridge_readout(dup, yd, 0.0, &pinv);
    CHECK(pinv);
    CHECK((dup.transpose() * wd - yd).norm() < 1e-8);
    CHECK(wd(0) == doctest::Approx(wd(1)));
}

TEST_CASE("rc_train fits a fading-memory target and is deterministic") {
    const Index n = 3000;
    std::mt19937_64 gen(8);
    std::uniform_real_distribution<double> u(-1, 1);
    RowMatrixXd p(n, 1);
    for (Index t = 0; t < n; ++t) p(t, 0) = u(gen);
    VectorXd y = VectorXd::Zero(n);
    for (Index t = 1; t < n; ++t) y(t) = 0.5 * p(t, 0) + 0.3 * p(t - 1, 0);

    RcConfig cfg;
    cfg.num_nodes = 100;
    cfg.spectral_radius = 0.5;
    cfg.ridge_beta = 1e-8;
    TrainingLog log;
    const RcModel m = rc_train(p, y, cfg, 21, &log);
    const VectorXd pred = m.predict_sequence(p);
    const double mse = (pred - y).tail(n - 100).squaredNorm() / double(n - 100);
    CHECK(mse < 1e-3 * (y.array() - y.mean()).square().mean());
    CHECK(log.stop_reason == "ridge");

    const RcModel again = rc_train(p, y, cfg, 21);
    CHECK(again.predict_sequence(p) == pred);
    const VectorXd prefix = m.predict_sequence(p.topRows(500));
    CHECK(prefix == pred.head(500));
}

TEST_CASE("RC configuration checks") {
    RcConfig cfg;
    cfg.leaking_rate = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = RcConfig{};
    cfg.reservoir_density = 1.5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = RcConfig{};
    cfg.ridge_beta = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = RcConfig{};
    cfg.input_bias = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
