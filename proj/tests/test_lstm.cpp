#include "doctest.h"

#include <cmath>
#include <random>

#include "eventcast/errors.hpp"
#include "eventcast/lstm.hpp"

using namespace eventcast;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_CASE("cell step with zero weights") {
    LstmCellWeights w{MatrixXd::Zero(12, 2), MatrixXd::Zero(12, 3), VectorXd::Zero(12)};
    const VectorXd x = VectorXd::Random(2), h = VectorXd::Random(3);
    auto [h0, c0] = lstm_cell_step(w, x, h, VectorXd::Zero(3));
    CHECK(h0.isZero(0.0));
    CHECK(c0.isZero(0.0));

    const VectorXd c{{0.4, -2.0, 1.0}};
    auto [h1, c1] = lstm_cell_step(w, x, h, c);
    for (Index k = 0; k < 3; ++k) {
        CHECK(c1(k) == doctest::Approx(0.5 * c(k)));
        CHECK(h1(k) == doctest::Approx(0.5 * std::tanh(0.5 * c(k))));
    }
    CHECK_THROWS_AS(lstm_cell_step(w, VectorXd::Zero(4), h, c), ShapeError);
}

TEST_CASE("network forward composes cell steps") {
    LstmNetwork net(2, {3, 4});
    Rng rng(5);
    net.init(rng);
    // forget-gate biases start at one
    CHECK(net.layer_weights(0).b.segment(3, 3).isOnes());
    CHECK(net.layer_weights(0).b.head(3).isZero());

    std::vector<MatrixXd> x;
    for (int t = 0; t < 6; ++t) x.push_back(MatrixXd::Random(2, 1));
    LstmState state = net.zero_state(1);
    const MatrixXd out = net.forward(x, state);

    VectorXd h0 = VectorXd::Zero(3), c0 = h0, h1 = VectorXd::Zero(4), c1 = h1;
    const auto w0 = net.layer_weights(0), w1 = net.layer_weights(1);
    const VectorXd& p = net.params();
    for (int t = 0; t < 6; ++t) {
        std::tie(h0, c0) = lstm_cell_step(w0, x[static_cast<std::size_t>(t)], h0, c0);
        std::tie(h1, c1) = lstm_cell_step(w1, h0, h1, c1);
        const double y = p.segment(p.size() - 5, 4).dot(h1) + p(p.size() - 1);
        CHECK(out(t, 0) == doctest::Approx(y).epsilon(1e-13));
    }
    CHECK((state.h[1].col(0) - h1).norm() < 1e-14);
}

TEST_CASE("BPTT gradient matches central finite differences") {
    std::mt19937_64 gen(77);
    std::uniform_int_distribution<int> layers(1, 3), units(1, 5), in_dim(1, 3), steps(1, 6), streams(1, 3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    double worst = 0.0;
    for (int draw = 0; draw < 100; ++draw) {
        std::vector<Index> hidden(static_cast<std::size_t>(layers(gen)));
        for (auto& h : hidden) h = units(gen);
        const Index in = in_dim(gen), t_len = steps(gen), b = streams(gen);
        LstmNetwork net(in, hidden);
        for (auto& p : net.params()) p = u(gen);
        std::vector<MatrixXd> x(static_cast<std::size_t>(t_len), MatrixXd(in, b));
        for (auto& xt : x)
            for (auto& v : xt.reshaped()) v = u(gen);
        MatrixXd y(t_len, b);
        for (auto& v : y.reshaped()) v = u(gen);
        LstmState init = net.zero_state(b);
        for (auto& m : init.h)
            for (auto& v : m.reshaped()) v = 0.5 * u(gen);
        for (auto& m : init.c)
            for (auto& v : m.reshaped()) v = u(gen);

        LstmState s = init;
        VectorXd grad;
        net.loss_and_gradient(x, y, s, grad);

        auto loss = [&] {
            LstmState st = init;
            return (net.forward(x, st) - y).squaredNorm() / static_cast<double>(t_len * b);
        };
        VectorXd fd(net.num_params());
        const double h = 1e-6;
        for (Index k = 0; k < net.num_params(); ++k) {
            const double keep = net.params()(k);
            net.params()(k) = keep + h;
            const double up = loss();
            net.params()(k) = keep - h;
            const double down = loss();
            net.params()(k) = keep;
            fd(k) = (up - down) / (2 * h);
        }
        const double e = (grad - fd).norm() / std::max({grad.norm(), fd.norm(), 1e-12});
        worst = std::max(worst, e);
        CHECK(e <= 1e-5);

        // the state handed back is the forward state at the end of the chunk
        LstmState st = init;
        net.forward(x, st);
        for (std::size_t l = 0; l < hidden.size(); ++l) CHECK((st.h[l] - s.h[l]).norm() < 1e-14);
    }
    MESSAGE("worst BPTT relative error " << worst);
}

TEST_CASE("constant target converges to a constant output") {
    RowMatrixXd p(400, 2);
    for (Index t = 0; t < 400; ++t) {
        p(t, 0) = std::sin(0.1 * static_cast<double>(t));
        p(t, 1) = std::cos(0.37 * static_cast<double>(t));
    }
    const VectorXd y = VectorXd::Constant(400, 3.5);
    LstmConfig cfg;
    cfg.hidden = {4};
    cfg.max_epochs = 4000;
    cfg.bptt_chunk = 50;
    cfg.streams = 4;
    const LstmModel m = lstm_train(p, y, cfg, 2);
    const VectorXd pred = m.predict_sequence(p);
    CHECK((pred - y).squaredNorm() / 400.0 < 1e-6);
}

TEST_CASE("learns a delayed copy, deterministically and causally") {
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> u(-1, 1);
    const Index n = 2000;
    RowMatrixXd p(n, 1);
    for (Index t = 0; t < n; ++t) p(t, 0) = u(gen);
    VectorXd y = VectorXd::Zero(n);
    for (Index t = 2; t < n; ++t) y(t) = p(t - 2, 0);

    LstmConfig cfg;
    cfg.hidden = {12};
    cfg.max_epochs = 40;
    cfg.bptt_chunk = 50;
    cfg.lr = 0.01;
    TrainingLog log;
    const LstmModel m = lstm_train(p, y, cfg, 11, &log);
    CHECK(log.train_loss.size() == 40);
    CHECK(log.train_loss.back() < 0.2 * log.train_loss.front());

    const LstmModel again = lstm_train(p, y, cfg, 11);
    CHECK(m.net.params() == again.net.params());

    const VectorXd full = m.predict_sequence(p);
    const VectorXd part = m.predict_sequence(p.topRows(1200));
    CHECK(full.head(1200) == part);
    const double mse = (full - y).tail(n - 10).squaredNorm() / double(n - 10);
    CHECK(mse < 0.05);
}

TEST_CASE("LSTM configuration checks") {
    LstmConfig cfg;
    cfg.hidden = {};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.hidden = {4, 4, 4, 4};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.hidden = {4};
    cfg.lr = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
