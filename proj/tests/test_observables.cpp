#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <limits>
#include <random>

#include "eventcast/observables.hpp"

using namespace eventcast;
using Eigen::Index;

namespace {

Observables ramp_observables(Index k) {
    Observables o;
    o.p.resize(k, 1);
    o.q.resize(k);
    for (Index i = 0; i < k; ++i) o.p(i, 0) = o.q(i) = static_cast<double>(i);
    return o;
}

}  // namespace

TEST_CASE("extract: per-system projections") {
    TrajectoryRecord ross;
    ross.dt = 0.05;
    ross.system_tag = SystemTag::Rossler;
    ross.states = RowMatrixXd{{1.0, 2.0, 3.0}};
    const auto o = extract(ross, ObservableSpec::rossler());
    CHECK(o.p(0, 0) == 1.0);
    CHECK(o.p(0, 1) == 2.0);
    CHECK(o.q(0) == 3.0);

    TrajectoryRecord fhn;
    fhn.dt = 1.0;
    fhn.system_tag = SystemTag::FitzHughNagumo;
    fhn.states.resize(2, 2 * 5);
    for (Index i = 0; i < 5; ++i) {
        fhn.states(0, 2 * i) = 0.3;
        fhn.states(0, 2 * i + 1) = -1.0 * static_cast<double>(i);
        fhn.states(1, 2 * i) = static_cast<double>(i);
        fhn.states(1, 2 * i + 1) = 7.0;
    }
    const auto f = extract(fhn, ObservableSpec::fhn());
    CHECK(f.q(0) == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(f.q(1) == doctest::Approx(2.0));
    CHECK(f.p(0, 1) == 0.0);
    CHECK(f.p(1, 0) == 0.0);

    CHECK_THROWS_AS(extract(ross, ObservableSpec::fhn()), ConfigError);
    CHECK_THROWS_AS(extract(ross, ObservableSpec::kolmogorov_fourier()), ConfigError);
    ObservableSpec bad = ObservableSpec::rossler();
    bad.indices = {0, 5};
    CHECK_THROWS_AS(extract(ross, bad), ConfigError);
}

TEST_CASE("extract: Kolmogorov records") {
    FlowParams flow;
    flow.grid = 32;
    KolmogorovSolver solver(flow);
    const RowMatrixXd lam = solver.to_grid(solver.laminar());
    TrajectoryRecord grid;
    grid.dt = 0.2;
    grid.system_tag = SystemTag::KolmogorovGrid;
    grid.states = Eigen::Map<const Eigen::RowVectorXd>(lam.data(), lam.size());
    const auto o = extract(grid, ObservableSpec::kolmogorov_fourier(), flow);
    CHECK(o.q(0) == doctest::Approx(1.25).epsilon(1e-12));
    CHECK(std::abs(o.p(0, 0)) < 1e-12);
    const auto probes = extract(grid, ObservableSpec::kolmogorov_probes(), flow);
    CHECK(probes.p.cols() == 9);
    // omega = -10 cos(4y); at y = pi/3, cos(4 pi / 3) = -1/2
    CHECK(probes.p(0, 0) == doctest::Approx(5.0));

    TrajectoryRecord diag;
    diag.dt = 0.2;
    diag.system_tag = SystemTag::KolmogorovDiagnostics;
    diag.states = RowMatrixXd::Zero(3, 12);
    diag.states(1, 0) = 0.5;
    diag.states(2, 1) = 0.25;
    diag.states(0, 11) = 3.0;
    const auto d = extract(diag, ObservableSpec::kolmogorov_fourier());
    CHECK(d.q(1) == 0.5);
    CHECK(d.p(2, 0) == 0.25);
    CHECK(extract(diag, ObservableSpec::kolmogorov_probes()).p(0, 8) == 3.0);
    ObservableSpec other = ObservableSpec::kolmogorov_fourier();
    other.kx = 2;
    CHECK_THROWS_AS(extract(diag, other), ConfigError);
}

TEST_CASE("default thresholds") {
    CHECK(default_threshold(SystemTag::Rossler) == 10.0);
    CHECK(default_threshold(SystemTag::FitzHughNagumo) == 0.3);
    CHECK(default_threshold(SystemTag::KolmogorovDiagnostics) == 0.194);
}

TEST_CASE("add_noise") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> normal(2.0, 3.0);
    const Index k = 100000;
    RowMatrixXd p(k, 3);
    for (Index i = 0; i < k; ++i) {
        p(i, 0) = normal(rng);
        p(i, 1) = 4.0;
        p(i, 2) = 0.01 * normal(rng);
    }
    CHECK(add_noise(p, 0.0, 9) == p);
    const RowMatrixXd noisy = add_noise(p, 0.2, 9);
    CHECK(noisy == add_noise(p, 0.2, 9));
    CHECK(noisy != add_noise(p, 0.2, 10));
    CHECK(noisy.col(1) == p.col(1));

    const auto sigma = column_std(p);
    const auto diff_std = column_std(noisy - p);
    for (Index j : {0, 2}) CHECK(std::abs(diff_std(j) / (0.2 * sigma(j)) - 1.0) < 0.03);
    CHECK_THROWS_AS(add_noise(p, -0.1, 1), DomainError);
}

TEST_CASE("delay embedding") {
    RowMatrixXd scalar(20, 1);
    for (Index i = 0; i < 20; ++i) scalar(i, 0) = static_cast<double>(i);
    CHECK(delay_embed(scalar, {1, 1}) == scalar);
    const RowMatrixXd e = delay_embed(scalar, {3, 1});
    CHECK(e.rows() == 18);
    CHECK(e.row(10 - 2) == Eigen::RowVector3d(10, 9, 8));

    RowMatrixXd two(10, 2);
    two.setRandom();
    const RowMatrixXd e2 = delay_embed(two, {2, 3});
    CHECK(e2.cols() == 4);
    for (Index t = 3; t < 10; ++t) {
        CHECK(e2.block(t - 3, 0, 1, 2) == two.row(t));
        CHECK(e2.block(t - 3, 2, 1, 2) == two.row(t - 3));
    }
    CHECK_THROWS_AS(delay_embed(two, {4, 4}), InsufficientData);
    CHECK_THROWS_AS(delay_embed(two, {0, 1}), DomainError);
}

TEST_CASE("embedding columns recover the delayed observables bit-exactly") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-5, 5);
    for (int trial = 0; trial < 20; ++trial) {
        const Index r = 1 + trial % 3, m = 1 + trial % 5, s = 1 + trial % 4;
        RowMatrixXd p(60, r);
        for (Index i = 0; i < p.size(); ++i) p.data()[i] = u(rng);
        const RowMatrixXd e = delay_embed(p, {m, s});
        for (Index t = (m - 1) * s; t < 60; ++t)
            for (Index j = 0; j < m; ++j) CHECK(e.block(t - (m - 1) * s, j * r, 1, r) == p.row(t - j * s));
    }
}

TEST_CASE("make_dataset: split, horizon, alignment and leakage") {
    const auto obs = ramp_observables(1000);
    DatasetOptions opt;
    opt.tau = 0.0;
    auto ds = make_dataset(obs, 0.05, opt);
    CHECK(ds.split_index == 750);
    auto tr = training_pairs(ds);
    CHECK(tr.inputs.col(0) == tr.targets);

    opt.tau = 5.0;
    ds = make_dataset(obs, 0.05, opt);
    CHECK(ds.tau_steps == 100);
    CHECK(ds.tau() == doctest::Approx(5.0));

    opt.embedding = DelayEmbedding{3, 20};
    ds = make_dataset(obs, 0.05, opt);
    tr = training_pairs(ds);
    const auto te = test_pairs(ds);
    CHECK(tr.inputs.cols() == 3);
    for (Index i = 0; i < tr.targets.size(); ++i) {
        CHECK(tr.targets(i) - tr.inputs(i, 0) == 100.0);
        CHECK(tr.inputs(i, 0) - tr.inputs(i, 2) == 40.0);
    }
    // every test target lies beyond every training input plus the horizon
    CHECK(te.targets.minCoeff() > tr.inputs.col(0).maxCoeff() + 100.0);
    // training targets stay inside the training portion, test inputs inside the test portion
    CHECK(tr.targets.maxCoeff() < 750.0);
    CHECK(te.inputs.minCoeff() >= 750.0);
    CHECK(test_targets(ds) == te.targets);

    opt.tau = 0.07;
    CHECK_THROWS_AS(make_dataset(obs, 0.05, opt), DomainError);
    opt.tau = 5.0;
    CHECK_THROWS_AS(make_dataset(ramp_observables(100), 0.05, opt), InsufficientData);
}

TEST_CASE("make_dataset pollutes each portion with its own statistics") {
    const Index k = 40000;
    Observables obs;
    obs.p.resize(k, 1);
    obs.q = Eigen::VectorXd::Zero(k);
    std::mt19937_64 rng(8);
    std::normal_distribution<double> normal;
    for (Index i = 0; i < k; ++i) obs.p(i, 0) = (i < 30000 ? 1.0 : 10.0) * normal(rng);
    DatasetOptions opt;
    opt.noise_alpha_train = 0.1;
    opt.noise_alpha_test = 0.3;
    opt.seed = 4;
    const auto ds = make_dataset(obs, 1.0, opt);
    const RowMatrixXd diff = ds.p - obs.p;
    const double train_std = column_std(diff.topRows(30000))(0);
    const double test_std = column_std(diff.bottomRows(10000))(0);
    CHECK(train_std == doctest::Approx(0.1 * column_std(obs.p.topRows(30000))(0)).epsilon(0.03));
    CHECK(test_std == doctest::Approx(0.3 * column_std(obs.p.bottomRows(10000))(0)).epsilon(0.03));
    CHECK(ds.q == obs.q);

    opt.noise_alpha_train = 0.0;
    const auto clean_train = make_dataset(obs, 1.0, opt);
    CHECK(clean_train.p.topRows(30000) == obs.p.topRows(30000));
    // changing the train noise leaves the test portion untouched
    CHECK(clean_train.p.bottomRows(10000) == ds.p.bottomRows(10000));
}

TEST_CASE("count_events") {
    CHECK(count_events(Eigen::VectorXd{{0, 11, 12, 0, 11}}, 10.0) == 2);
    CHECK(count_events(Eigen::VectorXd{{1, 2, 3}}, 10.0) == 0);
    CHECK(count_events(Eigen::VectorXd{{11, 12, 13}}, 10.0) == 1);
    CHECK(count_events(Eigen::VectorXd{{10, 10}}, 10.0) == 0);
    CHECK(count_events(Eigen::VectorXd(0), 10.0) == 0);
}

TEST_CASE("dataset CSV round trip is bit-exact") {
    Observables obs;
    obs.p.resize(12, 2);
    obs.q.resize(12);
    const double specials[] = {0.1, 1.0 / 3.0, -0.0, 1e-300, 5e-324, 123456789.123456789, -2.5e17, 7.0};
    for (Index i = 0; i < 12; ++i) {
        obs.p(i, 0) = specials[i % 8];
        obs.p(i, 1) = std::sqrt(static_cast<double>(i) + 2.0);
        obs.q(i) = std::exp(-static_cast<double>(i));
    }
    DatasetOptions opt;
    opt.tau = 0.1;
    opt.q_e = 0.194;
    opt.noise_alpha_train = 0.05;
    opt.seed = 77;
    opt.embedding = DelayEmbedding{2, 1};
    const auto ds = make_dataset(obs, 0.1, opt, 20.0);
    const auto dir = std::filesystem::temp_directory_path() / "eventcast_test";
    write_dataset(dir / "ds.csv", ds);
    const auto back = read_dataset(dir / "ds.csv");
    CHECK(back.p.rows() == 12);
    for (Index i = 0; i < ds.p.size(); ++i)
        CHECK(std::bit_cast<std::uint64_t>(back.p.data()[i]) == std::bit_cast<std::uint64_t>(ds.p.data()[i]));
    CHECK(back.q == ds.q);
    CHECK(back.tau_steps == 1);
    CHECK(back.split_index == 9);
    CHECK(back.seed == 77);
    CHECK(back.q_e == 0.194);
    CHECK(back.embedding->m == 2);
    CHECK(back.t0 == 20.0);
}
