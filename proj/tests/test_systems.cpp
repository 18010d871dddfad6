#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "eventcast/systems.hpp"
#include "eventcast/trajectory_io.hpp"

using namespace eventcast;

TEST_CASE("rossler_rhs hand evaluations") {
    const Eigen::Vector3d origin = rossler_rhs(Eigen::Vector3d(0, 0, 0));
    CHECK(origin.isApprox(Eigen::Vector3d(0, 0, 0.2)));

    const Eigen::Vector3d r = rossler_rhs(Eigen::Vector3d(0, 1, 0.1));
    CHECK(r(0) == doctest::Approx(-1.1).epsilon(1e-15));
    CHECK(r(1) == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(r(2) == doctest::Approx(-0.37).epsilon(1e-15));

    const Eigen::Vector3d skew = rossler_rhs(Eigen::Vector3d(1, 0, 0), RosslerParams{0, 0, 0});
    CHECK(skew == Eigen::Vector3d(0, 1, 0));

    CHECK_THROWS_AS(rossler_rhs(Eigen::Vector3d(NAN, 0, 0)), DomainError);
}

TEST_CASE("rossler_rhs is scalar-generic") {
    const Eigen::Vector3f r = rossler_rhs(Eigen::Vector3f(0, 1, 0.1f));
    CHECK(r(0) == doctest::Approx(-1.1).epsilon(1e-6));
}

TEST_CASE("fhn_rhs hand evaluations") {
    const FhnParams p = FhnParams::defaults();
    CHECK(fhn_rhs(Eigen::VectorXd::Zero(202), p).isZero(0.0));

    const FhnParams one = FhnParams::defaults(1);
    const Eigen::VectorXd d = fhn_rhs(Eigen::Vector2d(1, 0), one);
    CHECK(d(0) == 0.0);
    CHECK(d(1) == doctest::Approx(0.006));

    FhnParams two = FhnParams::defaults(2);
    two.a.setZero();
    two.b.setZero();
    two.c.setZero();
    two.k = 1.0;
    const Eigen::VectorXd d2 = fhn_rhs((Eigen::VectorXd(4) << 0, 0, 1, 0).finished(), two);
    CHECK(d2.isApprox((Eigen::VectorXd(4) << 1, 0, -1, 0).finished()));

    CHECK_THROWS_AS(fhn_rhs(Eigen::VectorXd::Zero(5), p), ShapeError);
}

TEST_CASE("fhn defaults match the published configuration") {
    const FhnParams p = FhnParams::defaults();
    CHECK(p.n_units() == 101);
    CHECK(p.b(0) == doctest::Approx(0.006));
    CHECK(p.b(100) == doctest::Approx(0.014));
    CHECK(p.adjacency.sum() == 101 * 100);
    CHECK_NOTHROW(p.validate());
    FhnParams bad = p;
    bad.adjacency(0, 1) = 0.0;
    CHECK_THROWS_AS(bad.validate(), DomainError);
}

TEST_CASE("fhn_rhs commutes with swapping identical units") {
    FhnParams p = FhnParams::defaults(12);
    const int i = 3, j = 8;
    p.b(j) = p.b(i);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::VectorXd x(24);
        for (auto& v : x) v = u(rng);
        Eigen::VectorXd px = x;
        std::swap(px(2 * i), px(2 * j));
        std::swap(px(2 * i + 1), px(2 * j + 1));
        Eigen::VectorXd fx = fhn_rhs(x, p);
        std::swap(fx(2 * i), fx(2 * j));
        std::swap(fx(2 * i + 1), fx(2 * j + 1));
        CHECK((fhn_rhs(px, p) - fx).cwiseAbs().maxCoeff() < 1e-15);
    }
}

namespace {
const VectorField decay = [](const Eigen::VectorXd& x) -> Eigen::VectorXd { return -x; };
}

TEST_CASE("integrate reproduces exp(-1)") {
    const auto rec = integrate(decay, Eigen::VectorXd::Ones(1), 0.0, 1.0, 0.25);
    REQUIRE(rec.size() == 5);
    CHECK(std::abs(rec.states(4, 0) - std::exp(-1.0)) < 1e-8);
    // dense output at interior samples
    CHECK(std::abs(rec.states(1, 0) - std::exp(-0.25)) < 1e-8);
    CHECK(std::abs(rec.states(2, 0) - std::exp(-0.5)) < 1e-8);
}

TEST_CASE("integrate: zero field gives a constant series") {
    const VectorField zero = [](const Eigen::VectorXd& x) -> Eigen::VectorXd { return Eigen::VectorXd::Zero(x.size()); };
    const Eigen::Vector2d x0(3.0, -1.5);
    const auto rec = integrate(zero, x0, 0.0, 10.0, 0.5);
    for (Eigen::Index k = 0; k < rec.size(); ++k) CHECK(rec.states.row(k) == x0.transpose());
}

TEST_CASE("integrate: error falls with tolerance at order >= 4") {
    std::vector<double> errs, steps;
    for (double tol : {1e-4, 2.5e-5, 6.25e-6, 1.5625e-6, 3.90625e-7, 9.765625e-8}) {
        IntegrationStats stats;
        IntegrationOptions o;
        o.rel_tol = tol;
        o.abs_tol = tol;
        o.stats = &stats;
        const auto rec = integrate(decay, Eigen::VectorXd::Ones(1), 0.0, 8.0, 8.0, o);
        errs.push_back(std::abs(rec.states(1, 0) - std::exp(-8.0)));
        steps.push_back(static_cast<double>(stats.accepted));
    }
    for (std::size_t i = 1; i < errs.size(); ++i) CHECK(errs[i] < errs[i - 1]);
    // slope of log(error) against log(mean step) over the ladder
    const double order = std::log(errs.front() / errs.back()) / std::log(steps.back() / steps.front());
    CHECK(order >= 4.0);
}

TEST_CASE("integrate: samples sit exactly at t0 + k dt after the discard") {
    IntegrationOptions o;
    o.discard = 1.0;
    const auto rec = integrate(decay, Eigen::VectorXd::Ones(1), 0.0, 3.0, 0.1, o);
    CHECK(rec.size() == 21);
    CHECK(rec.t0 == doctest::Approx(1.0));
    CHECK(std::abs(rec.states(0, 0) - std::exp(-1.0)) < 1e-8);
    CHECK(std::abs(rec.states(20, 0) - std::exp(-3.0)) < 1e-8);
    CHECK_THROWS_AS(integrate(decay, Eigen::VectorXd::Ones(1), 0.0, 0.5, 0.1, o), DomainError);
}

TEST_CASE("integrate: blow-up reports the failure time") {
    const VectorField blowup = [](const Eigen::VectorXd& x) -> Eigen::VectorXd { return x.array().square(); };
    try {
        integrate(blowup, Eigen::VectorXd::Ones(1), 0.0, 2.0, 0.1);
        FAIL("expected IntegrationError");
    } catch (const IntegrationError& e) {
        CHECK(e.time() == doctest::Approx(1.0).epsilon(1e-3));
    }
}

TEST_CASE("rossler trajectory shows extreme bursts and is deterministic") {
    const auto a = simulate_rossler(Eigen::Vector3d(0, 1, 0.1), 500.0, 0.05);
    CHECK(a.size() == 10001);
    CHECK(a.states.col(2).maxCoeff() > 10.0);
    CHECK_NOTHROW(a.validate());
    const auto b = simulate_rossler(Eigen::Vector3d(0, 1, 0.1), 500.0, 0.05);
    CHECK(a.states == b.states);
}

TEST_CASE("trajectory files round-trip bit-exactly") {
    const auto rec = simulate_rossler(Eigen::Vector3d(0, 1, 0.1), 20.0, 0.05);
    const auto path = std::filesystem::temp_directory_path() / "eventcast_test" / "rossler.traj";
    write_trajectory(path, rec);
    CHECK(std::filesystem::file_size(path) == static_cast<std::uintmax_t>(rec.states.size() * 8));
    const auto back = read_trajectory(path);
    CHECK(back.states == rec.states);
    CHECK(back.dt == rec.dt);
    CHECK(back.t0 == rec.t0);
    CHECK(back.system_tag == SystemTag::Rossler);
    CHECK_THROWS_AS(read_trajectory(path.parent_path() / "missing.traj"), IoError);
}
