#include "doctest.h"
#include "oracles.hpp"
#include "parabolax/semiflow.hpp"

using namespace parabolax;
using oracles::kPi;

TEST_CASE("heat flow matches the analytic solution") {
    Grid g = build_grid(DomainSpec::interval(0.0, 1.0, Bc::dirichlet), 256);
    const Vec u0 = oracles::sample_1d(g, [](double x) { return std::sin(kPi * x); });
    StepperOptions opts;
    opts.dt = 1e-4;
    opts.stride = 100;
    TrajectorySegment traj = integrate(g, zero_field(), u0, 0.1, opts);
    const Vec exact = std::exp(-kPi * kPi * 0.1) * u0;
    CHECK((traj.back() - exact).cwiseAbs().maxCoeff() < 1e-4);
    CHECK(traj.t_end() == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("quadratic blow-up is flagged near the ODE blow-up time") {
    Grid g = build_grid(DomainSpec::interval(0.0, 1.0, Bc::neumann), 32);
    NonlinearField f = polynomial_field("u^2", 1);
    const Vec u0 = Vec::Constant(g.size(), 10.0);
    StepperOptions opts;
    opts.dt = 1e-4;

    // Scalar oracle: u' = u^2, u(0)=10 exceeds the threshold just below 0.1.
    const double t_oracle = oracles::scalar_blowup_time(
        [](double u) { return u * u; }, 10.0, opts.blowup_threshold, 1e-6, 0.2);
    CHECK(t_oracle > 0.09);
    CHECK(t_oracle < 0.12);

    try {
        integrate(g, f, u0, 0.2, opts);
        FAIL("expected BlowUpError");
    } catch (const BlowUpError& e) {
        CHECK(e.t_star > 0.08);
        CHECK(e.t_star < 0.12);
    }
}

TEST_CASE("single-step and invalid-horizon contracts") {
    Grid g = build_grid(DomainSpec::interval(0.0, 1.0, Bc::dirichlet), 16);
    const Vec u0 = oracles::sample_1d(g, [](double x) { return std::sin(kPi * x); });
    StepperOptions opts;
    opts.dt = 0.01;
    TrajectorySegment traj = integrate(g, zero_field(), u0, 0.01, opts);
    CHECK(traj.size() == 2);
    CHECK(step_residual(g, zero_field(), traj) < 1e-12);
    CHECK_THROWS_AS(integrate(g, zero_field(), u0, 0.0, opts), ConfigError);
    opts.dt = 0.02;
    CHECK_THROWS_AS(integrate(g, zero_field(), u0, 0.01, opts), ConfigError);
}

TEST_CASE("semigroup defect is tiny for the linear flow") {
    Grid g = build_grid(DomainSpec::interval(0.0, 1.0, Bc::dirichlet), 64);
    const Vec u0 = oracles::sample_1d(g, [](double x) { return std::sin(kPi * x); });
    StepperOptions opts;
    opts.dt = 1e-3;
    CHECK(semigroup_defect(g, zero_field(), u0, 0.05, 0.05, opts) < 1e-8);
}

TEST_CASE("semigroup defect obeys the splitting bound and converges") {
    Grid g = build_grid(DomainSpec::interval(0.0, 1.0, Bc::dirichlet), 64);
    NonlinearField f = chafee_infante(15.0);
    const Vec u0 = oracles::sample_1d(
        g, [](double x) { return std::sin(kPi * x) + 0.3 * std::sin(3 * kPi * x); });
    StepperOptions opts;
    opts.dt = 7e-4;  // does not divide 0.05, so the composed runs differ
    const double d1 = semigroup_defect(g, f, u0, 0.05, 0.05, opts);
    CHECK(d1 < 5.0 * opts.dt);
    opts.dt = 3.5e-4;
    const double d2 = semigroup_defect(g, f, u0, 0.05, 0.05, opts);
    CHECK(d2 < d1);
    // Second-order scheme: halving dt should shrink the defect by ~4.
    CHECK(d1 / d2 > 2.5);
}

TEST_CASE("evaluation map returns the triple") {
    Grid gc = build_grid(DomainSpec::circle(2.0 * kPi), 64);
    const Vec s = oracles::sample_1d(gc, [](double x) { return std::sin(x); });
    EvalPoint at = evaluation_map(gc, s, Eigen::Vector2d(0.0, 0.0));
    CHECK(std::abs(at.x[0]) < 1e-14);
    CHECK(std::abs(at.u) < 1e-12);
    CHECK(at.p[0] == doctest::Approx(1.0).epsilon(1e-10));

    Grid gi = build_grid(DomainSpec::interval(0.0, 1.0, Bc::dirichlet), 31);
    const Vec c = Vec::Constant(gi.size(), 2.5);
    EvalPoint atc = evaluation_map_at(gi, c, 10);
    CHECK(atc.u == 2.5);
    CHECK(std::abs(atc.p[0]) < 1e-11);

    const Vec q = oracles::sample_1d(gi, [](double x) { return x * (1.0 - x); });
    // n = 31 puts a node exactly at x = 1/2.
    EvalPoint atq = evaluation_map(gi, q, Eigen::Vector2d(0.5, 0.0));
    CHECK(atq.u == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(std::abs(atq.p[0]) < 1e-9);
}

TEST_CASE("max-norm does not increase for the dirichlet heat flow") {
    Grid g = build_grid(DomainSpec::interval(0.0, 1.0, Bc::dirichlet), 64);
    std::mt19937_64 rng(3);

    // Backward Euler is monotone for arbitrary data.
    StepperOptions be;
    be.scheme = Scheme::imex1;
    be.dt = 1e-3;
    for (int trial = 0; trial < 10; ++trial) {
        std::normal_distribution<double> gauss;
        Vec u0(g.size());
        for (int i = 0; i < g.size(); ++i) u0[i] = gauss(rng);
        TrajectorySegment traj = integrate(g, zero_field(), u0, 0.05, be);
        double prev = traj.states.front().cwiseAbs().maxCoeff();
        for (const Vec& u : traj.states) {
            const double cur = u.cwiseAbs().maxCoeff();
            CHECK(cur <= prev + 1e-10);
            prev = cur;
        }
    }

    // The default scheme on smooth data.
    StepperOptions cn;
    cn.dt = 1e-3;
    const Vec smooth = oracles::sample_1d(
        g, [](double x) { return std::sin(kPi * x) + 0.3 * std::sin(3 * kPi * x); });
    TrajectorySegment traj = integrate(g, zero_field(), smooth, 0.2, cn);
    double prev = traj.states.front().cwiseAbs().maxCoeff();
    for (const Vec& u : traj.states) {
        const double cur = u.cwiseAbs().maxCoeff();
        CHECK(cur <= prev + 1e-10);
        prev = cur;
    }
}

TEST_CASE("self-convergence at the scheme order") {
    Grid g = build_grid(DomainSpec::interval(0.0, 1.0, Bc::dirichlet), 64);
    NonlinearField f = chafee_infante(15.0);
    const Vec u0 = oracles::sample_1d(g, [](double x) { return std::sin(kPi * x); });
    auto endpoint = [&](double dt) {
        StepperOptions opts;
        opts.dt = dt;
        opts.stride = 1 << 20;
        return integrate(g, f, u0, 0.1, opts).back();
    };
    const Vec a = endpoint(2e-3), b = endpoint(1e-3), c = endpoint(5e-4);
    const double e1 = g.norm(a - b), e2 = g.norm(b - c);
    CHECK(e1 / e2 > 3.0);  // nominal 4 for a second-order scheme
    CHECK(e1 / e2 < 5.5);
}

TEST_CASE("identical inputs give bit-identical trajectories") {
    Grid g = build_grid(DomainSpec::interval(0.0, 1.0, Bc::dirichlet), 32);
    NonlinearField f = chafee_infante(15.0);
    const Vec u0 = oracles::sample_1d(g, [](double x) { return std::sin(kPi * x); });
    StepperOptions opts;
    opts.dt = 1e-3;
    TrajectorySegment t1 = integrate(g, f, u0, 0.05, opts);
    TrajectorySegment t2 = integrate(g, f, u0, 0.05, opts);
    REQUIRE(t1.size() == t2.size());
    for (int j = 0; j < t1.size(); ++j)
        CHECK((t1.states[static_cast<size_t>(j)].array() ==
               t2.states[static_cast<size_t>(j)].array())
                  .all());
}
