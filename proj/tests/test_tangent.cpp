#include "doctest.h"
#include "oracles.hpp"
#include "parabolax/tangent.hpp"

using namespace parabolax;
using oracles::kPi;

namespace {

TrajectorySegment constant_traj(const Grid& g, const Vec& u, double t0, double t1,
                                int n_samples = 5) {
    TrajectorySegment traj;
    traj.grid = &g;
    traj.scheme = "imex2";
    traj.dt = (t1 - t0) / (n_samples - 1);
    for (int j = 0; j < n_samples; ++j) {
        traj.times.push_back(t0 + (t1 - t0) * j / (n_samples - 1));
        traj.states.push_back(u);
    }
    return traj;
}

// Random smooth synthetic coefficient field on a circle grid.
CoefficientField random_coeffs(const Grid& g, double t0, double t1,
                               std::mt19937_64& rng, int n_times = 9) {
    CoefficientField c;
    c.grid = &g;
    c.source = CoefficientField::Source::direct;
    c.a = Mat::Zero(g.size(), n_times);
    c.b.assign(1, Mat::Zero(g.size(), n_times));
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    const Vec a0 = oracles::random_fourier_circle(g, 4, rng);
    const Vec a1 = oracles::random_fourier_circle(g, 4, rng);
    const Vec b0 = oracles::random_fourier_circle(g, 4, rng);
    const Vec b1 = oracles::random_fourier_circle(g, 4, rng);
    for (int j = 0; j < n_times; ++j) {
        const double t = t0 + (t1 - t0) * j / (n_times - 1);
        c.times.push_back(t);
        c.a.col(j) = a0 + std::sin(2.0 * t) * a1;
        c.b[0].col(j) = b0 + t * b1;
    }
    return c;
}

}  // namespace

TEST_CASE("linearize_along reproduces the analytic partials") {
    Grid g = build_grid(DomainSpec::circle(2.0 * kPi), 32);

    TrajectorySegment zero = constant_traj(g, Vec::Zero(g.size()), 0.0, 1.0);
    CoefficientField c0 = linearize_along(zero_field(), zero);
    CHECK(c0.a.cwiseAbs().maxCoeff() == 0.0);
    CHECK(c0.b[0].cwiseAbs().maxCoeff() == 0.0);

    CoefficientField ci = linearize_along(chafee_infante(15.0), zero);
    CHECK((ci.a.array() - 15.0).abs().maxCoeff() < 1e-14);

    TrajectorySegment any =
        constant_traj(g, oracles::sample_1d(g, [](double x) { return std::sin(x); }),
                      0.0, 1.0);
    CoefficientField cr = linearize_along(polynomial_field("u - p", 1), any);
    CHECK((cr.a.array() - 1.0).abs().maxCoeff() < 1e-14);
    CHECK((cr.b[0].array() + 1.0).abs().maxCoeff() < 1e-14);
}

TEST_CASE("difference coefficients: averaging oracle") {
    Grid g = build_grid(DomainSpec::circle(2.0 * kPi), 16);
    NonlinearField cubic = polynomial_field("-u^3", 1);
    TrajectorySegment t0 = constant_traj(g, Vec::Zero(g.size()), 0.0, 1.0);
    TrajectorySegment t1 = constant_traj(g, Vec::Ones(g.size()), 0.0, 1.0);

    // Same trajectory: reduces exactly to the linearization.
    CoefficientField same = difference_coefficients(cubic, t1, t1);
    CoefficientField lin = linearize_along(cubic, t1);
    CHECK((same.a - lin.a).cwiseAbs().maxCoeff() < 1e-13);

    // f = -u^3 between 0 and 1: a = -int_0^1 3 theta^2 dtheta = -1.
    CoefficientField diff = difference_coefficients(cubic, t0, t1);
    CHECK((diff.a.array() + 1.0).abs().maxCoeff() < 1e-12);

    // Linear fields: coefficients independent of the trajectories.
    NonlinearField linf = polynomial_field("2*u - 3*p", 1);
    CoefficientField d2 = difference_coefficients(linf, t0, t1);
    CHECK((d2.a.array() - 2.0).abs().maxCoeff() < 1e-13);
    CHECK((d2.b[0].array() + 3.0).abs().maxCoeff() < 1e-13);
}

TEST_CASE("propagate solves the heat equation and is linear") {
    Grid g = build_grid(DomainSpec::interval(0.0, 1.0, Bc::dirichlet), 256);
    TrajectorySegment zero = constant_traj(g, Vec::Zero(g.size()), 0.0, 0.2);
    CoefficientField c = linearize_along(zero_field(), zero);
    TangentOptions opts;
    opts.dt = 1e-4;

    const Vec v0 = oracles::sample_1d(g, [](double x) { return std::sin(kPi * x); });
    const Vec vT = propagate(c, v0, 0.0, 0.1, opts);
    CHECK((vT - std::exp(-kPi * kPi * 0.1) * v0).cwiseAbs().maxCoeff() < 1e-4);

    CHECK(propagate(c, Vec::Zero(g.size()), 0.0, 0.1, opts).cwiseAbs().maxCoeff() ==
          0.0);

    // Evolution-family composition on lattice-aligned intermediate times.
    opts.dt = 1e-3;
    const Vec mid = propagate(c, v0, 0.0, 0.05, opts);
    const Vec two = propagate(c, mid, 0.05, 0.1, opts);
    const Vec one = propagate(c, v0, 0.0, 0.1, opts);
    CHECK(g.norm(two - one) / g.norm(one) < 1e-8);

    // Linearity to machine precision.
    std::mt19937_64 rng(5);
    const Vec w0 = oracles::random_sine_interval(g, 8, rng);
    const Vec lin1 = propagate(c, (2.0 * v0 - 3.0 * w0).eval(), 0.0, 0.05, opts);
    const Vec lin2 = 2.0 * propagate(c, v0, 0.0, 0.05, opts) -
                     3.0 * propagate(c, w0, 0.0, 0.05, opts);
    CHECK(g.norm(lin1 - lin2) / g.norm(lin1) < 1e-13);
}

TEST_CASE("adjoint of the heat flow matches the self-adjoint oracle") {
    Grid g = build_grid(DomainSpec::interval(0.0, 1.0, Bc::dirichlet), 256);
    TrajectorySegment zero = constant_traj(g, Vec::Zero(g.size()), 0.0, 0.2);
    CoefficientField c = linearize_along(zero_field(), zero);
    TangentOptions opts;
    opts.dt = 1e-4;
    const Vec psiT = oracles::sample_1d(g, [](double x) { return std::sin(kPi * x); });
    const Vec psi0 = propagate_adjoint(c, psiT, 0.1, 0.0, opts);
    CHECK((psi0 - std::exp(-kPi * kPi * 0.1) * psiT).cwiseAbs().maxCoeff() < 1e-4);
    CHECK(propagate_adjoint(c, Vec::Zero(g.size()), 0.1, 0.0, opts)
              .cwiseAbs()
              .maxCoeff() == 0.0);
}

TEST_CASE("duality holds to round-off for random coefficient fields") {
    Grid g = build_grid(DomainSpec::circle(2.0 * kPi), 64);
    std::mt19937_64 rng(17);
    TangentOptions opts;
    opts.dt = 1e-3;
    for (int trial = 0; trial < 5; ++trial) {
        CoefficientField c = random_coeffs(g, 0.0, 0.5, rng);
        const Vec v0 = oracles::random_fourier_circle(g, 10, rng);
        const Vec psiT = oracles::random_fourier_circle(g, 10, rng);
        CHECK(duality_defect(c, v0, psiT, 0.0, 0.5, opts) < 1e-10);
        CHECK(duality_defect(c, Vec::Zero(g.size()), psiT, 0.0, 0.5, opts) == 0.0);
    }
}

TEST_CASE("mismatched adjoint coefficients break duality (negative control)") {
    Grid g = build_grid(DomainSpec::circle(2.0 * kPi), 64);
    std::mt19937_64 rng(23);
    CoefficientField c = random_coeffs(g, 0.0, 0.5, rng);
    CoefficientField wrong = c;
    wrong.a.array() += 0.5;
    TangentOptions opts;
    opts.dt = 1e-3;
    const Vec v0 = oracles::random_fourier_circle(g, 10, rng);
    const Vec psiT = oracles::random_fourier_circle(g, 10, rng);
    TangentHistory v = propagate_history(c, v0, 0.0, 0.5, opts);
    TangentHistory psi = propagate_adjoint_history(wrong, psiT, 0.5, 0.0, opts);
    const double ref = g.dot(psi.states.back(), v.states.back());
    double worst = 0.0;
    for (size_t j = 0; j < v.states.size(); ++j)
        worst = std::max(worst, std::abs(g.dot(psi.states[j], v.states[j]) - ref));
    worst /= g.norm(psiT) * g.norm(v.states.back());
    CHECK(worst > 1e-3);
}

TEST_CASE("both schemes keep the transpose duality") {
    Grid g = build_grid(DomainSpec::circle(2.0 * kPi), 32);
    std::mt19937_64 rng(29);
    CoefficientField c = random_coeffs(g, 0.0, 0.3, rng);
    const Vec v0 = oracles::random_fourier_circle(g, 6, rng);
    const Vec psiT = oracles::random_fourier_circle(g, 6, rng);
    for (Scheme s : {Scheme::imex1, Scheme::imex2}) {
        TangentOptions opts;
        opts.scheme = s;
        opts.dt = 1e-3;
        CHECK(duality_defect(c, v0, psiT, 0.0, 0.3, opts) < 1e-10);
    }
}

TEST_CASE("linearization consistency along the nonlinear flow") {
    Grid g = build_grid(DomainSpec::interval(0.0, 1.0, Bc::dirichlet), 64);
    NonlinearField f = chafee_infante(15.0);
    const Vec u0 = oracles::sample_1d(g, [](double x) { return std::sin(kPi * x); });
    std::mt19937_64 rng(31);
    const Vec v0 = oracles::random_sine_interval(g, 6, rng);
    StepperOptions opts;
    opts.dt = 5e-4;
    const double e3 = linearization_consistency(g, f, u0, v0, 0.2, 1e-3, opts);
    const double e4 = linearization_consistency(g, f, u0, v0, 0.2, 1e-4, opts);
    const double e5 = linearization_consistency(g, f, u0, v0, 0.2, 1e-5, opts);
    CHECK(e3 < 5e-2);
    CHECK(e4 < 5e-3);
    CHECK(e5 < 5e-3);  // floor region
    CHECK(e4 < e3);
}

TEST_CASE("restricted monodromy recovers invariant-subspace multipliers") {
    Grid g = build_grid(DomainSpec::interval(0.0, 1.0, Bc::dirichlet), 64);
    // Constant coefficients a = 3, b = 0: eigenpairs sin(k pi x) with rates
    // 3 - k^2 pi^2 (discrete laplacian eigenvalue for the exact rate).
    TrajectorySegment zero = constant_traj(g, Vec::Zero(g.size()), 0.0, 1.0);
    CoefficientField c = linearize_along(polynomial_field("3*u", 1), zero);
    TangentOptions opts;
    opts.dt = 1e-4;

    Mat q(g.size(), 1);
    q.col(0) = oracles::sample_1d(g, [](double x) { return std::sin(kPi * x); });
    q.col(0) /= g.norm(q.col(0));
    RestrictedMonodromy rm = restricted_monodromy(c, q, 0.0, 0.5, opts);
    CHECK(rm.invariance_defect < 1e-10);
    const auto mu = rm.multipliers();
    REQUIRE(mu.size() == 1);
    // Use the discrete eigenvalue of the laplacian for the exact rate.
    Eigen::SelfAdjointEigenSolver<Mat> es(g.laplacian_matrix());
    const double rate = 3.0 + es.eigenvalues()[g.size() - 1];
    CHECK(std::abs(mu[0]) ==
          doctest::Approx(std::exp(0.5 * rate)).epsilon(1e-6));
}

TEST_CASE("source accumulation satisfies the exact trapezoid duality") {
    Grid g = build_grid(DomainSpec::circle(2.0 * kPi), 32);
    std::mt19937_64 rng(37);
    CoefficientField c = random_coeffs(g, 0.0, 0.4, rng);
    TangentOptions opts;
    opts.dt = 1e-3;
    const Vec psiT = oracles::random_fourier_circle(g, 6, rng);
    const Vec gvec = oracles::random_fourier_circle(g, 6, rng);
    auto source = [&](double t) { return (std::cos(3.0 * t) * gvec).eval(); };

    const Vec k = propagate_source_accumulate(c, source, 0.0, 0.4, opts);
    const double lhs = g.dot(psiT, k);

    TangentHistory psi = propagate_adjoint_history(c, psiT, 0.4, 0.0, opts);
    const std::vector<double> w = trapezoid_weights(psi.times);
    double rhs = 0.0;
    for (size_t j = 0; j < psi.times.size(); ++j)
        rhs += w[j] * g.dot(psi.states[j], source(psi.times[j]));
    CHECK(std::abs(lhs - rhs) < 1e-11 * std::abs(rhs));
}

TEST_CASE("continuous adjoint residual stays small as a diagnostic") {
    Grid g = build_grid(DomainSpec::circle(2.0 * kPi), 64);
    std::mt19937_64 rng(41);
    CoefficientField c = random_coeffs(g, 0.0, 0.3, rng);
    TangentOptions opts;
    opts.dt = 1e-3;
    const Vec psiT = oracles::random_fourier_circle(g, 4, rng);
    TangentHistory psi = propagate_adjoint_history(c, psiT, 0.3, 0.0, opts);
    CHECK(continuous_adjoint_residual(c, psi) < 0.05);
}

TEST_CASE("difference coefficients reject mismatched windows") {
    Grid g = build_grid(DomainSpec::circle(2.0 * kPi), 16);
    TrajectorySegment a = constant_traj(g, Vec::Zero(g.size()), 0.0, 1.0);
    TrajectorySegment b = constant_traj(g, Vec::Zero(g.size()), 0.0, 2.0);
    CHECK_THROWS_AS(difference_coefficients(zero_field(), a, b), ConfigError);
}
