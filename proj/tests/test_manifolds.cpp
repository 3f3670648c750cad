#include "doctest.h"
#include "oracles.hpp"
#include "parabolax/manifolds.hpp"

using namespace parabolax;
using oracles::kPi;

namespace {

Equilibrium zero_eq(const Grid& g) {
    Equilibrium eq;
    eq.state = Vec::Zero(g.size());
    eq.residual = 0.0;
    return eq;
}

Equilibrium relax_to_equilibrium(const Grid& g, const NonlinearField& f,
                                 const Vec& seed, double relax_time) {
    StepperOptions opts;
    opts.dt = 2e-4;
    opts.stride = 1 << 20;
    const Vec guess = integrate(g, f, seed, relax_time, opts).back();
    return find_equilibrium(g, f, guess);
}

void check_w_orthonormal(const Grid& g, const Mat& v) {
    for (int i = 0; i < v.cols(); ++i)
        for (int j = 0; j < v.cols(); ++j) {
            const double expect = (i == j) ? 1.0 : 0.0;
            CHECK(std::abs(g.dot(v.col(i), v.col(j)) - expect) < 1e-10);
        }
}

}  // namespace

TEST_CASE("unstable frames match the analytic eigenfunctions") {
    Grid g = build_grid(DomainSpec::interval(0.0, 1.0, Bc::dirichlet), 64);

    TangentFrame heat = unstable_frame(g, zero_field(), zero_eq(g));
    CHECK(heat.index() == 0);

    TangentFrame ci15 = unstable_frame(g, chafee_infante(15.0), zero_eq(g));
    REQUIRE(ci15.index() == 1);
    check_w_orthonormal(g, ci15.vectors);
    Vec s1 = oracles::sample_1d(g, [](double x) { return std::sin(kPi * x); });
    s1 /= g.norm(s1);
    CHECK(std::abs(std::abs(g.dot(ci15.vectors.col(0), s1)) - 1.0) < 1e-8);

    TangentFrame ci50 = unstable_frame(g, chafee_infante(50.0), zero_eq(g));
    REQUIRE(ci50.index() == 2);
    check_w_orthonormal(g, ci50.vectors);
    Vec s2 = oracles::sample_1d(g, [](double x) { return std::sin(2 * kPi * x); });
    s2 /= g.norm(s2);
    // The span contains both analytic eigenfunctions.
    const Vec p1 = ci50.vectors * (ci50.vectors.transpose() * g.quadrature_weights().asDiagonal() * s1);
    const Vec p2 = ci50.vectors * (ci50.vectors.transpose() * g.quadrature_weights().asDiagonal() * s2);
    CHECK(g.norm(p1 - s1) < 1e-8);
    CHECK(g.norm(p2 - s2) < 1e-8);
}

TEST_CASE("adjoint frame equals the unstable frame in the self-adjoint case") {
    Grid g = build_grid(DomainSpec::interval(0.0, 1.0, Bc::dirichlet), 64);
    NonlinearField f = chafee_infante(50.0);
    TangentFrame u = unstable_frame(g, f, zero_eq(g));
    TangentFrame a = adjoint_stable_normal_frame(g, f, zero_eq(g));
    REQUIRE(u.index() == a.index());
    // Compare the spanned subspaces through their projectors.
    const Mat w = g.quadrature_weights().asDiagonal();
    const Mat pu = u.vectors * (u.vectors.transpose() * w);
    const Mat pa = a.vectors * (a.vectors.transpose() * w);
    CHECK((pu - pa).cwiseAbs().maxCoeff() < 1e-8);

    // Adjoint normals annihilate the stable eigenvectors.
    Eigen::SelfAdjointEigenSolver<Mat> es(linearized_operator(g, f, zero_eq(g).state));
    for (int k = 0; k < 4; ++k) {  // most stable directions
        const Vec vs = es.eigenvectors().col(k);
        for (int j = 0; j < a.index(); ++j)
            CHECK(std::abs(g.dot(a.vectors.col(j), vs)) < 1e-8 * g.norm(vs));
    }
}

TEST_CASE("rate estimates recover the analytic exponents") {
    Grid g = build_grid(DomainSpec::interval(0.0, 1.0, Bc::dirichlet), 64);

    NonlinearField ci = chafee_infante(15.0);
    TangentFrame frame = unstable_frame(g, ci, zero_eq(g));
    RateEstimate rates = rate_estimate(g, ci, zero_eq(g), frame, 1.5);
    CHECK(std::abs(rates.growth - (15.0 - kPi * kPi)) / (15.0 - kPi * kPi) < 0.02);

    TangentFrame empty = unstable_frame(g, zero_field(), zero_eq(g));
    RateEstimate heat = rate_estimate(g, zero_field(), zero_eq(g), empty, 1.5);
    CHECK(std::abs(heat.decay + kPi * kPi) / (kPi * kPi) < 0.02);

    // Horizon too short for a stable fit.
    TangentOptions topts;
    topts.dt = 1e-3;
    CHECK_THROWS_AS(rate_estimate(g, ci, zero_eq(g), frame, 5e-3, 7, topts),
                    SolverError);
}

TEST_CASE("grow_unstable flows seeds to the attracting equilibria and nests") {
    Grid g = build_grid(DomainSpec::interval(0.0, 1.0, Bc::dirichlet), 64);
    NonlinearField f = chafee_infante(15.0);
    TangentFrame frame = unstable_frame(g, f, zero_eq(g));
    StepperOptions sopts;
    sopts.dt = 1e-3;
    sopts.stride = 100;

    TangentFrame none = unstable_frame(g, zero_field(), zero_eq(g));
    CHECK(grow_unstable(g, zero_field(), Vec::Zero(g.size()), none, 1e-3, 4, 1.0,
                        sopts)
              .branches.empty());

    GrowResult grown =
        grow_unstable(g, f, Vec::Zero(g.size()), frame, 1e-3, 2, 5.0, sopts);
    REQUIRE(grown.branches.size() == 2);
    CHECK(grown.dropped_blowup == 0);
    Equilibrium phi1 = relax_to_equilibrium(
        g, f, oracles::sample_1d(g, [](double x) { return 2.0 * std::sin(kPi * x); }),
        0.5);
    for (const TrajectorySegment& branch : grown.branches) {
        const double dplus = g.norm(branch.back() - phi1.state);
        const double dminus = g.norm(branch.back() + phi1.state);
        CHECK(std::min(dplus, dminus) < 1e-3);
    }

    // Nesting: continuing each m-horizon endpoint one unit forward lands on
    // the corresponding (m+1)-horizon endpoint.
    GrowResult longer =
        grow_unstable(g, f, Vec::Zero(g.size()), frame, 1e-3, 2, 6.0, sopts);
    for (size_t b = 0; b < grown.branches.size(); ++b) {
        const Vec cont =
            integrate(g, f, grown.branches[b].back(), 1.0, sopts).back();
        CHECK(g.norm(cont - longer.branches[b].back()) < 1e-9);
    }
}

TEST_CASE("connection from the origin to phi1 in the gradient flow") {
    Grid g = build_grid(DomainSpec::interval(0.0, 1.0, Bc::dirichlet), 64);
    NonlinearField f = chafee_infante(15.0);
    TangentFrame frame = unstable_frame(g, f, zero_eq(g));
    Equilibrium phi1 = relax_to_equilibrium(
        g, f, oracles::sample_1d(g, [](double x) { return 2.0 * std::sin(kPi * x); }),
        0.5);

    ShootOptions opts;
    opts.tube_radius = 1e-4;
    opts.stepper.dt = 5e-4;
    opts.max_time = 20.0;
    ConnectingOrbit conn =
        shoot_connection(g, f, Vec::Zero(g.size()), frame, phi1.state, opts);
    CHECK(g.norm(conn.trajectory.back() - phi1.state) <= 1e-4);
    CHECK(conn.entry_time > 0.0);

    // Energy decreases along the connection (gradient structure).
    double prev = std::numeric_limits<double>::infinity();
    for (int j = 0; j < conn.trajectory.size(); j += 200) {
        const double e = oracles::chafee_infante_energy(
            g, 15.0, conn.trajectory.states[static_cast<size_t>(j)]);
        CHECK(e <= prev + 1e-12);
        prev = e;
    }

    // No homoclinic orbit at the origin: every probe settles elsewhere.
    ShootOptions hopts;
    hopts.stepper.dt = 5e-4;
    hopts.max_time = 12.0;
    CHECK_THROWS_AS(
        shoot_connection(g, f, Vec::Zero(g.size()), frame, Vec::Zero(g.size()),
                         hopts),
        NotFoundError);

    // Index-0 sources violate the precondition.
    TangentFrame none = unstable_frame(g, f, phi1);
    CHECK_THROWS_AS(
        shoot_connection(g, f, phi1.state, none, Vec::Zero(g.size()), opts),
        ConfigError);
}

TEST_CASE("transversality certificate for chafee-infante connections") {
    Grid g = build_grid(DomainSpec::interval(0.0, 1.0, Bc::dirichlet), 64);

    SUBCASE("target of index 0 is transverse by definition") {
        NonlinearField f = chafee_infante(15.0);
        TangentFrame frame = unstable_frame(g, f, zero_eq(g));
        Equilibrium phi1 = relax_to_equilibrium(
            g, f,
            oracles::sample_1d(g, [](double x) { return 2.0 * std::sin(kPi * x); }),
            0.5);
        ShootOptions sopts;
        sopts.stepper.dt = 5e-4;
        ConnectingOrbit conn =
            shoot_connection(g, f, Vec::Zero(g.size()), frame, phi1.state, sopts);
        TangentFrame normals = adjoint_stable_normal_frame(g, f, phi1);
        REQUIRE(normals.index() == 0);
        TransversalityReport rep =
            transversality_report(f, conn, frame, normals);
        CHECK(rep.decision == TransversalityReport::Decision::transverse);
        CHECK(std::isinf(rep.smallest_singular_value));
    }

    SUBCASE("index-2 to index-1 connection is transverse with margin") {
        NonlinearField f = chafee_infante(50.0);
        TangentFrame frame = unstable_frame(g, f, zero_eq(g));
        REQUIRE(frame.index() == 2);
        Equilibrium phi2 = relax_to_equilibrium(
            g, f,
            oracles::sample_1d(g,
                               [](double x) { return 3.0 * std::sin(2 * kPi * x); }),
            1.0);
        TangentFrame normals = adjoint_stable_normal_frame(g, f, phi2);
        REQUIRE(normals.index() == 1);

        ShootOptions sopts;
        sopts.stepper.dt = 2e-4;
        sopts.max_time = 20.0;
        sopts.radius = 0.05;  // short departure leg keeps the weak unstable
                              // direction resolvable against the strong one
        ConnectingOrbit conn =
            shoot_connection(g, f, Vec::Zero(g.size()), frame, phi2.state, sopts);

        TransversalityOptions topts;
        topts.tangent.dt = 2e-4;
        TransversalityReport rep =
            transversality_report(f, conn, frame, normals, topts);
        CHECK(rep.pairing.rows() == 1);
        CHECK(rep.pairing.cols() == 2);
        CHECK(rep.decision == TransversalityReport::Decision::transverse);
        CHECK(rep.smallest_singular_value > rep.margin);
        CHECK(rep.decision_stable);

        // Scaling or permuting frame columns does not change the decision.
        TangentFrame scaled = frame;
        scaled.vectors.col(0) *= -2.0;
        TransversalityReport rep2 =
            transversality_report(f, conn, scaled, normals, topts);
        CHECK(rep2.decision == rep.decision);

        TangentFrame permuted = frame;
        permuted.vectors.col(0).swap(permuted.vectors.col(1));
        TransversalityReport rep3 =
            transversality_report(f, conn, permuted, normals, topts);
        CHECK(rep3.decision == rep.decision);

        // Structural non-transversality: more normals than tangents.
        TangentFrame small = frame;
        small.vectors = frame.vectors.leftCols(1).eval();
        TangentFrame wide = normals;
        wide.vectors = Mat(g.size(), 2);
        wide.vectors.col(0) = normals.vectors.col(0);
        wide.vectors.col(1) = frame.vectors.col(0);
        TransversalityReport rep4 =
            transversality_report(f, conn, small, wide, topts);
        CHECK(rep4.decision == TransversalityReport::Decision::non_transverse);
    }
}

TEST_CASE("rate estimate along a periodic orbit uses tiled coefficients") {
    Grid g = build_grid(DomainSpec::circle(2.0 * kPi), 32);
    NonlinearField f = linear_rotating(1.0);
    OrbitOptions oopts;
    oopts.dt_fine = 4e-4;
    oopts.closure_tol = 1e-5;
    PeriodicOrbit orbit = find_periodic_orbit(
        g, f, oracles::sample_1d(g, [](double x) { return std::sin(x); }), 6.0,
        oopts);
    TangentFrame frame = unstable_frame(g, f, orbit);
    REQUIRE(frame.index() >= 1);
    TangentOptions topts;
    topts.dt = 1e-3;
    RateEstimate rates =
        rate_estimate(g, f, CriticalElement(orbit), frame, 9.0, 7, topts);
    // Dominant growth is the constant mode at unit rate.
    CHECK(std::abs(rates.growth - 1.0) < 0.05);
}
