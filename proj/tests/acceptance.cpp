// Acceptance suite: one test case per criterion, each printing a PASS/FAIL
// line with its runtime. Tolerances are pinned in code.

#include <chrono>
#include <exception>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include "doctest.h"
#include "oracles.hpp"
#include "parabolax/manifolds.hpp"
#include "parabolax/nodal.hpp"
#include "parabolax/perturbation.hpp"
#include "parabolax/pipelines.hpp"

using namespace parabolax;
using oracles::kPi;
namespace fs = std::filesystem;

namespace {

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                             start)
            .count();
    }
};

struct Criterion {
    int id;
    std::string label;
    bool ok = true;
    Timer timer;
    Criterion(int i, std::string text) : id(i), label(std::move(text)) {}
    void expect(bool cond) { ok = ok && cond; }
    ~Criterion() {
        const bool aborted = std::uncaught_exceptions() > 0;
        std::printf("[criterion %d] %s — %s (%.1f s)\n", id,
                    (ok && !aborted) ? "PASS" : "FAIL", label.c_str(),
                    timer.seconds());
        std::fflush(stdout);
    }
};

// Shared lab state: grids live as long as the process, orbits are cached by
// resolution so criteria 2, 6 and 8 share one Newton solve.
struct Lab {
    std::map<int, std::unique_ptr<Grid>> circles;
    std::map<int, std::unique_ptr<Grid>> intervals;
    std::map<int, PeriodicOrbit> waves;

    static Lab& get() {
        static Lab lab;
        return lab;
    }

    Grid& circle(int n) {
        auto it = circles.find(n);
        if (it == circles.end())
            it = circles.emplace(n, std::make_unique<Grid>(build_grid(
                                        DomainSpec::circle(2.0 * kPi), n)))
                     .first;
        return *it->second;
    }
    Grid& interval(int n) {
        auto it = intervals.find(n);
        if (it == intervals.end())
            it = intervals
                     .emplace(n, std::make_unique<Grid>(build_grid(
                                     DomainSpec::interval(0.0, 1.0, Bc::dirichlet),
                                     n)))
                     .first;
        return *it->second;
    }
    const PeriodicOrbit& wave(int n) {
        auto it = waves.find(n);
        if (it == waves.end()) {
            Grid& g = circle(n);
            const Vec guess =
                oracles::sample_1d(g, [](double x) { return std::sin(x); });
            OrbitOptions opts;
            opts.dt_coarse = 2e-3;
            opts.dt_fine = 2e-4;
            it = waves.emplace(n, find_periodic_orbit(g, linear_rotating(1.0),
                                                      guess, 6.0, opts))
                     .first;
        }
        return it->second;
    }
};

Equilibrium equilibrium_at(const Grid& g, const NonlinearField& f,
                           const Vec& guess, double relax) {
    Vec seed = guess;
    if (relax > 0.0) {
        StepperOptions opts;
        opts.dt = 2e-4;
        opts.stride = 1 << 20;
        seed = integrate(g, f, seed, relax, opts).back();
    }
    return find_equilibrium(g, f, seed);
}

}  // namespace

TEST_CASE("criterion 1: laplacian spectrum and chafee-infante morse indices") {
    Criterion c(1, "spectrum oracle, n=256, runtime <= 10 s");
    Grid& g = Lab::get().interval(256);
    Equilibrium zero;
    zero.state = Vec::Zero(g.size());

    SpectrumReport heat = equilibrium_spectrum(g, zero_field(), zero, 5);
    for (int k = 1; k <= 5; ++k) {
        const double exact = -k * k * kPi * kPi;
        const double got = heat.eigenvalues[static_cast<size_t>(k - 1)].real();
        const bool ok = std::abs(got - exact) / std::abs(exact) <= 1e-4;
        c.expect(ok);
        CHECK(ok);
    }
    SpectrumReport ci15 = equilibrium_spectrum(g, chafee_infante(15.0), zero, 5);
    SpectrumReport ci50 = equilibrium_spectrum(g, chafee_infante(50.0), zero, 5);
    c.expect(ci15.morse_index == 1);
    c.expect(ci50.morse_index == 2);
    CHECK(ci15.morse_index == 1);
    CHECK(ci50.morse_index == 2);

    c.expect(c.timer.seconds() <= 10.0);
    CHECK(c.timer.seconds() <= 10.0);
}

TEST_CASE("criterion 2: floquet data of the rotating wave") {
    Criterion c(2, "floquet oracle, spectral n=64, runtime <= 60 s");
    const PeriodicOrbit& orbit = Lab::get().wave(64);
    NonlinearField f = linear_rotating(1.0);

    SpectrumReport rep = period_map_spectrum(f, orbit, 8);
    const double mu0 = std::abs(rep.multipliers[0]);
    const double exact0 = std::exp(2.0 * kPi);
    c.expect(std::abs(mu0 - exact0) / exact0 <= 1e-3);
    CHECK(std::abs(mu0 - exact0) / exact0 <= 1e-3);

    c.expect(rep.trivial_multiplier_residual >= 0.0);
    c.expect(rep.trivial_multiplier_residual <= 1e-6);
    CHECK(rep.trivial_multiplier_residual <= 1e-6);

    for (int k = 0; k <= 3; ++k) {
        ModeMultiplier mm = circle_mode_multiplier(f, orbit, k);
        const double exact = std::exp(2.0 * kPi * (1.0 - k * k));
        const bool ok = std::abs(mm.magnitude - exact) / exact <= 1e-3;
        c.expect(ok);
        CHECK(ok);
    }
    c.expect(c.timer.seconds() <= 60.0);
    CHECK(c.timer.seconds() <= 60.0);
}

TEST_CASE("criterion 3: transpose-adjoint duality on random coefficient fields") {
    Criterion c(3, "duality defect <= 1e-8 on 20 random fields, n=128");
    Grid& g = Lab::get().circle(128);
    std::mt19937_64 rng(2026);
    TangentOptions opts;
    opts.dt = 1e-3;
    for (int trial = 0; trial < 20; ++trial) {
        CoefficientField coeffs;
        coeffs.grid = &g;
        coeffs.source = CoefficientField::Source::direct;
        const int n_times = 9;
        coeffs.a = Mat::Zero(g.size(), n_times);
        coeffs.b.assign(1, Mat::Zero(g.size(), n_times));
        const Vec a0 = oracles::random_fourier_circle(g, 6, rng);
        const Vec a1 = oracles::random_fourier_circle(g, 6, rng);
        const Vec b0 = oracles::random_fourier_circle(g, 6, rng);
        const Vec b1 = oracles::random_fourier_circle(g, 6, rng);
        for (int j = 0; j < n_times; ++j) {
            const double t = static_cast<double>(j) / (n_times - 1);
            coeffs.times.push_back(t);
            coeffs.a.col(j) = a0 + std::sin(3.0 * t) * a1;
            coeffs.b[0].col(j) = b0 + t * b1;
        }
        const Vec v0 = oracles::random_fourier_circle(g, 12, rng);
        const Vec psiT = oracles::random_fourier_circle(g, 12, rng);
        const double defect = duality_defect(coeffs, v0, psiT, 0.0, 1.0, opts);
        c.expect(defect <= 1e-8);
        CHECK(defect <= 1e-8);
    }
}

TEST_CASE("criterion 4: variation-of-constants derivative and adjoint identity") {
    Criterion c(4, "flow derivative vs centered differences, runtime <= 120 s");
    Grid& g = Lab::get().interval(128);
    NonlinearField f = chafee_infante(15.0);
    const Vec u0 =
        oracles::sample_1d(g, [](double x) { return 0.5 * std::sin(kPi * x); });
    StepperOptions sopts;
    sopts.dt = 2e-4;
    sopts.stride = 1;
    TrajectorySegment traj = integrate(g, f, u0, 0.5, sopts);

    SpaceTimeWindow window;
    window.x_lo[0] = 0.0;
    window.x_hi[0] = 1.0;
    window.t_lo = 0.1;
    window.t_hi = 0.4;
    const int tdim = 3;
    Vec lo = Vec::Constant(tdim, std::numeric_limits<double>::infinity());
    Vec hi = -lo;
    for (const Vec& u : traj.states) {
        const Vec ux = g.d1(0) * u;
        for (int i = 0; i < g.size(); ++i) {
            Vec y(tdim);
            y << g.nodes()(i, 0), u[i], ux[i];
            lo = lo.cwiseMin(y);
            hi = hi.cwiseMax(y);
        }
    }
    TripleBox box{lo.array() - 0.5, hi.array() + 0.5};
    PerturbationBump bump = build_bump(traj, window, box, {});

    const Vec psi_m = oracles::sample_1d(g, [](double x) { return std::sin(kPi * x); });
    DerivativeCheck check = derivative_check(g, f, u0, 0.5, bump, 1e-4, psi_m, sopts);
    c.expect(check.fd_error <= 1e-3);
    c.expect(check.duality_mismatch <= 1e-8);
    CHECK(check.fd_error <= 1e-3);
    CHECK(check.duality_mismatch <= 1e-8);
    c.expect(c.timer.seconds() <= 120.0);
    CHECK(c.timer.seconds() <= 120.0);
}

TEST_CASE("criterion 5: automatic 1d transversality at lambda = 50") {
    Criterion c(5, "transverse connections at n in {128,256}, runtime <= 300 s");
    NonlinearField f = chafee_infante(50.0);
    for (int n : {128, 256}) {
        Grid& g = Lab::get().interval(n);
        Equilibrium zero;
        zero.state = Vec::Zero(g.size());
        TangentFrame frame0 = unstable_frame(g, f, zero);
        REQUIRE(frame0.index() == 2);

        Equilibrium phi1 = equilibrium_at(
            g, f,
            oracles::sample_1d(g, [](double x) { return 2.0 * std::sin(kPi * x); }),
            0.6);
        Equilibrium phi2 = equilibrium_at(
            g, f,
            oracles::sample_1d(g,
                               [](double x) { return 3.0 * std::sin(2 * kPi * x); }),
            1.0);
        TangentFrame phi2_frame = unstable_frame(g, f, phi2);
        REQUIRE(phi2_frame.index() == 1);

        ShootOptions sopts;
        sopts.stepper.dt = 2.5e-4;
        sopts.radius = 0.05;
        sopts.max_time = 20.0;

        // Index-1 equilibrium to phi1: codimension-0 target, transverse by
        // definition.
        ConnectingOrbit conn1 =
            shoot_connection(g, f, phi2.state, phi2_frame, phi1.state, sopts);
        TangentFrame normals1 = adjoint_stable_normal_frame(g, f, phi1);
        TransversalityReport rep1 =
            transversality_report(f, conn1, phi2_frame, normals1);
        c.expect(rep1.decision == TransversalityReport::Decision::transverse);
        CHECK(rep1.decision == TransversalityReport::Decision::transverse);

        // Origin (index 2) to phi2 (index 1): the 1 x 2 pairing must clear
        // the margin, stably in t_star and under frame scaling.
        ConnectingOrbit conn2 =
            shoot_connection(g, f, zero.state, frame0, phi2.state, sopts);
        TangentFrame normals2 = adjoint_stable_normal_frame(g, f, phi2);
        TransversalityOptions topts;
        topts.tangent.dt = 2.5e-4;
        TransversalityReport rep2 =
            transversality_report(f, conn2, frame0, normals2, topts);
        c.expect(rep2.decision == TransversalityReport::Decision::transverse);
        c.expect(rep2.smallest_singular_value > rep2.margin);
        c.expect(rep2.decision_stable);
        CHECK(rep2.decision == TransversalityReport::Decision::transverse);
        CHECK(rep2.smallest_singular_value > rep2.margin);
        CHECK(rep2.decision_stable);

        TangentFrame scaled = frame0;
        scaled.vectors.col(0) *= -2.0;
        scaled.vectors.col(1) *= 0.5;
        TransversalityReport rep3 =
            transversality_report(f, conn2, scaled, normals2, topts);
        c.expect(rep3.decision == rep2.decision);
        CHECK(rep3.decision == rep2.decision);
    }
    c.expect(c.timer.seconds() <= 300.0);
    CHECK(c.timer.seconds() <= 300.0);
}

TEST_CASE("criterion 6: observability and singular-set scan of the wave") {
    Criterion c(6, "good_fraction 1, empty singular set, stable tns");
    NonlinearField f = linear_rotating(1.0);

    auto scan_at = [&](int n) {
        const PeriodicOrbit& orbit = Lab::get().wave(n);
        Grid& g = Lab::get().circle(n);
        TrajectorySegment sub = subsample_trajectory(orbit.samples, 201);
        SampledFamily family;
        family.grid = &g;
        family.taus = {0.0};
        family.times = sub.times;
        family.values.emplace_back();
        for (const Vec& u : sub.states)
            family.values[0].push_back(semiflow_rhs(g, f, u));
        return singular_nodal_scan(family);
    };

    {
        const PeriodicOrbit& orbit = Lab::get().wave(64);
        Grid& g = Lab::get().circle(64);
        std::vector<int> probes(static_cast<size_t>(g.size()));
        for (int i = 0; i < g.size(); ++i) probes[static_cast<size_t>(i)] = i;
        ObservabilityReport rep = period_observability(
            f, subsample_trajectory(orbit.samples, 201), orbit.period, probes);
        c.expect(rep.good_fraction == 1.0);
        CHECK(rep.good_fraction == 1.0);
    }

    SingularNodalSet base = scan_at(64);
    c.expect(base.points.empty());
    c.expect(tns_estimate(base) == 1.0);
    CHECK(base.points.empty());
    CHECK(tns_estimate(base) == 1.0);

    SingularNodalSet fine = scan_at(128);
    c.expect(fine.points.empty());
    c.expect(tns_estimate(fine) == 1.0);
    CHECK(tns_estimate(fine) == 1.0);
}

TEST_CASE("criterion 7: linearization consistency in five random directions") {
    Criterion c(7, "tangent flow vs finite differences, eps = 1e-4, T = 0.2");
    Grid& g = Lab::get().interval(128);
    NonlinearField f = chafee_infante(15.0);
    const Vec u0 = oracles::sample_1d(g, [](double x) { return std::sin(kPi * x); });
    std::mt19937_64 rng(99);
    StepperOptions opts;
    opts.dt = 2.5e-4;
    for (int trial = 0; trial < 5; ++trial) {
        const Vec v0 = oracles::random_sine_interval(g, 8, rng);
        const double err = linearization_consistency(g, f, u0, v0, 0.2, 1e-4, opts);
        c.expect(err <= 5e-3);
        CHECK(err <= 5e-3);
    }
}

TEST_CASE("criterion 8: colinear-avoiding construction on the rotating wave") {
    Criterion c(8, "certificates: on-orbit <= 1e-10, pairing sign stable");
    const PeriodicOrbit& orbit = Lab::get().wave(64);
    NonlinearField f = linear_rotating(1.0);
    EvaluationVectorField V = [](const Eigen::Vector2d&, double) {
        return Vec{{1.0, 0.0}};
    };
    ColinearPerturbation cp = colinear_avoiding_perturbation(f, orbit, V);
    c.expect(cp.certificate_on_orbit <= 1e-10);
    c.expect(cp.certificate_pairing != 0.0);
    c.expect((cp.certificate_pairing > 0.0) ==
             (cp.certificate_pairing_refined > 0.0));
    CHECK(cp.certificate_on_orbit <= 1e-10);
    CHECK(cp.certificate_pairing != 0.0);
    CHECK((cp.certificate_pairing > 0.0) ==
          (cp.certificate_pairing_refined > 0.0));
}

TEST_CASE("criterion 9: byte-identical reruns modulo timestamp") {
    Criterion c(9, "report.json reproducibility under a fixed seed");
    nlohmann::json j{
        {"schema_version", 1},
        {"experiment", "spectrum"},
        {"seed", 31337},
        {"domain",
         {{"kind", "interval"}, {"a", 0.0}, {"b", 1.0}, {"bc", "dirichlet"}}},
        {"resolution", 256},
        {"field", {{"name", "chafee_infante"}, {"lambda", 15.0}}},
        {"solver", {{"dt", 1e-3}}},
        {"params", {{"guess", "0"}, {"top_k", 6}}}};
    RunConfig cfg = RunConfig::from_json(j);

    const fs::path base = fs::temp_directory_path() / "parabolax_acceptance_det";
    fs::remove_all(base);
    const fs::path da = base / "a", db = base / "b";
    c.expect(run(cfg, da.string()) == 0);
    c.expect(run(cfg, db.string()) == 0);

    auto load = [](const fs::path& p) {
        std::ifstream in(p / "report.json");
        nlohmann::json r;
        in >> r;
        r.erase("timestamp");
        return r.dump();
    };
    const bool identical = load(da) == load(db);
    c.expect(identical);
    CHECK(identical);
    fs::remove_all(base);
}
