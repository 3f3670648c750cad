#include "parabolax/critical.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SVD>

#include <cstdio>
#include <cstdlib>
#include <numbers>

namespace parabolax {

namespace {

void sort_by_modulus(std::vector<Cplx>& mu, std::vector<Cplx>* lam,
                     std::vector<int>* order) {
    std::vector<int> idx(mu.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        return std::abs(mu[static_cast<size_t>(a)]) > std::abs(mu[static_cast<size_t>(b)]);
    });
    std::vector<Cplx> mu2, lam2;
    for (int i : idx) {
        mu2.push_back(mu[static_cast<size_t>(i)]);
        if (lam) lam2.push_back((*lam)[static_cast<size_t>(i)]);
    }
    mu = std::move(mu2);
    if (lam) *lam = std::move(lam2);
    if (order) *order = std::move(idx);
}

}  // namespace

void classify(SpectrumReport& r, bool periodic, const ClassifyOptions& opts) {
    const double delta = opts.unit_circle_margin;
    bool on_circle = false;
    double gap = std::numeric_limits<double>::infinity();
    bool one_in_spectrum = false;
    for (size_t i = 0; i < r.multipliers.size(); ++i) {
        if (periodic && static_cast<int>(i) == r.trivial_index) continue;
        const double dist_circle = std::abs(std::abs(r.multipliers[i]) - 1.0);
        gap = std::min(gap, dist_circle);
        if (dist_circle <= delta) on_circle = true;
        if (std::abs(r.multipliers[i] - Cplx(1.0, 0.0)) <= delta)
            one_in_spectrum = true;
    }
    r.gap = std::isfinite(gap) ? gap : 0.0;
    if (periodic) {
        const bool trivial_found = r.trivial_index >= 0;
        r.is_simple = trivial_found && !one_in_spectrum;
        r.is_hyperbolic = r.is_simple && !on_circle;
    } else {
        r.is_simple = !one_in_spectrum;
        r.is_hyperbolic = !on_circle;
    }
    r.is_degenerate = !r.is_hyperbolic;
}

Mat linearized_operator(const Grid& grid, const NonlinearField& f, const Vec& e) {
    const int n = grid.size();
    std::vector<Vec> grads = gradient(grid, e);
    Vec a(n);
    Mat b = Mat::Zero(n, grid.dim());
    EvalPoint at;
    at.dim = grid.dim();
    for (int i = 0; i < n; ++i) {
        at.x = grid.node(i);
        at.u = e[i];
        for (int ax = 0; ax < grid.dim(); ++ax) at.p[ax] = grads[static_cast<size_t>(ax)][i];
        a[i] = f.f_u(at);
        const Eigen::Vector2d fp = f.f_p(at);
        for (int ax = 0; ax < grid.dim(); ++ax) b(i, ax) = fp[ax];
    }
    Mat op = grid.laplacian_matrix();
    op += Mat(a.asDiagonal());
    for (int ax = 0; ax < grid.dim(); ++ax)
        op += b.col(ax).asDiagonal() * grid.d1(ax);
    return op;
}

Equilibrium find_equilibrium(const Grid& grid, const NonlinearField& f,
                             const Vec& guess, const NewtonOptions& opts) {
    require(guess.size() == grid.size(), "find_equilibrium: size mismatch");
    require(guess.allFinite(), "find_equilibrium: guess must be finite");
    // Backward-error stopping: the absolute residual floor grows with the
    // operator scale (~1/h^2), so the tolerance is measured against it.
    auto scale_of = [&](const Vec& state, const Vec& r_vec) {
        const Vec le = grid.laplacian_matrix() * state;
        return std::max(1.0, grid.norm(le) + grid.norm(r_vec - le));
    };
    Vec e = guess;
    Vec r = semiflow_rhs(grid, f, e);
    double resid = grid.norm(r);
    for (int iter = 0; iter < opts.max_iter; ++iter) {
        if (resid <= opts.tol * scale_of(e, r)) {
            Equilibrium out;
            out.state = e;
            out.residual = resid;
            return out;
        }
        Mat jac = linearized_operator(grid, f, e);
        Eigen::FullPivLU<Mat> lu(jac);
        lu.setThreshold(opts.singular_rcond);
        if (!lu.isInvertible())
            throw SingularJacobianError(
                "equilibrium Jacobian is numerically singular (non-simple equilibrium?)");
        const Vec delta = lu.solve((-r).eval());
        // Backtracking line search on the residual norm.
        double lambda = 1.0;
        bool accepted = false;
        for (int ls = 0; ls < 30; ++ls) {
            const Vec trial = e + lambda * delta;
            const Vec rt = semiflow_rhs(grid, f, trial);
            const double rn = grid.norm(rt);
            if (rn < resid * (1.0 - 0.25 * lambda) ||
                rn <= opts.tol * scale_of(trial, rt)) {
                e = trial;
                r = rt;
                resid = rn;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if (!accepted) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%.3e", resid);
            throw NoConvergenceError(
                std::string("equilibrium Newton stalled at residual ") + buf);
        }
    }
    if (resid <= opts.tol * scale_of(e, r)) {
        Equilibrium out;
        out.state = e;
        out.residual = resid;
        return out;
    }
    {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.3e", resid);
        throw NoConvergenceError(
            std::string("equilibrium Newton did not converge (residual ") + buf +
            ")");
    }
}

SpectrumReport equilibrium_spectrum(const Grid& grid, const NonlinearField& f,
                                    const Equilibrium& e, int top_k,
                                    double tau_ref, const ClassifyOptions& copts) {
    require(top_k >= 1 && top_k <= grid.size(),
            "equilibrium_spectrum: top_k must be in [1, grid size]");
    const Mat op = linearized_operator(grid, f, e.state);
    std::vector<Cplx> lambdas;
    const bool symmetric =
        (op - op.transpose()).cwiseAbs().maxCoeff() <=
        1e-12 * op.cwiseAbs().maxCoeff();
    if (symmetric) {
        Eigen::SelfAdjointEigenSolver<Mat> es(op);
        for (int i = 0; i < grid.size(); ++i)
            lambdas.push_back(Cplx(es.eigenvalues()[i], 0.0));
    } else {
        Eigen::EigenSolver<Mat> es(op);
        for (int i = 0; i < grid.size(); ++i) lambdas.push_back(es.eigenvalues()[i]);
    }
    std::sort(lambdas.begin(), lambdas.end(),
              [](const Cplx& a, const Cplx& b) { return a.real() > b.real(); });

    SpectrumReport rep;
    rep.tau_ref = tau_ref;
    // Margin-consistent count: an eigenvalue contributes to the index when
    // its multiplier exp(lambda tau) clears the unit circle by the margin.
    const double rate_margin = std::log1p(copts.unit_circle_margin) / tau_ref;
    int morse = 0;
    for (const Cplx& lam : lambdas)
        if (lam.real() > rate_margin) ++morse;
    rep.morse_index = morse;
    const int keep = std::max(top_k, morse);
    for (int i = 0; i < keep && i < static_cast<int>(lambdas.size()); ++i) {
        rep.eigenvalues.push_back(lambdas[static_cast<size_t>(i)]);
        rep.multipliers.push_back(std::exp(lambdas[static_cast<size_t>(i)] * tau_ref));
    }
    sort_by_modulus(rep.multipliers, &rep.eigenvalues, nullptr);
    classify(rep, /*periodic=*/false, copts);
    return rep;
}

namespace {

struct ReturnCrossing {
    double time;
    Vec state;
};

// First upward crossing of the section after the dwell time; the search
// horizon is extended in chunks up to the cap.
std::optional<ReturnCrossing> find_return(const Grid& grid, const NonlinearField& f,
                                          const PoincareSection& sec, const Vec& u0,
                                          double dwell, double horizon,
                                          const StepperOptions& sopts) {
    const double chunk = std::min(horizon, std::max(4.0 * dwell, 1.0));
    Vec u = u0;
    double t0 = 0.0;
    double h_prev = grid.dot(sec.normal, u - sec.anchor);
    while (t0 < horizon) {
        const double t1 = std::min(horizon, t0 + chunk);
        TrajectorySegment traj = integrate_window(grid, f, u, t0, t1, sopts);
        for (size_t j = 1; j < traj.states.size(); ++j) {
            const double h = grid.dot(sec.normal, traj.states[j] - sec.anchor);
            if (traj.times[j] > dwell && h_prev < 0.0 && h >= 0.0) {
                const double w = h_prev / (h_prev - h);
                const double tc =
                    traj.times[j - 1] + w * (traj.times[j] - traj.times[j - 1]);
                ReturnCrossing rc;
                rc.time = tc;
                rc.state = (1.0 - w) * traj.states[j - 1] + w * traj.states[j];
                return rc;
            }
            h_prev = h;
        }
        u = traj.back();
        t0 = t1;
    }
    return std::nullopt;
}

}  // namespace

PeriodicOrbit find_periodic_orbit(const Grid& grid, const NonlinearField& f,
                                  const Vec& guess, double guess_period,
                                  const OrbitOptions& opts) {
    require(guess_period > 0.0, "find_periodic_orbit: guess period must be positive");
    const int n = grid.size();

    const Vec rhs0 = semiflow_rhs(grid, f, guess);
    const double rhs_norm = grid.norm(rhs0);
    if (rhs_norm < opts.equilibrium_rhs_floor * std::max(1.0, grid.norm(guess)))
        throw ReturnNotFoundError(
            "guess is (numerically) an equilibrium; no periodic orbit through it");

    PoincareSection sec;
    sec.anchor = guess;
    sec.normal = rhs0 / rhs_norm;

    StepperOptions coarse;
    coarse.scheme = opts.scheme;
    coarse.dt = opts.dt_coarse;
    coarse.stride = 1;

    auto crossing = find_return(grid, f, sec, guess, 0.25 * guess_period,
                                opts.max_return_time, coarse);
    if (!crossing) {
        const Vec u_end = integrate(grid, f, guess, opts.max_return_time, coarse).back();
        const double rhs_end = grid.norm(semiflow_rhs(grid, f, u_end));
        if (rhs_end < opts.equilibrium_rhs_floor * std::max(1.0, grid.norm(u_end)))
            throw ReturnNotFoundError(
                "trajectory converged to an equilibrium; no section return found");
        throw ReturnNotFoundError("trajectory never re-crossed the section");
    }

    Vec u = guess;
    double omega = crossing->time;
    bool degenerate = false;

    auto closure = [&](const Vec& ustate, double om, double dt) {
        StepperOptions s = coarse;
        s.dt = dt;
        s.stride = 1 << 20;
        const Vec uret = integrate(grid, f, ustate, om, s).back();
        return std::make_pair(uret, grid.norm(uret - ustate) /
                                        (grid.norm(ustate) + 1e-300));
    };

    Eigen::BDCSVD<Mat> svd;
    Mat jac(n + 1, n + 1);
    bool have_jac = false;
    double jac_dt = 0.0;
    double dt_cur = opts.dt_coarse;
    double defect = std::numeric_limits<double>::infinity();
    double prev_defect = defect;
    int stalls = 0;

    const bool debug = std::getenv("PARABOLAX_ORBIT_DEBUG") != nullptr;
    for (int iter = 0; iter < opts.max_iter; ++iter) {
        auto [uret, d] = closure(u, omega, dt_cur);
        defect = d;
        const bool coarse_phase = dt_cur > opts.dt_fine * 1.0000001;
        if (debug)
            std::fprintf(stderr,
                         "[orbit] iter=%d dt=%g defect=%.3e omega=%.9f stalls=%d\n",
                         iter, dt_cur, defect, omega, stalls);
        if (defect <= opts.closure_tol && !coarse_phase) break;
        const bool stalled = defect > 0.9 * prev_defect;
        stalls = stalled ? stalls + 1 : 0;
        if (coarse_phase && (defect <= 10.0 * opts.closure_tol || stalls >= 2)) {
            // The coarse phase converged (or hit its own step-size floor);
            // polish residuals at the fine step with the frozen Jacobian.
            dt_cur = opts.dt_fine;
            prev_defect = std::numeric_limits<double>::infinity();
            stalls = 0;
            continue;
        }
        // A stalled fine phase means the frozen coarse Jacobian misscales a
        // near-degenerate direction; rebuild it at the fine step once.
        const bool rebuild =
            !have_jac || (!coarse_phase && stalled && jac_dt != dt_cur);
        if (!coarse_phase && stalls > 3 && !rebuild)
            throw NoConvergenceError("periodic-orbit Newton stalled (closure " +
                                     std::to_string(defect) + ")");
        prev_defect = defect;

        if (rebuild) {
            // Variational return-map Jacobian at the current step size.
            StepperOptions s = coarse;
            s.dt = dt_cur;
            TrajectorySegment traj = integrate(grid, f, u, omega, s);
            CoefficientField coeffs = linearize_along(f, traj);
            TangentOptions topts{opts.scheme, dt_cur};
            Mat monodromy =
                propagate_matrix(coeffs, Mat::Identity(n, n), 0.0, omega, topts);
            jac_dt = dt_cur;
            jac.setZero();
            jac.topLeftCorner(n, n) = monodromy - Mat::Identity(n, n);
            jac.block(0, n, n, 1) = semiflow_rhs(grid, f, traj.back());
            jac.block(n, 0, 1, n) =
                (grid.weight_scalar() * sec.normal).transpose();
            svd.compute(jac, Eigen::ComputeThinU | Eigen::ComputeThinV);
            const double smax = svd.singularValues()[0];
            const double smin = svd.singularValues()[svd.singularValues().size() - 1];
            degenerate = (smin <= 1e-6 * smax);
            svd.setThreshold(1e-8);
            have_jac = true;
        }

        Vec resid(n + 1);
        resid.head(n) = uret - u;
        resid[n] = grid.dot(sec.normal, u - sec.anchor);
        // Ignore singular directions at or below the current residual level:
        // they belong to orbit families or step-size floors, and min-norm
        // steps along them would drift without reducing the closure.
        svd.setThreshold(std::clamp(10.0 * defect, 1e-8, 1e-3));
        Vec step = svd.solve((-resid).eval());
        const double cap = 0.5 * u.norm() + 1e-12;
        if (step.head(n).norm() > cap) step *= cap / step.head(n).norm();
        if (std::abs(step[n]) > 0.25 * omega)
            step *= 0.25 * omega / std::abs(step[n]);
        u += step.head(n);
        omega += step[n];
        require(omega > 0.0, "periodic-orbit Newton produced a negative period");
    }
    if (defect > opts.closure_tol)
        throw NoConvergenceError("periodic orbit closure defect " +
                                 std::to_string(defect) + " above tolerance");

    // Minimality: accept the smallest divisor that also closes the orbit.
    for (int k = opts.minimality_divisor_max; k >= 2; --k) {
        auto [urk, dk] = closure(u, omega / k, opts.dt_fine);
        (void)urk;
        if (dk <= 10.0 * opts.closure_tol) {
            omega /= k;
            break;
        }
    }

    StepperOptions fine;
    fine.scheme = opts.scheme;
    fine.dt = opts.dt_fine;
    fine.stride = 1;
    PeriodicOrbit orbit;
    orbit.samples = integrate(grid, f, u, omega, fine);
    orbit.period = omega;
    orbit.section = sec;
    orbit.closure_defect =
        grid.norm(orbit.samples.back() - u) / (grid.norm(u) + 1e-300);
    orbit.degenerate_return_map = degenerate;
    return orbit;
}

Mat period_map_matrix(const NonlinearField& f, const PeriodicOrbit& orbit,
                      std::optional<double> dt) {
    const Grid& grid = *orbit.samples.grid;
    CoefficientField coeffs = linearize_along(f, orbit.samples);
    TangentOptions topts;
    topts.scheme = scheme_from_string(orbit.samples.scheme);
    topts.dt = dt.value_or(orbit.samples.dt);
    return propagate_matrix(coeffs, Mat::Identity(grid.size(), grid.size()),
                            orbit.samples.t_begin(), orbit.samples.t_end(), topts);
}

SpectrumReport period_map_spectrum(const NonlinearField& f,
                                   const PeriodicOrbit& orbit, int top_k,
                                   const ClassifyOptions& copts,
                                   std::optional<double> dt) {
    const Grid& grid = *orbit.samples.grid;
    require(orbit.samples.size() >= 2, "period_map_spectrum: orbit not sampled");
    const Mat pi = period_map_matrix(f, orbit, dt);

    Eigen::EigenSolver<Mat> es(pi);
    std::vector<Cplx> mu;
    for (int i = 0; i < grid.size(); ++i) mu.push_back(es.eigenvalues()[i]);

    // Trivial multiplier: eigenvector best aligned with the orbit direction.
    const Vec w = semiflow_rhs(grid, f, orbit.samples.states.front());
    const double wn = grid.norm(w);
    Eigen::MatrixXcd vecs = es.eigenvectors();
    int best = -1;
    double best_align = -1.0;
    for (int i = 0; i < grid.size(); ++i) {
        const CVec v = vecs.col(i);
        const double vn = std::sqrt(std::abs((v.adjoint() * v)(0, 0).real()));
        const double align =
            std::abs((v.adjoint() * w.cast<Cplx>())(0, 0)) / (vn * wn + 1e-300);
        if (align > best_align) {
            best_align = align;
            best = i;
        }
    }
    SpectrumReport rep;
    rep.trivial_multiplier_residual =
        grid.norm((pi * w - w).eval()) / (wn + 1e-300);

    int morse = 0;
    for (size_t i = 0; i < mu.size(); ++i) {
        if (static_cast<int>(i) == best) continue;
        if (std::abs(mu[i]) > 1.0 + copts.unit_circle_margin) ++morse;
    }
    rep.morse_index = morse;

    std::vector<int> order;
    std::vector<Cplx> sorted = mu;
    sort_by_modulus(sorted, nullptr, &order);
    const int keep = std::min<int>(std::max(top_k, morse + 2),
                                   static_cast<int>(sorted.size()));
    rep.multipliers.assign(sorted.begin(), sorted.begin() + keep);
    rep.trivial_index = -1;
    for (int i = 0; i < keep; ++i)
        if (order[static_cast<size_t>(i)] == best) rep.trivial_index = i;
    classify(rep, /*periodic=*/true, copts);
    return rep;
}

ModeMultiplier circle_mode_multiplier(const NonlinearField& f,
                                      const PeriodicOrbit& orbit, int mode,
                                      std::optional<double> dt) {
    const Grid& grid = *orbit.samples.grid;
    require(grid.dim() == 1 && grid.domain().kind == DomainKind::circle,
            "circle_mode_multiplier requires a circle grid");
    require(mode >= 0 && mode < grid.axes()[0].n / 2,
            "circle_mode_multiplier: mode out of the resolved range");
    const int n = grid.size();
    const double length = grid.domain().axes[0].hi - grid.domain().axes[0].lo;
    const double kfac = 2.0 * std::numbers::pi * mode / length;

    Mat q(n, mode == 0 ? 1 : 2);
    for (int i = 0; i < n; ++i) {
        const double x = grid.nodes()(i, 0);
        q(i, 0) = std::cos(kfac * x);
        if (mode > 0) q(i, 1) = std::sin(kfac * x);
    }
    for (int c = 0; c < q.cols(); ++c)
        q.col(c) /= std::sqrt(grid.weight_scalar() * q.col(c).squaredNorm());

    CoefficientField coeffs = linearize_along(f, orbit.samples);
    TangentOptions topts;
    topts.scheme = scheme_from_string(orbit.samples.scheme);
    topts.dt = dt.value_or(orbit.samples.dt);
    RestrictedMonodromy rm =
        restricted_monodromy(coeffs, q, orbit.samples.t_begin(),
                             orbit.samples.t_end(), topts);
    ModeMultiplier out;
    out.mode = mode;
    out.invariance_defect = rm.invariance_defect;
    double mag = 0.0;
    for (const Cplx& m : rm.multipliers()) mag = std::max(mag, std::abs(m));
    out.magnitude = mag;
    return out;
}

std::vector<ContinuationPoint> continue_element(
    const Grid& grid, const std::function<NonlinearField(double)>& family,
    const CriticalElement& start, const std::vector<double>& eps_grid,
    const ContinuationOptions& opts) {
    require(!eps_grid.empty(), "continue_element: empty eps grid");
    std::vector<ContinuationPoint> path;
    for (size_t k = 0; k < eps_grid.size(); ++k) {
        const double eps = eps_grid[k];
        const NonlinearField f = family(eps);
        try {
            ContinuationPoint pt;
            pt.eps = eps;
            if (std::holds_alternative<Equilibrium>(start)) {
                Vec guess;
                if (path.empty()) {
                    guess = std::get<Equilibrium>(start).state;
                } else if (path.size() == 1) {
                    guess = std::get<Equilibrium>(path.back().element).state;
                } else {
                    // Secant predictor.
                    const Vec& a =
                        std::get<Equilibrium>(path[path.size() - 2].element).state;
                    const Vec& b = std::get<Equilibrium>(path.back().element).state;
                    const double e0 = path[path.size() - 2].eps;
                    const double e1 = path.back().eps;
                    const double w = (std::abs(e1 - e0) > 1e-14)
                                         ? (eps - e1) / (e1 - e0)
                                         : 0.0;
                    guess = b + w * (b - a);
                }
                Equilibrium eq = find_equilibrium(grid, f, guess, opts.newton);
                pt.spectrum = equilibrium_spectrum(grid, f, eq, opts.spectrum_top_k,
                                                   1.0, opts.classify);
                eq.spectrum = pt.spectrum;
                pt.element = std::move(eq);
            } else {
                const PeriodicOrbit& prev =
                    path.empty() ? std::get<PeriodicOrbit>(start)
                                 : std::get<PeriodicOrbit>(path.back().element);
                PeriodicOrbit orb = find_periodic_orbit(
                    grid, f, prev.samples.states.front(), prev.period, opts.orbit);
                pt.spectrum = period_map_spectrum(f, orb, opts.spectrum_top_k,
                                                  opts.classify);
                orb.spectrum = pt.spectrum;
                pt.element = std::move(orb);
            }
            path.push_back(std::move(pt));
        } catch (const SolverError& err) {
            throw ContinuationLostError(
                "continuation lost at eps = " + std::to_string(eps) + ": " +
                    err.what(),
                eps);
        }
    }
    return path;
}

}  // namespace parabolax
