#include "parabolax/perturbation.hpp"

#include <numbers>

namespace parabolax {

bool SpaceTimeWindow::contains(const Eigen::Vector2d& x, double t, int dim) const {
    if (t < t_lo || t > t_hi) return false;
    for (int a = 0; a < dim; ++a)
        if (x[a] < x_lo[a] || x[a] > x_hi[a]) return false;
    return true;
}

std::vector<AvoidTube> evaluation_tubes(const TrajectorySegment& traj,
                                        double radius, double inflation,
                                        int max_samples) {
    const Grid& grid = *traj.grid;
    const int m = traj.size();
    const int n = grid.size();
    const int t_stride = std::max(1, m * n / std::max(1, max_samples * n));
    std::vector<AvoidTube> tubes;
    for (int j = 0; j < m; j += t_stride) {
        const Vec& u = traj.states[static_cast<size_t>(j)];
        std::vector<Vec> grads = gradient(grid, u);
        for (int i = 0; i < n; ++i) {
            EvalPoint at;
            at.dim = grid.dim();
            at.x = grid.node(i);
            at.u = u[i];
            for (int ax = 0; ax < grid.dim(); ++ax) at.p[ax] = grads[static_cast<size_t>(ax)][i];
            tubes.push_back(AvoidTube{triple_coords(at), radius * inflation});
        }
    }
    return tubes;
}

namespace {

Vec triple_of(const Grid& grid, const Vec& u, const std::vector<Vec>& grads, int i) {
    EvalPoint at;
    at.dim = grid.dim();
    at.x = grid.node(i);
    at.u = u[i];
    for (int ax = 0; ax < grid.dim(); ++ax) at.p[ax] = grads[static_cast<size_t>(ax)][i];
    return triple_coords(at);
}

double box_boundary_distance(const TripleBox& box, const Vec& y) {
    double d = std::numeric_limits<double>::infinity();
    for (int i = 0; i < y.size(); ++i)
        d = std::min({d, y[i] - box.lo[i], box.hi[i] - y[i]});
    return d;
}

}  // namespace

Vec composed_bump_values(const Grid& grid, const PerturbationBump& h,
                         const Vec& state) {
    std::vector<Vec> grads = gradient(grid, state);
    Vec out(grid.size());
    EvalPoint at;
    at.dim = grid.dim();
    for (int i = 0; i < grid.size(); ++i) {
        at.x = grid.node(i);
        at.u = state[i];
        for (int ax = 0; ax < grid.dim(); ++ax) at.p[ax] = grads[static_cast<size_t>(ax)][i];
        out[i] = h.value(at);
    }
    return out;
}

PerturbationBump build_bump(const TrajectorySegment& traj,
                            const SpaceTimeWindow& window, const TripleBox& E,
                            const std::vector<AvoidTube>& avoid,
                            const BumpBuildOptions& opts) {
    const Grid& grid = *traj.grid;
    const int n = grid.size();
    const int m = traj.size();
    const int tdim = 2 * grid.dim() + 1;

    // Triples inside and outside the window (the outside set is subsampled
    // for the separation estimates; the final verification is exhaustive).
    struct Candidate {
        Vec y;
        int node, time_idx;
    };
    std::vector<Candidate> inside;
    std::vector<Vec> outside;
    const int t_stride_out = std::max(1, m / 200);
    for (int j = 0; j < m; ++j) {
        const Vec& u = traj.states[static_cast<size_t>(j)];
        std::vector<Vec> grads = gradient(grid, u);
        const bool keep_out = (j % t_stride_out == 0) || j + 1 == m;
        for (int i = 0; i < n; ++i) {
            const bool in_window =
                window.contains(grid.node(i), traj.times[static_cast<size_t>(j)], grid.dim());
            if (!in_window && !keep_out) continue;
            Vec y = triple_of(grid, u, grads, i);
            if (in_window)
                inside.push_back({y, i, j});
            else
                outside.push_back(std::move(y));
        }
    }
    if (inside.empty())
        throw NoGoodPointError("build_bump: no trajectory sample inside the window");

    double best_bound = 0.0;
    Vec best_center;
    for (const Candidate& c : inside) {
        const double r_e =
            box_boundary_distance(E, c.y) * (1.0 - opts.interior_margin);
        if (r_e <= 0.0) continue;
        double r_avoid = std::numeric_limits<double>::infinity();
        for (const AvoidTube& tube : avoid)
            r_avoid = std::min(r_avoid, (c.y - tube.center).norm() -
                                            tube.radius * (1.0 + 2.0 * opts.clearance));
        if (r_avoid <= 0.0) continue;
        double r_out = std::numeric_limits<double>::infinity();
        for (const Vec& y : outside) r_out = std::min(r_out, (c.y - y).norm());
        const double bound = std::min({r_e, r_avoid, r_out});
        if (bound > best_bound) {
            best_bound = bound;
            best_center = c.y;
        }
    }
    if (best_bound <= 0.0)
        throw NoGoodPointError(
            "build_bump: every window sample is excluded by E or the avoid set");

    double safety = opts.width_safety;
    for (int attempt = 0; attempt < 4; ++attempt) {
        const double w = safety * best_bound / std::sqrt(static_cast<double>(tdim));
        PerturbationBump bump =
            PerturbationBump::build(grid.dim(), E, avoid, best_center,
                                    Vec::Constant(tdim, w), opts.amplitude, +1,
                                    opts.clearance);
        // Exhaustive support verification against every stored sample.
        bool clean = true;
        for (int j = 0; j < m && clean; ++j) {
            const Vec hv = composed_bump_values(grid, bump, traj.states[static_cast<size_t>(j)]);
            for (int i = 0; i < n; ++i) {
                if (hv[i] == 0.0) continue;
                if (!window.contains(grid.node(i), traj.times[static_cast<size_t>(j)], grid.dim())) {
                    clean = false;
                    break;
                }
            }
        }
        if (!clean) {
            safety *= 0.5;
            continue;
        }
        if (opts.orientation != nullptr) {
            const TangentHistory& psi = *opts.orientation;
            require(psi.times.size() == traj.times.size(),
                    "build_bump: orientation history must share the trajectory lattice");
            const std::vector<double> wt = trapezoid_weights(traj.times);
            double pairing = 0.0;
            for (size_t j = 0; j < traj.times.size(); ++j)
                pairing += wt[j] * grid.dot(psi.states[j],
                                            composed_bump_values(
                                                grid, bump, traj.states[j]));
            if (pairing < 0.0) bump.flip_sign();
        }
        return bump;
    }
    throw NoGoodPointError("build_bump: could not isolate the window support");
}

double pairing_integral(const NonlinearField& f, const TrajectorySegment& traj,
                        const PerturbationBump& h, const Vec& psi_m,
                        const TangentOptions& topts) {
    const Grid& grid = *traj.grid;
    if (grid.norm(psi_m) == 0.0) return 0.0;
    CoefficientField coeffs = linearize_along(f, traj);
    TangentHistory psi = propagate_adjoint_history(coeffs, psi_m, traj.t_end(),
                                                   traj.t_begin(), topts);
    require(psi.times.size() == traj.times.size(),
            "pairing_integral: trajectory must be stored at every step");
    const std::vector<double> wt = trapezoid_weights(traj.times);
    double integral = 0.0;
    for (size_t j = 0; j < traj.times.size(); ++j)
        integral += wt[j] * grid.dot(psi.states[j],
                                     composed_bump_values(grid, h, traj.states[j]));
    return integral;
}

Vec flow_derivative_wrt_f(const NonlinearField& f, const TrajectorySegment& traj,
                          const PerturbationBump& h, const TangentOptions& topts) {
    const Grid& grid = *traj.grid;
    CoefficientField coeffs = linearize_along(f, traj);
    auto source = [&](double t) -> Vec {
        // The lattice matches the stored times; pick the nearest sample.
        const auto it = std::lower_bound(traj.times.begin(), traj.times.end(),
                                         t - 1e-12);
        size_t j = static_cast<size_t>(it - traj.times.begin());
        if (j >= traj.times.size()) j = traj.times.size() - 1;
        return composed_bump_values(grid, h, traj.states[j]);
    };
    return propagate_source_accumulate(coeffs, source, traj.t_begin(),
                                       traj.t_end(), topts);
}

DerivativeCheck derivative_check(const Grid& grid, const NonlinearField& f,
                                 const Vec& u0, double m,
                                 const PerturbationBump& h, double eps,
                                 const Vec& psi_m, const StepperOptions& sopts) {
    StepperOptions dense = sopts;
    dense.stride = 1;
    TrajectorySegment traj = integrate(grid, f, u0, m, dense);
    TangentOptions topts{sopts.scheme, sopts.dt};

    const Vec deriv = flow_derivative_wrt_f(f, traj, h, topts);
    const Vec up = integrate(grid, compose_perturbed(f, h, eps), u0, m, dense).back();
    const Vec um = integrate(grid, compose_perturbed(f, h, -eps), u0, m, dense).back();
    const Vec fd = (up - um) / (2.0 * eps);

    DerivativeCheck out;
    out.fd_error = grid.norm(fd - deriv) / (grid.norm(deriv) + 1e-300);
    out.integral_value = pairing_integral(f, traj, h, psi_m, topts);
    const double lhs = grid.dot(psi_m, deriv);
    out.duality_mismatch =
        std::abs(lhs - out.integral_value) / (std::abs(out.integral_value) + 1e-300);
    out.fd_value = grid.dot(psi_m, fd);
    return out;
}

// ---------------------------------------------------------------------------
// Colinear-avoiding construction (one-dimensional periodic orbits).
// ---------------------------------------------------------------------------

namespace {

constexpr double kPi = std::numbers::pi;

// Periodic trigonometric interpolation on an even equispaced grid.
double trig_interp(const Vec& values, double length, double x) {
    const int n = static_cast<int>(values.size());
    const double theta = 2.0 * kPi * x / length;
    const double h = 2.0 * kPi / n;
    double acc = 0.0;
    for (int j = 0; j < n; ++j) {
        double d = std::remainder(theta - j * h, 2.0 * kPi);
        if (std::abs(d) < 1e-13) return values[j];
        acc += values[j] * std::sin(0.5 * n * d) / std::tan(0.5 * d);
    }
    return acc / n;
}

// Time-periodic sampled orbit data with local cubic interpolation in t and
// spectral interpolation in x.
struct OrbitChart {
    const Grid* grid;
    double period, length;
    std::vector<double> times;  // unique samples; times[0] = 0
    std::vector<Vec> p, px, pt, ptx;

    int count() const { return static_cast<int>(times.size()); }

    Vec interp_nodal(const std::vector<Vec>& field, double t) const {
        const int m = count();
        double tw = t - period * std::floor(t / period);
        int j = static_cast<int>(std::upper_bound(times.begin(), times.end(), tw) -
                                 times.begin()) - 1;
        j = std::clamp(j, 0, m - 1);
        // Four wrapped samples around j.
        Vec out = Vec::Zero(grid->size());
        double ts[4];
        const Vec* vs[4];
        for (int k = -1; k <= 2; ++k) {
            int idx = ((j + k) % m + m) % m;
            double tt = times[static_cast<size_t>(idx)];
            // unwrap to the neighborhood of tw
            while (tt - tw > 0.5 * period) tt -= period;
            while (tw - tt > 0.5 * period) tt += period;
            ts[k + 1] = tt;
            vs[k + 1] = &field[static_cast<size_t>(idx)];
        }
        for (int a = 0; a < 4; ++a) {
            double w = 1.0;
            for (int b = 0; b < 4; ++b)
                if (a != b) w *= (tw - ts[b]) / (ts[a] - ts[b]);
            out += w * (*vs[a]);
        }
        return out;
    }

    double value(const std::vector<Vec>& field, double x, double t) const {
        return trig_interp(interp_nodal(field, t), length, x);
    }
};

struct ChartSolve {
    bool converged = false;
    double t = 0.0, tau = 0.0;
    Eigen::Matrix2d jac;  // d(u,p)/d(t,tau)
};

ChartSolve invert_chart(const OrbitChart& chart, const EvaluationVectorField& V,
                        double x, double u, double pgrad, double t_seed,
                        double t_halfspan, double tau_halfspan,
                        const ColinearOptions& opts) {
    ChartSolve s;
    double t = t_seed, tau = 0.0;
    const double scale = std::max({1.0, std::abs(u), std::abs(pgrad)});
    Eigen::Vector2d xvec(x, 0.0);
    for (int iter = 0; iter < opts.newton_max_iter; ++iter) {
        const double pv = chart.value(chart.p, x, t);
        const double pxv = chart.value(chart.px, x, t);
        const Vec vv = V(xvec, t);
        Eigen::Vector2d resid(pv + tau * vv[0] - u, pxv + tau * vv[1] - pgrad);
        if (resid.norm() <= opts.newton_tol * scale) {
            const double ptv = chart.value(chart.pt, x, t);
            const double ptxv = chart.value(chart.ptx, x, t);
            const double dtv = 1e-6 * chart.period;
            const Vec vplus = V(xvec, t + dtv);
            const Vec vminus = V(xvec, t - dtv);
            const Eigen::Vector2d dV((vplus[0] - vminus[0]) / (2.0 * dtv),
                                     (vplus[1] - vminus[1]) / (2.0 * dtv));
            s.converged = true;
            s.t = t;
            s.tau = tau;
            s.jac << ptv + tau * dV[0], vv[0], ptxv + tau * dV[1], vv[1];
            return s;
        }
        const double ptv = chart.value(chart.pt, x, t);
        const double ptxv = chart.value(chart.ptx, x, t);
        const double dtv = 1e-6 * chart.period;
        const Vec vplus = V(xvec, t + dtv);
        const Vec vminus = V(xvec, t - dtv);
        const Eigen::Vector2d dV((vplus[0] - vminus[0]) / (2.0 * dtv),
                                 (vplus[1] - vminus[1]) / (2.0 * dtv));
        Eigen::Matrix2d jac;
        jac << ptv + tau * dV[0], vv[0], ptxv + tau * dV[1], vv[1];
        const double det = jac.determinant();
        if (std::abs(det) < 1e-14 * scale) return s;  // chart degenerates here
        Eigen::Vector2d step = jac.inverse() * resid;
        // Damping with step halving.
        double lambda = 1.0;
        for (int ls = 0; ls < 20; ++ls) {
            const double t2 = t - lambda * step[0];
            const double tau2 = tau - lambda * step[1];
            const double pv2 = chart.value(chart.p, x, t2);
            const double pxv2 = chart.value(chart.px, x, t2);
            const Vec vv2 = V(xvec, t2);
            Eigen::Vector2d r2(pv2 + tau2 * vv2[0] - u, pxv2 + tau2 * vv2[1] - pgrad);
            if (r2.norm() < resid.norm()) {
                t = t2;
                tau = tau2;
                break;
            }
            lambda *= 0.5;
        }
        if (std::abs(std::remainder(t - t_seed, chart.period)) > 2.0 * t_halfspan ||
            std::abs(tau) > 2.0 * tau_halfspan)
            return s;  // left the chart neighborhood
    }
    return s;
}

inline double mollifier(double sarg) {
    const double t = 1.0 - sarg * sarg;
    if (t <= 0.0) return 0.0;
    return std::exp(1.0 - 1.0 / t);
}
inline double mollifier_slope(double sarg) {
    const double t = 1.0 - sarg * sarg;
    if (t <= 0.0) return 0.0;
    return mollifier(sarg) * (-2.0 * sarg / (t * t));
}

struct GImpl {
    std::shared_ptr<OrbitChart> chart;
    EvaluationVectorField V;
    double x0, t0, wx, wt, wtau, amplitude;
    ColinearOptions opts;

    // Returns (value, g_u, g_p1); derivative slots skipped when wants_deriv
    // is false.
    Eigen::Vector3d eval(double x, double u, double pgrad, bool wants_deriv) const {
        Eigen::Vector3d out = Eigen::Vector3d::Zero();
        const double dxp = std::remainder(x - x0, chart->length);
        const double sx = dxp / wx;
        const double mx = mollifier(sx);
        if (mx == 0.0) return out;
        ChartSolve s = invert_chart(*chart, V, x, u, pgrad, t0, wt, wtau, opts);
        if (!s.converged) return out;
        double dt = std::remainder(s.t - t0, chart->period);
        const double st = dt / wt;
        const double stau = s.tau / wtau;
        const double mt = mollifier(st);
        const double mtau = mollifier(stau);
        if (mt == 0.0 || mtau == 0.0) return out;
        out[0] = amplitude * mx * mt * mtau * s.tau;
        if (!wants_deriv) return out;
        const double det = s.jac.determinant();
        if (std::abs(det) < 1e-300) return out;
        const Eigen::Matrix2d inv = s.jac.inverse();  // rows: dt/d(u,p), dtau/d(u,p)
        const double dpre_dt = amplitude * mx * mollifier_slope(st) / wt * mtau * s.tau;
        const double dpre_dtau =
            amplitude * mx * mt * (mollifier_slope(stau) / wtau * s.tau + mtau);
        out[1] = dpre_dt * inv(0, 0) + dpre_dtau * inv(1, 0);
        out[2] = dpre_dt * inv(0, 1) + dpre_dtau * inv(1, 1);
        return out;
    }
};

}  // namespace

double colinearity_defect(const Grid& grid, const std::vector<Vec>& v1,
                          const std::vector<Vec>& v2) {
    require(v1.size() == v2.size(), "colinearity_defect: sample count mismatch");
    const int d = grid.dim();
    double worst = 0.0;
    for (size_t j = 0; j < v1.size(); ++j) {
        Mat e(grid.size(), 2 * (1 + d));
        e.col(0) = v1[j];
        e.col(1 + d) = v2[j];
        for (int ax = 0; ax < d; ++ax) {
            e.col(1 + ax) = grid.d1(ax) * v1[j];
            e.col(2 + d + ax) = grid.d1(ax) * v2[j];
        }
        for (int i = 0; i < grid.size(); ++i) {
            Eigen::MatrixXd m(1 + d, 2);
            for (int r = 0; r < 1 + d; ++r) {
                m(r, 0) = e(i, r);
                m(r, 1) = e(i, 1 + d + r);
            }
            Eigen::JacobiSVD<Mat> svd(m);
            const double s1 = svd.singularValues()[0];
            const double s2 = svd.singularValues()[1];
            worst = std::max(worst, s2 / (s1 + 1e-300));
        }
    }
    return worst;
}

ColinearPerturbation colinear_avoiding_perturbation(
    const NonlinearField& f, const PeriodicOrbit& orbit,
    const EvaluationVectorField& V, const ColinearOptions& opts) {
    const Grid& grid = *orbit.samples.grid;
    require(grid.dim() == 1 && grid.domain().kind == DomainKind::circle,
            "colinear_avoiding_perturbation: periodic orbits live on circle "
            "grids in this artifact");

    auto chart = std::make_shared<OrbitChart>();
    chart->grid = &grid;
    chart->period = orbit.period;
    chart->length = grid.domain().axes[0].hi - grid.domain().axes[0].lo;
    const int m_all = orbit.samples.size();
    // ~800 samples suffice for the cubic-in-time chart; the certificates
    // evaluate at the chart's own nodes, where interpolation is exact.
    const int stride = std::max(1, (m_all - 1) / 800);
    for (int j = 0; j + 1 < m_all; j += stride) {  // drop the closing duplicate
        chart->times.push_back(orbit.samples.times[static_cast<size_t>(j)]);
        const Vec& u = orbit.samples.states[static_cast<size_t>(j)];
        const Vec rhs = semiflow_rhs(grid, f, u);
        chart->p.push_back(u);
        chart->px.push_back(grid.d1(0) * u);
        chart->pt.push_back(rhs);
        chart->ptx.push_back(grid.d1(0) * rhs);
    }
    const int m = chart->count();
    const int n = grid.size();

    // Independence scan: | det[P_t | V] | relative to the factor norms.
    double best_indep = 0.0;
    int best_i = -1, best_j = -1;
    for (int j = 0; j < m; ++j) {
        for (int i = 0; i < n; ++i) {
            const Eigen::Vector2d pt(chart->pt[static_cast<size_t>(j)][i],
                                     chart->ptx[static_cast<size_t>(j)][i]);
            const Vec vv = V(grid.node(i), chart->times[static_cast<size_t>(j)]);
            const double det = pt[0] * vv[1] - pt[1] * vv[0];
            const double rel =
                std::abs(det) / (pt.norm() * std::sqrt(vv.squaredNorm()) + 1e-300);
            if (rel > best_indep) {
                best_indep = rel;
                best_i = i;
                best_j = j;
            }
        }
    }
    if (best_indep <= opts.independence_floor)
        throw ColinearEverywhereError(
            "V is colinear to (p_t, grad p_t) at every sample (max relative "
            "independence " + std::to_string(best_indep) + ")");

    ColinearPerturbation out;
    out.base_x = grid.node(best_i);
    out.base_t = chart->times[static_cast<size_t>(best_j)];

    // Evaluation-range scale for the tau width.
    double prange = 0.0;
    for (int j = 0; j < m; ++j)
        prange = std::max({prange, chart->p[static_cast<size_t>(j)].cwiseAbs().maxCoeff(),
                           chart->px[static_cast<size_t>(j)].cwiseAbs().maxCoeff()});
    const double vnorm =
        std::sqrt(V(out.base_x, out.base_t).squaredNorm()) + 1e-300;

    double wx = opts.width_scale * chart->length / 8.0;
    double wt = opts.width_scale * chart->period / 8.0;
    double wtau = opts.width_scale * 0.2 * std::max(prange, 1.0) / vnorm;

    for (int attempt = 0;; ++attempt) {
        if (attempt > opts.max_shrink)
            throw NoConvergenceError(
                "colinear_avoiding_perturbation: could not localize the chart");
        GImpl impl{chart, V, out.base_x[0], out.base_t, wx, wt, wtau,
                   opts.amplitude, opts};

        // Conditioning of the chart Jacobian over the support corners.
        double worst_cond = 0.0;
        bool chart_ok = true;
        for (double ft : {-0.9, 0.0, 0.9}) {
            for (double ftau : {-0.9, 0.0, 0.9}) {
                const double t = out.base_t + ft * wt;
                const double tau = ftau * wtau;
                const double x = out.base_x[0];
                Eigen::Vector2d xv(x, 0.0);
                const Vec vv = V(xv, t);
                Eigen::Matrix2d jac;
                const double dtv = 1e-6 * chart->period;
                const Vec vp = V(xv, t + dtv);
                const Vec vm = V(xv, t - dtv);
                jac << chart->value(chart->pt, x, t) + tau * (vp[0] - vm[0]) / (2 * dtv),
                    vv[0],
                    chart->value(chart->ptx, x, t) + tau * (vp[1] - vm[1]) / (2 * dtv),
                    vv[1];
                Eigen::JacobiSVD<Eigen::Matrix2d> svd(jac);
                const double cond = svd.singularValues()[0] /
                                    (svd.singularValues()[1] + 1e-300);
                worst_cond = std::max(worst_cond, cond);
                if (cond > opts.jacobian_cond_max) chart_ok = false;
            }
        }
        if (!chart_ok) {
            wt *= 0.5;
            wtau *= 0.5;
            continue;
        }
        out.worst_jacobian_cond = worst_cond;

        // Certificate (i): g vanishes on the sampled orbit evaluation set.
        double on_orbit = 0.0;
        for (int j = 0; j < m; ++j)
            for (int i = 0; i < n; ++i)
                on_orbit = std::max(
                    on_orbit,
                    std::abs(impl.eval(grid.nodes()(i, 0),
                                       chart->p[static_cast<size_t>(j)][i],
                                       chart->px[static_cast<size_t>(j)][i], false)[0]));
        if (on_orbit > opts.on_orbit_tol * std::abs(opts.amplitude)) {
            wt *= 0.5;
            wtau *= 0.5;
            continue;
        }
        out.certificate_on_orbit = on_orbit;

        // Certificate (ii): base and 2x-refined quadratures of
        // (g_u, g_p) . V over the orbit's evaluation surface.
        auto pairing_on = [&](int refine, double* on_orbit_max) {
            const int nn = n * refine;
            const int mm = m * refine;
            const double wq_x = chart->length / nn;
            const double wq_t = chart->period / mm;
            double acc = 0.0;
            double worst = 0.0;
            for (int j = 0; j < mm; ++j) {
                const double t = chart->period * j / mm;
                const Vec pv = chart->interp_nodal(chart->p, t);
                const Vec pxv = chart->interp_nodal(chart->px, t);
                for (int i = 0; i < nn; ++i) {
                    const double x = grid.domain().axes[0].lo +
                                     chart->length * i / nn;
                    const double uu = trig_interp(pv, chart->length, x);
                    const double pp = trig_interp(pxv, chart->length, x);
                    const Eigen::Vector3d g = impl.eval(x, uu, pp, true);
                    const Vec vv = V(Eigen::Vector2d(x, 0.0), t);
                    acc += wq_x * wq_t * (g[1] * vv[0] + g[2] * vv[1]);
                    worst = std::max(worst, std::abs(g[0]));
                }
            }
            if (on_orbit_max) *on_orbit_max = worst;
            return acc;
        };
        out.certificate_pairing = pairing_on(1, nullptr);
        out.certificate_pairing_refined =
            pairing_on(2, &out.certificate_on_orbit_refined);
        if (out.certificate_pairing == 0.0) {
            // Support missed the sampled surface entirely; widen tau only.
            wtau *= 1.5;
            continue;
        }

        out.width_x = wx;
        out.width_t = wt;
        out.width_tau = wtau;
        NonlinearField g;
        g.description = "colinear_avoiding(orbit)";
        g.dim = 1;
        g.depends_on_p = true;
        g.depends_on_x = true;
        g.f = [impl](const EvalPoint& a) {
            return impl.eval(a.x[0], a.u, a.p[0], false)[0];
        };
        g.f_u = [impl](const EvalPoint& a) {
            return impl.eval(a.x[0], a.u, a.p[0], true)[1];
        };
        g.f_p = [impl](const EvalPoint& a) {
            return Eigen::Vector2d(impl.eval(a.x[0], a.u, a.p[0], true)[2], 0.0);
        };
        out.g = std::move(g);
        return out;
    }
}

RestorationExperiment transversality_restoration(
    const Grid& grid, const NonlinearField& f, const TrajectorySegment& conn,
    const PerturbationBump& h, const Vec& psi_entry, double eps,
    const StepperOptions& sopts) {
    TangentOptions topts{sopts.scheme, sopts.dt};
    RestorationExperiment out;
    out.predicted = eps * pairing_integral(f, conn, h, psi_entry, topts);

    StepperOptions ends = sopts;
    ends.stride = 1 << 20;
    const Vec base = conn.states.front();
    const double horizon = conn.t_end() - conn.t_begin();
    const Vec u0 = integrate(grid, f, base, horizon, ends).back();
    const Vec up =
        integrate(grid, compose_perturbed(f, h, eps), base, horizon, ends).back();
    const Vec um =
        integrate(grid, compose_perturbed(f, h, -eps), base, horizon, ends).back();
    out.measured_plus = grid.dot(psi_entry, up - u0);
    out.measured_minus = grid.dot(psi_entry, um - u0);
    out.sign_agreement =
        (out.measured_plus > 0.0) == (out.predicted > 0.0) &&
        (out.measured_minus > 0.0) == (out.predicted < 0.0);
    out.scaling_ratio = out.measured_plus / (out.predicted + 1e-300);
    return out;
}

}  // namespace parabolax
