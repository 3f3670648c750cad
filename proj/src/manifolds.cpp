#include "parabolax/manifolds.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <cstdio>
#include <cstdlib>
#include <random>

namespace parabolax {

namespace {

// Weighted modified Gram-Schmidt; near-dependent columns are dropped.
Mat w_orthonormalize(const Grid& grid, Mat v) {
    std::vector<int> kept;
    for (int c = 0; c < v.cols(); ++c) {
        Vec col = v.col(c);
        for (int k : kept) col -= grid.dot(v.col(k), col) * v.col(k);
        for (int k : kept) col -= grid.dot(v.col(k), col) * v.col(k);
        const double nn = grid.norm(col);
        if (nn > 1e-12) {
            v.col(static_cast<int>(kept.size())) = col / nn;
            kept.push_back(static_cast<int>(kept.size()));
        }
    }
    return v.leftCols(static_cast<int>(kept.size()));
}

// Real basis of the span of eigenvectors selected by `take`; complex pairs
// contribute their real and imaginary parts once.
Mat realified_eigenbasis(const Eigen::EigenSolver<Mat>& es,
                         const std::function<bool(const Cplx&)>& take) {
    const int n = static_cast<int>(es.eigenvalues().size());
    std::vector<Vec> cols;
    for (int i = 0; i < n; ++i) {
        const Cplx lam = es.eigenvalues()[i];
        if (!take(lam)) continue;
        if (std::abs(lam.imag()) < 1e-12) {
            cols.push_back(es.eigenvectors().col(i).real());
        } else if (lam.imag() > 0.0) {
            cols.push_back(es.eigenvectors().col(i).real());
            cols.push_back(es.eigenvectors().col(i).imag());
        }
    }
    Mat v(n, static_cast<int>(cols.size()));
    for (size_t c = 0; c < cols.size(); ++c) v.col(static_cast<int>(c)) = cols[c];
    return v;
}

}  // namespace

TangentFrame unstable_frame(const Grid& grid, const NonlinearField& f,
                            const CriticalElement& element) {
    TangentFrame frame;
    frame.kind = TangentFrame::Kind::unstable;
    Mat raw;
    if (std::holds_alternative<Equilibrium>(element)) {
        Eigen::EigenSolver<Mat> es(
            linearized_operator(grid, f, std::get<Equilibrium>(element).state));
        raw = realified_eigenbasis(
            es, [](const Cplx& lam) { return lam.real() > 0.0; });
    } else {
        Eigen::EigenSolver<Mat> es(
            period_map_matrix(f, std::get<PeriodicOrbit>(element)));
        raw = realified_eigenbasis(
            es, [](const Cplx& mu) { return std::abs(mu) > 1.0; });
    }
    frame.vectors = w_orthonormalize(grid, raw);
    return frame;
}

TangentFrame adjoint_stable_normal_frame(const Grid& grid, const NonlinearField& f,
                                         const CriticalElement& element) {
    TangentFrame frame;
    frame.kind = TangentFrame::Kind::adjoint_stable_normal;
    Mat raw;
    if (std::holds_alternative<Equilibrium>(element)) {
        Mat op = linearized_operator(grid, f, std::get<Equilibrium>(element).state);
        Eigen::EigenSolver<Mat> es(op.transpose().eval());
        raw = realified_eigenbasis(
            es, [](const Cplx& lam) { return lam.real() > 0.0; });
    } else {
        Mat pi = period_map_matrix(f, std::get<PeriodicOrbit>(element));
        Eigen::EigenSolver<Mat> es(pi.transpose().eval());
        raw = realified_eigenbasis(
            es, [](const Cplx& mu) { return std::abs(mu) > 1.0; });
    }
    frame.vectors = w_orthonormalize(grid, raw);
    return frame;
}

namespace {

TrajectorySegment constant_trajectory(const Grid& grid, const Vec& state,
                                      double t0, double t1) {
    TrajectorySegment traj;
    traj.grid = &grid;
    traj.times = {t0, t1};
    traj.states = {state, state};
    traj.scheme = "imex2";
    traj.dt = t1 - t0;
    return traj;
}

// Coefficients along an element, valid on [0, horizon]: constant for an
// equilibrium, periodically tiled for an orbit.
CoefficientField element_coefficients(const Grid& grid, const NonlinearField& f,
                                      const CriticalElement& el, double horizon) {
    if (std::holds_alternative<Equilibrium>(el))
        return linearize_along(
            f, constant_trajectory(grid, std::get<Equilibrium>(el).state, 0.0,
                                   horizon));
    const PeriodicOrbit& orbit = std::get<PeriodicOrbit>(el);
    // Coefficient samples interpolate linearly in time; ~500 per period is
    // plenty for rate fits and keeps the tiled arrays small.
    TrajectorySegment sub = orbit.samples;
    if (sub.size() > 501) {
        TrajectorySegment thin;
        thin.grid = sub.grid;
        thin.scheme = sub.scheme;
        thin.dt = sub.dt;
        const int stride = (sub.size() - 1 + 499) / 500;
        for (int j = 0; j < sub.size(); j += stride) {
            thin.times.push_back(sub.times[static_cast<size_t>(j)]);
            thin.states.push_back(sub.states[static_cast<size_t>(j)]);
        }
        if (thin.times.back() != sub.times.back()) {
            thin.times.push_back(sub.times.back());
            thin.states.push_back(sub.states.back());
        }
        sub = std::move(thin);
    }
    CoefficientField base = linearize_along(f, sub);
    const int m = static_cast<int>(base.times.size());
    const int reps = static_cast<int>(std::ceil(horizon / orbit.period)) + 1;
    CoefficientField tiled;
    tiled.grid = base.grid;
    tiled.source = base.source;
    tiled.a = Mat::Zero(base.a.rows(), (m - 1) * reps + 1);
    tiled.b.assign(base.b.size(),
                   Mat::Zero(base.a.rows(), (m - 1) * reps + 1));
    for (int r = 0; r < reps; ++r) {
        for (int j = 0; j < m - 1 || (r + 1 == reps && j < m); ++j) {
            const int col = r * (m - 1) + j;
            tiled.times.push_back(base.times[static_cast<size_t>(j)] + r * orbit.period);
            tiled.a.col(col) = base.a.col(j);
            for (size_t ax = 0; ax < base.b.size(); ++ax)
                tiled.b[ax].col(col) = base.b[ax].col(j);
            if (j >= m - 1) break;
        }
    }
    return tiled;
}

struct LogFit {
    double slope, stderr_;
    int n_used;
};

LogFit fit_log_norm(const Grid& grid, const TangentHistory& h, double skip_frac) {
    const size_t m = h.times.size();
    const size_t first = static_cast<size_t>(skip_frac * static_cast<double>(m));
    std::vector<double> ts, ys;
    for (size_t j = first; j < m; ++j) {
        const double nn = grid.norm(h.states[j]);
        if (nn <= 0.0 || !std::isfinite(nn)) continue;
        ts.push_back(h.times[j]);
        ys.push_back(std::log(nn));
    }
    const int n = static_cast<int>(ts.size());
    if (n < 10) throw NoConvergenceError("rate_estimate: horizon too short for a fit");
    double tbar = 0.0, ybar = 0.0;
    for (int i = 0; i < n; ++i) {
        tbar += ts[static_cast<size_t>(i)];
        ybar += ys[static_cast<size_t>(i)];
    }
    tbar /= n;
    ybar /= n;
    double sxx = 0.0, sxy = 0.0;
    for (int i = 0; i < n; ++i) {
        sxx += (ts[static_cast<size_t>(i)] - tbar) * (ts[static_cast<size_t>(i)] - tbar);
        sxy += (ts[static_cast<size_t>(i)] - tbar) * (ys[static_cast<size_t>(i)] - ybar);
    }
    const double slope = sxy / sxx;
    double ss = 0.0;
    for (int i = 0; i < n; ++i) {
        const double r = ys[static_cast<size_t>(i)] - ybar - slope * (ts[static_cast<size_t>(i)] - tbar);
        ss += r * r;
    }
    const double se = std::sqrt(ss / std::max(1, n - 2) / sxx);
    return {slope, se, n};
}

}  // namespace

RateEstimate rate_estimate(const Grid& grid, const NonlinearField& f,
                           const CriticalElement& element,
                           const TangentFrame& frame, double horizon,
                           std::uint64_t seed, const TangentOptions& topts) {
    require(horizon > 0.0, "rate_estimate: horizon must be positive");
    CoefficientField coeffs = element_coefficients(grid, f, element, horizon);
    RateEstimate out;

    if (frame.index() > 0) {
        const Vec xi = frame.vectors.col(0);
        require(grid.norm(xi) > 0.0, "rate_estimate: zero frame vector");
        TangentHistory h = propagate_history(coeffs, xi, 0.0, horizon, topts);
        LogFit fit = fit_log_norm(grid, h, 0.4);
        out.growth = fit.slope;
        out.growth_stderr = fit.stderr_;
    }

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Vec v(grid.size());
    for (int i = 0; i < grid.size(); ++i) v[i] = gauss(rng);
    for (int c = 0; c < frame.index(); ++c)
        v -= grid.dot(frame.vectors.col(c), v) * frame.vectors.col(c);
    require(grid.norm(v) > 0.0, "rate_estimate: degenerate stable probe");
    v /= grid.norm(v);
    TangentHistory h = propagate_history(coeffs, v, 0.0, horizon, topts);
    LogFit fit = fit_log_norm(grid, h, 0.4);
    out.decay = fit.slope;
    out.decay_stderr = fit.stderr_;
    return out;
}

namespace {

std::vector<Vec> sphere_directions(int k, int n_seeds, std::uint64_t seed) {
    std::vector<Vec> dirs;
    for (int i = 0; i < k && static_cast<int>(dirs.size()) < n_seeds; ++i) {
        Vec e = Vec::Zero(k);
        e[i] = 1.0;
        dirs.push_back(e);
        if (static_cast<int>(dirs.size()) < n_seeds) dirs.push_back((-e).eval());
    }
    if (k == 2) {
        // Fill with equispaced angles for an ordered sweep.
        const int extra = n_seeds - static_cast<int>(dirs.size());
        for (int j = 0; j < extra; ++j) {
            const double th = 2.0 * 3.14159265358979323846 * (j + 0.5) / n_seeds;
            dirs.push_back(Vec{{std::cos(th), std::sin(th)}});
        }
    } else if (k > 2) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> gauss(0.0, 1.0);
        while (static_cast<int>(dirs.size()) < n_seeds) {
            Vec v(k);
            for (int i = 0; i < k; ++i) v[i] = gauss(rng);
            if (v.norm() > 1e-8) dirs.push_back(v / v.norm());
        }
    }
    if (static_cast<int>(dirs.size()) > n_seeds) dirs.resize(static_cast<size_t>(n_seeds));
    return dirs;
}

}  // namespace

GrowResult grow_unstable(const Grid& grid, const NonlinearField& f,
                         const Vec& anchor, const TangentFrame& frame,
                         double radius, int n_seeds, double m_horizon,
                         const StepperOptions& sopts, std::uint64_t seed) {
    require(n_seeds >= 1, "grow_unstable: need at least one seed");
    require(radius > 0.0 && radius <= 0.1, "grow_unstable: radius out of range");
    GrowResult out;
    if (frame.index() == 0) return out;
    for (const Vec& dir : sphere_directions(frame.index(), n_seeds, seed)) {
        const Vec u0 = anchor + radius * (frame.vectors * dir);
        try {
            out.branches.push_back(integrate(grid, f, u0, m_horizon, sopts));
            out.seed_coords.push_back(radius * dir);
        } catch (const BlowUpError&) {
            ++out.dropped_blowup;
        }
    }
    if (out.branches.empty() && out.dropped_blowup > 0)
        throw BlowUpError(0.0);
    return out;
}

namespace {

struct ProbeResult {
    enum class Outcome { entered, settled, timeout, blowup } outcome;
    double entry_time = 0.0;
    double min_dist = std::numeric_limits<double>::infinity();
    Vec endpoint;
};

double target_distance(const Grid& grid, const Vec& u, const Vec& anchor,
                       const std::vector<Vec>& phases) {
    double d = grid.norm(u - anchor);
    for (const Vec& p : phases) d = std::min(d, grid.norm(u - p));
    return d;
}

ProbeResult run_probe(const Grid& grid, const NonlinearField& f, const Vec& u0,
                      const Vec& target_anchor, const std::vector<Vec>& phases,
                      const ShootOptions& opts) {
    ProbeResult res;
    res.outcome = ProbeResult::Outcome::timeout;
    StepperOptions sopts = opts.stepper;
    sopts.stride = 4;
    const double chunk = std::min(opts.max_time, 2.0);
    Vec u = u0;
    double t = 0.0;
    // A homoclinic seed starts inside the target tube; entry only counts
    // after the trajectory has genuinely left it.
    bool departed =
        target_distance(grid, u0, target_anchor, phases) > 3.0 * opts.tube_radius;
    while (t < opts.max_time) {
        const double t1 = std::min(opts.max_time, t + chunk);
        TrajectorySegment seg;
        try {
            seg = integrate_window(grid, f, u, t, t1, sopts);
        } catch (const BlowUpError&) {
            res.outcome = ProbeResult::Outcome::blowup;
            return res;
        }
        for (size_t j = 0; j < seg.states.size(); ++j) {
            const double d =
                target_distance(grid, seg.states[j], target_anchor, phases);
            if (!departed) {
                departed = d > 3.0 * opts.tube_radius;
                continue;
            }
            res.min_dist = std::min(res.min_dist, d);
            if (d <= opts.tube_radius) {
                res.outcome = ProbeResult::Outcome::entered;
                res.entry_time = seg.times[j];
                return res;
            }
        }
        u = seg.back();
        t = t1;
        const double rhs_norm = grid.norm(semiflow_rhs(grid, f, u));
        const double dist = target_distance(grid, u, target_anchor, phases);
        if (rhs_norm < opts.settle_rhs_floor * std::max(1.0, grid.norm(u)) &&
            dist > 3.0 * opts.tube_radius) {
            res.outcome = ProbeResult::Outcome::settled;
            res.endpoint = u;
            return res;
        }
    }
    res.endpoint = u;
    return res;
}

}  // namespace

ConnectingOrbit shoot_connection(const Grid& grid, const NonlinearField& f,
                                 const Vec& source_anchor,
                                 const TangentFrame& source_frame,
                                 const Vec& target_anchor,
                                 const ShootOptions& opts) {
    require(source_frame.index() >= 1,
            "shoot_connection: source must have Morse index >= 1");
    const int k = source_frame.index();
    std::vector<Vec> phases;  // single-state target
    auto finish = [&](const Vec& dir, double entry_time) {
        StepperOptions fine = opts.stepper;
        fine.stride = 1;
        ConnectingOrbit conn;
        conn.source_anchor = source_anchor;
        conn.target_anchor = target_anchor;
        conn.departure_coords = opts.radius * dir;
        conn.trajectory = integrate(
            grid, f, (source_anchor + opts.radius * (source_frame.vectors * dir)).eval(),
            entry_time, fine);
        conn.entry_time = entry_time;
        return conn;
    };

    const bool debug = std::getenv("PARABOLAX_SHOOT_DEBUG") != nullptr;
    std::vector<Vec> dirs = sphere_directions(k, opts.n_probes, 7u);
    std::vector<ProbeResult> results;
    int blowups = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (const Vec& dir : dirs) {
        const Vec u0 = source_anchor + opts.radius * (source_frame.vectors * dir);
        ProbeResult r = run_probe(grid, f, u0, target_anchor, phases, opts);
        if (debug)
            std::fprintf(stderr, "[shoot] dir=(%s) outcome=%d min_dist=%.4e\n",
                         (std::to_string(dir[0]) +
                          (dir.size() > 1 ? "," + std::to_string(dir[1]) : ""))
                             .c_str(),
                         static_cast<int>(r.outcome), r.min_dist);
        if (r.outcome == ProbeResult::Outcome::entered)
            return finish(dir, r.entry_time);
        if (r.outcome == ProbeResult::Outcome::blowup) ++blowups;
        best_dist = std::min(best_dist, r.min_dist);
        results.push_back(std::move(r));
    }
    if (blowups == static_cast<int>(dirs.size())) throw BlowUpError(0.0);

    if (k == 2) {
        // Bisect between neighbors that settled at different attractors.
        auto angle_of = [](const Vec& d) { return std::atan2(d[1], d[0]); };
        std::vector<std::pair<double, const ProbeResult*>> ring;
        for (size_t i = 0; i < dirs.size(); ++i)
            if (results[i].outcome == ProbeResult::Outcome::settled)
                ring.emplace_back(angle_of(dirs[i]), &results[i]);
        std::sort(ring.begin(), ring.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        for (size_t i = 0; i < ring.size(); ++i) {
            const auto& a = ring[i];
            const auto& b = ring[(i + 1) % ring.size()];
            const Vec& ea = a.second->endpoint;
            const Vec& eb = b.second->endpoint;
            if (grid.norm(ea - eb) <= 10.0 * opts.tube_radius) continue;
            double lo = a.first;
            double hi = (i + 1 == ring.size()) ? b.first + 2.0 * 3.14159265358979323846
                                               : b.first;
            Vec end_lo = ea;
            for (int it = 0; it < opts.bisect_iters; ++it) {
                const double mid = 0.5 * (lo + hi);
                const Vec dir{{std::cos(mid), std::sin(mid)}};
                const Vec u0 =
                    source_anchor + opts.radius * (source_frame.vectors * dir);
                ProbeResult r = run_probe(grid, f, u0, target_anchor, phases, opts);
                if (debug)
                    std::fprintf(stderr,
                                 "[shoot]   bisect it=%d mid=%.12f outcome=%d "
                                 "min=%.4e\n",
                                 it, mid, static_cast<int>(r.outcome), r.min_dist);
                if (r.outcome == ProbeResult::Outcome::entered)
                    return finish(dir, r.entry_time);
                best_dist = std::min(best_dist, r.min_dist);
                if (r.outcome == ProbeResult::Outcome::settled &&
                    grid.norm(r.endpoint - end_lo) <= 10.0 * opts.tube_radius) {
                    lo = mid;
                    end_lo = r.endpoint;
                } else {
                    hi = mid;
                }
            }
        }
    }
    throw NotFoundError("no connection found within budget (closest approach " +
                        std::to_string(best_dist) + ")");
}

std::string to_string(TransversalityReport::Decision d) {
    switch (d) {
        case TransversalityReport::Decision::transverse: return "transverse";
        case TransversalityReport::Decision::non_transverse: return "non_transverse";
        case TransversalityReport::Decision::empty_intersection:
            return "empty_intersection";
    }
    return "?";
}

TransversalityReport transversality_report(const NonlinearField& f,
                                           const ConnectingOrbit& orbit,
                                           const TangentFrame& source_frame,
                                           const TangentFrame& target_normals,
                                           const TransversalityOptions& opts) {
    const Grid& grid = *orbit.trajectory.grid;
    const int rows = target_normals.index();
    const int cols = source_frame.index();
    TransversalityReport rep;
    rep.margin = opts.margin;
    rep.t_star = orbit.entry_time;

    if (rows == 0) {
        rep.pairing = Mat::Zero(0, cols);
        rep.smallest_singular_value = std::numeric_limits<double>::infinity();
        rep.decision = TransversalityReport::Decision::transverse;
        rep.decision_stable = true;
        return rep;
    }

    CoefficientField coeffs = linearize_along(f, orbit.trajectory);
    const double t0 = orbit.trajectory.t_begin();
    const double te = orbit.trajectory.t_end();
    const double span = 0.5 * (te - t0);
    const int ns = std::max(1, opts.n_tstar_samples);

    auto chunked_forward = [&](Mat v, double ta, double tb) {
        double t = ta;
        while (t < tb - 1e-13) {
            const double t1 = std::min(tb, t + opts.reorth_interval);
            v = propagate_matrix(coeffs, v, t, t1, opts.tangent);
            v = w_orthonormalize(grid, v);
            t = t1;
        }
        return v;
    };
    auto chunked_backward = [&](Mat v, double ta, double tb) {
        double t = ta;  // walks down to tb
        while (t > tb + 1e-13) {
            const double t1 = std::max(tb, t - opts.reorth_interval);
            v = propagate_adjoint_matrix(coeffs, v, t, t1, opts.tangent);
            v = w_orthonormalize(grid, v);
            t = t1;
        }
        return v;
    };

    bool first = true;
    bool all_same = true;
    TransversalityReport::Decision first_decision =
        TransversalityReport::Decision::non_transverse;
    for (int j = 0; j < ns; ++j) {
        const double tstar = te - span * j / std::max(1, ns - 1);
        Mat xi = chunked_forward(source_frame.vectors, t0, tstar);
        Mat psi = chunked_backward(target_normals.vectors, te, tstar);
        Mat pairing = grid.weight_scalar() * (psi.transpose() * xi);
        Eigen::JacobiSVD<Mat> svd(pairing);
        const Vec sv = svd.singularValues();
        const double smin = (sv.size() > 0) ? sv[sv.size() - 1] : 0.0;
        const bool transverse = (rows <= cols) && (smin > opts.margin);
        const auto decision = transverse
                                  ? TransversalityReport::Decision::transverse
                                  : TransversalityReport::Decision::non_transverse;
        rep.t_star_samples.push_back(tstar);
        rep.sigma_min_samples.push_back(smin);
        if (first) {
            rep.pairing = pairing;
            rep.singular_values.assign(sv.data(), sv.data() + sv.size());
            rep.smallest_singular_value = smin;
            rep.decision = decision;
            first_decision = decision;
            first = false;
        } else if (decision != first_decision) {
            all_same = false;
        }
    }
    rep.decision_stable = all_same;
    return rep;
}

}  // namespace parabolax
