#include "parabolax/nodal.hpp"

#include <set>

namespace parabolax {

namespace {

// All spatial derivatives of order q of a nodal field, as columns.
Mat spatial_derivatives(const Grid& grid, const Vec& v, int q) {
    if (q == 0) return v;
    std::vector<Vec> cur{v};
    for (int step = 0; step < q; ++step) {
        std::vector<Vec> next;
        // Multi-indices as ordered compositions; duplicates are harmless for
        // magnitude tests at this scale.
        for (const Vec& w : cur)
            for (int ax = 0; ax < grid.dim(); ++ax)
                next.push_back(grid.d1(ax) * w);
        cur = std::move(next);
    }
    Mat out(grid.size(), static_cast<int>(cur.size()));
    for (size_t c = 0; c < cur.size(); ++c) out.col(static_cast<int>(c)) = cur[c];
    return out;
}

}  // namespace

int vanishing_order(const SampledFamily& family, int node, int time_idx,
                    int tau_idx, const NodalThresholds& th) {
    const Grid& grid = *family.grid;
    const Vec& v = family.at(tau_idx, time_idx);
    for (int q = 0; q <= th.q_max; ++q) {
        const Mat d = spatial_derivatives(grid, v, q);
        const double scale = d.cwiseAbs().maxCoeff();
        if (scale <= 0.0) continue;
        const double mag = d.row(node).norm();
        const double threshold = (q == 0 ? th.eta_v : th.eta_g) * scale;
        if (mag > threshold) return q;
    }
    return th.q_max + 1;
}

SingularNodalSet singular_nodal_scan(const SampledFamily& family,
                                     const NodalThresholds& th) {
    const Grid& grid = *family.grid;
    require(!family.times.empty() && !family.taus.empty(),
            "singular_nodal_scan: empty sampling window");
    const int n = grid.size();
    const int mt = static_cast<int>(family.times.size());
    const int mtau = static_cast<int>(family.taus.size());

    SingularNodalSet out;
    // Window scales for the relative thresholds.
    for (int it = 0; it < mtau; ++it)
        for (int jt = 0; jt < mt; ++jt) {
            const Vec& v = family.at(it, jt);
            out.value_scale = std::max(out.value_scale, v.cwiseAbs().maxCoeff());
            for (int ax = 0; ax < grid.dim(); ++ax)
                out.grad_scale = std::max(
                    out.grad_scale, (grid.d1(ax) * v).cwiseAbs().maxCoeff());
        }
    require(out.value_scale > 0.0,
            "singular_nodal_scan: family is identically zero (excluded case)");

    std::set<std::pair<int, int>> covered;
    for (int it = 0; it < mtau; ++it) {
        for (int jt = 0; jt < mt; ++jt) {
            const Vec& v = family.at(it, jt);
            Mat grads(n, grid.dim());
            for (int ax = 0; ax < grid.dim(); ++ax)
                grads.col(ax) = grid.d1(ax) * v;
            for (int i = 0; i < n; ++i) {
                if (std::abs(v[i]) > th.eta_v * out.value_scale) continue;
                if (grads.row(i).norm() > th.eta_g * out.grad_scale) continue;
                SingularPoint pt;
                pt.node = i;
                pt.t = family.times[static_cast<size_t>(jt)];
                pt.tau = family.taus[static_cast<size_t>(it)];
                const int order = vanishing_order(family, i, jt, it, th);
                if (order > th.q_max) ++out.unique_continuation_alarms;
                pt.stratum = std::max(1, order - 1);
                out.points.push_back(pt);
                covered.insert({i, jt});
            }
        }
    }
    out.projection_cover =
        static_cast<double>(covered.size()) / (static_cast<double>(n) * mt);
    return out;
}

double tns_estimate(const SingularNodalSet& set) {
    return 1.0 - set.projection_cover;
}

namespace {

struct ProbeSamples {
    // Per time: (u, grad u) at the probe, and (du/dt, grad du/dt).
    Mat eval;        // m x (1+dim)
    Mat deriv_eval;  // m x (1+dim)
};

ProbeSamples collect_probe(const NonlinearField& f, const TrajectorySegment& traj,
                           int node, const std::vector<Vec>& rhs_states) {
    const Grid& grid = *traj.grid;
    const int m = traj.size();
    const int d = grid.dim();
    ProbeSamples s;
    s.eval = Mat::Zero(m, 1 + d);
    s.deriv_eval = Mat::Zero(m, 1 + d);
    for (int j = 0; j < m; ++j) {
        const Vec& u = traj.states[static_cast<size_t>(j)];
        const Vec& w = rhs_states[static_cast<size_t>(j)];
        s.eval(j, 0) = u[node];
        s.deriv_eval(j, 0) = w[node];
        for (int ax = 0; ax < d; ++ax) {
            s.eval(j, 1 + ax) = grid.d1(ax).row(node).dot(u);
            s.deriv_eval(j, 1 + ax) = grid.d1(ax).row(node).dot(w);
        }
    }
    (void)f;
    return s;
}

ObservabilityReport scan_impl(const NonlinearField& f,
                              const TrajectorySegment& traj,
                              const std::vector<int>& probes,
                              const ObservabilityLimits& limits, double period) {
    const Grid& grid = *traj.grid;
    require(traj.size() >= limits.min_samples,
            "observability scan: temporal resolution too coarse (need >= " +
                std::to_string(limits.min_samples) + " samples)");
    for (int node : probes)
        require(node >= 0 && node < grid.size(), "probe is not a grid node");

    const int m = traj.size();
    double dt_med = (traj.t_end() - traj.t_begin()) / std::max(1, m - 1);
    const double time_res =
        (limits.time_resolution > 0.0) ? limits.time_resolution : 2.0 * dt_med;

    std::vector<Vec> rhs_states;
    rhs_states.reserve(static_cast<size_t>(m));
    for (int j = 0; j < m; ++j)
        rhs_states.push_back(semiflow_rhs(grid, f, traj.states[static_cast<size_t>(j)]));

    // Window scales shared across probes.
    double eval_scale = 0.0, deriv_scale = 0.0;
    std::vector<ProbeSamples> samples;
    for (int node : probes) {
        samples.push_back(collect_probe(f, traj, node, rhs_states));
        eval_scale = std::max(eval_scale, samples.back().eval.cwiseAbs().maxCoeff());
        deriv_scale =
            std::max(deriv_scale, samples.back().deriv_eval.cwiseAbs().maxCoeff());
    }
    eval_scale = std::max(eval_scale, 1e-300);
    // A stationary window would make the derivative scale collapse and hide
    // (i)-violations; anchor it to the evaluation magnitude per unit time.
    const double duration = std::max(traj.t_end() - traj.t_begin(), 1e-300);
    deriv_scale = std::max({deriv_scale, eval_scale / duration, 1e-300});

    ObservabilityReport rep;
    rep.t_begin = traj.t_begin();
    rep.t_end = traj.t_end();
    int good = 0;
    for (size_t pi = 0; pi < probes.size(); ++pi) {
        ProbeReport pr;
        pr.node = probes[pi];
        const ProbeSamples& s = samples[pi];
        for (int j = 0; j < m; ++j)
            if (s.deriv_eval.row(j).norm() <= limits.eta * deriv_scale)
                pr.derivative_zero_times.push_back(traj.times[static_cast<size_t>(j)]);
        for (int j = 0; j < m; ++j) {
            for (int k = j + 1; k < m; ++k) {
                const double gap = traj.times[static_cast<size_t>(k)] -
                                   traj.times[static_cast<size_t>(j)];
                if (gap <= time_res) continue;
                if (period > 0.0) {
                    const double frac = std::abs(
                        std::remainder(gap, period));
                    if (frac <= limits.phase_tolerance) continue;
                }
                if ((s.eval.row(j) - s.eval.row(k)).norm() <=
                    limits.eta * eval_scale)
                    pr.violations.emplace_back(traj.times[static_cast<size_t>(j)],
                                               traj.times[static_cast<size_t>(k)]);
            }
        }
        pr.good = pr.violations.empty() && pr.derivative_zero_times.empty();
        if (pr.good) ++good;
        rep.probes.push_back(std::move(pr));
    }
    rep.good_fraction =
        probes.empty() ? 0.0 : static_cast<double>(good) / static_cast<double>(probes.size());
    return rep;
}

}  // namespace

ObservabilityReport injectivity_scan(const NonlinearField& f,
                                     const TrajectorySegment& traj,
                                     const std::vector<int>& probes,
                                     const ObservabilityLimits& limits) {
    return scan_impl(f, traj, probes, limits, 0.0);
}

ObservabilityReport period_observability(const NonlinearField& f,
                                         const TrajectorySegment& orbit_samples,
                                         double period,
                                         const std::vector<int>& probes,
                                         const ObservabilityLimits& limits) {
    require(period > 0.0, "period_observability: period must be positive");
    return scan_impl(f, orbit_samples, probes, limits, period);
}

SeparationReport separation_scan(const TrajectorySegment& a,
                                 const TrajectorySegment& b,
                                 const std::vector<int>& probes, double eta) {
    require(a.grid == b.grid, "separation_scan: grids differ");
    const Grid& grid = *a.grid;
    SeparationReport rep;
    rep.probes = probes;
    double scale = 0.0;
    for (const Vec& u : a.states) scale = std::max(scale, u.cwiseAbs().maxCoeff());
    for (const Vec& u : b.states) scale = std::max(scale, u.cwiseAbs().maxCoeff());
    scale = std::max(scale, 1e-300);

    bool all = true;
    for (int node : probes) {
        double best = std::numeric_limits<double>::infinity();
        for (const Vec& ua : a.states) {
            Eigen::VectorXd ea(1 + grid.dim());
            ea[0] = ua[node];
            for (int ax = 0; ax < grid.dim(); ++ax)
                ea[1 + ax] = grid.d1(ax).row(node).dot(ua);
            for (const Vec& ub : b.states) {
                Eigen::VectorXd eb(1 + grid.dim());
                eb[0] = ub[node];
                for (int ax = 0; ax < grid.dim(); ++ax)
                    eb[1 + ax] = grid.d1(ax).row(node).dot(ub);
                best = std::min(best, (ea - eb).norm());
            }
        }
        const bool sep = best > eta * scale;
        rep.separated.push_back(sep);
        rep.min_distance.push_back(best);
        all = all && sep;
    }
    rep.all_separated = all && !probes.empty();
    return rep;
}

}  // namespace parabolax
