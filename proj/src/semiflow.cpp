#include "parabolax/semiflow.hpp"

#include <Eigen/LU>

namespace parabolax {

std::string to_string(Scheme s) {
    return s == Scheme::imex1 ? "imex1" : "imex2";
}

Scheme scheme_from_string(const std::string& s) {
    if (s == "imex1") return Scheme::imex1;
    if (s == "imex2") return Scheme::imex2;
    throw ConfigError("unknown scheme '" + s + "' (imex1|imex2)");
}

std::vector<double> make_lattice(double t0, double t1, double dt) {
    require(dt > 0.0, "dt must be positive");
    require(t1 > t0, "time window must have positive length");
    require(dt <= (t1 - t0) * (1.0 + 1e-12), "dt must not exceed the window");
    std::vector<double> times{t0};
    const double span = t1 - t0;
    const int n_full = static_cast<int>(std::floor(span / dt + 1e-9));
    for (int k = 1; k <= n_full; ++k) times.push_back(t0 + k * dt);
    if (t1 - times.back() > 1e-12 * std::max(1.0, std::abs(t1)))
        times.push_back(t1);
    else
        times.back() = t1;
    return times;
}

Vec TrajectorySegment::state_at(double t) const {
    require(!times.empty(), "empty trajectory");
    if (t <= times.front()) return states.front();
    if (t >= times.back()) return states.back();
    const auto it = std::upper_bound(times.begin(), times.end(), t);
    const size_t j = static_cast<size_t>(it - times.begin());
    const double t0 = times[j - 1], t1 = times[j];
    const double w = (t - t0) / (t1 - t0);
    return (1.0 - w) * states[j - 1] + w * states[j];
}

namespace {

Vec nonlinearity_values(const Grid& grid, const NonlinearField& f, const Vec& u) {
    const int n = grid.size();
    Vec r(n);
    std::vector<Vec> grads;
    if (f.depends_on_p) grads = gradient(grid, u);
    EvalPoint at;
    at.dim = grid.dim();
    for (int i = 0; i < n; ++i) {
        at.x = grid.node(i);
        at.u = u[i];
        if (f.depends_on_p)
            for (int a = 0; a < grid.dim(); ++a) at.p[a] = grads[static_cast<size_t>(a)][i];
        r[i] = f.f(at);
    }
    return r;
}

struct ImexCore {
    const Grid* grid;
    Scheme scheme;
    double dt;
    Eigen::PartialPivLU<Mat> lu;  // of I - c*dt*L

    ImexCore(const Grid& g, Scheme s, double step) : grid(&g), scheme(s), dt(step) {
        const double c = (s == Scheme::imex1) ? 1.0 : 0.5;
        Mat cmat = Mat::Identity(g.size(), g.size()) - (c * dt) * g.laplacian_matrix();
        lu.compute(cmat);
    }

    // One nonlinear step; fe evaluates the explicit part f(x,u,grad u).
    Vec step(const Vec& u, const NonlinearField& f) const {
        const Mat& lap = grid->laplacian_matrix();
        if (scheme == Scheme::imex1)
            return lu.solve((u + dt * nonlinearity_values(*grid, f, u)).eval());
        const Vec au = u + (0.5 * dt) * (lap * u);
        const Vec fu = nonlinearity_values(*grid, f, u);
        const Vec ustar = lu.solve((au + dt * fu).eval());
        const Vec fstar = nonlinearity_values(*grid, f, ustar);
        return lu.solve((au + (0.5 * dt) * (fu + fstar)).eval());
    }
};

}  // namespace

TrajectorySegment integrate_window(const Grid& grid, const NonlinearField& f,
                                   const Vec& u0, double t0, double t1,
                                   const StepperOptions& opts) {
    require(u0.size() == grid.size(), "integrate: state/grid size mismatch");
    require(opts.stride >= 1, "stride must be >= 1");
    const std::vector<double> lattice = make_lattice(t0, t1, opts.dt);

    TrajectorySegment traj;
    traj.grid = &grid;
    traj.scheme = to_string(opts.scheme);
    traj.dt = opts.dt;
    traj.times.push_back(lattice[0]);
    traj.states.push_back(u0);

    Vec u = u0;
    // Cores are cached per step size (the last step may be shorter).
    std::vector<std::pair<double, ImexCore>> cores;
    auto core_for = [&](double dt) -> const ImexCore& {
        for (const auto& c : cores)
            if (std::abs(c.first - dt) <= 1e-14 * dt) return c.second;
        cores.emplace_back(dt, ImexCore(grid, opts.scheme, dt));
        return cores.back().second;
    };

    for (size_t j = 1; j < lattice.size(); ++j) {
        const double dt = lattice[j] - lattice[j - 1];
        u = core_for(dt).step(u, f);
        if (!u.allFinite())
            throw NoConvergenceError("implicit step produced non-finite values at t = " +
                                     std::to_string(lattice[j]));
        if (u.cwiseAbs().maxCoeff() > opts.blowup_threshold)
            throw BlowUpError(lattice[j - 1]);
        const bool keep = (j % static_cast<size_t>(opts.stride) == 0) ||
                          (j + 1 == lattice.size());
        if (keep) {
            traj.times.push_back(lattice[j]);
            traj.states.push_back(u);
        }
    }
    return traj;
}

TrajectorySegment integrate(const Grid& grid, const NonlinearField& f,
                            const Vec& u0, double T, const StepperOptions& opts) {
    require(T > 0.0, "integration horizon must be positive");
    return integrate_window(grid, f, u0, 0.0, T, opts);
}

double semigroup_defect(const Grid& grid, const NonlinearField& f, const Vec& u0,
                        double t, double s, const StepperOptions& opts) {
    require(t > 0.0 && s > 0.0, "semigroup_defect: t and s must be positive");
    StepperOptions o = opts;
    o.stride = 1 << 20;  // keep endpoints only
    const Vec u_ts = integrate(grid, f, u0, t + s, o).back();
    const Vec u_s = integrate(grid, f, u0, s, o).back();
    const Vec u_st = integrate(grid, f, u_s, t, o).back();
    const double denom = grid.norm(u_ts);
    return grid.norm(u_ts - u_st) / (denom + 1e-300);
}

Vec semiflow_rhs(const Grid& grid, const NonlinearField& f, const Vec& u) {
    return grid.laplacian_matrix() * u + nonlinearity_values(grid, f, u);
}

EvalPoint evaluation_map_at(const Grid& grid, const Vec& state, int node) {
    require(state.size() == grid.size(), "evaluation_map: size mismatch");
    require(node >= 0 && node < grid.size(), "evaluation_map: node out of range");
    EvalPoint at;
    at.dim = grid.dim();
    at.x = grid.node(node);
    at.u = state[node];
    for (int a = 0; a < grid.dim(); ++a)
        at.p[a] = grid.d1(a).row(node).dot(state);
    return at;
}

EvalPoint evaluation_map(const Grid& grid, const Vec& state,
                         const Eigen::Vector2d& x0) {
    return evaluation_map_at(grid, state, grid.locate_node(x0));
}

double step_residual(const Grid& grid, const NonlinearField& f,
                     const TrajectorySegment& traj) {
    double worst = 0.0;
    const Mat& lap = grid.laplacian_matrix();
    for (size_t j = 1; j < traj.states.size(); ++j) {
        const double dt = traj.times[j] - traj.times[j - 1];
        const Vec& u = traj.states[j - 1];
        const Vec& up = traj.states[j];
        Vec resid;
        if (traj.scheme == "imex1") {
            resid = up - dt * (lap * up) - u - dt * nonlinearity_values(grid, f, u);
        } else {
            const Vec au = u + (0.5 * dt) * (lap * u);
            const Vec fu = nonlinearity_values(grid, f, u);
            Eigen::PartialPivLU<Mat> lu(Mat::Identity(grid.size(), grid.size()) -
                                        (0.5 * dt) * lap);
            const Vec ustar = lu.solve((au + dt * fu).eval());
            const Vec fstar = nonlinearity_values(grid, f, ustar);
            resid = up - (0.5 * dt) * (lap * up) - au - (0.5 * dt) * (fu + fstar);
        }
        worst = std::max(worst, grid.norm(resid) /
                                    (grid.norm(up) + 1e-300));
    }
    return worst;
}

}  // namespace parabolax
