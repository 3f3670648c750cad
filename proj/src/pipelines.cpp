#include "parabolax/pipelines.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "parabolax/manifolds.hpp"
#include "parabolax/nodal.hpp"
#include "parabolax/perturbation.hpp"

namespace parabolax {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_csv(const fs::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
    std::ofstream out(path);
    require(out.good(), "cannot write " + path.string());
    for (size_t i = 0; i < header.size(); ++i)
        out << (i ? "," : "") << header[i];
    out << "\n";
    for (const auto& row : rows) {
        for (size_t i = 0; i < row.size(); ++i)
            out << (i ? "," : "") << fmt(row[i]);
        out << "\n";
    }
}

void write_trajectory_csv(const fs::path& path, const TrajectorySegment& traj) {
    std::vector<std::string> header{"t"};
    for (int i = 0; i < traj.grid->size(); ++i)
        header.push_back("u" + std::to_string(i));
    std::vector<std::vector<double>> rows;
    for (int j = 0; j < traj.size(); ++j) {
        std::vector<double> row{traj.times[static_cast<size_t>(j)]};
        const Vec& u = traj.states[static_cast<size_t>(j)];
        row.insert(row.end(), u.data(), u.data() + u.size());
        rows.push_back(std::move(row));
    }
    write_csv(path, header, rows);
}

void write_grid_csv(const fs::path& path, const Grid& grid) {
    std::vector<std::string> header{"node"};
    for (int a = 0; a < grid.dim(); ++a) header.push_back("x" + std::to_string(a + 1));
    header.push_back("weight");
    std::vector<std::vector<double>> rows;
    for (int i = 0; i < grid.size(); ++i) {
        std::vector<double> row{static_cast<double>(i)};
        for (int a = 0; a < grid.dim(); ++a) row.push_back(grid.nodes()(i, a));
        row.push_back(grid.quadrature_weights()[i]);
        rows.push_back(std::move(row));
    }
    write_csv(path, header, rows);
}

json complex_list(const std::vector<Cplx>& zs) {
    json arr = json::array();
    for (const Cplx& z : zs) arr.push_back({z.real(), z.imag()});
    return arr;
}

json spectrum_json(const SpectrumReport& r) {
    json j;
    j["multipliers"] = complex_list(r.multipliers);
    if (!r.eigenvalues.empty()) j["eigenvalues"] = complex_list(r.eigenvalues);
    j["tau_ref"] = r.tau_ref;
    j["morse_index"] = r.morse_index;
    j["flags"] = json::array();
    if (r.is_simple) j["flags"].push_back("simple");
    if (r.is_hyperbolic) j["flags"].push_back("hyperbolic");
    if (r.is_degenerate) j["flags"].push_back("degenerate");
    j["gap"] = r.gap;
    json residuals = json::object();
    if (r.trivial_multiplier_residual >= 0.0) {
        residuals["trivial_multiplier"] = r.trivial_multiplier_residual;
        j["trivial_index"] = r.trivial_index;
    }
    j["residuals"] = residuals;
    return j;
}

std::vector<int> pick_probes(const Grid& grid, const json& params,
                             std::uint64_t seed) {
    if (params.contains("probes") && params.at("probes").is_string() &&
        params.at("probes").get<std::string>() == "all") {
        std::vector<int> all(static_cast<size_t>(grid.size()));
        for (int i = 0; i < grid.size(); ++i) all[static_cast<size_t>(i)] = i;
        return all;
    }
    const int count = params.value("probes", 8);
    require(count >= 1, "config: probes must be >= 1 or \"all\"");
    std::mt19937_64 rng(seed);
    std::vector<int> probes;
    std::set<int> used;
    while (static_cast<int>(probes.size()) < std::min(count, grid.size())) {
        const int i = static_cast<int>(rng() % static_cast<std::uint64_t>(grid.size()));
        if (used.insert(i).second) probes.push_back(i);
    }
    std::sort(probes.begin(), probes.end());
    return probes;
}

Equilibrium locate_equilibrium(const Grid& grid, const NonlinearField& f,
                               const RunConfig& cfg, const std::string& guess_expr,
                               double relax_time) {
    Vec guess = state_from_expr(grid, guess_expr);
    if (relax_time > 0.0) {
        StepperOptions relax = cfg.solver;
        relax.stride = 1 << 20;
        guess = integrate(grid, f, guess, relax_time, relax).back();
    }
    NewtonOptions nopts;
    nopts.tol = cfg.newton_tol;
    return find_equilibrium(grid, f, guess, nopts);
}

PeriodicOrbit locate_orbit(const Grid& grid, const NonlinearField& f,
                           const RunConfig& cfg) {
    const json& p = cfg.params;
    require(p.contains("guess") && p.contains("guess_period"),
            "config: orbit experiments need params.guess and params.guess_period");
    OrbitOptions oopts;
    oopts.scheme = cfg.solver.scheme;
    oopts.dt_coarse = p.value("dt_coarse", 2e-3);
    oopts.dt_fine = p.value("dt_fine", cfg.solver.dt);
    oopts.closure_tol = cfg.orbit_closure_tol;
    oopts.max_return_time = p.value("max_return_time", 100.0);
    return find_periodic_orbit(grid, f, state_from_expr(grid, p.at("guess")),
                               p.at("guess_period").get<double>(), oopts);
}

// --------------------------------------------------------------------------
// Individual pipelines; each fills `results` and may write CSV artifacts.
// --------------------------------------------------------------------------

void pipeline_simulate(const RunConfig& cfg, const Grid& grid,
                       const NonlinearField& f, const fs::path& data,
                       const fs::path& plot, ordered_json& results) {
    const json& p = cfg.params;
    require(p.contains("initial") && p.contains("T"),
            "config: simulate needs params.initial and params.T");
    const Vec u0 = state_from_expr(grid, p.at("initial"));
    TrajectorySegment traj =
        integrate(grid, f, u0, p.at("T").get<double>(), cfg.solver);
    write_trajectory_csv(data / "trajectory.csv", traj);

    std::vector<std::vector<double>> norms;
    for (int j = 0; j < traj.size(); ++j) {
        const Vec& u = traj.states[static_cast<size_t>(j)];
        norms.push_back({traj.times[static_cast<size_t>(j)], grid.norm(u),
                         u.minCoeff(), u.maxCoeff()});
    }
    write_csv(plot / "norms.csv", {"t", "weighted_norm", "min", "max"}, norms);

    results["steps_stored"] = traj.size();
    results["t_end"] = traj.t_end();
    results["final_norm"] = grid.norm(traj.back());
    results["final_max"] = traj.back().cwiseAbs().maxCoeff();
}

void pipeline_equilibria(const RunConfig& cfg, const Grid& grid,
                         const NonlinearField& f, const fs::path& data,
                         ordered_json& results) {
    const json& p = cfg.params;
    require(p.contains("guess"), "config: equilibria needs params.guess");
    Equilibrium eq = locate_equilibrium(grid, f, cfg, p.at("guess"),
                                        p.value("relax_time", 0.0));
    std::vector<std::vector<double>> rows;
    for (int i = 0; i < grid.size(); ++i)
        rows.push_back({grid.nodes()(i, 0), eq.state[i]});
    write_csv(data / "equilibrium.csv", {"x", "e"}, rows);
    results["residual"] = eq.residual;
    results["max_value"] = eq.state.cwiseAbs().maxCoeff();
    if (p.value("with_spectrum", true)) {
        SpectrumReport rep = equilibrium_spectrum(
            grid, f, eq, p.value("top_k", 8), 1.0,
            ClassifyOptions{cfg.unit_circle_margin});
        results["spectrum"] = spectrum_json(rep);
    }
}

void pipeline_spectrum(const RunConfig& cfg, const Grid& grid,
                       const NonlinearField& f, const fs::path& data,
                       const fs::path& plot, ordered_json& results) {
    const json& p = cfg.params;
    Equilibrium eq = locate_equilibrium(grid, f, cfg,
                                        p.value("guess", std::string("0")),
                                        p.value("relax_time", 0.0));
    SpectrumReport rep = equilibrium_spectrum(
        grid, f, eq, p.value("top_k", 8), p.value("tau_ref", 1.0),
        ClassifyOptions{cfg.unit_circle_margin});
    results["residual"] = eq.residual;
    results["spectrum"] = spectrum_json(rep);

    std::vector<std::vector<double>> rows;
    for (size_t i = 0; i < rep.eigenvalues.size(); ++i)
        rows.push_back({static_cast<double>(i), rep.eigenvalues[i].real(),
                        rep.eigenvalues[i].imag(),
                        std::abs(rep.multipliers[i])});
    write_csv(data / "spectrum.csv", {"k", "re_lambda", "im_lambda", "abs_mu"},
              rows);
    write_csv(plot / "spectrum.csv", {"k", "re_lambda", "im_lambda", "abs_mu"},
              rows);
}

void pipeline_orbit(const RunConfig& cfg, const Grid& grid,
                    const NonlinearField& f, const fs::path& data,
                    ordered_json& results) {
    PeriodicOrbit orbit = locate_orbit(grid, f, cfg);
    SpectrumReport rep = period_map_spectrum(
        f, orbit, cfg.params.value("top_k", 8),
        ClassifyOptions{cfg.unit_circle_margin});
    results["period"] = orbit.period;
    results["closure_defect"] = orbit.closure_defect;
    results["degenerate_return_map"] = orbit.degenerate_return_map;
    results["spectrum"] = spectrum_json(rep);

    if (grid.domain().kind == DomainKind::circle) {
        const int kmax = cfg.params.value("mode_table_max_k", 3);
        json modes = json::array();
        for (int k = 0; k <= kmax; ++k) {
            ModeMultiplier mm = circle_mode_multiplier(f, orbit, k);
            modes.push_back({{"mode", k},
                             {"magnitude", mm.magnitude},
                             {"invariance_defect", mm.invariance_defect}});
        }
        results["mode_magnitudes"] = modes;
    }
    write_trajectory_csv(data / "orbit.csv",
                         subsample_trajectory(orbit.samples, 257));
}

ConnectingOrbit connect_impl(const RunConfig& cfg, const Grid& grid,
                             const NonlinearField& f, Equilibrium& source,
                             Equilibrium& target, TangentFrame& source_frame,
                             TangentFrame& target_normals) {
    const json& p = cfg.params;
    require(p.contains("source_guess") && p.contains("target_guess"),
            "config: connection experiments need source_guess and target_guess");
    source = locate_equilibrium(grid, f, cfg, p.at("source_guess"),
                                p.value("source_relax_time", 0.0));
    target = locate_equilibrium(grid, f, cfg, p.at("target_guess"),
                                p.value("target_relax_time", 1.0));
    source_frame = unstable_frame(grid, f, source);
    target_normals = adjoint_stable_normal_frame(grid, f, target);

    ShootOptions sopts;
    sopts.radius = p.value("radius", 1e-3);
    sopts.tube_radius = cfg.tube_radius;
    sopts.max_time = p.value("max_time", 40.0);
    sopts.n_probes = p.value("n_probes", 16);
    sopts.stepper = cfg.solver;
    sopts.stepper.dt = p.value("shoot_dt", cfg.solver.dt);
    return shoot_connection(grid, f, source.state, source_frame, target.state,
                            sopts);
}

void pipeline_connect(const RunConfig& cfg, const Grid& grid,
                      const NonlinearField& f, const fs::path& data,
                      ordered_json& results) {
    Equilibrium source, target;
    TangentFrame source_frame, target_normals;
    ConnectingOrbit conn =
        connect_impl(cfg, grid, f, source, target, source_frame, target_normals);
    write_trajectory_csv(data / "connection.csv",
                         subsample_trajectory(conn.trajectory, 513));
    results["source_residual"] = source.residual;
    results["target_residual"] = target.residual;
    results["source_index"] = source_frame.index();
    results["target_index"] = target_normals.index();
    results["entry_time"] = conn.entry_time;
    json dep = json::array();
    for (int i = 0; i < conn.departure_coords.size(); ++i)
        dep.push_back(conn.departure_coords[i]);
    results["departure_coords"] = dep;
    results["terminal_distance"] =
        grid.norm(conn.trajectory.back() - target.state);
}

void pipeline_transversality(const RunConfig& cfg, const fs::path& data,
                             ordered_json& results) {
    std::vector<std::vector<int>> resolutions;
    if (cfg.params.contains("resolutions"))
        for (const auto& r : cfg.params.at("resolutions"))
            resolutions.push_back({r.get<int>()});
    else
        resolutions.push_back(cfg.resolution);

    json rows = json::array();
    std::vector<std::vector<double>> plot_rows;
    for (const auto& res : resolutions) {
        Grid grid = cfg.make_grid(res);
        NonlinearField f = cfg.make_field();
        Equilibrium source, target;
        TangentFrame source_frame, target_normals;
        ConnectingOrbit conn = connect_impl(cfg, grid, f, source, target,
                                            source_frame, target_normals);
        TransversalityOptions topts;
        topts.margin = cfg.transversality_margin;
        topts.tangent = TangentOptions{cfg.solver.scheme, cfg.solver.dt};
        TransversalityReport rep = transversality_report(
            f, conn, source_frame, target_normals, topts);

        json row;
        row["n"] = res[0];
        row["decision"] = to_string(rep.decision);
        row["smallest_singular_value"] = rep.smallest_singular_value;
        row["decision_stable_in_t_star"] = rep.decision_stable;
        row["sigma_min_samples"] = rep.sigma_min_samples;
        row["t_star_samples"] = rep.t_star_samples;
        json pairing = json::array();
        for (int r = 0; r < rep.pairing.rows(); ++r) {
            json prow = json::array();
            for (int c = 0; c < rep.pairing.cols(); ++c)
                prow.push_back(rep.pairing(r, c));
            pairing.push_back(prow);
        }
        row["pairing_matrix"] = pairing;
        row["singular_values"] = rep.singular_values;
        row["entry_time"] = conn.entry_time;
        rows.push_back(row);
        plot_rows.push_back({static_cast<double>(res[0]),
                             rep.smallest_singular_value});
    }
    results["margin"] = cfg.transversality_margin;
    results["by_resolution"] = rows;
    write_csv(data / "transversality_refinement.csv", {"n", "sigma_min"},
              plot_rows);
}

void pipeline_nodal(const RunConfig& cfg, const fs::path& data,
                    ordered_json& results) {
    const json& p = cfg.params;
    const std::string mode = p.value("mode", std::string("orbit_pt"));
    NodalThresholds th;
    th.eta_v = cfg.eta_v;
    th.eta_g = cfg.eta_g;
    th.q_max = p.value("q_max", 4);

    auto scan_with = [&](const Grid& grid, const NonlinearField& f,
                         double dt_scale) {
        SampledFamily family;
        family.grid = &grid;
        family.taus = {0.0};
        if (mode == "orbit_pt") {
            RunConfig sub = cfg;
            sub.solver.dt *= dt_scale;
            if (sub.params.contains("dt_fine"))
                sub.params["dt_fine"] =
                    sub.params.at("dt_fine").get<double>() * dt_scale;
            if (sub.params.contains("dt_coarse"))
                sub.params["dt_coarse"] =
                    sub.params.at("dt_coarse").get<double>() * dt_scale;
            PeriodicOrbit orbit = locate_orbit(grid, f, sub);
            TrajectorySegment sub_traj = subsample_trajectory(
                orbit.samples, p.value("time_samples", 201));
            family.times = sub_traj.times;
            family.values.emplace_back();
            for (const Vec& u : sub_traj.states)
                family.values[0].push_back(semiflow_rhs(grid, f, u));
        } else if (mode == "difference") {
            require(p.contains("initial_a") && p.contains("initial_b") &&
                        p.contains("T"),
                    "config: nodal difference mode needs initial_a, initial_b, T");
            StepperOptions sopts = cfg.solver;
            sopts.dt *= dt_scale;
            TrajectorySegment ta = integrate(
                grid, f, state_from_expr(grid, p.at("initial_a")),
                p.at("T").get<double>(), sopts);
            TrajectorySegment tb = integrate(
                grid, f, state_from_expr(grid, p.at("initial_b")),
                p.at("T").get<double>(), sopts);
            TrajectorySegment sa =
                subsample_trajectory(ta, p.value("time_samples", 201));
            TrajectorySegment sb =
                subsample_trajectory(tb, p.value("time_samples", 201));
            family.times = sa.times;
            family.values.emplace_back();
            for (size_t j = 0; j < sa.states.size(); ++j)
                family.values[0].push_back(sb.states[j] - sa.states[j]);
        } else {
            throw ConfigError("nodal: unknown mode '" + mode + "'");
        }
        return singular_nodal_scan(family, th);
    };

    Grid grid = cfg.make_grid();
    NonlinearField f = cfg.make_field();
    SingularNodalSet set = scan_with(grid, f, 1.0);
    results["points"] = set.points.size();
    results["projection_cover"] = set.projection_cover;
    results["tns_estimate"] = tns_estimate(set);
    results["tns_label"] = "empirical proxy";
    results["unique_continuation_alarms"] = set.unique_continuation_alarms;

    std::vector<std::vector<double>> cloud;
    for (const SingularPoint& pt : set.points)
        cloud.push_back({grid.nodes()(pt.node, 0), pt.t, pt.tau,
                         static_cast<double>(pt.stratum)});
    write_csv(data / "singular_points.csv", {"x", "t", "tau", "q"}, cloud);

    if (p.value("refine", true)) {
        std::vector<int> res2;
        for (int r : cfg.resolution) res2.push_back(2 * r);
        Grid grid2 = cfg.make_grid(res2);
        SingularNodalSet set2 = scan_with(grid2, f, 0.5);
        results["refined"] = {{"points", set2.points.size()},
                              {"projection_cover", set2.projection_cover},
                              {"tns_estimate", tns_estimate(set2)}};
    }
}

void pipeline_observe(const RunConfig& cfg, const Grid& grid,
                      const NonlinearField& f, ordered_json& results) {
    const json& p = cfg.params;
    const std::string mode = p.value("mode", std::string("injectivity"));
    ObservabilityLimits limits;
    limits.eta = p.value("eta", cfg.eta_v);

    auto report_json = [](const ObservabilityReport& rep) {
        json j;
        j["good_fraction"] = rep.good_fraction;
        json probes = json::array();
        for (const ProbeReport& pr : rep.probes) {
            json pj;
            pj["node"] = pr.node;
            pj["good"] = pr.good;
            pj["n_violations"] = pr.violations.size();
            pj["derivative_zero_times"] = pr.derivative_zero_times;
            json viol = json::array();
            for (auto [a, b] : pr.violations) viol.push_back({a, b});
            pj["violations"] = viol;
            probes.push_back(pj);
        }
        j["probes"] = probes;
        return j;
    };

    if (mode == "injectivity") {
        require(p.contains("initial") && p.contains("T"),
                "config: observe injectivity needs initial and T");
        StepperOptions sopts = cfg.solver;
        sopts.stride = 1;
        TrajectorySegment traj = integrate(
            grid, f, state_from_expr(grid, p.at("initial")),
            p.at("T").get<double>(), sopts);
        TrajectorySegment sub =
            subsample_trajectory(traj, p.value("time_samples", 201));
        results["report"] =
            report_json(injectivity_scan(f, sub, pick_probes(grid, p, cfg.seed),
                                         limits));
    } else if (mode == "period") {
        PeriodicOrbit orbit = locate_orbit(grid, f, cfg);
        TrajectorySegment sub =
            subsample_trajectory(orbit.samples, p.value("time_samples", 201));
        results["period"] = orbit.period;
        results["report"] = report_json(period_observability(
            f, sub, orbit.period, pick_probes(grid, p, cfg.seed), limits));
    } else if (mode == "separation") {
        PeriodicOrbit orbit = locate_orbit(grid, f, cfg);
        require(p.contains("other_guess"),
                "config: observe separation needs other_guess");
        Equilibrium other = locate_equilibrium(grid, f, cfg, p.at("other_guess"),
                                               p.value("other_relax_time", 0.0));
        TrajectorySegment sub =
            subsample_trajectory(orbit.samples, p.value("time_samples", 101));
        TrajectorySegment other_traj;
        other_traj.grid = &grid;
        other_traj.times = {0.0, orbit.period};
        other_traj.states = {other.state, other.state};
        other_traj.scheme = sub.scheme;
        other_traj.dt = orbit.period;
        SeparationReport rep =
            separation_scan(sub, other_traj, pick_probes(grid, p, cfg.seed),
                            limits.eta);
        results["all_separated"] = rep.all_separated;
        json md = json::array();
        for (double d : rep.min_distance) md.push_back(d);
        results["min_distance"] = md;
    } else {
        throw ConfigError("observe: unknown mode '" + mode + "'");
    }
}

TripleBox auto_box(const Grid& grid, const TrajectorySegment& traj, double pad) {
    const int tdim = 2 * grid.dim() + 1;
    Vec lo = Vec::Constant(tdim, std::numeric_limits<double>::infinity());
    Vec hi = Vec::Constant(tdim, -std::numeric_limits<double>::infinity());
    for (const Vec& u : traj.states) {
        std::vector<Vec> grads = gradient(grid, u);
        for (int i = 0; i < grid.size(); ++i) {
            EvalPoint at;
            at.dim = grid.dim();
            at.x = grid.node(i);
            at.u = u[i];
            for (int ax = 0; ax < grid.dim(); ++ax) at.p[ax] = grads[static_cast<size_t>(ax)][i];
            const Vec y = triple_coords(at);
            lo = lo.cwiseMin(y);
            hi = hi.cwiseMax(y);
        }
    }
    const Vec margin = pad * (hi - lo).cwiseMax(Vec::Constant(tdim, 0.1));
    return TripleBox{lo - margin, hi + margin};
}

void pipeline_perturb(const RunConfig& cfg, const Grid& grid,
                      const NonlinearField& f, ordered_json& results) {
    const json& p = cfg.params;
    const std::string mode = p.value("mode", std::string("bump"));
    if (mode == "colinear") {
        PeriodicOrbit orbit = locate_orbit(grid, f, cfg);
        std::vector<double> vc = p.value("V", std::vector<double>{1.0, 0.0});
        require(vc.size() == static_cast<size_t>(grid.dim()) + 1,
                "config: V must have dim+1 components");
        Vec vconst(static_cast<int>(vc.size()));
        for (size_t i = 0; i < vc.size(); ++i) vconst[static_cast<int>(i)] = vc[i];
        EvaluationVectorField V = [vconst](const Eigen::Vector2d&, double) {
            return vconst;
        };
        ColinearPerturbation cp = colinear_avoiding_perturbation(f, orbit, V);
        results["period"] = orbit.period;
        results["base_x"] = cp.base_x[0];
        results["base_t"] = cp.base_t;
        results["widths"] = {cp.width_x, cp.width_t, cp.width_tau};
        results["certificates"] = {
            {"on_orbit_max", cp.certificate_on_orbit},
            {"pairing", cp.certificate_pairing},
            {"pairing_refined", cp.certificate_pairing_refined},
            {"sign_preserved", (cp.certificate_pairing > 0.0) ==
                                   (cp.certificate_pairing_refined > 0.0)},
            {"worst_jacobian_cond", cp.worst_jacobian_cond}};
        return;
    }
    require(mode == "bump", "perturb: unknown mode '" + mode + "'");
    require(p.contains("initial") && p.contains("T"),
            "config: perturb bump mode needs initial and T");
    StepperOptions sopts = cfg.solver;
    sopts.stride = 1;
    TrajectorySegment traj = integrate(
        grid, f, state_from_expr(grid, p.at("initial")),
        p.at("T").get<double>(), sopts);

    SpaceTimeWindow window;
    const auto& ax = grid.domain().axes[0];
    window.x_lo[0] = p.value("window_x_lo", ax.lo + 0.25 * (ax.hi - ax.lo));
    window.x_hi[0] = p.value("window_x_hi", ax.lo + 0.75 * (ax.hi - ax.lo));
    window.t_lo = p.value("window_t_lo", 0.25 * traj.t_end());
    window.t_hi = p.value("window_t_hi", 0.75 * traj.t_end());
    if (grid.dim() == 2) {
        const auto& ay = grid.domain().axes[1];
        window.x_lo[1] = ay.lo;
        window.x_hi[1] = ay.hi;
    }
    TripleBox box = auto_box(grid, traj, p.value("box_pad", 0.25));

    std::vector<AvoidTube> avoid;
    if (p.contains("avoid_equilibria"))
        for (const auto& g : p.at("avoid_equilibria")) {
            Equilibrium eq = locate_equilibrium(grid, f, cfg,
                                                g.get<std::string>(), 0.0);
            TrajectorySegment ct;
            ct.grid = &grid;
            ct.times = {0.0, 1.0};
            ct.states = {eq.state, eq.state};
            ct.scheme = traj.scheme;
            ct.dt = 1.0;
            auto tubes = evaluation_tubes(ct, p.value("avoid_radius", 0.05));
            avoid.insert(avoid.end(), tubes.begin(), tubes.end());
        }

    BumpBuildOptions bopts;
    bopts.amplitude = p.value("amplitude", 1.0);
    TangentHistory psi_hist;
    if (p.contains("psi")) {
        CoefficientField coeffs = linearize_along(f, traj);
        TangentOptions topts{cfg.solver.scheme, cfg.solver.dt};
        psi_hist = propagate_adjoint_history(
            coeffs, state_from_expr(grid, p.at("psi")), traj.t_end(),
            traj.t_begin(), topts);
        bopts.orientation = &psi_hist;
    }
    PerturbationBump bump = build_bump(traj, window, box, avoid, bopts);
    results["bump_center"] = std::vector<double>(
        bump.center().data(), bump.center().data() + bump.center().size());
    results["bump_widths"] = std::vector<double>(
        bump.widths().data(), bump.widths().data() + bump.widths().size());
    results["bump_sign"] = bump.sign();
    if (p.contains("psi")) {
        TangentOptions topts{cfg.solver.scheme, cfg.solver.dt};
        results["pairing_integral"] = pairing_integral(
            f, traj, bump, state_from_expr(grid, p.at("psi")), topts);
    }
}

void pipeline_derivative_check(const RunConfig& cfg, const Grid& grid,
                               const NonlinearField& f, ordered_json& results) {
    const json& p = cfg.params;
    require(p.contains("initial") && p.contains("m"),
            "config: derivative-check needs params.initial and params.m");
    const double m = p.at("m").get<double>();
    const double eps = p.value("eps", 1e-4);
    StepperOptions sopts = cfg.solver;
    sopts.stride = 1;
    const Vec u0 = state_from_expr(grid, p.at("initial"));
    TrajectorySegment traj = integrate(grid, f, u0, m, sopts);

    SpaceTimeWindow window;
    const auto& ax = grid.domain().axes[0];
    window.x_lo[0] = ax.lo;
    window.x_hi[0] = ax.hi;
    window.t_lo = p.value("window_t_lo", 0.2 * m);
    window.t_hi = p.value("window_t_hi", 0.8 * m);
    if (grid.dim() == 2) {
        const auto& ay = grid.domain().axes[1];
        window.x_lo[1] = ay.lo;
        window.x_hi[1] = ay.hi;
    }
    TripleBox box = auto_box(grid, traj, p.value("box_pad", 0.25));
    PerturbationBump bump = build_bump(traj, window, box, {},
                                       BumpBuildOptions{});
    const Vec psi_m =
        state_from_expr(grid, p.value("psi", std::string("sin(pi*x)")));
    DerivativeCheck check =
        derivative_check(grid, f, u0, m, bump, eps, psi_m, sopts);
    results["integral_value"] = check.integral_value;
    results["fd_value"] = check.fd_value;
    results["fd_relative_error"] = check.fd_error;
    results["duality_mismatch"] = check.duality_mismatch;
    results["eps"] = eps;
}

std::string timestamp_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t tt = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&tt));
    return buf;
}

}  // namespace

TrajectorySegment subsample_trajectory(const TrajectorySegment& traj,
                                       int max_samples) {
    if (traj.size() <= max_samples) return traj;
    TrajectorySegment out;
    out.grid = traj.grid;
    out.scheme = traj.scheme;
    out.dt = traj.dt;
    const int m = traj.size();
    const int stride = (m - 1 + max_samples - 2) / (max_samples - 1);
    for (int j = 0; j < m; j += stride) {
        out.times.push_back(traj.times[static_cast<size_t>(j)]);
        out.states.push_back(traj.states[static_cast<size_t>(j)]);
    }
    if (out.times.back() != traj.times.back()) {
        out.times.push_back(traj.times.back());
        out.states.push_back(traj.states.back());
    }
    return out;
}

int run(const RunConfig& cfg, const std::string& out_dir) {
    const fs::path out(out_dir);
    const fs::path data = out / "data";
    const fs::path plot = out / "plotdata";
    fs::create_directories(data);
    fs::create_directories(plot);

    ordered_json report;
    report["schema_version"] = cfg.schema_version;
    report["experiment"] = cfg.experiment;
    report["config"] = cfg.raw;
    ordered_json results;
    int status = 0;

    try {
        Grid grid = cfg.make_grid();
        NonlinearField f = cfg.make_field();
        write_grid_csv(data / "grid_nodes.csv", grid);
        if (cfg.experiment == "simulate")
            pipeline_simulate(cfg, grid, f, data, plot, results);
        else if (cfg.experiment == "equilibria")
            pipeline_equilibria(cfg, grid, f, data, results);
        else if (cfg.experiment == "spectrum")
            pipeline_spectrum(cfg, grid, f, data, plot, results);
        else if (cfg.experiment == "orbit")
            pipeline_orbit(cfg, grid, f, data, results);
        else if (cfg.experiment == "connect")
            pipeline_connect(cfg, grid, f, data, results);
        else if (cfg.experiment == "transversality")
            pipeline_transversality(cfg, data, results);
        else if (cfg.experiment == "nodal")
            pipeline_nodal(cfg, data, results);
        else if (cfg.experiment == "observe")
            pipeline_observe(cfg, grid, f, results);
        else if (cfg.experiment == "perturb")
            pipeline_perturb(cfg, grid, f, results);
        else if (cfg.experiment == "derivative-check")
            pipeline_derivative_check(cfg, grid, f, results);
        report["status"] = "ok";
    } catch (const BlowUpError& e) {
        report["status"] = "error";
        report["error"] = {{"kind", "blow_up"},
                           {"t_star", e.t_star},
                           {"message", e.what()}};
        status = 2;
    } catch (const SolverError& e) {
        report["status"] = "error";
        report["error"] = {{"kind", "numerical"}, {"message", e.what()}};
        status = 2;
    }
    report["results"] = results;
    report["timestamp"] = timestamp_now();

    std::ofstream rep_out(out / "report.json");
    require(rep_out.good(), "cannot write report.json");
    rep_out << report.dump(2) << "\n";
    return status;
}

}  // namespace parabolax
