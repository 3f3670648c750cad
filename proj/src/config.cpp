#include "parabolax/config.hpp"

#include <fstream>
#include <set>

#include "parabolax/expr.hpp"

namespace parabolax {

namespace {

using nlohmann::json;

Bc bc_from_string(const std::string& s) {
    if (s == "dirichlet") return Bc::dirichlet;
    if (s == "neumann") return Bc::neumann;
    if (s == "periodic") return Bc::periodic;
    throw ConfigError("unknown boundary condition '" + s + "'");
}

DomainSpec domain_from_json(const json& j) {
    require(j.is_object() && j.contains("kind"), "config: domain.kind missing");
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "interval") {
        const double a = j.value("a", 0.0);
        const double b = j.value("b", 1.0);
        if (j.contains("bc_lo") || j.contains("bc_hi"))
            return DomainSpec::interval(
                a, b, bc_from_string(j.at("bc_lo").get<std::string>()),
                bc_from_string(j.at("bc_hi").get<std::string>()));
        const std::string bc = j.value("bc", std::string("dirichlet"));
        require(bc != "periodic",
                "config: periodic bc on an interval; use kind=circle");
        return DomainSpec::interval(a, b, bc_from_string(bc));
    }
    if (kind == "circle") {
        require(!j.contains("bc") || j.at("bc").get<std::string>() == "periodic",
                "config: circle forces periodic bc");
        return DomainSpec::circle(j.value("length", 2.0 * 3.14159265358979323846));
    }
    if (kind == "rectangle") {
        return DomainSpec::rectangle(
            j.value("ax", 0.0), j.value("bx", 1.0), j.value("ay", 0.0),
            j.value("by", 1.0), bc_from_string(j.value("bcx", std::string("dirichlet"))),
            bc_from_string(j.value("bcy", std::string("dirichlet"))));
    }
    throw ConfigError("unknown domain kind '" + kind + "'");
}

const std::set<std::string> kExperiments = {
    "simulate", "equilibria", "orbit",     "spectrum",        "connect",
    "transversality", "nodal", "observe",  "perturb",         "derivative-check"};

}  // namespace

NonlinearField field_from_json(const nlohmann::json& spec, int dim) {
    require(spec.is_object() && spec.contains("name"),
            "config: field.name missing");
    const std::string name = spec.at("name").get<std::string>();
    if (name == "zero" || name == "heat") return zero_field(dim);
    if (name == "chafee_infante")
        return chafee_infante(spec.value("lambda", 1.0));
    if (name == "linear_rotating") return linear_rotating(spec.value("c", 1.0));
    if (name == "polynomial") {
        require(spec.contains("expr"), "config: polynomial field needs expr");
        return polynomial_field(spec.at("expr").get<std::string>(), dim);
    }
    throw ConfigError("unknown field '" + name + "'");
}

Vec state_from_expr(const Grid& grid, const std::string& expr) {
    ExprPtr e = Expr::parse(expr, grid.dim());
    require(!e->uses_u() && !e->uses_p(),
            "state expression may only depend on x");
    Vec out(grid.size());
    for (int i = 0; i < grid.size(); ++i)
        out[i] = e->eval(grid.node(i), 0.0, Eigen::Vector2d::Zero());
    return out;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    RunConfig c;
    c.raw = j;
    c.schema_version = j.value("schema_version", 1);
    require(c.schema_version == 1, "config: unsupported schema_version");
    require(j.contains("experiment"), "config: experiment missing");
    c.experiment = j.at("experiment").get<std::string>();
    require(kExperiments.count(c.experiment) == 1,
            "config: unknown experiment '" + c.experiment + "'");
    c.seed = j.value("seed", 0ull);
    require(j.contains("domain"), "config: domain missing");
    c.domain = domain_from_json(j.at("domain"));
    if (j.contains("resolution")) {
        if (j.at("resolution").is_array())
            c.resolution = j.at("resolution").get<std::vector<int>>();
        else
            c.resolution = {j.at("resolution").get<int>()};
    }

    const json solver = j.value("solver", json::object());
    c.solver.scheme = scheme_from_string(solver.value("scheme", std::string("imex2")));
    c.solver.dt = solver.value("dt", 1e-3);
    c.solver.stride = solver.value("stride", 1);
    c.solver.blowup_threshold = solver.value("blowup_threshold", 1e6);
    require(c.solver.dt > 0.0, "config: solver.dt must be positive");
    require(c.solver.stride >= 1, "config: solver.stride must be >= 1");
    require(c.solver.blowup_threshold > 0.0,
            "config: solver.blowup_threshold must be positive");

    const json th = j.value("thresholds", json::object());
    c.newton_tol = th.value("newton_tol", 1e-10);
    c.orbit_closure_tol = th.value("orbit_closure_tol", 1e-6);
    c.unit_circle_margin = th.value("unit_circle_margin", 1e-4);
    c.transversality_margin = th.value("transversality_margin", 1e-6);
    c.tube_radius = th.value("tube_radius", 1e-2);
    c.eta_v = th.value("eta_v", 1e-6);
    c.eta_g = th.value("eta_g", 1e-6);
    for (double v : {c.newton_tol, c.orbit_closure_tol, c.unit_circle_margin,
                     c.transversality_margin, c.tube_radius, c.eta_v, c.eta_g})
        require(v > 0.0, "config: thresholds must be positive");

    require(j.contains("field"), "config: field missing");
    c.field_spec = j.at("field");
    c.params = j.value("params", json::object());
    return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "cannot open config file '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ConfigError("config parse error: " + std::string(e.what()));
    }
    return from_json(j);
}

Grid RunConfig::make_grid() const { return make_grid(resolution); }

Grid RunConfig::make_grid(const std::vector<int>& res) const {
    return build_grid(domain, res);
}

NonlinearField RunConfig::make_field() const {
    return field_from_json(field_spec, domain.dim());
}

}  // namespace parabolax
