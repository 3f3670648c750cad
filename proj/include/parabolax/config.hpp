#pragma once

#include <cstdint>
#include <string>

#include "parabolax/field.hpp"
#include "parabolax/grid.hpp"
#include "parabolax/semiflow.hpp"

// Single-header nlohmann/json from vendor/.
#include "json.hpp"

namespace parabolax {

/// Parsed and validated run configuration. The JSON schema is documented in
/// the repository README; unknown experiments and non-positive tolerances
/// are rejected at parse time.
struct RunConfig {
    int schema_version = 1;
    std::string experiment;
    std::uint64_t seed = 0;

    DomainSpec domain = DomainSpec::interval(0.0, 1.0, Bc::dirichlet);
    std::vector<int> resolution{64};

    StepperOptions solver;
    double newton_tol = 1e-10;
    double orbit_closure_tol = 1e-6;
    double unit_circle_margin = 1e-4;
    double transversality_margin = 1e-6;
    double tube_radius = 1e-2;
    double eta_v = 1e-6;
    double eta_g = 1e-6;

    nlohmann::json field_spec;
    nlohmann::json params;  // experiment-specific block
    nlohmann::json raw;     // full resolved config for the report audit trail

    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig from_file(const std::string& path);

    Grid make_grid() const;
    Grid make_grid(const std::vector<int>& res) const;
    NonlinearField make_field() const;
};

/// Field catalog dispatch ("zero", "heat", "chafee_infante",
/// "linear_rotating", "polynomial").
NonlinearField field_from_json(const nlohmann::json& spec, int dim);

/// Nodal values of an expression in x on the grid.
Vec state_from_expr(const Grid& grid, const std::string& expr);

}  // namespace parabolax
