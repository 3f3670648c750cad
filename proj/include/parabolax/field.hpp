#pragma once

#include <functional>
#include <random>
#include <string>

#include "parabolax/expr.hpp"
#include "parabolax/types.hpp"

namespace parabolax {

/// Argument bundle for pointwise field evaluation: position, value, gradient.
struct EvalPoint {
    Eigen::Vector2d x = Eigen::Vector2d::Zero();
    double u = 0.0;
    Eigen::Vector2d p = Eigen::Vector2d::Zero();
    int dim = 1;
};

/// The nonlinearity f(x,u,∇u) together with its exact first partials.
/// Values are immutable and reentrant; copies share the underlying closures.
struct NonlinearField {
    std::string description;
    int dim = 1;
    bool depends_on_p = false;
    bool depends_on_x = false;
    std::function<double(const EvalPoint&)> f;
    std::function<double(const EvalPoint&)> f_u;
    std::function<Eigen::Vector2d(const EvalPoint&)> f_p;
};

double eval_field(const NonlinearField& f, const EvalPoint& at);
std::pair<double, Eigen::Vector2d> partials(const NonlinearField& f,
                                            const EvalPoint& at);

// Built-in catalog.
NonlinearField zero_field(int dim = 1);
NonlinearField chafee_infante(double lambda);
NonlinearField linear_rotating(double c);
NonlinearField polynomial_field(const std::string& expr, int dim = 1);

/// Maximum relative mismatch between the stored partials and centered
/// finite differences of f over random probes (step 1e-4).
double partials_consistency(const NonlinearField& f, std::uint64_t seed,
                            int n_probes, double box = 2.0);

}  // namespace parabolax
