#pragma once

#include <string>
#include <vector>

#include "parabolax/field.hpp"
#include "parabolax/grid.hpp"

namespace parabolax {

/// Time stepping schemes. Both treat the Laplacian implicitly and the
/// nonlinearity explicitly, and both are one-step maps so that the discrete
/// adjoint is an exact per-step transpose.
///   imex1: backward Euler on L, explicit Euler on f (first order).
///   imex2: Crank-Nicolson on L, Heun predictor-corrector on f
///          (second order; the default).
enum class Scheme { imex1, imex2 };

std::string to_string(Scheme s);
Scheme scheme_from_string(const std::string& s);

struct StepperOptions {
    Scheme scheme = Scheme::imex2;
    double dt = 1e-3;
    double blowup_threshold = 1e6;
    int stride = 1;  // keep every stride-th state (the final one always)
};

/// Step times for integrating [t0, t1] with step dt; the last step is
/// shortened to land on t1 exactly.
std::vector<double> make_lattice(double t0, double t1, double dt);

/// A stored window of a discrete orbit of S_f(t).
struct TrajectorySegment {
    const Grid* grid = nullptr;
    std::vector<double> times;
    std::vector<Vec> states;
    std::string scheme;
    double dt = 0.0;

    int size() const { return static_cast<int>(times.size()); }
    double t_begin() const { return times.front(); }
    double t_end() const { return times.back(); }
    const Vec& back() const { return states.back(); }

    /// Linear interpolation between stored states.
    Vec state_at(double t) const;
};

/// Integrate u' = L u + f(x,u,grad u) from u0 over [0,T].
/// Throws BlowUpError when the max-norm passes the blow-up threshold and
/// NoConvergenceError when a step produces non-finite values.
TrajectorySegment integrate(const Grid& grid, const NonlinearField& f,
                            const Vec& u0, double T, const StepperOptions& opts);

/// As integrate, but with an arbitrary start time label (states depend only
/// on T - t0 since f is autonomous; the labels matter for bookkeeping).
TrajectorySegment integrate_window(const Grid& grid, const NonlinearField& f,
                                   const Vec& u0, double t0, double t1,
                                   const StepperOptions& opts);

/// Relative semigroup defect ||S(t+s)u0 - S(t)S(s)u0|| / ||S(t+s)u0||.
double semigroup_defect(const Grid& grid, const NonlinearField& f, const Vec& u0,
                        double t, double s, const StepperOptions& opts);

/// Discrete right-hand side L u + f(x,u,grad u); also the exact discrete
/// time derivative used for phase conditions and observability tests.
Vec semiflow_rhs(const Grid& grid, const NonlinearField& f, const Vec& u);

/// The evaluation triple (x0, u(x0), grad u(x0)) at a grid node.
EvalPoint evaluation_map(const Grid& grid, const Vec& state,
                         const Eigen::Vector2d& x0);
EvalPoint evaluation_map_at(const Grid& grid, const Vec& state, int node);

/// Max over steps of the implicit-step residual of a stored trajectory
/// (stride must be 1); a structural self-check.
double step_residual(const Grid& grid, const NonlinearField& f,
                     const TrajectorySegment& traj);

}  // namespace parabolax
