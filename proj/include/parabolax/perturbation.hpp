#pragma once

#include "parabolax/bump.hpp"
#include "parabolax/critical.hpp"

namespace parabolax {

/// Axis-aligned window in space-time used to localize perturbations.
struct SpaceTimeWindow {
    Eigen::Vector2d x_lo = Eigen::Vector2d::Zero();
    Eigen::Vector2d x_hi = Eigen::Vector2d::Zero();
    double t_lo = 0.0;
    double t_hi = 0.0;
    bool contains(const Eigen::Vector2d& x, double t, int dim) const;
};

/// Balls around the evaluation triples of a trajectory; used as the
/// protected set that constructed bumps must avoid.
std::vector<AvoidTube> evaluation_tubes(const TrajectorySegment& traj,
                                        double radius, double inflation = 1.5,
                                        int max_samples = 400);

struct BumpBuildOptions {
    double amplitude = 1.0;
    double clearance = 0.1;     // relative margin kept from avoid tubes
    double width_safety = 0.4;  // fraction of the free separation used
    double interior_margin = 0.05;  // relative margin kept inside E
    // Adjoint samples on the trajectory lattice; when given, the bump sign
    // is chosen to make the pairing integral positive.
    const TangentHistory* orientation = nullptr;
};

/// Evaluation-space bump centered on an admissible trajectory sample inside
/// the window: supported in E, vanishing on the avoid tubes, and with the
/// composed map (x,t) -> h(x,u,grad u) nonzero only for (x,t) in the window
/// (verified against every stored sample). Throws NoGoodPointError when no
/// admissible center exists.
PerturbationBump build_bump(const TrajectorySegment& traj,
                            const SpaceTimeWindow& window, const TripleBox& E,
                            const std::vector<AvoidTube>& avoid,
                            const BumpBuildOptions& opts = {});

/// Composed values h(x_i, u(x_i), grad u(x_i)) of a bump over a state.
Vec composed_bump_values(const Grid& grid, const PerturbationBump& h,
                         const Vec& state);

/// int_0^m <psi(s), h(.,u(.,s),grad u(.,s))> ds with psi the transpose
/// adjoint of the linearization along the trajectory (trapezoid in s).
double pairing_integral(const NonlinearField& f, const TrajectorySegment& traj,
                        const PerturbationBump& h, const Vec& psi_m,
                        const TangentOptions& topts);

/// Variation-of-constants derivative of the flow with respect to the
/// nonlinearity: D_g Phi(u0,g) . h = int_0^m U(m,s) h(.,u(.,s),grad u(.,s)) ds,
/// with the same trapezoid lattice as pairing_integral so that
/// <psi_m, flow_derivative> equals the pairing integral to round-off.
Vec flow_derivative_wrt_f(const NonlinearField& f, const TrajectorySegment& traj,
                          const PerturbationBump& h, const TangentOptions& topts);

struct DerivativeCheck {
    double fd_error = 0.0;        // relative, vs centered differences
    double duality_mismatch = 0.0;  // relative, pairing vs <psi_m, D.h>
    double integral_value = 0.0;
    double fd_value = 0.0;  // <psi_m, centered-difference flow change>/(2 eps)
};

/// The module's central cross-check: centered-difference validation of the
/// flow derivative and the adjoint duality identity, in one report.
DerivativeCheck derivative_check(const Grid& grid, const NonlinearField& f,
                                 const Vec& u0, double m,
                                 const PerturbationBump& h, double eps,
                                 const Vec& psi_m, const StepperOptions& sopts);

/// Vector field V(x,t) in evaluation space (components (V_u, V_p)).
using EvaluationVectorField =
    std::function<Vec(const Eigen::Vector2d& x, double t)>;

struct ColinearOptions {
    double amplitude = 1.0;
    double width_scale = 1.0;  // shrinks the chart support (support studies)
    double independence_floor = 0.05;  // relative area threshold for the scan
    double newton_tol = 1e-12;
    int newton_max_iter = 50;
    double jacobian_cond_max = 1e6;
    int max_shrink = 6;
    double on_orbit_tol = 1e-10;
};

struct ColinearPerturbation {
    NonlinearField g;
    Eigen::Vector2d base_x;
    double base_t = 0.0;
    double width_x = 0.0, width_t = 0.0, width_tau = 0.0;
    double certificate_on_orbit = 0.0;   // max |g| over sampled orbit triples
    double certificate_on_orbit_refined = 0.0;  // on a 2x refined sampling
    double certificate_pairing = 0.0;    // int int (g_u,g_p).V dx dt
    double certificate_pairing_refined = 0.0;  // on a 2x refined sampling
    double worst_jacobian_cond = 0.0;
};

/// Constructive perturbation vanishing on a periodic orbit's evaluation set
/// while pairing nontrivially with V: fibers a neighborhood of the orbit's
/// evaluation surface by the V direction, inverts the local chart by damped
/// Newton, and sets g = (chi * tau) o h^{-1}. Throws ColinearEverywhereError
/// when V is colinear to (p_t, grad p_t) at every sample.
ColinearPerturbation colinear_avoiding_perturbation(
    const NonlinearField& f, const PeriodicOrbit& orbit,
    const EvaluationVectorField& V, const ColinearOptions& opts = {});

/// Pointwise colinearity diagnostic between two evaluation-space fields
/// sampled on the grid x times: per sample, the smaller singular value of
/// [(v1, grad v1) | (v2, grad v2)] relative to the larger; the maximum over
/// samples is ~0 iff the fields are everywhere colinear.
double colinearity_defect(const Grid& grid, const std::vector<Vec>& v1,
                          const std::vector<Vec>& v2);

struct RestorationExperiment {
    double predicted = 0.0;  // eps * pairing integral
    double measured_plus = 0.0;
    double measured_minus = 0.0;
    bool sign_agreement = false;
    double scaling_ratio = 0.0;  // measured_plus / predicted
};

/// First-order response of the stable-normal pairing to f -> f + eps h
/// along a connecting trajectory, against the prediction from the flow
/// derivative.
RestorationExperiment transversality_restoration(
    const Grid& grid, const NonlinearField& f, const TrajectorySegment& conn,
    const PerturbationBump& h, const Vec& psi_entry, double eps,
    const StepperOptions& sopts);

}  // namespace parabolax
