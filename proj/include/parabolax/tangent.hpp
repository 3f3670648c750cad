#pragma once

#include "parabolax/semiflow.hpp"

namespace parabolax {

/// Space-time coefficients (a, b) of the linear equation
/// v_t = L v + a v + b . grad v, sampled on grid x times with linear
/// interpolation in time between samples.
struct CoefficientField {
    enum class Source { linearization, difference, direct };

    const Grid* grid = nullptr;
    std::vector<double> times;
    Mat a;                 // n x m
    std::vector<Mat> b;    // one n x m block per axis
    Source source = Source::direct;

    double t_begin() const { return times.front(); }
    double t_end() const { return times.back(); }

    /// Interpolated coefficient columns at time t (clamped to the window).
    void sample(double t, Vec& a_out, std::vector<Vec>& b_out) const;
};

/// a = f_u(x,u,grad u), b = f_p(x,u,grad u) along a stored trajectory.
CoefficientField linearize_along(const NonlinearField& f,
                                 const TrajectorySegment& traj);

/// Coefficients of the equation satisfied by u2 - u1: the partials of f
/// averaged over the segment between the two solutions (fixed-order Gauss
/// quadrature in the averaging parameter).
CoefficientField difference_coefficients(const NonlinearField& f,
                                         const TrajectorySegment& traj1,
                                         const TrajectorySegment& traj2,
                                         int quad_order = 8);

struct TangentOptions {
    Scheme scheme = Scheme::imex2;
    double dt = 1e-3;
};

struct TangentHistory {
    std::vector<double> times;
    std::vector<Vec> states;
};

/// Forward solution v(t) of the linearized equation with v(s) = v_s.
Vec propagate(const CoefficientField& coeffs, const Vec& v_s, double s, double t,
              const TangentOptions& opts);
TangentHistory propagate_history(const CoefficientField& coeffs, const Vec& v_s,
                                 double s, double t, const TangentOptions& opts);

/// Adjoint solution psi(s) = U(T,s)^* psi_T, realized as the exact
/// transpose of every discrete forward step in the weighted inner product
/// (the grid's weights are uniform, so this is the plain matrix transpose).
/// The pairing <psi(t), v(t)> is then constant along the lattice to
/// round-off.
Vec propagate_adjoint(const CoefficientField& coeffs, const Vec& psi_T, double T,
                      double s, const TangentOptions& opts);
TangentHistory propagate_adjoint_history(const CoefficientField& coeffs,
                                         const Vec& psi_T, double T, double s,
                                         const TangentOptions& opts);

/// max_t |<psi(t),v(t)> - <psi_T,v(T)>| / (||psi_T|| ||v(T)|| + floor).
double duality_defect(const CoefficientField& coeffs, const Vec& v_s,
                      const Vec& psi_T, double s, double T,
                      const TangentOptions& opts);

/// Propagate several columns at once (used to assemble period maps).
Mat propagate_matrix(const CoefficientField& coeffs, const Mat& V_s, double s,
                     double t, const TangentOptions& opts);

/// Adjoint propagation of several columns at once.
Mat propagate_adjoint_matrix(const CoefficientField& coeffs, const Mat& Psi_T,
                             double T, double s, const TangentOptions& opts);

/// Trapezoid-weighted variation-of-constants sum over the propagation
/// lattice: sum_j w_j U(t, t_j) source(t_j). Pairing the result with any
/// adjoint final datum reproduces the trapezoid rule of <psi(s), source(s)>
/// exactly (transposition identity), which is what the derivative
/// cross-checks rely on.
Vec propagate_source_accumulate(const CoefficientField& coeffs,
                                const std::function<Vec(double)>& source,
                                double s, double t, const TangentOptions& opts);

/// Trapezoid weights for a (possibly non-uniform) time lattice.
std::vector<double> trapezoid_weights(const std::vector<double>& times);

/// Monodromy restricted to a fixed subspace: per step the image of the
/// orthonormal basis Q is projected back onto span(Q), so invariant
/// subspaces yield their exact restricted multipliers without contamination
/// from faster-growing directions. invariance_defect reports the worst
/// relative projection loss; it is O(round-off) for truly invariant Q.
struct RestrictedMonodromy {
    Mat factor;        // m x m, scaled so its norm stays O(1)
    double log_scale;  // multipliers = eig(factor) * exp(log_scale)
    double invariance_defect;

    std::vector<Cplx> multipliers() const;
};
RestrictedMonodromy restricted_monodromy(const CoefficientField& coeffs,
                                         const Mat& Q, double s, double t,
                                         const TangentOptions& opts);

/// Residual of the continuous adjoint equation on a stored adjoint history
/// (centered time differences at interior samples); a discretization
/// diagnostic, not part of any invariant.
double continuous_adjoint_residual(const CoefficientField& coeffs,
                                   const TangentHistory& psi);

/// || (S(T)(u0+eps v0) - S(T)u0)/eps - U(T,0) v0 || / || U(T,0) v0 ||.
double linearization_consistency(const Grid& grid, const NonlinearField& f,
                                 const Vec& u0, const Vec& v0, double T,
                                 double eps, const StepperOptions& opts);

}  // namespace parabolax
