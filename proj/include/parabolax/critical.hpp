#pragma once

#include <optional>
#include <variant>

#include "parabolax/tangent.hpp"

namespace parabolax {

/// Multipliers and hyperbolicity data of a critical element. For equilibria
/// the multipliers are exp(lambda * tau_ref) with the eigenvalues lambda of
/// the linearized operator also recorded; for periodic orbits they are the
/// Floquet multipliers of the period map.
struct SpectrumReport {
    std::vector<Cplx> multipliers;   // sorted by modulus, descending
    std::vector<Cplx> eigenvalues;   // equilibria only (same order as multipliers)
    double tau_ref = 1.0;
    int morse_index = 0;
    int trivial_index = -1;                     // periodic orbits only
    double trivial_multiplier_residual = -1.0;  // periodic orbits only
    bool is_simple = false;
    bool is_hyperbolic = false;
    bool is_degenerate = false;
    double gap = 0.0;  // min distance of nontrivial |mu| to 1
};

struct ClassifyOptions {
    double unit_circle_margin = 1e-4;
};

/// Thresholded hyperbolicity flags; ambiguous cases within the margin get
/// the degenerate flag instead of a hyperbolicity claim.
void classify(SpectrumReport& report, bool periodic,
              const ClassifyOptions& opts = {});

struct Equilibrium {
    Vec state;
    double residual = 0.0;
    std::optional<SpectrumReport> spectrum;
};

struct NewtonOptions {
    int max_iter = 60;
    double tol = 1e-10;
    double singular_rcond = 1e-12;
};

/// Newton iteration on L e + f(x,e,grad e) = 0 with the analytic Jacobian.
Equilibrium find_equilibrium(const Grid& grid, const NonlinearField& f,
                             const Vec& guess, const NewtonOptions& opts = {});

/// Dense linearized operator L + f_u + f_p . grad at the given state.
Mat linearized_operator(const Grid& grid, const NonlinearField& f, const Vec& e);

SpectrumReport equilibrium_spectrum(const Grid& grid, const NonlinearField& f,
                                    const Equilibrium& e, int top_k = 16,
                                    double tau_ref = 1.0,
                                    const ClassifyOptions& copts = {});

struct PoincareSection {
    Vec anchor;
    Vec normal;  // unit in the weighted inner product
};

struct PeriodicOrbit {
    TrajectorySegment samples;  // one period, every step stored
    double period = 0.0;
    PoincareSection section;
    double closure_defect = 0.0;
    bool degenerate_return_map = false;
    std::optional<SpectrumReport> spectrum;
};

struct OrbitOptions {
    Scheme scheme = Scheme::imex2;
    double dt_coarse = 2e-3;
    double dt_fine = 2e-4;
    double closure_tol = 1e-6;
    int max_iter = 25;
    double max_return_time = 100.0;
    int minimality_divisor_max = 6;
    double equilibrium_rhs_floor = 1e-8;
};

/// Poincare-section Newton for a periodic orbit; unknowns are the section
/// point and the return time. Degenerate return maps (orbit families) are
/// handled by minimum-norm SVD steps and flagged.
PeriodicOrbit find_periodic_orbit(const Grid& grid, const NonlinearField& f,
                                  const Vec& guess, double guess_period,
                                  const OrbitOptions& opts = {});

/// Dense period map Pi(omega,0) along the stored orbit.
Mat period_map_matrix(const NonlinearField& f, const PeriodicOrbit& orbit,
                      std::optional<double> dt = std::nullopt);

SpectrumReport period_map_spectrum(const NonlinearField& f,
                                   const PeriodicOrbit& orbit, int top_k = 16,
                                   const ClassifyOptions& copts = {},
                                   std::optional<double> dt = std::nullopt);

/// Restricted Floquet magnitude of the Fourier pair {cos(k th), sin(k th)}
/// on a circle grid (k >= 1), or of the constant mode (k = 0); valid when
/// the pair spans an invariant subspace of the period map, with the
/// invariance defect reported alongside.
struct ModeMultiplier {
    int mode = 0;
    double magnitude = 0.0;
    double invariance_defect = 0.0;
};
ModeMultiplier circle_mode_multiplier(const NonlinearField& f,
                                      const PeriodicOrbit& orbit, int mode,
                                      std::optional<double> dt = std::nullopt);

using CriticalElement = std::variant<Equilibrium, PeriodicOrbit>;

struct ContinuationPoint {
    double eps = 0.0;
    CriticalElement element;
    SpectrumReport spectrum;
};

struct ContinuationOptions {
    NewtonOptions newton;
    OrbitOptions orbit;
    int spectrum_top_k = 8;
    ClassifyOptions classify;
};

/// Predictor-corrector continuation of a critical element along a family
/// eps -> f_eps. Throws ContinuationLost when a corrector fails mid-path.
std::vector<ContinuationPoint> continue_element(
    const Grid& grid, const std::function<NonlinearField(double)>& family,
    const CriticalElement& start, const std::vector<double>& eps_grid,
    const ContinuationOptions& opts = {});

}  // namespace parabolax
