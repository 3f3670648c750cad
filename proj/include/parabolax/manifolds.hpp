#pragma once

#include "parabolax/critical.hpp"

namespace parabolax {

/// Orthonormal basis (weighted inner product) of the unstable subspace at a
/// critical element's anchor, or of the adjoint normals to the local stable
/// manifold there. Complex eigenvector pairs are realified before framing.
struct TangentFrame {
    enum class Kind { unstable, adjoint_stable_normal };
    Kind kind = Kind::unstable;
    Mat vectors;  // n x index, W-orthonormal columns
    double anchor_phase = 0.0;
    int index() const { return static_cast<int>(vectors.cols()); }
};

TangentFrame unstable_frame(const Grid& grid, const NonlinearField& f,
                            const CriticalElement& element);
TangentFrame adjoint_stable_normal_frame(const Grid& grid, const NonlinearField& f,
                                         const CriticalElement& element);

struct RateEstimate {
    double growth = 0.0;
    double growth_stderr = 0.0;
    double decay = 0.0;
    double decay_stderr = 0.0;
};

/// Log-linear fits of propagated norms: the leading unstable growth rate
/// (from the frame) and the decay rate of a random stable-complement
/// vector. Throws when the horizon gives fewer than 10 usable samples or
/// when the fit is unstable.
RateEstimate rate_estimate(const Grid& grid, const NonlinearField& f,
                           const CriticalElement& element,
                           const TangentFrame& frame, double horizon,
                           std::uint64_t seed = 7u,
                           const TangentOptions& topts = {});

struct GrowResult {
    std::vector<TrajectorySegment> branches;
    std::vector<Vec> seed_coords;  // frame coordinates of each kept seed
    int dropped_blowup = 0;
};

/// Flow seeds element +- radius * (frame combinations) forward for time m;
/// blow-up seeds are dropped and counted.
GrowResult grow_unstable(const Grid& grid, const NonlinearField& f,
                         const Vec& anchor, const TangentFrame& frame,
                         double radius, int n_seeds, double m_horizon,
                         const StepperOptions& sopts, std::uint64_t seed = 7u);

struct ConnectingOrbit {
    Vec source_anchor;
    Vec target_anchor;
    TrajectorySegment trajectory;  // seed (near source) to entry (near target)
    double entry_time = 0.0;
    Vec departure_coords;  // unstable-frame coordinates of the seed offset
};

struct ShootOptions {
    double radius = 1e-3;
    double tube_radius = 1e-2;
    double max_time = 40.0;
    int n_probes = 16;
    int bisect_iters = 48;
    double settle_rhs_floor = 1e-7;
    StepperOptions stepper;
};

/// Search the unstable sphere of the source for a trajectory entering the
/// target's stable tube. Probes the frame axes first, then bisects between
/// probes that settle at different attractors while tracking the closest
/// approach to the target.
ConnectingOrbit shoot_connection(const Grid& grid, const NonlinearField& f,
                                 const Vec& source_anchor,
                                 const TangentFrame& source_frame,
                                 const Vec& target_anchor,
                                 const ShootOptions& opts);

struct TransversalityReport {
    enum class Decision { transverse, non_transverse, empty_intersection };
    Mat pairing;  // i(target) x dim(source frame) at t_star
    std::vector<double> singular_values;
    double smallest_singular_value = 0.0;
    Decision decision = Decision::non_transverse;
    double margin = 1e-6;
    double t_star = 0.0;
    std::vector<double> t_star_samples;
    std::vector<double> sigma_min_samples;
    bool decision_stable = true;
};

std::string to_string(TransversalityReport::Decision d);

struct TransversalityOptions {
    double margin = 1e-6;
    int n_tstar_samples = 5;
    double reorth_interval = 0.1;
    TangentOptions tangent;
};

/// Pairing certificate: the source unstable frame is propagated forward
/// along the connecting orbit, the target adjoint normals backward from the
/// entry time; both are orthonormalized at the matching time and paired.
/// Transverse iff rows <= cols and the smallest singular value of the
/// pairing clears the margin.
TransversalityReport transversality_report(const NonlinearField& f,
                                           const ConnectingOrbit& orbit,
                                           const TangentFrame& source_frame,
                                           const TangentFrame& target_normals,
                                           const TransversalityOptions& opts = {});

}  // namespace parabolax
