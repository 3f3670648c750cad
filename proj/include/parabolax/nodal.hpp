#pragma once

#include "parabolax/semiflow.hpp"

namespace parabolax {

/// A scalar field sampled on grid x time window x parameter window.
/// The parameter axis may be a singleton.
struct SampledFamily {
    const Grid* grid = nullptr;
    std::vector<double> times;
    std::vector<double> taus;
    std::vector<std::vector<Vec>> values;  // [tau][time] -> nodal values

    const Vec& at(int tau_idx, int time_idx) const {
        return values[static_cast<size_t>(tau_idx)][static_cast<size_t>(time_idx)];
    }
};

struct NodalThresholds {
    double eta_v = 1e-6;  // relative zero threshold on |v|
    double eta_g = 1e-6;  // relative zero threshold on |grad v|
    int q_max = 4;
};

struct SingularPoint {
    int node = 0;
    double t = 0.0;
    double tau = 0.0;
    int stratum = 1;  // derivatives through this order vanish (q >= 1)
};

struct SingularNodalSet {
    std::vector<SingularPoint> points;
    double projection_cover = 0.0;  // fraction of (x,t) cells hit by projection
    double value_scale = 0.0;
    double grad_scale = 0.0;
    int unique_continuation_alarms = 0;  // points of suspected infinite order
};

/// Flag cells where |v| and |grad v| fall below the relative thresholds;
/// estimate each point's vanishing stratum from successive spatial
/// derivatives. Rejects identically-zero families.
SingularNodalSet singular_nodal_scan(const SampledFamily& family,
                                     const NodalThresholds& th = {});

/// 1 - projection_cover: an empirical proxy for the density of points
/// avoiding the singular set (labeled "empirical proxy" in all outputs).
double tns_estimate(const SingularNodalSet& set);

/// Smallest spatial-derivative order q <= q_max whose magnitude at the node
/// clears the threshold (relative to that derivative's window scale);
/// returns q_max + 1 when all orders vanish (unique-continuation alarm).
int vanishing_order(const SampledFamily& family, int node, int time_idx,
                    int tau_idx, const NodalThresholds& th = {});

struct ProbeReport {
    int node = 0;
    std::vector<std::pair<double, double>> violations;  // injectivity pairs, t1<t2
    std::vector<double> derivative_zero_times;
    bool good = false;
};

struct ObservabilityReport {
    std::vector<ProbeReport> probes;
    double good_fraction = 0.0;
    double t_begin = 0.0, t_end = 0.0;
};

struct ObservabilityLimits {
    double eta = 1e-6;              // relative evaluation-match threshold
    double time_resolution = -1.0;  // pairs closer than this are exempt;
                                    // default: 2x the median sample spacing
    double phase_tolerance = 1e-3;  // for pairs equal modulo the period
    int min_samples = 16;
};

/// Pointwise injectivity scan along a trajectory: per probe x0, checks that
/// (d/dt u, grad d/dt u)(x0,t) never vanishes and that
/// t -> (u(x0,t), grad u(x0,t)) takes no value twice.
ObservabilityReport injectivity_scan(const NonlinearField& f,
                                     const TrajectorySegment& traj,
                                     const std::vector<int>& probes,
                                     const ObservabilityLimits& limits = {});

/// As injectivity_scan but modulo the period: pairs with t - t' in
/// Z*period (within the phase tolerance) are exempt.
ObservabilityReport period_observability(const NonlinearField& f,
                                         const TrajectorySegment& orbit_samples,
                                         double period,
                                         const std::vector<int>& probes,
                                         const ObservabilityLimits& limits = {});

struct SeparationReport {
    std::vector<int> probes;
    std::vector<bool> separated;
    std::vector<double> min_distance;
    bool all_separated = false;
};

/// Evaluation-space separation of two trajectories (orbit vs orbit, or
/// orbit vs equilibrium sampled as a constant trajectory): per probe, the
/// minimum over all time pairs of the evaluation-triple distance.
SeparationReport separation_scan(const TrajectorySegment& a,
                                 const TrajectorySegment& b,
                                 const std::vector<int>& probes,
                                 double eta = 1e-6);

}  // namespace parabolax
