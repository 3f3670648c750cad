#pragma once

#include "parabolax/config.hpp"

namespace parabolax {

/// Execute the configured experiment pipeline. Writes report.json,
/// data/*.csv and plotdata/*.csv under out_dir. Returns the exit status:
/// 0 on success, 2 on numerical failure (an error report is still
/// written). Configuration errors throw ConfigError (exit 1 in the CLI).
/// All randomized choices derive from the config seed; rerunning with the
/// same seed reproduces every output byte except the timestamp field.
int run(const RunConfig& config, const std::string& out_dir);

/// Trajectory down-sampled to at most max_samples states (endpoints kept).
TrajectorySegment subsample_trajectory(const TrajectorySegment& traj,
                                       int max_samples);

}  // namespace parabolax
