#pragma once

#include <vector>

#include "parabolax/field.hpp"
#include "parabolax/types.hpp"

namespace parabolax {

/// Coordinates in evaluation space: (x_1..x_d, u, p_1..p_d), size 2d+1.
Vec triple_coords(const EvalPoint& at);

/// Axis-aligned box in evaluation space.
struct TripleBox {
    Vec lo, hi;
    bool contains(const Vec& y, double margin = 0.0) const;
};

/// Ball in evaluation space used to keep a bump away from protected data
/// (critical elements, off-window trajectory samples).
struct AvoidTube {
    Vec center;
    double radius = 0.0;
};

/// Smooth compactly supported perturbation of the nonlinearity: a tensor
/// product of mollifiers exp(1 - 1/(1-s^2)) per evaluation-space axis.
/// Exactly zero outside its support box and on all avoid tubes.
class PerturbationBump {
  public:
    /// Throws ConfigError unless the support box (center +- widths) lies in
    /// E and clears every avoid tube by the given relative margin.
    static PerturbationBump build(int dim, const TripleBox& support_limit,
                                  const std::vector<AvoidTube>& avoid,
                                  const Vec& center, const Vec& widths,
                                  double amplitude, int sign,
                                  double clearance = 0.1);

    double value(const EvalPoint& at) const;
    double d_u(const EvalPoint& at) const;
    Eigen::Vector2d d_p(const EvalPoint& at) const;

    int dim() const { return dim_; }
    const Vec& center() const { return center_; }
    const Vec& widths() const { return widths_; }
    double amplitude() const { return sign_ * amplitude_; }
    int sign() const { return sign_; }
    void flip_sign() { sign_ = -sign_; }

    /// Center as an evaluation point.
    EvalPoint center_point() const;

  private:
    PerturbationBump() = default;

    // Profile value and its logarithmic slope factor per axis.
    double profile_and_slopes(const Vec& y, Vec* slopes) const;

    int dim_ = 1;
    Vec center_, widths_;
    double amplitude_ = 1.0;
    int sign_ = 1;
};

/// f + eps * g with partials summed; f is unchanged.
NonlinearField compose_perturbed(const NonlinearField& f,
                                 const PerturbationBump& g, double eps);

}  // namespace parabolax
