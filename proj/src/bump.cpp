#include "parabolax/bump.hpp"

namespace parabolax {

Vec triple_coords(const EvalPoint& at) {
    Vec y(2 * at.dim + 1);
    for (int i = 0; i < at.dim; ++i) y[i] = at.x[i];
    y[at.dim] = at.u;
    for (int i = 0; i < at.dim; ++i) y[at.dim + 1 + i] = at.p[i];
    return y;
}

bool TripleBox::contains(const Vec& y, double margin) const {
    for (int i = 0; i < y.size(); ++i)
        if (y[i] < lo[i] + margin || y[i] > hi[i] - margin) return false;
    return true;
}

namespace {

// Distance from an axis-aligned box to a point.
double box_point_distance(const Vec& lo, const Vec& hi, const Vec& p) {
    double d2 = 0.0;
    for (int i = 0; i < p.size(); ++i) {
        double delta = 0.0;
        if (p[i] < lo[i]) delta = lo[i] - p[i];
        else if (p[i] > hi[i]) delta = p[i] - hi[i];
        d2 += delta * delta;
    }
    return std::sqrt(d2);
}

inline double mollifier(double s) {
    const double t = 1.0 - s * s;
    if (t <= 0.0) return 0.0;
    return std::exp(1.0 - 1.0 / t);
}

// d/ds log(mollifier) = -2s/(1-s^2)^2; only valid inside the support.
inline double mollifier_log_slope(double s) {
    const double t = 1.0 - s * s;
    return -2.0 * s / (t * t);
}

}  // namespace

PerturbationBump PerturbationBump::build(int dim, const TripleBox& support_limit,
                                         const std::vector<AvoidTube>& avoid,
                                         const Vec& center, const Vec& widths,
                                         double amplitude, int sign,
                                         double clearance) {
    const int m = 2 * dim + 1;
    require(center.size() == m && widths.size() == m,
            "bump: center/widths must have 2*dim+1 entries");
    require(widths.minCoeff() > 0.0, "bump: widths must be positive");
    require(amplitude != 0.0, "bump: amplitude must be nonzero");
    require(sign == 1 || sign == -1, "bump: sign must be +1 or -1");
    require(support_limit.lo.size() == m && support_limit.hi.size() == m,
            "bump: support box must have 2*dim+1 entries");

    const Vec lo = center - widths;
    const Vec hi = center + widths;
    for (int i = 0; i < m; ++i)
        require(lo[i] >= support_limit.lo[i] && hi[i] <= support_limit.hi[i],
                "bump: support exceeds the allowed box E");
    for (const auto& tube : avoid) {
        require(tube.center.size() == m, "bump: avoid tube dimension mismatch");
        const double dist = box_point_distance(lo, hi, tube.center);
        require(dist > tube.radius * (1.0 + clearance),
                "bump: support does not clear an avoid tube");
    }

    PerturbationBump b;
    b.dim_ = dim;
    b.center_ = center;
    b.widths_ = widths;
    b.amplitude_ = amplitude;
    b.sign_ = sign;
    return b;
}

double PerturbationBump::profile_and_slopes(const Vec& y, Vec* slopes) const {
    double prod = 1.0;
    for (int i = 0; i < y.size(); ++i) {
        const double s = (y[i] - center_[i]) / widths_[i];
        const double phi = mollifier(s);
        if (phi == 0.0) return 0.0;
        prod *= phi;
        if (slopes) (*slopes)[i] = mollifier_log_slope(s) / widths_[i];
    }
    return prod;
}

double PerturbationBump::value(const EvalPoint& at) const {
    const Vec y = triple_coords(at);
    return sign_ * amplitude_ * profile_and_slopes(y, nullptr);
}

double PerturbationBump::d_u(const EvalPoint& at) const {
    const Vec y = triple_coords(at);
    Vec slopes(y.size());
    const double v = profile_and_slopes(y, &slopes);
    if (v == 0.0) return 0.0;
    return sign_ * amplitude_ * v * slopes[dim_];
}

Eigen::Vector2d PerturbationBump::d_p(const EvalPoint& at) const {
    const Vec y = triple_coords(at);
    Vec slopes(y.size());
    const double v = profile_and_slopes(y, &slopes);
    Eigen::Vector2d g = Eigen::Vector2d::Zero();
    if (v == 0.0) return g;
    for (int i = 0; i < dim_; ++i)
        g[i] = sign_ * amplitude_ * v * slopes[dim_ + 1 + i];
    return g;
}

EvalPoint PerturbationBump::center_point() const {
    EvalPoint at;
    at.dim = dim_;
    for (int i = 0; i < dim_; ++i) at.x[i] = center_[i];
    at.u = center_[dim_];
    for (int i = 0; i < dim_; ++i) at.p[i] = center_[dim_ + 1 + i];
    return at;
}

NonlinearField compose_perturbed(const NonlinearField& f,
                                 const PerturbationBump& g, double eps) {
    require(f.dim == g.dim(), "compose_perturbed: dimension mismatch");
    NonlinearField out;
    out.description = f.description + " + eps*bump";
    out.dim = f.dim;
    out.depends_on_p = true;
    out.depends_on_x = true;
    out.f = [f = f.f, g, eps](const EvalPoint& a) { return f(a) + eps * g.value(a); };
    out.f_u = [fu = f.f_u, g, eps](const EvalPoint& a) {
        return fu(a) + eps * g.d_u(a);
    };
    out.f_p = [fp = f.f_p, g, eps](const EvalPoint& a) {
        return (fp(a) + eps * g.d_p(a)).eval();
    };
    return out;
}

}  // namespace parabolax
