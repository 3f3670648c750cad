#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "parabolax/types.hpp"

namespace parabolax {

enum class Bc { dirichlet, neumann, periodic };

enum class DomainKind { interval, circle, rectangle };

std::string to_string(Bc bc);
std::string to_string(DomainKind k);

/// One spatial axis of the domain: extent plus the boundary condition at
/// each end. A periodic axis has bc_lo == bc_hi == periodic.
struct AxisSpec {
    double lo = 0.0;
    double hi = 1.0;
    Bc bc_lo = Bc::dirichlet;
    Bc bc_hi = Bc::dirichlet;

    bool periodic() const { return bc_lo == Bc::periodic; }
};

/// Domain + boundary conditions. Construct through the factory functions,
/// which validate extents and the circle/periodic coupling.
struct DomainSpec {
    DomainKind kind = DomainKind::interval;
    std::vector<AxisSpec> axes;

    static DomainSpec interval(double a, double b, Bc bc);
    static DomainSpec interval(double a, double b, Bc bc_lo, Bc bc_hi);
    static DomainSpec circle(double length);
    static DomainSpec rectangle(double ax, double bx, double ay, double by,
                                Bc bcx, Bc bcy);

    int dim() const { return static_cast<int>(axes.size()); }
    double measure() const;
};

/// Discretization of a single axis: node coordinates and the second- and
/// first-derivative matrices for that axis, with the boundary condition
/// eliminated into the stencils.
struct AxisDisc {
    AxisSpec spec;
    int n = 0;          // unknowns on this axis
    double h = 0.0;     // mesh width of the underlying lattice
    Vec coords;         // node coordinates, strictly increasing
    Mat d2;             // one-dimensional Laplacian block (n x n)
    Mat d1;             // one-dimensional first derivative (n x n)
    double weight = 0.0;  // per-node quadrature weight (uniform on the axis)
};

struct GridLimits {
    int min_per_axis = 16;
};

/// Immutable spatial grid. States are flat vectors of nodal values ordered
/// x-fastest (idx = ix + nx*iy). Operators are dense; the scale of interest
/// stays below a few thousand unknowns.
class Grid {
  public:
    Grid(DomainSpec spec, std::vector<int> resolution, GridLimits limits);

    const DomainSpec& domain() const { return spec_; }
    int dim() const { return spec_.dim(); }
    int size() const { return n_total_; }
    const std::vector<AxisDisc>& axes() const { return axes_; }

    /// Coordinates of node i (length dim()).
    Eigen::Vector2d node(int i) const;
    /// All node coordinates, one row per node.
    const Mat& nodes() const { return nodes_; }

    /// Quadrature weights; positive, uniform, summing to |Omega|.
    const Vec& quadrature_weights() const { return weights_; }
    double weight_scalar() const { return weight_scalar_; }

    double dot(const Vec& v, const Vec& w) const {
        return weight_scalar_ * v.dot(w);
    }
    double norm(const Vec& v) const { return std::sqrt(dot(v, v)); }

    /// Discrete Laplacian honoring the boundary conditions.
    const Mat& laplacian_matrix() const { return lap_; }
    /// First-derivative matrix along the given axis.
    const Mat& d1(int axis) const { return d1_[static_cast<size_t>(axis)]; }

    /// Index of the node closest to x; throws if x is farther than half a
    /// mesh width from every node.
    int locate_node(const Eigen::Vector2d& x) const;

    /// Flatten / unflatten for 2D grids.
    int flat_index(int ix, int iy) const { return ix + axes_[0].n * iy; }

  private:
    DomainSpec spec_;
    std::vector<AxisDisc> axes_;
    int n_total_ = 0;
    Mat nodes_;
    Vec weights_;
    double weight_scalar_ = 0.0;
    Mat lap_;
    std::vector<Mat> d1_;
};

struct LinearOperator {
    enum class Symmetry { self_adjoint, none };
    Mat action;
    Symmetry symmetry = Symmetry::none;
};

/// Build a grid; resolution is per axis (a single entry is broadcast).
Grid build_grid(const DomainSpec& spec, const std::vector<int>& resolution,
                GridLimits limits = {});
Grid build_grid(const DomainSpec& spec, int resolution, GridLimits limits = {});

/// Discrete Laplacian as a LinearOperator (self-adjoint in the weighted
/// inner product for every supported boundary condition).
LinearOperator laplacian(const Grid& grid);

/// Discrete gradient of a state: one grid function per axis.
std::vector<Vec> gradient(const Grid& grid, const Vec& state);

/// Finite-difference weights for the m-th derivative at z from the given
/// nodes (Fornberg's recursion).
Vec fornberg_weights(double z, const Vec& nodes, int deriv_order);

}  // namespace parabolax
