#include "parabolax/grid.hpp"

#include <algorithm>
#include <numbers>

namespace parabolax {

namespace {

constexpr double kPi = std::numbers::pi;

void check_extent(double a, double b, const char* what) {
    require(b > a, std::string(what) + ": extent must be strictly positive");
}

}  // namespace

std::string to_string(Bc bc) {
    switch (bc) {
        case Bc::dirichlet: return "dirichlet";
        case Bc::neumann: return "neumann";
        case Bc::periodic: return "periodic";
    }
    return "?";
}

std::string to_string(DomainKind k) {
    switch (k) {
        case DomainKind::interval: return "interval";
        case DomainKind::circle: return "circle";
        case DomainKind::rectangle: return "rectangle";
    }
    return "?";
}

DomainSpec DomainSpec::interval(double a, double b, Bc bc) {
    return interval(a, b, bc, bc);
}

DomainSpec DomainSpec::interval(double a, double b, Bc bc_lo, Bc bc_hi) {
    check_extent(a, b, "interval");
    require(bc_lo != Bc::periodic && bc_hi != Bc::periodic,
            "interval does not take periodic bc; use circle");
    DomainSpec s;
    s.kind = DomainKind::interval;
    s.axes = {AxisSpec{a, b, bc_lo, bc_hi}};
    return s;
}

DomainSpec DomainSpec::circle(double length) {
    require(length > 0.0, "circle: length must be positive");
    DomainSpec s;
    s.kind = DomainKind::circle;
    s.axes = {AxisSpec{0.0, length, Bc::periodic, Bc::periodic}};
    return s;
}

DomainSpec DomainSpec::rectangle(double ax, double bx, double ay, double by,
                                 Bc bcx, Bc bcy) {
    check_extent(ax, bx, "rectangle x");
    check_extent(ay, by, "rectangle y");
    require(bcx != Bc::periodic && bcy != Bc::periodic,
            "rectangle does not take periodic bc");
    DomainSpec s;
    s.kind = DomainKind::rectangle;
    s.axes = {AxisSpec{ax, bx, bcx, bcx}, AxisSpec{ay, by, bcy, bcy}};
    return s;
}

double DomainSpec::measure() const {
    double m = 1.0;
    for (const auto& ax : axes) m *= (ax.hi - ax.lo);
    return m;
}

Vec fornberg_weights(double z, const Vec& nodes, int deriv_order) {
    const int nd = static_cast<int>(nodes.size()) - 1;
    const int m = deriv_order;
    Mat c = Mat::Zero(nd + 1, m + 1);
    double c1 = 1.0;
    double c4 = nodes[0] - z;
    c(0, 0) = 1.0;
    for (int i = 1; i <= nd; ++i) {
        const int mn = std::min(i, m);
        double c2 = 1.0;
        const double c5 = c4;
        c4 = nodes[i] - z;
        for (int j = 0; j < i; ++j) {
            const double c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if (j == i - 1) {
                for (int k = mn; k >= 1; --k)
                    c(i, k) = c1 * (k * c(i - 1, k - 1) - c5 * c(i - 1, k)) / c2;
                c(i, 0) = -c1 * c5 * c(i - 1, 0) / c2;
            }
            for (int k = mn; k >= 1; --k)
                c(j, k) = (c4 * c(j, k) - k * c(j, k - 1)) / c3;
            c(j, 0) = c4 * c(j, 0) / c3;
        }
        c1 = c2;
    }
    return c.col(m);
}

namespace {

// 5-point Fornberg first-derivative matrix over the given nodes, centered
// where possible and one-sided at the ends.
Mat one_sided_d1(const Vec& coords) {
    const int n = static_cast<int>(coords.size());
    Mat d1 = Mat::Zero(n, n);
    const int width = std::min(5, n);
    for (int i = 0; i < n; ++i) {
        int start = std::clamp(i - width / 2, 0, n - width);
        Vec pts = coords.segment(start, width);
        Vec w = fornberg_weights(coords[i], pts, 1);
        for (int j = 0; j < width; ++j) d1(i, start + j) = w[j];
    }
    return d1;
}

// Vertex-centered interior grid for a dirichlet/dirichlet axis: nodes at
// lo + k*h, k = 1..n, h = (hi-lo)/(n+1); boundary values are zero and are
// eliminated from the stencils.
AxisDisc make_dirichlet_axis(const AxisSpec& spec, int n) {
    AxisDisc ax;
    ax.spec = spec;
    ax.n = n;
    ax.h = (spec.hi - spec.lo) / (n + 1);
    ax.coords = Vec::Zero(n);
    for (int k = 0; k < n; ++k) ax.coords[k] = spec.lo + (k + 1) * ax.h;
    ax.weight = (spec.hi - spec.lo) / n;

    const double ih2 = 1.0 / (ax.h * ax.h);
    Mat b = Mat::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        b(i, i) = -2.0 * ih2;
        if (i > 0) b(i, i - 1) = ih2;
        if (i + 1 < n) b(i, i + 1) = ih2;
    }
    // Fourth-order rational correction: d2 = (I + h^2/12 B)^{-1} B, a
    // function of the symmetric matrix B, hence symmetric itself.
    Mat a = Mat::Identity(n, n) + (ax.h * ax.h / 12.0) * b;
    ax.d2 = a.partialPivLu().solve(b);
    ax.d2 = 0.5 * (ax.d2 + ax.d2.transpose().eval());

    // First derivative from interior values only (one-sided near the ends):
    // keeps gradient(constant) exactly zero, which the evaluation map relies
    // on for states that need not satisfy the boundary condition.
    ax.d1 = one_sided_d1(ax.coords);
    return ax;
}

// Cell-centered grid for axes with a neumann end (and possibly one
// dirichlet end): nodes at lo + (k+1/2)h, h = (hi-lo)/n. Mirror ghosts
// (even for neumann, odd for dirichlet) keep the matrix symmetric and the
// weights uniform.
AxisDisc make_cell_centered_axis(const AxisSpec& spec, int n) {
    AxisDisc ax;
    ax.spec = spec;
    ax.n = n;
    ax.h = (spec.hi - spec.lo) / n;
    ax.coords = Vec::Zero(n);
    for (int k = 0; k < n; ++k) ax.coords[k] = spec.lo + (k + 0.5) * ax.h;
    ax.weight = ax.h;

    const double ih2 = 1.0 / (ax.h * ax.h);
    Mat b = Mat::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        b(i, i) = -2.0 * ih2;
        if (i > 0) b(i, i - 1) = ih2;
        if (i + 1 < n) b(i, i + 1) = ih2;
    }
    b(0, 0) += (spec.bc_lo == Bc::neumann ? ih2 : -ih2);
    b(n - 1, n - 1) += (spec.bc_hi == Bc::neumann ? ih2 : -ih2);

    Mat a = Mat::Identity(n, n) + (ax.h * ax.h / 12.0) * b;
    ax.d2 = a.partialPivLu().solve(b);
    ax.d2 = 0.5 * (ax.d2 + ax.d2.transpose().eval());

    ax.d1 = one_sided_d1(ax.coords);
    return ax;
}

// Equispaced periodic grid with trigonometric (spectral) differentiation
// matrices; exact on Fourier modes |k| < n/2.
AxisDisc make_periodic_axis(const AxisSpec& spec, int n) {
    require(n % 2 == 0, "periodic axis resolution must be even");
    AxisDisc ax;
    ax.spec = spec;
    ax.n = n;
    const double length = spec.hi - spec.lo;
    ax.h = length / n;
    ax.coords = Vec::Zero(n);
    for (int k = 0; k < n; ++k) ax.coords[k] = spec.lo + k * ax.h;
    ax.weight = ax.h;

    const double scale = 2.0 * kPi / length;
    const double ha = 2.0 * kPi / n;  // angular mesh width
    ax.d1 = Mat::Zero(n, n);
    ax.d2 = Mat::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            const int k = i - j;
            const double sign = (k % 2 == 0) ? 1.0 : -1.0;
            const double s = std::sin(0.5 * ha * k);
            ax.d1(i, j) = scale * 0.5 * sign / std::tan(0.5 * ha * k);
            ax.d2(i, j) = -scale * scale * sign / (2.0 * s * s);
        }
        ax.d2(i, i) = -scale * scale * (kPi * kPi / (3.0 * ha * ha) + 1.0 / 6.0);
    }
    return ax;
}

AxisDisc make_axis(const AxisSpec& spec, int n) {
    if (spec.periodic()) return make_periodic_axis(spec, n);
    if (spec.bc_lo == Bc::dirichlet && spec.bc_hi == Bc::dirichlet)
        return make_dirichlet_axis(spec, n);
    return make_cell_centered_axis(spec, n);
}

}  // namespace

Grid::Grid(DomainSpec spec, std::vector<int> resolution, GridLimits limits)
    : spec_(std::move(spec)) {
    const int d = spec_.dim();
    require(d >= 1 && d <= 2, "grid supports 1 or 2 spatial dimensions");
    if (resolution.size() == 1 && d == 2)
        resolution.push_back(resolution[0]);
    require(static_cast<int>(resolution.size()) == d,
            "resolution count must match domain dimension");
    for (int r : resolution)
        require(r >= limits.min_per_axis,
                "resolution below minimum of " +
                    std::to_string(limits.min_per_axis) + " per axis");

    n_total_ = 1;
    for (int a = 0; a < d; ++a) {
        axes_.push_back(make_axis(spec_.axes[static_cast<size_t>(a)],
                                  resolution[static_cast<size_t>(a)]));
        n_total_ *= axes_.back().n;
    }

    nodes_ = Mat::Zero(n_total_, d);
    weight_scalar_ = 1.0;
    for (const auto& ax : axes_) weight_scalar_ *= ax.weight;
    weights_ = Vec::Constant(n_total_, weight_scalar_);

    if (d == 1) {
        nodes_.col(0) = axes_[0].coords;
        lap_ = axes_[0].d2;
        d1_ = {axes_[0].d1};
    } else {
        const int nx = axes_[0].n, ny = axes_[1].n;
        for (int iy = 0; iy < ny; ++iy)
            for (int ix = 0; ix < nx; ++ix) {
                const int i = flat_index(ix, iy);
                nodes_(i, 0) = axes_[0].coords[ix];
                nodes_(i, 1) = axes_[1].coords[iy];
            }
        // Tensor products: lap = Iy (x) Lx + Ly (x) Ix, d1 likewise.
        lap_ = Mat::Zero(n_total_, n_total_);
        Mat gx = Mat::Zero(n_total_, n_total_);
        Mat gy = Mat::Zero(n_total_, n_total_);
        for (int iy = 0; iy < ny; ++iy)
            for (int jy = 0; jy < ny; ++jy)
                for (int ix = 0; ix < nx; ++ix)
                    for (int jx = 0; jx < nx; ++jx) {
                        const int i = flat_index(ix, iy);
                        const int j = flat_index(jx, jy);
                        double v = 0.0;
                        if (iy == jy) v += axes_[0].d2(ix, jx);
                        if (ix == jx) v += axes_[1].d2(iy, jy);
                        if (v != 0.0) lap_(i, j) = v;
                        if (iy == jy) gx(i, j) = axes_[0].d1(ix, jx);
                        if (ix == jx) gy(i, j) = axes_[1].d1(iy, jy);
                    }
        d1_ = {std::move(gx), std::move(gy)};
    }
}

Eigen::Vector2d Grid::node(int i) const {
    Eigen::Vector2d x = Eigen::Vector2d::Zero();
    for (int a = 0; a < dim(); ++a) x[a] = nodes_(i, a);
    return x;
}

int Grid::locate_node(const Eigen::Vector2d& x) const {
    int best = -1;
    double best_dist = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n_total_; ++i) {
        double dist = 0.0;
        for (int a = 0; a < dim(); ++a) {
            double delta = nodes_(i, a) - x[a];
            if (axes_[static_cast<size_t>(a)].spec.periodic()) {
                const double length = axes_[static_cast<size_t>(a)].spec.hi -
                                      axes_[static_cast<size_t>(a)].spec.lo;
                delta = std::remainder(delta, length);
            }
            dist += delta * delta;
        }
        if (dist < best_dist) {
            best_dist = dist;
            best = i;
        }
    }
    double tol = 0.0;
    for (const auto& ax : axes_) tol = std::max(tol, 0.5 * ax.h);
    require(std::sqrt(best_dist) <= tol + 1e-12, "point is not a grid node");
    return best;
}

Grid build_grid(const DomainSpec& spec, const std::vector<int>& resolution,
                GridLimits limits) {
    return Grid(spec, resolution, limits);
}

Grid build_grid(const DomainSpec& spec, int resolution, GridLimits limits) {
    return Grid(spec, std::vector<int>{resolution}, limits);
}

LinearOperator laplacian(const Grid& grid) {
    return LinearOperator{grid.laplacian_matrix(),
                          LinearOperator::Symmetry::self_adjoint};
}

std::vector<Vec> gradient(const Grid& grid, const Vec& state) {
    require(state.size() == grid.size(), "gradient: state/grid size mismatch");
    std::vector<Vec> g;
    g.reserve(static_cast<size_t>(grid.dim()));
    for (int a = 0; a < grid.dim(); ++a) g.push_back(grid.d1(a) * state);
    return g;
}

}  // namespace parabolax
