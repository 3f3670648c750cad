#include "parabolax/tangent.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

namespace parabolax {

void CoefficientField::sample(double t, Vec& a_out, std::vector<Vec>& b_out) const {
    const int d = grid->dim();
    b_out.resize(static_cast<size_t>(d));
    if (t <= times.front()) {
        a_out = a.col(0);
        for (int ax = 0; ax < d; ++ax) b_out[static_cast<size_t>(ax)] = b[static_cast<size_t>(ax)].col(0);
        return;
    }
    if (t >= times.back()) {
        const int m = static_cast<int>(times.size()) - 1;
        a_out = a.col(m);
        for (int ax = 0; ax < d; ++ax) b_out[static_cast<size_t>(ax)] = b[static_cast<size_t>(ax)].col(m);
        return;
    }
    const auto it = std::upper_bound(times.begin(), times.end(), t);
    const int j = static_cast<int>(it - times.begin());
    const double w = (t - times[static_cast<size_t>(j - 1)]) /
                     (times[static_cast<size_t>(j)] - times[static_cast<size_t>(j - 1)]);
    a_out = (1.0 - w) * a.col(j - 1) + w * a.col(j);
    for (int ax = 0; ax < d; ++ax)
        b_out[static_cast<size_t>(ax)] =
            (1.0 - w) * b[static_cast<size_t>(ax)].col(j - 1) + w * b[static_cast<size_t>(ax)].col(j);
}

CoefficientField linearize_along(const NonlinearField& f,
                                 const TrajectorySegment& traj) {
    require(traj.size() > 0, "linearize_along: empty trajectory");
    const Grid& grid = *traj.grid;
    const int n = grid.size();
    const int m = traj.size();
    CoefficientField c;
    c.grid = traj.grid;
    c.times = traj.times;
    c.source = CoefficientField::Source::linearization;
    c.a = Mat::Zero(n, m);
    c.b.assign(static_cast<size_t>(grid.dim()), Mat::Zero(n, m));
    EvalPoint at;
    at.dim = grid.dim();
    for (int j = 0; j < m; ++j) {
        const Vec& u = traj.states[static_cast<size_t>(j)];
        std::vector<Vec> grads = gradient(grid, u);
        for (int i = 0; i < n; ++i) {
            at.x = grid.node(i);
            at.u = u[i];
            for (int ax = 0; ax < grid.dim(); ++ax) at.p[ax] = grads[static_cast<size_t>(ax)][i];
            c.a(i, j) = f.f_u(at);
            const Eigen::Vector2d fp = f.f_p(at);
            for (int ax = 0; ax < grid.dim(); ++ax) c.b[static_cast<size_t>(ax)](i, j) = fp[ax];
        }
    }
    return c;
}

CoefficientField difference_coefficients(const NonlinearField& f,
                                         const TrajectorySegment& traj1,
                                         const TrajectorySegment& traj2,
                                         int quad_order) {
    require(traj1.grid == traj2.grid, "difference_coefficients: grids differ");
    require(traj1.size() == traj2.size() &&
                std::equal(traj1.times.begin(), traj1.times.end(),
                           traj2.times.begin(),
                           [](double x, double y) { return std::abs(x - y) < 1e-12; }),
            "difference_coefficients: time windows differ");
    // Gauss-Legendre nodes on [0,1].
    Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(quad_order, quad_order);
    for (int i = 1; i < quad_order; ++i) {
        const double beta = i / std::sqrt(4.0 * i * i - 1.0);
        companion(i, i - 1) = beta;
        companion(i - 1, i) = beta;
    }
    Eigen::SelfAdjointEigenSolver<Mat> es(companion);
    Vec theta(quad_order), wq(quad_order);
    for (int q = 0; q < quad_order; ++q) {
        theta[q] = 0.5 * (es.eigenvalues()[q] + 1.0);
        wq[q] = es.eigenvectors()(0, q) * es.eigenvectors()(0, q);
    }

    const Grid& grid = *traj1.grid;
    const int n = grid.size();
    const int m = traj1.size();
    CoefficientField c;
    c.grid = traj1.grid;
    c.times = traj1.times;
    c.source = CoefficientField::Source::difference;
    c.a = Mat::Zero(n, m);
    c.b.assign(static_cast<size_t>(grid.dim()), Mat::Zero(n, m));
    EvalPoint at;
    at.dim = grid.dim();
    for (int j = 0; j < m; ++j) {
        const Vec& u1 = traj1.states[static_cast<size_t>(j)];
        const Vec& u2 = traj2.states[static_cast<size_t>(j)];
        std::vector<Vec> g1 = gradient(grid, u1);
        std::vector<Vec> g2 = gradient(grid, u2);
        for (int q = 0; q < quad_order; ++q) {
            const double th = theta[q];
            for (int i = 0; i < n; ++i) {
                at.x = grid.node(i);
                at.u = th * u2[i] + (1.0 - th) * u1[i];
                for (int ax = 0; ax < grid.dim(); ++ax)
                    at.p[ax] = th * g2[static_cast<size_t>(ax)][i] + (1.0 - th) * g1[static_cast<size_t>(ax)][i];
                c.a(i, j) += wq[q] * f.f_u(at);
                const Eigen::Vector2d fp = f.f_p(at);
                for (int ax = 0; ax < grid.dim(); ++ax)
                    c.b[static_cast<size_t>(ax)](i, j) += wq[q] * fp[ax];
            }
        }
    }
    return c;
}

namespace {

// Pointwise coefficient application F v = a v + b . grad v and its
// weighted adjoint F^T v = a v + sum_ax D1^T (b v).
struct CoeffApply {
    const Grid* grid;
    Vec a;
    std::vector<Vec> b;

    Mat apply(const Mat& v) const {
        Mat r = a.asDiagonal() * v;
        for (int ax = 0; ax < grid->dim(); ++ax)
            r.noalias() += b[static_cast<size_t>(ax)].asDiagonal() * (grid->d1(ax) * v);
        return r;
    }
    Mat apply_transpose(const Mat& v) const {
        Mat r = a.asDiagonal() * v;
        for (int ax = 0; ax < grid->dim(); ++ax)
            r.noalias() += grid->d1(ax).transpose() *
                           (b[static_cast<size_t>(ax)].asDiagonal() * v);
        return r;
    }
};

struct TangentCore {
    const Grid* grid;
    Scheme scheme;
    double dt;
    Eigen::PartialPivLU<Mat> lu;  // of C = I - c dt L (symmetric)

    TangentCore(const Grid& g, Scheme s, double step) : grid(&g), scheme(s), dt(step) {
        const double c = (s == Scheme::imex1) ? 1.0 : 0.5;
        lu.compute(Mat::Identity(g.size(), g.size()) - (c * dt) * g.laplacian_matrix());
    }

    Mat forward(const Mat& v, const CoeffApply& fn, const CoeffApply& fn1) const {
        if (scheme == Scheme::imex1)
            return lu.solve((v + dt * fn.apply(v)).eval());
        const Mat& lap = grid->laplacian_matrix();
        Mat av = v + (0.5 * dt) * (lap * v);
        Mat fv = fn.apply(v);
        Mat vstar = lu.solve((av + dt * fv).eval());
        return lu.solve((av + (0.5 * dt) * (fv + fn1.apply(vstar))).eval());
    }

    // Exact transpose of the forward map (C and L are symmetric).
    Mat backward(const Mat& psi, const CoeffApply& fn, const CoeffApply& fn1) const {
        if (scheme == Scheme::imex1) {
            Mat phi = lu.solve(psi);
            return phi + dt * fn.apply_transpose(phi);
        }
        const Mat& lap = grid->laplacian_matrix();
        Mat phi = lu.solve(psi);
        Mat chi2 = lu.solve(fn1.apply_transpose(phi).eval());
        Mat r = phi + (0.5 * dt) * (lap * phi) + (0.5 * dt) * fn.apply_transpose(phi);
        r.noalias() += (0.5 * dt) * (chi2 + (0.5 * dt) * (lap * chi2));
        r.noalias() += (0.5 * dt * dt) * fn.apply_transpose(chi2);
        return r;
    }
};

struct LatticeWalker {
    const CoefficientField* coeffs;
    TangentOptions opts;
    std::vector<double> lattice;
    std::vector<std::pair<double, TangentCore>> cores;

    LatticeWalker(const CoefficientField& c, double s, double t,
                  const TangentOptions& o)
        : coeffs(&c), opts(o), lattice(make_lattice(s, t, o.dt)) {
        require(s >= c.t_begin() - 1e-9 && t <= c.t_end() + 1e-9,
                "propagation window exceeds the coefficient window");
    }

    const TangentCore& core_for(double dt) {
        for (const auto& c : cores)
            if (std::abs(c.first - dt) <= 1e-14 * dt) return c.second;
        cores.emplace_back(dt, TangentCore(*coeffs->grid, opts.scheme, dt));
        return cores.back().second;
    }

    CoeffApply coeff_at(double t) const {
        CoeffApply f;
        f.grid = coeffs->grid;
        coeffs->sample(t, f.a, f.b);
        return f;
    }
};

}  // namespace

TangentHistory propagate_history(const CoefficientField& coeffs, const Vec& v_s,
                                 double s, double t, const TangentOptions& opts) {
    require(v_s.size() == coeffs.grid->size(), "propagate: size mismatch");
    LatticeWalker w(coeffs, s, t, opts);
    TangentHistory h;
    h.times = w.lattice;
    h.states.reserve(w.lattice.size());
    h.states.push_back(v_s);
    Mat v = v_s;
    for (size_t j = 1; j < w.lattice.size(); ++j) {
        const double dt = w.lattice[j] - w.lattice[j - 1];
        v = w.core_for(dt).forward(v, w.coeff_at(w.lattice[j - 1]),
                                   w.coeff_at(w.lattice[j]));
        h.states.push_back(v.col(0));
    }
    return h;
}

Vec propagate(const CoefficientField& coeffs, const Vec& v_s, double s, double t,
              const TangentOptions& opts) {
    require(v_s.size() == coeffs.grid->size(), "propagate: size mismatch");
    if (t <= s) {
        require(std::abs(t - s) < 1e-14, "propagate: requires s <= t");
        return v_s;
    }
    LatticeWalker w(coeffs, s, t, opts);
    Mat v = v_s;
    for (size_t j = 1; j < w.lattice.size(); ++j) {
        const double dt = w.lattice[j] - w.lattice[j - 1];
        v = w.core_for(dt).forward(v, w.coeff_at(w.lattice[j - 1]),
                                   w.coeff_at(w.lattice[j]));
    }
    return v.col(0);
}

Mat propagate_matrix(const CoefficientField& coeffs, const Mat& V_s, double s,
                     double t, const TangentOptions& opts) {
    require(V_s.rows() == coeffs.grid->size(), "propagate_matrix: size mismatch");
    if (std::abs(t - s) < 1e-14) return V_s;
    LatticeWalker w(coeffs, s, t, opts);
    Mat v = V_s;
    for (size_t j = 1; j < w.lattice.size(); ++j) {
        const double dt = w.lattice[j] - w.lattice[j - 1];
        v = w.core_for(dt).forward(v, w.coeff_at(w.lattice[j - 1]),
                                   w.coeff_at(w.lattice[j]));
    }
    return v;
}

TangentHistory propagate_adjoint_history(const CoefficientField& coeffs,
                                         const Vec& psi_T, double T, double s,
                                         const TangentOptions& opts) {
    require(psi_T.size() == coeffs.grid->size(), "adjoint: size mismatch");
    require(s <= T, "adjoint: requires s <= T");
    LatticeWalker w(coeffs, s, T, opts);
    const size_t m = w.lattice.size();
    TangentHistory h;
    h.times = w.lattice;
    h.states.assign(m, Vec());
    h.states[m - 1] = psi_T;
    Mat psi = psi_T;
    for (size_t j = m - 1; j > 0; --j) {
        const double dt = w.lattice[j] - w.lattice[j - 1];
        psi = w.core_for(dt).backward(psi, w.coeff_at(w.lattice[j - 1]),
                                      w.coeff_at(w.lattice[j]));
        h.states[j - 1] = psi.col(0);
    }
    return h;
}

Vec propagate_adjoint(const CoefficientField& coeffs, const Vec& psi_T, double T,
                      double s, const TangentOptions& opts) {
    if (std::abs(T - s) < 1e-14) return psi_T;
    return propagate_adjoint_history(coeffs, psi_T, T, s, opts).states.front();
}

Mat propagate_adjoint_matrix(const CoefficientField& coeffs, const Mat& Psi_T,
                             double T, double s, const TangentOptions& opts) {
    require(Psi_T.rows() == coeffs.grid->size(), "adjoint: size mismatch");
    if (std::abs(T - s) < 1e-14) return Psi_T;
    LatticeWalker w(coeffs, s, T, opts);
    Mat psi = Psi_T;
    for (size_t j = w.lattice.size() - 1; j > 0; --j) {
        const double dt = w.lattice[j] - w.lattice[j - 1];
        psi = w.core_for(dt).backward(psi, w.coeff_at(w.lattice[j - 1]),
                                      w.coeff_at(w.lattice[j]));
    }
    return psi;
}

double duality_defect(const CoefficientField& coeffs, const Vec& v_s,
                      const Vec& psi_T, double s, double T,
                      const TangentOptions& opts) {
    const Grid& grid = *coeffs.grid;
    TangentHistory v = propagate_history(coeffs, v_s, s, T, opts);
    TangentHistory psi = propagate_adjoint_history(coeffs, psi_T, T, s, opts);
    const double ref = grid.dot(psi.states.back(), v.states.back());
    const double floor = 1e-300;
    const double denom = grid.norm(psi_T) * grid.norm(v.states.back()) + floor;
    double worst = 0.0;
    for (size_t j = 0; j < v.states.size(); ++j)
        worst = std::max(worst,
                         std::abs(grid.dot(psi.states[j], v.states[j]) - ref) / denom);
    return worst;
}

RestrictedMonodromy restricted_monodromy(const CoefficientField& coeffs,
                                         const Mat& Q, double s, double t,
                                         const TangentOptions& opts) {
    const Grid& grid = *coeffs.grid;
    require(Q.rows() == grid.size(), "restricted_monodromy: size mismatch");
    const int m = static_cast<int>(Q.cols());
    // Orthonormality of Q in the weighted inner product.
    Mat gram = grid.weight_scalar() * (Q.transpose() * Q);
    require((gram - Mat::Identity(m, m)).cwiseAbs().maxCoeff() < 1e-8,
            "restricted_monodromy: basis must be orthonormal");

    LatticeWalker w(coeffs, s, t, opts);
    RestrictedMonodromy out;
    out.factor = Mat::Identity(m, m);
    out.log_scale = 0.0;
    out.invariance_defect = 0.0;
    for (size_t j = 1; j < w.lattice.size(); ++j) {
        const double dt = w.lattice[j] - w.lattice[j - 1];
        Mat y = w.core_for(dt).forward((Q * out.factor).eval(),
                                       w.coeff_at(w.lattice[j - 1]),
                                       w.coeff_at(w.lattice[j]));
        Mat g = grid.weight_scalar() * (Q.transpose() * y);
        const double loss = (y - Q * g).norm() / (y.norm() + 1e-300);
        out.invariance_defect = std::max(out.invariance_defect, loss);
        const double scale = g.norm();
        if (scale > 0.0) {
            g /= scale;
            out.log_scale += std::log(scale);
        }
        out.factor = g;
    }
    return out;
}

std::vector<Cplx> RestrictedMonodromy::multipliers() const {
    Eigen::EigenSolver<Mat> es(factor);
    std::vector<Cplx> mu;
    const double scale = std::exp(log_scale);
    for (int i = 0; i < factor.rows(); ++i)
        mu.push_back(es.eigenvalues()[i] * scale);
    std::sort(mu.begin(), mu.end(),
              [](const Cplx& a, const Cplx& b) { return std::abs(a) > std::abs(b); });
    return mu;
}

std::vector<double> trapezoid_weights(const std::vector<double>& times) {
    const size_t m = times.size();
    std::vector<double> w(m, 0.0);
    for (size_t j = 0; j + 1 < m; ++j) {
        const double dt = times[j + 1] - times[j];
        w[j] += 0.5 * dt;
        w[j + 1] += 0.5 * dt;
    }
    return w;
}

Vec propagate_source_accumulate(const CoefficientField& coeffs,
                                const std::function<Vec(double)>& source,
                                double s, double t, const TangentOptions& opts) {
    LatticeWalker w(coeffs, s, t, opts);
    const std::vector<double> wt = trapezoid_weights(w.lattice);
    Mat k = wt[0] * source(w.lattice[0]);
    for (size_t j = 1; j < w.lattice.size(); ++j) {
        const double dt = w.lattice[j] - w.lattice[j - 1];
        k = w.core_for(dt).forward(k, w.coeff_at(w.lattice[j - 1]),
                                   w.coeff_at(w.lattice[j]));
        k += wt[j] * source(w.lattice[j]);
    }
    return k.col(0);
}

double continuous_adjoint_residual(const CoefficientField& coeffs,
                                   const TangentHistory& psi) {
    const Grid& grid = *coeffs.grid;
    double worst = 0.0;
    for (size_t j = 1; j + 1 < psi.states.size(); ++j) {
        const double dtm = psi.times[j] - psi.times[j - 1];
        const double dtp = psi.times[j + 1] - psi.times[j];
        const Vec dpsi = (psi.states[j + 1] - psi.states[j - 1]) / (dtm + dtp);
        Vec a;
        std::vector<Vec> b;
        coeffs.sample(psi.times[j], a, b);
        Vec resid = dpsi + grid.laplacian_matrix() * psi.states[j] +
                    a.asDiagonal() * psi.states[j];
        for (int ax = 0; ax < grid.dim(); ++ax)
            resid -= grid.d1(ax) * (b[static_cast<size_t>(ax)].asDiagonal() * psi.states[j]);
        worst = std::max(worst, grid.norm(resid) / (grid.norm(psi.states[j]) + 1e-300));
    }
    return worst;
}

double linearization_consistency(const Grid& grid, const NonlinearField& f,
                                 const Vec& u0, const Vec& v0, double T,
                                 double eps, const StepperOptions& opts) {
    StepperOptions dense = opts;
    dense.stride = 1;
    TrajectorySegment base = integrate(grid, f, u0, T, dense);
    CoefficientField coeffs = linearize_along(f, base);
    TangentOptions topts{opts.scheme, opts.dt};
    const Vec uv = propagate(coeffs, v0, 0.0, T, topts);
    const Vec up = integrate(grid, f, (u0 + eps * v0).eval(), T, dense).back();
    const Vec fd = (up - base.back()) / eps;
    return grid.norm(fd - uv) / (grid.norm(uv) + 1e-300);
}

}  // namespace parabolax
