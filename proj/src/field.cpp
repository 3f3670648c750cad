#include "parabolax/field.hpp"

namespace parabolax {

double eval_field(const NonlinearField& f, const EvalPoint& at) {
    return f.f(at);
}

std::pair<double, Eigen::Vector2d> partials(const NonlinearField& f,
                                            const EvalPoint& at) {
    return {f.f_u(at), f.f_p(at)};
}

NonlinearField zero_field(int dim) {
    NonlinearField f;
    f.description = "zero";
    f.dim = dim;
    f.f = [](const EvalPoint&) { return 0.0; };
    f.f_u = [](const EvalPoint&) { return 0.0; };
    f.f_p = [](const EvalPoint&) { return Eigen::Vector2d::Zero(); };
    return f;
}

NonlinearField chafee_infante(double lambda) {
    NonlinearField f;
    f.description = "chafee_infante(lambda=" + std::to_string(lambda) + ")";
    f.dim = 1;
    f.f = [lambda](const EvalPoint& a) { return lambda * a.u - a.u * a.u * a.u; };
    f.f_u = [lambda](const EvalPoint& a) { return lambda - 3.0 * a.u * a.u; };
    f.f_p = [](const EvalPoint&) { return Eigen::Vector2d::Zero(); };
    return f;
}

NonlinearField linear_rotating(double c) {
    NonlinearField f;
    f.description = "linear_rotating(c=" + std::to_string(c) + ")";
    f.dim = 1;
    f.depends_on_p = true;
    f.f = [c](const EvalPoint& a) { return a.u - c * a.p[0]; };
    f.f_u = [](const EvalPoint&) { return 1.0; };
    f.f_p = [c](const EvalPoint&) { return Eigen::Vector2d(-c, 0.0); };
    return f;
}

NonlinearField polynomial_field(const std::string& expr, int dim) {
    ExprPtr e = Expr::parse(expr, dim);
    ExprPtr eu = e->diff_u();
    std::array<ExprPtr, 2> ep = {e->diff_p(0), e->diff_p(1)};
    NonlinearField f;
    f.description = "polynomial(" + expr + ")";
    f.dim = dim;
    f.depends_on_p = e->uses_p();
    f.depends_on_x = e->uses_x();
    f.f = [e](const EvalPoint& a) { return e->eval(a.x, a.u, a.p); };
    f.f_u = [eu](const EvalPoint& a) { return eu->eval(a.x, a.u, a.p); };
    f.f_p = [ep, dim](const EvalPoint& a) {
        Eigen::Vector2d g = Eigen::Vector2d::Zero();
        for (int i = 0; i < dim; ++i) g[i] = ep[static_cast<size_t>(i)]->eval(a.x, a.u, a.p);
        return g;
    };
    return f;
}

double partials_consistency(const NonlinearField& f, std::uint64_t seed,
                            int n_probes, double box) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-box, box);
    const double h = 1e-4;
    double worst = 0.0;
    for (int k = 0; k < n_probes; ++k) {
        EvalPoint a;
        a.dim = f.dim;
        for (int i = 0; i < f.dim; ++i) {
            a.x[i] = dist(rng);
            a.p[i] = dist(rng);
        }
        a.u = dist(rng);

        const auto [fu, fp] = partials(f, a);
        EvalPoint lo = a, hi = a;
        lo.u -= h;
        hi.u += h;
        const double fd_u = (f.f(hi) - f.f(lo)) / (2.0 * h);
        const double scale_u = std::max({1.0, std::abs(fu), std::abs(fd_u)});
        worst = std::max(worst, std::abs(fd_u - fu) / scale_u);
        for (int i = 0; i < f.dim; ++i) {
            EvalPoint l2 = a, h2 = a;
            l2.p[i] -= h;
            h2.p[i] += h;
            const double fd_p = (f.f(h2) - f.f(l2)) / (2.0 * h);
            const double scale_p = std::max({1.0, std::abs(fp[i]), std::abs(fd_p)});
            worst = std::max(worst, std::abs(fd_p - fp[i]) / scale_p);
        }
    }
    return worst;
}

}  // namespace parabolax
