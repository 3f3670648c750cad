#pragma once

#include <memory>
#include <string>
#include <vector>

#include "parabolax/types.hpp"

namespace parabolax {

/// Tiny symbolic expression for nonlinearities that are polynomial in u and
/// p with x-dependent coefficients. Variables: x (x1, x2), u, p (p1, p2).
/// sin/cos/exp may only be applied to u- and p-free subexpressions, which
/// keeps the u/p-derivatives exact and closed-form.
class Expr {
  public:
    enum class Kind { constant, var_x, var_u, var_p, sum, product, power, func };

    static std::shared_ptr<const Expr> parse(const std::string& text, int dim);

    double eval(const Eigen::Vector2d& x, double u,
                const Eigen::Vector2d& p) const;
    std::shared_ptr<const Expr> diff_u() const;
    std::shared_ptr<const Expr> diff_p(int axis) const;

    bool uses_u() const;
    bool uses_p() const;
    bool uses_x() const;

    Kind kind() const { return kind_; }

    // Node constructors (used by the parser and the differentiator).
    static std::shared_ptr<const Expr> constant(double v);
    static std::shared_ptr<const Expr> variable(Kind k, int axis);
    static std::shared_ptr<const Expr> sum(
        std::vector<std::shared_ptr<const Expr>> terms,
        std::vector<double> signs);
    static std::shared_ptr<const Expr> product(
        std::vector<std::shared_ptr<const Expr>> factors);
    static std::shared_ptr<const Expr> power(std::shared_ptr<const Expr> base,
                                             int exponent);
    static std::shared_ptr<const Expr> func(const std::string& name,
                                            std::shared_ptr<const Expr> arg);

  private:
    Expr() = default;

    Kind kind_ = Kind::constant;
    double value_ = 0.0;
    int axis_ = 0;
    int exponent_ = 1;
    std::string func_name_;
    std::vector<std::shared_ptr<const Expr>> kids_;
    std::vector<double> signs_;  // per-term signs for sums
};

using ExprPtr = std::shared_ptr<const Expr>;

}  // namespace parabolax
