#include "parabolax/expr.hpp"

#include <cctype>
#include <cmath>

namespace parabolax {

namespace {

struct Token {
    enum class Type { number, ident, op, end } type;
    double number = 0.0;
    std::string text;
};

class Lexer {
  public:
    explicit Lexer(const std::string& s) : s_(s) { advance(); }
    const Token& peek() const { return tok_; }
    Token take() {
        Token t = tok_;
        advance();
        return t;
    }

  private:
    void advance() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_])))
            ++pos_;
        if (pos_ >= s_.size()) {
            tok_ = {Token::Type::end, 0.0, ""};
            return;
        }
        const char c = s_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            size_t used = 0;
            tok_ = {Token::Type::number, std::stod(s_.substr(pos_), &used), ""};
            pos_ += used;
            return;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            size_t end = pos_;
            while (end < s_.size() &&
                   (std::isalnum(static_cast<unsigned char>(s_[end])) || s_[end] == '_'))
                ++end;
            tok_ = {Token::Type::ident, 0.0, s_.substr(pos_, end - pos_)};
            pos_ = end;
            return;
        }
        tok_ = {Token::Type::op, 0.0, std::string(1, c)};
        ++pos_;
    }

    std::string s_;
    size_t pos_ = 0;
    Token tok_;
};

class Parser {
  public:
    Parser(const std::string& text, int dim) : lex_(text), dim_(dim) {}

    ExprPtr parse() {
        ExprPtr e = parse_sum();
        require(lex_.peek().type == Token::Type::end,
                "expr: trailing input near '" + lex_.peek().text + "'");
        return e;
    }

  private:
    bool is_op(const char* o) const {
        return lex_.peek().type == Token::Type::op && lex_.peek().text == o;
    }

    ExprPtr parse_sum() {
        std::vector<ExprPtr> terms;
        std::vector<double> signs;
        double sign = 1.0;
        if (is_op("-")) {
            lex_.take();
            sign = -1.0;
        } else if (is_op("+")) {
            lex_.take();
        }
        terms.push_back(parse_term());
        signs.push_back(sign);
        while (is_op("+") || is_op("-")) {
            sign = (lex_.take().text == "+") ? 1.0 : -1.0;
            terms.push_back(parse_term());
            signs.push_back(sign);
        }
        if (terms.size() == 1 && signs[0] == 1.0) return terms[0];
        return Expr::sum(std::move(terms), std::move(signs));
    }

    ExprPtr parse_term() {
        std::vector<ExprPtr> factors{parse_factor()};
        while (is_op("*") || is_op("/")) {
            const std::string op = lex_.take().text;
            ExprPtr rhs = parse_factor();
            if (op == "/") {
                // Division only by u/p-free factors, realized as power -1.
                require(!rhs->uses_u() && !rhs->uses_p(),
                        "expr: division by u or p is not polynomial");
                rhs = Expr::power(rhs, -1);
            }
            factors.push_back(rhs);
        }
        if (factors.size() == 1) return factors[0];
        return Expr::product(std::move(factors));
    }

    ExprPtr parse_factor() {
        ExprPtr base = parse_base();
        if (is_op("^")) {
            lex_.take();
            double sign = 1.0;
            if (is_op("-")) {
                lex_.take();
                sign = -1.0;
            }
            const Token t = lex_.take();
            require(t.type == Token::Type::number,
                    "expr: exponent must be an integer literal");
            const int k = static_cast<int>(std::lround(sign * t.number));
            require(std::abs(sign * t.number - k) < 1e-12,
                    "expr: exponent must be an integer");
            if (k < 0)
                require(!base->uses_u() && !base->uses_p(),
                        "expr: negative powers of u or p are not polynomial");
            return Expr::power(base, k);
        }
        return base;
    }

    ExprPtr parse_base() {
        const Token t = lex_.take();
        if (t.type == Token::Type::number) return Expr::constant(t.number);
        if (t.type == Token::Type::op && t.text == "(") {
            ExprPtr e = parse_sum();
            require(is_op(")"), "expr: expected ')'");
            lex_.take();
            return e;
        }
        if (t.type == Token::Type::op && t.text == "-")
            return Expr::product({Expr::constant(-1.0), parse_factor()});
        require(t.type == Token::Type::ident,
                "expr: unexpected token '" + t.text + "'");
        const std::string& id = t.text;
        if (id == "u") return Expr::variable(Expr::Kind::var_u, 0);
        if (id == "x" || id == "x1") return Expr::variable(Expr::Kind::var_x, 0);
        if (id == "x2") {
            require(dim_ >= 2, "expr: x2 requires a 2-d domain");
            return Expr::variable(Expr::Kind::var_x, 1);
        }
        if (id == "p" || id == "p1") return Expr::variable(Expr::Kind::var_p, 0);
        if (id == "p2") {
            require(dim_ >= 2, "expr: p2 requires a 2-d domain");
            return Expr::variable(Expr::Kind::var_p, 1);
        }
        if (id == "pi") return Expr::constant(3.14159265358979323846);
        if (id == "sin" || id == "cos" || id == "exp") {
            require(is_op("("), "expr: expected '(' after " + id);
            lex_.take();
            ExprPtr arg = parse_sum();
            require(is_op(")"), "expr: expected ')'");
            lex_.take();
            require(!arg->uses_u() && !arg->uses_p(),
                    "expr: " + id + " may only be applied to x-expressions");
            return Expr::func(id, arg);
        }
        throw ConfigError("expr: unknown identifier '" + id + "'");
    }

    Lexer lex_;
    int dim_;
};

}  // namespace

ExprPtr Expr::constant(double v) {
    auto e = std::shared_ptr<Expr>(new Expr());
    e->kind_ = Kind::constant;
    e->value_ = v;
    return e;
}

ExprPtr Expr::variable(Kind k, int axis) {
    auto e = std::shared_ptr<Expr>(new Expr());
    e->kind_ = k;
    e->axis_ = axis;
    return e;
}

ExprPtr Expr::sum(std::vector<ExprPtr> terms, std::vector<double> signs) {
    auto e = std::shared_ptr<Expr>(new Expr());
    e->kind_ = Kind::sum;
    e->kids_ = std::move(terms);
    e->signs_ = std::move(signs);
    return e;
}

ExprPtr Expr::product(std::vector<ExprPtr> factors) {
    auto e = std::shared_ptr<Expr>(new Expr());
    e->kind_ = Kind::product;
    e->kids_ = std::move(factors);
    return e;
}

ExprPtr Expr::power(ExprPtr base, int exponent) {
    auto e = std::shared_ptr<Expr>(new Expr());
    e->kind_ = Kind::power;
    e->kids_ = {std::move(base)};
    e->exponent_ = exponent;
    return e;
}

ExprPtr Expr::func(const std::string& name, ExprPtr arg) {
    auto e = std::shared_ptr<Expr>(new Expr());
    e->kind_ = Kind::func;
    e->func_name_ = name;
    e->kids_ = {std::move(arg)};
    return e;
}

ExprPtr Expr::parse(const std::string& text, int dim) {
    return Parser(text, dim).parse();
}

double Expr::eval(const Eigen::Vector2d& x, double u,
                  const Eigen::Vector2d& p) const {
    switch (kind_) {
        case Kind::constant: return value_;
        case Kind::var_x: return x[axis_];
        case Kind::var_u: return u;
        case Kind::var_p: return p[axis_];
        case Kind::sum: {
            double s = 0.0;
            for (size_t i = 0; i < kids_.size(); ++i)
                s += signs_[i] * kids_[i]->eval(x, u, p);
            return s;
        }
        case Kind::product: {
            double s = 1.0;
            for (const auto& k : kids_) s *= k->eval(x, u, p);
            return s;
        }
        case Kind::power: {
            const double b = kids_[0]->eval(x, u, p);
            return std::pow(b, exponent_);
        }
        case Kind::func: {
            const double a = kids_[0]->eval(x, u, p);
            if (func_name_ == "sin") return std::sin(a);
            if (func_name_ == "cos") return std::cos(a);
            return std::exp(a);
        }
    }
    return 0.0;
}

namespace {

bool is_zero(const ExprPtr& e) {
    return e->kind() == Expr::Kind::constant &&
           std::abs(e->eval(Eigen::Vector2d::Zero(), 0.0,
                            Eigen::Vector2d::Zero())) == 0.0;
}

}  // namespace

std::shared_ptr<const Expr> Expr::diff_u() const {
    switch (kind_) {
        case Kind::constant:
        case Kind::var_x:
        case Kind::var_p:
        case Kind::func:
            return constant(0.0);
        case Kind::var_u:
            return constant(1.0);
        case Kind::sum: {
            std::vector<ExprPtr> terms;
            std::vector<double> signs;
            for (size_t i = 0; i < kids_.size(); ++i) {
                ExprPtr d = kids_[i]->diff_u();
                if (is_zero(d)) continue;
                terms.push_back(d);
                signs.push_back(signs_[i]);
            }
            if (terms.empty()) return constant(0.0);
            if (terms.size() == 1 && signs[0] == 1.0) return terms[0];
            return sum(std::move(terms), std::move(signs));
        }
        case Kind::product: {
            std::vector<ExprPtr> terms;
            for (size_t i = 0; i < kids_.size(); ++i) {
                ExprPtr d = kids_[i]->diff_u();
                if (is_zero(d)) continue;
                std::vector<ExprPtr> factors;
                for (size_t j = 0; j < kids_.size(); ++j)
                    factors.push_back(i == j ? d : kids_[j]);
                terms.push_back(product(std::move(factors)));
            }
            if (terms.empty()) return constant(0.0);
            if (terms.size() == 1) return terms[0];
            return sum(std::move(terms), std::vector<double>(terms.size(), 1.0));
        }
        case Kind::power: {
            ExprPtr d = kids_[0]->diff_u();
            if (is_zero(d) || exponent_ == 0) return constant(0.0);
            return product({constant(static_cast<double>(exponent_)),
                            power(kids_[0], exponent_ - 1), d});
        }
    }
    return constant(0.0);
}

std::shared_ptr<const Expr> Expr::diff_p(int axis) const {
    switch (kind_) {
        case Kind::constant:
        case Kind::var_x:
        case Kind::var_u:
        case Kind::func:
            return constant(0.0);
        case Kind::var_p:
            return constant(axis_ == axis ? 1.0 : 0.0);
        case Kind::sum: {
            std::vector<ExprPtr> terms;
            std::vector<double> signs;
            for (size_t i = 0; i < kids_.size(); ++i) {
                ExprPtr d = kids_[i]->diff_p(axis);
                if (is_zero(d)) continue;
                terms.push_back(d);
                signs.push_back(signs_[i]);
            }
            if (terms.empty()) return constant(0.0);
            if (terms.size() == 1 && signs[0] == 1.0) return terms[0];
            return sum(std::move(terms), std::move(signs));
        }
        case Kind::product: {
            std::vector<ExprPtr> terms;
            for (size_t i = 0; i < kids_.size(); ++i) {
                ExprPtr d = kids_[i]->diff_p(axis);
                if (is_zero(d)) continue;
                std::vector<ExprPtr> factors;
                for (size_t j = 0; j < kids_.size(); ++j)
                    factors.push_back(i == j ? d : kids_[j]);
                terms.push_back(product(std::move(factors)));
            }
            if (terms.empty()) return constant(0.0);
            if (terms.size() == 1) return terms[0];
            return sum(std::move(terms), std::vector<double>(terms.size(), 1.0));
        }
        case Kind::power: {
            ExprPtr d = kids_[0]->diff_p(axis);
            if (is_zero(d) || exponent_ == 0) return constant(0.0);
            return product({constant(static_cast<double>(exponent_)),
                            power(kids_[0], exponent_ - 1), d});
        }
    }
    return constant(0.0);
}

bool Expr::uses_u() const {
    if (kind_ == Kind::var_u) return true;
    for (const auto& k : kids_)
        if (k->uses_u()) return true;
    return false;
}

bool Expr::uses_p() const {
    if (kind_ == Kind::var_p) return true;
    for (const auto& k : kids_)
        if (k->uses_p()) return true;
    return false;
}

bool Expr::uses_x() const {
    if (kind_ == Kind::var_x) return true;
    for (const auto& k : kids_)
        if (k->uses_x()) return true;
    return false;
}

}  // namespace parabolax
