#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace parabolax {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Cplx = std::complex<double>;
using CVec = Eigen::VectorXcd;

/// Base for all numerical failures that a driver maps to exit code 2.
struct SolverError : std::runtime_error {
    explicit SolverError(const std::string& what) : std::runtime_error(what) {}
};

/// Finite-time blow-up detected; carries the last valid time.
struct BlowUpError : SolverError {
    double t_star;
    explicit BlowUpError(double t)
        : SolverError("blow-up detected at t = " + std::to_string(t)), t_star(t) {}
};

/// An implicit solve or Newton iteration failed to converge.
struct NoConvergenceError : SolverError {
    explicit NoConvergenceError(const std::string& what) : SolverError(what) {}
};

struct SingularJacobianError : SolverError {
    explicit SingularJacobianError(const std::string& what) : SolverError(what) {}
};

struct ReturnNotFoundError : SolverError {
    explicit ReturnNotFoundError(const std::string& what) : SolverError(what) {}
};

struct ContinuationLostError : SolverError {
    double eps_failed;
    ContinuationLostError(const std::string& what, double eps)
        : SolverError(what), eps_failed(eps) {}
};

struct NotFoundError : SolverError {
    explicit NotFoundError(const std::string& what) : SolverError(what) {}
};

struct NoGoodPointError : SolverError {
    explicit NoGoodPointError(const std::string& what) : SolverError(what) {}
};

struct ColinearEverywhereError : SolverError {
    explicit ColinearEverywhereError(const std::string& what) : SolverError(what) {}
};

/// Configuration / contract violations; drivers map these to exit code 1.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw ConfigError(msg);
}

}  // namespace parabolax
