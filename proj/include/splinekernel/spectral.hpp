#pragma once

#include <complex>
#include <functional>
#include <stdexcept>
#include <vector>

#include "splinekernel/knots.hpp"

namespace splinekernel {

using cplx = std::complex<double>;

/// Closed-form inverse Fourier transforms rho_{i,k}(tau) = int B_{i,k}(w) e^{2 pi i w tau} dw
/// of every B-spline in a knot vector.
class AcfBasis {
public:
    /// Below |2 pi tau| * (support width) < series_threshold the truncated
    /// power integrals are summed as a power series instead of the closed form.
    explicit AcfBasis(KnotVector kv, double series_threshold = 0.5);

    const KnotVector& knots() const { return kv_; }
    int degree() const { return kv_.degree(); }
    int num_basis() const { return kv_.num_basis(); }
    double series_threshold() const { return threshold_; }
    const TruncatedPowerRep& rep(int i) const { return reps_.at(static_cast<std::size_t>(i)); }

    /// int B_{i,k} = (kappa_{i+k+1} - kappa_i) / (k + 1)
    double mass(int i) const;

    cplx rho(int i, double tau) const;
    cplx rho_series(int i, double tau) const;
    cplx rho_closed_form(int i, double tau) const;
    /// Uniform knots only: h sinc(h tau)^{k+1} e^{2 pi i c_i tau}, c_i the support centre.
    cplx rho_uniform(int i, double tau) const;
    /// Transform of the symmetrised basis (B(w) + B(-w))/2, i.e. Re rho.
    double rho_real(int i, double tau) const { return rho(i, tau).real(); }

    /// All basis transforms at one lag.
    std::vector<cplx> rho_all(double tau) const;

private:
    KnotVector kv_;
    std::vector<TruncatedPowerRep> reps_;
    double threshold_;
    bool uniform_;
};

inline cplx rho_eval(const AcfBasis& ab, int i, double tau) { return ab.rho(i, tau); }
inline cplx rho_eval_uniform(const AcfBasis& ab, int i, double tau) { return ab.rho_uniform(i, tau); }
inline double rho_eval_real(const AcfBasis& ab, int i, double tau) { return ab.rho_real(i, tau); }

/// sin(pi x) / (pi x)
double sinc(double x);

class QuadratureError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Adaptive Gauss-Kronrod quadrature of int B_{i,k}(w) e^{2 pi i w tau} dw,
/// one panel per knot interval, B evaluated by Cox-de Boor. Throws
/// QuadratureError if a panel misses the tolerance.
cplx ift_quadrature_oracle(const KnotVector& kv, int i, double tau, double panel_tol = 1e-12);

/// Panel quadrature of int f(w) e^{2 pi i w tau} dw over [breaks.front(),
/// breaks.back()], panels split at `breaks`.
cplx fourier_quadrature(const std::function<double(double)>& f, const std::vector<double>& breaks, double tau,
                        double panel_tol = 1e-12);
cplx fourier_quadrature_complex(const std::function<cplx(double)>& f, const std::vector<double>& breaks, double tau,
                                double panel_tol = 1e-12);

}  // namespace splinekernel
