#pragma once

#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

namespace splinekernel {

/// Strictly increasing spectral knot sequence kappa_0 < ... < kappa_{m+k}
/// defining m B-splines of degree k. Frequencies are in cycles per unit of t.
class KnotVector {
public:
    KnotVector(std::vector<double> knots, int degree);

    const std::vector<double>& knots() const { return knots_; }
    int degree() const { return degree_; }
    int num_basis() const { return static_cast<int>(knots_.size()) - degree_ - 1; }
    std::size_t size() const { return knots_.size(); }
    double operator[](std::size_t j) const { return knots_[j]; }
    double front() const { return knots_.front(); }
    double back() const { return knots_.back(); }

    double h_max() const;
    double h_min() const;
    bool is_uniform(double rel_tol = 1e-12) const;
    /// Support [kappa_i, kappa_{i+k+1}] of basis i.
    double support_lo(int i) const { return knots_[i]; }
    double support_hi(int i) const { return knots_[i + degree_ + 1]; }

    bool operator==(const KnotVector&) const = default;

private:
    std::vector<double> knots_;
    int degree_;
};

/// n_points knots (ends included) equally spaced in log(omega + offset) on
/// [lo, hi]; for degree > 0
/// the sequence is extended by `degree` knots past each end, reflecting the
/// adjacent spacings.
KnotVector make_knots_offset_log(double lo, double hi, int n_points, double offset, int degree);

/// Equally spaced knots on [lo, hi] (n_points, ends included), extended like
/// make_knots_offset_log.
KnotVector make_knots_uniform(double lo, double hi, int n_points, int degree);

/// Extends a strictly increasing sequence by `count` knots past each end by
/// reflecting the spacings next to that end.
std::vector<double> extend_by_reflection(const std::vector<double>& inner, int count);

/// B_{i,k}(omega) by the Cox-de Boor recursion. Support is [kappa_i,
/// kappa_{i+k+1}), except that the right end of the knot span is included.
double bspline_eval(const KnotVector& kv, int i, double omega);

/// All nonzero basis values at omega: pairs (i, B_i(omega)).
std::vector<std::pair<int, double>> bspline_nonzero(const KnotVector& kv, double omega);

/// Dense (grid.size() x m) matrix of basis values.
Eigen::MatrixXd design_matrix(const KnotVector& kv, std::span<const double> grid);
Eigen::SparseMatrix<double> design_matrix_sparse(const KnotVector& kv, std::span<const double> grid);

/// Shifted truncated-power form of one B-spline:
///   B_{i,k}(w) = sum_{j=0}^{k} alpha[j] (w - knots[j])^k_+ 1{w < knots[k+1]}
/// with knots = kappa_i..kappa_{i+k+1}. alpha[k+1] is the cancelling
/// coefficient of the untruncated form.
struct TruncatedPowerRep {
    int index = 0;
    int degree = 0;
    std::vector<double> alpha;   // k+2 entries
    std::vector<double> knots;   // k+2 local knots

    double cutoff() const { return knots.back(); }
    double value(double omega) const;
};

TruncatedPowerRep truncated_power_coeffs(const KnotVector& kv, int i);

/// Divided-difference weights for any degree (used for k >= 3 and as a
/// cross-check of the closed forms for k <= 2).
std::vector<double> truncated_power_alpha_divided_differences(std::span<const double> local_knots);

/// Greville abscissae k^{-1} sum_{j=i+1}^{i+k} kappa_j (interval midpoints for k = 0).
std::vector<double> greville_sites(const KnotVector& kv);

/// Schoenberg variation-diminishing coefficients c_i = f(greville_i).
/// Reproduces polynomials of degree <= 1 only.
std::vector<double> schoenberg_coefficients(const KnotVector& kv, const std::function<double(double)>& f);

/// Local quasi-interpolant reproducing polynomials of degree <= k. Equals
/// Greville sampling for k <= 1; for k >= 2 applies the de Boor-Fix dual
/// functional to the degree-k interpolant of f on [kappa_{i+1}, kappa_{i+k}].
std::vector<double> quasi_interpolant(const KnotVector& kv, const std::function<double(double)>& f);

/// sum_i c_i B_i(omega)
double spline_value(const KnotVector& kv, std::span<const double> coeffs, double omega);

}  // namespace splinekernel
