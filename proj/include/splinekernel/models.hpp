#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "splinekernel/spectral.hpp"

namespace splinekernel {

/// f(w) = sum_i c_i B_i(w), gamma(tau) = sum_i c_i rho_i(tau).
/// With real_process set, both are symmetrised: f(w) -> (f(w) + f(-w))/2 and
/// gamma -> Re gamma. Coefficients stay one-sided.
class SplinePsdModel {
public:
    SplinePsdModel(KnotVector kv, std::vector<double> coeffs, bool real_process = false);
    SplinePsdModel(AcfBasis basis, std::vector<double> coeffs, bool real_process = false);

    const AcfBasis& basis() const { return basis_; }
    const KnotVector& knots() const { return basis_.knots(); }
    const std::vector<double>& coeffs() const { return coeffs_; }
    bool real_process() const { return real_; }
    int num_basis() const { return basis_.num_basis(); }

    double psd(double omega) const;
    cplx acf(double tau) const;
    /// gamma(0) = sum_i c_i mass_i.
    double variance() const;

    SplinePsdModel with_coeffs(std::vector<double> coeffs) const;

private:
    double one_sided(double omega) const;

    AcfBasis basis_;
    std::vector<double> coeffs_;
    bool real_;
};

inline double psd_eval(const SplinePsdModel& m, double omega) { return m.psd(omega); }
inline cplx acf_eval(const SplinePsdModel& m, double tau) { return m.acf(tau); }

/// Pairwise cross-spectral time delay: entry (r, s) of the spectrum carries
/// e^{-2 pi i w t0} and (s, r) its conjugate.
struct PhaseDelay {
    int r = 0;
    int s = 0;
    double t0 = 0.0;
};

/// M x M spectral matrix f(w) = sum_i C_i B_i(w) on one shared knot vector,
/// each C_i Hermitian positive semi-definite.
class MatrixSplinePsdModel {
public:
    MatrixSplinePsdModel(KnotVector kv, std::vector<Eigen::MatrixXcd> coeffs, bool real_process = false);

    const AcfBasis& basis() const { return basis_; }
    const KnotVector& knots() const { return basis_.knots(); }
    const std::vector<Eigen::MatrixXcd>& coeffs() const { return coeffs_; }
    bool real_process() const { return real_; }
    int dim() const { return static_cast<int>(delays_.rows()); }
    int num_basis() const { return basis_.num_basis(); }

    /// Antisymmetric matrix of accumulated delays; entry (r, s) is t0 for that pair.
    const Eigen::MatrixXd& delays() const { return delays_; }
    std::vector<PhaseDelay> phase_delays() const;

    Eigen::MatrixXcd psd(double omega) const;
    Eigen::MatrixXcd acf(double tau) const;

    /// Adds a delay t0 to pair (r, s). Delays must stay expressible as
    /// per-channel offsets d_r - d_s, otherwise the spectrum can lose
    /// positivity; violations throw.
    MatrixSplinePsdModel with_phase_delay(int r, int s, double t0) const;

private:
    Eigen::MatrixXcd one_sided(double omega) const;

    AcfBasis basis_;
    std::vector<Eigen::MatrixXcd> coeffs_;
    bool real_;
    Eigen::MatrixXd delays_;
};

inline Eigen::MatrixXcd matrix_psd_eval(const MatrixSplinePsdModel& m, double omega) { return m.psd(omega); }
inline Eigen::MatrixXcd matrix_acf_eval(const MatrixSplinePsdModel& m, double tau) { return m.acf(tau); }
inline MatrixSplinePsdModel apply_phase_delay(const MatrixSplinePsdModel& m, int r, int s, double t0) {
    return m.with_phase_delay(r, s, t0);
}

/// f(w) = sum_I c_I prod_j B^{(j)}_{I_j}(w_j). Coefficients are stored dense in
/// row-major order (last axis fastest).
class TensorPsdModel {
public:
    TensorPsdModel(std::vector<KnotVector> axes, std::vector<double> coeffs, bool real_process = false);

    int dim() const { return static_cast<int>(axes_.size()); }
    const std::vector<AcfBasis>& axes() const { return axes_; }
    const std::vector<int>& shape() const { return shape_; }
    const std::vector<double>& coeffs() const { return coeffs_; }
    bool real_process() const { return real_; }

    double psd(std::span<const double> omega) const;
    cplx acf(std::span<const double> tau) const;
    double variance() const;

    TensorPsdModel with_coeffs(std::vector<double> coeffs) const;

private:
    double one_sided(std::span<const double> omega) const;
    template <class T>
    T contract(const std::vector<std::vector<T>>& per_axis) const;

    std::vector<AcfBasis> axes_;
    std::vector<int> shape_;
    std::vector<double> coeffs_;
    bool real_;
};

inline cplx tensor_acf_eval(const TensorPsdModel& m, std::span<const double> tau) { return m.acf(tau); }

/// Outer product of the lag-zero axis profiles of a 2-D model:
/// gamma_sep(t1, t2) = g1(t1) g2(t2) / gamma(0, 0).
class SeparableSurrogate {
public:
    explicit SeparableSurrogate(TensorPsdModel model);

    const TensorPsdModel& model() const { return model_; }
    double variance() const { return variance_; }
    cplx axis1(double tau1) const;
    cplx axis2(double tau2) const;
    cplx value(double tau1, double tau2) const;
    /// (gamma - gamma_sep) / gamma(0, 0)
    cplx difference(double tau1, double tau2) const;
    /// Difference on the grid tau1 x tau2; rows follow tau1.
    Eigen::MatrixXcd difference_field(std::span<const double> tau1, std::span<const double> tau2) const;

private:
    TensorPsdModel model_;
    double variance_;
};

inline SeparableSurrogate separable_surrogate(const TensorPsdModel& m) { return SeparableSurrogate(m); }

/// Entry (a, b) = gamma(t_a - t_b). The real versions require real_process.
Eigen::MatrixXcd covariance_matrix_complex(const SplinePsdModel& m, std::span<const double> times);
Eigen::MatrixXd covariance_matrix(const SplinePsdModel& m, std::span<const double> times);
/// Time-major blocks: row a*M + r, column b*M + s holds gamma^{(r,s)}(t_a - t_b).
Eigen::MatrixXcd covariance_matrix_complex(const MatrixSplinePsdModel& m, std::span<const double> times);
Eigen::MatrixXd covariance_matrix(const MatrixSplinePsdModel& m, std::span<const double> times);
/// One sample location per row of `points` (n x D).
Eigen::MatrixXcd covariance_matrix_complex(const TensorPsdModel& m, const Eigen::MatrixXd& points);
Eigen::MatrixXd covariance_matrix(const TensorPsdModel& m, const Eigen::MatrixXd& points);

}  // namespace splinekernel
