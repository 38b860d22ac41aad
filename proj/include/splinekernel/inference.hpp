#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "splinekernel/errors.hpp"
#include "splinekernel/models.hpp"

namespace splinekernel {

// ---------------------------------------------------------------- periodogram

/// I(w_l) = (prod Delta / prod n) |DFT(y)(l)|^2 on the grid w_l = l / (n Delta),
/// l = 0..n-1 per axis. Values are row-major (last axis fastest).
struct Periodogram {
    std::vector<int> shape;
    std::vector<double> spacing;
    std::vector<double> values;

    int dim() const { return static_cast<int>(shape.size()); }
    std::size_t size() const { return values.size(); }
    double frequency(int axis, int l) const {
        return static_cast<double>(l) / (static_cast<double>(shape[axis]) * spacing[axis]);
    }
    /// Frequency aliased into [-1/(2 Delta), 1/(2 Delta)).
    double centred_frequency(int axis, int l) const;
};

Periodogram periodogram(std::span<const double> y, double delta, bool demean = false);
Periodogram periodogram(std::span<const cplx> y, double delta, bool demean = false);
/// `y` is n1 x n2 with axis 0 along rows.
Periodogram periodogram_2d(const Eigen::MatrixXd& y, double delta1, double delta2, bool demean = false);

// ---------------------------------------------------------------- reports

struct FitReport {
    std::vector<double> coeffs;
    double objective = 0.0;
    double grad_norm = 0.0;
    int iterations = 0;
    bool converged = false;
    std::string message;
    int hessian_bandwidth = -1;
    int floor_activations = 0;
    std::vector<double> objective_trace;
};

// ---------------------------------------------------------------- Whittle

struct WhittleOptions {
    /// PSD floor relative to max I over the fitted frequencies.
    double floor_rel = 1e-12;
    /// Keep only frequencies whose centred value satisfies lo <= |w| <= hi (per axis).
    std::optional<std::pair<double, double>> band;
    double grad_tol = 1e-8;
    int max_iter = 500;
};

struct WhittleEval {
    double value = 0.0;
    Eigen::VectorXd gradient;
    Eigen::SparseMatrix<double> hessian;
    int floor_activations = 0;
};

/// Whittle objective sum_l [log f(w_l) + I(w_l) / f(w_l)] over the non-zero
/// Fourier frequencies (l >= 1 on every axis) for a tensor-product spline PSD
/// (one axis for univariate models). The model PSD is folded over aliases
/// w + m/Delta, and symmetrised by point reflection for real processes.
class WhittleProblem {
public:
    WhittleProblem(std::vector<KnotVector> axes, bool real_process, const Periodogram& pg,
                   const WhittleOptions& opts = {});

    int num_coeffs() const { return static_cast<int>(design_.cols()); }
    int num_frequencies() const { return static_cast<int>(design_.rows()); }
    const std::vector<KnotVector>& axes() const { return axes_; }
    bool real_process() const { return real_; }
    /// Row l: aliased, symmetrised basis values at the l-th retained frequency.
    const Eigen::SparseMatrix<double>& design() const { return design_; }
    const Eigen::VectorXd& values() const { return values_; }
    double floor() const { return floor_; }
    const WhittleOptions& options() const { return opts_; }

    WhittleEval evaluate(std::span<const double> coeffs, bool derivatives = true) const;

private:
    std::vector<KnotVector> axes_;
    bool real_;
    WhittleOptions opts_;
    Eigen::SparseMatrix<double> design_;
    Eigen::VectorXd values_;
    double floor_ = 0.0;
};

double whittle_nll(const SplinePsdModel& m, const Periodogram& pg, const WhittleOptions& opts = {});
double whittle_nll(const TensorPsdModel& m, const Periodogram& pg, const WhittleOptions& opts = {});
WhittleEval whittle_grad_hess(const SplinePsdModel& m, const Periodogram& pg, const WhittleOptions& opts = {});
WhittleEval whittle_grad_hess(const TensorPsdModel& m, const Periodogram& pg, const WhittleOptions& opts = {});

struct WhittleFit {
    FitReport report;
    SplinePsdModel model;
};
struct TensorWhittleFit {
    FitReport report;
    TensorPsdModel model;
};

/// Damped Newton in theta with c = theta^2. An empty init scales a flat
/// start to the data.
FitReport fit_whittle(const WhittleProblem& problem, std::span<const double> init = {});
WhittleFit fit_whittle(const Periodogram& pg, const KnotVector& kv, bool real_process,
                       std::span<const double> init = {}, const WhittleOptions& opts = {});
TensorWhittleFit fit_whittle(const Periodogram& pg, const std::vector<KnotVector>& axes, bool real_process,
                             std::span<const double> init = {}, const WhittleOptions& opts = {});

// ---------------------------------------------------------------- Gaussian likelihood

struct GaussianOptions {
    /// Jitter ladder on the diagonal, relative to trace/n: 0, then min, doubling to max.
    double jitter_min_rel = 1e-10;
    double jitter_max_rel = 1e-6;
};

/// Negative log density of y ~ N(0, cov) via Cholesky with jitter.
double gaussian_nll_dense(const Eigen::MatrixXd& cov, std::span<const double> y, const GaussianOptions& opts = {});
/// Circular complex Gaussian: log det(pi cov) + y^H cov^{-1} y.
double gaussian_nll_dense(const Eigen::MatrixXcd& cov, std::span<const cplx> y, const GaussianOptions& opts = {});

struct ToeplitzNll {
    double value = 0.0;
    double jitter = 0.0;
    /// d value / d Gamma(d), one M x M block per lag, Gamma(d) = Cov(y_{t+d}, y_t).
    std::vector<Eigen::MatrixXd> lag_gradient;
};

/// Stationary series on a regular grid: Gamma(d) for d = 0..n-1, rows of y
/// are time points (n x M). Durbin-Levinson (block form for M > 1), O(n^2 M^3).
ToeplitzNll block_toeplitz_nll(const std::vector<Eigen::MatrixXd>& lags, const Eigen::MatrixXd& y,
                               bool gradient = false, const GaussianOptions& opts = {});
ToeplitzNll toeplitz_nll(std::span<const double> lags, std::span<const double> y, bool gradient = false,
                         const GaussianOptions& opts = {});

/// Real-process models with real data. Regular times use the Toeplitz path.
double gaussian_nll(const SplinePsdModel& m, std::span<const double> y, std::span<const double> times,
                    const GaussianOptions& opts = {});
double gaussian_nll(const SplinePsdModel& m, std::span<const cplx> y, std::span<const double> times,
                    const GaussianOptions& opts = {});
/// `y` is n x M, one row per time.
double gaussian_nll(const MatrixSplinePsdModel& m, const Eigen::MatrixXd& y, std::span<const double> times,
                    const GaussianOptions& opts = {});
double gaussian_nll(const TensorPsdModel& m, std::span<const double> y, const Eigen::MatrixXd& points,
                    const GaussianOptions& opts = {});

// ---------------------------------------------------------------- quasi-Newton

struct BfgsOptions {
    double grad_tol = 1e-8;
    int max_iter = 500;
    double armijo = 1e-4;
    int max_backtracks = 60;
};

/// Returns f(x); fills *grad when non-null. May throw NumericalError, which
/// the line search treats as an infinite value.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;

struct BfgsResult {
    Eigen::VectorXd x;
    double value = 0.0;
    double grad_norm = 0.0;
    int iterations = 0;
    bool converged = false;
    std::string message;
    std::vector<double> trace;
};

/// BFGS with backtracking Armijo line search; converged when
/// |grad| < grad_tol * max(1, |f|).
BfgsResult minimize_bfgs(const Objective& f, Eigen::VectorXd x0, const BfgsOptions& opts = {});

/// Central differences with step h * max(1, |x_i|).
Eigen::VectorXd numerical_gradient(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                                   double h = 1e-6);

struct MleOptions {
    BfgsOptions bfgs;
    GaussianOptions gaussian;
    bool analytic_gradient = true;
    double fd_step = 1e-6;
    bool demean = false;
    /// Lower bound for the Whittle-based start, relative to its largest coefficient.
    double init_floor_rel = 1e-3;
};

struct MleFit {
    FitReport report;
    SplinePsdModel model;
};
struct MatrixMleFit {
    FitReport report;
    MatrixSplinePsdModel model;
};

/// Exact Gaussian maximum likelihood for a real process sampled at spacing
/// delta, c = theta^2. An empty init starts from a Whittle fit.
MleFit fit_mle_gaussian(std::span<const double> y, double delta, const KnotVector& kv,
                        std::span<const double> init = {}, const MleOptions& opts = {});
/// Multivariate version, y is n x M; C_i = L_i L_i^T with L_i lower triangular.
/// An empty init starts from per-channel Whittle fits with zero cross terms.
MatrixMleFit fit_mle_gaussian(const Eigen::MatrixXd& y, double delta, const KnotVector& kv,
                              const std::vector<Eigen::MatrixXd>& init = {}, const MleOptions& opts = {});

}  // namespace splinekernel
