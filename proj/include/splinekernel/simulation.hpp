#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "splinekernel/inference.hpp"

namespace splinekernel {

// ---------------------------------------------------------------- Matérn kernels

/// sigma^2 2^{1-nu}/Gamma(nu) (a|tau|)^nu K_nu(a|tau|) with a = sqrt(2 nu) / ell.
/// nu = 3/2 gives sigma^2 (1 + sqrt(3) tau/ell) exp(-sqrt(3) tau/ell).
struct MaternSpec {
    double variance = 1.0;
    double length_scale = 1.0;
    double nu = 1.5;
};

/// Throws unless variance > 0, length_scale > 0 and nu in {1/2, 1, 3/2, 2, 5/2}.
void validate(const MaternSpec& spec);
double matern_acf(const MaternSpec& spec, double tau);
/// Spectral density in cycles per unit, integrating to the variance.
double matern_psd(const MaternSpec& spec, double omega);

/// Bivariate Matérn with shared length scale: marginals of roughness nu11 and
/// nu22, cross-covariance lambda12 sigma1 sigma2 M(tau; nu12, ell).
class BivariateMaternSpec {
public:
    /// Throws if the 2 x 2 spectral matrix is not positive semi-definite.
    BivariateMaternSpec(double variance1, double variance2, double nu11, double nu22, double nu12,
                        double length_scale, double lambda12);

    double variance1() const { return var1_; }
    double variance2() const { return var2_; }
    double nu11() const { return nu11_; }
    double nu22() const { return nu22_; }
    double nu12() const { return nu12_; }
    double length_scale() const { return ell_; }
    double lambda12() const { return lambda_; }

    MaternSpec marginal1() const { return {var1_, ell_, nu11_}; }
    MaternSpec marginal2() const { return {var2_, ell_, nu22_}; }
    double cross(double tau) const;

    /// Largest |lambda12| keeping the spectral matrix PSD for these roughness values.
    static double max_abs_correlation(double nu11, double nu22, double nu12);

private:
    double var1_, var2_, nu11_, nu22_, nu12_, ell_, lambda_;
};

Eigen::Matrix2d bivariate_matern_acf(const BivariateMaternSpec& spec, double tau);

// ---------------------------------------------------------------- simulation

struct SampleOptions {
    GaussianOptions gaussian;
    /// Eigenvalues of the embedding above -negative_tol * max are clamped to zero.
    double negative_tol = 1e-10;
    int max_embedding_doublings = 4;
};

/// Seed for replication `index` of a run with master seed `master`.
std::uint64_t replication_seed(std::uint64_t master, std::uint64_t index, std::uint64_t stream = 0);

/// Zero-mean stationary Gaussian draw y_t, t = 0..n-1 at spacing delta, with
/// Cov(y_{t+d}, y_t) = acf(d delta). Circulant embedding, dense Cholesky fallback.
std::vector<double> sample_gp(const std::function<double(double)>& acf, int n, double delta, std::uint64_t seed,
                              const SampleOptions& opts = {});
/// Multivariate version; acf returns the M x M matrix Cov(y_{t+tau}, y_t). Result is n x M.
Eigen::MatrixXd sample_gp_multivariate(const std::function<Eigen::MatrixXd(double)>& acf, int dim, int n,
                                       double delta, std::uint64_t seed, const SampleOptions& opts = {});

// ---------------------------------------------------------------- estimators and metrics

/// Unbiased empirical ACF (n - tau)^{-1} sum_t y_t y_{t+tau}, tau = 0..max_lag.
std::vector<double> empirical_acf(std::span<const double> y, int max_lag, bool demean = false);
/// Entry (r, s) at lag tau: (n - tau)^{-1} sum_t y_r(t + tau) y_s(t).
std::vector<Eigen::MatrixXd> empirical_cross_acf(const Eigen::MatrixXd& y, int max_lag, bool demean = false);

/// Piecewise-linear function through values[j] at j * spacing; zero beyond the last lag.
std::function<double(double)> lag_interpolant(std::vector<double> values, double spacing = 1.0);

/// Trapezoidal integral of |f - g| over [0, upper] with the given step.
double integrated_abs_error(const std::function<double(double)>& f, const std::function<double(double)>& g,
                            double upper, double step = 0.1);
/// integrated_abs_error divided by the interval length; benchmark tables report 100 x this.
double iae(const std::function<double(double)>& f, const std::function<double(double)>& g, double upper,
           double step = 0.1);

// ---------------------------------------------------------------- approximation rates

struct JacksonResult {
    std::vector<double> h;
    std::vector<double> l1_error;
    double slope = 0.0;  // d log error / d log(1/h), -(k+1) at the Jackson rate
};

/// L1 error on [lo, hi] of the quasi-interpolant on uniform knots of each spacing
/// h (extended by k past each end), and the least-squares slope of log error on log(1/h).
JacksonResult jackson_rate_study(const std::function<double(double)>& target, double lo, double hi, int degree,
                                 const std::vector<double>& h);

struct TailScan {
    std::vector<double> tau;
    std::vector<double> scaled;  // |gamma_ref - gamma| tau^power
    double first_window_max = 0.0;
    double last_window_max = 0.0;
    bool bounded = false;  // last quarter max <= 2 x first quarter max
};

TailScan tail_decay_scan(const SplinePsdModel& model, const SplinePsdModel& reference, double tau_lo, double tau_hi,
                         int points, int power);

// ---------------------------------------------------------------- benchmarks

struct Summary {
    double mean = 0.0;
    double sd = 0.0;
    int reps = 0;
    int failures = 0;
    int nonconverged = 0;
    std::vector<double> values;  // per replication, NaN where the fit failed
};

/// Mean and sample standard deviation over finite values.
Summary summarise(std::vector<double> values, int nonconverged = 0);

struct Table1Config {
    std::vector<double> ells{2.0};
    std::vector<int> degrees{0, 1, 2};
    std::vector<int> n_knots{4};
    std::vector<bool> demean{false};
    int reps = 100;
    std::uint64_t seed = 20240601;
    int n = 2000;
    double delta = 1.0;
    double offset = 0.01;
    bool empirical = true;
    double iae_step = 0.1;
    int threads = 0;  // 0: default_thread_count()
    MleOptions mle;
};

struct Table1Row {
    double ell = 0.0;
    int degree = -1;   // -1 for the empirical estimator
    int n_knots = -1;  // -1 for the empirical estimator
    bool demean = false;
    std::string estimator;
    Summary summary;
};

/// Matérn-3/2 univariate study; IAE x 100 per cell. One simulated series per
/// (ell, replication) is shared by every estimator.
std::vector<Table1Row> run_table1_benchmark(const Table1Config& config);

struct Table2Config {
    std::vector<double> lambdas{-0.9, -0.5, 0.0, 0.5, 0.9};
    std::vector<int> degrees{0, 1, 2};
    int n_knots = 3;
    int reps = 100;
    std::uint64_t seed = 20240602;
    int n = 1024;
    double delta = 1.0;
    double ell = 2.0;
    double nu11 = 2.0;
    double nu22 = 1.0;
    double nu12 = 1.5;
    double offset = 0.01;
    bool empirical = true;
    bool parametric = true;
    double iae_step = 0.1;
    int threads = 0;
    MleOptions mle;
};

struct Table2Row {
    double lambda12 = 0.0;
    std::string component;  // gamma11, gamma12, gamma22
    int degree = -1;
    std::string estimator;
    Summary summary;
};

std::vector<Table2Row> run_table2_benchmark(const Table2Config& config);

// ---------------------------------------------------------------- workers

/// SPLINEKERNEL_THREADS if set and positive, else the hardware concurrency.
int default_thread_count();
/// Runs fn(0..count-1) on up to `threads` workers; rethrows the first exception.
void parallel_for(int count, int threads, const std::function<void(int)>& fn);

}  // namespace splinekernel
