#include "splinekernel/simulation.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <complex>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <boost/math/quadrature/gauss.hpp>

#include "splinekernel/errors.hpp"
#include "splinekernel/fft.hpp"
#include "splinekernel/knots.hpp"

namespace splinekernel {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool supported_nu(double nu) {
    for (double v : {0.5, 1.0, 1.5, 2.0, 2.5})
        if (nu == v) return true;
    return false;
}

// Unit-variance Matérn correlation at scaled lag x = a |tau|.
double matern_correlation(double nu, double x) {
    if (x == 0.0) return 1.0;
    if (nu == 0.5) return std::exp(-x);
    if (nu == 1.5) return (1.0 + x) * std::exp(-x);
    if (nu == 2.5) return (1.0 + x + x * x / 3.0) * std::exp(-x);
    if (x > 700.0) return 0.0;
    if (nu == 1.0) return x * std::cyl_bessel_k(1.0, x);
    return 0.5 * x * x * std::cyl_bessel_k(2.0, x);
}

// Unit-variance Matérn density in angular-free cycles, scale a.
double matern_density(double nu, double a, double omega) {
    const double c = std::tgamma(nu + 0.5) / (std::tgamma(nu) * std::sqrt(kPi));
    const double x = 2.0 * kPi * omega;
    return 2.0 * kPi * c * std::pow(a, 2.0 * nu) / std::pow(a * a + x * x, nu + 0.5);
}

double matern_scale(double nu, double ell) { return std::sqrt(2.0 * nu) / ell; }

double correlation_at(double nu, double ell, double tau) {
    return matern_correlation(nu, matern_scale(nu, ell) * std::abs(tau));
}

Eigen::LLT<Eigen::MatrixXd> jittered_cholesky(Eigen::MatrixXd cov, const GaussianOptions& opts) {
    const double base = cov.trace() / static_cast<double>(cov.rows());
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() == Eigen::Success) return llt;
    for (double rel = opts.jitter_min_rel; rel <= opts.jitter_max_rel * (1.0 + 1e-12); rel *= 2.0) {
        Eigen::MatrixXd shifted = cov;
        shifted.diagonal().array() += rel * base;
        llt.compute(shifted);
        if (llt.info() == Eigen::Success) return llt;
    }
    std::ostringstream msg;
    msg << "covariance is indefinite beyond the jitter ladder (n = " << cov.rows()
        << ", max jitter " << opts.jitter_max_rel * base << ")";
    throw NumericalError(msg.str());
}

Eigen::MatrixXd dense_multivariate_draw(const std::function<Eigen::MatrixXd(double)>& acf, int dim, int n,
                                        double delta, std::mt19937_64& rng, const SampleOptions& opts) {
    const int size = n * dim;
    std::vector<Eigen::MatrixXd> lags(static_cast<std::size_t>(n));
    for (int d = 0; d < n; ++d) lags[static_cast<std::size_t>(d)] = acf(d * delta);
    Eigen::MatrixXd cov(size, size);
    for (int t = 0; t < n; ++t)
        for (int s = 0; s < n; ++s) {
            const auto& g = lags[static_cast<std::size_t>(std::abs(t - s))];
            if (t >= s)
                cov.block(t * dim, s * dim, dim, dim) = g;
            else
                cov.block(t * dim, s * dim, dim, dim) = g.transpose();
        }
    const auto llt = jittered_cholesky(std::move(cov), opts.gaussian);
    std::normal_distribution<double> normal;
    Eigen::VectorXd z(size);
    for (int i = 0; i < size; ++i) z[i] = normal(rng);
    const Eigen::VectorXd x = llt.matrixL() * z;
    Eigen::MatrixXd out(n, dim);
    for (int t = 0; t < n; ++t)
        for (int r = 0; r < dim; ++r) out(t, r) = x[t * dim + r];
    return out;
}

// Circulant embedding of size m; returns false when the embedding is indefinite.
bool circulant_draw(const std::function<Eigen::MatrixXd(double)>& acf, int dim, int n, int m, double delta,
                    std::mt19937_64& rng, const SampleOptions& opts, Eigen::MatrixXd& out) {
    const int half = m / 2;
    std::vector<Eigen::MatrixXd> first(static_cast<std::size_t>(m));
    for (int j = 0; j <= half; ++j) first[static_cast<std::size_t>(j)] = acf(j * delta);
    first[static_cast<std::size_t>(half)] =
        0.5 * (first[static_cast<std::size_t>(half)] + first[static_cast<std::size_t>(half)].transpose());
    for (int j = half + 1; j < m; ++j)
        first[static_cast<std::size_t>(j)] = first[static_cast<std::size_t>(m - j)].transpose();

    // spectrum[k](r, s) = sum_j C_j(r, s) exp(-2 pi i j k / m)
    std::vector<Eigen::MatrixXcd> spectrum(static_cast<std::size_t>(m), Eigen::MatrixXcd(dim, dim));
    std::vector<cplx> column(static_cast<std::size_t>(m));
    for (int r = 0; r < dim; ++r)
        for (int s = 0; s < dim; ++s) {
            for (int j = 0; j < m; ++j) column[static_cast<std::size_t>(j)] = first[static_cast<std::size_t>(j)](r, s);
            const auto transformed = fft(column);
            for (int k = 0; k < m; ++k) spectrum[static_cast<std::size_t>(k)](r, s) = transformed[static_cast<std::size_t>(k)];
        }

    std::vector<Eigen::MatrixXcd> factors(static_cast<std::size_t>(m));
    double max_eig = 0.0;
    double min_eig = std::numeric_limits<double>::infinity();
    for (int k = 0; k < m; ++k) {
        Eigen::MatrixXcd h = spectrum[static_cast<std::size_t>(k)];
        h = 0.5 * (h + h.adjoint()).eval();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(h);
        const Eigen::VectorXd values = eig.eigenvalues();
        max_eig = std::max(max_eig, values.maxCoeff());
        min_eig = std::min(min_eig, values.minCoeff());
        const Eigen::VectorXd root = (values.array().max(0.0) / static_cast<double>(m)).sqrt();
        factors[static_cast<std::size_t>(k)] = eig.eigenvectors() * root.asDiagonal();
    }
    if (min_eig < -opts.negative_tol * max_eig) return false;

    std::normal_distribution<double> normal;
    std::vector<std::vector<cplx>> weights(static_cast<std::size_t>(dim), std::vector<cplx>(static_cast<std::size_t>(m)));
    Eigen::VectorXcd xi(dim);
    for (int k = 0; k < m; ++k) {
        for (int r = 0; r < dim; ++r) {
            const double re = normal(rng);
            const double im = normal(rng);
            xi[r] = cplx(re, im);
        }
        const Eigen::VectorXcd w = factors[static_cast<std::size_t>(k)] * xi;
        for (int r = 0; r < dim; ++r) weights[static_cast<std::size_t>(r)][static_cast<std::size_t>(k)] = w[r];
    }
    out.resize(n, dim);
    for (int r = 0; r < dim; ++r) {
        const auto z = fft(weights[static_cast<std::size_t>(r)], true);
        for (int t = 0; t < n; ++t) out(t, r) = z[static_cast<std::size_t>(t)].real();
    }
    return true;
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

}  // namespace

// ---------------------------------------------------------------- Matérn

void validate(const MaternSpec& spec) {
    if (!(spec.variance > 0.0) || !std::isfinite(spec.variance))
        throw std::invalid_argument("Matérn variance must be positive");
    if (!(spec.length_scale > 0.0) || !std::isfinite(spec.length_scale))
        throw std::invalid_argument("Matérn length scale must be positive");
    if (!supported_nu(spec.nu))
        throw std::invalid_argument("Matérn nu must be one of 0.5, 1, 1.5, 2, 2.5");
}

double matern_acf(const MaternSpec& spec, double tau) {
    validate(spec);
    return spec.variance * correlation_at(spec.nu, spec.length_scale, tau);
}

double matern_psd(const MaternSpec& spec, double omega) {
    validate(spec);
    return spec.variance * matern_density(spec.nu, matern_scale(spec.nu, spec.length_scale), omega);
}

double BivariateMaternSpec::max_abs_correlation(double nu11, double nu22, double nu12) {
    for (double nu : {nu11, nu22, nu12})
        if (!supported_nu(nu)) throw std::invalid_argument("Matérn nu must be one of 0.5, 1, 1.5, 2, 2.5");
    const double a11 = matern_scale(nu11, 1.0);
    const double a22 = matern_scale(nu22, 1.0);
    const double a12 = matern_scale(nu12, 1.0);
    double bound = 1.0;
    auto visit = [&](double omega) {
        const double cross = matern_density(nu12, a12, omega);
        if (cross <= 0.0) return;
        const double ratio = matern_density(nu11, a11, omega) * matern_density(nu22, a22, omega) / (cross * cross);
        bound = std::min(bound, ratio);
    };
    visit(0.0);
    const int points = 4000;
    for (int j = 0; j <= points; ++j) visit(std::pow(10.0, -6.0 + 12.0 * j / points));
    return std::sqrt(std::max(bound, 0.0));
}

BivariateMaternSpec::BivariateMaternSpec(double variance1, double variance2, double nu11, double nu22, double nu12,
                                         double length_scale, double lambda12)
    : var1_(variance1), var2_(variance2), nu11_(nu11), nu22_(nu22), nu12_(nu12), ell_(length_scale),
      lambda_(lambda12) {
    validate(marginal1());
    validate(marginal2());
    validate(MaternSpec{1.0, ell_, nu12_});
    if (!(std::abs(lambda_) <= 1.0)) throw std::invalid_argument("lambda12 must lie in [-1, 1]");
    const double bound = max_abs_correlation(nu11_, nu22_, nu12_);
    if (std::abs(lambda_) > bound * (1.0 + 1e-12)) {
        std::ostringstream msg;
        msg << "bivariate Matérn spectral matrix is not positive semi-definite: |lambda12| = " << std::abs(lambda_)
            << " exceeds " << bound;
        throw std::invalid_argument(msg.str());
    }
}

double BivariateMaternSpec::cross(double tau) const {
    return lambda_ * std::sqrt(var1_ * var2_) * correlation_at(nu12_, ell_, tau);
}

Eigen::Matrix2d bivariate_matern_acf(const BivariateMaternSpec& spec, double tau) {
    Eigen::Matrix2d g;
    g(0, 0) = spec.variance1() * correlation_at(spec.nu11(), spec.length_scale(), tau);
    g(1, 1) = spec.variance2() * correlation_at(spec.nu22(), spec.length_scale(), tau);
    g(0, 1) = g(1, 0) = spec.cross(tau);
    return g;
}

// ---------------------------------------------------------------- simulation

std::uint64_t replication_seed(std::uint64_t master, std::uint64_t index, std::uint64_t stream) {
    auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v & 0xffffffffu); };
    auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
    std::seed_seq seq{lo(master), hi(master), lo(index), hi(index), lo(stream), hi(stream)};
    std::array<std::uint32_t, 2> out{};
    seq.generate(out.begin(), out.end());
    return (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
}

Eigen::MatrixXd sample_gp_multivariate(const std::function<Eigen::MatrixXd(double)>& acf, int dim, int n,
                                       double delta, std::uint64_t seed, const SampleOptions& opts) {
    if (n < 1) throw std::invalid_argument("sample length must be positive");
    if (dim < 1) throw std::invalid_argument("process dimension must be positive");
    if (!(delta > 0.0)) throw std::invalid_argument("sample spacing must be positive");
    std::mt19937_64 rng(seed);
    Eigen::MatrixXd out;
    int m = 2 * std::max(n, 1);
    for (int attempt = 0; attempt <= opts.max_embedding_doublings; ++attempt, m *= 2) {
        std::mt19937_64 trial = rng;
        if (circulant_draw(acf, dim, n, m, delta, trial, opts, out)) return out;
    }
    return dense_multivariate_draw(acf, dim, n, delta, rng, opts);
}

std::vector<double> sample_gp(const std::function<double(double)>& acf, int n, double delta, std::uint64_t seed,
                              const SampleOptions& opts) {
    const auto wrapped = [&acf](double tau) { return Eigen::MatrixXd::Constant(1, 1, acf(tau)); };
    const Eigen::MatrixXd draw = sample_gp_multivariate(wrapped, 1, n, delta, seed, opts);
    return {draw.data(), draw.data() + draw.size()};
}

// ---------------------------------------------------------------- estimators and metrics

std::vector<double> empirical_acf(std::span<const double> y, int max_lag, bool demean) {
    const int n = static_cast<int>(y.size());
    if (max_lag < 0 || max_lag >= n) throw std::invalid_argument("max_lag must satisfy 0 <= max_lag < n");
    std::vector<double> x(y.begin(), y.end());
    if (demean) {
        const double mu = mean_of(x);
        for (double& v : x) v -= mu;
    }
    std::vector<double> out(static_cast<std::size_t>(max_lag) + 1);
    for (int d = 0; d <= max_lag; ++d) {
        double s = 0.0;
        for (int t = 0; t + d < n; ++t) s += x[static_cast<std::size_t>(t)] * x[static_cast<std::size_t>(t + d)];
        out[static_cast<std::size_t>(d)] = s / (n - d);
    }
    return out;
}

std::vector<Eigen::MatrixXd> empirical_cross_acf(const Eigen::MatrixXd& y, int max_lag, bool demean) {
    const int n = static_cast<int>(y.rows());
    if (max_lag < 0 || max_lag >= n) throw std::invalid_argument("max_lag must satisfy 0 <= max_lag < n");
    Eigen::MatrixXd x = y;
    if (demean) x.rowwise() -= x.colwise().mean();
    std::vector<Eigen::MatrixXd> out(static_cast<std::size_t>(max_lag) + 1);
    for (int d = 0; d <= max_lag; ++d) {
        out[static_cast<std::size_t>(d)] =
            x.bottomRows(n - d).transpose() * x.topRows(n - d) / static_cast<double>(n - d);
    }
    return out;
}

std::function<double(double)> lag_interpolant(std::vector<double> values, double spacing) {
    if (values.empty()) throw std::invalid_argument("lag_interpolant needs at least one value");
    if (!(spacing > 0.0)) throw std::invalid_argument("lag spacing must be positive");
    return [values = std::move(values), spacing](double tau) {
        const double u = std::abs(tau) / spacing;
        const auto last = static_cast<double>(values.size() - 1);
        if (u > last) return 0.0;
        const auto j = static_cast<std::size_t>(std::floor(u));
        if (static_cast<double>(j) >= last) return values.back();
        const double w = u - static_cast<double>(j);
        return (1.0 - w) * values[j] + w * values[j + 1];
    };
}

double integrated_abs_error(const std::function<double(double)>& f, const std::function<double(double)>& g,
                            double upper, double step) {
    if (!(upper >= 0.0)) throw std::invalid_argument("integration bound must be nonnegative");
    if (!(step > 0.0)) throw std::invalid_argument("integration step must be positive");
    if (upper == 0.0) return 0.0;
    const int intervals = std::max(1, static_cast<int>(std::llround(upper / step)));
    const double h = upper / intervals;
    double total = 0.0;
    for (int j = 0; j <= intervals; ++j) {
        const double tau = j * h;
        const double w = (j == 0 || j == intervals) ? 0.5 : 1.0;
        total += w * std::abs(f(tau) - g(tau));
    }
    return total * h;
}

double iae(const std::function<double(double)>& f, const std::function<double(double)>& g, double upper,
           double step) {
    if (!(upper > 0.0)) throw std::invalid_argument("integration bound must be positive");
    return integrated_abs_error(f, g, upper, step) / upper;
}

// ---------------------------------------------------------------- approximation rates

JacksonResult jackson_rate_study(const std::function<double(double)>& target, double lo, double hi, int degree,
                                 const std::vector<double>& h) {
    if (!(hi > lo)) throw std::invalid_argument("Jackson study needs lo < hi");
    if (h.size() < 2) throw std::invalid_argument("Jackson study needs at least two spacings");
    JacksonResult result;
    for (double spacing : h) {
        const int n_points = static_cast<int>(std::llround((hi - lo) / spacing)) + 1;
        const KnotVector kv = make_knots_uniform(lo, hi, n_points, degree);
        const auto coeffs = quasi_interpolant(kv, target);
        double err = 0.0;
        const double width = (hi - lo) / (n_points - 1);
        for (int j = 0; j + 1 < n_points; ++j) {
            const double a = lo + j * width;
            const double b = (j + 2 == n_points) ? hi : a + width;
            err += boost::math::quadrature::gauss<double, 20>::integrate(
                [&](double w) { return std::abs(target(w) - spline_value(kv, coeffs, w)); }, a, b);
        }
        result.h.push_back(width);
        result.l1_error.push_back(err);
    }
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const auto count = static_cast<double>(result.h.size());
    for (std::size_t j = 0; j < result.h.size(); ++j) {
        const double x = -std::log(result.h[j]);
        const double y = std::log(result.l1_error[j]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    result.slope = (count * sxy - sx * sy) / (count * sxx - sx * sx);
    return result;
}

TailScan tail_decay_scan(const SplinePsdModel& model, const SplinePsdModel& reference, double tau_lo, double tau_hi,
                         int points, int power) {
    if (!(tau_hi > tau_lo) || !(tau_lo > 0.0)) throw std::invalid_argument("tail scan needs 0 < tau_lo < tau_hi");
    if (points < 8) throw std::invalid_argument("tail scan needs at least 8 points");
    TailScan scan;
    const double step = std::log(tau_hi / tau_lo) / (points - 1);
    for (int j = 0; j < points; ++j) {
        const double tau = tau_lo * std::exp(step * j);
        scan.tau.push_back(tau);
        scan.scaled.push_back(std::abs(reference.acf(tau) - model.acf(tau)) * std::pow(tau, power));
    }
    const int window = points / 4;
    scan.first_window_max = *std::max_element(scan.scaled.begin(), scan.scaled.begin() + window);
    scan.last_window_max = *std::max_element(scan.scaled.end() - window, scan.scaled.end());
    scan.bounded = scan.last_window_max <= 2.0 * scan.first_window_max;
    return scan;
}

// ---------------------------------------------------------------- benchmarks

Summary summarise(std::vector<double> values, int nonconverged) {
    Summary s;
    s.reps = static_cast<int>(values.size());
    s.nonconverged = nonconverged;
    double sum = 0.0;
    int finite = 0;
    for (double v : values) {
        if (std::isfinite(v)) {
            sum += v;
            ++finite;
        } else {
            ++s.failures;
        }
    }
    s.mean = finite > 0 ? sum / finite : kNaN;
    double ss = 0.0;
    for (double v : values)
        if (std::isfinite(v)) ss += (v - s.mean) * (v - s.mean);
    s.sd = finite > 1 ? std::sqrt(ss / (finite - 1)) : kNaN;
    s.values = std::move(values);
    return s;
}

namespace {

struct Outcome {
    double value = kNaN;
    bool converged = true;
};

int lag_count(double upper, double delta, int n) {
    return std::min(n - 1, static_cast<int>(std::ceil(upper / delta)) + 1);
}

Summary summarise_outcomes(const std::vector<Outcome>& outcomes) {
    std::vector<double> values;
    int nonconverged = 0;
    for (const auto& o : outcomes) {
        values.push_back(o.value);
        if (std::isfinite(o.value) && !o.converged) ++nonconverged;
    }
    return summarise(std::move(values), nonconverged);
}

// Parametric bivariate Matérn fit: log variances, log length scale and
// lambda = bound tanh(u), roughness fixed.
struct ParametricFit {
    Eigen::VectorXd params;
    bool converged = false;
};

BivariateMaternSpec spec_from(const Eigen::VectorXd& u, const Table2Config& c, double bound) {
    return BivariateMaternSpec(std::exp(u[0]), std::exp(u[1]), c.nu11, c.nu22, c.nu12, std::exp(u[2]),
                               bound * std::tanh(u[3]));
}

std::vector<Eigen::MatrixXd> matern_lags(const BivariateMaternSpec& spec, int n, double delta) {
    std::vector<Eigen::MatrixXd> lags(static_cast<std::size_t>(n));
    for (int d = 0; d < n; ++d) lags[static_cast<std::size_t>(d)] = bivariate_matern_acf(spec, d * delta);
    return lags;
}

double length_scale_from_lag1(double nu, double rho1, double delta) {
    rho1 = std::clamp(rho1, 1e-3, 1.0 - 1e-6);
    double lo = 1e-3 * delta, hi = 1e4 * delta;
    for (int it = 0; it < 200; ++it) {
        const double mid = std::sqrt(lo * hi);
        if (correlation_at(nu, mid, delta) < rho1)
            lo = mid;
        else
            hi = mid;
    }
    return std::sqrt(lo * hi);
}

ParametricFit fit_parametric(const Eigen::MatrixXd& y, const Table2Config& c, bool demean) {
    const int n = static_cast<int>(y.rows());
    Eigen::MatrixXd x = y;
    if (demean) x.rowwise() -= x.colwise().mean();
    const double bound = BivariateMaternSpec::max_abs_correlation(c.nu11, c.nu22, c.nu12);
    const auto g = empirical_cross_acf(x, 1);
    const double v1 = g[0](0, 0), v2 = g[0](1, 1);
    const double ell = length_scale_from_lag1(c.nu11, g[1](0, 0) / v1, c.delta);
    const double r = std::clamp(g[0](0, 1) / std::sqrt(v1 * v2) / bound, -0.95, 0.95);
    Eigen::VectorXd u0(4);
    u0 << std::log(v1), std::log(v2), std::log(ell), std::atanh(r);

    const Objective objective = [&](const Eigen::VectorXd& u, Eigen::VectorXd* grad) {
        const auto spec = spec_from(u, c, bound);
        const auto nll = block_toeplitz_nll(matern_lags(spec, n, c.delta), x, grad != nullptr, c.mle.gaussian);
        if (grad) {
            grad->resize(4);
            for (int p = 0; p < 4; ++p) {
                const double h = 1e-6 * std::max(1.0, std::abs(u[p]));
                Eigen::VectorXd up = u, dn = u;
                up[p] += h;
                dn[p] -= h;
                const auto sp = spec_from(up, c, bound);
                const auto sd = spec_from(dn, c, bound);
                double acc = 0.0;
                for (int d = 0; d < n; ++d) {
                    const Eigen::Matrix2d dg = (bivariate_matern_acf(sp, d * c.delta) -
                                                bivariate_matern_acf(sd, d * c.delta)) / (2.0 * h);
                    acc += (nll.lag_gradient[static_cast<std::size_t>(d)].array() * dg.array()).sum();
                }
                (*grad)[p] = acc;
            }
        }
        return nll.value;
    };
    const auto result = minimize_bfgs(objective, u0, c.mle.bfgs);
    return {result.x, result.converged};
}

}  // namespace

std::vector<Table1Row> run_table1_benchmark(const Table1Config& config) {
    if (config.reps < 1) throw std::invalid_argument("reps must be positive");
    if (config.ells.empty()) throw std::invalid_argument("Table 1 needs at least one length scale");
    struct Cell {
        int degree;
        int n_knots;
        bool demean;
    };
    std::vector<Cell> cells;
    for (bool dm : config.demean) {
        for (int k : config.degrees)
            for (int nk : config.n_knots) cells.push_back({k, nk, dm});
        if (config.empirical) cells.push_back({-1, -1, dm});
    }
    const int per_ell = config.reps;
    const int tasks = static_cast<int>(config.ells.size()) * per_ell;
    std::vector<std::vector<Outcome>> outcomes(static_cast<std::size_t>(tasks), std::vector<Outcome>(cells.size()));

    parallel_for(tasks, config.threads, [&](int task) {
        const int e = task / per_ell;
        const int rep = task % per_ell;
        const MaternSpec truth{1.0, config.ells[static_cast<std::size_t>(e)], 1.5};
        const double upper = 10.0 * truth.length_scale;
        const auto y = sample_gp([&](double tau) { return matern_acf(truth, tau); }, config.n, config.delta,
                                 replication_seed(config.seed, static_cast<std::uint64_t>(rep),
                                                  static_cast<std::uint64_t>(e)));
        const auto true_acf = [&](double tau) { return matern_acf(truth, tau); };
        auto& row = outcomes[static_cast<std::size_t>(task)];
        for (std::size_t j = 0; j < cells.size(); ++j) {
            const Cell& cell = cells[j];
            try {
                if (cell.degree < 0) {
                    const auto g = empirical_acf(y, lag_count(upper, config.delta, config.n), cell.demean);
                    row[j].value = 100.0 * iae(true_acf, lag_interpolant(g, config.delta), upper, config.iae_step);
                    continue;
                }
                MleOptions opts = config.mle;
                opts.demean = cell.demean;
                const KnotVector kv =
                    make_knots_offset_log(0.0, 0.5 / config.delta, cell.n_knots + 2, config.offset, cell.degree);
                const auto fit = fit_mle_gaussian(y, config.delta, kv, {}, opts);
                const auto fitted = [&](double tau) { return fit.model.acf(tau).real(); };
                row[j].value = 100.0 * iae(true_acf, fitted, upper, config.iae_step);
                row[j].converged = fit.report.converged;
            } catch (const std::exception&) {
                row[j].value = kNaN;
            }
        }
    });

    std::vector<Table1Row> rows;
    for (std::size_t e = 0; e < config.ells.size(); ++e)
        for (std::size_t j = 0; j < cells.size(); ++j) {
            std::vector<Outcome> column;
            for (int rep = 0; rep < per_ell; ++rep)
                column.push_back(outcomes[e * static_cast<std::size_t>(per_ell) + static_cast<std::size_t>(rep)][j]);
            Table1Row row;
            row.ell = config.ells[e];
            row.degree = cells[j].degree;
            row.n_knots = cells[j].n_knots;
            row.demean = cells[j].demean;
            row.estimator = cells[j].degree < 0 ? "empirical" : "spline_ml";
            row.summary = summarise_outcomes(column);
            rows.push_back(std::move(row));
        }
    return rows;
}

std::vector<Table2Row> run_table2_benchmark(const Table2Config& config) {
    if (config.reps < 1) throw std::invalid_argument("reps must be positive");
    if (config.lambdas.empty()) throw std::invalid_argument("Table 2 needs at least one lambda12");
    for (double lambda : config.lambdas)
        BivariateMaternSpec(1.0, 1.0, config.nu11, config.nu22, config.nu12, config.ell, lambda);

    // Estimators in row order: spline degrees, empirical, parametric.
    std::vector<int> estimators(config.degrees.begin(), config.degrees.end());
    if (config.empirical) estimators.push_back(-1);
    if (config.parametric) estimators.push_back(-2);
    constexpr int kComponents = 3;
    const std::array<std::pair<int, int>, kComponents> entries{{{0, 0}, {0, 1}, {1, 1}}};

    const int per_lambda = config.reps;
    const int tasks = static_cast<int>(config.lambdas.size()) * per_lambda;
    const std::size_t width = estimators.size() * kComponents;
    std::vector<std::vector<Outcome>> outcomes(static_cast<std::size_t>(tasks), std::vector<Outcome>(width));
    const double upper = 10.0 * config.ell;
    const double bound = BivariateMaternSpec::max_abs_correlation(config.nu11, config.nu22, config.nu12);

    parallel_for(tasks, config.threads, [&](int task) {
        const int l = task / per_lambda;
        const int rep = task % per_lambda;
        const BivariateMaternSpec truth(1.0, 1.0, config.nu11, config.nu22, config.nu12, config.ell,
                                        config.lambdas[static_cast<std::size_t>(l)]);
        const Eigen::MatrixXd y = sample_gp_multivariate(
            [&](double tau) -> Eigen::MatrixXd { return bivariate_matern_acf(truth, tau); }, 2, config.n,
            config.delta,
            replication_seed(config.seed, static_cast<std::uint64_t>(rep), static_cast<std::uint64_t>(l)));
        auto& row = outcomes[static_cast<std::size_t>(task)];
        auto record = [&](std::size_t est, const std::function<double(int, int, double)>& fitted, bool converged) {
            for (int c = 0; c < kComponents; ++c) {
                const auto [r, s] = entries[static_cast<std::size_t>(c)];
                const auto true_entry = [&](double tau) { return bivariate_matern_acf(truth, tau)(r, s); };
                const auto fitted_entry = [&](double tau) { return fitted(r, s, tau); };
                auto& o = row[est * kComponents + static_cast<std::size_t>(c)];
                o.value = 100.0 * iae(true_entry, fitted_entry, upper, config.iae_step);
                o.converged = converged;
            }
        };
        for (std::size_t est = 0; est < estimators.size(); ++est) {
            const int kind = estimators[est];
            try {
                if (kind >= 0) {
                    const KnotVector kv =
                        make_knots_offset_log(0.0, 0.5 / config.delta, config.n_knots + 2, config.offset, kind);
                    const auto fit = fit_mle_gaussian(y, config.delta, kv, {}, config.mle);
                    record(est, [&](int r, int s, double tau) { return fit.model.acf(tau)(r, s).real(); },
                           fit.report.converged);
                } else if (kind == -1) {
                    const auto g = empirical_cross_acf(y, lag_count(upper, config.delta, config.n), config.mle.demean);
                    std::array<std::function<double(double)>, kComponents> interp;
                    for (int c = 0; c < kComponents; ++c) {
                        const auto [r, s] = entries[static_cast<std::size_t>(c)];
                        std::vector<double> values;
                        for (const auto& m : g) values.push_back(m(r, s));
                        interp[static_cast<std::size_t>(c)] = lag_interpolant(std::move(values), config.delta);
                    }
                    record(est,
                           [&](int r, int s, double tau) {
                               return interp[static_cast<std::size_t>(r + s)](tau);
                           },
                           true);
                } else {
                    const auto fit = fit_parametric(y, config, config.mle.demean);
                    const auto spec = spec_from(fit.params, config, bound);
                    record(est, [&](int r, int s, double tau) { return bivariate_matern_acf(spec, tau)(r, s); },
                           fit.converged);
                }
            } catch (const std::exception&) {
                for (int c = 0; c < kComponents; ++c) row[est * kComponents + static_cast<std::size_t>(c)] = {kNaN, true};
            }
        }
    });

    static const std::array<const char*, kComponents> names{"gamma11", "gamma12", "gamma22"};
    std::vector<Table2Row> rows;
    for (std::size_t l = 0; l < config.lambdas.size(); ++l)
        for (int c = 0; c < kComponents; ++c)
            for (std::size_t est = 0; est < estimators.size(); ++est) {
                std::vector<Outcome> column;
                for (int rep = 0; rep < per_lambda; ++rep)
                    column.push_back(outcomes[l * static_cast<std::size_t>(per_lambda) + static_cast<std::size_t>(rep)]
                                             [est * kComponents + static_cast<std::size_t>(c)]);
                Table2Row row;
                row.lambda12 = config.lambdas[l];
                row.component = names[static_cast<std::size_t>(c)];
                row.degree = std::max(estimators[est], -1);
                row.estimator = estimators[est] >= 0 ? "spline_ml" : estimators[est] == -1 ? "empirical" : "parametric_ml";
                row.summary = summarise_outcomes(column);
                rows.push_back(std::move(row));
            }
    return rows;
}

// ---------------------------------------------------------------- workers

int default_thread_count() {
    if (const char* env = std::getenv("SPLINEKERNEL_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) return static_cast<int>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(int count, int threads, const std::function<void(int)>& fn) {
    if (count <= 0) return;
    if (threads <= 0) threads = default_thread_count();
    threads = std::min(threads, count);
    if (threads == 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    {
        std::vector<std::jthread> workers;
        for (int w = 0; w < threads; ++w)
            workers.emplace_back([&] {
                for (int i = next++; i < count; i = next++) {
                    try {
                        fn(i);
                    } catch (...) {
                        std::lock_guard lock(error_mutex);
                        if (!error) error = std::current_exception();
                        next = count;
                    }
                }
            });
    }
    if (error) std::rethrow_exception(error);
}

}  // namespace splinekernel
