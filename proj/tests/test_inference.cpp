#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "doctest.h"
#include "splinekernel/inference.hpp"

using namespace splinekernel;

namespace {

std::vector<double> white_noise(std::mt19937_64& rng, int n, double sd = 1.0) {
    std::normal_distribution<double> g(0.0, sd);
    std::vector<double> y(static_cast<std::size_t>(n));
    for (auto& v : y) v = g(rng);
    return y;
}

// Strictly inside (-0.5, 0.5): no two aliases of a frequency share a support.
KnotVector inner_knots(std::mt19937_64& rng, int degree, int count) {
    std::uniform_real_distribution<double> gap(0.03, 0.1);
    std::vector<double> t{-0.45};
    for (int j = 1; j < count; ++j) t.push_back(t.back() + gap(rng));
    const double scale = 0.9 / (t.back() - t.front());
    for (auto& x : t) x = -0.45 + (x + 0.45) * scale;
    return KnotVector(t, degree);
}

// Knots covering [-0.5, 0.5] with margin so every Fourier frequency is reached.
KnotVector covering_knots(std::mt19937_64& rng, int degree) {
    std::uniform_real_distribution<double> gap(0.05, 0.15);
    std::vector<double> t{-0.6 - gap(rng)};
    while (t.back() < 0.62) t.push_back(t.back() + gap(rng));
    return KnotVector(t, degree);
}

std::vector<double> positive_coeffs(std::mt19937_64& rng, int n, double lo = 0.2) {
    std::uniform_real_distribution<double> u(lo, 2.0);
    std::vector<double> c(static_cast<std::size_t>(n));
    for (auto& x : c) x = u(rng);
    return c;
}

// Direct sum of model PSD values over the aliases of w.
double folded_psd(const SplinePsdModel& m, double w, double delta) {
    double f = 0.0;
    for (int k = -8; k <= 8; ++k) f += m.psd(w + k / delta);
    return f;
}

double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return (a - b).norm() / std::max(1e-300, b.norm());
}

std::vector<double> grid_times(int n, double delta) {
    std::vector<double> t(static_cast<std::size_t>(n));
    for (int a = 0; a < n; ++a) t[static_cast<std::size_t>(a)] = a * delta;
    return t;
}

double dense_inverse_nll(const Eigen::MatrixXd& cov, const Eigen::VectorXd& y) {
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(cov);
    const Eigen::MatrixXd inv = lu.inverse();
    double logdet = 0.0;
    const Eigen::MatrixXd u = lu.matrixLU().triangularView<Eigen::Upper>();
    for (Eigen::Index i = 0; i < u.rows(); ++i) logdet += std::log(std::abs(u(i, i)));
    return 0.5 * (logdet + y.dot(inv * y) + static_cast<double>(y.size()) * std::log(2.0 * std::numbers::pi));
}

std::vector<double> sample_dense(const Eigen::MatrixXd& cov, std::mt19937_64& rng) {
    Eigen::MatrixXd a = cov;
    a.diagonal().array() += 1e-10 * a.trace() / static_cast<double>(a.rows());
    const Eigen::LLT<Eigen::MatrixXd> llt(a);
    const auto z = white_noise(rng, static_cast<int>(a.rows()));
    const Eigen::VectorXd y = llt.matrixL() * Eigen::Map<const Eigen::VectorXd>(z.data(), a.rows());
    return {y.data(), y.data() + y.size()};
}

}  // namespace

TEST_CASE("periodogram against a direct DFT and Parseval") {
    std::mt19937_64 rng(3);
    const auto y = white_noise(rng, 16);
    const double delta = 0.25;
    const auto pg = periodogram(y, delta);
    REQUIRE(pg.size() == 16);
    for (int l = 0; l < 16; ++l) {
        cplx s = 0.0;
        for (int t = 0; t < 16; ++t) s += y[static_cast<std::size_t>(t)] * std::polar(1.0, -2.0 * std::numbers::pi * l * t / 16.0);
        CHECK(pg.values[static_cast<std::size_t>(l)] == doctest::Approx(delta / 16.0 * std::norm(s)).epsilon(1e-12));
        CHECK(pg.frequency(0, l) == doctest::Approx(l / (16.0 * delta)));
    }
    CHECK(pg.centred_frequency(0, 8) == doctest::Approx(-2.0));
    CHECK(pg.centred_frequency(0, 7) == doctest::Approx(7.0 / 4.0));

    for (bool demean : {false, true}) {
        const auto w = white_noise(rng, 1001, 2.0);
        const auto p = periodogram(w, 0.5, demean);
        double mean = 0.0;
        for (double v : w) mean += v;
        mean /= 1001.0;
        double ms = 0.0;
        for (double v : w) ms += (v - (demean ? mean : 0.0)) * (v - (demean ? mean : 0.0));
        ms /= 1001.0;
        double s = 0.0;
        for (double v : p.values) s += v;
        CHECK(s / (1001.0 * 0.5) == doctest::Approx(ms).epsilon(1e-10));
    }

    Eigen::MatrixXd field(12, 9);
    for (int a = 0; a < 12; ++a)
        for (int b = 0; b < 9; ++b) field(a, b) = std::normal_distribution<double>()(rng) + 0.3;
    const auto p2 = periodogram_2d(field, 0.5, 2.0, true);
    double s2 = 0.0;
    for (double v : p2.values) s2 += v;
    const double ms2 = (field.array() - field.mean()).square().mean();
    CHECK(s2 / (12 * 0.5 * 9 * 2.0) == doctest::Approx(ms2).epsilon(1e-10));
}

TEST_CASE("periodogram edge cases") {
    const std::vector<double> c(64, 3.5);
    for (double v : periodogram(c, 1.0, true).values) CHECK(v < 1e-20);
    CHECK_THROWS_AS(periodogram(std::vector<double>{1.0}, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(periodogram(std::vector<double>{1.0, NAN}, 1.0), std::invalid_argument);

    // Unit white noise: flat PSD of height delta * var.
    std::mt19937_64 rng(11);
    const auto y = white_noise(rng, 4096);
    const auto pg = periodogram(y, 0.5);
    double mean = 0.0;
    for (std::size_t l = 1; l < pg.size(); ++l) mean += pg.values[l];
    mean /= static_cast<double>(pg.size() - 1);
    CHECK(std::abs(mean - 0.5) < 0.05 * 0.5);
}

TEST_CASE("Whittle objective equals a direct term-by-term sum") {
    std::mt19937_64 rng(5);
    for (int degree : {0, 1, 2}) {
        for (bool real : {false, true}) {
            const KnotVector kv = covering_knots(rng, degree);
            const SplinePsdModel m(kv, positive_coeffs(rng, kv.num_basis()), real);
            const auto y = white_noise(rng, 16);
            const auto pg = periodogram(y, 1.0);
            double direct = 0.0;
            for (int l = 1; l < 16; ++l) {
                const double f = folded_psd(m, l / 16.0, 1.0);
                direct += std::log(f) + pg.values[static_cast<std::size_t>(l)] / f;
            }
            CHECK(whittle_nll(m, pg) == doctest::Approx(direct).epsilon(1e-12));
        }
    }
}

TEST_CASE("Whittle optimum sits where the model matches the periodogram") {
    std::mt19937_64 rng(8);
    const KnotVector kv = covering_knots(rng, 1);
    const SplinePsdModel m(kv, positive_coeffs(rng, kv.num_basis()), true);
    Periodogram pg;
    pg.shape = {64};
    pg.spacing = {1.0};
    pg.values.resize(64);
    for (int l = 0; l < 64; ++l) pg.values[static_cast<std::size_t>(l)] = folded_psd(m, l / 64.0, 1.0);

    const auto ev = whittle_grad_hess(m, pg);
    CHECK(ev.gradient.norm() < 1e-10);
    const double base = ev.value;
    for (int trial = 0; trial < 20; ++trial) {
        auto c = m.coeffs();
        std::normal_distribution<double> g(0.0, 0.05);
        for (auto& x : c) x = std::max(1e-6, x * (1.0 + g(rng)));
        CHECK(whittle_nll(m.with_coeffs(c), pg) > base);
    }
}

TEST_CASE("Whittle gradient and Hessian against finite differences") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 100; ++trial) {
        const int degree = trial % 3;
        const bool real = trial % 2 == 0;
        const KnotVector kv = covering_knots(rng, degree);
        const auto y = white_noise(rng, 24 + trial % 7);
        const auto pg = periodogram(y, 1.0);
        const WhittleProblem prob({kv}, real, pg);
        const auto c = positive_coeffs(rng, kv.num_basis(), 0.3);
        const auto ev = prob.evaluate(c);
        REQUIRE(ev.floor_activations == 0);

        const int p = prob.num_coeffs();
        Eigen::VectorXd fd(p);
        Eigen::MatrixXd hfd(p, p);
        for (int i = 0; i < p; ++i) {
            const double h = 1e-5 * c[static_cast<std::size_t>(i)];
            auto cp = c, cm = c;
            cp[static_cast<std::size_t>(i)] += h;
            cm[static_cast<std::size_t>(i)] -= h;
            const auto ep = prob.evaluate(cp);
            const auto em = prob.evaluate(cm);
            fd(i) = (ep.value - em.value) / (2 * h);
            hfd.col(i) = (ep.gradient - em.gradient) / (2 * h);
        }
        CHECK(relative_error(ev.gradient, fd) < 1e-6);
        const Eigen::MatrixXd h = Eigen::MatrixXd(ev.hessian);
        CHECK((h - hfd).norm() / h.norm() < 1e-4);
    }
}

TEST_CASE("Whittle Hessian pattern is the support overlap graph") {
    std::mt19937_64 rng(2);
    for (int degree : {0, 1, 2, 3}) {
        for (bool real : {false, true}) {
            KnotVector kv = inner_knots(rng, degree, 12);
            if (real) {
                // Positive frequencies only, so reflections never overlap.
                std::vector<double> t = kv.knots();
                for (auto& x : t) x = 0.03 + (x + 0.45) * (0.44 / 0.9);
                kv = KnotVector(t, degree);
            }
            const auto y = white_noise(rng, 512);
            const auto ev = whittle_grad_hess(SplinePsdModel(kv, positive_coeffs(rng, kv.num_basis()), real),
                                              periodogram(y, 1.0));
            const Eigen::MatrixXd h = Eigen::MatrixXd(ev.hessian);
            for (int i = 0; i < kv.num_basis(); ++i)
                for (int j = 0; j < kv.num_basis(); ++j) {
                    const bool overlap =
                        std::max(kv.support_lo(i), kv.support_lo(j)) < std::min(kv.support_hi(i), kv.support_hi(j));
                    CHECK((h(i, j) != 0.0) == overlap);
                    if (std::abs(i - j) > degree) CHECK(h(i, j) == 0.0);
                }
        }
    }
}

TEST_CASE("Whittle invariances") {
    std::mt19937_64 rng(4);
    const KnotVector kv = inner_knots(rng, 1, 9);
    const SplinePsdModel m(kv, positive_coeffs(rng, kv.num_basis()));
    std::vector<cplx> z(128);
    std::normal_distribution<double> g;
    for (auto& v : z) v = cplx(g(rng), g(rng));
    std::vector<cplx> rotated(z);
    for (auto& v : rotated) v *= std::polar(1.0, 0.77);
    CHECK(whittle_nll(m, periodogram(z, 1.0)) == doctest::Approx(whittle_nll(m, periodogram(rotated, 1.0))).epsilon(1e-12));

    const KnotVector kr = covering_knots(rng, 2);
    const SplinePsdModel mr(kr, positive_coeffs(rng, kr.num_basis()), true);
    auto y = white_noise(rng, 256);
    const double before = whittle_nll(mr, periodogram(y, 1.0, false));
    for (auto& v : y) v += 4.0;
    CHECK(whittle_nll(mr, periodogram(y, 1.0, false)) == doctest::Approx(before).epsilon(1e-10));
}

TEST_CASE("Whittle floor keeps an all-zero model finite and reports it") {
    std::mt19937_64 rng(6);
    const KnotVector kv = covering_knots(rng, 1);
    const SplinePsdModel zero(kv, std::vector<double>(static_cast<std::size_t>(kv.num_basis()), 0.0), true);
    const auto pg = periodogram(white_noise(rng, 32), 1.0);
    const auto ev = whittle_grad_hess(zero, pg);
    CHECK(std::isfinite(ev.value));
    CHECK(ev.floor_activations == 31);
    CHECK(ev.gradient.norm() == 0.0);
}

TEST_CASE("Whittle fit: Newton from near the truth, scaling, white noise") {
    std::mt19937_64 rng(12);
    const KnotVector kv = make_knots_offset_log(0.0, 0.5, 6, 0.01, 2);
    const auto truth = positive_coeffs(rng, kv.num_basis(), 0.5);
    const SplinePsdModel m(kv, truth, true);
    Periodogram pg;
    pg.shape = {256};
    pg.spacing = {1.0};
    pg.values.resize(256);
    for (int l = 0; l < 256; ++l) pg.values[static_cast<std::size_t>(l)] = folded_psd(m, l / 256.0, 1.0);
    std::vector<double> init(truth);
    for (auto& c : init) c *= 1.01;
    const auto fit = fit_whittle(pg, kv, true, init);
    CHECK(fit.report.converged);
    CHECK(fit.report.iterations <= 3);
    for (std::size_t i = 0; i < truth.size(); ++i) CHECK(fit.report.coeffs[i] == doctest::Approx(truth[i]).epsilon(1e-6));
    CHECK(fit.report.hessian_bandwidth >= 0);

    // Data scaled by s: coefficients scale by s^2.
    const auto y = white_noise(rng, 1024);
    std::vector<double> ys(y);
    for (auto& v : ys) v *= 3.0;
    const auto a = fit_whittle(periodogram(y, 1.0), kv, true);
    const auto b = fit_whittle(periodogram(ys, 1.0), kv, true);
    REQUIRE(a.report.converged);
    REQUIRE(b.report.converged);
    for (std::size_t i = 0; i < a.report.coeffs.size(); ++i)
        CHECK(b.report.coeffs[i] == doctest::Approx(9.0 * a.report.coeffs[i]).epsilon(1e-5).scale(1e-8));
    for (std::size_t i = 1; i < a.report.objective_trace.size(); ++i)
        CHECK(a.report.objective_trace[i] < a.report.objective_trace[i - 1]);

    // Single boxcar over the band: the estimate is the band mean of I.
    const double delta = 0.5;
    const double sigma = 1.7;
    const KnotVector box({-1.0 / (2 * delta), 1.0 / (2 * delta)}, 0);
    const int n = 2047;
    const auto w = white_noise(rng, n, sigma);
    const auto fw = fit_whittle(periodogram(w, delta), box, false);
    REQUIRE(fw.report.converged);
    const double target = delta * sigma * sigma;
    const double se = target / std::sqrt(n - 1.0);
    CHECK(std::abs(fw.report.coeffs[0] - target) < 3 * se);
}

TEST_CASE("Whittle fit on a tensor model") {
    std::mt19937_64 rng(13);
    const std::vector<KnotVector> axes{make_knots_uniform(0.0, 0.5, 4, 1), make_knots_uniform(0.0, 0.5, 3, 1)};
    const int p = axes[0].num_basis() * axes[1].num_basis();
    const TensorPsdModel truth(axes, positive_coeffs(rng, p, 0.5), true);
    Periodogram pg;
    pg.shape = {32, 24};
    pg.spacing = {1.0, 1.0};
    pg.values.assign(32 * 24, 0.0);
    for (int a = 0; a < 32; ++a)
        for (int b = 0; b < 24; ++b) {
            double f = 0.0;
            for (int m1 = -3; m1 <= 3; ++m1)
                for (int m2 = -3; m2 <= 3; ++m2) {
                    const std::array<double, 2> w{a / 32.0 + m1, b / 24.0 + m2};
                    f += truth.psd(w);
                }
            pg.values[static_cast<std::size_t>(a * 24 + b)] = f;
        }
    const auto ev = whittle_grad_hess(truth, pg);
    CHECK(ev.gradient.norm() < 1e-9);
    std::vector<double> start(truth.coeffs());
    for (auto& c : start) c *= 1.05;
    const auto fit = fit_whittle(pg, axes, true, start);
    CHECK(fit.report.converged);
    for (std::size_t i = 0; i < start.size(); ++i)
        CHECK(fit.report.coeffs[i] == doctest::Approx(truth.coeffs()[i]).epsilon(1e-6));
}

TEST_CASE("Gaussian likelihood scalar examples") {
    const KnotVector kv({-0.5, 0.5}, 0);
    const SplinePsdModel unit(kv, {1.0}, true);
    const std::vector<double> t0{0.0};
    CHECK(gaussian_nll(unit, std::vector<double>{0.0}, t0) == doctest::Approx(0.5 * std::log(2 * std::numbers::pi)));
    CHECK(gaussian_nll(unit, std::vector<double>{2.0}, t0) ==
          doctest::Approx(0.5 * (std::log(2 * std::numbers::pi) + 4.0)));
    CHECK(toeplitz_nll(std::vector<double>{1.0}, std::vector<double>{2.0}).value ==
          doctest::Approx(0.5 * (std::log(2 * std::numbers::pi) + 4.0)));
}

TEST_CASE("Gaussian likelihood against a dense inverse") {
    std::mt19937_64 rng(30);
    for (int trial = 0; trial < 6; ++trial) {
        const KnotVector kv = covering_knots(rng, trial % 3);
        const SplinePsdModel m(kv, positive_coeffs(rng, kv.num_basis()), true);
        const auto t = grid_times(50, 1.0);
        const Eigen::MatrixXd cov = covariance_matrix(m, t);
        const auto y = white_noise(rng, 50);
        const double oracle = dense_inverse_nll(cov, Eigen::Map<const Eigen::VectorXd>(y.data(), 50));
        CHECK(gaussian_nll(m, y, t) == doctest::Approx(oracle).epsilon(1e-9));
        CHECK(gaussian_nll_dense(cov, y) == doctest::Approx(oracle).epsilon(1e-9));

        std::vector<double> ti(t);
        std::uniform_real_distribution<double> jig(-0.3, 0.3);
        for (auto& x : ti) x += jig(rng);
        const double oracle_i =
            dense_inverse_nll(covariance_matrix(m, ti), Eigen::Map<const Eigen::VectorXd>(y.data(), 50));
        CHECK(gaussian_nll(m, y, ti) == doctest::Approx(oracle_i).epsilon(1e-9));
    }
}

TEST_CASE("complex Gaussian likelihood") {
    const KnotVector kv({0.0, 0.25, 0.5}, 0);
    const SplinePsdModel m(kv, {1.0, 0.5});
    const auto t = grid_times(6, 1.0);
    std::vector<cplx> z{{0.3, -1.0}, {0.1, 0.2}, {-0.5, 0.5}, {1.0, 0.0}, {0.0, 0.7}, {0.2, 0.2}};
    const Eigen::MatrixXcd cov = covariance_matrix_complex(m, t);
    const Eigen::Map<const Eigen::VectorXcd> zv(z.data(), 6);
    const double expected = std::log(cov.determinant().real()) + (zv.adjoint() * cov.inverse() * zv)(0).real() +
                            6 * std::log(std::numbers::pi);
    CHECK(gaussian_nll(m, std::span<const cplx>(z), t) == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("block Levinson likelihood and lag gradient") {
    std::mt19937_64 rng(40);
    const KnotVector kv = covering_knots(rng, 1);
    std::vector<Eigen::MatrixXcd> cs;
    std::normal_distribution<double> g;
    for (int i = 0; i < kv.num_basis(); ++i) {
        Eigen::MatrixXd a(2, 3);
        for (int r = 0; r < 2; ++r)
            for (int s = 0; s < 3; ++s) a(r, s) = g(rng);
        cs.emplace_back((a * a.transpose()).cast<cplx>());
    }
    const MatrixSplinePsdModel mm(kv, cs, true);
    const int n = 14;
    const auto t = grid_times(n, 1.0);
    Eigen::MatrixXd y(n, 2);
    for (int a = 0; a < n; ++a) y.row(a) << g(rng), g(rng);

    const Eigen::MatrixXd cov = covariance_matrix(mm, t);
    const Eigen::MatrixXd yt = y.transpose();
    const Eigen::Map<const Eigen::VectorXd> ystack(yt.data(), 2 * n);
    const double oracle = dense_inverse_nll(cov, ystack);
    CHECK(gaussian_nll(mm, y, t) == doctest::Approx(oracle).epsilon(1e-9));

    std::vector<Eigen::MatrixXd> lags;
    for (int d = 0; d < n; ++d) lags.push_back(mm.acf(d).real());
    const auto res = block_toeplitz_nll(lags, y, true);
    CHECK(res.value == doctest::Approx(oracle).epsilon(1e-9));

    // Finite differences in each lag entry.
    for (int d = 0; d < n; ++d)
        for (int r = 0; r < 2; ++r)
            for (int s = 0; s < 2; ++s) {
                const double h = 1e-6;
                auto lp = lags, lm = lags;
                lp[static_cast<std::size_t>(d)](r, s) += h;
                lm[static_cast<std::size_t>(d)](r, s) -= h;
                if (d == 0 && r != s) {  // Gamma(0) stays symmetric
                    lp[0](s, r) += h;
                    lm[0](s, r) -= h;
                }
                const double fd = (block_toeplitz_nll(lp, y).value - block_toeplitz_nll(lm, y).value) / (2 * h);
                const double an = d == 0 && r != s ? res.lag_gradient[0](r, s) + res.lag_gradient[0](s, r)
                                                   : res.lag_gradient[static_cast<std::size_t>(d)](r, s);
                CHECK(an == doctest::Approx(fd).epsilon(1e-5).scale(1e-6));
            }

    // Scalar case against the dense formula 0.5 (X - a a^T) summed on diagonals.
    const KnotVector ks = covering_knots(rng, 2);
    const SplinePsdModel m1(ks, positive_coeffs(rng, ks.num_basis()), true);
    const int n1 = 40;
    std::vector<double> lag1;
    for (int d = 0; d < n1; ++d) lag1.push_back(m1.acf(d).real());
    const auto y1 = white_noise(rng, n1);
    const auto r1 = toeplitz_nll(lag1, y1, true);
    const Eigen::MatrixXd c1 = covariance_matrix(m1, grid_times(n1, 1.0));
    const Eigen::MatrixXd x = c1.inverse();
    const Eigen::VectorXd al = x * Eigen::Map<const Eigen::VectorXd>(y1.data(), n1);
    const Eigen::MatrixXd w = x - al * al.transpose();
    for (int d = 0; d < n1; ++d) {
        double s = 0.0;
        for (int i = 0; i + d < n1; ++i) s += w(i + d, i);
        if (d == 0) s *= 0.5;
        CHECK(r1.lag_gradient[static_cast<std::size_t>(d)](0, 0) == doctest::Approx(s).epsilon(1e-7).scale(1e-9));
    }
}

TEST_CASE("jitter ladder and factorisation failure") {
    Eigen::MatrixXd singular = Eigen::MatrixXd::Ones(4, 4);
    const std::vector<double> y{1.0, 1.0, 1.0, 1.0};
    CHECK(std::isfinite(gaussian_nll_dense(singular, y)));
    Eigen::MatrixXd indefinite = Eigen::MatrixXd::Identity(3, 3);
    indefinite(0, 0) = -1.0;
    CHECK_THROWS_AS(gaussian_nll_dense(indefinite, std::vector<double>{0, 0, 0}), NumericalError);
    CHECK_THROWS_AS(toeplitz_nll(std::vector<double>{1.0, 2.0}, std::vector<double>{0.0, 0.0}), NumericalError);
}

TEST_CASE("BFGS on the Rosenbrock function") {
    const Objective rosen = [](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
        const double a = 1.0 - x(0);
        const double b = x(1) - x(0) * x(0);
        if (g) *g = Eigen::Vector2d(-2 * a - 400 * x(0) * b, 200 * b);
        return a * a + 100 * b * b;
    };
    const auto res = minimize_bfgs(rosen, Eigen::Vector2d(-1.2, 1.0));
    CHECK(res.converged);
    CHECK(res.x(0) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(res.x(1) == doctest::Approx(1.0).epsilon(1e-6));
    for (std::size_t i = 1; i < res.trace.size(); ++i) CHECK(res.trace[i] <= res.trace[i - 1]);

    const Eigen::VectorXd x(Eigen::Vector2d(0.3, -0.4));
    Eigen::VectorXd g;
    rosen(x, &g);
    const auto fd = numerical_gradient([&](const Eigen::VectorXd& v) { return rosen(v, nullptr); }, x);
    CHECK(relative_error(fd, g) < 1e-8);
}

TEST_CASE("Gaussian maximum likelihood, univariate") {
    std::mt19937_64 rng(50);
    const KnotVector kv = make_knots_offset_log(0.0, 0.5, 6, 0.01, 1);
    const SplinePsdModel truth(kv, positive_coeffs(rng, kv.num_basis(), 0.5), true);
    const int n = 300;
    const auto t = grid_times(n, 1.0);
    const auto y = sample_dense(covariance_matrix(truth, t), rng);

    const auto fit = fit_mle_gaussian(y, 1.0, kv);
    CHECK(fit.report.converged);
    CHECK(fit.report.grad_norm < 1e-8 * std::max(1.0, std::abs(fit.report.objective)));
    CHECK(gaussian_nll(truth, y, t) >= fit.report.objective);
    CHECK(gaussian_nll(fit.model, y, t) == doctest::Approx(fit.report.objective).epsilon(1e-10));
    for (std::size_t i = 1; i < fit.report.objective_trace.size(); ++i)
        CHECK(fit.report.objective_trace[i] <= fit.report.objective_trace[i - 1]);

    MleOptions numeric;
    numeric.analytic_gradient = false;
    const auto fit_n = fit_mle_gaussian(y, 1.0, kv, {}, numeric);
    CHECK(fit_n.report.objective == doctest::Approx(fit.report.objective).epsilon(1e-7));
}

TEST_CASE("Gaussian maximum likelihood, bivariate") {
    std::mt19937_64 rng(51);
    const KnotVector kv = make_knots_offset_log(0.0, 0.5, 4, 0.01, 1);
    std::vector<Eigen::MatrixXcd> cs;
    std::normal_distribution<double> g;
    for (int i = 0; i < kv.num_basis(); ++i) {
        Eigen::MatrixXd a(2, 2);
        a << 1.0 + 0.3 * g(rng), 0.0, 0.5 * g(rng), 0.8;
        cs.emplace_back((a * a.transpose()).cast<cplx>());
    }
    const MatrixSplinePsdModel truth(kv, cs, true);
    const int n = 150;
    const auto t = grid_times(n, 1.0);
    const auto ys = sample_dense(covariance_matrix(truth, t), rng);
    Eigen::MatrixXd y(n, 2);
    for (int a = 0; a < n; ++a) y.row(a) << ys[static_cast<std::size_t>(2 * a)], ys[static_cast<std::size_t>(2 * a + 1)];

    const auto fit = fit_mle_gaussian(y, 1.0, kv);
    CHECK(fit.report.converged);
    CHECK(gaussian_nll(truth, y, t) >= fit.report.objective);
    CHECK(gaussian_nll(fit.model, y, t) == doctest::Approx(fit.report.objective).epsilon(1e-10));
    for (const auto& c : fit.model.coeffs()) {
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(c);
        CHECK(es.eigenvalues().minCoeff() >= -1e-12);
    }

    MleOptions numeric;
    numeric.analytic_gradient = false;
    const auto fit_n = fit_mle_gaussian(y, 1.0, kv, {}, numeric);
    CHECK(fit_n.report.objective == doctest::Approx(fit.report.objective).epsilon(1e-7));
}
