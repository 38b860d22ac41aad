#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Eigenvalues>

#include "doctest.h"
#include "splinekernel/models.hpp"

using namespace splinekernel;

namespace {

KnotVector random_knots(std::mt19937_64& rng, int degree, int extra_basis, double start_lo = -0.5) {
    std::uniform_real_distribution<double> start(start_lo, start_lo + 1.0), gap(0.02, 0.2);
    std::vector<double> t{start(rng)};
    for (int j = 1; j < degree + 2 + extra_basis; ++j) t.push_back(t.back() + gap(rng));
    return KnotVector(t, degree);
}

std::vector<double> random_coeffs(std::mt19937_64& rng, int n) {
    std::uniform_real_distribution<double> u(0.0, 2.0);
    std::vector<double> c(static_cast<std::size_t>(n));
    for (auto& x : c) x = u(rng);
    return c;
}

Eigen::MatrixXcd random_psd(std::mt19937_64& rng, int M, int rank) {
    std::normal_distribution<double> g;
    Eigen::MatrixXcd A(M, rank);
    for (int r = 0; r < M; ++r)
        for (int s = 0; s < rank; ++s) A(r, s) = cplx(g(rng), g(rng));
    return A * A.adjoint();
}

// Break points covering the model support, mirrored for real processes.
std::vector<double> breaks_for(const KnotVector& kv, bool mirrored) {
    std::vector<double> b = kv.knots();
    if (mirrored)
        for (double x : kv.knots()) b.push_back(-x);
    std::sort(b.begin(), b.end());
    b.erase(std::unique(b.begin(), b.end()), b.end());
    return b;
}

const std::vector<double> kFig1Knots{-0.125, 0.125, 0.25, 0.375, 0.5};

}  // namespace

TEST_CASE("univariate model on the five-knot linear basis") {
    SplinePsdModel m(KnotVector(kFig1Knots, 1), {0.1, 0.3, 1.0});
    CHECK(m.psd(0.25) == doctest::Approx(0.3));
    CHECK(m.psd(0.375) == doctest::Approx(1.0));
    CHECK(m.psd(0.0) == doctest::Approx(0.1 * 0.5));
    CHECK(m.psd(0.6) == 0.0);
    CHECK(m.psd(-0.2) == 0.0);
    const double var = 0.1 * 0.1875 + 0.3 * 0.125 + 1.0 * 0.125;
    CHECK(m.variance() == doctest::Approx(var));
    CHECK(m.acf(0.0).real() == doctest::Approx(var));
    CHECK_THROWS_AS(SplinePsdModel(KnotVector(kFig1Knots, 1), {0.1, 0.3, 1.0, 2.0}), std::invalid_argument);
    CHECK_THROWS_AS(SplinePsdModel(KnotVector(kFig1Knots, 1), {0.1, -0.3, 1.0}), std::invalid_argument);

    SplinePsdModel zero(KnotVector(kFig1Knots, 1), {0.0, 0.0, 0.0});
    for (double x : {-0.3, 0.0, 0.2, 0.4}) {
        CHECK(zero.psd(x) == 0.0);
        CHECK(zero.acf(x * 10) == cplx(0.0));
    }
}

TEST_CASE("Bochner consistency of univariate models") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> utau(-20.0, 20.0);
    for (int trial = 0; trial < 16; ++trial) {
        const int k = trial % 4;
        const bool real = trial % 2 == 1;
        auto kv = random_knots(rng, k, 4);
        SplinePsdModel m(kv, random_coeffs(rng, kv.num_basis()), real);
        const auto br = breaks_for(kv, real);
        for (int s = 0; s < 5; ++s) {
            const double tau = utau(rng);
            const cplx q = fourier_quadrature([&](double w) { return m.psd(w); }, br, tau);
            CHECK(std::abs(m.acf(tau) - q) < 1e-8 * m.variance());
        }
    }
}

TEST_CASE("real process symmetrisation") {
    std::mt19937_64 rng(22);
    auto kv = random_knots(rng, 2, 5, 0.0);
    SplinePsdModel m(kv, random_coeffs(rng, kv.num_basis()), true);
    for (double t : {0.3, 1.7, 12.0}) {
        CHECK(m.acf(t).imag() == 0.0);
        CHECK(m.acf(-t).real() == doctest::Approx(m.acf(t).real()));
        CHECK(m.psd(-t / 20) == doctest::Approx(m.psd(t / 20)));
    }
    // Symmetrised density integrates to the same variance.
    SplinePsdModel complex_model(kv, m.coeffs(), false);
    CHECK(complex_model.acf(0.0).real() == doctest::Approx(m.variance()));
}

TEST_CASE("matrix model basics") {
    std::mt19937_64 rng(23);
    auto kv = random_knots(rng, 1, 4);
    const int M = 3;
    std::vector<Eigen::MatrixXcd> eye(static_cast<std::size_t>(kv.num_basis()), Eigen::MatrixXcd::Identity(M, M));
    MatrixSplinePsdModel mi(kv, eye);
    const double inside = 0.5 * (kv[1] + kv[static_cast<std::size_t>(kv.num_basis())]);
    CHECK((mi.psd(inside) - Eigen::MatrixXcd::Identity(M, M)).norm() < 1e-14);

    // M = 1 reduces to the scalar model.
    auto c = random_coeffs(rng, kv.num_basis());
    std::vector<Eigen::MatrixXcd> c1;
    for (double x : c) c1.push_back(Eigen::MatrixXcd::Constant(1, 1, x));
    MatrixSplinePsdModel m1(kv, c1, true);
    SplinePsdModel s1(kv, c, true);
    for (double t : {0.0, 0.4, 3.3}) {
        CHECK(std::abs(m1.acf(t)(0, 0) - s1.acf(t)) < 1e-12);
        CHECK(std::abs(m1.psd(t / 10)(0, 0) - s1.psd(t / 10)) < 1e-12);
    }

    // Real diagonal coefficients: no cross terms.
    std::vector<Eigen::MatrixXcd> diag;
    for (int i = 0; i < kv.num_basis(); ++i) diag.push_back(Eigen::Vector3d(1.0 + i, 2.0, 0.5).cast<cplx>().asDiagonal());
    MatrixSplinePsdModel md(kv, diag);
    auto G = md.acf(1.3);
    CHECK(std::abs(G(0, 1)) == 0.0);
    CHECK(std::abs(G(2, 0)) == 0.0);

    std::vector<Eigen::MatrixXcd> bad(static_cast<std::size_t>(kv.num_basis()), Eigen::MatrixXcd::Identity(M, M));
    bad[0](0, 0) = -1.0;
    CHECK_THROWS_AS(MatrixSplinePsdModel(kv, bad), std::invalid_argument);
    bad[0] = Eigen::MatrixXcd::Identity(M, M);
    bad[0](0, 1) = cplx(0.2, 0.1);
    CHECK_THROWS_AS(MatrixSplinePsdModel(kv, bad), std::invalid_argument);
}

TEST_CASE("matrix model positivity, Hermitian symmetry and Bochner consistency") {
    std::mt19937_64 rng(24);
    std::uniform_real_distribution<double> ut(-10.0, 10.0);
    for (int trial = 0; trial < 6; ++trial) {
        const int M = 2 + trial % 2;
        const bool real = trial >= 3;
        auto kv = random_knots(rng, trial % 4, 4);
        std::vector<Eigen::MatrixXcd> C;
        for (int i = 0; i < kv.num_basis(); ++i) C.push_back(random_psd(rng, M, 1 + i % M));
        MatrixSplinePsdModel m(kv, C, real);
        for (int s = 0; s <= 100; ++s) {
            const double w = kv.front() - 0.1 + (kv.back() - kv.front() + 0.2) * s / 100.0;
            const Eigen::MatrixXcd F = m.psd(w);
            CHECK((F - F.adjoint()).norm() <= 1e-14 * std::max(1.0, F.norm()));
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(F);
            CHECK(es.eigenvalues().minCoeff() >= -1e-10 * std::max(F.trace().real(), 1e-300));
        }
        const Eigen::MatrixXcd G0 = m.acf(0.0);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es0(G0);
        CHECK(es0.eigenvalues().minCoeff() >= -1e-12 * G0.trace().real());
        for (int s = 0; s < 10; ++s) {
            const double t = ut(rng);
            CHECK((m.acf(-t) - m.acf(t).adjoint()).norm() < 1e-12 * G0.norm());
        }
        // Entry (0, 1) against quadrature of its spectrum.
        const auto br = breaks_for(kv, real);
        for (double t : {0.37, -2.9}) {
            const cplx q = fourier_quadrature_complex([&](double w) { return m.psd(w)(0, 1); }, br, t);
            CHECK(std::abs(m.acf(t)(0, 1) - q) < 1e-8 * G0.norm());
        }
        // Cramer condition: Gram over random times with random unit vectors.
        std::vector<double> times(20);
        for (auto& x : times) x = ut(rng);
        std::normal_distribution<double> g;
        std::vector<Eigen::VectorXcd> v;
        for (int a = 0; a < 20; ++a) {
            Eigen::VectorXcd x(M);
            for (int r = 0; r < M; ++r) x(r) = cplx(g(rng), real ? 0.0 : g(rng));
            v.push_back(x.normalized());
        }
        Eigen::MatrixXcd gram(20, 20);
        for (int a = 0; a < 20; ++a)
            for (int b = 0; b < 20; ++b) gram(a, b) = v[a].dot(m.acf(times[a] - times[b]) * v[b]);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> esg(0.5 * (gram + gram.adjoint()));
        CHECK(esg.eigenvalues().minCoeff() >= -1e-8 * G0.trace().real());
    }
}

TEST_CASE("phase delays") {
    std::mt19937_64 rng(25);
    auto kv = random_knots(rng, 2, 4, 0.0);
    std::vector<Eigen::MatrixXcd> C;
    for (int i = 0; i < kv.num_basis(); ++i) C.push_back(random_psd(rng, 2, 2));
    MatrixSplinePsdModel m(kv, C);
    auto same = m.with_phase_delay(0, 1, 0.0);
    CHECK((same.acf(1.1) - m.acf(1.1)).norm() == 0.0);

    const double t0 = 0.8;
    auto d = apply_phase_delay(m, 0, 1, t0);
    for (int s = 0; s <= 50; ++s) {
        const double w = kv.front() + (kv.back() - kv.front()) * s / 50.0;
        CHECK(std::abs(d.psd(w)(0, 1)) == doctest::Approx(std::abs(m.psd(w)(0, 1))).epsilon(1e-12));
        CHECK(std::abs(d.psd(w)(0, 0) - m.psd(w)(0, 0)) == 0.0);
    }
    for (int s = 0; s <= 40; ++s) {
        const double tau = -5.0 + 0.25 * s;
        CHECK(std::abs(d.acf(tau)(0, 1) - m.acf(tau - t0)(0, 1)) < 1e-9);
        CHECK(std::abs(d.acf(tau)(1, 0) - m.acf(tau + t0)(1, 0)) < 1e-9);
    }
    // Bochner consistency holds after the delay.
    const auto br = breaks_for(kv, false);
    const cplx q = fourier_quadrature_complex([&](double w) { return d.psd(w)(0, 1); }, br, 0.61);
    CHECK(std::abs(d.acf(0.61)(0, 1) - q) < 1e-8 * d.acf(0.0).norm());
    CHECK_THROWS_AS(m.with_phase_delay(1, 1, 0.1), std::invalid_argument);
    CHECK(d.phase_delays().size() == 1);
    CHECK(d.phase_delays()[0].t0 == t0);

    // Three channels: a lone pair delay is inconsistent, a per-channel shift is not.
    std::vector<Eigen::MatrixXcd> C3;
    for (int i = 0; i < kv.num_basis(); ++i) C3.push_back(random_psd(rng, 3, 3));
    MatrixSplinePsdModel m3(kv, C3);
    CHECK_THROWS_AS(m3.with_phase_delay(0, 1, 0.5), std::invalid_argument);
}

TEST_CASE("tensor model") {
    std::mt19937_64 rng(26);
    auto k1 = random_knots(rng, 1, 3, 0.0);
    auto k2 = random_knots(rng, 2, 2, 0.0);
    const int m1 = k1.num_basis(), m2 = k2.num_basis();
    auto u = random_coeffs(rng, m1), v = random_coeffs(rng, m2);
    std::vector<double> outer;
    for (double a : u)
        for (double b : v) outer.push_back(a * b);
    TensorPsdModel sep({k1, k2}, outer);
    SplinePsdModel mu(k1, u), mv(k2, v);
    for (auto [t1, t2] : {std::pair{0.3, -1.2}, {2.0, 0.7}, {-4.4, 3.1}}) {
        const double t[2] = {t1, t2};
        CHECK(std::abs(sep.acf(t) - mu.acf(t1) * mv.acf(t2)) < 1e-14);
        const double w[2] = {t1 / 10, t2 / 10};
        CHECK(sep.psd(w) == doctest::Approx(mu.psd(t1 / 10) * mv.psd(t2 / 10)));
    }
    CHECK(sep.variance() == doctest::Approx(mu.variance() * mv.variance()));
    const double zero[2] = {0.0, 0.0};
    CHECK(sep.acf(zero).real() == doctest::Approx(sep.variance()));
    const double bad[1] = {0.0};
    CHECK_THROWS_AS(sep.acf(bad), std::invalid_argument);

    // D = 1 reduces to the scalar model.
    TensorPsdModel one({k1}, u, true);
    SplinePsdModel s1(k1, u, true);
    for (double t : {0.0, 0.9, 5.5}) {
        const double tt[1] = {t};
        CHECK(std::abs(one.acf(tt) - s1.acf(t)) < 1e-12);
    }

    // Non-separable tensor against nested quadrature.
    for (bool real : {false, true}) {
        TensorPsdModel m({k1, k2}, random_coeffs(rng, m1 * m2), real);
        const auto b1 = breaks_for(k1, real), b2 = breaks_for(k2, real);
        for (auto [t1, t2] : {std::pair{0.4, 1.3}, {-2.2, 0.6}}) {
            auto inner = [&](double w1) {
                return fourier_quadrature(
                    [&](double w2) {
                        const double w[2] = {w1, w2};
                        return m.psd(w);
                    },
                    b2, t2, 1e-13);
            };
            const cplx q = fourier_quadrature_complex(inner, b1, t1, 1e-13);
            const double t[2] = {t1, t2};
            CHECK(std::abs(m.acf(t) - q) < 1e-7 * std::abs(q));
        }
    }
}

TEST_CASE("separable surrogate") {
    std::mt19937_64 rng(27);
    auto k1 = random_knots(rng, 1, 3, 0.0);
    auto k2 = random_knots(rng, 1, 4, 0.0);
    auto u = random_coeffs(rng, k1.num_basis()), v = random_coeffs(rng, k2.num_basis());
    std::vector<double> outer;
    for (double a : u)
        for (double b : v) outer.push_back(a * b);
    std::vector<double> grid;
    for (int s = -10; s <= 10; ++s) grid.push_back(0.5 * s);

    // Point-reflection symmetrisation mixes the axes, so exact separability of
    // a rank-1 tensor holds for the unsymmetrised model.
    auto rank1 = separable_surrogate(TensorPsdModel({k1, k2}, outer, false));
    CHECK(rank1.difference_field(grid, grid).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(rank1.difference(0.0, 0.0) == cplx(0.0));

    auto full = separable_surrogate(TensorPsdModel({k1, k2}, random_coeffs(rng, k1.num_basis() * k2.num_basis()), true));
    CHECK(full.difference(0.0, 0.0) == cplx(0.0));
    CHECK(full.difference_field(grid, grid).cwiseAbs().maxCoeff() > 1e-4);

    std::vector<double> zeros(outer.size(), 0.0);
    CHECK_THROWS_AS(separable_surrogate(TensorPsdModel({k1, k2}, zeros)), std::invalid_argument);
    CHECK_THROWS_AS(separable_surrogate(TensorPsdModel({k1}, u)), std::invalid_argument);
}

TEST_CASE("covariance matrices") {
    std::mt19937_64 rng(28);
    auto kv = random_knots(rng, 2, 6, 0.0);
    SplinePsdModel m(kv, random_coeffs(rng, kv.num_basis()), true);
    const double one[1] = {3.0};
    auto K1 = covariance_matrix(m, one);
    CHECK(K1.rows() == 1);
    CHECK(K1(0, 0) == doctest::Approx(m.variance()));

    std::vector<double> eq;
    for (int a = 0; a < 12; ++a) eq.push_back(0.5 * a);
    auto T = covariance_matrix(m, eq);
    for (int a = 1; a < 12; ++a)
        for (int b = 1; b < 12; ++b) CHECK(T(a, b) == doctest::Approx(T(a - 1, b - 1)).epsilon(1e-12));

    std::uniform_real_distribution<double> ut(0.0, 30.0);
    std::vector<double> times(60);
    for (auto& x : times) x = ut(rng);
    for (bool real : {false, true}) {
        SplinePsdModel mr(kv, random_coeffs(rng, kv.num_basis()), real);
        auto K = covariance_matrix_complex(mr, times);
        CHECK((K - K.adjoint()).norm() == 0.0);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(K);
        CHECK(es.eigenvalues().minCoeff() >= -1e-8 * K.trace().real());
    }
    CHECK_THROWS_AS(covariance_matrix(SplinePsdModel(kv, m.coeffs(), false), eq), std::invalid_argument);

    // Multivariate: time-major blocks.
    std::vector<Eigen::MatrixXcd> C;
    for (int i = 0; i < kv.num_basis(); ++i) C.push_back(random_psd(rng, 2, 2).real().cast<cplx>());
    MatrixSplinePsdModel mm(kv, C, true);
    auto KM = covariance_matrix(mm, std::span<const double>(times.data(), 15));
    CHECK(KM.rows() == 30);
    CHECK(KM(2 * 3 + 1, 2 * 7 + 0) == doctest::Approx(mm.acf(times[3] - times[7])(1, 0).real()));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> esm(KM);
    CHECK(esm.eigenvalues().minCoeff() >= -1e-8 * KM.trace());

    // Tensor: random 2-D locations.
    auto k2 = random_knots(rng, 1, 3, 0.0);
    TensorPsdModel mt({kv, k2}, random_coeffs(rng, kv.num_basis() * k2.num_basis()), true);
    Eigen::MatrixXd pts = Eigen::MatrixXd::Random(40, 2) * 10.0;
    auto KT = covariance_matrix(mt, pts);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> est(KT);
    CHECK(est.eigenvalues().minCoeff() >= -1e-8 * KT.trace());
}
