#include "splinekernel/spectral.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace splinekernel {

namespace {

using ld = long double;
using cld = std::complex<long double>;

constexpr ld kTwoPi = 2.0L * std::numbers::pi_v<long double>;

cld expi(ld phase) { return {std::cos(phase), std::sin(phase)}; }

}  // namespace

double sinc(double x) {
    if (x == 0.0) return 1.0;
    const double px = std::numbers::pi * x;
    return std::sin(px) / px;
}

AcfBasis::AcfBasis(KnotVector kv, double series_threshold)
    : kv_(std::move(kv)), threshold_(series_threshold), uniform_(kv_.is_uniform()) {
    reps_.reserve(static_cast<std::size_t>(kv_.num_basis()));
    for (int i = 0; i < kv_.num_basis(); ++i) reps_.push_back(truncated_power_coeffs(kv_, i));
}

double AcfBasis::mass(int i) const {
    const int k = kv_.degree();
    return (kv_.support_hi(i) - kv_.support_lo(i)) / static_cast<double>(k + 1);
}

cplx AcfBasis::rho(int i, double tau) const {
    const auto& r = rep(i);
    const ld width = static_cast<ld>(r.knots.back()) - static_cast<ld>(r.knots.front());
    if (std::abs(kTwoPi * tau) * width < threshold_) return rho_series(i, tau);
    return rho_closed_form(i, tau);
}

// Both branches factor out e^{lambda kappa_i} so the remaining phases are
// relative to the start of the support.
cplx AcfBasis::rho_closed_form(int i, double tau) const {
    const auto& r = rep(i);
    const int k = r.degree;
    if (tau == 0.0) return {mass(i), 0.0};
    const ld t0 = r.knots.front();
    const ld tk1 = r.knots.back();
    const cld lambda(0.0L, kTwoPi * tau);
    // (-1)^k k! / lambda^{k+1}
    ld fact = 1.0L;
    for (int q = 2; q <= k; ++q) fact *= q;
    cld lam_pow = 1.0L;
    for (int q = 0; q <= k; ++q) lam_pow *= lambda;
    const cld prefactor = ((k % 2) ? -fact : fact) / lam_pow;

    const cld e_end = expi(kTwoPi * tau * (tk1 - t0));
    cld sum = 0.0L;
    for (int j = 0; j <= k; ++j) {
        const ld tj = r.knots[static_cast<std::size_t>(j)];
        const ld w = tk1 - tj;
        // sum_{l=0}^k (-lambda w)^l / l!
        cld poly = 0.0L;
        cld term = 1.0L;
        for (int l = 0; l <= k; ++l) {
            poly += term;
            term *= -lambda * w / static_cast<ld>(l + 1);
        }
        const cld bracket = e_end * poly - expi(kTwoPi * tau * (tj - t0));
        sum += static_cast<ld>(r.alpha[static_cast<std::size_t>(j)]) * bracket;
    }
    const cld val = expi(kTwoPi * tau * t0) * prefactor * sum;
    return {static_cast<double>(val.real()), static_cast<double>(val.imag())};
}

cplx AcfBasis::rho_series(int i, double tau) const {
    const auto& r = rep(i);
    const int k = r.degree;
    const ld t0 = r.knots.front();
    const ld tk1 = r.knots.back();
    const cld lambda(0.0L, kTwoPi * tau);
    cld sum = 0.0L;
    for (int j = 0; j <= k; ++j) {
        const ld tj = r.knots[static_cast<std::size_t>(j)];
        const ld w = tk1 - tj;
        // int_0^w u^k e^{lambda u} du = sum_n lambda^n w^{k+n+1} / (n! (k+n+1))
        cld s = 0.0L;
        cld lw_n = 1.0L;  // (lambda w)^n / n!
        const ld wk1 = std::pow(w, static_cast<ld>(k + 1));
        for (int n = 0; n < 200; ++n) {
            const cld term = lw_n * wk1 / static_cast<ld>(k + n + 1);
            s += term;
            if (std::abs(term) < 1e-19L * std::abs(s)) break;
            lw_n *= lambda * w / static_cast<ld>(n + 1);
        }
        sum += static_cast<ld>(r.alpha[static_cast<std::size_t>(j)]) * expi(kTwoPi * tau * (tj - t0)) * s;
    }
    const cld val = expi(kTwoPi * tau * t0) * sum;
    return {static_cast<double>(val.real()), static_cast<double>(val.imag())};
}

cplx AcfBasis::rho_uniform(int i, double tau) const {
    if (!uniform_) throw std::invalid_argument("rho_uniform: knots are not uniformly spaced");
    if (i < 0 || i >= num_basis()) throw std::out_of_range("rho_uniform: basis index out of range");
    const int k = kv_.degree();
    const double h = (kv_.back() - kv_.front()) / static_cast<double>(kv_.size() - 1);
    const double centre = kv_[static_cast<std::size_t>(i)] + 0.5 * (k + 1) * h;
    const double amp = h * std::pow(sinc(h * tau), k + 1);
    const double phase = 2.0 * std::numbers::pi * centre * tau;
    return {amp * std::cos(phase), amp * std::sin(phase)};
}

std::vector<cplx> AcfBasis::rho_all(double tau) const {
    std::vector<cplx> out(static_cast<std::size_t>(num_basis()));
    for (int i = 0; i < num_basis(); ++i) out[static_cast<std::size_t>(i)] = rho(i, tau);
    return out;
}

namespace {

struct PanelEstimate {
    cplx kronrod;
    double error;
    double abs_integral;
};

// One 7-point Gauss / 15-point Kronrod pair on [a, b]. Gauss nodes are the
// even-indexed Kronrod nodes.
PanelEstimate gauss_kronrod_15(const std::function<cplx(double)>& f, double a, double b, double two_pi_tau) {
    using boost::math::quadrature::gauss;
    using boost::math::quadrature::gauss_kronrod;
    const auto& x = gauss_kronrod<double, 15>::abscissa();
    const auto& wk = gauss_kronrod<double, 15>::weights();
    const auto& wg = gauss<double, 7>::weights();
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    auto g = [&](double w) {
        const cplx v = f(w);
        return std::pair{v * cplx(std::cos(two_pi_tau * w), std::sin(two_pi_tau * w)), std::abs(v)};
    };
    auto [c0, a0] = g(mid);
    cplx k = wk[0] * c0, gs = wg[0] * c0;
    double l1 = wk[0] * a0;
    for (std::size_t j = 1; j < x.size(); ++j) {
        auto [cl, al] = g(mid - half * x[j]);
        auto [cr, ar] = g(mid + half * x[j]);
        k += wk[j] * (cl + cr);
        l1 += wk[j] * (al + ar);
        if (j % 2 == 0) gs += wg[j / 2] * (cl + cr);
    }
    return {k * half, std::abs(k - gs) * half, l1 * half};
}

cplx adaptive_panel(const std::function<cplx(double)>& f, double a, double b, double two_pi_tau, double abs_tol,
                    double min_width, PanelEstimate est) {
    if (est.error <= abs_tol) return est.kronrod;
    if (b - a < min_width)
        throw QuadratureError("fourier_quadrature: no convergence on [" + std::to_string(a) + ", " +
                              std::to_string(b) + "], error estimate " + std::to_string(est.error));
    const double m = 0.5 * (a + b);
    auto left = gauss_kronrod_15(f, a, m, two_pi_tau);
    auto right = gauss_kronrod_15(f, m, b, two_pi_tau);
    return adaptive_panel(f, a, m, two_pi_tau, 0.5 * abs_tol, min_width, left) +
           adaptive_panel(f, m, b, two_pi_tau, 0.5 * abs_tol, min_width, right);
}

}  // namespace

cplx fourier_quadrature(const std::function<double(double)>& f, const std::vector<double>& breaks, double tau,
                        double panel_tol) {
    return fourier_quadrature_complex([&](double w) { return cplx(f(w)); }, breaks, tau, panel_tol);
}

cplx fourier_quadrature_complex(const std::function<cplx(double)>& f, const std::vector<double>& breaks, double tau,
                                double panel_tol) {
    const double two_pi_tau = 2.0 * std::numbers::pi * tau;
    cplx total = 0.0;
    for (std::size_t p = 0; p + 1 < breaks.size(); ++p) {
        const double a = breaks[p], b = breaks[p + 1];
        if (!(b > a)) continue;
        // Nodes are interior, so half-open supports at the panel ends do not matter.
        // Start from pieces holding at most one period so that Gauss and
        // Kronrod cannot agree on an aliased value.
        const auto pieces = static_cast<std::size_t>(std::max(1.0, std::ceil(std::abs(tau) * (b - a))));
        const double step = (b - a) / static_cast<double>(pieces);
        std::vector<PanelEstimate> est(pieces);
        double abs_integral = 0.0;
        for (std::size_t q = 0; q < pieces; ++q) {
            est[q] = gauss_kronrod_15(f, a + q * step, q + 1 == pieces ? b : a + (q + 1) * step, two_pi_tau);
            abs_integral += est[q].abs_integral;
        }
        const double abs_tol = panel_tol * std::max(abs_integral, 1e-300) / static_cast<double>(pieces);
        for (std::size_t q = 0; q < pieces; ++q)
            total += adaptive_panel(f, a + q * step, q + 1 == pieces ? b : a + (q + 1) * step, two_pi_tau, abs_tol,
                                    1e-10 * (b - a), est[q]);
    }
    return total;
}

cplx ift_quadrature_oracle(const KnotVector& kv, int i, double tau, double panel_tol) {
    if (i < 0 || i >= kv.num_basis()) throw std::out_of_range("ift_quadrature_oracle: basis index out of range");
    std::vector<double> breaks(kv.knots().begin() + i, kv.knots().begin() + i + kv.degree() + 2);
    return fourier_quadrature([&](double w) { return bspline_eval(kv, i, w); }, breaks, tau, panel_tol);
}

}  // namespace splinekernel
