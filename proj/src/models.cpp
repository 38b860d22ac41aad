#include "splinekernel/models.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Eigenvalues>

namespace splinekernel {

namespace {

void check_nonnegative(const std::vector<double>& c, std::size_t expected, const char* who) {
    if (c.size() != expected)
        throw std::invalid_argument(std::string(who) + ": expected " + std::to_string(expected) +
                                    " coefficients, got " + std::to_string(c.size()));
    for (double x : c)
        if (!std::isfinite(x) || x < 0.0)
            throw std::invalid_argument(std::string(who) + ": coefficients must be finite and nonnegative");
}

cplx expi(double phase) { return {std::cos(phase), std::sin(phase)}; }

}  // namespace

// ---------------------------------------------------------------- univariate

SplinePsdModel::SplinePsdModel(KnotVector kv, std::vector<double> coeffs, bool real_process)
    : SplinePsdModel(AcfBasis(std::move(kv)), std::move(coeffs), real_process) {}

SplinePsdModel::SplinePsdModel(AcfBasis basis, std::vector<double> coeffs, bool real_process)
    : basis_(std::move(basis)), coeffs_(std::move(coeffs)), real_(real_process) {
    check_nonnegative(coeffs_, static_cast<std::size_t>(basis_.num_basis()), "SplinePsdModel");
}

double SplinePsdModel::one_sided(double omega) const {
    double s = 0.0;
    for (auto [i, b] : bspline_nonzero(knots(), omega)) s += coeffs_[static_cast<std::size_t>(i)] * b;
    return s;
}

double SplinePsdModel::psd(double omega) const {
    if (real_) return 0.5 * (one_sided(omega) + one_sided(-omega));
    return one_sided(omega);
}

cplx SplinePsdModel::acf(double tau) const {
    cplx s = 0.0;
    for (int i = 0; i < num_basis(); ++i) {
        const double c = coeffs_[static_cast<std::size_t>(i)];
        if (c != 0.0) s += c * basis_.rho(i, tau);
    }
    return real_ ? cplx(s.real(), 0.0) : s;
}

double SplinePsdModel::variance() const {
    double s = 0.0;
    for (int i = 0; i < num_basis(); ++i) s += coeffs_[static_cast<std::size_t>(i)] * basis_.mass(i);
    return s;
}

SplinePsdModel SplinePsdModel::with_coeffs(std::vector<double> coeffs) const {
    return SplinePsdModel(basis_, std::move(coeffs), real_);
}

// -------------------------------------------------------------- multivariate

MatrixSplinePsdModel::MatrixSplinePsdModel(KnotVector kv, std::vector<Eigen::MatrixXcd> coeffs, bool real_process)
    : basis_(std::move(kv)), coeffs_(std::move(coeffs)), real_(real_process) {
    if (coeffs_.size() != static_cast<std::size_t>(basis_.num_basis()))
        throw std::invalid_argument("MatrixSplinePsdModel: expected " + std::to_string(basis_.num_basis()) +
                                    " coefficient matrices, got " + std::to_string(coeffs_.size()));
    const Eigen::Index M = coeffs_.front().rows();
    if (M < 1) throw std::invalid_argument("MatrixSplinePsdModel: empty coefficient matrix");
    for (auto& C : coeffs_) {
        if (C.rows() != M || C.cols() != M)
            throw std::invalid_argument("MatrixSplinePsdModel: coefficient matrices must all be M x M");
        if (!C.allFinite()) throw std::invalid_argument("MatrixSplinePsdModel: non-finite coefficient");
        const double scale = std::max(1.0, C.norm());
        if ((C - C.adjoint()).norm() > 1e-12 * scale)
            throw std::invalid_argument("MatrixSplinePsdModel: coefficient matrix is not Hermitian");
        C = 0.5 * (C + C.adjoint()).eval();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(C, Eigen::EigenvaluesOnly);
        if (es.eigenvalues().minCoeff() < -1e-10 * std::max(C.trace().real(), 1e-300))
            throw std::invalid_argument("MatrixSplinePsdModel: coefficient matrix is not positive semi-definite");
    }
    delays_ = Eigen::MatrixXd::Zero(M, M);
}

std::vector<PhaseDelay> MatrixSplinePsdModel::phase_delays() const {
    std::vector<PhaseDelay> out;
    for (int r = 0; r < dim(); ++r)
        for (int s = r + 1; s < dim(); ++s)
            if (delays_(r, s) != 0.0) out.push_back({r, s, delays_(r, s)});
    return out;
}

Eigen::MatrixXcd MatrixSplinePsdModel::one_sided(double omega) const {
    Eigen::MatrixXcd F = Eigen::MatrixXcd::Zero(dim(), dim());
    for (auto [i, b] : bspline_nonzero(knots(), omega)) F += b * coeffs_[static_cast<std::size_t>(i)];
    for (int r = 0; r < dim(); ++r)
        for (int s = 0; s < dim(); ++s)
            if (delays_(r, s) != 0.0) F(r, s) *= expi(-2.0 * std::numbers::pi * omega * delays_(r, s));
    return F;
}

Eigen::MatrixXcd MatrixSplinePsdModel::psd(double omega) const {
    if (real_) return 0.5 * (one_sided(omega) + one_sided(-omega).conjugate());
    return one_sided(omega);
}

Eigen::MatrixXcd MatrixSplinePsdModel::acf(double tau) const {
    const int M = dim();
    Eigen::MatrixXcd G = Eigen::MatrixXcd::Zero(M, M);
    const auto rho0 = basis_.rho_all(tau);
    for (int r = 0; r < M; ++r)
        for (int s = 0; s < M; ++s) {
            const double d = delays_(r, s);
            cplx g = 0.0;
            for (int i = 0; i < num_basis(); ++i) {
                const cplx c = coeffs_[static_cast<std::size_t>(i)](r, s);
                if (c == cplx(0.0)) continue;
                g += c * (d == 0.0 ? rho0[static_cast<std::size_t>(i)] : basis_.rho(i, tau - d));
            }
            G(r, s) = real_ ? cplx(g.real(), 0.0) : g;
        }
    return G;
}

MatrixSplinePsdModel MatrixSplinePsdModel::with_phase_delay(int r, int s, double t0) const {
    if (r < 0 || s < 0 || r >= dim() || s >= dim())
        throw std::out_of_range("with_phase_delay: channel index out of range");
    if (r == s) throw std::invalid_argument("with_phase_delay: a delay on a marginal spectrum is not allowed");
    if (!std::isfinite(t0)) throw std::invalid_argument("with_phase_delay: non-finite delay");
    MatrixSplinePsdModel out = *this;
    out.delays_(r, s) += t0;
    out.delays_(s, r) -= t0;
    const double scale = 1.0 + out.delays_.cwiseAbs().maxCoeff();
    for (int a = 0; a < dim(); ++a)
        for (int b = 0; b < dim(); ++b)
            if (std::abs(out.delays_(a, b) - (out.delays_(a, 0) - out.delays_(b, 0))) > 1e-12 * scale)
                throw std::invalid_argument(
                    "with_phase_delay: delays are not of the form d_r - d_s; set the remaining pairs consistently");
    return out;
}

// -------------------------------------------------------------------- tensor

TensorPsdModel::TensorPsdModel(std::vector<KnotVector> axes, std::vector<double> coeffs, bool real_process)
    : coeffs_(std::move(coeffs)), real_(real_process) {
    if (axes.empty()) throw std::invalid_argument("TensorPsdModel: at least one axis is required");
    std::size_t total = 1;
    for (auto& kv : axes) {
        shape_.push_back(kv.num_basis());
        total *= static_cast<std::size_t>(kv.num_basis());
        axes_.emplace_back(std::move(kv));
    }
    check_nonnegative(coeffs_, total, "TensorPsdModel");
}

template <class T>
T TensorPsdModel::contract(const std::vector<std::vector<T>>& per_axis) const {
    // Sum over the last axis first, then fold outwards.
    const int D = dim();
    std::vector<T> level(coeffs_.begin(), coeffs_.end());
    for (int j = D - 1; j >= 0; --j) {
        const auto& v = per_axis[static_cast<std::size_t>(j)];
        const std::size_t m = v.size();
        std::vector<T> next(level.size() / m, T(0));
        for (std::size_t a = 0; a < next.size(); ++a) {
            T s(0);
            for (std::size_t b = 0; b < m; ++b) s += level[a * m + b] * v[b];
            next[a] = s;
        }
        level = std::move(next);
    }
    return level.front();
}

double TensorPsdModel::one_sided(std::span<const double> omega) const {
    std::vector<std::vector<double>> vals;
    for (int j = 0; j < dim(); ++j) {
        const auto& kv = axes_[static_cast<std::size_t>(j)].knots();
        std::vector<double> v(static_cast<std::size_t>(kv.num_basis()), 0.0);
        bool any = false;
        for (auto [i, b] : bspline_nonzero(kv, omega[static_cast<std::size_t>(j)])) {
            v[static_cast<std::size_t>(i)] = b;
            any = true;
        }
        if (!any) return 0.0;
        vals.push_back(std::move(v));
    }
    return contract(vals);
}

double TensorPsdModel::psd(std::span<const double> omega) const {
    if (omega.size() != axes_.size()) throw std::invalid_argument("TensorPsdModel::psd: dimension mismatch");
    if (!real_) return one_sided(omega);
    std::vector<double> neg(omega.begin(), omega.end());
    for (double& x : neg) x = -x;
    return 0.5 * (one_sided(omega) + one_sided(neg));
}

cplx TensorPsdModel::acf(std::span<const double> tau) const {
    if (tau.size() != axes_.size()) throw std::invalid_argument("TensorPsdModel::acf: dimension mismatch");
    std::vector<std::vector<cplx>> vals;
    for (int j = 0; j < dim(); ++j) vals.push_back(axes_[static_cast<std::size_t>(j)].rho_all(tau[static_cast<std::size_t>(j)]));
    const cplx g = contract(vals);
    return real_ ? cplx(g.real(), 0.0) : g;
}

double TensorPsdModel::variance() const {
    std::vector<std::vector<double>> masses;
    for (const auto& ab : axes_) {
        std::vector<double> v;
        for (int i = 0; i < ab.num_basis(); ++i) v.push_back(ab.mass(i));
        masses.push_back(std::move(v));
    }
    return contract(masses);
}

TensorPsdModel TensorPsdModel::with_coeffs(std::vector<double> coeffs) const {
    TensorPsdModel out = *this;
    check_nonnegative(coeffs, out.coeffs_.size(), "TensorPsdModel");
    out.coeffs_ = std::move(coeffs);
    return out;
}

// --------------------------------------------------------------- separability

SeparableSurrogate::SeparableSurrogate(TensorPsdModel model) : model_(std::move(model)) {
    if (model_.dim() != 2) throw std::invalid_argument("separable_surrogate: model must be two-dimensional");
    const double zero[2] = {0.0, 0.0};
    variance_ = model_.acf(zero).real();
    if (!(variance_ > 0.0)) throw std::invalid_argument("separable_surrogate: model has zero variance");
}

cplx SeparableSurrogate::axis1(double tau1) const {
    const double t[2] = {tau1, 0.0};
    return model_.acf(t);
}

cplx SeparableSurrogate::axis2(double tau2) const {
    const double t[2] = {0.0, tau2};
    return model_.acf(t);
}

cplx SeparableSurrogate::value(double tau1, double tau2) const { return axis1(tau1) * (axis2(tau2) / variance_); }

cplx SeparableSurrogate::difference(double tau1, double tau2) const {
    const double t[2] = {tau1, tau2};
    return (model_.acf(t) - value(tau1, tau2)) / variance_;
}

Eigen::MatrixXcd SeparableSurrogate::difference_field(std::span<const double> tau1, std::span<const double> tau2) const {
    std::vector<cplx> g1, g2;
    for (double t : tau1) g1.push_back(axis1(t));
    for (double t : tau2) g2.push_back(axis2(t));
    Eigen::MatrixXcd out(static_cast<Eigen::Index>(tau1.size()), static_cast<Eigen::Index>(tau2.size()));
    for (std::size_t a = 0; a < tau1.size(); ++a)
        for (std::size_t b = 0; b < tau2.size(); ++b) {
            const double t[2] = {tau1[a], tau2[b]};
            out(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
                (model_.acf(t) - g1[a] * (g2[b] / variance_)) / variance_;
        }
    return out;
}

// ---------------------------------------------------------------- covariance

Eigen::MatrixXcd covariance_matrix_complex(const SplinePsdModel& m, std::span<const double> times) {
    const auto n = static_cast<Eigen::Index>(times.size());
    Eigen::MatrixXcd K(n, n);
    for (Eigen::Index a = 0; a < n; ++a) {
        K(a, a) = m.variance();
        for (Eigen::Index b = 0; b < a; ++b) {
            K(a, b) = m.acf(times[static_cast<std::size_t>(a)] - times[static_cast<std::size_t>(b)]);
            K(b, a) = std::conj(K(a, b));
        }
    }
    return K;
}

Eigen::MatrixXd covariance_matrix(const SplinePsdModel& m, std::span<const double> times) {
    if (!m.real_process()) throw std::invalid_argument("covariance_matrix: model is not a real process");
    return covariance_matrix_complex(m, times).real();
}

Eigen::MatrixXcd covariance_matrix_complex(const MatrixSplinePsdModel& m, std::span<const double> times) {
    const auto n = static_cast<Eigen::Index>(times.size());
    const Eigen::Index M = m.dim();
    Eigen::MatrixXcd K(n * M, n * M);
    for (Eigen::Index a = 0; a < n; ++a)
        for (Eigen::Index b = 0; b <= a; ++b) {
            const Eigen::MatrixXcd G = m.acf(times[static_cast<std::size_t>(a)] - times[static_cast<std::size_t>(b)]);
            K.block(a * M, b * M, M, M) = G;
            if (b != a) K.block(b * M, a * M, M, M) = G.adjoint();
        }
    return K;
}

Eigen::MatrixXd covariance_matrix(const MatrixSplinePsdModel& m, std::span<const double> times) {
    if (!m.real_process()) throw std::invalid_argument("covariance_matrix: model is not a real process");
    return covariance_matrix_complex(m, times).real();
}

Eigen::MatrixXcd covariance_matrix_complex(const TensorPsdModel& m, const Eigen::MatrixXd& points) {
    if (points.cols() != m.dim()) throw std::invalid_argument("covariance_matrix: point dimension mismatch");
    const Eigen::Index n = points.rows();
    Eigen::MatrixXcd K(n, n);
    std::vector<double> lag(static_cast<std::size_t>(m.dim()));
    for (Eigen::Index a = 0; a < n; ++a) {
        K(a, a) = m.variance();
        for (Eigen::Index b = 0; b < a; ++b) {
            for (int j = 0; j < m.dim(); ++j) lag[static_cast<std::size_t>(j)] = points(a, j) - points(b, j);
            K(a, b) = m.acf(lag);
            K(b, a) = std::conj(K(a, b));
        }
    }
    return K;
}

Eigen::MatrixXd covariance_matrix(const TensorPsdModel& m, const Eigen::MatrixXd& points) {
    if (!m.real_process()) throw std::invalid_argument("covariance_matrix: model is not a real process");
    return covariance_matrix_complex(m, points).real();
}

}  // namespace splinekernel
