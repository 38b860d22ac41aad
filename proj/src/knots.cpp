#include "splinekernel/knots.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace splinekernel {

KnotVector::KnotVector(std::vector<double> knots, int degree) : knots_(std::move(knots)), degree_(degree) {
    if (degree_ < 0) throw std::invalid_argument("KnotVector: negative degree");
    if (knots_.size() < static_cast<std::size_t>(degree_) + 2)
        throw std::invalid_argument("KnotVector: need at least degree+2 knots, got " + std::to_string(knots_.size()));
    for (double x : knots_)
        if (!std::isfinite(x)) throw std::invalid_argument("KnotVector: non-finite knot");
    const double span = knots_.back() - knots_.front();
    if (!(span > 0.0)) throw std::invalid_argument("KnotVector: knots must be strictly increasing");
    // Coincident knots (reduced continuity) are not supported.
    const double min_gap = 1e-12 * span;
    for (std::size_t j = 0; j + 1 < knots_.size(); ++j)
        if (!(knots_[j + 1] - knots_[j] > min_gap))
            throw std::invalid_argument("KnotVector: knots must be strictly increasing (gap at index " +
                                        std::to_string(j) + ")");
}

double KnotVector::h_max() const {
    double h = 0.0;
    for (std::size_t j = 0; j + 1 < knots_.size(); ++j) h = std::max(h, knots_[j + 1] - knots_[j]);
    return h;
}

double KnotVector::h_min() const {
    double h = knots_.back() - knots_.front();
    for (std::size_t j = 0; j + 1 < knots_.size(); ++j) h = std::min(h, knots_[j + 1] - knots_[j]);
    return h;
}

bool KnotVector::is_uniform(double rel_tol) const {
    const double h = (knots_.back() - knots_.front()) / static_cast<double>(knots_.size() - 1);
    for (std::size_t j = 0; j < knots_.size(); ++j) {
        const double expected = knots_.front() + h * static_cast<double>(j);
        if (std::abs(knots_[j] - expected) > rel_tol * std::max(std::abs(h), std::abs(expected)) + rel_tol * h)
            return false;
    }
    return true;
}

std::vector<double> extend_by_reflection(const std::vector<double>& inner, int count) {
    if (count <= 0) return inner;
    const std::size_t n = inner.size();
    std::vector<double> out;
    out.reserve(n + 2 * static_cast<std::size_t>(count));
    // Offsets from each end; when the sequence is shorter than `count`
    // spacings the last available spacing is repeated.
    auto offset = [&](int j, bool left) {
        const std::size_t avail = n - 1;
        const std::size_t jj = std::min<std::size_t>(static_cast<std::size_t>(j), avail);
        double d = left ? inner[jj] - inner[0] : inner[n - 1] - inner[n - 1 - jj];
        if (static_cast<std::size_t>(j) > avail) {
            const double last = left ? inner[avail] - inner[avail - 1] : inner[1] - inner[0];
            d += last * static_cast<double>(static_cast<std::size_t>(j) - avail);
        }
        return d;
    };
    for (int j = count; j >= 1; --j) out.push_back(inner.front() - offset(j, true));
    out.insert(out.end(), inner.begin(), inner.end());
    for (int j = 1; j <= count; ++j) out.push_back(inner.back() + offset(j, false));
    return out;
}

KnotVector make_knots_offset_log(double lo, double hi, int n_points, double offset, int degree) {
    if (!std::isfinite(lo) || !std::isfinite(hi) || !std::isfinite(offset))
        throw std::invalid_argument("make_knots_offset_log: non-finite input");
    if (n_points < 2) throw std::invalid_argument("make_knots_offset_log: need at least 2 knots");
    if (!(lo < hi)) throw std::invalid_argument("make_knots_offset_log: require lo < hi");
    if (!(offset > 0.0) || !(lo + offset > 0.0))
        throw std::invalid_argument("make_knots_offset_log: require offset > 0 and lo + offset > 0");
    const double a = std::log(lo + offset);
    const double b = std::log(hi + offset);
    std::vector<double> inner(static_cast<std::size_t>(n_points));
    for (int j = 0; j < n_points; ++j) {
        const double t = static_cast<double>(j) / static_cast<double>(n_points - 1);
        inner[static_cast<std::size_t>(j)] = std::exp(a + (b - a) * t) - offset;
    }
    inner.front() = lo;
    inner.back() = hi;
    return KnotVector(extend_by_reflection(inner, degree), degree);
}

KnotVector make_knots_uniform(double lo, double hi, int n_points, int degree) {
    if (!std::isfinite(lo) || !std::isfinite(hi)) throw std::invalid_argument("make_knots_uniform: non-finite input");
    if (n_points < 2) throw std::invalid_argument("make_knots_uniform: need at least 2 knots");
    if (!(lo < hi)) throw std::invalid_argument("make_knots_uniform: require lo < hi");
    const double h = (hi - lo) / static_cast<double>(n_points - 1);
    const int total = n_points + 2 * degree;
    std::vector<double> k(static_cast<std::size_t>(total));
    for (int j = 0; j < total; ++j) k[static_cast<std::size_t>(j)] = lo + h * static_cast<double>(j - degree);
    return KnotVector(std::move(k), degree);
}

namespace {

void check_index(const KnotVector& kv, int i) {
    if (i < 0 || i >= kv.num_basis())
        throw std::out_of_range("basis index " + std::to_string(i) + " outside [0, " +
                                std::to_string(kv.num_basis()) + ")");
}

// Index s of the knot interval [kappa_s, kappa_{s+1}) holding omega, with the
// right end of the span assigned to the last interval; -1 outside.
int find_span(const std::vector<double>& t, double omega) {
    if (omega < t.front() || omega > t.back()) return -1;
    if (omega == t.back()) return static_cast<int>(t.size()) - 2;
    auto it = std::upper_bound(t.begin(), t.end(), omega);
    return static_cast<int>(it - t.begin()) - 1;
}

}  // namespace

double bspline_eval(const KnotVector& kv, int i, double omega) {
    check_index(kv, i);
    const auto& t = kv.knots();
    const int k = kv.degree();
    const int s = find_span(t, omega);
    if (s < i || s > i + k) return 0.0;
    double N[32];
    if (k >= 31) throw std::invalid_argument("bspline_eval: degree too large");
    for (int j = 0; j <= k; ++j) N[j] = (i + j == s) ? 1.0 : 0.0;
    for (int d = 1; d <= k; ++d) {
        for (int j = 0; j <= k - d; ++j) {
            const int a = i + j;
            const double left = (omega - t[a]) / (t[a + d] - t[a]) * N[j];
            const double right = (t[a + d + 1] - omega) / (t[a + d + 1] - t[a + 1]) * N[j + 1];
            N[j] = left + right;
        }
    }
    return N[0];
}

std::vector<std::pair<int, double>> bspline_nonzero(const KnotVector& kv, double omega) {
    std::vector<std::pair<int, double>> out;
    const int s = find_span(kv.knots(), omega);
    if (s < 0) return out;
    const int lo = std::max(0, s - kv.degree());
    const int hi = std::min(kv.num_basis() - 1, s);
    for (int i = lo; i <= hi; ++i) {
        const double v = bspline_eval(kv, i, omega);
        if (v != 0.0) out.emplace_back(i, v);
    }
    return out;
}

Eigen::MatrixXd design_matrix(const KnotVector& kv, std::span<const double> grid) {
    if (grid.empty()) throw std::invalid_argument("design_matrix: empty grid");
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(grid.size()), kv.num_basis());
    for (std::size_t l = 0; l < grid.size(); ++l) {
        if (!std::isfinite(grid[l])) throw std::invalid_argument("design_matrix: non-finite grid point");
        for (auto [i, v] : bspline_nonzero(kv, grid[l])) D(static_cast<Eigen::Index>(l), i) = v;
    }
    return D;
}

Eigen::SparseMatrix<double> design_matrix_sparse(const KnotVector& kv, std::span<const double> grid) {
    if (grid.empty()) throw std::invalid_argument("design_matrix: empty grid");
    std::vector<Eigen::Triplet<double>> trip;
    for (std::size_t l = 0; l < grid.size(); ++l) {
        if (!std::isfinite(grid[l])) throw std::invalid_argument("design_matrix: non-finite grid point");
        for (auto [i, v] : bspline_nonzero(kv, grid[l])) trip.emplace_back(static_cast<int>(l), i, v);
    }
    Eigen::SparseMatrix<double> D(static_cast<Eigen::Index>(grid.size()), kv.num_basis());
    D.setFromTriplets(trip.begin(), trip.end());
    return D;
}

double TruncatedPowerRep::value(double omega) const {
    if (omega >= cutoff()) return 0.0;
    double sum = 0.0;
    for (int j = 0; j <= degree; ++j) {
        const double x = omega - knots[static_cast<std::size_t>(j)];
        if (x < 0.0) continue;
        sum += alpha[static_cast<std::size_t>(j)] * std::pow(x, degree);
    }
    return sum;
}

std::vector<double> truncated_power_alpha_divided_differences(std::span<const double> t) {
    const std::size_t n = t.size();
    if (n < 2) throw std::invalid_argument("divided differences: need at least two knots");
    // table[a] holds the weights of [t_a, ..., t_{a+order}] as a function of order.
    std::vector<std::vector<long double>> table(n, std::vector<long double>(n, 0.0L));
    for (std::size_t a = 0; a < n; ++a) table[a][a] = 1.0L;
    for (std::size_t order = 1; order < n; ++order) {
        for (std::size_t a = 0; a + order < n; ++a) {
            const long double denom = static_cast<long double>(t[a + order]) - static_cast<long double>(t[a]);
            for (std::size_t j = 0; j < n; ++j) table[a][j] = (table[a + 1][j] - table[a][j]) / denom;
        }
    }
    const std::size_t k = n - 2;
    const long double sign = (k % 2 == 1) ? 1.0L : -1.0L;  // (-1)^{k+1}
    const long double width = static_cast<long double>(t[n - 1]) - static_cast<long double>(t[0]);
    std::vector<double> alpha(n);
    for (std::size_t j = 0; j < n; ++j) alpha[j] = static_cast<double>(sign * width * table[0][j]);
    return alpha;
}

TruncatedPowerRep truncated_power_coeffs(const KnotVector& kv, int i) {
    check_index(kv, i);
    const int k = kv.degree();
    TruncatedPowerRep rep;
    rep.index = i;
    rep.degree = k;
    rep.knots.assign(kv.knots().begin() + i, kv.knots().begin() + i + k + 2);
    const auto& t = rep.knots;
    switch (k) {
        case 0:
            rep.alpha = {1.0, -1.0};
            break;
        case 1: {
            const double a0 = 1.0 / (t[1] - t[0]);
            const double a1 = -((t[1] - t[0]) / (t[2] - t[1]) + 1.0) * a0;
            rep.alpha = {a0, a1, -a0 - a1};
            break;
        }
        case 2: {
            const double a0 = 1.0 / ((t[1] - t[0]) * (t[2] - t[0]));
            const double a1 = -1.0 / ((t[2] - t[0]) * (t[2] - t[1])) - 1.0 / ((t[3] - t[1]) * (t[2] - t[1])) - a0;
            const double w0 = t[3] - t[0];
            const double w1 = t[3] - t[1];
            const double w2 = t[3] - t[2];
            const double a2 = (-a0 * w0 * w0 - a1 * w1 * w1) / (w2 * w2);
            rep.alpha = {a0, a1, a2, -(a0 + a1 + a2)};
            break;
        }
        default:
            rep.alpha = truncated_power_alpha_divided_differences(t);
    }
    return rep;
}

std::vector<double> greville_sites(const KnotVector& kv) {
    const int k = kv.degree();
    std::vector<double> g(static_cast<std::size_t>(kv.num_basis()));
    for (int i = 0; i < kv.num_basis(); ++i) {
        if (k == 0) {
            g[static_cast<std::size_t>(i)] = 0.5 * (kv[i] + kv[i + 1]);
            continue;
        }
        double s = 0.0;
        for (int j = i + 1; j <= i + k; ++j) s += kv[static_cast<std::size_t>(j)];
        g[static_cast<std::size_t>(i)] = s / k;
    }
    return g;
}

std::vector<double> schoenberg_coefficients(const KnotVector& kv, const std::function<double(double)>& f) {
    auto sites = greville_sites(kv);
    std::vector<double> c(sites.size());
    for (std::size_t i = 0; i < sites.size(); ++i) {
        c[i] = f(sites[i]);
        if (!std::isfinite(c[i])) throw std::domain_error("quasi_interpolant: f is non-finite at a sample site");
    }
    return c;
}

std::vector<double> quasi_interpolant(const KnotVector& kv, const std::function<double(double)>& f) {
    const int k = kv.degree();
    if (k <= 1) return schoenberg_coefficients(kv, f);

    using MatL = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
    using VecL = Eigen::Matrix<long double, Eigen::Dynamic, 1>;
    const auto sites = greville_sites(kv);
    std::vector<long double> fact(static_cast<std::size_t>(k) + 1, 1.0L);
    for (int r = 1; r <= k; ++r) fact[static_cast<std::size_t>(r)] = fact[static_cast<std::size_t>(r) - 1] * r;

    std::vector<double> c(static_cast<std::size_t>(kv.num_basis()));
    for (int i = 0; i < kv.num_basis(); ++i) {
        const long double xi = sites[static_cast<std::size_t>(i)];
        const long double a = kv[static_cast<std::size_t>(i + 1)];
        const long double b = kv[static_cast<std::size_t>(i + k)];
        // Degree-k interpolant of f in powers of (t - xi).
        MatL V(k + 1, k + 1);
        VecL rhs(k + 1);
        for (int r = 0; r <= k; ++r) {
            const long double p = a + (b - a) * r / k;
            const double fv = f(static_cast<double>(p));
            if (!std::isfinite(fv)) throw std::domain_error("quasi_interpolant: f is non-finite at a sample site");
            rhs(r) = fv;
            long double pw = 1.0L;
            for (int q = 0; q <= k; ++q) {
                V(r, q) = pw;
                pw *= (p - xi);
            }
        }
        const VecL poly = V.fullPivLu().solve(rhs);
        // psi(t) = prod_j (kappa_{i+j} - t) in powers of (t - xi).
        std::vector<long double> psi{1.0L};
        for (int j = 1; j <= k; ++j) {
            const long double d = static_cast<long double>(kv[static_cast<std::size_t>(i + j)]) - xi;
            std::vector<long double> next(psi.size() + 1, 0.0L);
            for (std::size_t q = 0; q < psi.size(); ++q) {
                next[q] += d * psi[q];
                next[q + 1] -= psi[q];
            }
            psi = std::move(next);
        }
        // de Boor-Fix: lambda p = (1/k!) sum_r (-1)^{k-r} psi^{(k-r)}(xi) p^{(r)}(xi)
        long double acc = 0.0L;
        for (int r = 0; r <= k; ++r) {
            const long double dpsi = fact[static_cast<std::size_t>(k - r)] * psi[static_cast<std::size_t>(k - r)];
            const long double dp = fact[static_cast<std::size_t>(r)] * poly(r);
            acc += (((k - r) % 2) ? -1.0L : 1.0L) * dpsi * dp;
        }
        c[static_cast<std::size_t>(i)] = static_cast<double>(acc / fact[static_cast<std::size_t>(k)]);
    }
    return c;
}

double spline_value(const KnotVector& kv, std::span<const double> coeffs, double omega) {
    if (coeffs.size() != static_cast<std::size_t>(kv.num_basis()))
        throw std::invalid_argument("spline_value: coefficient count mismatch");
    double s = 0.0;
    for (auto [i, v] : bspline_nonzero(kv, omega)) s += coeffs[static_cast<std::size_t>(i)] * v;
    return s;
}

}  // namespace splinekernel
