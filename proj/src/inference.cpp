#include "splinekernel/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/SparseCholesky>

#include "splinekernel/fft.hpp"

namespace splinekernel {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

void require_finite(std::span<const double> y, const char* who) {
    for (double v : y)
        if (!std::isfinite(v)) throw std::invalid_argument(std::string(who) + ": non-finite data");
}

}  // namespace

// ---------------------------------------------------------------- periodogram

double Periodogram::centred_frequency(int axis, int l) const {
    const double w = frequency(axis, l);
    return 2 * l >= shape[axis] ? w - 1.0 / spacing[axis] : w;
}

Periodogram periodogram(std::span<const cplx> y, double delta, bool demean) {
    if (y.size() < 2) throw std::invalid_argument("periodogram: need at least 2 samples");
    if (!(delta > 0.0) || !std::isfinite(delta)) throw std::invalid_argument("periodogram: spacing must be positive");
    std::vector<cplx> x(y.begin(), y.end());
    for (const cplx& v : x)
        if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
            throw std::invalid_argument("periodogram: non-finite data");
    const double n = static_cast<double>(x.size());
    if (demean) {
        cplx mean = 0.0;
        for (const cplx& v : x) mean += v;
        mean /= n;
        for (cplx& v : x) v -= mean;
    }
    const auto spec = fft(x);
    Periodogram pg;
    pg.shape = {static_cast<int>(x.size())};
    pg.spacing = {delta};
    pg.values.resize(spec.size());
    for (std::size_t l = 0; l < spec.size(); ++l) pg.values[l] = delta / n * std::norm(spec[l]);
    return pg;
}

Periodogram periodogram(std::span<const double> y, double delta, bool demean) {
    require_finite(y, "periodogram");
    std::vector<cplx> x(y.begin(), y.end());
    return periodogram(std::span<const cplx>(x), delta, demean);
}

Periodogram periodogram_2d(const Eigen::MatrixXd& y, double delta1, double delta2, bool demean) {
    const int n1 = static_cast<int>(y.rows());
    const int n2 = static_cast<int>(y.cols());
    if (n1 < 2 || n2 < 2) throw std::invalid_argument("periodogram_2d: need at least 2 samples per axis");
    if (!(delta1 > 0.0) || !(delta2 > 0.0)) throw std::invalid_argument("periodogram_2d: spacing must be positive");
    if (!y.allFinite()) throw std::invalid_argument("periodogram_2d: non-finite data");
    const double mean = demean ? y.mean() : 0.0;
    std::vector<cplx> x(static_cast<std::size_t>(n1) * static_cast<std::size_t>(n2));
    for (int a = 0; a < n1; ++a)
        for (int b = 0; b < n2; ++b) x[static_cast<std::size_t>(a) * n2 + b] = y(a, b) - mean;
    const auto spec = fft_2d(x, n1, n2);
    const double scale = delta1 * delta2 / (static_cast<double>(n1) * static_cast<double>(n2));
    Periodogram pg;
    pg.shape = {n1, n2};
    pg.spacing = {delta1, delta2};
    pg.values.resize(spec.size());
    for (std::size_t l = 0; l < spec.size(); ++l) pg.values[l] = scale * std::norm(spec[l]);
    return pg;
}

// ---------------------------------------------------------------- Whittle

namespace {

using Entry = std::pair<int, double>;

// sum_m B_i(w + m * period) for every basis i that is nonzero somewhere on the aliases.
std::vector<Entry> aliased_values(const KnotVector& kv, double w, double period) {
    const double lo = kv.front();
    const double hi = kv.back();
    const auto m_lo = static_cast<long>(std::ceil((lo - w) / period));
    const auto m_hi = static_cast<long>(std::floor((hi - w) / period));
    std::vector<double> acc(static_cast<std::size_t>(kv.num_basis()), 0.0);
    bool any = false;
    // A span of whole periods would meet the same frequency at both closed ends.
    const bool both_ends = m_hi > m_lo && w + static_cast<double>(m_lo) * period == lo &&
                           w + static_cast<double>(m_hi) * period == hi;
    for (long m = m_lo; m <= m_hi - (both_ends ? 1 : 0); ++m) {
        for (const auto& [i, v] : bspline_nonzero(kv, w + static_cast<double>(m) * period)) {
            acc[static_cast<std::size_t>(i)] += v;
            any = true;
        }
    }
    std::vector<Entry> out;
    if (!any) return out;
    for (int i = 0; i < kv.num_basis(); ++i)
        if (acc[static_cast<std::size_t>(i)] != 0.0) out.emplace_back(i, acc[static_cast<std::size_t>(i)]);
    return out;
}

void expand_product(const std::vector<const std::vector<Entry>*>& lists, const std::vector<int>& shape,
                    double weight, std::vector<Entry>& out, std::size_t axis = 0, int flat = 0,
                    double value = 1.0) {
    if (axis == lists.size()) {
        out.emplace_back(flat, weight * value);
        return;
    }
    for (const auto& [i, v] : *lists[axis])
        expand_product(lists, shape, weight, out, axis + 1, flat * shape[axis] + i, value * v);
}

}  // namespace

WhittleProblem::WhittleProblem(std::vector<KnotVector> axes, bool real_process, const Periodogram& pg,
                               const WhittleOptions& opts)
    : axes_(std::move(axes)), real_(real_process), opts_(opts) {
    const int dim = static_cast<int>(axes_.size());
    if (dim == 0) throw std::invalid_argument("WhittleProblem: no axes");
    if (pg.dim() != dim) throw std::invalid_argument("WhittleProblem: periodogram and model dimensions differ");
    if (pg.values.size() == 0) throw std::invalid_argument("WhittleProblem: empty periodogram");

    std::vector<int> shape(static_cast<std::size_t>(dim));
    int num_coeffs = 1;
    for (int j = 0; j < dim; ++j) {
        shape[static_cast<std::size_t>(j)] = axes_[static_cast<std::size_t>(j)].num_basis();
        num_coeffs *= shape[static_cast<std::size_t>(j)];
    }

    // Per axis: retained frequency indices and aliased basis values at +w and -w.
    struct AxisRow {
        int l;
        std::vector<Entry> plus;
        std::vector<Entry> minus;
    };
    std::vector<std::vector<AxisRow>> rows(static_cast<std::size_t>(dim));
    for (int j = 0; j < dim; ++j) {
        const auto& kv = axes_[static_cast<std::size_t>(j)];
        const double period = 1.0 / pg.spacing[static_cast<std::size_t>(j)];
        for (int l = 1; l < pg.shape[static_cast<std::size_t>(j)]; ++l) {
            const double wc = pg.centred_frequency(j, l);
            if (opts.band && (std::abs(wc) < opts.band->first || std::abs(wc) > opts.band->second)) continue;
            AxisRow r{l, aliased_values(kv, wc, period), {}};
            if (real_) r.minus = aliased_values(kv, -wc, period);
            rows[static_cast<std::size_t>(j)].push_back(std::move(r));
        }
        if (rows[static_cast<std::size_t>(j)].empty())
            throw std::invalid_argument("WhittleProblem: no frequencies retained");
    }

    std::size_t total = 1;
    for (const auto& r : rows) total *= r.size();
    values_.resize(static_cast<Eigen::Index>(total));
    std::vector<Eigen::Triplet<double>> triplets;
    std::vector<std::size_t> pos(static_cast<std::size_t>(dim), 0);
    std::vector<Entry> entries;
    for (std::size_t row = 0; row < total; ++row) {
        std::size_t rem = row;
        for (int j = dim - 1; j >= 0; --j) {
            pos[static_cast<std::size_t>(j)] = rem % rows[static_cast<std::size_t>(j)].size();
            rem /= rows[static_cast<std::size_t>(j)].size();
        }
        std::size_t flat_pg = 0;
        std::vector<const std::vector<Entry>*> plus(static_cast<std::size_t>(dim));
        std::vector<const std::vector<Entry>*> minus(static_cast<std::size_t>(dim));
        for (int j = 0; j < dim; ++j) {
            const auto& ar = rows[static_cast<std::size_t>(j)][pos[static_cast<std::size_t>(j)]];
            flat_pg = flat_pg * static_cast<std::size_t>(pg.shape[static_cast<std::size_t>(j)]) +
                      static_cast<std::size_t>(ar.l);
            plus[static_cast<std::size_t>(j)] = &ar.plus;
            minus[static_cast<std::size_t>(j)] = &ar.minus;
        }
        values_(static_cast<Eigen::Index>(row)) = pg.values[flat_pg];
        entries.clear();
        expand_product(plus, shape, real_ ? 0.5 : 1.0, entries);
        if (real_) expand_product(minus, shape, 0.5, entries);
        std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) { return a.first < b.first; });
        for (std::size_t e = 0; e < entries.size();) {
            const int col = entries[e].first;
            double v = 0.0;
            for (; e < entries.size() && entries[e].first == col; ++e) v += entries[e].second;
            triplets.emplace_back(static_cast<int>(row), col, v);
        }
    }
    design_.resize(static_cast<Eigen::Index>(total), num_coeffs);
    design_.setFromTriplets(triplets.begin(), triplets.end());
    design_.makeCompressed();

    const double max_i = values_.maxCoeff();
    floor_ = max_i > 0.0 ? opts.floor_rel * max_i : opts.floor_rel;
}

WhittleEval WhittleProblem::evaluate(std::span<const double> coeffs, bool derivatives) const {
    if (static_cast<Eigen::Index>(coeffs.size()) != design_.cols())
        throw std::invalid_argument("WhittleProblem: coefficient count mismatch");
    const Eigen::Map<const Eigen::VectorXd> c(coeffs.data(), static_cast<Eigen::Index>(coeffs.size()));
    const Eigen::VectorXd f = design_ * c;
    WhittleEval out;
    Eigen::VectorXd w1;
    Eigen::VectorXd w2;
    if (derivatives) {
        w1.setZero(f.size());
        w2.setZero(f.size());
    }
    double value = 0.0;
    for (Eigen::Index l = 0; l < f.size(); ++l) {
        const double I = values_(l);
        if (!(f(l) >= floor_)) {
            value += std::log(floor_) + I / floor_;
            ++out.floor_activations;
            continue;
        }
        const double fl = f(l);
        value += std::log(fl) + I / fl;
        if (derivatives) {
            const double inv = 1.0 / fl;
            w1(l) = inv - I * inv * inv;
            w2(l) = 2.0 * I * inv * inv * inv - inv * inv;
        }
    }
    out.value = value;
    if (derivatives) {
        out.gradient = design_.transpose() * w1;
        const Eigen::SparseMatrix<double> scaled = w2.asDiagonal() * design_;
        out.hessian = design_.transpose() * scaled;
    }
    return out;
}

namespace {

std::vector<KnotVector> knot_axes(const TensorPsdModel& m) {
    std::vector<KnotVector> axes;
    for (const auto& a : m.axes()) axes.push_back(a.knots());
    return axes;
}

int hessian_bandwidth(const Eigen::SparseMatrix<double>& h) {
    int bw = 0;
    for (int k = 0; k < h.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(h, k); it; ++it)
            bw = std::max(bw, static_cast<int>(std::abs(it.row() - it.col())));
    return bw;
}

}  // namespace

double whittle_nll(const SplinePsdModel& m, const Periodogram& pg, const WhittleOptions& opts) {
    return WhittleProblem({m.knots()}, m.real_process(), pg, opts).evaluate(m.coeffs(), false).value;
}

double whittle_nll(const TensorPsdModel& m, const Periodogram& pg, const WhittleOptions& opts) {
    return WhittleProblem(knot_axes(m), m.real_process(), pg, opts).evaluate(m.coeffs(), false).value;
}

WhittleEval whittle_grad_hess(const SplinePsdModel& m, const Periodogram& pg, const WhittleOptions& opts) {
    return WhittleProblem({m.knots()}, m.real_process(), pg, opts).evaluate(m.coeffs(), true);
}

WhittleEval whittle_grad_hess(const TensorPsdModel& m, const Periodogram& pg, const WhittleOptions& opts) {
    return WhittleProblem(knot_axes(m), m.real_process(), pg, opts).evaluate(m.coeffs(), true);
}

FitReport fit_whittle(const WhittleProblem& problem, std::span<const double> init) {
    const int p = problem.num_coeffs();
    const auto& opts = problem.options();
    Eigen::VectorXd c0(p);
    if (init.empty()) {
        // Best multiple of a flat start: s = mean(I / f1) over frequencies the basis reaches.
        const Eigen::VectorXd f1 = problem.design() * Eigen::VectorXd::Ones(p);
        double sum = 0.0;
        int count = 0;
        for (Eigen::Index l = 0; l < f1.size(); ++l) {
            if (f1(l) > 0.0) {
                sum += problem.values()(l) / f1(l);
                ++count;
            }
        }
        const double s = count > 0 && sum > 0.0 ? sum / count : 1.0;
        c0.setConstant(s);
    } else {
        if (static_cast<int>(init.size()) != p) throw std::invalid_argument("fit_whittle: init size mismatch");
        for (int i = 0; i < p; ++i) {
            if (!(init[static_cast<std::size_t>(i)] >= 0.0) || !std::isfinite(init[static_cast<std::size_t>(i)]))
                throw std::invalid_argument("fit_whittle: init must be finite and nonnegative");
            c0(i) = init[static_cast<std::size_t>(i)];
        }
    }

    Eigen::VectorXd theta = c0.cwiseSqrt();
    auto coeffs_of = [](const Eigen::VectorXd& t) {
        Eigen::VectorXd c = t.cwiseProduct(t);
        return std::vector<double>(c.data(), c.data() + c.size());
    };

    FitReport rep;
    WhittleEval cur = problem.evaluate(coeffs_of(theta), true);
    double mu = 0.0;
    int it = 0;
    Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> solver;
    for (;;) {
        const Eigen::VectorXd g_theta = 2.0 * theta.cwiseProduct(cur.gradient);
        rep.grad_norm = g_theta.norm();
        rep.objective_trace.push_back(cur.value);
        if (rep.grad_norm < opts.grad_tol * std::max(1.0, std::abs(cur.value))) {
            rep.converged = true;
            rep.message = "gradient tolerance reached";
            break;
        }
        if (it >= opts.max_iter) {
            rep.message = "iteration cap reached";
            break;
        }
        Eigen::SparseMatrix<double> h_theta = theta.asDiagonal() * cur.hessian * theta.asDiagonal();
        h_theta *= 4.0;
        Eigen::SparseMatrix<double> diag(p, p);
        diag.reserve(Eigen::VectorXi::Constant(p, 1));
        for (int i = 0; i < p; ++i) diag.insert(i, i) = 2.0 * cur.gradient(i);
        h_theta += diag;
        double diag_scale = 1.0;
        for (int i = 0; i < p; ++i) diag_scale = std::max(diag_scale, std::abs(h_theta.coeff(i, i)));

        bool accepted = false;
        Eigen::VectorXd next;
        double next_value = 0.0;
        for (int attempt = 0; attempt < 80 && !accepted; ++attempt) {
            Eigen::SparseMatrix<double> a = h_theta;
            if (mu > 0.0) {
                Eigen::SparseMatrix<double> shift(p, p);
                shift.setIdentity();
                a += mu * shift;
            }
            solver.compute(a);
            bool ok = solver.info() == Eigen::Success;
            if (ok) {
                const Eigen::VectorXd step = solver.solve(-g_theta);
                ok = solver.info() == Eigen::Success && step.allFinite();
                if (ok) {
                    next = theta + step;
                    next_value = problem.evaluate(coeffs_of(next), false).value;
                    ok = std::isfinite(next_value) && next_value < cur.value;
                }
            }
            if (ok) {
                accepted = true;
            } else {
                mu = mu == 0.0 ? 1e-10 * diag_scale : mu * 10.0;
            }
        }
        if (!accepted) {
            rep.message = "no decrease along damped Newton steps";
            break;
        }
        theta = next;
        cur = problem.evaluate(coeffs_of(theta), true);
        ++it;
        mu = mu < 1e-12 * diag_scale ? 0.0 : mu / 10.0;
    }
    rep.coeffs = coeffs_of(theta);
    rep.objective = cur.value;
    rep.iterations = it;
    rep.floor_activations = cur.floor_activations;
    rep.hessian_bandwidth = hessian_bandwidth(cur.hessian);
    return rep;
}

WhittleFit fit_whittle(const Periodogram& pg, const KnotVector& kv, bool real_process, std::span<const double> init,
                       const WhittleOptions& opts) {
    const WhittleProblem problem({kv}, real_process, pg, opts);
    FitReport rep = fit_whittle(problem, init);
    SplinePsdModel model(kv, rep.coeffs, real_process);
    return {std::move(rep), std::move(model)};
}

TensorWhittleFit fit_whittle(const Periodogram& pg, const std::vector<KnotVector>& axes, bool real_process,
                             std::span<const double> init, const WhittleOptions& opts) {
    const WhittleProblem problem(axes, real_process, pg, opts);
    FitReport rep = fit_whittle(problem, init);
    TensorPsdModel model(axes, rep.coeffs, real_process);
    return {std::move(rep), std::move(model)};
}

// ---------------------------------------------------------------- Gaussian likelihood

namespace {

template <class Mat>
std::vector<double> jitter_ladder(const Mat& cov, const GaussianOptions& opts) {
    const double base = std::abs(cov.trace()) / static_cast<double>(cov.rows());
    std::vector<double> ladder{0.0};
    for (double j = opts.jitter_min_rel * base; j <= opts.jitter_max_rel * base * (1.0 + 1e-12) && j > 0.0; j *= 2.0)
        ladder.push_back(j);
    return ladder;
}

template <class Mat>
[[noreturn]] void factorisation_failure(const Mat& cov, double last_jitter) {
    std::ostringstream msg;
    msg << "covariance not positive definite after jitter " << last_jitter << " (n=" << cov.rows()
        << ", trace=" << std::abs(cov.trace()) << ", min diagonal=" << cov.diagonal().real().minCoeff() << ")";
    throw NumericalError(msg.str());
}

}  // namespace

double gaussian_nll_dense(const Eigen::MatrixXd& cov, std::span<const double> y, const GaussianOptions& opts) {
    const auto n = static_cast<Eigen::Index>(y.size());
    if (cov.rows() != n || cov.cols() != n) throw std::invalid_argument("gaussian_nll: dimension mismatch");
    if (n == 0) return 0.0;
    const Eigen::Map<const Eigen::VectorXd> yv(y.data(), n);
    double last = 0.0;
    for (double j : jitter_ladder(cov, opts)) {
        last = j;
        Eigen::MatrixXd a = cov;
        a.diagonal().array() += j;
        Eigen::LLT<Eigen::MatrixXd> llt(a);
        if (llt.info() != Eigen::Success) continue;
        const Eigen::VectorXd z = llt.matrixL().solve(yv);
        const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
        if (!std::isfinite(logdet)) continue;
        return 0.5 * (logdet + z.squaredNorm() + static_cast<double>(n) * kLog2Pi);
    }
    factorisation_failure(cov, last);
}

double gaussian_nll_dense(const Eigen::MatrixXcd& cov, std::span<const cplx> y, const GaussianOptions& opts) {
    const auto n = static_cast<Eigen::Index>(y.size());
    if (cov.rows() != n || cov.cols() != n) throw std::invalid_argument("gaussian_nll: dimension mismatch");
    if (n == 0) return 0.0;
    const Eigen::Map<const Eigen::VectorXcd> yv(y.data(), n);
    double last = 0.0;
    for (double j : jitter_ladder(cov, opts)) {
        last = j;
        Eigen::MatrixXcd a = cov;
        a.diagonal().array() += j;
        Eigen::LLT<Eigen::MatrixXcd> llt(a);
        if (llt.info() != Eigen::Success) continue;
        const Eigen::VectorXcd z = llt.matrixL().solve(yv);
        const double logdet = 2.0 * llt.matrixLLT().diagonal().real().array().log().sum();
        if (!std::isfinite(logdet)) continue;
        return logdet + z.squaredNorm() + static_cast<double>(n) * std::log(std::numbers::pi);
    }
    factorisation_failure(cov, last);
}

namespace {

// Whittle's multivariate Durbin-Levinson recursion. Forward predictors phi[j]
// and backward predictors psi[j] (j = 1..p) with error covariances v and u.
// The gradient uses the Gohberg-Semencul form of the inverse built from the
// order n-1 predictors, giving diagonal block sums in O(n^2 M^3).
template <int M>
bool levinson(const std::vector<Eigen::MatrixXd>& lags_in, const Eigen::MatrixXd& y, int m, double jitter,
              bool gradient, ToeplitzNll& out) {
    using Mat = Eigen::Matrix<double, M, M>;
    using Vec = Eigen::Matrix<double, M, 1>;
    const int n = static_cast<int>(lags_in.size());
    const auto nz = static_cast<std::size_t>(n);

    std::vector<Mat> lags(nz);
    for (int d = 0; d < n; ++d) lags[static_cast<std::size_t>(d)] = lags_in[static_cast<std::size_t>(d)];
    lags[0].diagonal().array() += jitter;
    std::vector<Vec> ys(nz);
    for (int t = 0; t < n; ++t) ys[static_cast<std::size_t>(t)] = y.row(t).transpose();

    const Mat eye = Mat::Identity(m, m);
    std::vector<Mat> phi(nz, Mat::Zero(m, m)), psi(nz, Mat::Zero(m, m));
    std::vector<Mat> phi_next(nz, Mat::Zero(m, m)), psi_next(nz, Mat::Zero(m, m));
    Mat v = lags[0];
    Mat u = lags[0];
    Eigen::LLT<Mat> v_llt(v);
    Eigen::LLT<Mat> u_llt(u);
    if (v_llt.info() != Eigen::Success) return false;

    auto innovation_term = [&](const Vec& e, const Eigen::LLT<Mat>& llt) {
        const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
        return 0.5 * (logdet + e.dot(llt.solve(e)));
    };

    double value = innovation_term(ys[0], v_llt);
    for (int p = 0; p + 1 < n; ++p) {
        Mat delta = lags[static_cast<std::size_t>(p + 1)];
        for (int j = 1; j <= p; ++j) delta -= phi[static_cast<std::size_t>(j)] * lags[static_cast<std::size_t>(p + 1 - j)];
        const Mat kf = u_llt.solve(delta.transpose()).transpose();
        const Mat kb = v_llt.solve(delta).transpose();
        for (int j = 1; j <= p; ++j) {
            phi_next[static_cast<std::size_t>(j)] =
                phi[static_cast<std::size_t>(j)] - kf * psi[static_cast<std::size_t>(p + 1 - j)];
            psi_next[static_cast<std::size_t>(j)] =
                psi[static_cast<std::size_t>(j)] - kb * phi[static_cast<std::size_t>(p + 1 - j)];
        }
        phi_next[static_cast<std::size_t>(p + 1)] = kf;
        psi_next[static_cast<std::size_t>(p + 1)] = kb;
        std::swap(phi, phi_next);
        std::swap(psi, psi_next);
        v -= kf * delta.transpose();
        u -= kb * delta;
        v = (0.5 * (v + v.transpose())).eval();
        u = (0.5 * (u + u.transpose())).eval();
        v_llt.compute(v);
        u_llt.compute(u);
        if (v_llt.info() != Eigen::Success || u_llt.info() != Eigen::Success) return false;

        const int t = p + 1;
        Vec e = ys[static_cast<std::size_t>(t)];
        for (int j = 1; j <= t; ++j) e -= phi[static_cast<std::size_t>(j)] * ys[static_cast<std::size_t>(t - j)];
        value += innovation_term(e, v_llt);
    }
    value += 0.5 * static_cast<double>(n) * static_cast<double>(m) * kLog2Pi;
    if (!std::isfinite(value)) return false;
    out.value = value;
    out.jitter = jitter;
    out.lag_gradient.clear();
    if (!gradient) return true;

    // Inverse = L(b^T U^-1) U^-1-weighted terms minus the shifted forward terms:
    // X_{i+d,i} summed over i equals
    //   sum_p (n-d-p) b_{p+d}^T U^-1 b_p - sum_{p>=1} (n-d-p) a_{p+d-1}^T V^-1 a_{p-1},
    // with b_0 = I, b_p = -psi_p and a_j = -phi_{n-1-j}, a_{n-1} = I.
    std::vector<Mat> b(nz), a(nz), ub(nz), va(nz);
    b[0] = eye;
    for (int q = 1; q < n; ++q) b[static_cast<std::size_t>(q)] = -psi[static_cast<std::size_t>(q)];
    for (int j = 0; j + 1 < n; ++j) a[static_cast<std::size_t>(j)] = -phi[static_cast<std::size_t>(n - 1 - j)];
    a[nz - 1] = eye;
    for (std::size_t q = 0; q < nz; ++q) {
        ub[q] = u_llt.solve(b[q]);
        va[q] = v_llt.solve(a[q]);
    }

    // alpha = X y
    std::vector<Vec> alpha(nz, Vec::Zero(m));
    {
        std::vector<Vec> uu(nz), vs(nz);
        for (int i = 0; i < n; ++i) {
            Vec acc = Vec::Zero(m);
            for (int q = 0; q < n - i; ++q) acc += b[static_cast<std::size_t>(q)] * ys[static_cast<std::size_t>(i + q)];
            uu[static_cast<std::size_t>(i)] = u_llt.solve(acc);
            Vec acc2 = Vec::Zero(m);
            for (int q = 1; q < n - i; ++q)
                acc2 += a[static_cast<std::size_t>(q - 1)] * ys[static_cast<std::size_t>(i + q)];
            vs[static_cast<std::size_t>(i)] = v_llt.solve(acc2);
        }
        for (int i = 0; i < n; ++i) {
            Vec acc = Vec::Zero(m);
            for (int j = 0; j <= i; ++j)
                acc += b[static_cast<std::size_t>(i - j)].transpose() * uu[static_cast<std::size_t>(j)];
            for (int j = 0; j < i; ++j)
                acc -= a[static_cast<std::size_t>(i - j - 1)].transpose() * vs[static_cast<std::size_t>(j)];
            alpha[static_cast<std::size_t>(i)] = acc;
        }
    }

    out.lag_gradient.assign(nz, Eigen::MatrixXd::Zero(m, m));
    for (int d = 0; d < n; ++d) {
        Mat s = Mat::Zero(m, m);
        for (int p = 0; p <= n - 1 - d; ++p)
            s += static_cast<double>(n - d - p) *
                 (b[static_cast<std::size_t>(p + d)].transpose() * ub[static_cast<std::size_t>(p)]);
        for (int p = 1; p <= n - 1 - d; ++p)
            s -= static_cast<double>(n - d - p) *
                 (a[static_cast<std::size_t>(p + d - 1)].transpose() * va[static_cast<std::size_t>(p - 1)]);
        for (int i = 0; i + d < n; ++i)
            s -= alpha[static_cast<std::size_t>(i + d)] * alpha[static_cast<std::size_t>(i)].transpose();
        if (d == 0) s *= 0.5;
        out.lag_gradient[static_cast<std::size_t>(d)] = s;
    }
    return true;
}

}  // namespace

ToeplitzNll block_toeplitz_nll(const std::vector<Eigen::MatrixXd>& lags, const Eigen::MatrixXd& y, bool gradient,
                               const GaussianOptions& opts) {
    const auto n = static_cast<Eigen::Index>(lags.size());
    if (n == 0 || y.rows() != n) throw std::invalid_argument("block_toeplitz_nll: need one lag per time point");
    const int m = static_cast<int>(y.cols());
    if (m < 1) throw std::invalid_argument("block_toeplitz_nll: no components");
    for (const auto& g : lags)
        if (g.rows() != m || g.cols() != m || !g.allFinite())
            throw std::invalid_argument("block_toeplitz_nll: lag blocks must be finite M x M");
    if (!y.allFinite()) throw std::invalid_argument("block_toeplitz_nll: non-finite data");

    ToeplitzNll out;
    double last = 0.0;
    for (double j : jitter_ladder(lags[0], opts)) {
        last = j;
        bool ok = false;
        if (m == 1)
            ok = levinson<1>(lags, y, m, j, gradient, out);
        else if (m == 2)
            ok = levinson<2>(lags, y, m, j, gradient, out);
        else
            ok = levinson<Eigen::Dynamic>(lags, y, m, j, gradient, out);
        if (ok) return out;
    }
    std::ostringstream msg;
    msg << "block Toeplitz covariance not positive definite after jitter " << last << " (n=" << n << ", M=" << m
        << ", trace(Gamma(0))=" << lags[0].trace() << ")";
    throw NumericalError(msg.str());
}

ToeplitzNll toeplitz_nll(std::span<const double> lags, std::span<const double> y, bool gradient,
                         const GaussianOptions& opts) {
    if (lags.size() != y.size()) throw std::invalid_argument("toeplitz_nll: need one lag per time point");
    std::vector<Eigen::MatrixXd> blocks(lags.size(), Eigen::MatrixXd(1, 1));
    for (std::size_t d = 0; d < lags.size(); ++d) blocks[d](0, 0) = lags[d];
    const Eigen::Map<const Eigen::MatrixXd> ym(y.data(), static_cast<Eigen::Index>(y.size()), 1);
    return block_toeplitz_nll(blocks, ym, gradient, opts);
}

namespace {

std::optional<double> regular_step(std::span<const double> times) {
    if (times.size() < 2) return times.empty() ? std::nullopt : std::optional<double>(1.0);
    const double h = times[1] - times[0];
    if (h == 0.0) return std::nullopt;
    for (std::size_t a = 1; a < times.size(); ++a)
        if (std::abs((times[a] - times[a - 1]) - h) > 1e-9 * std::abs(h)) return std::nullopt;
    return h;
}

}  // namespace

double gaussian_nll(const SplinePsdModel& m, std::span<const double> y, std::span<const double> times,
                    const GaussianOptions& opts) {
    if (!m.real_process()) throw std::invalid_argument("gaussian_nll: real data needs a real-process model");
    if (y.size() != times.size()) throw std::invalid_argument("gaussian_nll: series and times differ in length");
    require_finite(y, "gaussian_nll");
    if (const auto h = regular_step(times)) {
        std::vector<double> lags(y.size());
        for (std::size_t d = 0; d < lags.size(); ++d) lags[d] = m.acf(static_cast<double>(d) * *h).real();
        return toeplitz_nll(lags, y, false, opts).value;
    }
    return gaussian_nll_dense(covariance_matrix(m, times), y, opts);
}

double gaussian_nll(const SplinePsdModel& m, std::span<const cplx> y, std::span<const double> times,
                    const GaussianOptions& opts) {
    if (y.size() != times.size()) throw std::invalid_argument("gaussian_nll: series and times differ in length");
    return gaussian_nll_dense(covariance_matrix_complex(m, times), y, opts);
}

double gaussian_nll(const MatrixSplinePsdModel& m, const Eigen::MatrixXd& y, std::span<const double> times,
                    const GaussianOptions& opts) {
    if (!m.real_process()) throw std::invalid_argument("gaussian_nll: real data needs a real-process model");
    if (y.cols() != m.dim()) throw std::invalid_argument("gaussian_nll: component count differs from model");
    if (static_cast<std::size_t>(y.rows()) != times.size())
        throw std::invalid_argument("gaussian_nll: series and times differ in length");
    if (const auto h = regular_step(times)) {
        std::vector<Eigen::MatrixXd> lags(times.size());
        for (std::size_t d = 0; d < lags.size(); ++d) lags[d] = m.acf(static_cast<double>(d) * *h).real();
        return block_toeplitz_nll(lags, y, false, opts).value;
    }
    const Eigen::MatrixXd yt = y.transpose();  // time-major stacking
    return gaussian_nll_dense(covariance_matrix(m, times), std::span<const double>(yt.data(), yt.size()), opts);
}

double gaussian_nll(const TensorPsdModel& m, std::span<const double> y, const Eigen::MatrixXd& points,
                    const GaussianOptions& opts) {
    if (!m.real_process()) throw std::invalid_argument("gaussian_nll: real data needs a real-process model");
    if (static_cast<Eigen::Index>(y.size()) != points.rows())
        throw std::invalid_argument("gaussian_nll: series and points differ in length");
    return gaussian_nll_dense(covariance_matrix(m, points), y, opts);
}

// ---------------------------------------------------------------- quasi-Newton

Eigen::VectorXd numerical_gradient(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                                   double h) {
    Eigen::VectorXd g(x.size());
    Eigen::VectorXd xp = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double step = h * std::max(1.0, std::abs(x(i)));
        xp(i) = x(i) + step;
        const double fp = f(xp);
        xp(i) = x(i) - step;
        const double fm = f(xp);
        xp(i) = x(i);
        g(i) = (fp - fm) / (2.0 * step);
    }
    return g;
}

BfgsResult minimize_bfgs(const Objective& f, Eigen::VectorXd x0, const BfgsOptions& opts) {
    const auto n = x0.size();
    BfgsResult res;
    Eigen::VectorXd x = std::move(x0);
    Eigen::VectorXd g(n);
    double fx = f(x, &g);
    if (!std::isfinite(fx) || !g.allFinite()) throw NumericalError("minimize_bfgs: non-finite objective at start");
    Eigen::MatrixXd hinv = Eigen::MatrixXd::Identity(n, n);
    bool scaled = false;
    res.trace.push_back(fx);

    auto safe_eval = [&](const Eigen::VectorXd& at, Eigen::VectorXd* grad) {
        try {
            const double v = f(at, grad);
            if (!std::isfinite(v) || (grad && !grad->allFinite())) return std::numeric_limits<double>::infinity();
            return v;
        } catch (const NumericalError&) {
            return std::numeric_limits<double>::infinity();
        }
    };

    int it = 0;
    for (;;) {
        res.grad_norm = g.norm();
        if (res.grad_norm < opts.grad_tol * std::max(1.0, std::abs(fx))) {
            res.converged = true;
            res.message = "gradient tolerance reached";
            break;
        }
        if (it >= opts.max_iter) {
            res.message = "iteration cap reached";
            break;
        }
        Eigen::VectorXd dir = -hinv * g;
        double slope = g.dot(dir);
        if (!(slope < 0.0)) {
            hinv.setIdentity();
            scaled = false;
            dir = -g;
            slope = -g.squaredNorm();
        }
        double step = 1.0;
        bool accepted = false;
        Eigen::VectorXd xn;
        Eigen::VectorXd gn(n);
        double fn = 0.0;
        bool have_grad = false;
        for (int bt = 0; bt < opts.max_backtracks; ++bt) {
            xn = x + step * dir;
            fn = bt == 0 ? safe_eval(xn, &gn) : safe_eval(xn, nullptr);
            if (fn <= fx + opts.armijo * step * slope) {
                accepted = true;
                have_grad = bt == 0;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            res.message = "line search failed";
            break;
        }
        if (!have_grad) {
            fn = safe_eval(xn, &gn);
            if (!std::isfinite(fn)) {
                res.message = "non-finite gradient at accepted point";
                break;
            }
        }
        const Eigen::VectorXd s = xn - x;
        const Eigen::VectorXd yk = gn - g;
        const double sy = s.dot(yk);
        if (sy > 1e-12 * s.norm() * yk.norm()) {
            if (!scaled) {
                hinv = Eigen::MatrixXd::Identity(n, n) * (sy / yk.squaredNorm());
                scaled = true;
            }
            const double rho = 1.0 / sy;
            const Eigen::VectorXd hy = hinv * yk;
            // (I - rho s y^T) H (I - rho y s^T) + rho s s^T, expanded
            hinv += rho * ((1.0 + rho * yk.dot(hy)) * (s * s.transpose()) - hy * s.transpose() - s * hy.transpose());
        }
        x = xn;
        fx = fn;
        g = gn;
        res.trace.push_back(fx);
        ++it;
    }
    res.x = x;
    res.value = fx;
    res.iterations = it;
    return res;
}

// ---------------------------------------------------------------- Gaussian ML fits

namespace {

// Column i holds Re rho_i(d * delta), d = 0..n-1.
Eigen::MatrixXd lag_basis(const AcfBasis& basis, int n, double delta) {
    Eigen::MatrixXd r(n, basis.num_basis());
    for (int d = 0; d < n; ++d)
        for (int i = 0; i < basis.num_basis(); ++i) r(d, i) = basis.rho(i, static_cast<double>(d) * delta).real();
    return r;
}

std::vector<double> whittle_start(std::span<const double> y, double delta, const KnotVector& kv, double floor_rel) {
    const Periodogram pg = periodogram(y, delta, false);
    WhittleOptions wopts;
    wopts.max_iter = 100;
    const WhittleFit wf = fit_whittle(pg, kv, true, {}, wopts);
    std::vector<double> c = wf.report.coeffs;
    double cmax = 0.0;
    for (double v : c) cmax = std::max(cmax, v);
    const double lo = cmax > 0.0 ? floor_rel * cmax : 1.0;
    for (double& v : c) v = std::max(v, lo);
    return c;
}

void fill_report(FitReport& rep, const BfgsResult& r) {
    rep.objective = r.value;
    rep.grad_norm = r.grad_norm;
    rep.iterations = r.iterations;
    rep.converged = r.converged;
    rep.message = r.message;
    rep.objective_trace = r.trace;
}

}  // namespace

MleFit fit_mle_gaussian(std::span<const double> y, double delta, const KnotVector& kv, std::span<const double> init,
                        const MleOptions& opts) {
    const int n = static_cast<int>(y.size());
    if (n < 2) throw std::invalid_argument("fit_mle_gaussian: need at least 2 samples");
    if (!(delta > 0.0)) throw std::invalid_argument("fit_mle_gaussian: spacing must be positive");
    require_finite(y, "fit_mle_gaussian");
    std::vector<double> yv(y.begin(), y.end());
    if (opts.demean) {
        double mean = 0.0;
        for (double v : yv) mean += v;
        mean /= n;
        for (double& v : yv) v -= mean;
    }
    const AcfBasis basis(kv);
    const int p = basis.num_basis();
    std::vector<double> c0;
    if (init.empty()) {
        c0 = whittle_start(yv, delta, kv, opts.init_floor_rel);
    } else {
        if (static_cast<int>(init.size()) != p) throw std::invalid_argument("fit_mle_gaussian: init size mismatch");
        c0.assign(init.begin(), init.end());
        for (double v : c0)
            if (!(v >= 0.0) || !std::isfinite(v))
                throw std::invalid_argument("fit_mle_gaussian: init must be finite and nonnegative");
    }
    const Eigen::MatrixXd r = lag_basis(basis, n, delta);

    auto value_and_grad = [&](const Eigen::VectorXd& theta, Eigen::VectorXd* grad, bool analytic) {
        const Eigen::VectorXd c = theta.cwiseProduct(theta);
        const Eigen::VectorXd lags = r * c;
        const ToeplitzNll res =
            toeplitz_nll(std::span<const double>(lags.data(), lags.size()), yv, grad && analytic, opts.gaussian);
        if (grad && analytic) {
            Eigen::VectorXd g(n);
            for (int d = 0; d < n; ++d) g(d) = res.lag_gradient[static_cast<std::size_t>(d)](0, 0);
            *grad = 2.0 * theta.cwiseProduct(r.transpose() * g);
        }
        return res.value;
    };
    const Objective objective = [&](const Eigen::VectorXd& theta, Eigen::VectorXd* grad) {
        if (!grad || opts.analytic_gradient) return value_and_grad(theta, grad, true);
        const double v = value_and_grad(theta, nullptr, false);
        *grad = numerical_gradient([&](const Eigen::VectorXd& t) { return value_and_grad(t, nullptr, false); },
                                   theta, opts.fd_step);
        return v;
    };

    Eigen::VectorXd theta0(p);
    for (int i = 0; i < p; ++i) theta0(i) = std::sqrt(c0[static_cast<std::size_t>(i)]);
    const BfgsResult br = minimize_bfgs(objective, theta0, opts.bfgs);
    FitReport rep;
    fill_report(rep, br);
    const Eigen::VectorXd c = br.x.cwiseProduct(br.x);
    rep.coeffs.assign(c.data(), c.data() + c.size());
    SplinePsdModel model(basis, rep.coeffs, true);
    return {std::move(rep), std::move(model)};
}

MatrixMleFit fit_mle_gaussian(const Eigen::MatrixXd& y, double delta, const KnotVector& kv,
                              const std::vector<Eigen::MatrixXd>& init, const MleOptions& opts) {
    const int n = static_cast<int>(y.rows());
    const int m = static_cast<int>(y.cols());
    if (n < 2 || m < 1) throw std::invalid_argument("fit_mle_gaussian: need at least 2 samples and 1 component");
    if (!(delta > 0.0)) throw std::invalid_argument("fit_mle_gaussian: spacing must be positive");
    if (!y.allFinite()) throw std::invalid_argument("fit_mle_gaussian: non-finite data");
    Eigen::MatrixXd yv = y;
    if (opts.demean) yv.rowwise() -= yv.colwise().mean();

    const AcfBasis basis(kv);
    const int p = basis.num_basis();
    const int per = m * (m + 1) / 2;

    std::vector<Eigen::MatrixXd> factors(static_cast<std::size_t>(p), Eigen::MatrixXd::Zero(m, m));
    if (init.empty()) {
        for (int r = 0; r < m; ++r) {
            const Eigen::VectorXd col = yv.col(r);
            const auto c = whittle_start(std::span<const double>(col.data(), col.size()), delta, kv,
                                         opts.init_floor_rel);
            for (int i = 0; i < p; ++i) factors[static_cast<std::size_t>(i)](r, r) = std::sqrt(c[static_cast<std::size_t>(i)]);
        }
    } else {
        if (static_cast<int>(init.size()) != p) throw std::invalid_argument("fit_mle_gaussian: init size mismatch");
        for (int i = 0; i < p; ++i) {
            const Eigen::MatrixXd& ci = init[static_cast<std::size_t>(i)];
            if (ci.rows() != m || ci.cols() != m || !ci.allFinite())
                throw std::invalid_argument("fit_mle_gaussian: init blocks must be finite M x M");
            Eigen::MatrixXd a = 0.5 * (ci + ci.transpose());
            a.diagonal().array() += 1e-12 * std::max(1.0, std::abs(a.trace()));
            Eigen::LLT<Eigen::MatrixXd> llt(a);
            if (llt.info() != Eigen::Success)
                throw std::invalid_argument("fit_mle_gaussian: init blocks must be positive semi-definite");
            factors[static_cast<std::size_t>(i)] = llt.matrixL();
        }
    }

    auto pack = [&](const std::vector<Eigen::MatrixXd>& ls) {
        Eigen::VectorXd x(p * per);
        int k = 0;
        for (int i = 0; i < p; ++i)
            for (int r = 0; r < m; ++r)
                for (int s = 0; s <= r; ++s) x(k++) = ls[static_cast<std::size_t>(i)](r, s);
        return x;
    };
    auto unpack = [&](const Eigen::VectorXd& x) {
        std::vector<Eigen::MatrixXd> ls(static_cast<std::size_t>(p), Eigen::MatrixXd::Zero(m, m));
        int k = 0;
        for (int i = 0; i < p; ++i)
            for (int r = 0; r < m; ++r)
                for (int s = 0; s <= r; ++s) ls[static_cast<std::size_t>(i)](r, s) = x(k++);
        return ls;
    };

    const Eigen::MatrixXd rl = lag_basis(basis, n, delta);
    auto value_and_grad = [&](const Eigen::VectorXd& x, Eigen::VectorXd* grad) {
        const auto ls = unpack(x);
        std::vector<Eigen::MatrixXd> cs(static_cast<std::size_t>(p));
        for (int i = 0; i < p; ++i)
            cs[static_cast<std::size_t>(i)] = ls[static_cast<std::size_t>(i)] * ls[static_cast<std::size_t>(i)].transpose();
        std::vector<Eigen::MatrixXd> lags(static_cast<std::size_t>(n), Eigen::MatrixXd::Zero(m, m));
        for (int d = 0; d < n; ++d)
            for (int i = 0; i < p; ++i) lags[static_cast<std::size_t>(d)] += rl(d, i) * cs[static_cast<std::size_t>(i)];
        const ToeplitzNll res = block_toeplitz_nll(lags, yv, grad != nullptr, opts.gaussian);
        if (grad) {
            grad->resize(x.size());
            int k = 0;
            for (int i = 0; i < p; ++i) {
                Eigen::MatrixXd gi = Eigen::MatrixXd::Zero(m, m);
                for (int d = 0; d < n; ++d) gi += rl(d, i) * res.lag_gradient[static_cast<std::size_t>(d)];
                const Eigen::MatrixXd gl = (gi + gi.transpose()) * ls[static_cast<std::size_t>(i)];
                for (int r = 0; r < m; ++r)
                    for (int s = 0; s <= r; ++s) (*grad)(k++) = gl(r, s);
            }
        }
        return res.value;
    };
    const Objective objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd* grad) {
        if (!grad || opts.analytic_gradient) return value_and_grad(x, grad);
        const double v = value_and_grad(x, nullptr);
        *grad = numerical_gradient([&](const Eigen::VectorXd& t) { return value_and_grad(t, nullptr); }, x,
                                   opts.fd_step);
        return v;
    };

    const BfgsResult br = minimize_bfgs(objective, pack(factors), opts.bfgs);
    FitReport rep;
    fill_report(rep, br);
    const auto ls = unpack(br.x);
    std::vector<Eigen::MatrixXcd> cs;
    for (const auto& l : ls) {
        const Eigen::MatrixXd c = l * l.transpose();
        cs.emplace_back(c.cast<cplx>());
        for (int r = 0; r < m; ++r)
            for (int s = 0; s < m; ++s) rep.coeffs.push_back(c(r, s));
    }
    MatrixSplinePsdModel model(kv, std::move(cs), true);
    return {std::move(rep), std::move(model)};
}

}  // namespace splinekernel
