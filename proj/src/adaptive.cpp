#include "splinekernel/adaptive.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>

#include <Eigen/SVD>

namespace splinekernel {

// ------------------------------------------------------------ product basis

ProductSplineBasis::ProductSplineBasis(int dim) : dim_(dim) {
    if (dim < 1) throw std::invalid_argument("ProductSplineBasis: dimension must be positive");
}

void ProductSplineBasis::add(const std::vector<std::vector<double>>& windows, std::span<const int> degrees) {
    if (windows.size() != static_cast<std::size_t>(dim_) || degrees.size() != windows.size())
        throw std::invalid_argument("ProductSplineBasis::add: expected one window and degree per axis");
    std::vector<AcfBasis> axes;
    for (std::size_t j = 0; j < windows.size(); ++j) {
        if (windows[j].size() != static_cast<std::size_t>(degrees[j] + 2))
            throw std::invalid_argument("ProductSplineBasis::add: a window needs degree + 2 knots");
        axes.emplace_back(KnotVector(windows[j], degrees[j]));
    }
    functions_.push_back(std::move(axes));
}

double ProductSplineBasis::eval(int f, std::span<const double> omega) const {
    double v = 1.0;
    const auto& ax = axes(f);
    for (int j = 0; j < dim_ && v != 0.0; ++j)
        v *= bspline_eval(ax[static_cast<std::size_t>(j)].knots(), 0, omega[static_cast<std::size_t>(j)]);
    return v;
}

cplx ProductSplineBasis::rho(int f, std::span<const double> tau) const {
    cplx v = 1.0;
    const auto& ax = axes(f);
    for (int j = 0; j < dim_; ++j) v *= ax[static_cast<std::size_t>(j)].rho(0, tau[static_cast<std::size_t>(j)]);
    return v;
}

double ProductSplineBasis::mass(int f) const {
    double v = 1.0;
    for (const auto& ab : axes(f)) v *= ab.mass(0);
    return v;
}

std::vector<std::pair<double, double>> ProductSplineBasis::support(int f) const {
    std::vector<std::pair<double, double>> out;
    for (const auto& ab : axes(f)) out.emplace_back(ab.knots().front(), ab.knots().back());
    return out;
}

Eigen::MatrixXd ProductSplineBasis::design_matrix(const Eigen::MatrixXd& points) const {
    if (points.cols() != dim_) throw std::invalid_argument("design_matrix: point dimension mismatch");
    Eigen::MatrixXd X(points.rows(), size());
    std::vector<double> w(static_cast<std::size_t>(dim_));
    for (Eigen::Index r = 0; r < points.rows(); ++r) {
        for (int j = 0; j < dim_; ++j) w[static_cast<std::size_t>(j)] = points(r, j);
        for (int f = 0; f < size(); ++f) X(r, f) = eval(f, w);
    }
    return X;
}

ProductPsdModel::ProductPsdModel(ProductSplineBasis basis, std::vector<double> coeffs, bool real_process)
    : basis_(std::move(basis)), coeffs_(std::move(coeffs)), real_(real_process) {
    if (coeffs_.size() != static_cast<std::size_t>(basis_.size()))
        throw std::invalid_argument("ProductPsdModel: expected " + std::to_string(basis_.size()) +
                                    " coefficients, got " + std::to_string(coeffs_.size()));
    for (double c : coeffs_)
        if (!std::isfinite(c) || c < 0.0)
            throw std::invalid_argument("ProductPsdModel: coefficients must be finite and nonnegative");
}

double ProductPsdModel::one_sided(std::span<const double> omega) const {
    double s = 0.0;
    for (int f = 0; f < basis_.size(); ++f)
        if (coeffs_[static_cast<std::size_t>(f)] != 0.0) s += coeffs_[static_cast<std::size_t>(f)] * basis_.eval(f, omega);
    return s;
}

double ProductPsdModel::psd(std::span<const double> omega) const {
    if (omega.size() != static_cast<std::size_t>(basis_.dim()))
        throw std::invalid_argument("ProductPsdModel::psd: dimension mismatch");
    if (!real_) return one_sided(omega);
    std::vector<double> neg(omega.begin(), omega.end());
    for (double& x : neg) x = -x;
    return 0.5 * (one_sided(omega) + one_sided(neg));
}

cplx ProductPsdModel::acf(std::span<const double> tau) const {
    if (tau.size() != static_cast<std::size_t>(basis_.dim()))
        throw std::invalid_argument("ProductPsdModel::acf: dimension mismatch");
    cplx s = 0.0;
    for (int f = 0; f < basis_.size(); ++f)
        if (coeffs_[static_cast<std::size_t>(f)] != 0.0) s += coeffs_[static_cast<std::size_t>(f)] * basis_.rho(f, tau);
    return real_ ? cplx(s.real(), 0.0) : s;
}

double ProductPsdModel::variance() const {
    double s = 0.0;
    for (int f = 0; f < basis_.size(); ++f) s += coeffs_[static_cast<std::size_t>(f)] * basis_.mass(f);
    return s;
}

// ------------------------------------------------------------- hierarchical

bool Box::contains(std::span<const double> point) const {
    for (std::size_t j = 0; j < bounds.size(); ++j)
        if (point[j] < bounds[j].first || point[j] > bounds[j].second) return false;
    return true;
}

bool Box::contains(const Box& other) const {
    for (std::size_t j = 0; j < bounds.size(); ++j)
        if (other.bounds[j].first < bounds[j].first || other.bounds[j].second > bounds[j].second) return false;
    return true;
}

namespace {

// Exact test of target ⊆ union(boxes): split the target at every box face and
// check the centre of each elementary cell.
bool union_contains(const std::vector<Box>& boxes, const Box& target) {
    if (boxes.empty()) return false;
    const std::size_t D = target.bounds.size();
    std::vector<std::vector<double>> cuts(D);
    for (std::size_t j = 0; j < D; ++j) {
        const auto [lo, hi] = target.bounds[j];
        cuts[j] = {lo, hi};
        for (const auto& b : boxes)
            for (double x : {b.bounds[j].first, b.bounds[j].second})
                if (x > lo && x < hi) cuts[j].push_back(x);
        std::sort(cuts[j].begin(), cuts[j].end());
        cuts[j].erase(std::unique(cuts[j].begin(), cuts[j].end()), cuts[j].end());
    }
    std::vector<std::size_t> idx(D, 0);
    std::vector<double> centre(D);
    while (true) {
        for (std::size_t j = 0; j < D; ++j) centre[j] = 0.5 * (cuts[j][idx[j]] + cuts[j][idx[j] + 1]);
        if (std::none_of(boxes.begin(), boxes.end(), [&](const Box& b) { return b.contains(centre); })) return false;
        std::size_t j = 0;
        while (j < D && ++idx[j] + 1 == cuts[j].size()) idx[j++] = 0;
        if (j == D) return true;
    }
}

KnotVector refine_dyadic(const KnotVector& kv) {
    std::vector<double> t;
    for (std::size_t j = 0; j + 1 < kv.size(); ++j) {
        t.push_back(kv[j]);
        t.push_back(0.5 * (kv[j] + kv[j + 1]));
    }
    t.push_back(kv.back());
    return KnotVector(std::move(t), kv.degree());
}

Box support_box(const std::vector<KnotVector>& axes, const std::vector<int>& index) {
    Box b;
    for (std::size_t j = 0; j < axes.size(); ++j) b.bounds.emplace_back(axes[j].support_lo(index[j]), axes[j].support_hi(index[j]));
    return b;
}

void for_each_index(const std::vector<int>& shape, const std::function<void(const std::vector<int>&)>& fn) {
    std::vector<int> idx(shape.size(), 0);
    for (int s : shape)
        if (s <= 0) return;
    while (true) {
        fn(idx);
        int j = static_cast<int>(shape.size()) - 1;
        while (j >= 0 && ++idx[static_cast<std::size_t>(j)] == shape[static_cast<std::size_t>(j)]) idx[static_cast<std::size_t>(j--)] = 0;
        if (j < 0) return;
    }
}

}  // namespace

int HierarchicalBasis::num_active() const {
    int n = 0;
    for (const auto& a : active_) n += static_cast<int>(a.size());
    return n;
}

HierarchicalBasis build_hierarchical(std::vector<KnotVector> base, std::vector<RefinementRegion> regions) {
    if (base.empty()) throw std::invalid_argument("build_hierarchical: at least one axis is required");
    const std::size_t D = base.size();
    int L = 0;
    for (const auto& r : regions) {
        if (r.level < 1) throw std::invalid_argument("build_hierarchical: region levels start at 1");
        if (r.box.bounds.size() != D) throw std::invalid_argument("build_hierarchical: region dimension mismatch");
        for (const auto& [lo, hi] : r.box.bounds)
            if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi))
                throw std::invalid_argument("build_hierarchical: region boxes need lo < hi");
        L = std::max(L, r.level);
    }
    // Omega_l for l = 1..L; Omega_0 is the whole domain.
    std::vector<std::vector<Box>> omega(static_cast<std::size_t>(L + 2));
    for (const auto& r : regions) omega[static_cast<std::size_t>(r.level)].push_back(r.box);
    Box domain;
    for (const auto& kv : base) domain.bounds.emplace_back(kv.front(), kv.back());
    for (const auto& b : omega.size() > 1 ? omega[1] : std::vector<Box>{})
        if (!domain.contains(b)) throw std::invalid_argument("build_hierarchical: level-1 region leaves the knot span");
    for (int l = 2; l <= L; ++l)
        for (const auto& b : omega[static_cast<std::size_t>(l)])
            if (!union_contains(omega[static_cast<std::size_t>(l - 1)], b))
                throw std::invalid_argument("build_hierarchical: level-" + std::to_string(l) +
                                            " region is not nested in the level-" + std::to_string(l - 1) + " regions");

    HierarchicalBasis hb;
    hb.regions_ = std::move(regions);
    hb.levels_.push_back(std::move(base));
    for (int l = 1; l <= L; ++l) {
        std::vector<KnotVector> next;
        for (const auto& kv : hb.levels_.back()) next.push_back(refine_dyadic(kv));
        hb.levels_.push_back(std::move(next));
    }
    hb.functions_ = ProductSplineBasis(static_cast<int>(D));
    for (int l = 0; l <= L; ++l) {
        const auto& axes = hb.levels_[static_cast<std::size_t>(l)];
        std::vector<int> shape, degrees;
        for (const auto& kv : axes) {
            shape.push_back(kv.num_basis());
            degrees.push_back(kv.degree());
        }
        std::vector<std::vector<int>> act;
        for_each_index(shape, [&](const std::vector<int>& idx) {
            const Box s = support_box(axes, idx);
            const bool inside = l == 0 || union_contains(omega[static_cast<std::size_t>(l)], s);
            const bool finer = l < L && union_contains(omega[static_cast<std::size_t>(l + 1)], s);
            if (!inside || finer) return;
            act.push_back(idx);
            std::vector<std::vector<double>> windows;
            for (std::size_t j = 0; j < D; ++j) {
                const auto& t = axes[j].knots();
                windows.emplace_back(t.begin() + idx[j], t.begin() + idx[j] + axes[j].degree() + 2);
            }
            hb.functions_.add(windows, degrees);
        });
        hb.active_.push_back(std::move(act));
    }
    return hb;
}

cplx hierarchical_acf_eval(const HierarchicalBasis& hb, std::span<const double> coeffs, std::span<const double> tau,
                           bool real_process) {
    const ProductPsdModel m(hb.functions(), std::vector<double>(coeffs.begin(), coeffs.end()), real_process);
    return m.acf(tau);
}

double hierarchical_psd_eval(const HierarchicalBasis& hb, std::span<const double> coeffs,
                             std::span<const double> omega, bool real_process) {
    const ProductPsdModel m(hb.functions(), std::vector<double>(coeffs.begin(), coeffs.end()), real_process);
    return m.psd(omega);
}

// ------------------------------------------------------------------ T-mesh

namespace {

void check_segments(std::vector<MeshSegment>& segs, const char* which) {
    for (const auto& s : segs)
        if (!std::isfinite(s.at) || !std::isfinite(s.from) || !std::isfinite(s.to) || !(s.from < s.to))
            throw std::invalid_argument(std::string("TMesh: invalid ") + which + " segment");
    std::sort(segs.begin(), segs.end(), [](const MeshSegment& a, const MeshSegment& b) {
        return a.at != b.at ? a.at < b.at : a.from < b.from;
    });
    for (std::size_t j = 1; j < segs.size(); ++j)
        if (segs[j].at == segs[j - 1].at && segs[j].from < segs[j - 1].to)
            throw std::invalid_argument(std::string("TMesh: overlapping ") + which + " segments");
}

std::vector<double> crossing(const std::vector<MeshSegment>& segs, double pos) {
    std::vector<double> out;
    for (const auto& s : segs)
        if (s.from <= pos && pos <= s.to) out.push_back(s.at);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::vector<double> window(const std::vector<double>& lines, double at, int k, const char* axis) {
    if (lines.size() < 2)
        throw std::invalid_argument(std::string("tmesh_local_knot_vectors: fewer than two mesh lines along ") + axis);
    const auto it = std::find(lines.begin(), lines.end(), at);
    if (it == lines.end())
        throw std::invalid_argument(std::string("tmesh_local_knot_vectors: anchor is not on a mesh line along ") + axis);
    const int before = (k + 1) / 2, after = k / 2 + 1;
    const auto ext = extend_by_reflection(lines, k + 1);
    const auto centre = static_cast<int>(it - lines.begin()) + k + 1;
    return {ext.begin() + (centre - before), ext.begin() + (centre + after + 1)};
}

}  // namespace

TMesh::TMesh(std::vector<MeshSegment> horizontal, std::vector<MeshSegment> vertical, int degree)
    : horizontal_(std::move(horizontal)), vertical_(std::move(vertical)), degree_(degree) {
    if (degree < 0) throw std::invalid_argument("TMesh: degree must be nonnegative");
    check_segments(horizontal_, "horizontal");
    check_segments(vertical_, "vertical");
    anchors_ = vertices();
}

TMesh::TMesh(std::vector<MeshSegment> horizontal, std::vector<MeshSegment> vertical, int degree,
             std::vector<std::pair<double, double>> anchors)
    : TMesh(std::move(horizontal), std::move(vertical), degree) {
    anchors_ = std::move(anchors);
}

std::vector<std::pair<double, double>> TMesh::vertices() const {
    std::vector<std::pair<double, double>> out;
    for (const auto& h : horizontal_)
        for (const auto& v : vertical_)
            if (h.from <= v.at && v.at <= h.to && v.from <= h.at && h.at <= v.to) out.emplace_back(v.at, h.at);
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second < b.second : a.first < b.first;
    });
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::vector<std::pair<double, double>> TMesh::t_junctions() const {
    double xlo = INFINITY, xhi = -INFINITY, ylo = INFINITY, yhi = -INFINITY;
    for (const auto& h : horizontal_) {
        xlo = std::min(xlo, h.from), xhi = std::max(xhi, h.to);
        ylo = std::min(ylo, h.at), yhi = std::max(yhi, h.at);
    }
    for (const auto& v : vertical_) {
        ylo = std::min(ylo, v.from), yhi = std::max(yhi, v.to);
        xlo = std::min(xlo, v.at), xhi = std::max(xhi, v.at);
    }
    std::vector<std::pair<double, double>> out;
    for (auto [x, y] : vertices()) {
        if (x == xlo || x == xhi || y == ylo || y == yhi) continue;
        int arms = 0;
        for (const auto& h : horizontal_)
            if (h.at == y) arms += (h.from < x && x <= h.to) + (h.from <= x && x < h.to);
        for (const auto& v : vertical_)
            if (v.at == x) arms += (v.from < y && y <= v.to) + (v.from <= y && y < v.to);
        if (arms == 3) out.emplace_back(x, y);
    }
    return out;
}

std::vector<double> TMesh::lines_crossing_row(double y) const { return crossing(vertical_, y); }
std::vector<double> TMesh::lines_crossing_column(double x) const { return crossing(horizontal_, x); }

std::pair<std::vector<double>, std::vector<double>> tmesh_local_knot_vectors(const TMesh& mesh,
                                                                             std::pair<double, double> anchor) {
    const auto [x, y] = anchor;
    return {window(mesh.lines_crossing_row(y), x, mesh.degree(), "x"),
            window(mesh.lines_crossing_column(x), y, mesh.degree(), "y")};
}

ProductSplineBasis tmesh_basis(const TMesh& mesh) {
    ProductSplineBasis basis(2);
    const int degrees[2] = {mesh.degree(), mesh.degree()};
    for (const auto& a : mesh.anchors()) {
        auto [wx, wy] = tmesh_local_knot_vectors(mesh, a);
        basis.add({wx, wy}, degrees);
    }
    return basis;
}

RankReport basis_rank(const ProductSplineBasis& basis, const Eigen::MatrixXd& points, double rel_tol) {
    RankReport rep;
    rep.num_functions = basis.size();
    if (basis.size() == 0) return rep;
    const Eigen::MatrixXd X = basis.design_matrix(points);
    Eigen::BDCSVD<Eigen::MatrixXd> svd(X);
    const auto& s = svd.singularValues();
    rep.sigma_max = s.size() ? s.maxCoeff() : 0.0;
    rep.sigma_min = s.size() ? s.minCoeff() : 0.0;
    for (Eigen::Index j = 0; j < s.size(); ++j)
        if (s(j) > rel_tol * rep.sigma_max) ++rep.rank;
    rep.deficient = rep.rank < rep.num_functions;
    return rep;
}

RankReport tmesh_basis_diagnostics(const TMesh& mesh, const Eigen::MatrixXd& points, double rel_tol) {
    return basis_rank(tmesh_basis(mesh), points, rel_tol);
}

}  // namespace splinekernel
