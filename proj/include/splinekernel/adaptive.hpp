#pragma once

#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "splinekernel/spectral.hpp"

namespace splinekernel {

/// A finite set of D-dimensional tensor-product B-splines, each defined by its
/// own local knot window on every axis (k_j + 2 knots, one basis function).
class ProductSplineBasis {
public:
    explicit ProductSplineBasis(int dim);

    int dim() const { return dim_; }
    int size() const { return static_cast<int>(functions_.size()); }

    /// Appends one function; `windows[j]` holds the k_j + 2 knots on axis j.
    void add(const std::vector<std::vector<double>>& windows, std::span<const int> degrees);

    const std::vector<AcfBasis>& axes(int f) const { return functions_.at(static_cast<std::size_t>(f)); }
    double eval(int f, std::span<const double> omega) const;
    cplx rho(int f, std::span<const double> tau) const;
    double mass(int f) const;
    /// Bounding box of the support of function f, one (lo, hi) per axis.
    std::vector<std::pair<double, double>> support(int f) const;

    /// n x size() matrix of function values at the rows of `points` (n x D).
    Eigen::MatrixXd design_matrix(const Eigen::MatrixXd& points) const;

private:
    int dim_;
    std::vector<std::vector<AcfBasis>> functions_;
};

/// Nonnegative combination of the functions of a ProductSplineBasis.
/// real_process symmetrises by point reflection, as for TensorPsdModel.
class ProductPsdModel {
public:
    ProductPsdModel(ProductSplineBasis basis, std::vector<double> coeffs, bool real_process = false);

    const ProductSplineBasis& basis() const { return basis_; }
    const std::vector<double>& coeffs() const { return coeffs_; }
    bool real_process() const { return real_; }

    double psd(std::span<const double> omega) const;
    cplx acf(std::span<const double> tau) const;
    double variance() const;

private:
    double one_sided(std::span<const double> omega) const;

    ProductSplineBasis basis_;
    std::vector<double> coeffs_;
    bool real_;
};

/// Axis-aligned box, one closed interval per axis.
struct Box {
    std::vector<std::pair<double, double>> bounds;

    bool contains(std::span<const double> point) const;
    bool contains(const Box& other) const;
};

/// Region refined to `level` (level >= 1).
struct RefinementRegion {
    int level = 1;
    Box box;
};

/// Hierarchical B-spline basis over dyadically refined knot vectors. Level 0
/// is the base tensor grid; level l + 1 halves every knot interval of level l.
/// With Omega_0 the whole domain and Omega_l the union of level-l boxes, a
/// level-l function is active when its support lies in Omega_l but not in
/// Omega_{l+1}.
class HierarchicalBasis {
public:
    int dim() const { return static_cast<int>(levels_.front().size()); }
    int num_levels() const { return static_cast<int>(levels_.size()); }
    const std::vector<KnotVector>& level_knots(int level) const { return levels_.at(static_cast<std::size_t>(level)); }
    /// Active multi-indices at a level.
    const std::vector<std::vector<int>>& active(int level) const { return active_.at(static_cast<std::size_t>(level)); }
    int num_active() const;
    const std::vector<RefinementRegion>& regions() const { return regions_; }

    /// Active functions in level order, indices lexicographic within a level.
    const ProductSplineBasis& functions() const { return functions_; }

private:
    friend HierarchicalBasis build_hierarchical(std::vector<KnotVector> base, std::vector<RefinementRegion> regions);
    HierarchicalBasis() : functions_(1) {}

    std::vector<std::vector<KnotVector>> levels_;
    std::vector<std::vector<std::vector<int>>> active_;
    std::vector<RefinementRegion> regions_;
    ProductSplineBasis functions_;
};

/// Throws if a level-(l+1) box is not inside the union of level-l boxes, if a
/// level-1 box leaves the base knot span, or on dimension mismatches.
HierarchicalBasis build_hierarchical(std::vector<KnotVector> base, std::vector<RefinementRegion> regions);

cplx hierarchical_acf_eval(const HierarchicalBasis& hb, std::span<const double> coeffs, std::span<const double> tau,
                           bool real_process = false);
double hierarchical_psd_eval(const HierarchicalBasis& hb, std::span<const double> coeffs,
                             std::span<const double> omega, bool real_process = false);

/// Horizontal mesh line y = at spanning [from, to]; vertical lines likewise
/// with x = at.
struct MeshSegment {
    double at = 0.0;
    double from = 0.0;
    double to = 0.0;
};

/// Two-dimensional axis-aligned T-mesh. Anchors default to every vertex
/// (intersection of a horizontal and a vertical segment).
class TMesh {
public:
    TMesh(std::vector<MeshSegment> horizontal, std::vector<MeshSegment> vertical, int degree);
    TMesh(std::vector<MeshSegment> horizontal, std::vector<MeshSegment> vertical, int degree,
          std::vector<std::pair<double, double>> anchors);

    int degree() const { return degree_; }
    const std::vector<MeshSegment>& horizontal() const { return horizontal_; }
    const std::vector<MeshSegment>& vertical() const { return vertical_; }
    const std::vector<std::pair<double, double>>& anchors() const { return anchors_; }
    std::vector<std::pair<double, double>> vertices() const;
    /// Vertices where a line ends on the interior of a perpendicular one.
    std::vector<std::pair<double, double>> t_junctions() const;

    /// x positions of vertical lines crossing y, sorted.
    std::vector<double> lines_crossing_row(double y) const;
    /// y positions of horizontal lines crossing x, sorted.
    std::vector<double> lines_crossing_column(double x) const;

private:
    std::vector<MeshSegment> horizontal_;
    std::vector<MeshSegment> vertical_;
    int degree_;
    std::vector<std::pair<double, double>> anchors_;
};

/// Knot cross of an anchor: along each axis, the mesh lines crossing the
/// anchor's row (column) give ceil(k/2) knots before the anchor and
/// floor(k/2) + 1 after it. Short windows at the mesh boundary are extended by
/// reflecting the spacing next to the edge.
std::pair<std::vector<double>, std::vector<double>> tmesh_local_knot_vectors(const TMesh& mesh,
                                                                             std::pair<double, double> anchor);

/// One tensor-product function per anchor.
ProductSplineBasis tmesh_basis(const TMesh& mesh);

struct RankReport {
    int num_functions = 0;
    int rank = 0;
    double sigma_max = 0.0;
    double sigma_min = 0.0;
    bool deficient = false;
};

/// Numerical rank of the design matrix on `points` (n x D); singular values
/// below rel_tol * sigma_max count as zero.
RankReport basis_rank(const ProductSplineBasis& basis, const Eigen::MatrixXd& points, double rel_tol = 1e-10);
RankReport tmesh_basis_diagnostics(const TMesh& mesh, const Eigen::MatrixXd& points, double rel_tol = 1e-10);

}  // namespace splinekernel
