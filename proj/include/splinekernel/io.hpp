#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"
#include "splinekernel/adaptive.hpp"
#include "splinekernel/inference.hpp"
#include "splinekernel/models.hpp"
#include "splinekernel/simulation.hpp"

namespace splinekernel {

using json = nlohmann::json;

/// Malformed input: bad JSON, missing fields, unknown keys, wrong shapes.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------- text output

/// 17 significant digits, "nan" / "inf" / "-inf" for non-finite values.
std::string format_double(double x);

/// Writes to a sibling temporary file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);
json read_json_file(const std::filesystem::path& path);
/// Indented JSON; doubles print in shortest round-trip form.
std::string dump_json(const json& j);

// ---------------------------------------------------------------- knots, models, adaptive specs

json knots_to_json(const KnotVector& kv);
KnotVector knots_from_json(const json& j);

using AnyModel = std::variant<SplinePsdModel, MatrixSplinePsdModel, TensorPsdModel>;

struct ModelMetadata {
    std::string created;     // UTC timestamp
    std::string provenance;  // e.g. the command that produced the model
    std::optional<std::uint64_t> seed;
    json extra = json::object();
};

/// {"kind": "uni" | "multi" | "tensor", "degree", "knots", "coeffs", "real_process",
///  "phase_delays", "metadata"}. Hermitian coefficients are nested [re, im] pairs;
/// tensor coefficients are {"shape": [...], "values": [...]} in row-major order.
json model_to_json(const AnyModel& model, const ModelMetadata& meta = {});
AnyModel model_from_json(const json& j);
ModelMetadata metadata_from_json(const json& j);
std::string model_kind(const AnyModel& model);

/// {"base_knots": [knots...], "levels": [{"level": l, "box": [[lo, hi], ...]}]}
json hierarchical_to_json(const std::vector<KnotVector>& base, const std::vector<RefinementRegion>& regions);
HierarchicalBasis hierarchical_from_json(const json& j);

/// {"degree": k, "horizontal": [{"at", "from", "to"}], "vertical": [...], "anchors": [[x, y], ...]}
json tmesh_to_json(const TMesh& mesh);
TMesh tmesh_from_json(const json& j);

// ---------------------------------------------------------------- options and configs

json to_json(const WhittleOptions& o);
json to_json(const GaussianOptions& o);
json to_json(const BfgsOptions& o);
json to_json(const MleOptions& o);
json to_json(const Table1Config& c);
json to_json(const Table2Config& c);

/// Each reader starts from `base` and overrides the keys present; unknown keys throw.
WhittleOptions whittle_options_from_json(const json& j, WhittleOptions base = {});
GaussianOptions gaussian_options_from_json(const json& j, GaussianOptions base = {});
BfgsOptions bfgs_options_from_json(const json& j, BfgsOptions base = {});
MleOptions mle_options_from_json(const json& j, MleOptions base = {});
Table1Config table1_config_from_json(const json& j, Table1Config base = {});
Table2Config table2_config_from_json(const json& j, Table2Config base = {});

json to_json(const FitReport& r);

// ---------------------------------------------------------------- series files

/// Regular samples. For dim 1, `values` is n x M (one column per component).
/// For dim 2, a single component on an n1 x n2 grid, rows following axis 1.
struct SeriesData {
    int dim = 1;
    std::vector<std::string> value_columns;
    std::vector<double> origin;   // first coordinate per axis
    std::vector<double> spacing;  // per axis
    std::vector<int> shape;       // per axis
    Eigen::MatrixXd values;
};

/// Header row, then numbers. dim 1: t, then one column per component.
/// dim 2: x1, x2, value on a complete grid in any row order. Spacing must be
/// uniform to 1e-9 relative; missing or non-numeric entries throw FormatError.
SeriesData read_series_csv(const std::filesystem::path& path, int dim = 1);
SeriesData parse_series_csv(const std::string& text, int dim = 1);
std::string series_to_csv(const SeriesData& data);

// ---------------------------------------------------------------- exports

enum class GridQuantity { psd, acf, separability_diff };
GridQuantity grid_quantity_from_string(const std::string& s);

/// Per-axis closed range [lo, hi] with `points` equally spaced values.
struct GridAxis {
    double lo = 0.0;
    double hi = 0.0;
    int points = 1;
    std::vector<double> values() const;
};

/// Long format: coordinate columns, then for matrix models r and s, then value
/// and imag. separability-diff needs a 2-D tensor model and is normalised by
/// gamma(0). Throws std::length_error past max_points grid points.
std::string export_grid(const AnyModel& model, const std::vector<GridAxis>& grid, GridQuantity what,
                        std::size_t max_points = 1'000'000);

// ---------------------------------------------------------------- benchmark tables

std::string table1_to_csv(const std::vector<Table1Row>& rows);
std::string table2_to_csv(const std::vector<Table2Row>& rows);
/// One row per replication: cell identifiers, estimator, rep, value.
std::string table1_replications_csv(const std::vector<Table1Row>& rows);
std::string table2_replications_csv(const std::vector<Table2Row>& rows);

// ---------------------------------------------------------------- manifests

std::string utc_timestamp();
/// Library, compiler, Eigen and FFTW versions.
json build_info();

}  // namespace splinekernel
