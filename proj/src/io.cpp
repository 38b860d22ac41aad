#include "splinekernel/io.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unistd.h>

#include <Eigen/src/Core/util/Macros.h>
#include <boost/version.hpp>
#include <fftw3.h>

namespace splinekernel {

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& context) {
    if (!j.is_object()) throw FormatError(context + ": expected a JSON object");
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
            throw FormatError(context + ": unknown key '" + key + "'");
    }
}

const json& require(const json& j, const char* key, const std::string& context) {
    if (!j.is_object() || !j.contains(key)) throw FormatError(context + ": missing key '" + key + "'");
    return j.at(key);
}

double as_double(const json& j, const std::string& context) {
    if (!j.is_number()) throw FormatError(context + ": expected a number");
    return j.get<double>();
}

int as_int(const json& j, const std::string& context) {
    if (!j.is_number_integer()) throw FormatError(context + ": expected an integer");
    return j.get<int>();
}

bool as_bool(const json& j, const std::string& context) {
    if (!j.is_boolean()) throw FormatError(context + ": expected true or false");
    return j.get<bool>();
}

std::vector<double> as_doubles(const json& j, const std::string& context) {
    if (!j.is_array()) throw FormatError(context + ": expected an array of numbers");
    std::vector<double> out;
    for (const auto& v : j) out.push_back(as_double(v, context));
    return out;
}

std::vector<int> as_ints(const json& j, const std::string& context) {
    if (!j.is_array()) throw FormatError(context + ": expected an array of integers");
    std::vector<int> out;
    for (const auto& v : j) out.push_back(as_int(v, context));
    return out;
}

template <class F>
auto wrap_domain(const std::string& context, F&& f) {
    try {
        return f();
    } catch (const FormatError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw FormatError(context + ": " + e.what());
    }
}

json complex_matrix_to_json(const Eigen::MatrixXcd& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back({m(r, c).real(), m(r, c).imag()});
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXcd complex_matrix_from_json(const json& j, const std::string& context) {
    if (!j.is_array() || j.empty()) throw FormatError(context + ": expected a square matrix of [re, im] pairs");
    const auto n = static_cast<Eigen::Index>(j.size());
    Eigen::MatrixXcd m(n, n);
    for (Eigen::Index r = 0; r < n; ++r) {
        const auto& row = j[static_cast<std::size_t>(r)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != n)
            throw FormatError(context + ": coefficient matrix is not square");
        for (Eigen::Index c = 0; c < n; ++c) {
            const auto& z = row[static_cast<std::size_t>(c)];
            if (!z.is_array() || z.size() != 2) throw FormatError(context + ": entries must be [re, im] pairs");
            m(r, c) = cplx(as_double(z[0], context), as_double(z[1], context));
        }
    }
    return m;
}

json box_to_json(const Box& box) {
    json out = json::array();
    for (const auto& [lo, hi] : box.bounds) out.push_back({lo, hi});
    return out;
}

json segment_to_json(const MeshSegment& s) { return {{"at", s.at}, {"from", s.from}, {"to", s.to}}; }

MeshSegment segment_from_json(const json& j, const std::string& context) {
    check_keys(j, {"at", "from", "to"}, context);
    return {as_double(require(j, "at", context), context), as_double(require(j, "from", context), context),
            as_double(require(j, "to", context), context)};
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) {
        const auto b = field.find_first_not_of(" \t\r");
        const auto e = field.find_last_not_of(" \t\r");
        fields.push_back(b == std::string::npos ? std::string() : field.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

double parse_number(const std::string& s, std::size_t line) {
    if (s.empty()) throw FormatError("line " + std::to_string(line) + ": missing value");
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size())
        throw FormatError("line " + std::to_string(line) + ": '" + s + "' is not a number");
    if (!std::isfinite(v)) throw FormatError("line " + std::to_string(line) + ": non-finite value");
    return v;
}

// Uniform spacing of sorted unique coordinates, 1e-9 relative.
double uniform_spacing(const std::vector<double>& sorted, const std::string& axis) {
    if (sorted.size() < 2) throw FormatError("axis " + axis + ": need at least two distinct coordinates");
    const double step = (sorted.back() - sorted.front()) / static_cast<double>(sorted.size() - 1);
    for (std::size_t j = 1; j < sorted.size(); ++j)
        if (std::abs(sorted[j] - sorted[j - 1] - step) > 1e-9 * std::abs(step))
            throw FormatError("axis " + axis + ": sample spacing is not uniform");
    return step;
}

std::string cell_int(int v) { return v < 0 ? std::string() : std::to_string(v); }

}  // namespace

// ---------------------------------------------------------------- text output

std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    const auto dir = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
    if (!std::filesystem::exists(dir)) std::filesystem::create_directories(dir);
    auto tmp = path;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        out << content;
        out.flush();
        if (!out) {
            std::filesystem::remove(tmp);
            throw std::runtime_error("failed writing " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

json read_json_file(const std::filesystem::path& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw FormatError(path.string() + ": invalid JSON: " + e.what());
    }
}

std::string dump_json(const json& j) { return j.dump(2) + "\n"; }

// ---------------------------------------------------------------- knots and models

json knots_to_json(const KnotVector& kv) { return {{"degree", kv.degree()}, {"knots", kv.knots()}}; }

KnotVector knots_from_json(const json& j) {
    const std::string ctx = "knots";
    check_keys(j, {"degree", "knots"}, ctx);
    const int degree = as_int(require(j, "degree", ctx), ctx);
    auto knots = as_doubles(require(j, "knots", ctx), ctx);
    return wrap_domain(ctx, [&] { return KnotVector(std::move(knots), degree); });
}

std::string model_kind(const AnyModel& model) {
    return std::visit(
        [](const auto& m) -> std::string {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, SplinePsdModel>) return "uni";
            else if constexpr (std::is_same_v<T, MatrixSplinePsdModel>) return "multi";
            else return "tensor";
        },
        model);
}

json model_to_json(const AnyModel& model, const ModelMetadata& meta) {
    json j;
    j["kind"] = model_kind(model);
    std::visit(
        [&](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, SplinePsdModel>) {
                j["degree"] = m.knots().degree();
                j["knots"] = m.knots().knots();
                j["coeffs"] = m.coeffs();
            } else if constexpr (std::is_same_v<T, MatrixSplinePsdModel>) {
                j["degree"] = m.knots().degree();
                j["knots"] = m.knots().knots();
                json coeffs = json::array();
                for (const auto& c : m.coeffs()) coeffs.push_back(complex_matrix_to_json(c));
                j["coeffs"] = std::move(coeffs);
                json delays = json::array();
                for (const auto& d : m.phase_delays()) delays.push_back({{"r", d.r}, {"s", d.s}, {"t0", d.t0}});
                j["phase_delays"] = std::move(delays);
            } else {
                json degrees = json::array(), knots = json::array();
                for (const auto& axis : m.axes()) {
                    degrees.push_back(axis.degree());
                    knots.push_back(axis.knots().knots());
                }
                j["degree"] = std::move(degrees);
                j["knots"] = std::move(knots);
                j["coeffs"] = {{"shape", m.shape()}, {"values", m.coeffs()}};
            }
            j["real_process"] = m.real_process();
        },
        model);
    json md = meta.extra.is_object() ? meta.extra : json::object();
    if (!meta.created.empty()) md["created"] = meta.created;
    if (!meta.provenance.empty()) md["provenance"] = meta.provenance;
    if (meta.seed) md["seed"] = *meta.seed;
    if (!md.empty()) j["metadata"] = std::move(md);
    return j;
}

ModelMetadata metadata_from_json(const json& j) {
    ModelMetadata meta;
    if (!j.is_object() || !j.contains("metadata")) return meta;
    const auto& md = j.at("metadata");
    if (!md.is_object()) throw FormatError("model: metadata must be an object");
    for (const auto& [key, value] : md.items()) {
        if (key == "created" && value.is_string()) meta.created = value.get<std::string>();
        else if (key == "provenance" && value.is_string()) meta.provenance = value.get<std::string>();
        else if (key == "seed" && value.is_number_unsigned()) meta.seed = value.get<std::uint64_t>();
        else meta.extra[key] = value;
    }
    return meta;
}

AnyModel model_from_json(const json& j) {
    const std::string ctx = "model";
    check_keys(j, {"kind", "degree", "knots", "coeffs", "real_process", "phase_delays", "metadata"}, ctx);
    const auto& kind_j = require(j, "kind", ctx);
    if (!kind_j.is_string()) throw FormatError(ctx + ": kind must be a string");
    const auto kind = kind_j.get<std::string>();
    const bool real = j.contains("real_process") ? as_bool(j.at("real_process"), ctx) : false;
    if (kind != "multi" && j.contains("phase_delays")) throw FormatError(ctx + ": phase_delays only apply to kind multi");

    if (kind == "uni" || kind == "multi") {
        const int degree = as_int(require(j, "degree", ctx), ctx + ".degree");
        auto knots = as_doubles(require(j, "knots", ctx), ctx + ".knots");
        const KnotVector kv = wrap_domain(ctx, [&] { return KnotVector(std::move(knots), degree); });
        const auto& coeffs_j = require(j, "coeffs", ctx);
        if (!coeffs_j.is_array()) throw FormatError(ctx + ".coeffs: expected an array");
        if (static_cast<int>(coeffs_j.size()) != kv.num_basis())
            throw FormatError(ctx + ".coeffs: expected " + std::to_string(kv.num_basis()) + " coefficients, got " +
                              std::to_string(coeffs_j.size()));
        if (kind == "uni") {
            auto coeffs = as_doubles(coeffs_j, ctx + ".coeffs");
            return wrap_domain(ctx, [&] { return AnyModel(SplinePsdModel(kv, std::move(coeffs), real)); });
        }
        std::vector<Eigen::MatrixXcd> coeffs;
        for (const auto& c : coeffs_j) coeffs.push_back(complex_matrix_from_json(c, ctx + ".coeffs"));
        return wrap_domain(ctx, [&] {
            MatrixSplinePsdModel m(kv, std::move(coeffs), real);
            if (j.contains("phase_delays")) {
                const auto& delays = j.at("phase_delays");
                if (!delays.is_array()) throw FormatError(ctx + ".phase_delays: expected an array");
                for (const auto& d : delays) {
                    check_keys(d, {"r", "s", "t0"}, ctx + ".phase_delays");
                    m = m.with_phase_delay(as_int(require(d, "r", ctx), ctx), as_int(require(d, "s", ctx), ctx),
                                           as_double(require(d, "t0", ctx), ctx));
                }
            }
            return AnyModel(std::move(m));
        });
    }
    if (kind == "tensor") {
        const auto degrees = as_ints(require(j, "degree", ctx), ctx + ".degree");
        const auto& knots_j = require(j, "knots", ctx);
        if (!knots_j.is_array() || knots_j.size() != degrees.size())
            throw FormatError(ctx + ": tensor needs one knot list per degree");
        std::vector<KnotVector> axes;
        for (std::size_t a = 0; a < degrees.size(); ++a) {
            auto knots = as_doubles(knots_j[a], ctx + ".knots");
            axes.push_back(wrap_domain(ctx, [&] { return KnotVector(std::move(knots), degrees[a]); }));
        }
        const auto& coeffs_j = require(j, "coeffs", ctx);
        check_keys(coeffs_j, {"shape", "values"}, ctx + ".coeffs");
        const auto shape = as_ints(require(coeffs_j, "shape", ctx), ctx + ".coeffs.shape");
        auto values = as_doubles(require(coeffs_j, "values", ctx), ctx + ".coeffs.values");
        if (shape.size() != axes.size()) throw FormatError(ctx + ".coeffs.shape: wrong number of axes");
        for (std::size_t a = 0; a < axes.size(); ++a)
            if (shape[a] != axes[a].num_basis())
                throw FormatError(ctx + ".coeffs.shape: axis " + std::to_string(a) + " has " +
                                  std::to_string(axes[a].num_basis()) + " basis functions");
        return wrap_domain(ctx, [&] { return AnyModel(TensorPsdModel(std::move(axes), std::move(values), real)); });
    }
    throw FormatError(ctx + ": unknown kind '" + kind + "'");
}

json hierarchical_to_json(const std::vector<KnotVector>& base, const std::vector<RefinementRegion>& regions) {
    json b = json::array();
    for (const auto& kv : base) b.push_back(knots_to_json(kv));
    json levels = json::array();
    for (const auto& r : regions) levels.push_back({{"level", r.level}, {"box", box_to_json(r.box)}});
    return {{"base_knots", std::move(b)}, {"levels", std::move(levels)}};
}

HierarchicalBasis hierarchical_from_json(const json& j) {
    const std::string ctx = "hierarchical";
    check_keys(j, {"base_knots", "levels"}, ctx);
    const auto& base_j = require(j, "base_knots", ctx);
    if (!base_j.is_array() || base_j.empty()) throw FormatError(ctx + ".base_knots: expected a non-empty array");
    std::vector<KnotVector> base;
    for (const auto& b : base_j) base.push_back(knots_from_json(b));
    std::vector<RefinementRegion> regions;
    if (j.contains("levels")) {
        if (!j.at("levels").is_array()) throw FormatError(ctx + ".levels: expected an array");
        for (const auto& l : j.at("levels")) {
            check_keys(l, {"level", "box"}, ctx + ".levels");
            RefinementRegion r;
            r.level = as_int(require(l, "level", ctx), ctx + ".levels.level");
            const auto& box = require(l, "box", ctx);
            if (!box.is_array()) throw FormatError(ctx + ".levels.box: expected [[lo, hi], ...]");
            for (const auto& iv : box) {
                const auto pair = as_doubles(iv, ctx + ".levels.box");
                if (pair.size() != 2) throw FormatError(ctx + ".levels.box: each interval is [lo, hi]");
                r.box.bounds.emplace_back(pair[0], pair[1]);
            }
            regions.push_back(std::move(r));
        }
    }
    return wrap_domain(ctx, [&] { return build_hierarchical(std::move(base), std::move(regions)); });
}

json tmesh_to_json(const TMesh& mesh) {
    json h = json::array(), v = json::array(), a = json::array();
    for (const auto& s : mesh.horizontal()) h.push_back(segment_to_json(s));
    for (const auto& s : mesh.vertical()) v.push_back(segment_to_json(s));
    for (const auto& [x, y] : mesh.anchors()) a.push_back({x, y});
    return {{"degree", mesh.degree()}, {"horizontal", std::move(h)}, {"vertical", std::move(v)}, {"anchors", std::move(a)}};
}

TMesh tmesh_from_json(const json& j) {
    const std::string ctx = "tmesh";
    check_keys(j, {"degree", "horizontal", "vertical", "anchors"}, ctx);
    const int degree = as_int(require(j, "degree", ctx), ctx + ".degree");
    auto segments = [&](const char* key) {
        const auto& arr = require(j, key, ctx);
        if (!arr.is_array()) throw FormatError(ctx + "." + key + ": expected an array");
        std::vector<MeshSegment> out;
        for (const auto& s : arr) out.push_back(segment_from_json(s, ctx + "." + key));
        return out;
    };
    auto h = segments("horizontal");
    auto v = segments("vertical");
    if (!j.contains("anchors")) return wrap_domain(ctx, [&] { return TMesh(std::move(h), std::move(v), degree); });
    std::vector<std::pair<double, double>> anchors;
    for (const auto& a : j.at("anchors")) {
        const auto p = as_doubles(a, ctx + ".anchors");
        if (p.size() != 2) throw FormatError(ctx + ".anchors: each anchor is [x, y]");
        anchors.emplace_back(p[0], p[1]);
    }
    return wrap_domain(ctx, [&] { return TMesh(std::move(h), std::move(v), degree, std::move(anchors)); });
}

// ---------------------------------------------------------------- options and configs

json to_json(const WhittleOptions& o) {
    json j = {{"floor_rel", o.floor_rel}, {"grad_tol", o.grad_tol}, {"max_iter", o.max_iter}};
    j["band"] = o.band ? json{o.band->first, o.band->second} : json(nullptr);
    return j;
}

json to_json(const GaussianOptions& o) {
    return {{"jitter_min_rel", o.jitter_min_rel}, {"jitter_max_rel", o.jitter_max_rel}};
}

json to_json(const BfgsOptions& o) {
    return {{"grad_tol", o.grad_tol}, {"max_iter", o.max_iter}, {"armijo", o.armijo}, {"max_backtracks", o.max_backtracks}};
}

json to_json(const MleOptions& o) {
    return {{"bfgs", to_json(o.bfgs)},
            {"gaussian", to_json(o.gaussian)},
            {"analytic_gradient", o.analytic_gradient},
            {"fd_step", o.fd_step},
            {"demean", o.demean},
            {"init_floor_rel", o.init_floor_rel}};
}

json to_json(const Table1Config& c) {
    return {{"ells", c.ells},         {"degrees", c.degrees}, {"n_knots", c.n_knots}, {"demean", c.demean},
            {"reps", c.reps},         {"seed", c.seed},       {"n", c.n},             {"delta", c.delta},
            {"offset", c.offset},     {"empirical", c.empirical}, {"iae_step", c.iae_step},
            {"threads", c.threads},   {"mle", to_json(c.mle)}};
}

json to_json(const Table2Config& c) {
    return {{"lambdas", c.lambdas}, {"degrees", c.degrees}, {"n_knots", c.n_knots}, {"reps", c.reps},
            {"seed", c.seed},       {"n", c.n},             {"delta", c.delta},     {"ell", c.ell},
            {"nu11", c.nu11},       {"nu22", c.nu22},       {"nu12", c.nu12},       {"offset", c.offset},
            {"empirical", c.empirical}, {"parametric", c.parametric}, {"iae_step", c.iae_step},
            {"threads", c.threads}, {"mle", to_json(c.mle)}};
}

WhittleOptions whittle_options_from_json(const json& j, WhittleOptions o) {
    const std::string ctx = "whittle options";
    check_keys(j, {"floor_rel", "band", "grad_tol", "max_iter"}, ctx);
    if (j.contains("floor_rel")) o.floor_rel = as_double(j.at("floor_rel"), ctx + ".floor_rel");
    if (j.contains("grad_tol")) o.grad_tol = as_double(j.at("grad_tol"), ctx + ".grad_tol");
    if (j.contains("max_iter")) o.max_iter = as_int(j.at("max_iter"), ctx + ".max_iter");
    if (j.contains("band")) {
        if (j.at("band").is_null()) {
            o.band.reset();
        } else {
            const auto b = as_doubles(j.at("band"), ctx + ".band");
            if (b.size() != 2) throw FormatError(ctx + ".band: expected [lo, hi]");
            o.band = std::make_pair(b[0], b[1]);
        }
    }
    return o;
}

GaussianOptions gaussian_options_from_json(const json& j, GaussianOptions o) {
    const std::string ctx = "gaussian options";
    check_keys(j, {"jitter_min_rel", "jitter_max_rel"}, ctx);
    if (j.contains("jitter_min_rel")) o.jitter_min_rel = as_double(j.at("jitter_min_rel"), ctx);
    if (j.contains("jitter_max_rel")) o.jitter_max_rel = as_double(j.at("jitter_max_rel"), ctx);
    return o;
}

BfgsOptions bfgs_options_from_json(const json& j, BfgsOptions o) {
    const std::string ctx = "bfgs options";
    check_keys(j, {"grad_tol", "max_iter", "armijo", "max_backtracks"}, ctx);
    if (j.contains("grad_tol")) o.grad_tol = as_double(j.at("grad_tol"), ctx);
    if (j.contains("max_iter")) o.max_iter = as_int(j.at("max_iter"), ctx);
    if (j.contains("armijo")) o.armijo = as_double(j.at("armijo"), ctx);
    if (j.contains("max_backtracks")) o.max_backtracks = as_int(j.at("max_backtracks"), ctx);
    return o;
}

MleOptions mle_options_from_json(const json& j, MleOptions o) {
    const std::string ctx = "mle options";
    check_keys(j, {"bfgs", "gaussian", "analytic_gradient", "fd_step", "demean", "init_floor_rel"}, ctx);
    if (j.contains("bfgs")) o.bfgs = bfgs_options_from_json(j.at("bfgs"), o.bfgs);
    if (j.contains("gaussian")) o.gaussian = gaussian_options_from_json(j.at("gaussian"), o.gaussian);
    if (j.contains("analytic_gradient")) o.analytic_gradient = as_bool(j.at("analytic_gradient"), ctx);
    if (j.contains("fd_step")) o.fd_step = as_double(j.at("fd_step"), ctx);
    if (j.contains("demean")) o.demean = as_bool(j.at("demean"), ctx);
    if (j.contains("init_floor_rel")) o.init_floor_rel = as_double(j.at("init_floor_rel"), ctx);
    return o;
}

Table1Config table1_config_from_json(const json& j, Table1Config c) {
    const std::string ctx = "table1 config";
    check_keys(j, {"ells", "degrees", "n_knots", "demean", "reps", "seed", "n", "delta", "offset", "empirical",
                   "iae_step", "threads", "mle"},
               ctx);
    if (j.contains("ells")) c.ells = as_doubles(j.at("ells"), ctx + ".ells");
    if (j.contains("degrees")) c.degrees = as_ints(j.at("degrees"), ctx + ".degrees");
    if (j.contains("n_knots")) c.n_knots = as_ints(j.at("n_knots"), ctx + ".n_knots");
    if (j.contains("demean")) {
        c.demean.clear();
        if (!j.at("demean").is_array()) throw FormatError(ctx + ".demean: expected an array of booleans");
        for (const auto& v : j.at("demean")) c.demean.push_back(as_bool(v, ctx + ".demean"));
    }
    if (j.contains("reps")) c.reps = as_int(j.at("reps"), ctx + ".reps");
    if (j.contains("seed")) {
        if (!j.at("seed").is_number_unsigned()) throw FormatError(ctx + ".seed: expected a nonnegative integer");
        c.seed = j.at("seed").get<std::uint64_t>();
    }
    if (j.contains("n")) c.n = as_int(j.at("n"), ctx + ".n");
    if (j.contains("delta")) c.delta = as_double(j.at("delta"), ctx + ".delta");
    if (j.contains("offset")) c.offset = as_double(j.at("offset"), ctx + ".offset");
    if (j.contains("empirical")) c.empirical = as_bool(j.at("empirical"), ctx + ".empirical");
    if (j.contains("iae_step")) c.iae_step = as_double(j.at("iae_step"), ctx + ".iae_step");
    if (j.contains("threads")) c.threads = as_int(j.at("threads"), ctx + ".threads");
    if (j.contains("mle")) c.mle = mle_options_from_json(j.at("mle"), c.mle);
    return c;
}

Table2Config table2_config_from_json(const json& j, Table2Config c) {
    const std::string ctx = "table2 config";
    check_keys(j, {"lambdas", "degrees", "n_knots", "reps", "seed", "n", "delta", "ell", "nu11", "nu22", "nu12",
                   "offset", "empirical", "parametric", "iae_step", "threads", "mle"},
               ctx);
    if (j.contains("lambdas")) c.lambdas = as_doubles(j.at("lambdas"), ctx + ".lambdas");
    if (j.contains("degrees")) c.degrees = as_ints(j.at("degrees"), ctx + ".degrees");
    if (j.contains("n_knots")) c.n_knots = as_int(j.at("n_knots"), ctx + ".n_knots");
    if (j.contains("reps")) c.reps = as_int(j.at("reps"), ctx + ".reps");
    if (j.contains("seed")) {
        if (!j.at("seed").is_number_unsigned()) throw FormatError(ctx + ".seed: expected a nonnegative integer");
        c.seed = j.at("seed").get<std::uint64_t>();
    }
    if (j.contains("n")) c.n = as_int(j.at("n"), ctx + ".n");
    if (j.contains("delta")) c.delta = as_double(j.at("delta"), ctx + ".delta");
    if (j.contains("ell")) c.ell = as_double(j.at("ell"), ctx + ".ell");
    if (j.contains("nu11")) c.nu11 = as_double(j.at("nu11"), ctx + ".nu11");
    if (j.contains("nu22")) c.nu22 = as_double(j.at("nu22"), ctx + ".nu22");
    if (j.contains("nu12")) c.nu12 = as_double(j.at("nu12"), ctx + ".nu12");
    if (j.contains("offset")) c.offset = as_double(j.at("offset"), ctx + ".offset");
    if (j.contains("empirical")) c.empirical = as_bool(j.at("empirical"), ctx + ".empirical");
    if (j.contains("parametric")) c.parametric = as_bool(j.at("parametric"), ctx + ".parametric");
    if (j.contains("iae_step")) c.iae_step = as_double(j.at("iae_step"), ctx + ".iae_step");
    if (j.contains("threads")) c.threads = as_int(j.at("threads"), ctx + ".threads");
    if (j.contains("mle")) c.mle = mle_options_from_json(j.at("mle"), c.mle);
    return c;
}

json to_json(const FitReport& r) {
    return {{"coeffs", r.coeffs},
            {"objective", r.objective},
            {"grad_norm", r.grad_norm},
            {"iterations", r.iterations},
            {"converged", r.converged},
            {"message", r.message},
            {"hessian_bandwidth", r.hessian_bandwidth},
            {"floor_activations", r.floor_activations},
            {"objective_trace", r.objective_trace}};
}

// ---------------------------------------------------------------- series files

SeriesData parse_series_csv(const std::string& text, int dim) {
    if (dim != 1 && dim != 2) throw FormatError("series files have 1 or 2 coordinate axes");
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> header;
    while (header.empty() && std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") != std::string::npos) header = split_csv_line(line);
    }
    if (header.empty()) throw FormatError("series file is empty");
    const std::size_t columns = header.size();
    if (dim == 1 && columns < 2) throw FormatError("series file needs a time column and at least one value column");
    if (dim == 2 && columns != 3) throw FormatError("2-D series file needs columns x1, x2, value");

    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != columns)
            throw FormatError("line " + std::to_string(line_no) + ": expected " + std::to_string(columns) +
                              " fields, got " + std::to_string(fields.size()));
        std::vector<double> row;
        for (const auto& f : fields) row.push_back(parse_number(f, line_no));
        rows.push_back(std::move(row));
    }
    if (rows.size() < 2) throw FormatError("series file needs at least two samples");

    SeriesData data;
    data.dim = dim;
    data.value_columns.assign(header.begin() + dim, header.end());
    if (dim == 1) {
        std::vector<double> t;
        for (const auto& r : rows) t.push_back(r[0]);
        if (!std::is_sorted(t.begin(), t.end()) || std::adjacent_find(t.begin(), t.end()) != t.end())
            throw FormatError("time column must be strictly increasing");
        data.origin = {t.front()};
        data.spacing = {uniform_spacing(t, header[0])};
        data.shape = {static_cast<int>(rows.size())};
        data.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(columns - 1));
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (std::size_t c = 1; c < columns; ++c)
                data.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c - 1)) = rows[i][c];
        return data;
    }
    std::array<std::vector<double>, 2> coords;
    for (int a = 0; a < 2; ++a) {
        std::set<double> unique;
        for (const auto& r : rows) unique.insert(r[static_cast<std::size_t>(a)]);
        coords[static_cast<std::size_t>(a)].assign(unique.begin(), unique.end());
        data.origin.push_back(*unique.begin());
        data.spacing.push_back(uniform_spacing(coords[static_cast<std::size_t>(a)], header[static_cast<std::size_t>(a)]));
        data.shape.push_back(static_cast<int>(unique.size()));
    }
    if (rows.size() != static_cast<std::size_t>(data.shape[0]) * static_cast<std::size_t>(data.shape[1]))
        throw FormatError("2-D series does not cover a complete grid");
    data.values = Eigen::MatrixXd::Constant(data.shape[0], data.shape[1], std::numeric_limits<double>::quiet_NaN());
    for (const auto& r : rows) {
        const auto i = std::lower_bound(coords[0].begin(), coords[0].end(), r[0]) - coords[0].begin();
        const auto k = std::lower_bound(coords[1].begin(), coords[1].end(), r[1]) - coords[1].begin();
        if (!std::isnan(data.values(i, k))) throw FormatError("2-D series repeats a grid point");
        data.values(i, k) = r[2];
    }
    return data;
}

SeriesData read_series_csv(const std::filesystem::path& path, int dim) {
    try {
        return parse_series_csv(read_file(path), dim);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

std::string series_to_csv(const SeriesData& data) {
    std::ostringstream out;
    if (data.dim == 1) {
        out << "t";
        for (Eigen::Index c = 0; c < data.values.cols(); ++c)
            out << ','
                << (static_cast<std::size_t>(c) < data.value_columns.size() ? data.value_columns[static_cast<std::size_t>(c)]
                                                                            : "y" + std::to_string(c + 1));
        out << '\n';
        for (Eigen::Index i = 0; i < data.values.rows(); ++i) {
            out << format_double(data.origin[0] + static_cast<double>(i) * data.spacing[0]);
            for (Eigen::Index c = 0; c < data.values.cols(); ++c) out << ',' << format_double(data.values(i, c));
            out << '\n';
        }
        return out.str();
    }
    out << "x1,x2," << (data.value_columns.empty() ? "value" : data.value_columns[0]) << '\n';
    for (Eigen::Index i = 0; i < data.values.rows(); ++i)
        for (Eigen::Index k = 0; k < data.values.cols(); ++k)
            out << format_double(data.origin[0] + static_cast<double>(i) * data.spacing[0]) << ','
                << format_double(data.origin[1] + static_cast<double>(k) * data.spacing[1]) << ','
                << format_double(data.values(i, k)) << '\n';
    return out.str();
}

// ---------------------------------------------------------------- exports

GridQuantity grid_quantity_from_string(const std::string& s) {
    if (s == "psd") return GridQuantity::psd;
    if (s == "acf") return GridQuantity::acf;
    if (s == "separability-diff") return GridQuantity::separability_diff;
    throw std::invalid_argument("unknown grid quantity '" + s + "' (psd, acf, separability-diff)");
}

std::vector<double> GridAxis::values() const {
    if (points < 1) throw std::invalid_argument("grid axis needs at least one point");
    if (!std::isfinite(lo) || !std::isfinite(hi)) throw std::invalid_argument("grid bounds must be finite");
    if (points == 1) return {lo};
    std::vector<double> v(static_cast<std::size_t>(points));
    for (int j = 0; j < points; ++j) v[static_cast<std::size_t>(j)] = lo + (hi - lo) * j / (points - 1);
    v.back() = hi;
    return v;
}

std::string export_grid(const AnyModel& model, const std::vector<GridAxis>& grid, GridQuantity what,
                        std::size_t max_points) {
    std::size_t total = 1;
    for (const auto& a : grid) {
        if (a.points < 1) throw std::invalid_argument("grid axis needs at least one point");
        total *= static_cast<std::size_t>(a.points);
        if (total > max_points)
            throw std::length_error("grid has more than " + std::to_string(max_points) + " points");
    }
    const std::string coord = what == GridQuantity::psd ? "omega" : "tau";
    std::ostringstream out;
    std::visit(
        [&](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, SplinePsdModel> || std::is_same_v<T, MatrixSplinePsdModel>) {
                if (grid.size() != 1) throw std::invalid_argument("a 1-D model needs a 1-D grid");
                if (what == GridQuantity::separability_diff)
                    throw std::invalid_argument("separability-diff needs a 2-D tensor model");
                const auto axis = grid[0].values();
                if constexpr (std::is_same_v<T, SplinePsdModel>) {
                    out << coord << ",value,imag\n";
                    for (double x : axis) {
                        const cplx v = what == GridQuantity::psd ? cplx(m.psd(x), 0.0) : m.acf(x);
                        out << format_double(x) << ',' << format_double(v.real()) << ',' << format_double(v.imag())
                            << '\n';
                    }
                } else {
                    out << coord << ",r,s,value,imag\n";
                    for (double x : axis) {
                        const Eigen::MatrixXcd v = what == GridQuantity::psd ? m.psd(x) : m.acf(x);
                        for (Eigen::Index r = 0; r < v.rows(); ++r)
                            for (Eigen::Index s = 0; s < v.cols(); ++s)
                                out << format_double(x) << ',' << r << ',' << s << ','
                                    << format_double(v(r, s).real()) << ',' << format_double(v(r, s).imag()) << '\n';
                    }
                }
            } else {
                if (static_cast<int>(grid.size()) != m.dim())
                    throw std::invalid_argument("grid has " + std::to_string(grid.size()) + " axes, model has " +
                                                std::to_string(m.dim()));
                if (what == GridQuantity::separability_diff && m.dim() != 2)
                    throw std::invalid_argument("separability-diff needs a 2-D tensor model");
                std::vector<std::vector<double>> axes;
                for (const auto& a : grid) axes.push_back(a.values());
                for (std::size_t a = 0; a < axes.size(); ++a) out << coord << (a + 1) << ',';
                out << "value,imag\n";
                std::optional<SeparableSurrogate> surrogate;
                if (what == GridQuantity::separability_diff) surrogate.emplace(m);
                std::vector<std::size_t> idx(axes.size(), 0);
                std::vector<double> point(axes.size());
                for (std::size_t count = 0; count < total; ++count) {
                    for (std::size_t a = 0; a < axes.size(); ++a) point[a] = axes[a][idx[a]];
                    cplx v;
                    if (what == GridQuantity::psd) v = m.psd(point);
                    else if (what == GridQuantity::acf) v = m.acf(point);
                    else v = surrogate->difference(point[0], point[1]);
                    for (double x : point) out << format_double(x) << ',';
                    out << format_double(v.real()) << ',' << format_double(v.imag()) << '\n';
                    for (std::size_t a = axes.size(); a-- > 0;) {
                        if (++idx[a] < axes[a].size()) break;
                        idx[a] = 0;
                    }
                }
            }
        },
        model);
    return out.str();
}

// ---------------------------------------------------------------- benchmark tables

std::string table1_to_csv(const std::vector<Table1Row>& rows) {
    std::ostringstream out;
    out << "ell,k,n_knots,demean,estimator,mean,sd,reps,failures,nonconverged\n";
    for (const auto& r : rows)
        out << format_double(r.ell) << ',' << cell_int(r.degree) << ',' << cell_int(r.n_knots) << ','
            << (r.demean ? "true" : "false") << ',' << r.estimator << ',' << format_double(r.summary.mean) << ','
            << format_double(r.summary.sd) << ',' << r.summary.reps << ',' << r.summary.failures << ','
            << r.summary.nonconverged << '\n';
    return out.str();
}

std::string table2_to_csv(const std::vector<Table2Row>& rows) {
    std::ostringstream out;
    out << "lambda12,component,k,estimator,mean,sd,reps,failures,nonconverged\n";
    for (const auto& r : rows)
        out << format_double(r.lambda12) << ',' << r.component << ',' << cell_int(r.degree) << ',' << r.estimator
            << ',' << format_double(r.summary.mean) << ',' << format_double(r.summary.sd) << ',' << r.summary.reps
            << ',' << r.summary.failures << ',' << r.summary.nonconverged << '\n';
    return out.str();
}

std::string table1_replications_csv(const std::vector<Table1Row>& rows) {
    std::ostringstream out;
    out << "ell,k,n_knots,demean,estimator,rep,value\n";
    for (const auto& r : rows)
        for (std::size_t i = 0; i < r.summary.values.size(); ++i)
            out << format_double(r.ell) << ',' << cell_int(r.degree) << ',' << cell_int(r.n_knots) << ','
                << (r.demean ? "true" : "false") << ',' << r.estimator << ',' << i << ','
                << format_double(r.summary.values[i]) << '\n';
    return out.str();
}

std::string table2_replications_csv(const std::vector<Table2Row>& rows) {
    std::ostringstream out;
    out << "lambda12,component,k,estimator,rep,value\n";
    for (const auto& r : rows)
        for (std::size_t i = 0; i < r.summary.values.size(); ++i)
            out << format_double(r.lambda12) << ',' << r.component << ',' << cell_int(r.degree) << ','
                << r.estimator << ',' << i << ',' << format_double(r.summary.values[i]) << '\n';
    return out.str();
}

// ---------------------------------------------------------------- manifests

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

json build_info() {
    return {{"splinekernel", "0.1.0"},
            {"compiler", __VERSION__},
            {"cplusplus", __cplusplus},
            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                          std::to_string(EIGEN_MINOR_VERSION)},
            {"boost", BOOST_LIB_VERSION},
            {"fftw", std::string(fftw_version)}};
}

}  // namespace splinekernel
