#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "splinekernel/errors.hpp"
#include "splinekernel/inference.hpp"
#include "splinekernel/io.hpp"
#include "splinekernel/knots.hpp"
#include "splinekernel/simulation.hpp"

namespace fs = std::filesystem;
using namespace splinekernel;

namespace {

/// Bad arguments discovered after parsing; exit code 2.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

// Collects what the manifest records about one run.
struct Run {
    std::string command;
    std::vector<std::string> argv;
    json parameters = json::object();
    json inputs = json::array();
    json outputs = json::array();
    std::optional<std::uint64_t> seed;
    int threads = 0;

    std::string read_input(const fs::path& path) {
        auto text = read_file(path);
        char hash[17];
        std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a(text)));
        inputs.push_back({{"path", path.string()}, {"bytes", text.size()}, {"fnv1a64", hash}});
        return text;
    }
    json read_json(const fs::path& path) {
        const auto text = read_input(path);
        try {
            return json::parse(text);
        } catch (const json::parse_error& e) {
            throw FormatError(path.string() + ": invalid JSON: " + e.what());
        }
    }
    void write(const fs::path& path, const std::string& content) {
        write_file_atomic(path, content);
        outputs.push_back(path.string());
    }
    std::string provenance() const {
        std::string s = "splinekernel";
        for (const auto& a : argv) s += " " + a;
        return s;
    }
};

std::map<std::string, double> parse_key_values(const std::string& text, const std::string& flag) {
    std::map<std::string, double> out;
    std::istringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw UsageError(flag + ": expected key=value pairs, got '" + item + "'");
        const auto key = item.substr(0, eq);
        const auto val = item.substr(eq + 1);
        char* end = nullptr;
        const double v = std::strtod(val.c_str(), &end);
        if (val.empty() || end != val.c_str() + val.size())
            throw UsageError(flag + ": '" + val + "' is not a number");
        out[key] = v;
    }
    return out;
}

double take(std::map<std::string, double>& kv, const std::string& key, double fallback) {
    const auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    const double v = it->second;
    kv.erase(it);
    return v;
}

void reject_leftovers(const std::map<std::string, double>& kv, const std::string& flag) {
    if (!kv.empty()) throw UsageError(flag + ": unknown key '" + kv.begin()->first + "'");
}

std::vector<double> parse_point(const std::string& text, const std::string& flag) {
    std::vector<double> out;
    std::istringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        char* end = nullptr;
        const double v = std::strtod(item.c_str(), &end);
        if (item.empty() || end != item.c_str() + item.size())
            throw UsageError(flag + ": '" + item + "' is not a number");
        out.push_back(v);
    }
    return out;
}

GridAxis parse_axis(const std::string& text, const std::string& flag) {
    std::vector<std::string> parts;
    std::istringstream in(text);
    std::string item;
    while (std::getline(in, item, ':')) parts.push_back(item);
    if (parts.size() != 3) throw UsageError(flag + ": expected lo:hi:points, got '" + text + "'");
    GridAxis axis;
    try {
        axis.lo = std::stod(parts[0]);
        axis.hi = std::stod(parts[1]);
        axis.points = std::stoi(parts[2]);
    } catch (const std::exception&) {
        throw UsageError(flag + ": expected lo:hi:points, got '" + text + "'");
    }
    if (axis.points < 1) throw UsageError(flag + ": points must be positive");
    return axis;
}

// Knot options shared by the fit commands.
struct KnotArgs {
    std::string file;
    int degree = 1;
    int n_knots = 4;
    double offset = 0.01;
    bool uniform = false;
    std::optional<double> hi;

    void add(CLI::App* cmd) {
        cmd->add_option("--knots", file, "Knot JSON {degree, knots}, or a list of them per axis");
        cmd->add_option("--degree,-k", degree, "Spline degree when generating knots")->check(CLI::Range(0, 8));
        cmd->add_option("--n-knots", n_knots, "Interior knots when generating knots")->check(CLI::Range(0, 10000));
        cmd->add_option("--offset", offset, "Offset b of the offset-log knot grid")->check(CLI::PositiveNumber);
        cmd->add_flag("--uniform", uniform, "Equally spaced knots instead of offset-log (always used on symmetric axes)");
        cmd->add_option("--hi", hi, "Upper end of the knot grid (default: Nyquist)");
    }

    // Offset-log grids need lo + offset > 0; symmetric axes fall back to uniform.
    KnotVector generate(double lo, double hi_default) const {
        const double top = hi.value_or(hi_default);
        return uniform || lo + offset <= 0.0 ? make_knots_uniform(lo, top, n_knots + 2, degree)
                                             : make_knots_offset_log(lo, top, n_knots + 2, offset, degree);
    }

    std::vector<KnotVector> resolve(Run& run, int axes, const std::vector<double>& spacing, bool real) const {
        std::vector<KnotVector> out;
        if (!file.empty()) {
            const auto j = run.read_json(file);
            if (j.is_array()) {
                for (const auto& item : j) out.push_back(knots_from_json(item));
            } else {
                out.assign(static_cast<std::size_t>(axes), knots_from_json(j));
            }
            if (static_cast<int>(out.size()) != axes)
                throw FormatError(file + ": expected " + std::to_string(axes) + " knot vectors, got " +
                                  std::to_string(out.size()));
            return out;
        }
        for (int a = 0; a < axes; ++a) {
            const double nyquist = 0.5 / spacing[static_cast<std::size_t>(a)];
            out.push_back(generate(real && a == 0 ? 0.0 : -nyquist, nyquist));
        }
        return out;
    }
};

// ---------------------------------------------------------------- subcommands

struct SimulateArgs {
    std::string matern, bivariate, model, out;
    int n = 1000;
    double delta = 1.0;
    std::uint64_t seed = 1;
};

void run_simulate(const SimulateArgs& a, Run& run) {
    const int sources = !a.matern.empty() + !a.bivariate.empty() + !a.model.empty();
    if (sources != 1) throw UsageError("simulate needs exactly one of --matern, --bivariate, --model");
    run.seed = a.seed;
    run.parameters = {{"n", a.n}, {"delta", a.delta}, {"seed", a.seed}};
    SeriesData data;
    data.origin = {0.0};
    data.spacing = {a.delta};
    data.shape = {a.n};
    if (!a.matern.empty()) {
        auto kv = parse_key_values(a.matern, "--matern");
        const MaternSpec spec{take(kv, "var", 1.0), take(kv, "ell", 1.0), take(kv, "nu", 1.5)};
        reject_leftovers(kv, "--matern");
        validate(spec);
        run.parameters["matern"] = {{"var", spec.variance}, {"ell", spec.length_scale}, {"nu", spec.nu}};
        const auto y = sample_gp([&](double t) { return matern_acf(spec, t); }, a.n, a.delta, a.seed);
        data.values = Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
        data.value_columns = {"y"};
    } else if (!a.bivariate.empty()) {
        auto kv = parse_key_values(a.bivariate, "--bivariate");
        const BivariateMaternSpec spec(take(kv, "var1", 1.0), take(kv, "var2", 1.0), take(kv, "nu11", 2.0),
                                       take(kv, "nu22", 1.0), take(kv, "nu12", 1.5), take(kv, "ell", 2.0),
                                       take(kv, "lambda", 0.0));
        reject_leftovers(kv, "--bivariate");
        run.parameters["bivariate"] = {{"var1", spec.variance1()}, {"var2", spec.variance2()},
                                       {"nu11", spec.nu11()},      {"nu22", spec.nu22()},
                                       {"nu12", spec.nu12()},      {"ell", spec.length_scale()},
                                       {"lambda", spec.lambda12()}};
        data.values = sample_gp_multivariate(
            [&](double t) -> Eigen::MatrixXd { return bivariate_matern_acf(spec, t); }, 2, a.n, a.delta, a.seed);
        data.value_columns = {"y1", "y2"};
    } else {
        const auto model = model_from_json(run.read_json(a.model));
        if (const auto* m = std::get_if<SplinePsdModel>(&model)) {
            if (!m->real_process()) throw UsageError("simulate: --model must be a real-process model");
            const auto y = sample_gp([&](double t) { return m->acf(t).real(); }, a.n, a.delta, a.seed);
            data.values = Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
            data.value_columns = {"y"};
        } else if (const auto* mm = std::get_if<MatrixSplinePsdModel>(&model)) {
            if (!mm->real_process()) throw UsageError("simulate: --model must be a real-process model");
            data.values = sample_gp_multivariate(
                [&](double t) -> Eigen::MatrixXd { return mm->acf(t).real(); }, mm->dim(), a.n, a.delta, a.seed);
            for (int r = 0; r < mm->dim(); ++r) data.value_columns.push_back("y" + std::to_string(r + 1));
        } else {
            throw UsageError("simulate: tensor models are not supported, use a uni or multi model");
        }
    }
    run.write(a.out, series_to_csv(data));
}

struct SeriesArgs {
    std::string series;
    int dim = 1;
    int component = 0;
    bool demean = false;

    void add(CLI::App* cmd) {
        cmd->add_option("--series", series, "Series CSV")->required();
        cmd->add_option("--dim", dim, "Coordinate axes in the series file")->check(CLI::Range(1, 2));
        cmd->add_option("--component", component, "Value column to use (0-based, 1-D series)")
            ->check(CLI::NonNegativeNumber);
        cmd->add_flag("--demean", demean, "Subtract the sample mean");
    }

    SeriesData load(Run& run) const {
        auto data = parse_series_csv(run.read_input(series), dim);
        if (component >= data.values.cols() && dim == 1)
            throw UsageError("--component " + std::to_string(component) + " but the series has " +
                             std::to_string(data.values.cols()) + " value columns");
        return data;
    }

    Periodogram periodogram_of(const SeriesData& data) const {
        if (data.dim == 2) return periodogram_2d(data.values, data.spacing[0], data.spacing[1], demean);
        const Eigen::VectorXd col = data.values.col(component);
        return periodogram(std::span<const double>(col.data(), static_cast<std::size_t>(col.size())),
                           data.spacing[0], demean);
    }
};

void run_periodogram(const SeriesArgs& s, const std::string& out, Run& run) {
    const auto data = s.load(run);
    const auto pg = s.periodogram_of(data);
    std::ostringstream csv;
    if (pg.dim() == 1) {
        csv << "l,omega,omega_centred,value\n";
        for (int l = 0; l < pg.shape[0]; ++l)
            csv << l << ',' << format_double(pg.frequency(0, l)) << ',' << format_double(pg.centred_frequency(0, l))
                << ',' << format_double(pg.values[static_cast<std::size_t>(l)]) << '\n';
    } else {
        csv << "l1,l2,omega1,omega2,value\n";
        for (int a = 0; a < pg.shape[0]; ++a)
            for (int b = 0; b < pg.shape[1]; ++b)
                csv << a << ',' << b << ',' << format_double(pg.centred_frequency(0, a)) << ','
                    << format_double(pg.centred_frequency(1, b)) << ','
                    << format_double(pg.values[static_cast<std::size_t>(a) * static_cast<std::size_t>(pg.shape[1]) +
                                               static_cast<std::size_t>(b)])
                    << '\n';
    }
    run.parameters = {{"dim", s.dim}, {"component", s.component}, {"demean", s.demean}};
    run.write(out, csv.str());
}

struct FitArgs {
    SeriesArgs series;
    KnotArgs knots;
    std::string options, out, report;
    bool complex_process = false;
    std::optional<double> floor_rel, grad_tol;
    std::optional<int> max_iter;
    std::vector<double> band;
    bool numerical_gradient = false;
};

void write_fit(const FitArgs& a, Run& run, const AnyModel& model, const FitReport& report) {
    ModelMetadata meta;
    meta.created = utc_timestamp();
    meta.provenance = run.provenance();
    meta.extra = {{"objective", report.objective}, {"converged", report.converged}};
    run.write(a.out, dump_json(model_to_json(model, meta)));
    if (!a.report.empty()) run.write(a.report, dump_json(to_json(report)));
    std::cout << "objective " << format_double(report.objective) << " iterations " << report.iterations
              << (report.converged ? " converged" : " not converged: " + report.message) << '\n';
}

void run_fit_whittle(const FitArgs& a, Run& run) {
    WhittleOptions opts;
    if (!a.options.empty()) opts = whittle_options_from_json(run.read_json(a.options), opts);
    if (a.floor_rel) opts.floor_rel = *a.floor_rel;
    if (a.grad_tol) opts.grad_tol = *a.grad_tol;
    if (a.max_iter) opts.max_iter = *a.max_iter;
    if (!a.band.empty()) {
        if (a.band.size() != 2) throw UsageError("--band takes two values: lo hi");
        opts.band = std::make_pair(a.band[0], a.band[1]);
    }
    const auto data = a.series.load(run);
    const auto pg = a.series.periodogram_of(data);
    const bool real = !a.complex_process;
    const auto axes = a.knots.resolve(run, pg.dim(), pg.spacing, real);
    run.parameters = {{"whittle", to_json(opts)}, {"real_process", real}, {"demean", a.series.demean},
                      {"dim", a.series.dim}, {"component", a.series.component}};
    json knots = json::array();
    for (const auto& kv : axes) knots.push_back(knots_to_json(kv));
    run.parameters["knots"] = std::move(knots);
    if (pg.dim() == 1) {
        const auto fit = fit_whittle(pg, axes[0], real, {}, opts);
        write_fit(a, run, fit.model, fit.report);
    } else {
        const auto fit = fit_whittle(pg, axes, real, {}, opts);
        write_fit(a, run, fit.model, fit.report);
    }
}

void run_fit_mle(const FitArgs& a, Run& run) {
    if (a.series.dim != 1) throw UsageError("fit-mle takes 1-D series");
    MleOptions opts;
    if (!a.options.empty()) opts = mle_options_from_json(run.read_json(a.options), opts);
    if (a.grad_tol) opts.bfgs.grad_tol = *a.grad_tol;
    if (a.max_iter) opts.bfgs.max_iter = *a.max_iter;
    if (a.series.demean) opts.demean = true;
    if (a.numerical_gradient) opts.analytic_gradient = false;
    if (a.complex_process) throw UsageError("fit-mle fits real processes only");
    const auto data = a.series.load(run);
    const auto kv = a.knots.resolve(run, 1, data.spacing, true)[0];
    run.parameters = {{"mle", to_json(opts)}, {"knots", knots_to_json(kv)}};
    if (data.values.cols() == 1) {
        const Eigen::VectorXd y = data.values.col(0);
        const auto fit = fit_mle_gaussian(std::span<const double>(y.data(), static_cast<std::size_t>(y.size())),
                                          data.spacing[0], kv, {}, opts);
        write_fit(a, run, fit.model, fit.report);
    } else {
        const auto fit = fit_mle_gaussian(data.values, data.spacing[0], kv, {}, opts);
        write_fit(a, run, fit.model, fit.report);
    }
}

struct EvalArgs {
    std::string model, out;
    std::vector<std::string> at;
    std::vector<std::string> grid;
    std::size_t max_points = 1'000'000;
};

void run_eval(const EvalArgs& a, GridQuantity what, Run& run) {
    const auto model = model_from_json(run.read_json(a.model));
    const std::string flag = what == GridQuantity::psd ? "--omega" : "--tau";
    if (a.at.empty() == a.grid.empty()) throw UsageError("give either " + flag + " points or --grid axes");
    run.parameters = {{"quantity", what == GridQuantity::psd ? "psd" : "acf"}, {"points", a.at}, {"grid", a.grid}};
    std::string csv;
    if (!a.grid.empty()) {
        std::vector<GridAxis> axes;
        for (const auto& g : a.grid) axes.push_back(parse_axis(g, "--grid"));
        csv = export_grid(model, axes, what, a.max_points);
    } else {
        std::ostringstream out;
        for (const auto& text : a.at) {
            const auto p = parse_point(text, flag);
            std::visit(
                [&](const auto& m) {
                    using T = std::decay_t<decltype(m)>;
                    if constexpr (std::is_same_v<T, TensorPsdModel>) {
                        if (static_cast<int>(p.size()) != m.dim())
                            throw UsageError(flag + ": model has " + std::to_string(m.dim()) + " axes, point '" +
                                             text + "' has " + std::to_string(p.size()));
                    } else if (p.size() != 1) {
                        throw UsageError(flag + ": a 1-D model takes one value per point");
                    }
                },
                model);
            std::vector<GridAxis> axes;
            for (double v : p) axes.push_back({v, v, 1});
            auto rows = export_grid(model, axes, what, a.max_points);
            if (out.tellp() > 0) rows = rows.substr(rows.find('\n') + 1);
            out << rows;
        }
        csv = out.str();
    }
    if (a.out.empty())
        std::cout << csv;
    else
        run.write(a.out, csv);
}

struct Bench1Args {
    std::string config, out, replications;
    std::vector<double> ells;
    std::vector<int> ks, knots;
    std::optional<int> reps, n;
    std::optional<std::uint64_t> seed;
    std::string demean;
    bool no_empirical = false;
};

void run_bench1(const Bench1Args& a, Run& run) {
    Table1Config c;
    if (!a.config.empty()) c = table1_config_from_json(run.read_json(a.config), c);
    if (!a.ells.empty()) c.ells = a.ells;
    if (!a.ks.empty()) c.degrees = a.ks;
    if (!a.knots.empty()) c.n_knots = a.knots;
    if (a.reps) c.reps = *a.reps;
    if (a.n) c.n = *a.n;
    if (a.seed) c.seed = *a.seed;
    if (a.no_empirical) c.empirical = false;
    if (a.demean == "true") c.demean = {true};
    else if (a.demean == "false") c.demean = {false};
    else if (a.demean == "both") c.demean = {false, true};
    else if (!a.demean.empty()) throw UsageError("--demean takes true, false or both");
    c.threads = run.threads;
    run.seed = c.seed;
    run.parameters = to_json(c);
    const auto rows = run_table1_benchmark(c);
    run.write(a.out, table1_to_csv(rows));
    if (!a.replications.empty()) run.write(a.replications, table1_replications_csv(rows));
}

struct Bench2Args {
    std::string config, out, replications;
    std::vector<double> lambdas;
    std::vector<int> ks;
    std::optional<int> knots, reps, n;
    std::optional<std::uint64_t> seed;
    bool no_empirical = false, no_parametric = false;
};

void run_bench2(const Bench2Args& a, Run& run) {
    Table2Config c;
    if (!a.config.empty()) c = table2_config_from_json(run.read_json(a.config), c);
    if (!a.lambdas.empty()) c.lambdas = a.lambdas;
    if (!a.ks.empty()) c.degrees = a.ks;
    if (a.knots) c.n_knots = *a.knots;
    if (a.reps) c.reps = *a.reps;
    if (a.n) c.n = *a.n;
    if (a.seed) c.seed = *a.seed;
    if (a.no_empirical) c.empirical = false;
    if (a.no_parametric) c.parametric = false;
    c.threads = run.threads;
    run.seed = c.seed;
    run.parameters = to_json(c);
    const auto rows = run_table2_benchmark(c);
    run.write(a.out, table2_to_csv(rows));
    if (!a.replications.empty()) run.write(a.replications, table2_replications_csv(rows));
}

struct JacksonArgs {
    std::vector<int> ks{0, 1, 2};
    double width = 0.15, lo = -0.5, hi = 0.5, h0 = 0.025;
    int halvings = 5;
    std::string out, tail;
};

void run_jackson(const JacksonArgs& a, Run& run) {
    if (!(a.width > 0.0)) throw UsageError("--width must be positive");
    if (!(a.hi > a.lo)) throw UsageError("--lo must be below --hi");
    std::vector<double> h;
    for (int j = 0; j <= a.halvings; ++j) h.push_back(a.h0 / std::pow(2.0, j));
    const auto target = [w = a.width](double x) { return std::exp(-x * x / (2.0 * w * w)); };
    run.parameters = {{"degrees", a.ks}, {"width", a.width}, {"lo", a.lo}, {"hi", a.hi}, {"h", h}};
    std::ostringstream csv;
    csv << "k,h,l1_error,slope\n";
    for (int k : a.ks) {
        const auto study = jackson_rate_study(target, a.lo, a.hi, k, h);
        for (std::size_t j = 0; j < study.h.size(); ++j)
            csv << k << ',' << format_double(study.h[j]) << ',' << format_double(study.l1_error[j]) << ','
                << format_double(study.slope) << '\n';
        std::cout << "k=" << k << " slope " << format_double(study.slope) << '\n';
    }
    run.write(a.out, csv.str());
    if (!a.tail.empty()) {
        auto model = [&](int points) {
            const KnotVector kv = make_knots_uniform(0.0, a.hi, points, 2);
            return SplinePsdModel(kv, quasi_interpolant(kv, target), true);
        };
        const auto scan = tail_decay_scan(model(11), model(81), 10.0, 1000.0, 400, 2);
        std::ostringstream t;
        t << "tau,scaled_error\n";
        for (std::size_t j = 0; j < scan.tau.size(); ++j)
            t << format_double(scan.tau[j]) << ',' << format_double(scan.scaled[j]) << '\n';
        run.write(a.tail, t.str());
        std::cout << "tail scan " << (scan.bounded ? "bounded" : "growing") << '\n';
    }
}

struct SeparabilityArgs {
    std::string model, out;
    std::string tau1 = "0:10:41", tau2 = "0:10:41";
    std::size_t max_points = 1'000'000;
};

void run_separability(const SeparabilityArgs& a, Run& run) {
    const auto model = model_from_json(run.read_json(a.model));
    const auto* tensor = std::get_if<TensorPsdModel>(&model);
    if (!tensor || tensor->dim() != 2) throw UsageError("separability needs a 2-D tensor model");
    run.parameters = {{"tau1", a.tau1}, {"tau2", a.tau2}};
    run.write(a.out, export_grid(model, {parse_axis(a.tau1, "--tau1"), parse_axis(a.tau2, "--tau2")},
                                 GridQuantity::separability_diff, a.max_points));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spline spectral kernels: simulate, fit and evaluate stationary covariance models"};
    app.require_subcommand(1);
    Run run;
    for (int i = 1; i < argc; ++i) run.argv.emplace_back(argv[i]);
    int threads = 0;
    std::string manifest;
    app.add_option("--threads", threads, "Worker threads (default: SPLINEKERNEL_THREADS or all cores)")
        ->check(CLI::NonNegativeNumber);
    app.add_option("--manifest", manifest, "Run manifest path (default: <output>.manifest.json)");

    SimulateArgs sim;
    auto* simulate = app.add_subcommand("simulate", "Draw a stationary Gaussian series");
    simulate->add_option("--matern", sim.matern, "Matérn kernel, e.g. nu=1.5,ell=2,var=1");
    simulate->add_option("--bivariate", sim.bivariate, "Bivariate Matérn, keys var1 var2 nu11 nu22 nu12 ell lambda");
    simulate->add_option("--model", sim.model, "Real-process spline model JSON");
    simulate->add_option("--n", sim.n, "Series length")->check(CLI::PositiveNumber);
    simulate->add_option("--delta", sim.delta, "Sample spacing")->check(CLI::PositiveNumber);
    simulate->add_option("--seed", sim.seed, "Random seed");
    simulate->add_option("--out,-o", sim.out, "Output CSV")->required();

    SeriesArgs pg_args;
    std::string pg_out;
    auto* pg = app.add_subcommand("periodogram", "Periodogram of a series file");
    pg_args.add(pg);
    pg->add_option("--out,-o", pg_out, "Output CSV")->required();

    FitArgs whittle_args;
    auto* fit_w = app.add_subcommand("fit-whittle", "Fit spline PSD coefficients by Whittle likelihood");
    FitArgs mle_args;
    auto* fit_m = app.add_subcommand("fit-mle", "Fit spline PSD coefficients by exact Gaussian likelihood");
    for (auto [cmd, args] : {std::pair{fit_w, &whittle_args}, std::pair{fit_m, &mle_args}}) {
        args->series.add(cmd);
        args->knots.add(cmd);
        cmd->add_option("--options", args->options, "Options JSON");
        cmd->add_option("--grad-tol", args->grad_tol, "Gradient tolerance")->check(CLI::PositiveNumber);
        cmd->add_option("--max-iter", args->max_iter, "Iteration cap")->check(CLI::PositiveNumber);
        cmd->add_option("--out,-o", args->out, "Fitted model JSON")->required();
        cmd->add_option("--report", args->report, "Fit report JSON");
    }
    fit_w->add_flag("--complex", whittle_args.complex_process, "Complex-valued process (no symmetrisation)");
    fit_w->add_option("--floor", whittle_args.floor_rel, "PSD floor relative to max periodogram")
        ->check(CLI::NonNegativeNumber);
    fit_w->add_option("--band", whittle_args.band, "Frequency band lo hi (centred |omega|)")->expected(2);
    fit_m->add_flag("--numerical-gradient", mle_args.numerical_gradient, "Central-difference gradients");

    EvalArgs acf_args, psd_args;
    auto* eval_acf = app.add_subcommand("eval-acf", "Evaluate a model ACF");
    auto* eval_psd = app.add_subcommand("eval-psd", "Evaluate a model PSD");
    for (auto [cmd, args, flag] : {std::tuple{eval_acf, &acf_args, "--tau"}, std::tuple{eval_psd, &psd_args, "--omega"}}) {
        cmd->add_option("--model", args->model, "Model JSON")->required();
        cmd->add_option(flag, args->at, "Point(s); comma-separated coordinates for tensor models")
            ->allow_extra_args(false);
        cmd->add_option("--grid", args->grid, "Grid axis lo:hi:points, one per model axis");
        cmd->add_option("--max-points", args->max_points, "Grid size cap");
        cmd->add_option("--out,-o", args->out, "Output CSV (default: stdout)");
    }

    Bench1Args b1;
    auto* bench1 = app.add_subcommand("bench-table1", "Univariate Matérn-3/2 benchmark");
    bench1->add_option("--config", b1.config, "Benchmark config JSON");
    bench1->add_option("--ell", b1.ells, "Length scales");
    bench1->add_option("--k", b1.ks, "Spline degrees");
    bench1->add_option("--knots", b1.knots, "Interior knot counts");
    bench1->add_option("--reps", b1.reps, "Replications")->check(CLI::PositiveNumber);
    bench1->add_option("--n", b1.n, "Series length")->check(CLI::PositiveNumber);
    bench1->add_option("--seed", b1.seed, "Master seed");
    bench1->add_option("--demean", b1.demean, "true, false or both");
    bench1->add_flag("--no-empirical", b1.no_empirical, "Skip the empirical ACF rows");
    bench1->add_option("--out,-o", b1.out, "Summary CSV")->required();
    bench1->add_option("--replications", b1.replications, "Per-replication CSV");

    Bench2Args b2;
    auto* bench2 = app.add_subcommand("bench-table2", "Bivariate Matérn benchmark");
    bench2->add_option("--config", b2.config, "Benchmark config JSON");
    bench2->add_option("--lambda", b2.lambdas, "Cross-correlations lambda12");
    bench2->add_option("--k", b2.ks, "Spline degrees");
    bench2->add_option("--knots", b2.knots, "Interior knot count");
    bench2->add_option("--reps", b2.reps, "Replications")->check(CLI::PositiveNumber);
    bench2->add_option("--n", b2.n, "Series length")->check(CLI::PositiveNumber);
    bench2->add_option("--seed", b2.seed, "Master seed");
    bench2->add_flag("--no-empirical", b2.no_empirical, "Skip the empirical estimator");
    bench2->add_flag("--no-parametric", b2.no_parametric, "Skip the parametric ML estimator");
    bench2->add_option("--out,-o", b2.out, "Summary CSV")->required();
    bench2->add_option("--replications", b2.replications, "Per-replication CSV");

    JacksonArgs ja;
    auto* jackson = app.add_subcommand("jackson", "Quasi-interpolation convergence rates on a Gaussian bump");
    jackson->add_option("--k", ja.ks, "Spline degrees");
    jackson->add_option("--width", ja.width, "Bump standard deviation");
    jackson->add_option("--lo", ja.lo, "Lower end of the error interval");
    jackson->add_option("--hi", ja.hi, "Upper end of the error interval");
    jackson->add_option("--h0", ja.h0, "Coarsest knot spacing")->check(CLI::PositiveNumber);
    jackson->add_option("--halvings", ja.halvings, "Number of halvings")->check(CLI::Range(1, 20));
    jackson->add_option("--out,-o", ja.out, "Error CSV")->required();
    jackson->add_option("--tail", ja.tail, "Also write the quadratic-spline ACF tail scan CSV");

    SeparabilityArgs sa;
    auto* sep = app.add_subcommand("separability", "Non-separable minus separable ACF, normalised by variance");
    sep->add_option("--model", sa.model, "2-D tensor model JSON")->required();
    sep->add_option("--tau1", sa.tau1, "Axis 1 lags lo:hi:points");
    sep->add_option("--tau2", sa.tau2, "Axis 2 lags lo:hi:points");
    sep->add_option("--max-points", sa.max_points, "Grid size cap");
    sep->add_option("--out,-o", sa.out, "Output CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    const auto started = utc_timestamp();
    run.threads = threads > 0 ? threads : default_thread_count();
    run.command = app.get_subcommands().front()->get_name();
    int code = 0;
    std::string status = "ok", message;
    try {
        if (simulate->parsed()) run_simulate(sim, run);
        else if (pg->parsed()) run_periodogram(pg_args, pg_out, run);
        else if (fit_w->parsed()) run_fit_whittle(whittle_args, run);
        else if (fit_m->parsed()) run_fit_mle(mle_args, run);
        else if (eval_acf->parsed()) run_eval(acf_args, GridQuantity::acf, run);
        else if (eval_psd->parsed()) run_eval(psd_args, GridQuantity::psd, run);
        else if (bench1->parsed()) run_bench1(b1, run);
        else if (bench2->parsed()) run_bench2(b2, run);
        else if (jackson->parsed()) run_jackson(ja, run);
        else if (sep->parsed()) run_separability(sa, run);
    } catch (const NumericalError& e) {
        code = 1, status = "numeric_failure", message = e.what();
    } catch (const UsageError& e) {
        code = 2, status = "usage_error", message = e.what();
    } catch (const FormatError& e) {
        code = 2, status = "usage_error", message = e.what();
    } catch (const std::invalid_argument& e) {
        code = 2, status = "usage_error", message = e.what();
    } catch (const std::length_error& e) {
        code = 2, status = "usage_error", message = e.what();
    } catch (const std::exception& e) {
        code = 1, status = "failure", message = e.what();
    }
    if (code != 0) std::cerr << "splinekernel " << run.command << ": " << message << '\n';

    json m = {{"command", run.command}, {"argv", run.argv},     {"started", started},
              {"finished", utc_timestamp()}, {"status", status}, {"exit_code", code},
              {"threads", run.threads},  {"parameters", run.parameters}, {"inputs", run.inputs},
              {"outputs", run.outputs},  {"build", build_info()}};
    if (run.seed) m["seed"] = *run.seed;
    if (!message.empty()) m["message"] = message;
    if (manifest.empty()) {
        std::string primary;
        for (const auto* cmd : app.get_subcommands())
            for (const auto* opt : cmd->get_options())
                if (opt->check_lname("out") && opt->count() > 0) primary = opt->as<std::string>();
        manifest = primary.empty() ? "splinekernel_run.manifest.json" : primary + ".manifest.json";
    }
    try {
        write_file_atomic(manifest, dump_json(m));
    } catch (const std::exception& e) {
        std::cerr << "splinekernel: cannot write manifest " << manifest << ": " << e.what() << '\n';
        if (code == 0) code = 1;
    }
    return code;
}
