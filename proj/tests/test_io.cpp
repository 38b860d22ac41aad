#include <cmath>
#include <complex>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "splinekernel/io.hpp"
#include "splinekernel/knots.hpp"

using namespace splinekernel;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("splinekernel_test_io_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> fields;
        std::istringstream ls(line);
        std::string f;
        while (std::getline(ls, f, ',')) fields.push_back(f);
        if (!line.empty() && line.back() == ',') fields.emplace_back();
        rows.push_back(fields);
    }
    return rows;
}

const KnotVector kKnots = make_knots_offset_log(0.0, 0.5, 6, 0.01, 2);

MatrixSplinePsdModel bivariate_model() {
    const KnotVector kv = make_knots_uniform(-0.5, 0.5, 5, 1);
    std::vector<Eigen::MatrixXcd> c;
    for (int i = 0; i < kv.num_basis(); ++i) {
        Eigen::MatrixXcd l(2, 2);
        l << 1.0 + 0.1 * i, 0.0, std::complex<double>(0.3, -0.2 * i), 0.7;
        c.push_back(l * l.adjoint());
    }
    return MatrixSplinePsdModel(kv, c).with_phase_delay(0, 1, 0.75);
}

TensorPsdModel tensor_model(bool rank_one) {
    const KnotVector a = make_knots_uniform(-0.5, 0.5, 4, 1);
    const KnotVector b = make_knots_uniform(-0.5, 0.5, 5, 2);
    std::vector<double> c;
    for (int i = 0; i < a.num_basis(); ++i)
        for (int j = 0; j < b.num_basis(); ++j)
            c.push_back(rank_one ? (1.0 + i) * (2.0 + j * j) : 1.0 + i * j + (i == j ? 3.0 : 0.0));
    return TensorPsdModel({a, b}, c);
}

}  // namespace

TEST_CASE("format_double round-trips and spells out non-finite values") {
    for (double x : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23}) CHECK(std::stod(format_double(x)) == x);
    CHECK(format_double(std::numeric_limits<double>::quiet_NaN()) == "nan");
    CHECK(format_double(std::numeric_limits<double>::infinity()) == "inf");
    CHECK(format_double(-std::numeric_limits<double>::infinity()) == "-inf");
}

TEST_CASE("atomic write replaces the file and leaves no temporaries") {
    const auto dir = scratch_dir("atomic");
    const auto path = dir / "sub" / "out.txt";
    write_file_atomic(path, "first");
    write_file_atomic(path, "second");
    CHECK(read_file(path) == "second");
    int entries = 0;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir / "sub")) ++entries;
    CHECK(entries == 1);
    CHECK_THROWS(read_file(dir / "missing.txt"));
}

TEST_CASE("knots and univariate models survive a JSON round trip exactly") {
    CHECK(knots_from_json(knots_to_json(kKnots)) == kKnots);
    const SplinePsdModel m(kKnots, {0.5, 1.0 / 3.0, 2.0, 0.0, 1e-7, 4.25, 0.125}, true);
    ModelMetadata meta{"2026-01-01T00:00:00Z", "unit test", 42, {{"note", "x"}}};
    const auto j = json::parse(dump_json(model_to_json(m, meta)));
    CHECK(j["kind"] == "uni");
    const auto back = std::get<SplinePsdModel>(model_from_json(j));
    CHECK(back.knots() == m.knots());
    CHECK(back.coeffs() == m.coeffs());
    CHECK(back.real_process());
    const auto meta2 = metadata_from_json(j);
    CHECK(meta2.seed == std::optional<std::uint64_t>(42));
    CHECK(meta2.provenance == "unit test");
    CHECK(dump_json(model_to_json(back, meta2)) == dump_json(j));
}

TEST_CASE("matrix and tensor models survive a JSON round trip") {
    const auto mm = bivariate_model();
    const auto mb = std::get<MatrixSplinePsdModel>(model_from_json(json::parse(dump_json(model_to_json(mm)))));
    REQUIRE(mb.coeffs().size() == mm.coeffs().size());
    for (std::size_t i = 0; i < mm.coeffs().size(); ++i) CHECK(mb.coeffs()[i] == mm.coeffs()[i]);
    CHECK(mb.delays() == mm.delays());
    for (double tau : {0.0, 0.8, -2.3}) CHECK((mb.acf(tau) - mm.acf(tau)).norm() == 0.0);

    const auto tm = tensor_model(false);
    const auto tb = std::get<TensorPsdModel>(model_from_json(json::parse(dump_json(model_to_json(tm)))));
    CHECK(tb.shape() == tm.shape());
    CHECK(tb.coeffs() == tm.coeffs());
    const std::vector<double> tau{0.4, -1.1};
    CHECK(tb.acf(tau) == tm.acf(tau));
}

TEST_CASE("model readers reject malformed documents") {
    auto j = model_to_json(SplinePsdModel(kKnots, std::vector<double>(7, 1.0)));
    auto bad = j;
    bad["kind"] = "quad";
    CHECK_THROWS_AS(model_from_json(bad), FormatError);
    bad = j;
    bad["coeffs"].push_back(1.0);
    CHECK_THROWS(model_from_json(bad));
    bad = j;
    bad.erase("knots");
    CHECK_THROWS_AS(model_from_json(bad), FormatError);
    bad = j;
    bad["coeffs"][0] = "one";
    CHECK_THROWS_AS(model_from_json(bad), FormatError);
    bad = j;
    bad["surprise"] = 1;
    CHECK_THROWS_AS(model_from_json(bad), FormatError);
}

TEST_CASE("hierarchical and T-mesh specifications round trip") {
    const KnotVector grid = make_knots_uniform(0.0, 3.0, 4, 1);
    const std::vector<RefinementRegion> regions{{1, Box{{{1.5, 3.0}, {1.5, 3.0}}}}, {2, Box{{{1.5, 2.25}, {1.5, 2.25}}}}};
    const auto hb = hierarchical_from_json(json::parse(dump_json(hierarchical_to_json({grid, grid}, regions))));
    const auto direct = build_hierarchical({grid, grid}, regions);
    CHECK(hb.num_active() == direct.num_active());
    CHECK(hb.num_levels() == direct.num_levels());
    CHECK(hierarchical_to_json({grid, grid}, hb.regions()) == hierarchical_to_json({grid, grid}, regions));

    const TMesh mesh({{0, 0, 3}, {1, 0, 1}, {2, 0, 3}, {3, 0, 3}}, {{0, 0, 3}, {1, 0, 3}, {2, 2, 3}, {3, 0, 3}}, 1);
    const auto j = tmesh_to_json(mesh);
    const auto back = tmesh_from_json(json::parse(dump_json(j)));
    CHECK(tmesh_to_json(back) == j);
    CHECK(back.anchors() == mesh.anchors());
    CHECK(back.t_junctions() == mesh.t_junctions());
}

TEST_CASE("option and benchmark configs round trip and reject unknown keys") {
    WhittleOptions w;
    w.band = std::make_pair(0.05, 0.4);
    w.max_iter = 17;
    const auto w2 = whittle_options_from_json(to_json(w));
    CHECK(w2.band == w.band);
    CHECK(w2.max_iter == 17);
    CHECK_FALSE(whittle_options_from_json(to_json(WhittleOptions{})).band.has_value());

    MleOptions m;
    m.demean = true;
    m.bfgs.max_iter = 33;
    m.analytic_gradient = false;
    CHECK(to_json(mle_options_from_json(to_json(m))) == to_json(m));

    Table1Config t1;
    t1.ells = {1.0, 5.0};
    t1.demean = {false, true};
    CHECK(to_json(table1_config_from_json(to_json(t1))) == to_json(t1));
    Table2Config t2;
    t2.lambdas = {0.25};
    t2.parametric = false;
    CHECK(to_json(table2_config_from_json(to_json(t2))) == to_json(t2));

    CHECK(table1_config_from_json(json{{"reps", 7}}).n == Table1Config{}.n);
    CHECK_THROWS_AS(table1_config_from_json(json{{"repz", 7}}), FormatError);
    CHECK_THROWS_AS(whittle_options_from_json(json{{"band", {1.0}}}), FormatError);
}

TEST_CASE("series CSV parsing") {
    const auto one = parse_series_csv("t,y1,y2\n0.5,1,2\n1.0,3,4\n1.5,5,6\n");
    CHECK(one.value_columns == std::vector<std::string>{"y1", "y2"});
    CHECK(one.spacing[0] == doctest::Approx(0.5));
    CHECK(one.origin[0] == 0.5);
    CHECK(one.values.rows() == 3);
    CHECK(one.values(2, 1) == 6.0);
    CHECK(parse_series_csv(series_to_csv(one)).values == one.values);

    CHECK_THROWS_AS(parse_series_csv("t,y\n0,1\n1,2\n3,3\n"), FormatError);
    CHECK_THROWS_AS(parse_series_csv("t,y\n0,1\n1,x\n"), FormatError);
    CHECK_THROWS_AS(parse_series_csv("t,y\n0,1\n1\n"), FormatError);
    CHECK_THROWS_AS(parse_series_csv("t,y\n1,1\n0,2\n"), FormatError);
    CHECK_THROWS_AS(parse_series_csv(""), FormatError);

    const auto two = parse_series_csv("x1,x2,v\n1,0,3\n0,0,1\n0,2,2\n1,2,4\n", 2);
    CHECK(two.shape == std::vector<int>{2, 2});
    CHECK(two.spacing[1] == 2.0);
    CHECK(two.values(0, 0) == 1.0);
    CHECK(two.values(0, 1) == 2.0);
    CHECK(two.values(1, 0) == 3.0);
    CHECK(two.values(1, 1) == 4.0);
    CHECK_THROWS_AS(parse_series_csv("x1,x2,v\n0,0,1\n0,1,2\n1,0,3\n", 2), FormatError);
}

TEST_CASE("grid export matches direct evaluation") {
    const SplinePsdModel m(kKnots, {0.5, 1.0, 2.0, 0.7, 0.1, 0.3, 0.2}, true);
    const auto rows = csv_rows(export_grid(m, {{0.0, 4.0, 9}}, GridQuantity::acf));
    REQUIRE(rows.size() == 10);
    CHECK(rows[0] == std::vector<std::string>{"tau", "value", "imag"});
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const double tau = std::stod(rows[i][0]);
        CHECK(std::stod(rows[i][1]) == acf_eval(m, tau).real());
    }
    const auto single = csv_rows(export_grid(m, {{0.2, 0.2, 1}}, GridQuantity::psd));
    REQUIRE(single.size() == 2);
    CHECK(std::stod(single[1][1]) == m.psd(0.2));

    const auto multi = csv_rows(export_grid(bivariate_model(), {{1.0, 1.0, 1}}, GridQuantity::acf));
    CHECK(multi.size() == 5);
    CHECK(multi[0][1] == "r");

    CHECK_THROWS_AS(export_grid(m, {{0.0, 1.0, 2000}}, GridQuantity::acf, 1000), std::length_error);
    CHECK_THROWS(export_grid(m, {{0.0, 1.0, 2}}, GridQuantity::separability_diff));
    CHECK(grid_quantity_from_string("separability-diff") == GridQuantity::separability_diff);
    CHECK_THROWS(grid_quantity_from_string("spectrum"));
}

TEST_CASE("separability difference vanishes for a rank-one tensor model") {
    const auto rows = csv_rows(export_grid(tensor_model(true), {{0.0, 6.0, 7}, {-3.0, 3.0, 5}},
                                           GridQuantity::separability_diff));
    REQUIRE(rows.size() == 36);
    for (std::size_t i = 1; i < rows.size(); ++i) CHECK(std::abs(std::stod(rows[i][2])) < 1e-10);
    double worst = 0.0;
    for (const auto& r : csv_rows(export_grid(tensor_model(false), {{0.0, 6.0, 7}, {-3.0, 3.0, 5}},
                                              GridQuantity::separability_diff)))
        if (r[0] != "tau1") worst = std::max(worst, std::abs(std::stod(r[2])));
    CHECK(worst > 1e-4);
}

TEST_CASE("benchmark tables have the documented columns") {
    Table1Row r1{2.0, -1, -1, false, "empirical", summarise({1.0, 3.0, std::nan("")})};
    const auto t1 = csv_rows(table1_to_csv({r1}));
    CHECK(t1[0] == std::vector<std::string>{"ell", "k", "n_knots", "demean", "estimator", "mean", "sd", "reps",
                                            "failures", "nonconverged"});
    CHECK(t1[1][1].empty());
    CHECK(std::stod(t1[1][5]) == 2.0);
    CHECK(t1[1][7] == "3");
    CHECK(t1[1][8] == "1");
    Table2Row r2{0.5, "gamma12", 1, "spline_ml", summarise({1.0})};
    const auto t2 = csv_rows(table2_to_csv({r2}));
    CHECK(t2[0].front() == "lambda12");
    CHECK(t2[1][1] == "gamma12");
    CHECK(csv_rows(table1_replications_csv({r1})).size() == 4);
}

TEST_CASE("build info and timestamps") {
    const auto b = build_info();
    CHECK(b.contains("splinekernel"));
    CHECK(b.contains("eigen"));
    CHECK(b.contains("fftw"));
    const auto ts = utc_timestamp();
    CHECK(ts.size() == 20);
    CHECK(ts.back() == 'Z');
}

#ifdef SPLINEKERNEL_CLI
namespace {

int run_cli(const std::string& args) {
    const int status = std::system((std::string(SPLINEKERNEL_CLI) + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("command line: outputs, manifests and exit codes") {
    const auto dir = scratch_dir("cli");
    const auto p = [&](const char* name) { return (dir / name).string(); };

    REQUIRE(run_cli("simulate --matern nu=1.5,ell=2 --n 256 --seed 11 -o " + p("a.csv")) == 0);
    REQUIRE(run_cli("--threads 3 simulate --matern nu=1.5,ell=2 --n 256 --seed 11 -o " + p("b.csv")) == 0);
    CHECK(read_file(p("a.csv")) == read_file(p("b.csv")));
    const auto manifest = read_json_file(p("a.csv") + std::string(".manifest.json"));
    CHECK(manifest["status"] == "ok");
    CHECK(manifest["seed"] == 11);
    CHECK(manifest["command"] == "simulate");
    CHECK(manifest["outputs"][0] == p("a.csv"));

    REQUIRE(run_cli("fit-whittle --series " + p("a.csv") + " -k 1 --n-knots 3 -o " + p("m.json")) == 0);
    const auto model = model_from_json(read_json_file(p("m.json")));
    const auto& uni = std::get<SplinePsdModel>(model);
    CHECK(read_json_file(p("m.json") + std::string(".manifest.json"))["inputs"][0]["fnv1a64"].is_string());

    REQUIRE(run_cli("eval-acf --model " + p("m.json") + " --tau 0 -o " + p("acf.csv")) == 0);
    const auto rows = csv_rows(read_file(p("acf.csv")));
    CHECK(std::stod(rows[1][1]) == doctest::Approx(uni.variance()).epsilon(1e-12));

    CHECK(run_cli("simulate --n 10 -o " + p("c.csv")) == 2);
    CHECK(run_cli("simulate --matern nu=1.5 --n 0 -o " + p("c.csv")) == 2);
    CHECK(run_cli("fit-whittle --series " + p("missing.csv") + " -o " + p("m2.json")) == 2);
    CHECK(run_cli("--manifest " + p("run.json") + " eval-acf --model " + p("m.json") + " --grid 0:1:5000000") == 2);
    CHECK(read_json_file(p("run.json"))["status"] == "usage_error");
    CHECK(run_cli("frobnicate") == 2);
    CHECK_FALSE(fs::exists(p("c.csv")));

    {
        std::ofstream huge(p("huge.csv"));
        huge << "t,y\n";
        for (int i = 0; i < 64; ++i) huge << i << ",1e300\n";
    }
    CHECK(run_cli("fit-mle --series " + p("huge.csv") + " -o " + p("h.json")) == 1);
    CHECK(read_json_file(p("h.json") + std::string(".manifest.json"))["status"] == "numeric_failure");
    CHECK_FALSE(fs::exists(p("h.json")));
}
#endif
