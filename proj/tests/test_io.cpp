#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>

#include "postgl/errors.hpp"
#include "postgl/io.hpp"

using namespace postgl;

namespace {

/// y depends on x1 and on the level of `color`; `size` has numeric levels.
std::string synthetic_csv(int n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(0.0, 1.0);
    const char* colors[] = {"red", "green", "blue"};
    const char* sizes[] = {"10", "2", "3"};
    std::ostringstream out;
    out.precision(17);
    out << "y,x1,x2,color,size\n";
    for (int i = 0; i < n; ++i) {
        const double x1 = z(rng) * 3.0 + 10.0, x2 = z(rng);
        const int c = static_cast<int>(rng() % 3), s = static_cast<int>(rng() % 3);
        const double y = 2.0 * (x1 - 10.0) / 3.0 + (c == 1 ? 1.5 : 0.0) + z(rng);
        out << y << "," << x1 << "," << x2 << "," << colors[c] << "," << sizes[s] << "\n";
    }
    return out.str();
}

AnalysisConfig base_config(const std::string& path) {
    AnalysisConfig cfg;
    cfg.data_path = path;
    cfg.response_column = "y";
    cfg.categoricals = {"color", "size"};
    cfg.base_lambda = 0.5;
    cfg.seed = 12;
    return cfg;
}

std::string temp_file(const std::string& name, const std::string& text) {
    const auto path = (std::filesystem::temp_directory_path() / name).string();
    write_text_file(path, text);
    return path;
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("CSV parsing") {
    const CsvTable t = parse_csv("a,\"b,c\",d\r\n1,\"say \"\"hi\"\"\",\r\n2,x,NA\n");
    CHECK(t.header == std::vector<std::string>{"a", "b,c", "d"});
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[0][1] == "say \"hi\"");
    CHECK(t.rows[0][2].empty());
    CHECK(t.column_index("d") == 2);
    CHECK(t.column_index("zz") == -1);
    for (const char* m : {"", "NA", "NaN", "nan", ".", "null"}) CHECK(is_missing(m));
    CHECK_FALSE(is_missing("0"));
    CHECK_THROWS_AS(parse_csv("a,b\n1\n"), ConfigError);
    CHECK_THROWS_AS(parse_csv("a,a\n1,2\n"), ConfigError);
    CHECK_THROWS_AS(parse_csv("a\n\"open\n"), ConfigError);
}

TEST_CASE("encoding") {
    const CsvTable table = parse_csv(synthetic_csv(80, 1));
    const AnalysisConfig cfg = base_config("unused.csv");
    const EncodedDesign d = encode(table, cfg);

    CHECK(d.ds.p() == 2 + 2 + 2);
    CHECK(d.groups.num_groups() == 4);
    CHECK(d.reference_levels.at("color") == "blue");
    CHECK(d.reference_levels.at("size") == "2");  // numeric order: 2 < 3 < 10
    std::vector<std::string> names;
    for (const auto& t : d.transforms) names.push_back(t.name);
    CHECK(names == std::vector<std::string>{"x1", "x2", "color:green", "color:red", "size:3", "size:10"});
    for (int j = 0; j < d.ds.p(); ++j) CHECK(std::abs(d.ds.X.col(j).mean()) < 1e-12);
    const VectorXd x1 = d.ds.X.col(0);
    CHECK(std::sqrt(x1.squaredNorm() / 79.0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(d.ds.y.mean()) < 1e-12);

    const EncodedDesign again = encode(table, cfg);
    CHECK(again.ds.X == d.ds.X);
    CHECK(again.ds.y == d.ds.y);
    CHECK(again.preprocessing_json() == d.preprocessing_json());

    AnalysisConfig full = cfg;
    full.full_one_hot = true;
    CHECK(encode(table, full).ds.p() == 2 + 3 + 3);

    AnalysisConfig grouped = cfg;
    grouped.groups = {{"x1", "main"}, {"x2", "main"}};
    const EncodedDesign g = encode(table, grouped);
    CHECK(g.groups.num_groups() == 3);
    CHECK(g.groups.label(0) == "main");
    CHECK(g.groups.size(0) == 2);
}

TEST_CASE("GLM designs carry an unpenalised intercept") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> z(0.0, 1.0);
    std::ostringstream csv;
    csv << "y,x1,x2,color\n";
    for (int i = 0; i < 400; ++i) {
        const double x1 = z(rng), x2 = z(rng);
        const double prob = 1.0 / (1.0 + std::exp(-(-1.0 + x1)));
        csv << (std::uniform_real_distribution<double>(0.0, 1.0)(rng) < prob ? 1 : 0) << "," << x1 << "," << x2
            << "," << (i % 3 == 0 ? "red" : "blue") << "\n";
    }
    AnalysisConfig cfg = base_config(temp_file("postgl_io_logistic.csv", csv.str()));
    cfg.model = LossKind::logistic;
    cfg.categoricals = {"color"};
    const EncodedDesign d = encode(read_csv(cfg.data_path), cfg);
    REQUIRE(d.ds.p() == 4);
    CHECK(d.transforms.back().name == "(intercept)");
    CHECK((d.ds.X.col(3).array() == 1.0).all());
    CHECK(d.intercept_group == 3);
    CHECK(d.groups.label(3) == "(intercept)");

    cfg.method = "naive";
    const auto reports = run_analysis(cfg, d);
    REQUIRE(reports.size() == 1);
    REQUIRE(reports[0].ok());
    CHECK(reports[0].lambda[3] == 0.0);
    bool has_intercept = false;
    for (const auto& row : reports[0].coefficients) {
        if (row.name != "(intercept)") continue;
        has_intercept = true;
        CHECK(row.estimate < 0.0);  // base rate below one half
    }
    CHECK(has_intercept);

    AnalysisConfig plain = cfg;
    plain.intercept = false;
    CHECK(encode(read_csv(cfg.data_path), plain).ds.p() == 3);
    AnalysisConfig clash = cfg;
    clash.groups = {{"x1", "(intercept)"}};
    CHECK_THROWS_AS(encode(read_csv(cfg.data_path), clash), ConfigError);
}

TEST_CASE("encoding errors") {
    const AnalysisConfig cfg = base_config("unused.csv");
    SUBCASE("missing values list the rows") {
        const CsvTable t = parse_csv("y,x1,x2,color,size\n1,2,3,red,2\n1,NA,3,red,3\n2,2,,blue,10\n3,1,2,green,2\n");
        try {
            encode(t, cfg);
            FAIL("expected a missing-value error");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find("rows 2, 3") != std::string::npos);
        }
    }
    SUBCASE("unknown columns") {
        AnalysisConfig bad = cfg;
        bad.columns = {"x1", "weight"};
        CHECK_THROWS_AS(encode(parse_csv(synthetic_csv(10, 2)), bad), ConfigError);
        bad = cfg;
        bad.response_column = "outcome";
        CHECK_THROWS_AS(encode(parse_csv(synthetic_csv(10, 2)), bad), ConfigError);
    }
}

TEST_CASE("analysis config") {
    const AnalysisConfig cfg = base_config("data.csv");
    CHECK(AnalysisConfig::from_json(cfg.to_json()).to_json() == cfg.to_json());
    const auto error_of = [](const nlohmann::json& j) -> std::string {
        try {
            AnalysisConfig::from_json(j).validate();
        } catch (const ConfigError& e) {
            return e.what();
        }
        return "";
    };
    nlohmann::json j = cfg.to_json();
    j["alpha"] = "0.1";
    CHECK(error_of(j).find("'/alpha'") != std::string::npos);
    j = cfg.to_json();
    j["lamda"] = 1.0;
    CHECK(error_of(j).find("'/lamda'") != std::string::npos);
    j = cfg.to_json();
    j["model"] = "gamma";
    CHECK(error_of(j).find("'/model'") != std::string::npos);
    j = cfg.to_json();
    j["method"] = "bootstrap";
    CHECK(error_of(j).find("'/method'") != std::string::npos);
    CHECK(cfg.randomization_f() == doctest::Approx(0.33 / 0.67));
}

TEST_CASE("end-to-end analysis") {
    const std::string path = temp_file("postgl_io_test.csv", synthetic_csv(300, 3));
    const AnalysisConfig cfg = base_config(path);
    const EncodedDesign d = encode(read_csv(path), cfg);
    const auto reports = run_analysis(cfg, d);
    REQUIRE(reports.size() == 3);
    for (const auto& r : reports) {
        CAPTURE(r.message);
        CHECK(r.seed == cfg.seed);
        CHECK(r.status == "ok");
        CHECK(r.config.contains("preprocessing"));
    }
    CHECK(reports[0].method == Method::post_gl);
    CHECK_FALSE(reports[2].selection_valid);

    SUBCASE("report JSON round trip") {
        for (const auto& r : reports) {
            const InferenceReport back = report_from_json(nlohmann::json::parse(to_json(r).dump()));
            CHECK(back == r);
        }
    }
    SUBCASE("tables follow the coefficient and group layouts") {
        const std::string coef = coefficients_csv(reports[0]);
        CHECK(coef.substr(0, coef.find('\n')) == "name,group,estimate,std_error,ci_lower,ci_upper,p_value");
        const std::string grp = groups_csv(reports[0]);
        CHECK(grp.substr(0, grp.find('\n')) == "group,chi2,df,p_value");
        const auto prefix = (std::filesystem::temp_directory_path() / "postgl_io_report").string();
        const auto files = write_report_files(reports[0], prefix);
        CHECK(files.size() == 3);
        for (const auto& f : files) CHECK(std::filesystem::exists(f));
    }
    SUBCASE("same seed, same reports") {
        const auto again = run_analysis(cfg, d);
        for (std::size_t k = 0; k < 3; ++k) {
            CHECK(again[k].coefficients == reports[k].coefficients);
            CHECK(again[k].selected_groups == reports[k].selected_groups);
        }
    }
    SUBCASE("explicit randomisation covariance") {
        std::ostringstream omega;
        for (int i = 0; i < d.ds.p(); ++i) {
            for (int j = 0; j < d.ds.p(); ++j) omega << (j ? "," : "") << (i == j ? 0.5 : 0.0);
            omega << "\n";
        }
        AnalysisConfig with_omega = cfg;
        with_omega.method = "post_gl";
        with_omega.omega_path = temp_file("postgl_io_omega.csv", omega.str());
        const auto r = run_analysis(with_omega, d);
        REQUIRE(r.size() == 1);
        CHECK(r[0].status == "ok");
    }
}

}  // TEST_SUITE
