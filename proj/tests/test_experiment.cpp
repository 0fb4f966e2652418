#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "nifs/experiment.hpp"

using namespace nifs;

namespace {

std::string cantor_json(const std::string& extra = "")
{
    return R"({
      "schema": "nifs-experiment/1",
      "name": "cantor",
      "system": { "type": "similar", "ratios": [[0.3333333333333333, 0.3333333333333333]] },
      "translations": { "type": "finite-set", "gamma": [[0.0], [0.6666666666666666]] },
      "measure": { "probabilities": [[0.75, 0.25]] },
      "q": [0.5, 1, 2, 3],
      "samples": 1000000,
      "seed": 5)" + extra + "}";
}

std::string slurp(const std::filesystem::path& p)
{
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::filesystem::path scratch(const std::string& name)
{
    auto p = std::filesystem::temp_directory_path() / ("nifs_test_" + name);
    std::filesystem::remove_all(p);
    return p;
}

} // namespace

TEST_CASE("config parsing")
{
    const auto c = parse_config(cantor_json(R"(, "scales": {"from": 3, "to": 9}, "tolerance": 0.02)"));
    CHECK(c.name == "cantor");
    CHECK(std::holds_alternative<SimilarSystem>(c.system));
    CHECK(dimension(c.system) == 1);
    CHECK(c.qs == std::vector<double>{0.5, 1, 2, 3});
    CHECK(c.scales.size() == 7);
    CHECK(c.scales.front() == 0.125);
    CHECK(c.tolerance == 0.02);
    CHECK(c.realization_count() == 1);
    CHECK_FALSE(c.randomized());

    const auto ns = parse_config(R"({
      "schema": "nifs-experiment/1",
      "system": { "type": "similar", "ratios": { "head": [[0.5, 0.25, 0.2]], "tail": [[0.3, 0.3], [0.25, 0.25]] } },
      "translations": { "type": "finite-set", "gamma": [[0.0], [0.5], [0.75]],
                        "level_assignment": { "head": [[1, 2, 3]], "tail": [[1, 2], [1, 3]] },
                        "overrides": { "1,2": 3 } },
      "measure": { "probabilities": { "head": [[0.5, 0.25, 0.25]], "tail": [[0.5, 0.5]] } }
    })");
    const auto& s = std::get<SimilarSystem>(ns.system);
    CHECK(s.profile().branches(1) == 3);
    CHECK(s.ratio(3, 2) == 0.25);
    CHECK(ns.translations.translation(Word{1, 2})(0) == 0.75);

    const auto aff = parse_config(R"({
      "schema": "nifs-experiment/1",
      "system": { "type": "affine", "matrices": [[ [[0.4, 0], [0, 0.3]], [[0.3, 0.1], [0, 0.2]] ]] },
      "translations": { "type": "random-box", "lo": [0, 0], "hi": [1, 2] },
      "measure": { "probabilities": [[0.5, 0.5]] }
    })");
    CHECK(dimension(aff.system) == 2);
    CHECK(aff.randomized());
    CHECK(aff.realization_count() == 5);
}

TEST_CASE("config errors name the field")
{
    auto fails_with = [](const std::string& text, const std::string& needle) {
        try {
            parse_config(text);
        } catch (const ConfigError& e) {
            return std::string(e.what()).find(needle) != std::string::npos;
        }
        return false;
    };
    CHECK(fails_with("{", "JSON"));
    CHECK(fails_with(R"({"schema": "nifs-experiment/2"})", "schema"));
    CHECK(fails_with(cantor_json(R"(, "q": [0, 2])"), "'q'"));
    CHECK(fails_with(cantor_json(R"(, "q": [])"), "'q'"));
    CHECK(fails_with(cantor_json(R"(, "samples": "many")"), "wrong type"));
    CHECK(fails_with(R"({
      "schema": "nifs-experiment/1",
      "system": { "type": "similar", "ratios": [[0.3, 0.3]] },
      "translations": { "type": "finite-set", "gamma": [[0.0, 0.0], [0.5, 0.5]] },
      "measure": { "probabilities": [[0.5, 0.5]] }
    })",
                     "dimension"));
    CHECK(fails_with(R"({
      "schema": "nifs-experiment/1",
      "system": { "type": "similar", "ratios": [[0.3, 0.3]] },
      "translations": { "type": "finite-set", "gamma": [[0.0], [0.5]] },
      "measure": { "probabilities": [[0.2, 0.3, 0.5]] }
    })",
                     "'measure'"));
    CHECK(fails_with(R"({
      "schema": "nifs-experiment/1",
      "system": { "type": "similar", "ratios": [[1.3, 0.3]] },
      "translations": { "type": "finite-set", "gamma": [[0.0], [0.5]] },
      "measure": { "probabilities": [[0.5, 0.5]] }
    })",
                     "'system'"));
    CHECK(fails_with(R"({
      "schema": "nifs-experiment/1",
      "system": { "type": "affine", "matrices": [[ [[0.4, 0], [0, 0.3], [1, 1]] ]] },
      "translations": { "type": "finite-set", "gamma": [[0.0, 0.0]] },
      "measure": { "probabilities": [[1.0]] }
    })",
                     "system"));
    CHECK(fails_with(R"({
      "schema": "nifs-experiment/1",
      "system": { "type": "cubic" },
      "translations": { "type": "finite-set", "gamma": [[0.0]] },
      "measure": { "probabilities": [[1.0]] }
    })",
                     "system.type"));
    CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("theory method follows the system type")
{
    const auto c = parse_config(cantor_json());
    const auto th = theory_exponents(c);
    REQUIRE(th.size() == 4);
    for (const auto& e : th)
        CHECK(e.method == TheoryMethod::ClosedForm);
    CHECK(*th[2].d_minus == doctest::Approx(std::log(1.6) / std::log(3.0)).epsilon(1e-12));

    auto ns = c;
    ns.system = SimilarSystem(RatioTable({}, {Eigen::Vector2d(1.0 / 3, 1.0 / 3), Eigen::Vector2d(0.25, 0.25)}));
    CHECK(theory_exponents(ns)[2].method == TheoryMethod::ProductLimit);

    auto aff = c;
    aff.system = AffineSystem::stationary({Eigen::MatrixXd::Constant(1, 1, 1.0 / 3), Eigen::MatrixXd::Constant(1, 1, 1.0 / 3)});
    const auto a = theory_exponents(aff);
    CHECK_FALSE(a[0].d_minus.has_value()); // q = 1/2
    CHECK(a[2].method == TheoryMethod::AffineKLimit);
    CHECK(*a[2].d_minus == doctest::Approx(*th[2].d_minus).epsilon(1e-6));
}

TEST_CASE("Cantor experiment passes at the SSC tolerance")
{
    const auto report = run_experiment(parse_config(cantor_json()));
    CHECK(report.tolerance == 0.05);
    REQUIRE(report.realizations.size() == 1);
    const auto& real = report.realizations[0];
    REQUIRE(real.separation.has_value());
    CHECK(real.separation->holds_at_depth);
    for (std::size_t i = 0; i < real.rows.size(); ++i) {
        CHECK(real.claims[i] == Claim::Equality);
        CHECK(real.rows[i].method == "closed-form");
        CHECK(real.rows[i].pass == std::optional<bool>(true));
    }
    CHECK(report.all_pass());
}

TEST_CASE("uniform interval is upper-bound-only with the clamp active")
{
    auto c = parse_config(R"({
      "schema": "nifs-experiment/1",
      "system": { "type": "similar", "ratios": [[0.5, 0.5]] },
      "translations": { "type": "finite-set", "gamma": [[0.0], [0.5]] },
      "measure": { "probabilities": [[0.5, 0.5]] },
      "q": [0.5, 2],
      "samples": 400000
    })");
    const auto report = run_experiment(c);
    const auto& real = report.realizations[0];
    CHECK_FALSE(real.separation->holds_at_depth); // touching basic sets: OSC without SSC
    CHECK(report.tolerance == 0.1);
    for (std::size_t i = 0; i < real.rows.size(); ++i) {
        CHECK(real.claims[i] == Claim::UpperBound);
        CHECK(real.rows[i].d_theory == doctest::Approx(1.0));
        CHECK(real.rows[i].clamped == 1.0);
        CHECK(std::abs(real.rows[i].d_empirical - 1.0) < 0.05);
        CHECK(*real.rows[i].pass);
    }

    // a similar system with dimension above d: the clamp binds
    auto big = c;
    big.system = SimilarSystem::stationary(Eigen::Vector3d(0.5, 0.5, 0.5));
    big.measure = BernoulliMeasure::stationary(Eigen::Vector3d(1.0 / 3, 1.0 / 3, 1.0 / 3));
    FiniteSetTranslations fs;
    for (double a : {0.0, 0.25, 0.5})
        fs.gamma.push_back(Eigen::VectorXd::Constant(1, a));
    big.translations = fs;
    const auto br = run_experiment(big).realizations[0].rows;
    CHECK(br[0].d_theory > 1.5);
    CHECK(br[0].clamped == 1.0);
}

TEST_CASE("finite translation sets are redrawn per realization")
{
    auto c = parse_config(R"({
      "schema": "nifs-experiment/1",
      "system": { "type": "affine", "matrices": [[ [[0.45, 0], [0, 0.4]], [[0.4, 0], [0, 0.35]],
                                                    [[0.45, 0], [0, 0.3]], [[0.35, 0], [0, 0.3]] ]] },
      "translations": { "type": "finite-set", "gamma": [[0, 0], [0.55, 0], [0, 0.6], [0.6, 0.6]], "rho": 0.05 },
      "measure": { "probabilities": [[0.25, 0.25, 0.25, 0.25]] },
      "q": [2, 0.5],
      "samples": 200000,
      "scales": { "from": 3, "to": 9 },
      "realizations": 2
    })");
    const auto report = run_experiment(c);
    CHECK(report.norm_condition);
    REQUIRE(report.realizations.size() == 2);
    CHECK(report.realizations[0].seed != report.realizations[1].seed);
    for (const auto& real : report.realizations) {
        CHECK_FALSE(real.separation.has_value());
        CHECK(real.claims[0] == Claim::Equality);
        CHECK(real.claims[1] == Claim::None); // no affine solver below q = 1
        CHECK_FALSE(real.rows[1].pass.has_value());
        CHECK(real.rows[1].method == "none");
        CHECK(std::isnan(real.rows[1].d_theory));
        CHECK(std::abs(real.rows[0].d_empirical - real.rows[0].clamped) < 0.1);
    }
    CHECK(report.realizations[0].rows[0].d_empirical != report.realizations[1].rows[0].d_empirical);

    auto fixed = c;
    fixed.gamma_rho = 0.0;
    fixed.realizations = 1;
    fixed.qs = {2.0};
    CHECK(run_experiment(fixed).realizations[0].claims[0] == Claim::UpperBound);
}

TEST_CASE("report CSV")
{
    std::ostringstream empty;
    write_report_csv(empty, {});
    CHECK(empty.str() == "q,d_theory,method,bracket_lo,bracket_hi,clamped,D_empirical,fit_err,pass\n");

    ReportRow row{2.0, 0.42781617, "closed-form", 0.42781617, 0.42781617, 0.42781617, 0.4385, 0.0111, true};
    std::ostringstream one;
    write_report_csv(one, {row});
    const auto text = one.str();
    CHECK(std::count(text.begin(), text.end(), '\n') == 2);

    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<ReportRow> rows;
    for (int i = 0; i < 200; ++i) {
        ReportRow r{std::exp(u(rng)), std::ldexp(u(rng), static_cast<int>(rng() % 40) - 20), "affine-k-limit",
                    u(rng), u(rng), u(rng), u(rng), std::abs(u(rng)), std::nullopt};
        if (i % 3 == 0)
            r.pass = (i % 2 == 0);
        rows.push_back(r);
    }
    std::stringstream ss;
    write_report_csv(ss, rows);
    CHECK(parse_report_csv(ss) == rows);

    // NaN never compares equal, so compare its fields by hand
    ReportRow none{0.5, std::nan(""), "none", std::nan(""), std::nan(""), std::nan(""), 0.56, 0.01, std::nullopt};
    std::stringstream sn;
    write_report_csv(sn, {none});
    CHECK(sn.str().find("0.5,nan,none,nan,nan,nan,0.56,0.01,na") != std::string::npos);
    const auto back = parse_report_csv(sn);
    REQUIRE(back.size() == 1);
    CHECK(std::isnan(back[0].d_theory));
    CHECK(back[0].method == "none");
    CHECK_FALSE(back[0].pass.has_value());

    std::stringstream bad("q,d\n");
    CHECK_THROWS_AS(parse_report_csv(bad), std::invalid_argument);
    std::stringstream short_row(std::string("q,d_theory,method,bracket_lo,bracket_hi,clamped,D_empirical,fit_err,pass\n1,2\n"));
    CHECK_THROWS_AS(parse_report_csv(short_row), std::invalid_argument);
}

TEST_CASE("format_double round-trips")
{
    std::mt19937_64 rng(3);
    for (int i = 0; i < 10000; ++i) {
        double x;
        const auto bits = rng();
        std::memcpy(&x, &bits, sizeof x);
        if (std::isnan(x))
            continue;
        CHECK(parse_double(format_double(x)) == x);
    }
    CHECK(format_double(0.1) == "0.1");
    CHECK(std::isinf(parse_double("-inf")));
    CHECK_THROWS_AS(parse_double("1.5x"), std::invalid_argument);
}

TEST_CASE("identical configs give byte-identical reports")
{
    auto c = parse_config(cantor_json(R"(, "q": [0.5, 2])"));
    c.samples = 200000;
    const auto a = scratch("det_a"), b = scratch("det_b");
    const auto ra = run_experiment(c);
    emit_report(ra, ReportFormat::Csv, a);
    emit_report(ra, ReportFormat::Text, a);
    const auto rb = run_experiment(c);
    emit_report(rb, ReportFormat::Csv, b);
    emit_report(rb, ReportFormat::Text, b);
    for (const auto* f : {"report.csv", "report.txt", "fit.csv", "spectrum.csv"}) {
        CAPTURE(f);
        CHECK(!slurp(a / f).empty());
        CHECK(slurp(a / f) == slurp(b / f));
    }
    std::ifstream is(a / "report.csv");
    CHECK(parse_report_csv(is) == ra.rows());

    auto other = c;
    other.seed = 6;
    CHECK(run_experiment(other).rows() != ra.rows());

    CHECK_THROWS_WITH_AS(emit_report(ra, ReportFormat::Csv, "/proc/nifs/forbidden"),
                         doctest::Contains("/proc/nifs/forbidden"), std::runtime_error);
}
