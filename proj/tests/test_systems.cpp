#include <doctest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "nifs/systems.hpp"

using namespace nifs;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

VectorXd vec(std::initializer_list<double> v)
{
    VectorXd out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v)
        out(i++) = x;
    return out;
}

TranslationScheme interval_gamma(std::initializer_list<double> offsets)
{
    FiniteSetTranslations fs;
    for (double a : offsets)
        fs.gamma.push_back(vec({a}));
    return fs;
}

Word repeated(int letter, int n) { return Word(std::vector<int>(static_cast<std::size_t>(n), letter)); }

} // namespace

TEST_CASE("projection of finite words")
{
    const ContractionSystem halves = SimilarSystem::stationary(vec({0.5, 0.5}));
    const auto zero = interval_gamma({0.0, 0.0});
    CHECK(project_word(halves, zero, Word{1, 2, 2, 1}, 4).point(0) == 0.0);

    const auto binary = interval_gamma({0.0, 0.5});
    const auto p = project_word(halves, binary, repeated(2, 20), 20);
    CHECK(p.point(0) == doctest::Approx(1.0 - std::ldexp(1.0, -20)).epsilon(1e-15));
    CHECK(p.truncation_bound == doctest::Approx(0.5 * std::ldexp(1.0, -20) / 0.5));

    const ContractionSystem thirds = SimilarSystem::stationary(vec({1.0 / 3, 1.0 / 3}));
    const auto cantor = interval_gamma({0.0, 2.0 / 3});
    CHECK(project_word(thirds, cantor, Word{1, 2}, 2).point(0) == doctest::Approx(2.0 / 9).epsilon(1e-15));
    CHECK(project_word(thirds, cantor, Word{1, 2}, 0).point(0) == 0.0);
    CHECK_THROWS(project_word(thirds, cantor, Word{1, 2}, 3));
}

TEST_CASE("explicit translation tables")
{
    const ContractionSystem halves = SimilarSystem::stationary(vec({0.5, 0.5}));
    ExplicitTranslations ex;
    ex.table[Word{1}] = vec({0.0});
    ex.table[Word{2}] = vec({0.5});
    ex.table[Word{2, 1}] = vec({0.25});
    const TranslationScheme scheme(ex);
    CHECK(project_word(halves, scheme, Word{2, 1}, 2).point(0) == doctest::Approx(0.5 + 0.5 * 0.25));
    CHECK_THROWS_AS(project_word(halves, scheme, Word{2, 2}, 2), IncompleteSchemeError);
}

TEST_CASE("finite-set assignment precedence")
{
    FiniteSetTranslations fs;
    fs.gamma = {vec({0.0}), vec({0.5}), vec({0.25})};
    fs.level_assignment = LevelTable<std::vector<int>>({{3, 3}}, {{1, 2}});
    fs.overrides[Word{1, 2}] = 1;
    const TranslationScheme scheme(fs);
    CHECK(scheme.translation(Word{1})(0) == 0.25);
    CHECK(scheme.translation(Word{2, 2})(0) == 0.5);
    CHECK(scheme.translation(Word{1, 2})(0) == 0.0);

    FiniteSetTranslations bad = fs;
    bad.overrides[Word{1}] = 4;
    CHECK_THROWS(TranslationScheme{bad});
}

TEST_CASE("projection truncation property on random systems")
{
    std::mt19937_64 rng(29);
    std::normal_distribution<double> n;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<MatrixXd> maps;
        for (int j = 0; j < 3; ++j) {
            MatrixXd T(2, 2);
            T << n(rng), n(rng), n(rng), n(rng);
            Eigen::JacobiSVD<MatrixXd> svd(T);
            maps.push_back(T * (0.3 + 0.1 * j) / svd.singularValues()(0));
        }
        const ContractionSystem sys = AffineSystem::stationary(maps);
        const TranslationScheme scheme(RandomTranslations{vec({-1.0, 0.0}), vec({1.0, 2.0}), 99u + trial});
        std::vector<int> letters;
        for (int i = 0; i < 25; ++i)
            letters.push_back(1 + static_cast<int>(rng() % 3));
        const Word u(letters);
        const double a = contraction_bound(sys);
        for (int depth = 0; depth < 24; ++depth) {
            const auto p0 = project_word(sys, scheme, u, depth);
            const auto p1 = project_word(sys, scheme, u, depth + 1);
            CHECK((p1.point - p0.point).norm() <= scheme.sup_norm() * std::pow(a, depth) * (1 + 1e-12));
        }
    }
}

TEST_CASE("uniform binary sampling matches the Lebesgue CDF")
{
    const ContractionSystem halves = SimilarSystem::stationary(vec({0.5, 0.5}));
    const auto scheme = interval_gamma({0.0, 0.5});
    const auto mu = BernoulliMeasure::stationary(vec({0.5, 0.5}));
    const auto sample = sample_measure(halves, scheme, mu, 100000, 40, 1234);
    CHECK(sample.size() == 100000);
    CHECK(sample.weights.sum() == doctest::Approx(1.0).epsilon(1e-12));
    std::vector<double> xs(sample.points.data(), sample.points.data() + sample.size());
    std::sort(xs.begin(), xs.end());
    double ks = 0.0;
    const double n = static_cast<double>(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i)
        ks = std::max({ks, std::abs((i + 1) / n - xs[i]), std::abs(xs[i] - i / n)});
    CHECK(ks < 0.01);
}

TEST_CASE("degenerate and Cantor samples")
{
    const ContractionSystem single = SimilarSystem::stationary(vec({0.5}));
    const auto point = sample_measure(single, interval_gamma({0.3}), BernoulliMeasure::stationary(vec({1.0})), 500,
                                      30, 1);
    CHECK((point.points.array() == point.points(0, 0)).all());

    const ContractionSystem thirds = SimilarSystem::stationary(vec({1.0 / 3, 1.0 / 3}));
    const auto cantor = sample_measure(thirds, interval_gamma({0.0, 2.0 / 3}),
                                       BernoulliMeasure::stationary(vec({0.5, 0.5})), 20000, 30, 2);
    const double slack = cantor.metadata.truncation_bound;
    for (Eigen::Index i = 0; i < cantor.points.cols(); ++i) {
        const double x = cantor.points(0, i);
        CHECK((x <= 1.0 / 3 + slack || x >= 2.0 / 3 - slack));
        CHECK(x >= 0.0);
        CHECK(x <= 1.0);
    }
}

TEST_CASE("sampling is deterministic and independent of the worker count")
{
    const ContractionSystem sys = AffineSystem::stationary(
        {MatrixXd(Eigen::Matrix2d{{0.4, 0.1}, {0.0, 0.3}}), MatrixXd(Eigen::Matrix2d{{0.3, 0.0}, {0.1, 0.45}})});
    const TranslationScheme scheme(RandomTranslations{vec({0.0, 0.0}), vec({1.0, 1.0}), 5});
    const auto mu = BernoulliMeasure::stationary(vec({0.3, 0.7}));
    const auto a = sample_measure(sys, scheme, mu, 10000, 25, 77, {0.0, 1});
    const auto b = sample_measure(sys, scheme, mu, 10000, 25, 77, {0.0, 4});
    const auto c = sample_measure(sys, scheme, mu, 10000, 25, 78, {0.0, 1});
    CHECK(a.points == b.points);
    CHECK_FALSE(a.points == c.points);
}

TEST_CASE("resolution warning")
{
    const ContractionSystem halves = SimilarSystem::stationary(vec({0.5, 0.5}));
    const auto mu = BernoulliMeasure::stationary(vec({0.5, 0.5}));
    const auto scheme = interval_gamma({0.0, 0.5});
    CHECK(sample_measure(halves, scheme, mu, 10, 4, 1, {1e-3, 1}).metadata.resolution_warning);
    const int depth = default_sampling_depth(0.5, 1e-3);
    CHECK(depth == 10);
    CHECK_FALSE(sample_measure(halves, scheme, mu, 10, depth, 1, {1e-3, 1}).metadata.resolution_warning);
}

TEST_CASE("sampled points stay inside the geometric-series box")
{
    const ContractionSystem sys = AffineSystem::stationary(
        {MatrixXd(Eigen::Matrix2d{{0.4, 0.1}, {-0.1, 0.3}}), MatrixXd(Eigen::Matrix2d{{0.3, 0.0}, {0.1, 0.45}})});
    const TranslationScheme scheme(RandomTranslations{vec({-1.0, 0.0}), vec({1.0, 0.5}), 5});
    const auto s = sample_measure(sys, scheme, BernoulliMeasure::stationary(vec({0.5, 0.5})), 5000, 30, 3);
    const double radius = scheme.sup_norm() / (1.0 - contraction_bound(sys));
    for (Eigen::Index i = 0; i < s.points.cols(); ++i)
        CHECK(s.points.col(i).norm() <= radius);
}

TEST_CASE("random translations are uniform on the box")
{
    const RandomTranslations box{vec({-1.0, 2.0}), vec({3.0, 2.5}), 42};
    const TranslationScheme scheme(box);
    CHECK(scheme.translation(Word{1, 2, 1}) == scheme.translation(Word{1, 2, 1}));
    CHECK_FALSE(scheme.translation(Word{1, 2, 1}) == scheme.translation(Word{1, 2, 2}));

    const int n = 20000;
    VectorXd mean = VectorXd::Zero(2);
    std::mt19937_64 rng(1);
    for (int i = 0; i < n; ++i) {
        const auto w = scheme.translation(Word{1 + static_cast<int>(rng() % 4), 1 + i});
        CHECK((w.array() >= box.lo.array()).all());
        CHECK((w.array() <= box.hi.array()).all());
        mean += w;
    }
    mean /= n;
    const VectorXd center = (box.lo + box.hi) / 2;
    const VectorXd sigma = (box.hi - box.lo) / std::sqrt(12.0 * n);
    CHECK(std::abs(mean(0) - center(0)) < 3 * sigma(0));
    CHECK(std::abs(mean(1) - center(1)) < 3 * sigma(1));
}

TEST_CASE("basic set diameters of similar systems")
{
    const double theta = 0.7;
    MatrixXd R(2, 2);
    R << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
    const ContractionSystem sys =
        SimilarSystem(RatioTable::stationary(vec({0.3, 0.5})), 2,
                      LevelTable<std::vector<MatrixXd>>::stationary({R, MatrixXd(MatrixXd::Identity(2, 2))}));
    FiniteSetTranslations fs;
    fs.gamma = {vec({0.1, 0.2}), vec({0.5, 0.0})};
    const TranslationScheme scheme(fs);
    const auto& ratios = std::get<SimilarSystem>(sys).ratios();
    for (const Word& u : {Word{1}, Word{1, 2}, Word{2, 1, 1}, Word{1, 1, 2, 2, 1}})
        CHECK(basic_set(sys, scheme, u).diameter ==
              doctest::Approx(word_ratio(ratios, u) * std::sqrt(2.0)).epsilon(1e-12));

    const ContractionSystem line = SimilarSystem::stationary(vec({0.25, 0.5}));
    const auto b = basic_set(line, interval_gamma({0.0, 0.5}), Word{2, 1});
    CHECK(b.diameter == doctest::Approx(0.125));
    CHECK(b.lo(0) == doctest::Approx(0.5));
    CHECK(b.hi(0) == doctest::Approx(0.625));
}

TEST_CASE("separation certificates")
{
    const ContractionSystem thirds = SimilarSystem::stationary(vec({1.0 / 3, 1.0 / 3}));
    const auto cantor = interval_gamma({0.0, 2.0 / 3});
    const auto gap = check_separation(thirds, cantor, 6, SeparationKind::Gap);
    CHECK(gap.holds_at_depth);
    CHECK(gap.worst_gap_ratio == doctest::Approx(1.0 / 3).epsilon(1e-12));
    CHECK(check_separation(thirds, cantor, 6, SeparationKind::Strong).holds_at_depth);

    const ContractionSystem halves = SimilarSystem::stationary(vec({0.5, 0.5}));
    const auto touching = interval_gamma({0.0, 0.5});
    const auto ssc = check_separation(halves, touching, 5, SeparationKind::Strong);
    CHECK_FALSE(ssc.holds_at_depth);
    CHECK(ssc.witness.first == Word{1});
    CHECK(ssc.witness.second == Word{2});
    CHECK(check_separation(halves, touching, 5, SeparationKind::Open).holds_at_depth);

    const auto overlapping = interval_gamma({0.0, 0.25});
    const auto osc = check_separation(halves, overlapping, 3, SeparationKind::Open);
    CHECK_FALSE(osc.holds_at_depth);
    CHECK(osc.witness == std::pair<Word, Word>{Word{1}, Word{2}});
    CHECK(osc.worst_gap_ratio == 0.0);
}

TEST_CASE("sample CSV and binary round-trips are lossless")
{
    const ContractionSystem sys = AffineSystem::stationary(
        {MatrixXd(Eigen::Matrix2d{{0.4, 0.1}, {0.0, 0.3}}), MatrixXd(Eigen::Matrix2d{{0.3, 0.0}, {0.1, 0.45}})});
    const TranslationScheme scheme(RandomTranslations{vec({0.0, 0.0}), vec({1.0, 1.0}), 5});
    const auto s = sample_measure(sys, scheme, BernoulliMeasure::stationary(vec({0.3, 0.7})), 1000, 20, 9);

    std::stringstream csv;
    write_sample_csv(csv, s);
    const auto back = read_sample_csv(csv);
    CHECK(back.points == s.points);
    CHECK(back.weights == s.weights);

    std::stringstream bin;
    write_sample_binary(bin, s);
    const auto bback = read_sample_binary(bin);
    CHECK(bback.points == s.points);
    CHECK(bback.weights == s.weights);

    std::stringstream bad("0.1,0.2,0.5\n0.3,0.5\n");
    CHECK_THROWS(read_sample_csv(bad));
}

TEST_CASE("system validation")
{
    CHECK_THROWS_AS(SimilarSystem::stationary(vec({0.5, 1.0})), DomainError);
    CHECK_THROWS(SimilarSystem(RatioTable::stationary(vec({0.5, 0.5})), 2,
                               LevelTable<std::vector<MatrixXd>>::stationary(
                                   {MatrixXd(MatrixXd::Identity(2, 2) * 2.0), MatrixXd(MatrixXd::Identity(2, 2))})));
    const ContractionSystem halves = SimilarSystem::stationary(vec({0.5, 0.5}));
    FiniteSetTranslations planar;
    planar.gamma = {vec({0.0, 0.0}), vec({0.5, 0.5})};
    CHECK_THROWS(project_word(halves, planar, Word{1}, 1));
    const auto affine = as_affine(std::get<SimilarSystem>(halves));
    CHECK(affine.alpha_plus() == doctest::Approx(0.5));
    CHECK(affine.matrix(3, 2)(0, 0) == 0.5);
}
