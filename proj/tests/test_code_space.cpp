#include <doctest.h>

#include <random>
#include <set>

#include "nifs/code_space.hpp"

using namespace nifs;
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

// Enumerates every word up to `depth` and keeps the ones with c_u <= r < c_{u^-}.
std::set<Word> brute_force_cut(const RatioTable& ratios, double r, int depth)
{
    std::set<Word> out;
    std::vector<Word> frontier{Word{}};
    for (int k = 1; k <= depth; ++k) {
        std::vector<Word> next;
        for (const auto& u : frontier)
            for (int j = 1; j <= ratios.at(k).size(); ++j)
                next.push_back(u.child(j));
        for (const auto& u : next) {
            double c = 1.0, parent = 1.0;
            for (std::size_t i = 0; i < u.size(); ++i) {
                parent = c;
                c *= ratios.at(static_cast<int>(i) + 1)(u[i] - 1);
            }
            if (c <= r && r < parent)
                out.insert(u);
        }
        frontier = std::move(next);
    }
    return out;
}

} // namespace

TEST_CASE("cylinder masses")
{
    auto uniform = BernoulliMeasure::stationary(vec({0.5, 0.5}));
    CHECK(cylinder_mass(uniform, Word{1, 2, 1}) == doctest::Approx(0.125).epsilon(1e-15));
    CHECK(cylinder_mass(uniform, Word{}) == 1.0);

    BernoulliMeasure mixed({{vec({0.75, 0.25}), vec({0.5, 0.5})}, {vec({0.5, 0.5})}});
    CHECK(cylinder_mass(mixed, Word{2, 1}) == doctest::Approx(0.25 * 0.5).epsilon(1e-15));
    CHECK(log_cylinder_mass(mixed, Word{2, 1}) == doctest::Approx(std::log(0.125)));

    CHECK_THROWS_AS(cylinder_mass(uniform, Word{1, 3}), InvalidWordError);
    CHECK_THROWS_AS(cylinder_mass(uniform, Word{0}), InvalidWordError);
}

TEST_CASE("cylinder mass is multiplicative for stationary measures")
{
    auto mu = BernoulliMeasure::stationary(vec({0.2, 0.3, 0.5}));
    const Word u{1, 3, 2}, v{2, 2, 3, 1};
    std::vector<int> uv(u.letters().begin(), u.letters().end());
    uv.insert(uv.end(), v.letters().begin(), v.letters().end());
    CHECK(cylinder_mass(mu, Word(uv)) ==
          doctest::Approx(cylinder_mass(mu, u) * cylinder_mass(mu, v)).epsilon(1e-14));
}

TEST_CASE("measure validation")
{
    CHECK_THROWS(BernoulliMeasure::stationary(vec({0.5, 0.4})));
    CHECK_THROWS(BernoulliMeasure::stationary(vec({1.0, 0.0})));
    CHECK_NOTHROW(BernoulliMeasure::stationary(vec({1.0})));
    CHECK(BernoulliMeasure::stationary(vec({0.5, 0.5})).stationary());
    BernoulliMeasure alternating({{}, {vec({0.5, 0.5}), vec({0.25, 0.75})}});
    CHECK_FALSE(alternating.stationary());
    CHECK(alternating.probability(3, 1) == 0.5);
    CHECK(alternating.probability(4, 2) == 0.75);
}

TEST_CASE("branching profile")
{
    BranchingProfile p({{2}, {3, 2}});
    CHECK(p.branches(1) == 2);
    CHECK(p.branches(2) == 3);
    CHECK(p.branches(3) == 2);
    CHECK(p.branches(4) == 3);
    CHECK_FALSE(p.stationary());
    CHECK(p.words_at_depth(3, 1000) == 12);
    CHECK(p.words_at_depth(40, 1000) == 1000);
    CHECK(BranchingProfile::uniform(3).stationary());
    CHECK_THROWS(BranchingProfile(LevelTable<int>::stationary(0)));
}

TEST_CASE("words")
{
    const Word u{1, 2, 1};
    CHECK(u.size() == 3);
    CHECK(u.parent() == Word{1, 2});
    CHECK(u.child(3) == Word{1, 2, 1, 3});
    CHECK(Word{}.parent().empty());
    CHECK(Word{1, 2}.is_prefix_of(u));
    CHECK_FALSE(Word{2}.is_prefix_of(u));
    CHECK(Word{}.is_prefix_of(u));
    CHECK(u.to_string() == "(1,2,1)");
    CHECK(common_prefix(u, Word{1, 2, 2}) == Word{1, 2});
    CHECK(common_prefix(Word{1, 1}, Word{2, 1}).empty());
    CHECK(common_prefix(u, u) == u);
}

TEST_CASE("cut sets of the binary halving tree")
{
    const auto halves = RatioTable::stationary(vec({0.5, 0.5}));
    auto cut = cut_set_similar(halves, 1.0, 0.3);
    CHECK(cut.words == std::vector<Word>{{1, 1}, {1, 2}, {2, 1}, {2, 2}});

    cut = cut_set_similar(halves, 1.0, 0.5);
    CHECK(cut.words == std::vector<Word>{{1}, {2}});
    CHECK(cut.r == 0.5);
}

TEST_CASE("cut set with a nonstationary head")
{
    RatioTable ratios({vec({0.5, 0.25})}, {vec({0.5, 0.5})});
    auto cut = cut_set_similar(ratios, 1.0, 0.2);
    std::set<Word> got(cut.words.begin(), cut.words.end());
    CHECK(got == brute_force_cut(ratios, 0.2, 8));
    CHECK(got == std::set<Word>{{1, 1, 1}, {1, 1, 2}, {1, 2, 1}, {1, 2, 2}, {2, 1}, {2, 2}});
}

TEST_CASE("cut sets on random tables: antichain, cover, scale window")
{
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> ratio(0.1, 0.7);
    std::uniform_real_distribution<double> weight(0.05, 1.0);
    std::uniform_int_distribution<int> branches(2, 4);
    std::uniform_real_distribution<double> scale(0.002, 0.2);
    for (int trial = 0; trial < 40; ++trial) {
        std::vector<VectorXd> head, tail, phead, ptail;
        auto fill = [&](std::vector<VectorXd>& c, std::vector<VectorXd>& p, int levels) {
            for (int k = 0; k < levels; ++k) {
                const int n = branches(rng);
                VectorXd ck(n), pk(n);
                for (int j = 0; j < n; ++j) {
                    ck(j) = ratio(rng);
                    pk(j) = weight(rng);
                }
                c.push_back(ck);
                p.push_back(pk / pk.sum());
            }
        };
        fill(head, phead, trial % 3);
        fill(tail, ptail, 1 + trial % 2);
        const RatioTable ratios(head, tail);
        const BernoulliMeasure mu({phead, ptail});
        const double r = scale(rng);

        const auto cut = cut_set_similar(ratios, 0.5, r);
        CHECK(is_antichain(cut));
        CHECK(total_mass(mu, cut) == doctest::Approx(1.0).epsilon(1e-10));

        double c_lower = 1.0;
        ratios.for_each_stored([&](const VectorXd& ck) { c_lower = std::min(c_lower, ck.minCoeff()); });
        for (const auto& u : cut.words) {
            const double c = word_ratio(ratios, u);
            CHECK(c <= r);
            CHECK(c > c_lower * r);
            CHECK(word_ratio(ratios, u.parent()) > r);
        }

        if (trial < 10) {
            std::set<Word> got(cut.words.begin(), cut.words.end());
            CHECK(got == brute_force_cut(ratios, r, 12));
        }

        const auto weights = cut_set_log_weights(ratios, mu, r);
        REQUIRE(weights.size() == cut.words.size());
        for (std::size_t i = 0; i < weights.size(); ++i) {
            CHECK(weights[i].log_ratio == doctest::Approx(std::log(word_ratio(ratios, cut.words[i]))));
            CHECK(weights[i].log_mass == doctest::Approx(log_cylinder_mass(mu, cut.words[i])));
        }
    }
}

TEST_CASE("cut set errors")
{
    const auto halves = RatioTable::stationary(vec({0.5, 0.5}));
    CHECK_THROWS_AS(cut_set_similar(halves, 1.0, 0.0), DomainError);
    CHECK_THROWS_AS(cut_set_similar(halves, 1.0, 1.0), DomainError);
    CHECK_THROWS_AS(cut_set_similar(RatioTable::stationary(vec({0.5, 1.2})), 1.0, 0.1), DomainError);
    try {
        cut_set_similar(halves, 1.0, 1e-6, 5);
        FAIL("expected truncation");
    } catch (const TruncationError& e) {
        CHECK(e.branch() == "(1,1,1,1,1)");
    }
}

TEST_CASE("antichain detection")
{
    CHECK(is_antichain(CutSet{{{1}, {2, 1}, {2, 2}}, 0, 0}));
    CHECK_FALSE(is_antichain(CutSet{{{2}, {1}, {2, 1}}, 0, 0}));
}
