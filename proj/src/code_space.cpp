#include "nifs/code_space.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace nifs {

BranchingProfile::BranchingProfile(LevelTable<int> n, int max_depth)
    : n_(std::move(n)), max_depth_(max_depth)
{
    if (max_depth_ < 1)
        throw std::invalid_argument("BranchingProfile: max_depth must be positive");
    n_.for_each_stored([](int nk) {
        // n_k = 1 is admitted for degenerate point-mass constructions.
        if (nk < 1)
            throw std::invalid_argument("BranchingProfile: every level needs at least one branch");
    });
    stationary_ = n_.is_stationary();
}

std::size_t BranchingProfile::words_at_depth(int k, std::size_t cap) const
{
    std::size_t total = 1;
    for (int level = 1; level <= k; ++level) {
        const auto nk = static_cast<std::size_t>(branches(level));
        if (total > cap / nk)
            return cap;
        total *= nk;
    }
    return std::min(total, cap);
}

Word Word::parent() const
{
    if (letters_.empty())
        return {};
    return Word(std::vector<int>(letters_.begin(), letters_.end() - 1));
}

Word Word::child(int letter) const
{
    auto next = letters_;
    next.push_back(letter);
    return Word(std::move(next));
}

Word Word::prefix(std::size_t k) const
{
    k = std::min(k, letters_.size());
    return Word(std::vector<int>(letters_.begin(), letters_.begin() + static_cast<std::ptrdiff_t>(k)));
}

bool Word::is_prefix_of(const Word& other) const noexcept
{
    if (letters_.size() > other.letters_.size())
        return false;
    return std::equal(letters_.begin(), letters_.end(), other.letters_.begin());
}

std::string Word::to_string() const
{
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < letters_.size(); ++i)
        os << (i ? "," : "") << letters_[i];
    os << ')';
    return os.str();
}

void validate_word(const BranchingProfile& profile, const Word& u)
{
    for (std::size_t j = 0; j < u.size(); ++j) {
        const int level = static_cast<int>(j) + 1;
        if (u[j] < 1 || u[j] > profile.branches(level))
            throw InvalidWordError("word " + u.to_string() + ": letter " + std::to_string(u[j]) + " at level " +
                                   std::to_string(level) + " outside 1.." + std::to_string(profile.branches(level)));
    }
}

Word common_prefix(const Word& u, const Word& v)
{
    std::size_t k = 0;
    while (k < u.size() && k < v.size() && u[k] == v[k])
        ++k;
    return u.prefix(k);
}

BernoulliMeasure::BernoulliMeasure(LevelTable<Eigen::VectorXd> p, int max_depth) : p_(std::move(p))
{
    p_.for_each_stored([](const Eigen::VectorXd& pk) {
        if (pk.size() < 1)
            throw std::invalid_argument("BernoulliMeasure: empty probability vector");
        if ((pk.array() <= 0.0).any())
            throw std::invalid_argument("BernoulliMeasure: zero-mass branches are not supported");
        if (std::abs(pk.sum() - 1.0) > 1e-12)
            throw std::invalid_argument("BernoulliMeasure: probability vector does not sum to 1");
    });
    profile_ = BranchingProfile(p_.map([](const Eigen::VectorXd& pk) { return static_cast<int>(pk.size()); }),
                                max_depth);
    stationary_ = p_.is_stationary();
}

double cylinder_mass(const BernoulliMeasure& measure, const Word& u)
{
    validate_word(measure.profile(), u);
    double mass = 1.0;
    for (std::size_t j = 0; j < u.size(); ++j)
        mass *= measure.probability(static_cast<int>(j) + 1, u[j]);
    return mass;
}

double log_cylinder_mass(const BernoulliMeasure& measure, const Word& u)
{
    validate_word(measure.profile(), u);
    double log_mass = 0.0;
    for (std::size_t j = 0; j < u.size(); ++j)
        log_mass += std::log(measure.probability(static_cast<int>(j) + 1, u[j]));
    return log_mass;
}

double word_ratio(const RatioTable& ratios, const Word& u)
{
    double c = 1.0;
    for (std::size_t j = 0; j < u.size(); ++j) {
        const auto& ck = ratios.at(static_cast<int>(j) + 1);
        if (u[j] < 1 || u[j] > ck.size())
            throw InvalidWordError("word " + u.to_string() + " does not fit the ratio table");
        c *= ck(u[j] - 1);
    }
    return c;
}

namespace {

void check_scale(double r)
{
    if (!(r > 0.0 && r < 1.0))
        throw DomainError("cut set scale r must lie in (0, 1)");
}

// Depth-first walk over Σ*(·, r). `visit(letters, log_c)` is called for each member.
// The ratio product is carried left to right so the c_u <= r boundary is decided on c_u itself.
template <class Visit>
void walk_cut_set(const RatioTable& ratios, double r, int max_depth, std::vector<int>& letters, double c,
                  double log_c, Visit& visit)
{
    const int level = static_cast<int>(letters.size()) + 1;
    const auto& ck = ratios.at(level);
    for (Eigen::Index j = 0; j < ck.size(); ++j) {
        letters.push_back(static_cast<int>(j) + 1);
        const double child_c = c * ck(j);
        const double child_log_c = log_c + std::log(ck(j));
        if (child_c <= r) {
            visit(std::as_const(letters), child_log_c);
        } else {
            if (static_cast<int>(letters.size()) >= max_depth)
                throw TruncationError("cut set expansion exceeded max depth " + std::to_string(max_depth),
                                      Word(letters).to_string());
            walk_cut_set(ratios, r, max_depth, letters, child_c, child_log_c, visit);
        }
        letters.pop_back();
    }
}

} // namespace

CutSet cut_set_similar(const RatioTable& ratios, double s, double r, int max_depth)
{
    check_scale(r);
    ratios.for_each_stored([](const Eigen::VectorXd& ck) {
        if ((ck.array() <= 0.0).any() || (ck.array() >= 1.0).any())
            throw DomainError("contraction ratios must lie in (0, 1)");
    });
    CutSet cut{{}, s, r};
    std::vector<int> letters;
    auto visit = [&](const std::vector<int>& u, double) { cut.words.emplace_back(u); };
    walk_cut_set(ratios, r, max_depth, letters, 1.0, 0.0, visit);
    return cut;
}

std::vector<CutWeight> cut_set_log_weights(const RatioTable& ratios, const BernoulliMeasure& measure, double r,
                                           int max_depth)
{
    check_scale(r);
    std::vector<CutWeight> out;
    std::vector<int> letters;
    auto visit = [&](const std::vector<int>& u, double log_c) {
        double log_mu = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i)
            log_mu += std::log(measure.probability(static_cast<int>(i) + 1, u[i]));
        out.push_back({log_c, log_mu});
    };
    walk_cut_set(ratios, r, max_depth, letters, 1.0, 0.0, visit);
    return out;
}

bool is_antichain(const CutSet& cut)
{
    // Sorted lexicographically, a prefix always sorts immediately before some extension of it.
    auto words = cut.words;
    std::sort(words.begin(), words.end());
    for (std::size_t i = 1; i < words.size(); ++i)
        if (words[i - 1].is_prefix_of(words[i]))
            return false;
    return true;
}

double total_mass(const BernoulliMeasure& measure, const CutSet& cut)
{
    double total = 0.0;
    for (const auto& u : cut.words)
        total += cylinder_mass(measure, u);
    return total;
}

} // namespace nifs
