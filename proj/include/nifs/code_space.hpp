#ifndef NIFS_CODE_SPACE_HPP
#define NIFS_CODE_SPACE_HPP

#include <Eigen/Core>

#include <compare>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nifs/error.hpp"

namespace nifs {

/**
 * A per-level table for a nonautonomous construction.
 *
 * Levels are 1-based. The first `head.size()` levels are stored explicitly;
 * every later level cycles through `tail`. A stationary table is an empty head
 * with a one-element tail.
 */
template <class T>
class LevelTable {
public:
    LevelTable() = default;

    LevelTable(std::vector<T> head, std::vector<T> tail)
        : head_(std::move(head)), tail_(std::move(tail))
    {
        if (tail_.empty())
            throw std::invalid_argument("LevelTable: tail pattern must be non-empty");
    }

    static LevelTable stationary(T value) { return LevelTable({}, {std::move(value)}); }

    const T& at(int level) const
    {
        if (level < 1)
            throw std::out_of_range("LevelTable: levels are 1-based");
        const auto k = static_cast<std::size_t>(level - 1);
        if (k < head_.size())
            return head_[k];
        return tail_[(k - head_.size()) % tail_.size()];
    }

    const std::vector<T>& head() const noexcept { return head_; }
    const std::vector<T>& tail() const noexcept { return tail_; }

    /// Number of levels after which the table is periodic and every entry has been seen.
    int stored_levels() const noexcept { return static_cast<int>(head_.size() + tail_.size()); }

    /// True when every stored entry is equal, i.e. the table describes a stationary system.
    bool is_stationary() const
    {
        const T& first = tail_.front();
        for (const auto& v : head_)
            if (!(v == first))
                return false;
        for (const auto& v : tail_)
            if (!(v == first))
                return false;
        return true;
    }

    friend bool operator==(const LevelTable& a, const LevelTable& b)
    {
        return a.head_ == b.head_ && a.tail_ == b.tail_;
    }

    template <class F>
    void for_each_stored(F&& f) const
    {
        for (const auto& v : head_)
            f(v);
        for (const auto& v : tail_)
            f(v);
    }

    template <class F>
    auto map(F&& f) const -> LevelTable<std::decay_t<decltype(f(std::declval<const T&>()))>>
    {
        using U = std::decay_t<decltype(f(std::declval<const T&>()))>;
        std::vector<U> h, t;
        h.reserve(head_.size());
        t.reserve(tail_.size());
        for (const auto& v : head_)
            h.push_back(f(v));
        for (const auto& v : tail_)
            t.push_back(f(v));
        return LevelTable<U>(std::move(h), std::move(t));
    }

private:
    std::vector<T> head_;
    std::vector<T> tail_{T{}};
};

inline constexpr int kDefaultMaxDepth = 64;

/// Number of branches n_k at every level of the code tree.
class BranchingProfile {
public:
    BranchingProfile() = default;
    explicit BranchingProfile(LevelTable<int> n, int max_depth = kDefaultMaxDepth);

    static BranchingProfile uniform(int n, int max_depth = kDefaultMaxDepth)
    {
        return BranchingProfile(LevelTable<int>::stationary(n), max_depth);
    }

    int branches(int level) const { return n_.at(level); }
    int max_depth() const noexcept { return max_depth_; }
    bool stationary() const noexcept { return stationary_; }
    const LevelTable<int>& table() const noexcept { return n_; }

    /// Number of words of length k, saturating at `cap`.
    std::size_t words_at_depth(int k, std::size_t cap) const;

    friend bool operator==(const BranchingProfile&, const BranchingProfile&) = default;

private:
    LevelTable<int> n_{LevelTable<int>::stationary(2)};
    int max_depth_ = kDefaultMaxDepth;
    bool stationary_ = true;
};

/// A finite address u = u_1 ... u_k in the code tree. Letters are 1-based.
class Word {
public:
    Word() = default;
    Word(std::initializer_list<int> letters) : letters_(letters) {}
    explicit Word(std::vector<int> letters) : letters_(std::move(letters)) {}

    std::size_t size() const noexcept { return letters_.size(); }
    bool empty() const noexcept { return letters_.empty(); }

    /// Letter at position i (0-based), i.e. the choice made at level i + 1.
    int operator[](std::size_t i) const { return letters_[i]; }
    std::span<const int> letters() const noexcept { return letters_; }

    /// u^- : the word with its last letter dropped. The parent of the empty word is empty.
    Word parent() const;
    Word child(int letter) const;
    Word prefix(std::size_t k) const;

    bool is_prefix_of(const Word& other) const noexcept;

    std::string to_string() const;

    friend bool operator==(const Word&, const Word&) = default;
    friend auto operator<=>(const Word&, const Word&) = default;

private:
    std::vector<int> letters_;
};

/// Throws InvalidWordError if some letter is outside its level's range.
void validate_word(const BranchingProfile& profile, const Word& u);

/// u ∧ v: the longest common initial subword.
Word common_prefix(const Word& u, const Word& v);

/// Bernoulli measure on the code space: cylinder masses are products of per-level letter probabilities.
class BernoulliMeasure {
public:
    BernoulliMeasure() = default;
    explicit BernoulliMeasure(LevelTable<Eigen::VectorXd> p, int max_depth = kDefaultMaxDepth);

    static BernoulliMeasure stationary(const Eigen::VectorXd& p, int max_depth = kDefaultMaxDepth)
    {
        return BernoulliMeasure(LevelTable<Eigen::VectorXd>::stationary(p), max_depth);
    }

    const Eigen::VectorXd& at(int level) const { return p_.at(level); }
    double probability(int level, int letter) const { return p_.at(level)(letter - 1); }

    const BranchingProfile& profile() const noexcept { return profile_; }
    const LevelTable<Eigen::VectorXd>& table() const noexcept { return p_; }
    bool stationary() const noexcept { return stationary_; }

private:
    LevelTable<Eigen::VectorXd> p_;
    BranchingProfile profile_;
    bool stationary_ = true;
};

using RatioTable = LevelTable<Eigen::VectorXd>;

/// p_u = μ(C_u). The empty word has mass 1.
double cylinder_mass(const BernoulliMeasure& measure, const Word& u);
double log_cylinder_mass(const BernoulliMeasure& measure, const Word& u);

/// c_u = c_{1,u_1} ... c_{k,u_k}.
double word_ratio(const RatioTable& ratios, const Word& u);

/// A prefix-free family of words whose cylinders partition the code space.
struct CutSet {
    std::vector<Word> words;
    double s = 0.0;
    double r = 0.0;
};

/**
 * Σ*(s, r) = { u : c_u <= r < c_{u^-} } for a similar system, by depth-first expansion.
 *
 * The cut set depends only on r; s is recorded as a generating parameter.
 * Throws TruncationError if a branch is still above r at `max_depth`.
 */
CutSet cut_set_similar(const RatioTable& ratios, double s, double r, int max_depth = kDefaultMaxDepth);

/// (log c_u, log μ(C_u)) for each member of Σ*(s, r), in depth-first order, without materializing words.
struct CutWeight {
    double log_ratio;
    double log_mass;
};
std::vector<CutWeight> cut_set_log_weights(const RatioTable& ratios, const BernoulliMeasure& measure, double r,
                                           int max_depth = kDefaultMaxDepth);

bool is_antichain(const CutSet& cut);
double total_mass(const BernoulliMeasure& measure, const CutSet& cut);

} // namespace nifs

#endif // NIFS_CODE_SPACE_HPP
