#include "nifs/theory.hpp"

#include <cmath>
#include <limits>
#include <random>

namespace nifs {

std::string to_string(TheoryMethod method)
{
    switch (method) {
    case TheoryMethod::ClosedForm:
        return "closed-form";
    case TheoryMethod::ProductLimit:
        return "product-limit";
    case TheoryMethod::CutsetTruncation:
        return "cutset-truncation";
    case TheoryMethod::AffineKLimit:
        return "affine-k-limit";
    }
    return "?";
}

std::string to_string(TheoryStatus status) { return status == TheoryStatus::Ok ? "ok" : "indeterminate"; }

std::string to_string(BoundKind kind)
{
    switch (kind) {
    case BoundKind::Equal:
        return "equal";
    case BoundKind::LowerBound:
        return "lower-bound";
    case BoundKind::UpperBound:
        return "upper-bound";
    }
    return "?";
}

bool is_unit_q(double q) { return std::abs(q - 1.0) < kUnitQTolerance; }

namespace {

double log_sum_exp(const Eigen::ArrayXd& x)
{
    const double m = x.maxCoeff();
    if (!std::isfinite(m))
        return m;
    return m + std::log((x - m).exp().sum());
}

void check_q(double q, double min_q, const char* what)
{
    if (!(q > min_q) && !(min_q < 0.0 && q == 0.0))
        throw DomainError(std::string(what) + ": q out of range");
}

void validate_stationary(const Eigen::VectorXd& c, const Eigen::VectorXd& p)
{
    if (c.size() == 0 || c.size() != p.size())
        throw std::invalid_argument("ratio and probability vectors must be non-empty and of equal length");
    if ((c.array() <= 0.0).any() || (c.array() >= 1.0).any())
        throw DomainError("contraction ratios must lie in (0, 1)");
    if ((p.array() <= 0.0).any() || std::abs(p.sum() - 1.0) > 1e-12)
        throw DomainError("probabilities must be positive and sum to 1");
}

void check_levels_match(const BranchingProfile& a, const BranchingProfile& b, int depth)
{
    for (int k = 1; k <= depth; ++k)
        if (a.branches(k) != b.branches(k))
            throw std::invalid_argument("system and measure disagree on the number of branches at level " +
                                        std::to_string(k));
}

double nudge_off_integer(double root, bool& flagged)
{
    const double nearest = std::round(root);
    if (root > 0.0 && std::abs(root - nearest) < 1e-9) {
        flagged = true;
        return nearest + 1e-9;
    }
    return root;
}

} // namespace

double stationary_similar_residual(const Eigen::VectorXd& c, const Eigen::VectorXd& p, double q, double d)
{
    return (d * (1.0 - q) * c.array().log() + q * p.array().log()).exp().sum() - 1.0;
}

double stationary_similar_dq(const Eigen::VectorXd& c, const Eigen::VectorXd& p, double q)
{
    if (!(q > 0.0))
        throw DomainError("stationary_similar_dq: q must be positive");
    validate_stationary(c, p);
    const Eigen::ArrayXd lc = c.array().log();
    const Eigen::ArrayXd lp = p.array().log();
    if (is_unit_q(q))
        return (p.array() * lp).sum() / (p.array() * lc).sum();
    const Eigen::ArrayXd base = q * lp;
    auto f = [&](double d) { return log_sum_exp(d * (1.0 - q) * lc + base); };
    const auto found = bisect_monotone(f, q > 1.0, 0.0, 1.0, 0.0, 1e6);
    if (!found.root)
        throw DomainError("stationary_similar_dq: no root below 1e6");
    return *found.root;
}

// ---------------------------------------------------------------------------------------------

CriticalExponents bernoulli_product_dq(const SimilarSystem& system, const BernoulliMeasure& measure, double q,
                                       const ProductLimitOptions& options)
{
    check_q(q, 0.0, "bernoulli_product_dq");
    const int K = options.depth;
    if (K < 8)
        throw std::invalid_argument("bernoulli_product_dq: depth must be at least 8");
    check_levels_match(system.profile(), measure.profile(), K);
    const bool unit = is_unit_q(q);

    std::vector<Eigen::ArrayXd> lc(static_cast<std::size_t>(K)), lp(static_cast<std::size_t>(K));
    for (int i = 1; i <= K; ++i) {
        lc[static_cast<std::size_t>(i - 1)] = system.ratios().at(i).array().log();
        lp[static_cast<std::size_t>(i - 1)] = measure.at(i).array().log();
    }
    auto level_term = [&](int i, double s) {
        const auto& c = lc[static_cast<std::size_t>(i - 1)];
        const auto& l = lp[static_cast<std::size_t>(i - 1)];
        if (unit)
            return (l.exp() * (l - s * c)).sum();
        return log_sum_exp(s * (1.0 - q) * c + q * l);
    };
    // max/min over [3k/4, k] of the log-product relative to level k/2.
    auto indicators = [&](int depth, double s) {
        const int anchor = depth / 2;
        const int from = (3 * depth) / 4;
        double partial = 0.0, hi = -std::numeric_limits<double>::infinity(), lo = -hi;
        for (int i = anchor + 1; i <= depth; ++i) {
            partial += level_term(i, s);
            if (i >= from) {
                hi = std::max(hi, partial);
                lo = std::min(lo, partial);
            }
        }
        return std::pair{hi, lo};
    };

    const bool increasing = q >= 1.0 || unit;
    auto root_of = [&](int depth, bool upper) {
        return bisect_monotone(
            [&](double s) {
                const auto [hi, lo] = indicators(depth, s);
                return upper ? hi : lo;
            },
            increasing, 0.0, 1.0, options.tolerance);
    };
    const auto upper = root_of(K, true);
    const auto lower = root_of(K, false);
    const auto upper_half = root_of(K / 2, true);

    CriticalExponents out;
    out.q = q;
    out.method = TheoryMethod::ProductLimit;
    out.depth_lo = K / 2;
    out.depth_hi = K;
    if (unit) {
        out.d_minus = upper.root;
        out.minus_bracket = upper.bracket;
        out.minus_kind = BoundKind::LowerBound;
        out.d_plus = lower.root;
        out.plus_bracket = lower.bracket;
        out.plus_kind = BoundKind::UpperBound;
    } else if (q > 1.0) {
        out.d_minus = upper.root;
        out.minus_bracket = upper.bracket;
        out.minus_kind = BoundKind::Equal;
        out.d_plus = lower.root;
        out.plus_bracket = lower.bracket;
        out.plus_kind = BoundKind::UpperBound;
    } else {
        out.d_plus = upper.root;
        out.plus_bracket = upper.bracket;
        out.plus_kind = BoundKind::Equal;
        out.d_minus = lower.root;
        out.minus_bracket = lower.bracket;
        out.minus_kind = BoundKind::LowerBound;
    }
    if (upper.root.has_value() != upper_half.root.has_value() ||
        (upper.root && std::abs(*upper.root - *upper_half.root) > options.trend_tolerance)) {
        out.status = TheoryStatus::Indeterminate;
        out.note = "root drifts between depth " + std::to_string(K / 2) + " and " + std::to_string(K);
    }
    return out;
}

// ---------------------------------------------------------------------------------------------

namespace {

// Number of members of Σ*(·, r), stopping early once it exceeds `cap`.
std::size_t count_cut_set(const RatioTable& ratios, double r, std::size_t cap, int max_depth)
{
    std::size_t count = 0;
    struct Frame {
        int level;
        double c;
    };
    std::vector<Frame> stack{{1, 1.0}};
    while (!stack.empty() && count <= cap) {
        const Frame f = stack.back();
        stack.pop_back();
        const auto& ck = ratios.at(f.level);
        for (Eigen::Index j = 0; j < ck.size(); ++j) {
            const double child = f.c * ck(j);
            if (child <= r)
                ++count;
            else if (f.level < max_depth)
                stack.push_back({f.level + 1, child});
            else
                return std::numeric_limits<std::size_t>::max();
        }
    }
    return count;
}

} // namespace

std::vector<double> cutset_scale_grid(const RatioTable& ratios, std::size_t max_words, int points)
{
    if (points < 2)
        throw std::invalid_argument("cutset_scale_grid: need at least two points");
    double c_lower = 1.0;
    ratios.for_each_stored([&](const Eigen::VectorXd& ck) { c_lower = std::min(c_lower, ck.minCoeff()); });
    const double r_max = 0.999 * c_lower;
    double r_min = r_max;
    for (double r = r_max; r > 1e-300; r *= 0.8) {
        if (count_cut_set(ratios, r, max_words, kDefaultMaxDepth) > max_words)
            break;
        r_min = r;
    }
    if (r_min >= r_max)
        throw InsufficientDataError("cutset_scale_grid: word budget too small for any scale below c_*");
    std::vector<double> grid(static_cast<std::size_t>(points));
    const double step = std::log(r_min / r_max) / (points - 1);
    for (int i = 0; i < points; ++i)
        grid[static_cast<std::size_t>(i)] = r_max * std::exp(step * i);
    grid.back() = r_min;
    return grid;
}

CriticalExponents cutset_dq(const SimilarSystem& system, const BernoulliMeasure& measure, double q,
                            std::vector<double> r_grid, const CutsetOptions& options)
{
    if (!(q >= 0.0))
        throw DomainError("cutset_dq: q must be nonnegative");
    if (r_grid.size() < 2)
        throw InsufficientDataError("cutset_dq: need at least two scales");
    std::sort(r_grid.begin(), r_grid.end(), std::greater<>());
    const bool unit = is_unit_q(q);

    const std::size_t first = r_grid.size() / 2;
    struct Scale {
        Eigen::ArrayXd log_c;
        Eigen::ArrayXd log_mu;
    };
    std::vector<Scale> scales;
    for (std::size_t i = first; i < r_grid.size(); ++i) {
        const auto weights = cut_set_log_weights(system.ratios(), measure, r_grid[i], options.max_depth);
        Scale sc{Eigen::ArrayXd(static_cast<Eigen::Index>(weights.size())),
                 Eigen::ArrayXd(static_cast<Eigen::Index>(weights.size()))};
        for (std::size_t j = 0; j < weights.size(); ++j) {
            sc.log_c(static_cast<Eigen::Index>(j)) = weights[j].log_ratio;
            sc.log_mu(static_cast<Eigen::Index>(j)) = weights[j].log_mass;
        }
        scales.push_back(std::move(sc));
    }

    auto log_sum = [&](const Scale& sc, double s) {
        if (unit)
            return (sc.log_mu.exp() * (sc.log_mu - s * sc.log_c)).sum();
        return log_sum_exp(s * (1.0 - q) * sc.log_c + q * sc.log_mu);
    };
    auto indicator = [&](double s, bool upper) {
        double v = upper ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
        for (const auto& sc : scales)
            v = upper ? std::max(v, log_sum(sc, s)) : std::min(v, log_sum(sc, s));
        return v;
    };
    const bool increasing = q >= 1.0 || unit;
    const auto upper = bisect_monotone([&](double s) { return indicator(s, true); }, increasing, 0.0, 1.0,
                                       options.tolerance);
    const auto lower = bisect_monotone([&](double s) { return indicator(s, false); }, increasing, 0.0, 1.0,
                                       options.tolerance);

    CriticalExponents out;
    out.q = q;
    out.method = TheoryMethod::CutsetTruncation;
    out.depth_lo = static_cast<int>(first);
    out.depth_hi = static_cast<int>(r_grid.size()) - 1;
    if (q >= 1.0 || unit) {
        out.d_minus = upper.root;
        out.minus_bracket = upper.bracket;
        out.d_plus = lower.root;
        out.plus_bracket = lower.bracket;
    } else {
        out.d_minus = lower.root;
        out.minus_bracket = lower.bracket;
        out.d_plus = upper.root;
        out.plus_bracket = upper.bracket;
    }
    return out;
}

// ---------------------------------------------------------------------------------------------

namespace {

/// Per-word (log P_0 .. log P_d, log p_u) at selected depths, either for every word or for sampled words.
struct WordLogs {
    int d = 0;
    bool sampled = false;
    std::size_t count = 0;                      ///< words per depth
    std::map<int, std::vector<double>> by_depth; ///< stride d + 2

    std::size_t stride() const { return static_cast<std::size_t>(d) + 2; }
};

void record(WordLogs& logs, int depth, const LogWordProduct<double>& product, double log_p)
{
    auto it = logs.by_depth.find(depth);
    if (it == logs.by_depth.end())
        return;
    const auto prefix = product.log_prefix_products();
    it->second.insert(it->second.end(), prefix.begin(), prefix.end());
    it->second.push_back(log_p);
}

void enumerate_words(const AffineSystem& system, const BernoulliMeasure& measure, int level, int max_level,
                     const LogWordProduct<double>& product, double log_p, WordLogs& logs)
{
    for (int j = 1; j <= system.profile().branches(level); ++j) {
        LogWordProduct<double> child = product;
        child.push(system.compounds(level, j));
        const double child_log_p = log_p + std::log(measure.probability(level, j));
        record(logs, level, child, child_log_p);
        if (level < max_level)
            enumerate_words(system, measure, level + 1, max_level, child, child_log_p, logs);
    }
}

WordLogs collect_word_logs(const AffineSystem& system, const BernoulliMeasure& measure, const std::vector<int>& depths,
                           const AffineOptions& options)
{
    WordLogs logs;
    logs.d = system.dimension();
    for (int k : depths)
        logs.by_depth[k];
    const int K = *std::max_element(depths.begin(), depths.end());
    const std::size_t words = system.profile().words_at_depth(K, options.exhaustive_budget + 1);
    if (words <= options.exhaustive_budget) {
        enumerate_words(system, measure, 1, K, LogWordProduct<double>(logs.d), 0.0, logs);
        logs.count = 0; // varies by depth
        return logs;
    }
    logs.sampled = true;
    logs.count = options.samples;
    std::mt19937_64 rng(options.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t i = 0; i < options.samples; ++i) {
        LogWordProduct<double> product(logs.d);
        double log_p = 0.0;
        for (int level = 1; level <= K; ++level) {
            const auto& p = measure.at(level);
            double u = unit(rng);
            int j = 0;
            while (j + 1 < p.size() && u >= p(j)) {
                u -= p(j);
                ++j;
            }
            product.push(system.compounds(level, j + 1));
            log_p += std::log(p(j));
            record(logs, level, product, log_p);
        }
    }
    return logs;
}

// log A_k(s) for q != 1, or the entropy sum h_k(s) for q = 1.
double level_sum(const WordLogs& logs, int depth, double q, double s, double* relative_error = nullptr)
{
    const auto& data = logs.by_depth.at(depth);
    const std::size_t stride = logs.stride();
    const std::size_t n = data.size() / stride;
    const bool unit = is_unit_q(q);
    Eigen::ArrayXd terms(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = data.data() + i * stride;
        const double log_psi = log_psi_from_prefix<double>({row, static_cast<std::size_t>(logs.d) + 1}, s);
        const double log_p = row[stride - 1];
        if (unit)
            terms(static_cast<Eigen::Index>(i)) = logs.sampled ? log_p - log_psi : std::exp(log_p) * (log_p - log_psi);
        else
            terms(static_cast<Eigen::Index>(i)) = (1.0 - q) * log_psi + (logs.sampled ? q - 1.0 : q) * log_p;
    }
    if (unit)
        return logs.sampled ? terms.mean() : terms.sum();
    const double lse = log_sum_exp(terms);
    if (!logs.sampled)
        return lse;
    if (relative_error) {
        const Eigen::ArrayXd w = (terms - lse).exp() * static_cast<double>(n); // normalized to mean 1
        const double var = (w - 1.0).square().sum() / static_cast<double>(n - 1);
        *relative_error = std::sqrt(var / static_cast<double>(n));
    }
    return lse - std::log(static_cast<double>(n));
}

} // namespace

CriticalExponents affine_dq_sum(const AffineSystem& system, const BernoulliMeasure& measure, double q,
                                const AffineOptions& options)
{
    if (!(q > 1.0) || is_unit_q(q))
        throw DomainError("affine_dq_sum: requires q > 1");
    const int K = options.depth;
    if (K < 4)
        throw std::invalid_argument("affine_dq_sum: depth must be at least 4");
    check_levels_match(system.profile(), measure.profile(), K);
    const int K0 = K / 2;
    const int Km = (K0 + K) / 2;
    const auto logs = collect_word_logs(system, measure, {K0, Km, K}, options);

    auto rate = [&](int a, int b) {
        return [&, a, b](double s) { return (level_sum(logs, b, q, s) - level_sum(logs, a, q, s)) / (b - a); };
    };
    const auto full = bisect_monotone(rate(K0, K), true, 0.0, 1.0, options.tolerance, 1e4);
    const auto first = bisect_monotone(rate(K0, Km), true, 0.0, 1.0, options.tolerance, 1e4);
    const auto second = bisect_monotone(rate(Km, K), true, 0.0, 1.0, options.tolerance, 1e4);

    CriticalExponents out;
    out.q = q;
    out.method = TheoryMethod::AffineKLimit;
    out.depth_lo = K0;
    out.depth_hi = K;
    out.plus_computed = false;
    out.d_minus = full.root;
    if (full.root) {
        out.d_minus = nudge_off_integer(*full.root, out.near_integer);
        out.minus_bracket = full.bracket;
        if (first.root && second.root) {
            out.minus_bracket.lo = std::min({out.minus_bracket.lo, *first.root, *second.root});
            out.minus_bracket.hi = std::max({out.minus_bracket.hi, *first.root, *second.root});
        }
        if (logs.sampled)
            level_sum(logs, K, q, *full.root, &out.mc_relative_error);
    }
    if (!first.root || !second.root || !full.root || std::abs(*first.root - *second.root) > options.window_tolerance) {
        out.status = TheoryStatus::Indeterminate;
        out.note = "half-window growth rates disagree";
    }
    if (logs.sampled)
        out.note += (out.note.empty() ? "" : "; ") + std::string("importance-sampled A_k");
    return out;
}

CriticalExponents stationary_affine_dq(const std::vector<Eigen::MatrixXd>& maps, const Eigen::VectorXd& p, double q,
                                       const AffineOptions& options)
{
    if (!(q >= 1.0) && !is_unit_q(q))
        throw DomainError("stationary_affine_dq: requires q >= 1");
    if (maps.empty() || static_cast<Eigen::Index>(maps.size()) != p.size())
        throw std::invalid_argument("stationary_affine_dq: one probability per map required");
    const auto system = AffineSystem::stationary(maps);
    const auto measure = BernoulliMeasure::stationary(p);
    const bool unit = is_unit_q(q);

    AffineOptions opts = options;
    const auto n = static_cast<double>(maps.size());
    const int feasible = static_cast<int>(std::floor(std::log(static_cast<double>(opts.exhaustive_budget)) / std::log(n)));
    if (maps.size() == 1)
        opts.depth = std::max(opts.depth, 6);
    else if (feasible >= 6)
        opts.depth = std::min(opts.depth, feasible);
    const int K = opts.depth;
    if (K < 6)
        throw std::invalid_argument("stationary_affine_dq: depth must be at least 6");
    const auto logs = collect_word_logs(system, measure, {K - 5, K - 4, K - 3, K - 2, K - 1, K}, opts);

    // Two-step increments e_k = (S_k - S_{k-2}) / 2 cancel period-two oscillation; with
    // S_k ≈ kλ + a log k, the combination ((k-1) e_k - (k-3) e_{k-2}) / 2 also removes a.
    auto extrapolated = [&](int k) {
        return [&, k](double s) {
            const double s0 = level_sum(logs, k, q, s);
            const double s2 = level_sum(logs, k - 2, q, s);
            const double s4 = level_sum(logs, k - 4, q, s);
            return ((k - 1) * (s0 - s2) - (k - 3) * (s2 - s4)) / 4.0;
        };
    };
    const auto root_k = bisect_monotone(extrapolated(K), true, 0.0, 1.0, opts.tolerance, 1e4);
    const auto root_prev = bisect_monotone(extrapolated(K - 1), true, 0.0, 1.0, opts.tolerance, 1e4);

    CriticalExponents out;
    out.q = q;
    out.method = TheoryMethod::AffineKLimit;
    out.depth_lo = K - 5;
    out.depth_hi = K;
    if (!root_k.root || !root_prev.root) {
        out.status = TheoryStatus::Indeterminate;
        out.note = "no sign change of the extrapolated growth rate";
        return out;
    }
    const double root = nudge_off_integer(*root_k.root, out.near_integer);
    Bracket bracket{std::min(root, *root_prev.root), std::max(root, *root_prev.root)};
    if (!unit) {
        const auto bound = bisect_monotone([&](double s) { return level_sum(logs, K, q, s) / K; }, true, 0.0, 1.0,
                                           opts.tolerance, 1e4);
        if (bound.root)
            bracket.hi = std::max(bracket.hi, *bound.root);
    }
    out.d_minus = root;
    out.d_plus = root;
    out.minus_bracket = bracket;
    out.plus_bracket = bracket;
    if (logs.sampled) {
        if (!unit)
            level_sum(logs, K, q, root, &out.mc_relative_error);
        out.note = "importance-sampled A_k";
    }
    if (std::abs(*root_k.root - *root_prev.root) > opts.trend_tolerance) {
        out.status = TheoryStatus::Indeterminate;
        out.note += (out.note.empty() ? "" : "; ") + std::string("extrapolated root drifts between K-1 and K");
    }
    return out;
}

double lq_spectrum_from_dq(double d_q, double q)
{
    if (is_unit_q(q))
        throw DomainError("lq_spectrum_from_dq: q = 1 is excluded");
    return (1.0 - q) * d_q;
}

} // namespace nifs
