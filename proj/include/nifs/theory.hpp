#ifndef NIFS_THEORY_HPP
#define NIFS_THEORY_HPP

#include <Eigen/Core>

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nifs/code_space.hpp"
#include "nifs/systems.hpp"

namespace nifs {

enum class TheoryMethod { ClosedForm, ProductLimit, CutsetTruncation, AffineKLimit };
enum class TheoryStatus { Ok, Indeterminate };

/// How a reported exponent relates to the true critical value.
enum class BoundKind { Equal, LowerBound, UpperBound };

std::string to_string(TheoryMethod method);
std::string to_string(TheoryStatus status);
std::string to_string(BoundKind kind);

struct Bracket {
    double lo = 0.0;
    double hi = 0.0;
    double width() const { return hi - lo; }
    bool contains(double x) const { return lo <= x && x <= hi; }
};

struct CriticalExponents {
    double q = 0.0;
    std::optional<double> d_minus; ///< nullopt: unbounded
    std::optional<double> d_plus;  ///< nullopt: unbounded, or not computed when !plus_computed
    bool plus_computed = true;
    BoundKind minus_kind = BoundKind::Equal;
    BoundKind plus_kind = BoundKind::Equal;
    Bracket minus_bracket;
    Bracket plus_bracket;
    TheoryMethod method = TheoryMethod::ClosedForm;
    TheoryStatus status = TheoryStatus::Ok;
    int depth_lo = 0; ///< first level (or scale index) of the trailing window
    int depth_hi = 0;
    double mc_relative_error = 0.0; ///< nonzero only for importance-sampled sums
    bool near_integer = false;      ///< root was nudged off an integer
    std::string note;
};

/// Below this distance from 1 a q is treated as q = 1.
inline constexpr double kUnitQTolerance = 1e-6;

bool is_unit_q(double q);

/**
 * Root of a monotone function on [lo, ∞) by bisection.
 *
 * `hi` is doubled until the sign changes (up to `hi_cap`). Returns nullopt when no sign
 * change is found, and `lo` when the function already has the "after root" sign at `lo`.
 */
struct RootSearch {
    std::optional<double> root;
    Bracket bracket;
};

template <class F>
RootSearch bisect_monotone(F&& f, bool increasing, double lo, double hi, double tol, double hi_cap = 1e3)
{
    auto after = [&](double v) { return increasing ? v > 0.0 : v < 0.0; };
    auto before = [&](double v) { return increasing ? v < 0.0 : v > 0.0; };
    const double flo = f(lo);
    if (!before(flo))
        return {lo, {lo, lo}};
    double fhi = f(hi);
    while (!after(fhi) && fhi != 0.0) {
        lo = hi;
        hi *= 2.0;
        if (hi > hi_cap)
            return {std::nullopt, {lo, hi_cap}};
        fhi = f(hi);
    }
    if (fhi == 0.0)
        return {hi, {hi, hi}};
    for (int iter = 0; iter < 200 && hi - lo > tol; ++iter) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi)
            break;
        const double fm = f(mid);
        if (fm == 0.0)
            return {mid, {mid, mid}};
        (after(fm) ? hi : lo) = mid;
    }
    return {0.5 * (lo + hi), {lo, hi}};
}

/// Root d of Σ c_i^{d(1-q)} p_i^q = 1 (q ≠ 1), or Σ p log p / Σ p log c (q = 1).
double stationary_similar_dq(const Eigen::VectorXd& c, const Eigen::VectorXd& p, double q);

/// Σ c_i^{d(1-q)} p_i^q - 1 at d.
double stationary_similar_residual(const Eigen::VectorXd& c, const Eigen::VectorXd& p, double q, double d);

struct ProductLimitOptions {
    int depth = 200;
    double tolerance = 1e-10; ///< s-bracket width
    double trend_tolerance = 1e-2;
};

/**
 * Exponents from the level products ∏_{i≤k} Σ_j c_{i,j}^{s(1-q)} p_{i,j}^q (entropy sums at q = 1).
 *
 * Finiteness of limsup/liminf is judged on the trailing window [K/2, K]: the log-product
 * relative to level K/2, maximized (limsup) or minimized (liminf) over [3K/4, K].
 */
CriticalExponents bernoulli_product_dq(const SimilarSystem& system, const BernoulliMeasure& measure, double q,
                                       const ProductLimitOptions& options = {});

struct CutsetOptions {
    double tolerance = 1e-10;
    int max_depth = kDefaultMaxDepth;
};

/// Geometric r-ladder below c_* whose finest cut set stays under `max_words`.
std::vector<double> cutset_scale_grid(const RatioTable& ratios, std::size_t max_words = std::size_t{1} << 17,
                                      int points = 16);

/**
 * Exponents from Σ_{u∈Σ*(s,r)} c_u^{s(1-q)} μ(C_u)^q over a decreasing r-grid.
 *
 * limsup/liminf over r → 0 are replaced by max/min over the finer half of the grid. q = 0 is
 * allowed and gives the box-counting exponent of the support.
 */
CriticalExponents cutset_dq(const SimilarSystem& system, const BernoulliMeasure& measure, double q,
                            std::vector<double> r_grid, const CutsetOptions& options = {});

struct AffineOptions {
    int depth = 20;                                   ///< K
    std::size_t exhaustive_budget = std::size_t{1} << 20; ///< words at depth K before switching to sampling
    std::size_t samples = 1000000;
    std::uint64_t seed = 0x5eedULL;
    double tolerance = 1e-9;
    double trend_tolerance = 1e-3;  ///< stationary solver: allowed drift of the root between K-1 and K
    double window_tolerance = 0.05; ///< affine_dq_sum: allowed gap between the two half-window roots
};

/**
 * d_q^- for q > 1 from the growth of A_k(s) = Σ_{|u|=k} ψ^s(T_u)^{1-q} p_u^q.
 *
 * The rate is (log A_K - log A_{K/2}) / (K - K/2). Beyond the exhaustive budget A_k is
 * estimated as E_μ[ψ^s(T_u)^{1-q} p_u^{q-1}] from sampled words.
 */
CriticalExponents affine_dq_sum(const AffineSystem& system, const BernoulliMeasure& measure, double q,
                                const AffineOptions& options = {});

/**
 * Stationary affine exponent for q >= 1.
 *
 * q > 1: root of lim (1/k) log A_k(s), estimated from two-step increments of log A_k with a 1/k
 * extrapolation (depths K-5..K); the root of (1/K) log A_K is an upper bound because A_k is supermultiplicative.
 * q = 1: root of lim (1/k) Σ_{|u|=k} p_u log(p_u / ψ^s(T_u)), estimated the same way.
 */
CriticalExponents stationary_affine_dq(const std::vector<Eigen::MatrixXd>& maps, const Eigen::VectorXd& p, double q,
                                       const AffineOptions& options = {});

/// τ(q) = (1 - q) d_q.
double lq_spectrum_from_dq(double d_q, double q);

/// min{d_q, d}.
inline double clamp_dimension(double d_q, int d) { return std::min(d_q, static_cast<double>(d)); }

} // namespace nifs

#endif // NIFS_THEORY_HPP
