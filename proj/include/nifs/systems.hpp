#ifndef NIFS_SYSTEMS_HPP
#define NIFS_SYSTEMS_HPP

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "nifs/code_space.hpp"
#include "nifs/singular_value.hpp"

namespace nifs {

/// Level-varying similarities S_{k,j} = c_{k,j} O_{k,j}.
class SimilarSystem {
public:
    SimilarSystem() = default;
    /// `orthogonal`, when given, supplies the rotation/reflection part of every map (identity otherwise).
    explicit SimilarSystem(RatioTable ratios, int dimension = 1,
                           std::optional<LevelTable<std::vector<Eigen::MatrixXd>>> orthogonal = std::nullopt,
                           int max_depth = kDefaultMaxDepth);

    static SimilarSystem stationary(const Eigen::VectorXd& c, int dimension = 1)
    {
        return SimilarSystem(RatioTable::stationary(c), dimension);
    }

    const BranchingProfile& profile() const noexcept { return profile_; }
    const RatioTable& ratios() const noexcept { return ratios_; }
    int dimension() const noexcept { return dimension_; }
    double ratio(int level, int letter) const { return ratios_.at(level)(letter - 1); }

    double c_lower() const noexcept { return c_lower_; } ///< c_* = inf c_{k,j}
    double c_upper() const noexcept { return c_upper_; } ///< c^* = sup c_{k,j}

    Eigen::MatrixXd linear(int level, int letter) const;

private:
    RatioTable ratios_;
    std::optional<LevelTable<std::vector<Eigen::MatrixXd>>> orthogonal_;
    BranchingProfile profile_;
    int dimension_ = 1;
    double c_lower_ = 0.0;
    double c_upper_ = 0.0;
};

/// Level-varying nonsingular linear parts T_{k,j}.
class AffineSystem {
public:
    AffineSystem() = default;
    explicit AffineSystem(LevelTable<std::vector<Eigen::MatrixXd>> matrices, int max_depth = kDefaultMaxDepth);

    static AffineSystem stationary(std::vector<Eigen::MatrixXd> maps)
    {
        return AffineSystem(LevelTable<std::vector<Eigen::MatrixXd>>::stationary(std::move(maps)));
    }

    const BranchingProfile& profile() const noexcept { return profile_; }
    int dimension() const noexcept { return dimension_; }
    const Eigen::MatrixXd& matrix(int level, int letter) const { return matrices_.at(level)[letter - 1]; }
    const CompoundSet<double>& compounds(int level, int letter) const { return compounds_.at(level)[letter - 1]; }
    const LevelTable<std::vector<Eigen::MatrixXd>>& table() const noexcept { return matrices_; }

    double alpha_minus() const noexcept { return alpha_minus_; }
    double alpha_plus() const noexcept { return alpha_plus_; }
    /// sup of the operator norms, which equals alpha_plus.
    double max_norm() const noexcept { return alpha_plus_; }

private:
    LevelTable<std::vector<Eigen::MatrixXd>> matrices_;
    LevelTable<std::vector<CompoundSet<double>>> compounds_;
    BranchingProfile profile_;
    int dimension_ = 0;
    double alpha_minus_ = 0.0;
    double alpha_plus_ = 0.0;
};

/// A similar system viewed as an affine one with T_{k,j} = c_{k,j} O_{k,j}.
AffineSystem as_affine(const SimilarSystem& system);

using ContractionSystem = std::variant<SimilarSystem, AffineSystem>;

int dimension(const ContractionSystem& system);
const BranchingProfile& profile(const ContractionSystem& system);
Eigen::MatrixXd linear_part(const ContractionSystem& system, int level, int letter);
/// α_+ (c^* for similar systems): the uniform Lipschitz bound of the linear parts.
double contraction_bound(const ContractionSystem& system);

/// ω_u given explicitly for finitely many words.
struct ExplicitTranslations {
    std::map<Word, Eigen::VectorXd> table;
};

/// ω_u i.i.d. uniform on the box [lo, hi], reproducible from (seed, u).
struct RandomTranslations {
    Eigen::VectorXd lo;
    Eigen::VectorXd hi;
    std::uint64_t seed = 0;
};

/**
 * ω_u drawn from a finite set Γ = (a_1, ..., a_τ).
 *
 * The index used for ω_{u_1...u_j} is, in order of precedence: an entry of `overrides`,
 * the (level, letter) entry of `level_assignment`, or the letter u_j itself.
 * All indices are 1-based.
 */
struct FiniteSetTranslations {
    std::vector<Eigen::VectorXd> gamma;
    std::optional<LevelTable<std::vector<int>>> level_assignment;
    std::map<Word, int> overrides;
};

class TranslationScheme {
public:
    using Variant = std::variant<ExplicitTranslations, RandomTranslations, FiniteSetTranslations>;

    TranslationScheme() = default;
    TranslationScheme(Variant v); // NOLINT(google-explicit-constructor)
    TranslationScheme(ExplicitTranslations v) : TranslationScheme(Variant(std::move(v))) {}  // NOLINT
    TranslationScheme(RandomTranslations v) : TranslationScheme(Variant(std::move(v))) {}    // NOLINT
    TranslationScheme(FiniteSetTranslations v) : TranslationScheme(Variant(std::move(v))) {} // NOLINT

    const Variant& variant() const noexcept { return v_; }
    int dimension() const;

    /// ω for the word `prefix` (|prefix| >= 1).
    Eigen::VectorXd translation(const Word& prefix) const;

    /// sup ||ω|| over everything the scheme can produce.
    double sup_norm() const;

    bool is_random() const noexcept { return std::holds_alternative<RandomTranslations>(v_); }

private:
    Variant v_;
};

/// Key that determines a random translation: a hash chain over (seed, u_1, ..., u_k).
std::uint64_t random_translation_key(std::uint64_t seed, std::span<const int> letters);
Eigen::VectorXd random_translation(const RandomTranslations& scheme, std::uint64_t key);

/// A realization of Γ perturbed by independent uniform draws from the ball of radius rho.
FiniteSetTranslations randomize_gamma(const FiniteSetTranslations& scheme, double rho, std::uint64_t seed);

struct Projection {
    Eigen::VectorXd point;
    double truncation_bound; ///< sup||ω|| α_+^depth / (1 - α_+)
};

/// Partial sum ω_{u_1} + S_{1,u_1} ω_{u_1 u_2} + ... through `depth` terms.
Projection project_word(const ContractionSystem& system, const TranslationScheme& scheme, const Word& u, int depth);

struct SampleMetadata {
    int depth = 0;
    std::uint64_t seed = 0;
    std::size_t count = 0;
    double truncation_bound = 0.0;
    bool resolution_warning = false;
};

/// Weighted point cloud standing in for the projected measure. Points are columns.
struct AttractorSample {
    Eigen::MatrixXd points;
    Eigen::VectorXd weights;
    SampleMetadata metadata;

    int dimension() const { return static_cast<int>(points.rows()); }
    std::size_t size() const { return static_cast<std::size_t>(points.cols()); }
};

/// Smallest depth with α_+^depth <= target_resolution.
int default_sampling_depth(double alpha_plus, double target_resolution);

struct SamplingOptions {
    double target_resolution = 0.0; ///< 0 disables the resolution check
    unsigned workers = 0;           ///< 0 picks the hardware concurrency
};

/**
 * `count` i.i.d. words from the Bernoulli measure, each projected through `depth` levels.
 *
 * Points are generated in fixed blocks with block-indexed RNG streams, so the output is
 * identical for any number of workers.
 */
AttractorSample sample_measure(const ContractionSystem& system, const TranslationScheme& scheme,
                               const BernoulliMeasure& measure, std::size_t count, int depth, std::uint64_t seed,
                               const SamplingOptions& options = {});

/// J_u = o + L [0,1]^d: the image of the reference box under Ψ_u.
struct BasicSet {
    Eigen::VectorXd origin;
    Eigen::MatrixXd linear;
    Eigen::VectorXd lo; ///< axis-aligned bounding box
    Eigen::VectorXd hi;
    double diameter = 0.0;
};

BasicSet basic_set(const ContractionSystem& system, const TranslationScheme& scheme, const Word& u);

enum class SeparationKind { Open, Strong, Gap };

struct SeparationReport {
    SeparationKind kind = SeparationKind::Strong;
    int depth = 0;
    bool holds_at_depth = true;
    double worst_gap_ratio = 0.0; ///< inf over parents of (min sibling gap) / |J_u|
    std::pair<Word, Word> witness;
};

/**
 * Finite-depth separation certificate on bounding boxes of the basic sets.
 *
 * Disjoint boxes certify disjoint sets; overlapping boxes of rotated or sheared sets may
 * report a failure the sets themselves do not have.
 */
SeparationReport check_separation(const ContractionSystem& system, const TranslationScheme& scheme, int depth,
                                  SeparationKind kind);

std::string to_string(SeparationKind kind);

/// Headerless CSV, one row per point: x_1,...,x_d,weight. Values are written shortest round-trip.
void write_sample_csv(std::ostream& os, const AttractorSample& sample);
AttractorSample read_sample_csv(std::istream& is);

/// Little-endian binary: magic "NIFSPTS1", u32 d, u64 n, then n rows of d + 1 doubles.
void write_sample_binary(std::ostream& os, const AttractorSample& sample);
AttractorSample read_sample_binary(std::istream& is);

} // namespace nifs

#endif // NIFS_SYSTEMS_HPP
