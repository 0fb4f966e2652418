#include "nifs/systems.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

namespace nifs {

namespace {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

std::uint64_t splitmix(std::uint64_t z)
{
    z += kGolden;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double unit_interval(std::uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

void require_dimension(const Eigen::MatrixXd& m, int d, const char* what)
{
    if (m.rows() != d || m.cols() != d)
        throw std::invalid_argument(std::string(what) + ": expected a " + std::to_string(d) + "x" +
                                    std::to_string(d) + " matrix");
}

} // namespace

// ---------------------------------------------------------------------------------------------
// Systems

SimilarSystem::SimilarSystem(RatioTable ratios, int dimension,
                             std::optional<LevelTable<std::vector<Eigen::MatrixXd>>> orthogonal, int max_depth)
    : ratios_(std::move(ratios)), orthogonal_(std::move(orthogonal)), dimension_(dimension)
{
    if (dimension_ < 1)
        throw std::invalid_argument("SimilarSystem: dimension must be positive");
    c_lower_ = 1.0;
    c_upper_ = 0.0;
    ratios_.for_each_stored([&](const Eigen::VectorXd& ck) {
        if (ck.size() < 1)
            throw std::invalid_argument("SimilarSystem: empty ratio vector");
        c_lower_ = std::min(c_lower_, ck.minCoeff());
        c_upper_ = std::max(c_upper_, ck.maxCoeff());
    });
    if (!(c_lower_ > 0.0 && c_upper_ < 1.0))
        throw DomainError("SimilarSystem: ratios must lie in (0, 1)");
    profile_ = BranchingProfile(ratios_.map([](const Eigen::VectorXd& ck) { return static_cast<int>(ck.size()); }),
                                max_depth);
    if (orthogonal_) {
        if (orthogonal_->head().size() != ratios_.head().size() || orthogonal_->tail().size() != ratios_.tail().size())
            throw std::invalid_argument("SimilarSystem: orthogonal table must share the ratio table's layout");
        for (int level = 1; level <= ratios_.stored_levels(); ++level) {
            const auto& ok = orthogonal_->at(level);
            if (static_cast<Eigen::Index>(ok.size()) != ratios_.at(level).size())
                throw std::invalid_argument("SimilarSystem: orthogonal parts do not match the branching profile");
            for (const auto& o : ok) {
                require_dimension(o, dimension_, "SimilarSystem");
                const Eigen::MatrixXd gram = o.transpose() * o;
                if (!gram.isApprox(Eigen::MatrixXd::Identity(dimension_, dimension_), 1e-10))
                    throw std::invalid_argument("SimilarSystem: orthogonal part is not orthogonal");
            }
        }
    }
}

Eigen::MatrixXd SimilarSystem::linear(int level, int letter) const
{
    const double c = ratio(level, letter);
    if (orthogonal_)
        return c * orthogonal_->at(level)[letter - 1];
    return c * Eigen::MatrixXd::Identity(dimension_, dimension_);
}

AffineSystem::AffineSystem(LevelTable<std::vector<Eigen::MatrixXd>> matrices, int max_depth)
    : matrices_(std::move(matrices))
{
    const auto& first = matrices_.tail().front();
    if (first.empty())
        throw std::invalid_argument("AffineSystem: empty level");
    dimension_ = static_cast<int>(first.front().rows());
    alpha_minus_ = std::numeric_limits<double>::infinity();
    alpha_plus_ = 0.0;
    matrices_.for_each_stored([&](const std::vector<Eigen::MatrixXd>& level) {
        if (level.empty())
            throw std::invalid_argument("AffineSystem: empty level");
        for (const auto& T : level) {
            require_dimension(T, dimension_, "AffineSystem");
            const auto spectrum = singular_values(T);
            alpha_plus_ = std::max(alpha_plus_, spectrum.values(0));
            alpha_minus_ = std::min(alpha_minus_, spectrum.values(dimension_ - 1));
        }
    });
    if (!(alpha_minus_ > 0.0 && alpha_plus_ < 1.0))
        throw DomainError("AffineSystem: linear parts must be contracting (0 < α_- <= α_+ < 1)");
    compounds_ = matrices_.map([](const std::vector<Eigen::MatrixXd>& level) {
        std::vector<CompoundSet<double>> out;
        out.reserve(level.size());
        for (const auto& T : level)
            out.emplace_back(T);
        return out;
    });
    profile_ = BranchingProfile(
        matrices_.map([](const std::vector<Eigen::MatrixXd>& level) { return static_cast<int>(level.size()); }),
        max_depth);
}

AffineSystem as_affine(const SimilarSystem& system)
{
    std::vector<std::vector<Eigen::MatrixXd>> head, tail;
    const auto& ratios = system.ratios();
    const int h = static_cast<int>(ratios.head().size());
    for (int level = 1; level <= ratios.stored_levels(); ++level) {
        std::vector<Eigen::MatrixXd> maps;
        for (int j = 1; j <= ratios.at(level).size(); ++j)
            maps.push_back(system.linear(level, j));
        (level <= h ? head : tail).push_back(std::move(maps));
    }
    return AffineSystem({std::move(head), std::move(tail)}, system.profile().max_depth());
}

int dimension(const ContractionSystem& system)
{
    return std::visit([](const auto& s) { return s.dimension(); }, system);
}

const BranchingProfile& profile(const ContractionSystem& system)
{
    return std::visit([](const auto& s) -> const BranchingProfile& { return s.profile(); }, system);
}

Eigen::MatrixXd linear_part(const ContractionSystem& system, int level, int letter)
{
    if (const auto* sim = std::get_if<SimilarSystem>(&system))
        return sim->linear(level, letter);
    return std::get<AffineSystem>(system).matrix(level, letter);
}

double contraction_bound(const ContractionSystem& system)
{
    if (const auto* sim = std::get_if<SimilarSystem>(&system))
        return sim->c_upper();
    return std::get<AffineSystem>(system).alpha_plus();
}

// ---------------------------------------------------------------------------------------------
// Translations

TranslationScheme::TranslationScheme(Variant v) : v_(std::move(v))
{
    if (const auto* fs = std::get_if<FiniteSetTranslations>(&v_)) {
        if (fs->gamma.empty())
            throw std::invalid_argument("FiniteSetTranslations: Γ must be non-empty");
        const auto tau = static_cast<int>(fs->gamma.size());
        auto check = [tau](int idx) {
            if (idx < 1 || idx > tau)
                throw std::invalid_argument("FiniteSetTranslations: index outside 1.." + std::to_string(tau));
        };
        if (fs->level_assignment)
            fs->level_assignment->for_each_stored([&](const std::vector<int>& row) {
                for (int idx : row)
                    check(idx);
            });
        for (const auto& [u, idx] : fs->overrides)
            check(idx);
        for (const auto& a : fs->gamma)
            if (a.size() != fs->gamma.front().size())
                throw std::invalid_argument("FiniteSetTranslations: translations differ in dimension");
    }
    if (const auto* rt = std::get_if<RandomTranslations>(&v_)) {
        if (rt->lo.size() != rt->hi.size() || rt->lo.size() == 0 || (rt->hi.array() < rt->lo.array()).any())
            throw std::invalid_argument("RandomTranslations: invalid box");
    }
}

int TranslationScheme::dimension() const
{
    return std::visit(
        [](const auto& s) -> int {
            using S = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<S, ExplicitTranslations>)
                return s.table.empty() ? 0 : static_cast<int>(s.table.begin()->second.size());
            else if constexpr (std::is_same_v<S, RandomTranslations>)
                return static_cast<int>(s.lo.size());
            else
                return static_cast<int>(s.gamma.front().size());
        },
        v_);
}

std::uint64_t random_translation_key(std::uint64_t seed, std::span<const int> letters)
{
    std::uint64_t key = splitmix(seed);
    for (int letter : letters)
        key = splitmix(key ^ static_cast<std::uint64_t>(letter));
    return key;
}

Eigen::VectorXd random_translation(const RandomTranslations& scheme, std::uint64_t key)
{
    Eigen::VectorXd w(scheme.lo.size());
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        const double u = unit_interval(splitmix(key + kGolden * static_cast<std::uint64_t>(i + 1)));
        w(i) = scheme.lo(i) + (scheme.hi(i) - scheme.lo(i)) * u;
    }
    return w;
}

namespace {

int finite_set_index(const FiniteSetTranslations& fs, const Word& prefix)
{
    if (!fs.overrides.empty()) {
        if (auto it = fs.overrides.find(prefix); it != fs.overrides.end())
            return it->second;
    }
    const int level = static_cast<int>(prefix.size());
    const int letter = prefix[prefix.size() - 1];
    if (fs.level_assignment) {
        const auto& row = fs.level_assignment->at(level);
        if (letter > static_cast<int>(row.size()))
            throw IncompleteSchemeError("finite-set assignment has no entry for letter " + std::to_string(letter) +
                                        " at level " + std::to_string(level));
        return row[letter - 1];
    }
    if (letter > static_cast<int>(fs.gamma.size()))
        throw IncompleteSchemeError("letter " + std::to_string(letter) + " has no translation in Γ");
    return letter;
}

} // namespace

Eigen::VectorXd TranslationScheme::translation(const Word& prefix) const
{
    if (prefix.empty())
        throw std::invalid_argument("translation: the empty word carries no translation");
    if (const auto* ex = std::get_if<ExplicitTranslations>(&v_)) {
        auto it = ex->table.find(prefix);
        if (it == ex->table.end())
            throw IncompleteSchemeError("no explicit translation for word " + prefix.to_string());
        return it->second;
    }
    if (const auto* rt = std::get_if<RandomTranslations>(&v_))
        return random_translation(*rt, random_translation_key(rt->seed, prefix.letters()));
    const auto& fs = std::get<FiniteSetTranslations>(v_);
    return fs.gamma[static_cast<std::size_t>(finite_set_index(fs, prefix) - 1)];
}

double TranslationScheme::sup_norm() const
{
    if (const auto* ex = std::get_if<ExplicitTranslations>(&v_)) {
        double m = 0.0;
        for (const auto& [u, w] : ex->table)
            m = std::max(m, w.norm());
        return m;
    }
    if (const auto* rt = std::get_if<RandomTranslations>(&v_))
        return rt->lo.cwiseAbs().cwiseMax(rt->hi.cwiseAbs()).norm();
    double m = 0.0;
    for (const auto& a : std::get<FiniteSetTranslations>(v_).gamma)
        m = std::max(m, a.norm());
    return m;
}

FiniteSetTranslations randomize_gamma(const FiniteSetTranslations& scheme, double rho, std::uint64_t seed)
{
    FiniteSetTranslations out = scheme;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> uniform;
    for (auto& a : out.gamma) {
        Eigen::VectorXd dir(a.size());
        for (Eigen::Index i = 0; i < dir.size(); ++i)
            dir(i) = normal(rng);
        const double n = dir.norm();
        if (n == 0.0)
            continue;
        const double radius = rho * std::pow(uniform(rng), 1.0 / static_cast<double>(a.size()));
        a += radius / n * dir;
    }
    return out;
}

namespace {

/// Walks down one branch of the code tree, producing ω for each successive prefix.
class TranslationCursor {
public:
    explicit TranslationCursor(const TranslationScheme& scheme) : scheme_(&scheme)
    {
        if (const auto* rt = std::get_if<RandomTranslations>(&scheme.variant()))
            random_ = rt;
        if (const auto* fs = std::get_if<FiniteSetTranslations>(&scheme.variant()))
            finite_ = fs;
        needs_word_ = !random_ && !(finite_ && finite_->overrides.empty());
        reset();
    }

    void reset()
    {
        letters_.clear();
        level_ = 0;
        if (random_)
            key_ = splitmix(random_->seed);
    }

    const Eigen::VectorXd& descend(int letter)
    {
        ++level_;
        if (random_) {
            key_ = splitmix(key_ ^ static_cast<std::uint64_t>(letter));
            buffer_ = random_translation(*random_, key_);
            return buffer_;
        }
        if (!needs_word_) {
            int idx = letter;
            if (finite_->level_assignment) {
                const auto& row = finite_->level_assignment->at(level_);
                if (letter > static_cast<int>(row.size()))
                    throw IncompleteSchemeError("finite-set assignment has no entry for letter " +
                                                std::to_string(letter));
                idx = row[letter - 1];
            } else if (letter > static_cast<int>(finite_->gamma.size())) {
                throw IncompleteSchemeError("letter " + std::to_string(letter) + " has no translation in Γ");
            }
            return finite_->gamma[static_cast<std::size_t>(idx - 1)];
        }
        letters_.push_back(letter);
        buffer_ = scheme_->translation(Word(letters_));
        return buffer_;
    }

private:
    const TranslationScheme* scheme_;
    const RandomTranslations* random_ = nullptr;
    const FiniteSetTranslations* finite_ = nullptr;
    bool needs_word_ = true;
    std::vector<int> letters_;
    int level_ = 0;
    std::uint64_t key_ = 0;
    Eigen::VectorXd buffer_;
};

void check_compatible(const ContractionSystem& system, const TranslationScheme& scheme)
{
    const int sd = scheme.dimension();
    if (sd != 0 && sd != dimension(system))
        throw std::invalid_argument("translation dimension " + std::to_string(sd) +
                                    " does not match system dimension " + std::to_string(dimension(system)));
}

double truncation_bound(const ContractionSystem& system, const TranslationScheme& scheme, int depth)
{
    const double a = contraction_bound(system);
    return scheme.sup_norm() * std::pow(a, depth) / (1.0 - a);
}

} // namespace

Projection project_word(const ContractionSystem& system, const TranslationScheme& scheme, const Word& u, int depth)
{
    check_compatible(system, scheme);
    if (depth < 0 || static_cast<std::size_t>(depth) > u.size())
        throw std::invalid_argument("project_word: depth must lie in 0..|u|");
    validate_word(profile(system), u);
    const int d = dimension(system);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(d);
    Eigen::MatrixXd L = Eigen::MatrixXd::Identity(d, d);
    TranslationCursor cursor(scheme);
    for (int j = 1; j <= depth; ++j) {
        const int letter = u[static_cast<std::size_t>(j - 1)];
        x.noalias() += L * cursor.descend(letter);
        L = L * linear_part(system, j, letter);
    }
    return {x, truncation_bound(system, scheme, depth)};
}

// ---------------------------------------------------------------------------------------------
// Sampling

int default_sampling_depth(double alpha_plus, double target_resolution)
{
    if (!(alpha_plus > 0.0 && alpha_plus < 1.0) || !(target_resolution > 0.0 && target_resolution < 1.0))
        throw DomainError("default_sampling_depth: need α_+ and resolution in (0, 1)");
    return std::max(1, static_cast<int>(std::ceil(std::log(target_resolution) / std::log(alpha_plus))));
}

namespace {

constexpr std::size_t kSampleBlock = 4096;

template <int D>
struct SamplingTables {
    using Mat = Eigen::Matrix<double, D, D>;
    std::vector<std::vector<Mat>> linear;     // [level-1][letter-1]
    std::vector<std::vector<double>> cumprob; // [level-1][letter-1]
};

template <int D>
SamplingTables<D> prepare_tables(const ContractionSystem& system, const BernoulliMeasure& measure, int depth)
{
    SamplingTables<D> t;
    for (int level = 1; level <= depth; ++level) {
        const auto& p = measure.at(level);
        const int n = profile(system).branches(level);
        if (p.size() != n)
            throw std::invalid_argument("measure and system disagree on the number of branches at level " +
                                        std::to_string(level));
        std::vector<typename SamplingTables<D>::Mat> maps;
        std::vector<double> cum;
        double acc = 0.0;
        for (int j = 1; j <= n; ++j) {
            Eigen::MatrixXd m = linear_part(system, level, j);
            maps.push_back(m);
            acc += p(j - 1);
            cum.push_back(acc);
        }
        cum.back() = 1.0;
        t.linear.push_back(std::move(maps));
        t.cumprob.push_back(std::move(cum));
    }
    return t;
}

template <int D>
void sample_block(const SamplingTables<D>& tables, const TranslationScheme& scheme, int d, int depth,
                  std::uint64_t seed, std::size_t block, std::size_t begin, std::size_t end, Eigen::MatrixXd& out)
{
    using Mat = Eigen::Matrix<double, D, D>;
    using Vec = Eigen::Matrix<double, D, 1>;
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(block >> 32)};
    std::mt19937_64 rng(seq);
    TranslationCursor cursor(scheme);
    Mat L, next;
    Vec x;
    if constexpr (D == Eigen::Dynamic) {
        L.resize(d, d);
        next.resize(d, d);
        x.resize(d);
    }
    for (std::size_t i = begin; i < end; ++i) {
        cursor.reset();
        L.setIdentity();
        x.setZero();
        for (int level = 1; level <= depth; ++level) {
            const auto& cum = tables.cumprob[static_cast<std::size_t>(level - 1)];
            const double u = unit_interval(rng());
            std::size_t j = 0;
            while (j + 1 < cum.size() && u >= cum[j])
                ++j;
            const Eigen::VectorXd& w = cursor.descend(static_cast<int>(j) + 1);
            x.noalias() += L * w;
            next.noalias() = L * tables.linear[static_cast<std::size_t>(level - 1)][j];
            L = next;
        }
        out.col(static_cast<Eigen::Index>(i)) = x;
    }
}

template <int D>
void sample_all(const ContractionSystem& system, const TranslationScheme& scheme, const BernoulliMeasure& measure,
                std::size_t count, int depth, std::uint64_t seed, unsigned workers, Eigen::MatrixXd& out)
{
    const auto tables = prepare_tables<D>(system, measure, depth);
    const int d = dimension(system);
    const std::size_t blocks = (count + kSampleBlock - 1) / kSampleBlock;
    std::atomic<std::size_t> next_block{0};
    auto work = [&] {
        for (std::size_t b = next_block++; b < blocks; b = next_block++) {
            const std::size_t begin = b * kSampleBlock;
            sample_block<D>(tables, scheme, d, depth, seed, b, begin, std::min(count, begin + kSampleBlock), out);
        }
    };
    if (workers <= 1 || blocks <= 1) {
        work();
        return;
    }
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < std::min<std::size_t>(workers, blocks); ++w)
        pool.emplace_back(work);
    for (auto& t : pool)
        t.join();
}

} // namespace

AttractorSample sample_measure(const ContractionSystem& system, const TranslationScheme& scheme,
                               const BernoulliMeasure& measure, std::size_t count, int depth, std::uint64_t seed,
                               const SamplingOptions& options)
{
    if (count < 1)
        throw std::invalid_argument("sample_measure: count must be at least 1");
    if (depth < 0)
        throw std::invalid_argument("sample_measure: negative depth");
    check_compatible(system, scheme);
    const int d = dimension(system);
    const unsigned workers = options.workers ? options.workers : std::max(1u, std::thread::hardware_concurrency());

    AttractorSample sample;
    sample.points.resize(d, static_cast<Eigen::Index>(count));
    switch (d) {
    case 1:
        sample_all<1>(system, scheme, measure, count, depth, seed, workers, sample.points);
        break;
    case 2:
        sample_all<2>(system, scheme, measure, count, depth, seed, workers, sample.points);
        break;
    case 3:
        sample_all<3>(system, scheme, measure, count, depth, seed, workers, sample.points);
        break;
    default:
        sample_all<Eigen::Dynamic>(system, scheme, measure, count, depth, seed, workers, sample.points);
    }
    sample.weights = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(count), 1.0 / static_cast<double>(count));
    sample.metadata.depth = depth;
    sample.metadata.seed = seed;
    sample.metadata.count = count;
    sample.metadata.truncation_bound = truncation_bound(system, scheme, depth);
    sample.metadata.resolution_warning =
        options.target_resolution > 0.0 && sample.metadata.truncation_bound > options.target_resolution;
    return sample;
}

// ---------------------------------------------------------------------------------------------
// Basic sets and separation

namespace {

double parallelepiped_diameter(const Eigen::MatrixXd& L)
{
    // diam L[0,1]^d = max over z in [-1,1]^d of |L z|, attained at a vertex.
    const int d = static_cast<int>(L.cols());
    double best = 0.0;
    Eigen::VectorXd z(d);
    for (unsigned mask = 0; mask < (1u << d); ++mask) {
        for (int i = 0; i < d; ++i)
            z(i) = (mask >> i & 1u) ? 1.0 : -1.0;
        best = std::max(best, (L * z).squaredNorm());
    }
    return std::sqrt(best);
}

void fill_box(BasicSet& b)
{
    const Eigen::VectorXd neg = b.linear.cwiseMin(0.0).rowwise().sum();
    const Eigen::VectorXd pos = b.linear.cwiseMax(0.0).rowwise().sum();
    b.lo = b.origin + neg;
    b.hi = b.origin + pos;
}

double box_distance(const BasicSet& a, const BasicSet& b)
{
    double sq = 0.0;
    for (Eigen::Index i = 0; i < a.lo.size(); ++i) {
        const double gap = std::max({0.0, b.lo(i) - a.hi(i), a.lo(i) - b.hi(i)});
        sq += gap * gap;
    }
    return std::sqrt(sq);
}

bool interiors_overlap(const BasicSet& a, const BasicSet& b, double tol)
{
    for (Eigen::Index i = 0; i < a.lo.size(); ++i)
        if (!(a.lo(i) < b.hi(i) - tol && b.lo(i) < a.hi(i) - tol))
            return false;
    return true;
}

bool closed_overlap(const BasicSet& a, const BasicSet& b, double tol)
{
    for (Eigen::Index i = 0; i < a.lo.size(); ++i)
        if (!(a.lo(i) <= b.hi(i) + tol && b.lo(i) <= a.hi(i) + tol))
            return false;
    return true;
}

constexpr std::size_t kSeparationNodeBudget = std::size_t{1} << 22;

} // namespace

BasicSet basic_set(const ContractionSystem& system, const TranslationScheme& scheme, const Word& u)
{
    check_compatible(system, scheme);
    validate_word(profile(system), u);
    const int d = dimension(system);
    BasicSet b{Eigen::VectorXd::Zero(d), Eigen::MatrixXd::Identity(d, d), {}, {}, 0.0};
    TranslationCursor cursor(scheme);
    for (std::size_t j = 0; j < u.size(); ++j) {
        const int level = static_cast<int>(j) + 1;
        b.origin.noalias() += b.linear * cursor.descend(u[j]);
        b.linear = b.linear * linear_part(system, level, u[j]);
    }
    fill_box(b);
    b.diameter = parallelepiped_diameter(b.linear);
    return b;
}

std::string to_string(SeparationKind kind)
{
    switch (kind) {
    case SeparationKind::Open:
        return "OSC";
    case SeparationKind::Strong:
        return "SSC";
    case SeparationKind::Gap:
        return "GSC";
    }
    return "?";
}

SeparationReport check_separation(const ContractionSystem& system, const TranslationScheme& scheme, int depth,
                                  SeparationKind kind)
{
    check_compatible(system, scheme);
    if (depth < 1)
        throw std::invalid_argument("check_separation: depth must be at least 1");
    const auto& prof = profile(system);
    std::size_t nodes = 0;
    for (int k = 1; k <= depth; ++k)
        nodes += prof.words_at_depth(k, kSeparationNodeBudget);
    if (nodes >= kSeparationNodeBudget)
        throw std::invalid_argument("check_separation: depth " + std::to_string(depth) + " exceeds the node budget");

    const int d = dimension(system);
    SeparationReport report;
    report.kind = kind;
    report.depth = depth;
    report.worst_gap_ratio = std::numeric_limits<double>::infinity();
    bool have_failure = false;

    struct Node {
        Word word;
        BasicSet set;
    };
    BasicSet root{Eigen::VectorXd::Zero(d), Eigen::MatrixXd::Identity(d, d), {}, {}, 0.0};
    fill_box(root);
    root.diameter = parallelepiped_diameter(root.linear);
    std::vector<Node> level_nodes{{Word{}, root}};

    for (int k = 1; k <= depth; ++k) {
        std::vector<Node> next;
        for (const auto& parent : level_nodes) {
            const std::size_t first_child = next.size();
            for (int j = 1; j <= prof.branches(k); ++j) {
                Node child{parent.word.child(j), {}};
                child.set.origin = parent.set.origin + parent.set.linear * scheme.translation(child.word);
                child.set.linear = parent.set.linear * linear_part(system, k, j);
                fill_box(child.set);
                next.push_back(std::move(child));
            }
            const double tol = 1e-12 * parent.set.diameter;
            for (std::size_t a = first_child; a < next.size(); ++a)
                for (std::size_t b = a + 1; b < next.size(); ++b) {
                    const auto& A = next[a];
                    const auto& B = next[b];
                    const bool fails = kind == SeparationKind::Open ? interiors_overlap(A.set, B.set, tol)
                                                                    : closed_overlap(A.set, B.set, tol);
                    if (fails && !have_failure) {
                        have_failure = true;
                        report.witness = {A.word, B.word};
                    }
                    const double ratio = box_distance(A.set, B.set) / parent.set.diameter;
                    if (ratio < report.worst_gap_ratio) {
                        report.worst_gap_ratio = ratio;
                        if (!have_failure)
                            report.witness = {A.word, B.word};
                    }
                }
        }
        for (auto& n : next)
            n.set.diameter = parallelepiped_diameter(n.set.linear);
        level_nodes = std::move(next);
    }
    if (!std::isfinite(report.worst_gap_ratio))
        report.worst_gap_ratio = 0.0; // no sibling pairs anywhere
    report.holds_at_depth = kind == SeparationKind::Gap ? !have_failure && report.worst_gap_ratio > 0.0 : !have_failure;
    return report;
}

// ---------------------------------------------------------------------------------------------
// Sample I/O

namespace {

void append_double(std::string& line, double v)
{
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    line.append(buf, ptr);
}

} // namespace

void write_sample_csv(std::ostream& os, const AttractorSample& sample)
{
    std::string line;
    for (Eigen::Index i = 0; i < sample.points.cols(); ++i) {
        line.clear();
        for (Eigen::Index k = 0; k < sample.points.rows(); ++k) {
            append_double(line, sample.points(k, i));
            line.push_back(',');
        }
        append_double(line, sample.weights(i));
        line.push_back('\n');
        os << line;
    }
}

namespace {

AttractorSample assemble(std::vector<double>& flat, std::size_t cols, std::size_t rows)
{
    AttractorSample s;
    const auto d = static_cast<Eigen::Index>(cols - 1);
    const auto n = static_cast<Eigen::Index>(rows);
    s.points.resize(d, n);
    s.weights.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index k = 0; k < d; ++k)
            s.points(k, i) = flat[static_cast<std::size_t>(i) * cols + static_cast<std::size_t>(k)];
        s.weights(i) = flat[static_cast<std::size_t>(i) * cols + cols - 1];
    }
    const double total = s.weights.sum();
    if (!(total > 0.0) || (s.weights.array() < 0.0).any())
        throw std::invalid_argument("sample weights must be non-negative with positive total");
    if (std::abs(total - 1.0) > 1e-12)
        s.weights /= total;
    s.metadata.count = rows;
    return s;
}

} // namespace

AttractorSample read_sample_csv(std::istream& is)
{
    std::vector<double> flat;
    std::size_t cols = 0, rows = 0;
    std::string line;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        std::size_t fields = 0;
        const char* p = line.data();
        const char* end = line.data() + line.size();
        while (true) {
            double v = 0.0;
            while (p < end && *p == ' ')
                ++p;
            auto [next, ec] = std::from_chars(p, end, v);
            if (ec != std::errc())
                throw std::invalid_argument("sample CSV: malformed number on row " + std::to_string(rows + 1));
            flat.push_back(v);
            ++fields;
            p = next;
            while (p < end && *p == ' ')
                ++p;
            if (p == end)
                break;
            if (*p != ',')
                throw std::invalid_argument("sample CSV: expected ',' on row " + std::to_string(rows + 1));
            ++p;
        }
        if (cols == 0)
            cols = fields;
        else if (fields != cols)
            throw std::invalid_argument("sample CSV: inconsistent column count on row " + std::to_string(rows + 1));
        ++rows;
    }
    if (rows == 0 || cols < 2)
        throw std::invalid_argument("sample CSV: need at least one row with a coordinate and a weight");
    return assemble(flat, cols, rows);
}

namespace {
constexpr char kMagic[8] = {'N', 'I', 'F', 'S', 'P', 'T', 'S', '1'};
}

void write_sample_binary(std::ostream& os, const AttractorSample& sample)
{
    os.write(kMagic, sizeof kMagic);
    const auto d = static_cast<std::uint32_t>(sample.points.rows());
    const auto n = static_cast<std::uint64_t>(sample.points.cols());
    os.write(reinterpret_cast<const char*>(&d), sizeof d);
    os.write(reinterpret_cast<const char*>(&n), sizeof n);
    std::vector<double> row(d + 1);
    for (std::uint64_t i = 0; i < n; ++i) {
        for (std::uint32_t k = 0; k < d; ++k)
            row[k] = sample.points(k, static_cast<Eigen::Index>(i));
        row[d] = sample.weights(static_cast<Eigen::Index>(i));
        os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(double)));
    }
}

AttractorSample read_sample_binary(std::istream& is)
{
    char magic[8];
    std::uint32_t d = 0;
    std::uint64_t n = 0;
    is.read(magic, sizeof magic);
    if (!is || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw std::invalid_argument("sample binary: bad magic");
    is.read(reinterpret_cast<char*>(&d), sizeof d);
    is.read(reinterpret_cast<char*>(&n), sizeof n);
    if (!is || d == 0 || n == 0)
        throw std::invalid_argument("sample binary: bad header");
    std::vector<double> flat(static_cast<std::size_t>(n) * (d + 1));
    is.read(reinterpret_cast<char*>(flat.data()), static_cast<std::streamsize>(flat.size() * sizeof(double)));
    if (!is)
        throw std::invalid_argument("sample binary: truncated data");
    return assemble(flat, d + 1, static_cast<std::size_t>(n));
}

} // namespace nifs
