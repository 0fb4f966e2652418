#include "nifs/empirical.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <limits>
#include <thread>
#include <tuple>
#include <unordered_map>

#include "nifs/theory.hpp"

namespace nifs {

namespace {

constexpr std::size_t kBinBlock = 1 << 16;
constexpr double kMaxCellIndex = 4.0e18;

using CellList = std::vector<std::pair<CellKey, double>>;
using CellMap = std::unordered_map<CellKey, double, CellKeyHash>;

std::uint64_t mix64(std::uint64_t x)
{
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

unsigned resolve_workers(unsigned workers)
{
    return workers ? workers : std::max(1u, std::thread::hardware_concurrency());
}

template <class F>
void for_blocks(std::size_t blocks, unsigned workers, F&& f)
{
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t b = next++; b < blocks; b = next++)
            f(b);
    };
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, blocks));
    if (workers <= 1) {
        work();
        return;
    }
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w)
        pool.emplace_back(work);
    for (auto& t : pool)
        t.join();
}

CellList sorted_cells(const CellMap& map)
{
    CellList out(map.begin(), map.end());
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    return out;
}

// Merges sorted runs in run order, so equal keys are summed in a fixed order.
CellList merge_runs(std::vector<CellList> runs)
{
    while (runs.size() > 1) {
        std::vector<CellList> next;
        for (std::size_t i = 0; i + 1 < runs.size(); i += 2) {
            const auto& a = runs[i];
            const auto& b = runs[i + 1];
            CellList m;
            m.reserve(a.size() + b.size());
            std::size_t x = 0, y = 0;
            while (x < a.size() || y < b.size()) {
                if (y == b.size() || (x < a.size() && a[x].first < b[y].first))
                    m.push_back(a[x++]);
                else if (x == a.size() || b[y].first < a[x].first)
                    m.push_back(b[y++]);
                else {
                    m.emplace_back(a[x].first, a[x].second + b[y].second);
                    ++x;
                    ++y;
                }
            }
            next.push_back(std::move(m));
        }
        if (runs.size() % 2)
            next.push_back(std::move(runs.back()));
        runs = std::move(next);
    }
    return runs.empty() ? CellList{} : std::move(runs.front());
}

void check_sample(const AttractorSample& sample)
{
    if (sample.size() == 0)
        throw std::invalid_argument("empty sample");
    if (static_cast<std::size_t>(sample.weights.size()) != sample.size())
        throw std::invalid_argument("sample has one weight per point required");
    if (sample.dimension() < 1 || sample.dimension() > kMaxMeshDimension)
        throw std::invalid_argument("sample dimension must be between 1 and " + std::to_string(kMaxMeshDimension));
}

void check_scale(double r)
{
    if (!(r > 0.0) || !std::isfinite(r))
        throw DomainError("mesh scale must be positive and finite");
}

} // namespace

std::size_t CellKeyHash::operator()(const CellKey& key) const noexcept
{
    std::uint64_t h = 0x9e3779b97f4a7c15ULL;
    for (auto j : key)
        h = mix64(h ^ static_cast<std::uint64_t>(j));
    return static_cast<std::size_t>(h);
}

CellKey mesh_cell(const double* x, int d, double r)
{
    CellKey key{};
    for (int i = 0; i < d; ++i) {
        const double j = std::floor(x[i] / r);
        if (!(std::abs(j) < kMaxCellIndex))
            throw DomainError("point outside the representable mesh range");
        key[static_cast<std::size_t>(i)] = static_cast<std::int64_t>(j);
    }
    return key;
}

MeshAccumulator::MeshAccumulator(double r, int dimension) : r_(r), d_(dimension)
{
    check_scale(r);
    if (dimension < 1 || dimension > kMaxMeshDimension)
        throw std::invalid_argument("mesh dimension must be between 1 and " + std::to_string(kMaxMeshDimension));
}

MeshAccumulator MeshAccumulator::bin(const AttractorSample& sample, double r, unsigned workers)
{
    check_sample(sample);
    MeshAccumulator acc(r, sample.dimension());
    const std::size_t n = sample.size();
    const std::size_t blocks = (n + kBinBlock - 1) / kBinBlock;
    std::vector<CellList> runs(blocks);
    for_blocks(blocks, resolve_workers(workers), [&](std::size_t b) {
        CellMap map;
        const std::size_t end = std::min(n, (b + 1) * kBinBlock);
        for (std::size_t i = b * kBinBlock; i < end; ++i) {
            const auto col = static_cast<Eigen::Index>(i);
            map[mesh_cell(sample.points.col(col).data(), acc.d_, r)] += sample.weights(col);
        }
        runs[b] = sorted_cells(map);
    });
    acc.cells_ = merge_runs(std::move(runs));
    for (const auto& [key, m] : acc.cells_)
        acc.total_ += m;
    return acc;
}

double MeshAccumulator::mass(const CellKey& key) const
{
    const auto it = std::lower_bound(cells_.begin(), cells_.end(), key,
                                     [](const auto& cell, const CellKey& k) { return cell.first < k; });
    return it != cells_.end() && it->first == key ? it->second : 0.0;
}

MeshAccumulator MeshAccumulator::coarsen() const
{
    MeshAccumulator out(2.0 * r_, d_);
    CellList parents;
    parents.reserve(cells_.size());
    for (const auto& [key, m] : cells_) {
        CellKey p{};
        for (int i = 0; i < d_; ++i)
            p[static_cast<std::size_t>(i)] = key[static_cast<std::size_t>(i)] >> 1; // arithmetic shift floors
        parents.emplace_back(p, m);
    }
    std::stable_sort(parents.begin(), parents.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [key, m] : parents) {
        if (!out.cells_.empty() && out.cells_.back().first == key)
            out.cells_.back().second += m;
        else
            out.cells_.emplace_back(key, m);
    }
    out.total_ = total_;
    return out;
}

double MeshAccumulator::moment(double q) const
{
    if (q == 0.0) {
        return static_cast<double>(std::count_if(cells_.begin(), cells_.end(), [](const auto& c) { return c.second > 0.0; }));
    }
    double s = 0.0;
    for (const auto& [key, m] : cells_)
        if (m > 0.0)
            s += std::pow(m, q);
    return s;
}

double MeshAccumulator::entropy() const
{
    double s = 0.0;
    for (const auto& [key, m] : cells_)
        if (m > 0.0)
            s += m * std::log(m);
    return s;
}

double moment_sum(const AttractorSample& sample, double r, double q)
{
    if (is_unit_q(q))
        throw DomainError("moment_sum: q = 1 has no moment sum; use entropy_sum");
    return MeshAccumulator::bin(sample, r).moment(q);
}

double entropy_sum(const AttractorSample& sample, double r) { return MeshAccumulator::bin(sample, r).entropy(); }

BallIntegral ball_moment_integral(const AttractorSample& sample, double r, double q, const BallIntegralOptions& options)
{
    check_sample(sample);
    check_scale(r);
    if (!(q > 0.0))
        throw DomainError("ball_moment_integral: q must be positive");
    const int d = sample.dimension();
    const std::size_t n = sample.size();

    std::unordered_map<CellKey, std::vector<Eigen::Index>, CellKeyHash> grid;
    for (std::size_t i = 0; i < n; ++i) {
        const auto col = static_cast<Eigen::Index>(i);
        grid[mesh_cell(sample.points.col(col).data(), d, r)].push_back(col);
    }

    const std::size_t stride = options.max_centers && n > options.max_centers ? (n + options.max_centers - 1) / options.max_centers : 1;
    const bool unit = is_unit_q(q);
    int neighbours = 1;
    for (int i = 0; i < d; ++i)
        neighbours *= 3;
    const double r2 = r * r;

    BallIntegral out;
    double weight = 0.0, acc = 0.0;
    for (std::size_t i = 0; i < n; i += stride) {
        const auto col = static_cast<Eigen::Index>(i);
        const auto x = sample.points.col(col);
        const CellKey home = mesh_cell(x.data(), d, r);
        double ball = 0.0;
        for (int code = 0; code < neighbours; ++code) {
            CellKey key = home;
            for (int c = code, k = 0; k < d; ++k, c /= 3)
                key[static_cast<std::size_t>(k)] += c % 3 - 1;
            const auto it = grid.find(key);
            if (it == grid.end())
                continue;
            for (const auto j : it->second)
                if ((sample.points.col(j) - x).squaredNorm() <= r2)
                    ball += sample.weights(j);
        }
        const double w = sample.weights(col);
        ++out.centers;
        if (unit) {
            if (!(ball > 0.0)) {
                ++out.excluded;
                continue;
            }
            acc += w * std::log(ball);
        } else {
            acc += w * std::pow(ball, q - 1.0);
        }
        weight += w;
    }
    out.value = weight > 0.0 ? acc / weight : 0.0;
    return out;
}

SpectrumEstimate fit_dimension(std::vector<ScaleRecord> records, double q, const FitOptions& options)
{
    std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) { return a.r > b.r; });
    const bool unit = is_unit_q(q);
    for (auto& rec : records) {
        check_scale(rec.r);
        if (!unit && !(rec.sum > 0.0))
            rec.included = false;
        if (options.sample_size > 0 && rec.cells > 0 &&
            static_cast<double>(options.sample_size) / static_cast<double>(rec.cells) < options.min_occupancy)
            rec.included = false;
    }

    SpectrumEstimate out;
    out.q = q;
    out.records = records;
    const int m = static_cast<int>(records.size());
    auto x_of = [&](int i) {
        const double lr = std::log(records[static_cast<std::size_t>(i)].r);
        return unit ? lr : (q - 1.0) * lr;
    };
    auto y_of = [&](int i) {
        const double s = records[static_cast<std::size_t>(i)].sum;
        return unit ? s : std::log(s);
    };
    auto spans_two_octaves = [&](int a, int b) {
        return records[static_cast<std::size_t>(a)].r / records[static_cast<std::size_t>(b)].r >= 4.0 * (1.0 - 1e-12);
    };
    const int need = std::max(2, options.min_scales);

    int first = -1, last = -1;
    if (options.window) {
        std::tie(first, last) = *options.window;
        if (first < 0 || last >= m || last - first + 1 < need)
            throw InsufficientDataError("fit_dimension: window holds fewer than " + std::to_string(need) + " scales");
        for (int i = first; i <= last; ++i)
            if (!records[static_cast<std::size_t>(i)].included)
                throw InsufficientDataError("fit_dimension: window contains an excluded scale");
    } else {
        // longest run of consecutive included scales whose local slopes stay within the variation bound
        int best_len = 0;
        int run_first = -1, run_last = -1; // longest run of included scales
        for (int a = 0; a < m; ++a) {
            if (!records[static_cast<std::size_t>(a)].included)
                continue;
            double lo = std::numeric_limits<double>::infinity(), hi = -lo;
            int b = a;
            while (b + 1 < m && records[static_cast<std::size_t>(b + 1)].included) {
                const double dx = x_of(b + 1) - x_of(b);
                const double slope = dx != 0.0 ? (y_of(b + 1) - y_of(b)) / dx : 0.0;
                const double nlo = std::min(lo, slope), nhi = std::max(hi, slope);
                if (nhi - nlo >= options.slope_variation)
                    break;
                lo = nlo;
                hi = nhi;
                ++b;
            }
            const int len = b - a + 1;
            if (len >= need && len >= best_len && spans_two_octaves(a, b)) {
                best_len = len;
                first = a;
                last = b;
            }
            int e = a;
            while (e + 1 < m && records[static_cast<std::size_t>(e + 1)].included)
                ++e;
            if (e - a > run_last - run_first) {
                run_first = a;
                run_last = e;
            }
        }
        if (first < 0) {
            out.stable = false;
            first = run_first;
            last = run_last;
            if (first < 0 || last - first + 1 < need)
                throw InsufficientDataError("fit_dimension: fewer than " + std::to_string(need) +
                                            " usable scales");
        }
    }
    if (!spans_two_octaves(first, last))
        throw InsufficientDataError("fit_dimension: scales span less than two octaves");

    const int k = last - first + 1;
    double mx = 0.0, my = 0.0;
    for (int i = first; i <= last; ++i) {
        mx += x_of(i);
        my += y_of(i);
    }
    mx /= k;
    my /= k;
    double sxx = 0.0, sxy = 0.0;
    for (int i = first; i <= last; ++i) {
        sxx += (x_of(i) - mx) * (x_of(i) - mx);
        sxy += (x_of(i) - mx) * (y_of(i) - my);
    }
    if (!(sxx > 0.0))
        throw InsufficientDataError("fit_dimension: degenerate abscissae (q = 1 moment sums carry no scale)");
    out.slope = sxy / sxx;
    out.intercept = my - out.slope * mx;
    double ss = 0.0;
    for (int i = first; i <= last; ++i) {
        const double e = y_of(i) - (out.intercept + out.slope * x_of(i));
        ss += e * e;
    }
    out.residual = std::sqrt(ss / k);
    out.slope_error = k > 2 ? std::sqrt(ss / (k - 2) / sxx) : 0.0;
    for (int i = first; i < last; ++i) {
        const double dx = x_of(i + 1) - x_of(i);
        out.local_slopes.push_back(dx != 0.0 ? (y_of(i + 1) - y_of(i)) / dx : 0.0);
    }
    out.first = first;
    out.last = last;
    return out;
}

std::vector<double> dyadic_scales(int from, int to)
{
    if (to < from)
        throw std::invalid_argument("dyadic_scales: empty range");
    std::vector<double> out;
    for (int i = from; i <= to; ++i)
        out.push_back(std::ldexp(1.0, -i));
    return out;
}

std::vector<std::vector<ScaleRecord>> mesh_records(const AttractorSample& sample, const std::vector<double>& qs,
                                                   std::vector<double> scales, unsigned workers)
{
    check_sample(sample);
    for (double q : qs)
        if (!(q >= 0.0))
            throw DomainError("mesh_records: q must be non-negative");
    std::sort(scales.begin(), scales.end());
    scales.erase(std::unique(scales.begin(), scales.end()), scales.end());

    std::vector<std::vector<ScaleRecord>> out(qs.size());
    std::optional<MeshAccumulator> acc;
    for (double r : scales) {
        if (acc && acc->scale() * 2.0 == r)
            acc = acc->coarsen();
        else
            acc = MeshAccumulator::bin(sample, r, workers);
        for (std::size_t i = 0; i < qs.size(); ++i) {
            ScaleRecord rec;
            rec.r = r;
            rec.cells = acc->occupied();
            rec.sum = is_unit_q(qs[i]) ? acc->entropy() : acc->moment(qs[i]);
            out[i].push_back(rec);
        }
    }
    for (auto& row : out)
        std::reverse(row.begin(), row.end());
    return out;
}

std::vector<SpectrumEstimate> estimate_spectrum(const AttractorSample& sample, const std::vector<double>& qs,
                                                const std::vector<double>& scales, FitOptions options, unsigned workers)
{
    if (options.sample_size == 0)
        options.sample_size = sample.size();
    const auto records = mesh_records(sample, qs, scales, workers);
    std::vector<SpectrumEstimate> out;
    for (std::size_t i = 0; i < qs.size(); ++i)
        out.push_back(fit_dimension(records[i], qs[i], options));
    return out;
}

} // namespace nifs
