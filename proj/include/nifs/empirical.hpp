#ifndef NIFS_EMPIRICAL_HPP
#define NIFS_EMPIRICAL_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "nifs/systems.hpp"

namespace nifs {

inline constexpr int kMaxMeshDimension = 8;

using CellKey = std::array<std::int64_t, kMaxMeshDimension>;

/// 64-bit mix of the cell coordinates. Equality is still decided on the full key.
struct CellKeyHash {
    std::size_t operator()(const CellKey& key) const noexcept;
};

/// Cell of x in the r-mesh: (⌊x_1/r⌋, ..., ⌊x_d/r⌋), unused coordinates zero.
CellKey mesh_cell(const double* x, int d, double r);

/**
 * Masses of the occupied r-mesh cubes [j r, (j+1) r) of a weighted point cloud.
 *
 * Cells are kept sorted by key, so every reduction over them runs in a fixed order.
 */
class MeshAccumulator {
public:
    MeshAccumulator(double r, int dimension);

    /// Bins every point of `sample`, in parallel over fixed point blocks.
    static MeshAccumulator bin(const AttractorSample& sample, double r, unsigned workers = 0);

    double scale() const noexcept { return r_; }
    int dimension() const noexcept { return d_; }
    std::size_t occupied() const noexcept { return cells_.size(); }
    double total_mass() const noexcept { return total_; }
    const std::vector<std::pair<CellKey, double>>& cells() const noexcept { return cells_; }

    /// Mass of the cell `key`, 0 when unoccupied.
    double mass(const CellKey& key) const;

    /// The same masses on the 2r mesh: cell j goes to ⌊j/2⌋.
    MeshAccumulator coarsen() const;

    /// Σ ν(Q)^q over occupied cells (q = 0 counts them).
    double moment(double q) const;
    /// Σ ν(Q) log ν(Q).
    double entropy() const;

private:
    double r_;
    int d_;
    double total_ = 0.0;
    std::vector<std::pair<CellKey, double>> cells_;
};

/// Σ_Q ν̂(Q)^q over the occupied r-mesh cubes. q = 1 is rejected; use entropy_sum.
double moment_sum(const AttractorSample& sample, double r, double q);

/// Σ_Q ν̂(Q) log ν̂(Q) (natural log, never positive).
double entropy_sum(const AttractorSample& sample, double r);

struct BallIntegral {
    double value = 0.0;
    std::size_t centers = 0;  ///< sample points used as ball centres
    std::size_t excluded = 0; ///< centres with an empty ball (q = 1 only)
};

struct BallIntegralOptions {
    /// Use every k-th sample point as a centre, with k chosen so at most this many are used (0: all).
    std::size_t max_centers = 0;
};

/**
 * ∫ ν̂(B(x, r))^{q-1} dν̂(x) with closed Euclidean balls; at q = 1, ∫ log ν̂(B(x, r)) dν̂(x).
 *
 * Ball masses come from a spatial hash with cell side r and a scan of the 3^d surrounding
 * cells. Cost grows with the number of points per ball.
 */
BallIntegral ball_moment_integral(const AttractorSample& sample, double r, double q,
                                  const BallIntegralOptions& options = {});

struct ScaleRecord {
    double r = 0.0;
    double sum = 0.0;        ///< moment sum, or entropy sum at q = 1
    std::size_t cells = 0;   ///< occupied cells
    bool included = true;    ///< passed the occupancy filter
};

struct FitOptions {
    /// Sample size; scales with fewer than `min_occupancy` points per occupied cell are excluded (0: no filter).
    std::size_t sample_size = 0;
    double min_occupancy = 10.0;
    /// Longest run of scales whose local slopes vary by less than this is used (the finest on ties).
    double slope_variation = 0.1;
    int min_scales = 4;
    /// Explicit window [first, last] into the records sorted by decreasing r; skips the automatic choice.
    std::optional<std::pair<int, int>> window;
};

struct SpectrumEstimate {
    double q = 0.0;
    std::vector<ScaleRecord> records; ///< sorted by decreasing r
    double slope = 0.0;               ///< D_q estimate
    double intercept = 0.0;
    double residual = 0.0;            ///< RMS deviation from the fitted line
    double slope_error = 0.0;         ///< OLS standard error of the slope
    std::vector<double> local_slopes; ///< between consecutive fitted scales
    int first = 0;                    ///< fitted records [first, last]
    int last = 0;
    bool stable = true;               ///< a window satisfying the slope-variation rule was found
    double r_max() const { return records.at(static_cast<std::size_t>(first)).r; }
    double r_min() const { return records.at(static_cast<std::size_t>(last)).r; }
};

/**
 * Least-squares slope of log Σ ν(Q)^q against (q-1) log r, or of Σ ν log ν against log r at q = 1.
 *
 * Needs at least `min_scales` usable scales spanning two octaves; throws InsufficientDataError otherwise.
 */
SpectrumEstimate fit_dimension(std::vector<ScaleRecord> records, double q, const FitOptions& options = {});

/// r = 2^-from, ..., 2^-to.
std::vector<double> dyadic_scales(int from = 4, int to = 12);

/// Moment (or entropy) records of one sample for every q and r. Result is indexed [q][r].
std::vector<std::vector<ScaleRecord>> mesh_records(const AttractorSample& sample, const std::vector<double>& qs,
                                                   std::vector<double> scales, unsigned workers = 0);

/// mesh_records followed by fit_dimension for every q, with the occupancy filter sized to the sample.
std::vector<SpectrumEstimate> estimate_spectrum(const AttractorSample& sample, const std::vector<double>& qs,
                                                const std::vector<double>& scales, FitOptions options = {},
                                                unsigned workers = 0);

} // namespace nifs

#endif // NIFS_EMPIRICAL_HPP
