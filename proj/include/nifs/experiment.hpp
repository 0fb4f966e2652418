#ifndef NIFS_EXPERIMENT_HPP
#define NIFS_EXPERIMENT_HPP

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "nifs/empirical.hpp"
#include "nifs/systems.hpp"
#include "nifs/theory.hpp"

namespace nifs {

inline constexpr const char* kConfigSchema = "nifs-experiment/1";

struct ExperimentConfig {
    std::string name;
    ContractionSystem system;
    TranslationScheme translations;
    BernoulliMeasure measure;
    /// Finite translation sets: each realization perturbs Γ inside a ball of this radius (0: Γ as given).
    double gamma_rho = 0.0;
    std::vector<double> qs{0.5, 1.0, 2.0, 3.0};
    std::vector<double> scales = dyadic_scales();
    std::size_t samples = 1000000;
    int depth = 0;          ///< sampling depth; 0 picks one from the finest scale
    int theory_depth = 200; ///< K for level-product limits
    int affine_depth = 20;  ///< K for affine sums
    int separation_depth = 8;
    std::uint64_t seed = 1;
    int realizations = 0; ///< 0: 5 for random translation schemes, 1 otherwise
    std::optional<double> tolerance;
    std::filesystem::path output;

    bool randomized() const;
    int realization_count() const;
};

/// Parses a JSON experiment document. Throws ConfigError with the offending field.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// What the theory supports for a row: the fitted dimension equals min{d_q, d}, or is only bounded by it.
enum class Claim { Equality, UpperBound, None };
std::string to_string(Claim claim);

struct ReportRow {
    double q = 0.0;
    double d_theory = 0.0; ///< NaN when no solver applies
    std::string method;
    double bracket_lo = 0.0;
    double bracket_hi = 0.0;
    double clamped = 0.0; ///< min{d_theory, d}
    double d_empirical = 0.0;
    double fit_err = 0.0;
    std::optional<bool> pass; ///< nullopt when there is nothing to compare against

    friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

struct RealizationResult {
    int index = 0;
    std::uint64_t seed = 0;
    std::optional<SeparationReport> separation;
    std::vector<SpectrumEstimate> spectra;
    std::vector<Claim> claims;
    std::vector<ReportRow> rows;
};

struct ComparisonReport {
    std::string name;
    int dimension = 0;
    std::uint64_t seed = 0;
    std::size_t samples = 0;
    int sampling_depth = 0;
    int theory_depth = 0;
    double tolerance = 0.0;
    double max_norm = 0.0;
    bool norm_condition = false; ///< ||T|| < 1/2, meaningful for finite translation sets
    std::string justification;
    std::vector<CriticalExponents> theory; ///< one per q
    std::vector<RealizationResult> realizations;

    /// Every row of every realization, realization-major.
    std::vector<ReportRow> rows() const;
    bool all_pass() const;
};

/// Theory rows only: one CriticalExponents per q, with the method chosen from the system type.
std::vector<CriticalExponents> theory_exponents(const ExperimentConfig& config);

ComparisonReport run_experiment(const ExperimentConfig& config);

/// Report CSV: header q,d_theory,method,bracket_lo,bracket_hi,clamped,D_empirical,fit_err,pass.
void write_report_csv(std::ostream& os, const std::vector<ReportRow>& rows);
std::vector<ReportRow> parse_report_csv(std::istream& is);

void write_report_text(std::ostream& os, const ComparisonReport& report);

/// Spectrum rows q,r,sum,cells for one realization.
void write_spectrum_csv(std::ostream& os, const std::vector<SpectrumEstimate>& spectra);
/// One row per fit: realization,q,slope,intercept,residual,slope_error,r_max,r_min,scales,stable.
void write_fit_csv(std::ostream& os, const ComparisonReport& report);

enum class ReportFormat { Csv, Text };

/**
 * Writes the report into `dir` (created if missing). Csv: report.csv, fit.csv and the spectrum
 * CSVs (spectrum.csv, or spectrum_<k>.csv per realization). Text: report.txt.
 * Throws std::runtime_error naming the path on I/O failure.
 */
void emit_report(const ComparisonReport& report, ReportFormat format, const std::filesystem::path& dir);

/// Shortest round-trip decimal form; "nan", "inf", "-inf" for the special values.
std::string format_double(double x);
double parse_double(const std::string& s);

} // namespace nifs

#endif // NIFS_EXPERIMENT_HPP
