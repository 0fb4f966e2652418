#include "nifs/experiment.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <future>
#include <limits>
#include <sstream>

namespace nifs {

using nlohmann::json;

namespace {

const char* const kReportHeader = "q,d_theory,method,bracket_lo,bracket_hi,clamped,D_empirical,fit_err,pass";

[[noreturn]] void config_error(const std::string& field, const std::string& what)
{
    throw ConfigError("config field '" + field + "': " + what);
}

const json& require(const json& j, const std::string& key, const std::string& path)
{
    if (!j.is_object() || !j.contains(key))
        config_error(path + key, "missing");
    return j.at(key);
}

double number(const json& j, const std::string& field)
{
    if (!j.is_number())
        config_error(field, "expected a number");
    return j.get<double>();
}

Eigen::VectorXd vector_of(const json& j, const std::string& field)
{
    if (!j.is_array() || j.empty())
        config_error(field, "expected a non-empty array of numbers");
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i)
        v(static_cast<Eigen::Index>(i)) = number(j[i], field + "[" + std::to_string(i) + "]");
    return v;
}

// A 1x1 matrix may be written as a bare number.
Eigen::MatrixXd matrix_of(const json& j, const std::string& field)
{
    if (j.is_number())
        return Eigen::MatrixXd::Constant(1, 1, j.get<double>());
    if (!j.is_array() || j.empty() || !j[0].is_array())
        config_error(field, "expected a matrix as an array of rows");
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = static_cast<Eigen::Index>(j[0].size());
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto row = vector_of(j[static_cast<std::size_t>(i)], field + "[" + std::to_string(i) + "]");
        if (row.size() != cols)
            config_error(field, "ragged matrix rows");
        m.row(i) = row.transpose();
    }
    return m;
}

// Either an array of levels (a stationary or periodic tail) or {"head": [...], "tail": [...]}.
template <class T, class F>
LevelTable<T> table_of(const json& j, const std::string& field, F&& level)
{
    auto levels = [&](const json& a, const std::string& f) {
        if (!a.is_array())
            config_error(f, "expected an array of levels");
        std::vector<T> out;
        for (std::size_t i = 0; i < a.size(); ++i)
            out.push_back(level(a[i], f + "[" + std::to_string(i) + "]"));
        return out;
    };
    try {
        if (j.is_object()) {
            auto head = j.contains("head") ? levels(j.at("head"), field + ".head") : std::vector<T>{};
            auto tail = levels(require(j, "tail", field + "."), field + ".tail");
            return LevelTable<T>(std::move(head), std::move(tail));
        }
        return LevelTable<T>({}, levels(j, field));
    } catch (const std::invalid_argument& e) {
        config_error(field, e.what());
    }
}

std::vector<Eigen::MatrixXd> matrix_list(const json& j, const std::string& field)
{
    if (!j.is_array() || j.empty())
        config_error(field, "expected a non-empty array of matrices");
    std::vector<Eigen::MatrixXd> out;
    for (std::size_t i = 0; i < j.size(); ++i)
        out.push_back(matrix_of(j[i], field + "[" + std::to_string(i) + "]"));
    return out;
}

Word word_of(const std::string& text, const std::string& field)
{
    std::vector<int> letters;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ',')) {
        int v = 0;
        const auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
        if (ec != std::errc{} || p != part.data() + part.size())
            config_error(field, "bad word '" + text + "'");
        letters.push_back(v);
    }
    return Word(std::move(letters));
}

ContractionSystem parse_system(const json& j)
{
    const auto type = require(j, "type", "system.").get<std::string>();
    try {
        if (type == "similar") {
            const int d = j.value("dimension", 1);
            auto ratios = table_of<Eigen::VectorXd>(require(j, "ratios", "system."), "system.ratios", vector_of);
            std::optional<LevelTable<std::vector<Eigen::MatrixXd>>> orth;
            if (j.contains("orthogonal"))
                orth = table_of<std::vector<Eigen::MatrixXd>>(j.at("orthogonal"), "system.orthogonal", matrix_list);
            return SimilarSystem(std::move(ratios), d, std::move(orth));
        }
        if (type == "affine")
            return AffineSystem(
                table_of<std::vector<Eigen::MatrixXd>>(require(j, "matrices", "system."), "system.matrices", matrix_list));
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        config_error("system", e.what());
    }
    config_error("system.type", "unknown system type '" + type + "'");
}

TranslationScheme parse_translations(const json& j, double& rho)
{
    const auto type = require(j, "type", "translations.").get<std::string>();
    if (type == "finite-set") {
        FiniteSetTranslations fs;
        const auto& gamma = require(j, "gamma", "translations.");
        if (!gamma.is_array() || gamma.empty())
            config_error("translations.gamma", "expected a non-empty array of vectors");
        for (std::size_t i = 0; i < gamma.size(); ++i)
            fs.gamma.push_back(vector_of(gamma[i], "translations.gamma[" + std::to_string(i) + "]"));
        if (j.contains("level_assignment"))
            fs.level_assignment = table_of<std::vector<int>>(j.at("level_assignment"), "translations.level_assignment",
                                                             [](const json& a, const std::string& f) {
                                                                 if (!a.is_array())
                                                                     config_error(f, "expected an array of indices");
                                                                 return a.get<std::vector<int>>();
                                                             });
        if (j.contains("overrides"))
            for (const auto& [key, value] : j.at("overrides").items())
                fs.overrides[word_of(key, "translations.overrides")] = value.get<int>();
        rho = j.value("rho", 0.0);
        if (!(rho >= 0.0))
            config_error("translations.rho", "must be non-negative");
        return fs;
    }
    if (type == "random-box") {
        RandomTranslations rt;
        rt.lo = vector_of(require(j, "lo", "translations."), "translations.lo");
        rt.hi = vector_of(require(j, "hi", "translations."), "translations.hi");
        return rt;
    }
    if (type == "explicit") {
        ExplicitTranslations ex;
        for (const auto& [key, value] : require(j, "table", "translations.").items())
            ex.table[word_of(key, "translations.table")] = vector_of(value, "translations.table." + key);
        return ex;
    }
    config_error("translations.type", "unknown translation scheme '" + type + "'");
}

std::uint64_t mix_seed(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t realization_seed(std::uint64_t seed, int k) { return k == 0 ? seed : mix_seed(seed ^ mix_seed(static_cast<std::uint64_t>(k))); }

bool is_stationary(const ContractionSystem& system, const BernoulliMeasure& measure)
{
    if (!measure.table().is_stationary())
        return false;
    if (const auto* s = std::get_if<SimilarSystem>(&system))
        return s->ratios().is_stationary();
    const auto& a = std::get<AffineSystem>(system);
    bool same = true;
    const auto& first = a.table().tail().front();
    a.table().for_each_stored([&](const std::vector<Eigen::MatrixXd>& level) {
        if (level.size() != first.size())
            same = false;
        else
            for (std::size_t i = 0; i < level.size(); ++i)
                same = same && level[i] == first[i];
    });
    return same;
}

CriticalExponents no_solver(double q, const std::string& why)
{
    CriticalExponents out;
    out.q = q;
    out.status = TheoryStatus::Indeterminate;
    out.note = why;
    return out;
}

double theory_value(const CriticalExponents& e)
{
    if (e.d_minus)
        return *e.d_minus;
    if (e.d_plus)
        return *e.d_plus;
    return std::numeric_limits<double>::quiet_NaN();
}

std::string method_name(const CriticalExponents& e)
{
    return e.d_minus || e.d_plus ? to_string(e.method) : "none";
}

Bracket theory_bracket(const CriticalExponents& e)
{
    if (e.d_minus)
        return e.minus_bracket;
    if (e.d_plus)
        return e.plus_bracket;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    return {nan, nan};
}

void write_file(const std::filesystem::path& path, const std::string& content)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    os << content;
    os.flush();
    if (!os)
        throw std::runtime_error("write failed for '" + path.string() + "'");
}

std::vector<std::string> split_csv(const std::string& line)
{
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ','))
        out.push_back(field);
    if (!line.empty() && line.back() == ',')
        out.emplace_back();
    return out;
}

} // namespace

// ---------------------------------------------------------------------------------------------

bool ExperimentConfig::randomized() const
{
    return translations.is_random() ||
           (std::holds_alternative<FiniteSetTranslations>(translations.variant()) && gamma_rho > 0.0);
}

int ExperimentConfig::realization_count() const { return realizations > 0 ? realizations : (randomized() ? 5 : 1); }

ExperimentConfig parse_config(const std::string& text)
{
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object())
        throw ConfigError("config must be a JSON object");
    const auto schema = require(j, "schema", "").get<std::string>();
    if (schema != kConfigSchema)
        config_error("schema", "expected '" + std::string(kConfigSchema) + "', got '" + schema + "'");

    ExperimentConfig c;
    try {
        c.name = j.value("name", std::string{});
        c.system = parse_system(require(j, "system", ""));
        c.translations = parse_translations(require(j, "translations", ""), c.gamma_rho);
        const auto& m = require(j, "measure", "");
        try {
            c.measure = BernoulliMeasure(
                table_of<Eigen::VectorXd>(require(m, "probabilities", "measure."), "measure.probabilities", vector_of));
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            config_error("measure", e.what());
        }
        if (j.contains("q"))
            c.qs = j.at("q").get<std::vector<double>>();
        if (j.contains("scales")) {
            const auto& s = j.at("scales");
            if (s.is_object())
                c.scales = dyadic_scales(s.value("from", 4), s.value("to", 12));
            else
                c.scales = s.get<std::vector<double>>();
        }
        c.samples = j.value("samples", c.samples);
        c.depth = j.value("depth", c.depth);
        c.theory_depth = j.value("theory_depth", c.theory_depth);
        c.affine_depth = j.value("affine_depth", c.affine_depth);
        c.separation_depth = j.value("separation_depth", c.separation_depth);
        c.seed = j.value("seed", c.seed);
        c.realizations = j.value("realizations", c.realizations);
        if (j.contains("tolerance") && !j.at("tolerance").is_null())
            c.tolerance = number(j.at("tolerance"), "tolerance");
        c.output = j.value("output", std::string{});
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config has a field of the wrong type: ") + e.what());
    }

    const int d = dimension(c.system);
    if (c.translations.dimension() != d)
        config_error("translations", "dimension " + std::to_string(c.translations.dimension()) +
                                         " does not match the system dimension " + std::to_string(d));
    for (int k = 1; k <= std::max(profile(c.system).table().stored_levels(), c.measure.profile().table().stored_levels());
         ++k)
        if (profile(c.system).branches(k) != c.measure.profile().branches(k))
            config_error("measure", "level " + std::to_string(k) + " has a different number of maps and probabilities");
    if (c.qs.empty())
        config_error("q", "empty q-grid");
    for (double q : c.qs)
        if (!(q > 0.0))
            config_error("q", "every q must be positive");
    for (double r : c.scales)
        if (!(r > 0.0))
            config_error("scales", "every scale must be positive");
    if (c.samples < 1)
        config_error("samples", "must be at least 1");
    if (c.realizations < 0)
        config_error("realizations", "must be non-negative");
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw ConfigError("cannot open config '" + path.string() + "'");
    std::stringstream ss;
    ss << is.rdbuf();
    try {
        return parse_config(ss.str());
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

std::string to_string(Claim claim)
{
    switch (claim) {
    case Claim::Equality:
        return "equality";
    case Claim::UpperBound:
        return "upper-bound";
    case Claim::None:
        return "none";
    }
    return "?";
}

std::vector<ReportRow> ComparisonReport::rows() const
{
    std::vector<ReportRow> out;
    for (const auto& r : realizations)
        out.insert(out.end(), r.rows.begin(), r.rows.end());
    return out;
}

bool ComparisonReport::all_pass() const
{
    for (const auto& row : rows())
        if (row.pass && !*row.pass)
            return false;
    return true;
}

// ---------------------------------------------------------------------------------------------

std::vector<CriticalExponents> theory_exponents(const ExperimentConfig& config)
{
    const bool stationary = is_stationary(config.system, config.measure);
    auto one = [&](double q) -> CriticalExponents {
        if (const auto* s = std::get_if<SimilarSystem>(&config.system)) {
            if (stationary) {
                CriticalExponents e;
                e.q = q;
                e.method = TheoryMethod::ClosedForm;
                const double d = stationary_similar_dq(s->ratios().at(1), config.measure.at(1), q);
                e.d_minus = e.d_plus = d;
                e.minus_bracket = e.plus_bracket = {d, d};
                return e;
            }
            return bernoulli_product_dq(*s, config.measure, q, {.depth = config.theory_depth});
        }
        const auto& a = std::get<AffineSystem>(config.system);
        AffineOptions opts;
        opts.depth = config.affine_depth;
        if (stationary) {
            if (q < 1.0 && !is_unit_q(q))
                return no_solver(q, "no affine solver for q < 1");
            return stationary_affine_dq(a.table().at(1), config.measure.at(1), q, opts);
        }
        if (!(q > 1.0) || is_unit_q(q))
            return no_solver(q, "no nonstationary affine solver for q <= 1");
        return affine_dq_sum(a, config.measure, q, opts);
    };
    std::vector<std::future<CriticalExponents>> jobs;
    for (double q : config.qs)
        jobs.push_back(std::async(std::launch::async, one, q));
    std::vector<CriticalExponents> out;
    for (auto& j : jobs)
        out.push_back(j.get());
    return out;
}

ComparisonReport run_experiment(const ExperimentConfig& config)
{
    if (config.scales.empty())
        throw ConfigError("config field 'scales': empty scale ladder");
    ComparisonReport report;
    report.name = config.name;
    report.dimension = dimension(config.system);
    report.seed = config.seed;
    report.samples = config.samples;
    report.theory_depth = std::holds_alternative<SimilarSystem>(config.system) ? config.theory_depth : config.affine_depth;
    report.max_norm = contraction_bound(config.system);
    report.norm_condition = report.max_norm < 0.5;
    const double r_min = *std::min_element(config.scales.begin(), config.scales.end());
    report.sampling_depth = config.depth > 0 ? config.depth
                                             : std::min(profile(config.system).max_depth(),
                                                        default_sampling_depth(report.max_norm, r_min * 1e-3));
    report.theory = theory_exponents(config);

    const bool similar = std::holds_alternative<SimilarSystem>(config.system);
    const bool stationary = is_stationary(config.system, config.measure);
    const auto& variant = config.translations.variant();
    const int d = report.dimension;

    for (int k = 0; k < config.realization_count(); ++k) {
        RealizationResult real;
        real.index = k;
        real.seed = realization_seed(config.seed, k);
        TranslationScheme scheme = config.translations;
        if (const auto* rt = std::get_if<RandomTranslations>(&variant)) {
            RandomTranslations copy = *rt;
            copy.seed = mix_seed(real.seed ^ 0x7472616e736c6174ULL);
            scheme = copy;
        } else if (const auto* fs = std::get_if<FiniteSetTranslations>(&variant); fs && config.gamma_rho > 0.0) {
            scheme = randomize_gamma(*fs, config.gamma_rho, mix_seed(real.seed ^ 0x67616d6d61ULL));
        }

        std::string why;
        Claim base = Claim::UpperBound;
        if (similar) {
            real.separation =
                check_separation(config.system, scheme, config.separation_depth,
                                 stationary ? SeparationKind::Strong : SeparationKind::Gap);
            if (real.separation->holds_at_depth) {
                base = Claim::Equality;
                why = std::string("similar system, ") + (stationary ? "strong" : "gap") +
                      " separation certified to depth " + std::to_string(config.separation_depth) +
                      ": D_q = min{d_q, d}";
            } else {
                why = "similar system without a separation certificate: upper bound only";
            }
        } else if (scheme.is_random()) {
            why = "affine system with i.i.d. random translations: D_q = min{d_q, d} almost surely for q > 1, "
                  "upper bound otherwise";
        } else if (std::holds_alternative<FiniteSetTranslations>(variant) && config.gamma_rho > 0.0) {
            why = report.norm_condition
                      ? "affine system with a randomly drawn finite translation set and ||T|| < 1/2: "
                        "D_q = min{d_q, d} almost surely for q > 1, upper bound otherwise"
                      : "affine system with ||T|| >= 1/2: upper bound only";
        } else {
            why = "affine system with fixed translations: upper bound only";
        }
        if (k == 0) {
            report.justification = why;
            report.tolerance = config.tolerance.value_or(similar && base == Claim::Equality ? 0.05 : 0.1);
        }

        const auto sample = sample_measure(config.system, scheme, config.measure, config.samples,
                                           report.sampling_depth, real.seed, {.target_resolution = r_min});
        FitOptions fit;
        fit.sample_size = config.samples;
        real.spectra = estimate_spectrum(sample, config.qs, config.scales, fit);

        for (std::size_t i = 0; i < config.qs.size(); ++i) {
            const double q = config.qs[i];
            const auto& th = report.theory[i];
            Claim claim = base;
            if (!similar && (scheme.is_random() || (std::holds_alternative<FiniteSetTranslations>(variant) &&
                                                    config.gamma_rho > 0.0 && report.norm_condition)))
                claim = q > 1.0 && !is_unit_q(q) ? Claim::Equality : Claim::UpperBound;
            if (!th.d_minus && !th.d_plus)
                claim = Claim::None;
            real.claims.push_back(claim);

            ReportRow row;
            row.q = q;
            row.d_theory = theory_value(th);
            row.method = method_name(th);
            const auto br = theory_bracket(th);
            row.bracket_lo = br.lo;
            row.bracket_hi = br.hi;
            row.clamped = std::isnan(row.d_theory) ? row.d_theory : clamp_dimension(row.d_theory, d);
            row.d_empirical = real.spectra[i].slope;
            row.fit_err = real.spectra[i].slope_error;
            const double tol = report.tolerance;
            const double lower = th.d_minus ? clamp_dimension(*th.d_minus, d) : row.clamped;
            const double upper = th.d_plus ? clamp_dimension(*th.d_plus, d) : row.clamped;
            if (claim == Claim::Equality)
                row.pass = row.d_empirical >= lower - tol && row.d_empirical <= upper + tol;
            else if (claim == Claim::UpperBound)
                row.pass = row.d_empirical <= upper + tol;
            real.rows.push_back(row);
        }
        report.realizations.push_back(std::move(real));
    }
    if (report.realizations.empty())
        report.tolerance = config.tolerance.value_or(0.1);
    return report;
}

// ---------------------------------------------------------------------------------------------

std::string format_double(double x)
{
    if (std::isnan(x))
        return "nan";
    if (std::isinf(x))
        return x > 0 ? "inf" : "-inf";
    char buf[32];
    const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, p);
}

double parse_double(const std::string& s)
{
    if (s == "nan")
        return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf")
        return std::numeric_limits<double>::infinity();
    if (s == "-inf")
        return -std::numeric_limits<double>::infinity();
    double v = 0.0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
        throw std::invalid_argument("not a number: '" + s + "'");
    return v;
}

void write_report_csv(std::ostream& os, const std::vector<ReportRow>& rows)
{
    os << kReportHeader << '\n';
    for (const auto& r : rows) {
        os << format_double(r.q) << ',' << format_double(r.d_theory) << ',' << r.method << ','
           << format_double(r.bracket_lo) << ',' << format_double(r.bracket_hi) << ',' << format_double(r.clamped)
           << ',' << format_double(r.d_empirical) << ',' << format_double(r.fit_err) << ','
           << (r.pass ? (*r.pass ? "true" : "false") : "na") << '\n';
    }
}

std::vector<ReportRow> parse_report_csv(std::istream& is)
{
    std::string line;
    if (!std::getline(is, line) || line != kReportHeader)
        throw std::invalid_argument("report CSV: missing or unexpected header");
    std::vector<ReportRow> rows;
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty())
            continue;
        const auto f = split_csv(line);
        if (f.size() != 9)
            throw std::invalid_argument("report CSV line " + std::to_string(lineno) + ": expected 9 fields");
        ReportRow r;
        try {
            r.q = parse_double(f[0]);
            r.d_theory = parse_double(f[1]);
            r.method = f[2];
            r.bracket_lo = parse_double(f[3]);
            r.bracket_hi = parse_double(f[4]);
            r.clamped = parse_double(f[5]);
            r.d_empirical = parse_double(f[6]);
            r.fit_err = parse_double(f[7]);
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument("report CSV line " + std::to_string(lineno) + ": " + e.what());
        }
        if (f[8] == "true")
            r.pass = true;
        else if (f[8] == "false")
            r.pass = false;
        else if (f[8] != "na")
            throw std::invalid_argument("report CSV line " + std::to_string(lineno) + ": bad pass field");
        rows.push_back(std::move(r));
    }
    return rows;
}

void write_spectrum_csv(std::ostream& os, const std::vector<SpectrumEstimate>& spectra)
{
    os << "q,r,sum,cells\n";
    for (const auto& s : spectra)
        for (const auto& rec : s.records)
            os << format_double(s.q) << ',' << format_double(rec.r) << ',' << format_double(rec.sum) << ','
               << rec.cells << '\n';
}

void write_fit_csv(std::ostream& os, const ComparisonReport& report)
{
    os << "realization,q,slope,intercept,residual,slope_error,r_max,r_min,scales,stable\n";
    for (const auto& real : report.realizations)
        for (const auto& s : real.spectra)
            os << real.index << ',' << format_double(s.q) << ',' << format_double(s.slope) << ','
               << format_double(s.intercept) << ',' << format_double(s.residual) << ','
               << format_double(s.slope_error) << ',' << format_double(s.r_max()) << ',' << format_double(s.r_min())
               << ',' << (s.last - s.first + 1) << ',' << (s.stable ? "true" : "false") << '\n';
}

void write_report_text(std::ostream& os, const ComparisonReport& report)
{
    auto fixed = [](double x, int prec = 4) {
        if (std::isnan(x))
            return std::string("-");
        std::ostringstream s;
        s.setf(std::ios::fixed);
        s.precision(prec);
        s << x;
        return s.str();
    };
    os << "experiment: " << (report.name.empty() ? "(unnamed)" : report.name) << '\n'
       << "dimension: " << report.dimension << '\n'
       << "seed: " << report.seed << '\n'
       << "samples: " << report.samples << '\n'
       << "sampling depth: " << report.sampling_depth << '\n'
       << "theory depth: " << report.theory_depth << '\n'
       << "max ||T||: " << fixed(report.max_norm, 6) << (report.norm_condition ? " (< 1/2)" : " (>= 1/2)") << '\n'
       << "tolerance: " << format_double(report.tolerance) << '\n'
       << "claim: " << report.justification << "\n\n";

    os << "theory\n";
    for (const auto& e : report.theory) {
        os << "  q=" << format_double(e.q) << "  d-=" << (e.d_minus ? fixed(*e.d_minus, 6) : "inf")
           << " (" << to_string(e.minus_kind) << ")";
        if (e.plus_computed)
            os << "  d+=" << (e.d_plus ? fixed(*e.d_plus, 6) : "inf") << " (" << to_string(e.plus_kind) << ")";
        os << "  method=" << method_name(e) << "  status=" << to_string(e.status);
        if (e.depth_hi > 0)
            os << "  window=[" << e.depth_lo << "," << e.depth_hi << "]";
        if (e.mc_relative_error > 0.0)
            os << "  mc_rel_err=" << fixed(e.mc_relative_error, 6);
        if (!e.note.empty())
            os << "  note: " << e.note;
        os << '\n';
    }

    for (const auto& real : report.realizations) {
        os << "\nrealization " << real.index << " (seed " << real.seed << ")\n";
        if (real.separation) {
            const auto& s = *real.separation;
            os << "  separation: " << to_string(s.kind) << " at depth " << s.depth << ": "
               << (s.holds_at_depth ? "holds" : "fails") << ", worst gap ratio " << fixed(s.worst_gap_ratio, 6);
            if (!s.holds_at_depth)
                os << ", witness " << s.witness.first.to_string() << " / " << s.witness.second.to_string();
            os << '\n';
        }
        os << "  q        d_theory  clamped   D_emp     fit_err   window                      claim        pass\n";
        for (std::size_t i = 0; i < real.rows.size(); ++i) {
            const auto& r = real.rows[i];
            const auto& s = real.spectra[i];
            std::ostringstream line;
            line << "  ";
            line.width(8);
            line << std::left << format_double(r.q) << ' ';
            for (double v : {r.d_theory, r.clamped, r.d_empirical, r.fit_err}) {
                line.width(9);
                line << fixed(v) << ' ';
            }
            std::ostringstream win;
            win << format_double(s.r_max()) << ".." << format_double(s.r_min()) << (s.stable ? "" : "*");
            line.width(27);
            line << win.str() << ' ';
            line.width(12);
            line << to_string(real.claims[i]) << ' ' << (r.pass ? (*r.pass ? "pass" : "FAIL") : "n/a");
            os << line.str() << '\n';
        }
    }
    bool unstable = false;
    for (const auto& real : report.realizations)
        for (const auto& s : real.spectra)
            unstable = unstable || !s.stable;
    if (unstable)
        os << "\n* no window met the slope-variation rule; all usable scales were fitted\n";
    os << "overall: " << (report.all_pass() ? "pass" : "FAIL") << '\n';
}

void emit_report(const ComparisonReport& report, ReportFormat format, const std::filesystem::path& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec)
        throw std::runtime_error("cannot create '" + dir.string() + "': " + ec.message());
    std::ostringstream os;
    if (format == ReportFormat::Text) {
        write_report_text(os, report);
        write_file(dir / "report.txt", os.str());
        return;
    }
    write_report_csv(os, report.rows());
    write_file(dir / "report.csv", os.str());
    std::ostringstream fit;
    write_fit_csv(fit, report);
    write_file(dir / "fit.csv", fit.str());
    for (const auto& real : report.realizations) {
        std::ostringstream sp;
        write_spectrum_csv(sp, real.spectra);
        const auto name =
            report.realizations.size() == 1 ? std::string("spectrum.csv") : "spectrum_" + std::to_string(real.index) + ".csv";
        write_file(dir / name, sp.str());
    }
}

} // namespace nifs
