#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "nifs/experiment.hpp"

using namespace nifs;

namespace {

struct Common {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::vector<double> qs;
    std::optional<double> tolerance;
};

ExperimentConfig load(const Common& c)
{
    auto cfg = load_config(c.config);
    if (c.seed)
        cfg.seed = *c.seed;
    if (!c.qs.empty())
        cfg.qs = c.qs;
    if (c.tolerance)
        cfg.tolerance = *c.tolerance;
    if (!c.out.empty())
        cfg.output = c.out;
    return cfg;
}

std::filesystem::path out_dir(const ExperimentConfig& cfg)
{
    return cfg.output.empty() ? std::filesystem::path(".") : cfg.output;
}

void add_common(CLI::App* app, Common& c, bool need_config = true)
{
    auto* opt = app->add_option("--config", c.config, "experiment config (JSON)")->check(CLI::ExistingFile);
    if (need_config)
        opt->required();
    app->add_option("--out", c.out, "output directory");
    app->add_option("--seed", c.seed, "override the config seed");
    app->add_option("--q", c.qs, "override the q-grid, e.g. --q 0.5,2,3")->delimiter(',');
    app->add_option("--tolerance", c.tolerance, "override the pass/fail tolerance");
}

std::string fmt(const std::optional<double>& v) { return v ? format_double(*v) : "inf"; }

int cmd_theory(const Common& c)
{
    const auto cfg = load(c);
    const auto rows = theory_exponents(cfg);
    std::ostringstream os;
    os << "q,d_minus,d_plus,minus_kind,plus_kind,method,status,bracket_lo,bracket_hi,depth_lo,depth_hi,note\n";
    for (const auto& e : rows) {
        os << format_double(e.q) << ',' << fmt(e.d_minus) << ',' << (e.plus_computed ? fmt(e.d_plus) : "na") << ','
           << to_string(e.minus_kind) << ',' << to_string(e.plus_kind) << ','
           << (e.d_minus || e.d_plus ? to_string(e.method) : "none") << ',' << to_string(e.status) << ','
           << format_double(e.minus_bracket.lo) << ',' << format_double(e.minus_bracket.hi) << ',' << e.depth_lo << ','
           << e.depth_hi << ',' << e.note << '\n';
    }
    std::cout << os.str();
    if (!c.out.empty()) {
        std::filesystem::create_directories(c.out);
        std::ofstream f(std::filesystem::path(c.out) / "theory.csv", std::ios::binary);
        if (!(f << os.str()))
            throw std::runtime_error("cannot write '" + (std::filesystem::path(c.out) / "theory.csv").string() + "'");
    }
    return 0;
}

int cmd_sample(const Common& c, bool binary, std::optional<std::size_t> count)
{
    const auto cfg = load(c);
    const double r_min = *std::min_element(cfg.scales.begin(), cfg.scales.end());
    const int depth = cfg.depth > 0 ? cfg.depth
                                    : std::min(profile(cfg.system).max_depth(),
                                               default_sampling_depth(contraction_bound(cfg.system), r_min * 1e-3));
    const auto sample = sample_measure(cfg.system, cfg.translations, cfg.measure, count.value_or(cfg.samples), depth,
                                       cfg.seed, {.target_resolution = r_min});
    const auto dir = out_dir(cfg);
    std::filesystem::create_directories(dir);
    const auto path = dir / (binary ? "sample.bin" : "sample.csv");
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw std::runtime_error("cannot open '" + path.string() + "'");
    if (binary)
        write_sample_binary(os, sample);
    else
        write_sample_csv(os, sample);
    if (!os)
        throw std::runtime_error("write failed for '" + path.string() + "'");
    std::cerr << "wrote " << sample.size() << " points (depth " << depth << ") to " << path.string() << '\n';
    if (sample.metadata.resolution_warning)
        std::cerr << "warning: truncation bound " << sample.metadata.truncation_bound
                  << " exceeds the finest scale\n";
    return 0;
}

int cmd_estimate(const Common& c, const std::string& sample_path)
{
    std::ifstream is(sample_path, std::ios::binary);
    if (!is)
        throw std::runtime_error("cannot open sample '" + sample_path + "'");
    const bool binary = std::filesystem::path(sample_path).extension() == ".bin";
    const auto sample = binary ? read_sample_binary(is) : read_sample_csv(is);

    std::vector<double> qs = c.qs.empty() ? std::vector<double>{0.5, 1.0, 2.0, 3.0} : c.qs;
    std::vector<double> scales = dyadic_scales();
    if (!c.config.empty()) {
        const auto cfg = load(c);
        qs = cfg.qs;
        scales = cfg.scales;
    }
    FitOptions fit;
    fit.sample_size = sample.size();
    const auto spectra = estimate_spectrum(sample, qs, scales, fit);

    std::cout << "q,D,fit_err,residual,r_max,r_min,scales,stable\n";
    for (const auto& s : spectra)
        std::cout << format_double(s.q) << ',' << format_double(s.slope) << ',' << format_double(s.slope_error) << ','
                  << format_double(s.residual) << ',' << format_double(s.r_max()) << ',' << format_double(s.r_min())
                  << ',' << (s.last - s.first + 1) << ',' << (s.stable ? "true" : "false") << '\n';
    if (!c.out.empty()) {
        std::filesystem::create_directories(c.out);
        const auto path = std::filesystem::path(c.out) / "spectrum.csv";
        std::ofstream os(path, std::ios::binary);
        write_spectrum_csv(os, spectra);
        if (!os)
            throw std::runtime_error("write failed for '" + path.string() + "'");
    }
    return 0;
}

int cmd_compare(const Common& c)
{
    const auto cfg = load(c);
    const auto report = run_experiment(cfg);
    const auto dir = out_dir(cfg);
    emit_report(report, ReportFormat::Csv, dir);
    emit_report(report, ReportFormat::Text, dir);
    write_report_text(std::cout, report);
    return report.all_pass() ? 0 : 2;
}

int cmd_separation(const Common& c, int depth, const std::string& kind)
{
    const auto cfg = load(c);
    const SeparationKind k = kind == "open" ? SeparationKind::Open
                             : kind == "gap" ? SeparationKind::Gap
                                             : SeparationKind::Strong;
    const auto rep = check_separation(cfg.system, cfg.translations, depth > 0 ? depth : cfg.separation_depth, k);
    std::cout << to_string(rep.kind) << " separation at depth " << rep.depth << ": "
              << (rep.holds_at_depth ? "holds" : "fails") << "\nworst gap ratio: " << format_double(rep.worst_gap_ratio)
              << '\n';
    if (!rep.holds_at_depth)
        std::cout << "witness: " << rep.witness.first.to_string() << " " << rep.witness.second.to_string() << '\n';
    return rep.holds_at_depth ? 0 : 1;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Generalized q-dimensions of nonautonomous iterated function systems"};
    app.require_subcommand(1);

    Common theory, sample, estimate, compare, sep;
    auto* t = app.add_subcommand("theory", "critical exponents d_q from the config");
    add_common(t, theory);

    auto* s = app.add_subcommand("sample", "draw points from the projected measure");
    add_common(s, sample);
    bool binary = false;
    std::optional<std::size_t> count;
    s->add_flag("--binary", binary, "write sample.bin instead of sample.csv");
    s->add_option("--count", count, "number of points (default: config samples)");

    auto* e = app.add_subcommand("estimate", "fit D_q to a sample file");
    add_common(e, estimate, false);
    std::string sample_path;
    e->add_option("--sample", sample_path, "sample CSV, or .bin")->required()->check(CLI::ExistingFile);

    auto* cmp = app.add_subcommand("compare", "theory against the empirical estimate, with reports");
    add_common(cmp, compare);

    auto* cs = app.add_subcommand("check-separation", "finite-depth separation certificate");
    add_common(cs, sep);
    int depth = 0;
    std::string kind = "strong";
    cs->add_option("--depth", depth, "tree depth (default: config separation_depth)");
    cs->add_option("--kind", kind, "open, strong or gap")->check(CLI::IsMember({"open", "strong", "gap"}));

    CLI11_PARSE(app, argc, argv);
    try {
        if (*t)
            return cmd_theory(theory);
        if (*s)
            return cmd_sample(sample, binary, count);
        if (*e)
            return cmd_estimate(estimate, sample_path);
        if (*cmp)
            return cmd_compare(compare);
        if (*cs)
            return cmd_separation(sep, depth, kind);
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << '\n';
        return 1;
    }
    return 0;
}
