// Acceptance run: one PASS/FAIL/SKIP line per criterion, nonzero exit on any FAIL.

#include "mtsd/mtsd.hpp"

#include "../unit/oracles.hpp"

#include "CLI11.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace mtsd;
using namespace mtsd::harness;
using diff::Array;
namespace fs = std::filesystem;

namespace {

enum class Verdict { pass, fail, skip };

struct Outcome {
    Verdict verdict;
    std::string detail;
};

Outcome pass_if(bool ok, std::string detail) { return {ok ? Verdict::pass : Verdict::fail, std::move(detail)}; }

std::string fmt(const char* f, double a) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

// ---------------------------------------------------------------------------

Outcome gradient_correctness() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto report = gradcheck_all(1);
    const double elapsed = seconds_since(t0);
    double worst_primitive = 0.0, end_to_end = 0.0;
    std::string failures;
    for (const auto& c : report.checks) {
        if (c.tolerance == end_to_end_tolerance) end_to_end = c.check.max_relative_error;
        else worst_primitive = std::max(worst_primitive, c.check.max_relative_error);
        if (!c.passed()) failures += " " + c.name;
    }
    std::ostringstream d;
    d << report.checks.size() << " checks, worst primitive " << fmt("%.2e", worst_primitive) << " (< 1e-4), end-to-end "
      << fmt("%.2e", end_to_end) << " (< 1e-3), " << fmt("%.1f", elapsed) << " s (< 60 s)";
    if (!failures.empty()) d << "; failed:" << failures;
    return pass_if(report.passed() && elapsed < 60.0, d.str());
}

Outcome reconstruction_identities() {
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<std::size_t> pick(0, 1000);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    const std::vector<std::string> additive{"A-tsg", "A-t3s3g3", "A-g2", "A-st", "A-tsg-nostat"};
    const std::vector<std::string> multiplicative{"M-tsg", "M-t3s3g3", "M-g2", "M-st", "M-tsg-nostat"};
    const std::vector<std::size_t> windows{8, 16, 32};
    double worst_add = 0.0, worst_mul = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        for (bool mult : {false, true}) {
            ModelConfig mc;
            const auto& specs = mult ? multiplicative : additive;
            mc.spec = parse_stack_spec(specs[pick(rng) % specs.size()]);
            mc.channels = 1 + pick(rng) % 4;
            mc.window = windows[pick(rng) % windows.size()];
            mc.classes = 2 + pick(rng) % 4;
            mc.extractor_width = 4 + pick(rng) % 12;
            mc.classifier_width = 4 + pick(rng) % 12;
            mc.poly_degree = 1 + pick(rng) % 3;
            Mtsdnet net(mc, 1000 + static_cast<std::uint64_t>(trial));
            const std::size_t B = 1 + pick(rng) % 4;
            std::vector<double> v(B * mc.channels * mc.window);
            const double magnitude = std::pow(10.0, 3.0 * unit(rng));
            for (auto& x : v) x = mult ? magnitude * std::exp(2.0 * unit(rng)) : magnitude * unit(rng) + 3.0 * unit(rng);
            Array x({B, mc.channels, mc.window}, v);
            const auto r = net.forward(x, trial % 2 == 0);
            Array total = r.residual;
            for (const auto& l : r.layers) total = mult ? total * l.component : total + l.component;
            double err = 0.0, norm = 0.0;
            for (std::size_t i = 0; i < v.size(); ++i) {
                err = std::max(err, std::fabs(v[i] - total[i]));
                norm = std::max(norm, std::fabs(v[i]));
            }
            const double rel = err / (mult ? norm : std::max(1.0, norm));
            (mult ? worst_mul : worst_add) = std::max(mult ? worst_mul : worst_add, rel);
        }
    }
    std::ostringstream d;
    d << "100 additive and 100 multiplicative random models; worst scaled error additive " << fmt("%.2e", worst_add)
      << ", multiplicative " << fmt("%.2e", worst_mul) << " (< 1e-9)";
    return pass_if(worst_add < 1e-9 && worst_mul < 1e-9, d.str());
}

Outcome basis_fidelity() {
    auto matches = [](const BasisMatrix& b, const std::vector<std::vector<double>>& rows) {
        if (b.rows() != rows.size()) return false;
        for (std::size_t r = 0; r < rows.size(); ++r) {
            if (b.window() != rows[r].size()) return false;
            for (std::size_t j = 0; j < rows[r].size(); ++j)
                if (b(r, j) != rows[r][j]) return false;
        }
        return true;
    };
    const bool trend_ok = matches(trend_basis(4, 1), {{0.25, 0.25, 0.25, 0.25}, {0, 0.25, 0.5, 0.75}});
    const bool seasonal_ok = matches(seasonal_basis(4), {{1, 1, 1, 1}, {1, 0, -1, 0}, {0, 0, 0, 0}, {0, 1, 0, -1}});
    const auto s8 = seasonal_basis(8);
    const std::size_t rank = oracle::rank(s8.values(), 8, 8);
    std::ostringstream d;
    d << "trend_basis(4,1) " << (trend_ok ? "exact" : "MISMATCH") << ", seasonal_basis(4) "
      << (seasonal_ok ? "exact" : "MISMATCH") << ", rank(seasonal_basis(8)) = " << rank << " (expected 7)";
    return pass_if(trend_ok && seasonal_ok && rank == 7, d.str());
}

Outcome converter_and_clamp() {
    const std::size_t n = 100000;
    std::vector<double> grid(n);
    for (std::size_t i = 0; i < n; ++i) grid[i] = -10.0 + 20.0 * static_cast<double>(i) / static_cast<double>(n - 1);
    Array f = to_multiplicative(Array({n}, grid));
    bool positive = true, monotone = true;
    for (std::size_t i = 0; i < n; ++i) {
        positive = positive && f[i] > 0.0;
        if (i) monotone = monotone && f[i] >= f[i - 1];
    }
    const bool at_zero = to_multiplicative(Array({1}, {0.0})).item() == 1.0;

    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> d(-20.0, 20.0);
    bool bounded = true, idempotent = true;
    for (int i = 0; i < 10000; ++i) {
        double lo = d(rng), hi = d(rng);
        if (lo > hi) std::swap(lo, hi);
        WindowStats s{Array({1, 1}, {lo}), Array({1, 1}, {0.5 * (lo + hi)}), Array({1, 1}, {hi}), Array({1, 1}, {1.0})};
        const Mode mode = i % 2 ? Mode::multiplicative : Mode::additive;
        Array x({1, 1, 1}, {1.5 * d(rng)});
        Array once = clamp_component(x, s, mode);
        Array twice = clamp_component(once, s, mode);
        const double b_lo = mode == Mode::additive ? lo - 0.1 * std::fabs(lo) : 0.5;
        const double b_hi = mode == Mode::additive ? hi + 0.1 * std::fabs(hi) : 2.0;
        bounded = bounded && once[0] >= b_lo && once[0] <= b_hi;
        idempotent = idempotent && once[0] == twice[0];
    }
    std::ostringstream out;
    out << "f(0)=1 " << (at_zero ? "yes" : "NO") << ", positive " << (positive ? "yes" : "NO") << ", nondecreasing "
        << (monotone ? "yes" : "NO") << " on 1e5 grid; clamp within bounds " << (bounded ? "yes" : "NO") << ", idempotent "
        << (idempotent ? "yes" : "NO") << " on 1e4 cases";
    return pass_if(at_zero && positive && monotone && bounded && idempotent, out.str());
}

Outcome parameter_accounting() {
    const auto m = data::ucihar_manifest();
    TrainConfig config; // default widths
    auto model = build_model(config, m, 1);
    auto* net = dynamic_cast<Mtsdnet*>(model.get());
    const std::size_t K = m.channels, H = m.window, C = m.classes;
    const std::size_t w = config.extractor_width, c = config.classifier_width;
    bool exact = true;
    std::size_t formula_total = net->layer_count();
    for (std::size_t l = 0; l < net->layer_count(); ++l) {
        const auto& layer = net->layer(l);
        const std::size_t R = layer.config.kind == BlockKind::trend ? config.poly_degree + 1 : H;
        std::size_t extractor = H * w + w + 2 * w;
        for (std::size_t s = 1; s < layer.config.depth(); ++s) extractor += w * w + w + 2 * w;
        extractor += R * w + R;
        const std::size_t in = K * R + 4 * K;
        const std::size_t classifier = in * c + c + c * c + c + c * C + C;
        std::size_t counted_extractor = 0, counted_classifier = 0;
        const auto prefix = "layer" + std::to_string(l) + ".";
        for (const auto& p : net->parameters()) {
            if (p.name.starts_with(prefix + "extractor.")) counted_extractor += p.array.size();
            if (p.name.starts_with(prefix + "classifier.")) counted_classifier += p.array.size();
        }
        exact = exact && counted_extractor == extractor && counted_classifier == classifier;
        formula_total += extractor + classifier;
    }
    std::size_t attention = 0;
    for (const auto& p : net->parameters())
        if (p.name.starts_with("attention")) attention += p.array.size();
    exact = exact && attention == net->layer_count();
    const std::size_t total = count_parameters(*net);
    exact = exact && total == formula_total;
    const double ratio = static_cast<double>(total) / 51400.0;
    std::ostringstream d;
    d << "A-tsg on K=9 H=128 C=6 with widths " << w << "/" << c << ": " << total << " parameters ("
      << fmt("%+.1f%%", 100.0 * (ratio - 1.0)) << " vs 51.4K, limit 25%); per-block hand formula "
      << (exact ? "exact" : "MISMATCH");
    return pass_if(exact && std::fabs(ratio - 1.0) <= 0.25, d.str());
}

// ---------------------------------------------------------------------------
// Synthetic study shared by criteria 5, 8, 9 and 10.

struct Study {
    RunResult tsg, mlp, nostat, tsg_repeat;
    fs::path tsg_dir, repeat_dir;
};

RunResult run_spec(const std::vector<data::Recording>& recs, const data::DatasetManifest& m, const std::string& spec,
                   std::size_t seeds, const fs::path& out) {
    TrainConfig config;
    config.spec = spec;
    config.seeds = seeds;
    const auto t0 = std::chrono::steady_clock::now();
    auto r = run_protocol(recs, m, config, [&](const SeedResult& s) {
        std::cerr << "  " << spec << " part " << s.part + 1 << " seed " << s.seed << ": accuracy "
                  << fmt("%.4f", s.metrics.accuracy) << "\n";
    });
    std::cerr << "  " << spec << " finished in " << fmt("%.0f", seconds_since(t0)) << " s, mean accuracy "
              << fmt("%.4f", r.overall.accuracy.mean) << "\n";
    write_results(r, out);
    return r;
}

Outcome synthetic_study(const Study& s) {
    const double a = s.tsg.overall.accuracy.mean, b = s.mlp.overall.accuracy.mean;
    std::ostringstream d;
    d << "A-tsg " << fmt("%.4f", a) << " (>= 0.90), MLP " << fmt("%.4f", b) << ", gap " << fmt("%.1f", 100.0 * (a - b))
      << " points (>= 5)";
    return pass_if(a >= 0.90 && a - b >= 0.05, d.str());
}

Outcome attention_sanity(const Study& s) {
    double worst_sum = 0.0;
    std::size_t runs = 0;
    for (const auto* r : {&s.tsg, &s.nostat, &s.tsg_repeat}) {
        for (const auto& run : r->runs) {
            double total = 0.0;
            for (double w : run.attention) total += w;
            worst_sum = std::max(worst_sum, std::fabs(total - 1.0));
            ++runs;
        }
    }
    // trend dominance per seed, attention averaged over the LOSO parts
    const std::size_t seeds = s.tsg.config.seeds;
    std::size_t trend_wins = 0, trend_run_wins = 0;
    std::vector<double> mean_weights(3, 0.0);
    for (std::size_t k = 0; k < seeds; ++k) {
        std::vector<double> avg(3, 0.0);
        std::size_t n = 0;
        for (const auto& run : s.tsg.runs) {
            if (run.seed != s.tsg.config.first_seed + k) continue;
            for (std::size_t l = 0; l < 3; ++l) avg[l] += run.attention[l];
            ++n;
            if (run.attention[0] > run.attention[1] && run.attention[0] > run.attention[2]) ++trend_run_wins;
        }
        for (std::size_t l = 0; l < 3; ++l) {
            avg[l] /= static_cast<double>(n);
            mean_weights[l] += avg[l] / static_cast<double>(seeds);
        }
        if (avg[0] > avg[1] && avg[0] > avg[2]) ++trend_wins;
    }
    std::ostringstream d;
    d << "sums within " << fmt("%.1e", worst_sum) << " over " << runs << " runs (<= 1e-12); trend largest in " << trend_wins
      << " of " << seeds << " seeds (>= 4), " << trend_run_wins << " of " << s.tsg.runs.size()
      << " runs; mean weights T " << fmt("%.3f", mean_weights[0]) << " S " << fmt("%.3f", mean_weights[1]) << " G "
      << fmt("%.3f", mean_weights[2]);
    return pass_if(worst_sum <= 1e-12 && trend_wins >= 4, d.str());
}

Outcome ablation_hook(const Study& s) {
    const bool toggles = !parse_stack_spec("A-tsg-nostat").use_stats && parse_stack_spec("A-tsg").use_stats &&
                         to_string(parse_stack_spec("A-tsg-nostat")) == "A-tsg-nostat";
    const double a = s.tsg.overall.accuracy.mean, b = s.nostat.overall.accuracy.mean;
    std::ostringstream d;
    d << "A-tsg " << fmt("%.4f", a) << " vs A-tsg-nostat " << fmt("%.4f", b) << " (nostat must be strictly lower); spec toggle "
      << (toggles ? "ok" : "BROKEN");
    return pass_if(toggles && b < a, d.str());
}

Outcome determinism(const Study& s) {
    const auto first = slurp(s.tsg_dir / "results.json"), second = slurp(s.repeat_dir / "results.json");
    const bool same = !first.empty() && first == second;
    std::ostringstream d;
    d << "two A-tsg runs with seeds " << s.tsg.config.first_seed << ".." << s.tsg.config.first_seed + s.tsg.config.seeds - 1
      << ": results.json " << first.size() << " bytes, " << (same ? "byte-identical" : "DIFFERENT");
    return pass_if(same, d.str());
}

Outcome ucihar_spot_check(const std::string& raw, const fs::path& scratch) {
    if (raw.empty()) return {Verdict::skip, "set MTSD_UCIHAR_RAW or --ucihar-raw to the 'UCI HAR Dataset' directory"};
    if (!fs::is_directory(raw)) return {Verdict::fail, raw + " is not a directory"};
    const auto canonical = scratch / "ucihar";
    data::import_ucihar(raw, canonical);
    auto [m, recs] = data::load_canonical(canonical);
    TrainConfig config;
    config.parts = {2};
    const auto t0 = std::chrono::steady_clock::now();
    auto r = run_protocol(recs, m, config, [](const SeedResult& s) {
        std::cerr << "  UCIHAR Part3 seed " << s.seed << ": accuracy " << fmt("%.4f", s.metrics.accuracy) << "\n";
    });
    write_results(r, scratch / "ucihar_part3");
    const double mean = r.overall.accuracy.mean;
    std::ostringstream d;
    d << "Part3, 10 seeds: " << format_cell(r.overall.accuracy) << " vs 93.49(0.65), difference "
      << fmt("%+.2f", 100.0 * (mean - 0.9349)) << " points (limit 3.0), " << fmt("%.0f", seconds_since(t0)) << " s";
    return pass_if(std::fabs(mean - 0.9349) <= 0.03, d.str());
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance criteria"};
    std::string scratch = (fs::temp_directory_path() / "mtsd_acceptance").string();
    std::string ucihar_raw;
    if (const char* env = std::getenv("MTSD_UCIHAR_RAW")) ucihar_raw = env;
    std::uint64_t data_seed = 1;
    std::size_t seeds = 5;
    app.add_option("--scratch", scratch, "working directory for generated data and results");
    app.add_option("--ucihar-raw", ucihar_raw, "UCI HAR Dataset directory for the optional real-data check");
    app.add_option("--data-seed", data_seed, "seed of the synthetic dataset");
    CLI11_PARSE(app, argc, argv);

    const fs::path root(scratch);
    fs::create_directories(root);
    std::vector<std::pair<std::string, Outcome>> lines;
    auto record = [&](std::string name, const std::function<Outcome()>& f) {
        Outcome o;
        try {
            o = f();
        } catch (const std::exception& e) {
            o = {Verdict::fail, std::string("exception: ") + e.what()};
        }
        const char* tag = o.verdict == Verdict::pass ? "PASS" : o.verdict == Verdict::fail ? "FAIL" : "SKIP";
        std::cout << "[" << tag << "] " << name << ": " << o.detail << std::endl;
        lines.emplace_back(std::move(name), std::move(o));
    };

    record("1 gradient correctness", gradient_correctness);
    record("2 reconstruction identities", reconstruction_identities);
    record("3 basis fidelity", basis_fidelity);
    record("4 converter and clamp properties", converter_and_clamp);

    Study study;
    bool study_ok = true;
    std::string study_error;
    try {
        data::SynthSpec spec; // S=6, C=4, K=3, H=64, bias_scale=5
        auto [m, recs] = data::synth_generate(spec, data_seed);
        data::write_canonical(root / "synthetic", m, recs);
        study.tsg_dir = root / "tsg";
        study.repeat_dir = root / "tsg_repeat";
        std::cerr << "synthetic study: " << spec.subjects << " subjects, " << seeds << " seeds\n";
        const auto t0 = std::chrono::steady_clock::now();
        study.tsg = run_spec(recs, m, "A-tsg", seeds, study.tsg_dir);
        study.mlp = run_spec(recs, m, "MLP", seeds, root / "mlp");
        std::cerr << "  criterion 5 runtime " << fmt("%.0f", seconds_since(t0)) << " s\n";
        study.nostat = run_spec(recs, m, "A-tsg-nostat", seeds, root / "nostat");
        study.tsg_repeat = run_spec(recs, m, "A-tsg", seeds, study.repeat_dir);
    } catch (const std::exception& e) {
        study_ok = false;
        study_error = e.what();
    }
    auto with_study = [&](Outcome (*f)(const Study&)) {
        return [&, f]() -> Outcome {
            if (!study_ok) return {Verdict::fail, "synthetic study failed: " + study_error};
            return f(study);
        };
    };
    record("5 synthetic domain-generalization study", with_study(synthetic_study));
    record("6 UCIHAR spot check (optional)", [&] { return ucihar_spot_check(ucihar_raw, root); });
    record("7 parameter accounting", parameter_accounting);
    record("8 attention sanity", with_study(attention_sanity));
    record("9 ablation hook", with_study(ablation_hook));
    record("10 determinism", with_study(determinism));

    std::size_t failed = 0, skipped = 0;
    for (const auto& [name, o] : lines) {
        failed += o.verdict == Verdict::fail;
        skipped += o.verdict == Verdict::skip;
    }
    std::cout << lines.size() - failed - skipped << " passed, " << failed << " failed, " << skipped << " skipped" << std::endl;
    return failed == 0 ? 0 : 1;
}
