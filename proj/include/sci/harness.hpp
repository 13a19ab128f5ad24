#pragma once

// Experiment driver: runs a preset over its seeds, persists episode and
// audit records, and derives every reported metric from those records.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <future>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "sci/loop.hpp"
#include "sci/metrics.hpp"

namespace sci::harness {

namespace fs = std::filesystem;

struct SeedRun {
    std::uint64_t seed = 0;
    double noise_sigma = 0.0;
    std::vector<loop::EpisodeRecord> episodes;
    std::vector<ctrl::TraceEntry> trace;
    std::vector<std::string> audit;   // serialized records, one per cycle
    std::size_t skipped = 0;
    std::size_t updates = 0, rejects = 0, rollbacks = 0, noops = 0, budget_violations = 0;
    double curvature = 0.0;
    double calib_error = 0.0;
    double wall_seconds = 0.0;
};

/// Batch run of one seed: bootstrap, then every evaluation window in order.
inline SeedRun run_seed(const Preset& p, std::uint64_t seed) {
    const auto t0 = std::chrono::steady_clock::now();
    SeedRun out;
    out.seed = seed;
    out.noise_sigma = p.stream.noise_sigma;
    loop::Session s(p, seed, loop::bootstrap(p, seed), loop::session_id(p, seed));
    out.calib_error = s.boot().calib_error;
    for (std::uint64_t i = p.init_windows; i < p.total_windows(); ++i) {
        auto c = s.cycle(preset_window(p, seed, i));
        out.audit.push_back(c.audit.dump());
        if (c.skipped) {
            ++out.skipped;
            continue;
        }
        out.trace.push_back(*c.trace);
        out.episodes.push_back(std::move(*c.episode));
        switch (c.trace->event) {
            case ctrl::Event::update: ++out.updates; break;
            case ctrl::Event::reject: ++out.rejects; break;
            case ctrl::Event::rollback: ++out.rollbacks; break;
            case ctrl::Event::noop: ++out.noops; break;
            case ctrl::Event::budget_violation: ++out.budget_violations; break;
        }
    }
    out.curvature = s.controller().curvature();
    out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

struct FixedKRow {
    std::size_t k = 0;
    double accuracy = 0.0;
    double cost = 0.0;
};

struct Metrics {
    std::size_t n = 0;
    std::size_t errors = 0;
    std::size_t abstained = 0;
    double error_rate = 0.0;
    double accuracy = 0.0;
    double mean_steps = 0.0;
    double abstention_rate = 0.0;
    metrics::Allocation allocation;
    std::optional<double> auroc;              // abstentions counted as errors
    std::optional<double> auroc_excluding;    // abstentions left out
    std::vector<metrics::CoveragePoint> risk_coverage;
    std::vector<FixedKRow> fixed_k;
};

inline Metrics compute_metrics(const std::vector<loop::EpisodeRecord>& eps, const Vec& grid = metrics::coverage_grid()) {
    Metrics m;
    m.n = eps.size();
    if (eps.empty()) return m;
    Vec steps_ok, steps_err, score_pos, score_neg, excl_pos, excl_neg;
    std::vector<metrics::Scored> scored;
    double steps = 0.0;
    for (const auto& e : eps) {
        const bool err = e.error();
        const bool abst = e.outcome == mc::Outcome::abstained;
        m.errors += err;
        m.abstained += abst;
        steps += static_cast<double>(e.steps_used);
        (err ? steps_err : steps_ok).push_back(static_cast<double>(e.steps_used));
        (err || abst ? score_pos : score_neg).push_back(e.final_delta);
        if (!abst) (err ? excl_pos : excl_neg).push_back(e.final_delta);
        scored.push_back({e.seq, e.final_delta, err});
    }
    const double n = static_cast<double>(m.n);
    m.error_rate = static_cast<double>(m.errors) / n;
    m.accuracy = 1.0 - m.error_rate;
    m.mean_steps = steps / n;
    m.abstention_rate = static_cast<double>(m.abstained) / n;
    m.allocation = metrics::allocation_stats(steps_ok, steps_err);
    m.auroc = metrics::auroc(score_pos, score_neg);
    m.auroc_excluding = metrics::auroc(excl_pos, excl_neg);
    m.risk_coverage = metrics::risk_coverage(scored, grid);
    if (!eps.front().fixed_k.empty()) {
        for (std::size_t j = 0; j < eps.front().fixed_k.size(); ++j) {
            FixedKRow row;
            row.k = eps.front().fixed_k[j].first;
            std::size_t ok = 0;
            for (const auto& e : eps) ok += e.fixed_k.at(j).second == e.label;
            row.accuracy = static_cast<double>(ok) / n;
            row.cost = static_cast<double>(row.k);
            m.fixed_k.push_back(row);
        }
    }
    return m;
}

inline nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

inline nlohmann::json metrics_to_json(const Metrics& m) {
    nlohmann::json rc = nlohmann::json::array();
    for (const auto& p : m.risk_coverage) rc.push_back({{"coverage", p.coverage}, {"kept", p.kept}, {"error", p.error}});
    nlohmann::json fk = nlohmann::json::array();
    for (const auto& r : m.fixed_k) fk.push_back({{"k", r.k}, {"accuracy", r.accuracy}, {"cost", r.cost}});
    return {{"episodes", m.n},
            {"errors", m.errors},
            {"error_rate", m.error_rate},
            {"accuracy", m.accuracy},
            {"mean_steps", m.mean_steps},
            {"abstained", m.abstained},
            {"abstention_rate", m.abstention_rate},
            {"steps_correct", optional_json(m.allocation.correct_mean)},
            {"steps_wrong", optional_json(m.allocation.wrong_mean)},
            {"steps_ratio", optional_json(m.allocation.ratio)},
            {"auroc_delta_sp", optional_json(m.auroc)},
            {"auroc_delta_sp_excluding_abstained", optional_json(m.auroc_excluding)},
            {"risk_coverage", rc},
            {"fixed_k", fk}};
}

/// Mean and sample standard deviation of one metric over seeds; absent
/// values are skipped.
inline nlohmann::json seed_stat(const std::vector<std::optional<double>>& v) {
    Vec x;
    for (const auto& o : v)
        if (o) x.push_back(*o);
    if (x.empty()) return {{"mean", nullptr}, {"std", nullptr}, {"n", 0}};
    return {{"mean", math::mean(x)}, {"std", x.size() > 1 ? math::stddev(x) : 0.0}, {"n", x.size()}};
}

struct RunReport {
    Preset preset;
    std::vector<SeedRun> runs;
    std::vector<Metrics> per_seed;
    std::vector<std::string> failures;   // "seed: message"
    int escalations = 0;
    double wall_seconds = 0.0;

    bool partial() const { return !failures.empty(); }
    std::size_t total_errors() const {
        std::size_t e = 0;
        for (const auto& m : per_seed) e += m.errors;
        return e;
    }
    /// Seed mean of an optional per-seed metric.
    std::optional<double> mean_of(const std::function<std::optional<double>(const Metrics&)>& f) const {
        Vec x;
        for (const auto& m : per_seed)
            if (auto v = f(m)) x.push_back(*v);
        if (x.empty()) return std::nullopt;
        return math::mean(x);
    }
};

inline RunReport run_preset(Preset p, const std::vector<std::uint64_t>& seeds) {
    const auto t0 = std::chrono::steady_clock::now();
    RunReport rep;
    for (int attempt = 0;; ++attempt) {
        rep.runs.clear();
        rep.per_seed.clear();
        rep.failures.clear();
        std::vector<std::future<SeedRun>> jobs;
        for (auto seed : seeds) jobs.push_back(std::async(std::launch::async, [&p, seed] { return run_seed(p, seed); }));
        for (std::size_t i = 0; i < jobs.size(); ++i) {
            try {
                rep.runs.push_back(jobs[i].get());
                rep.per_seed.push_back(compute_metrics(rep.runs.back().episodes));
            } catch (const std::exception& e) {
                rep.failures.push_back(std::to_string(seeds[i]) + ": " + e.what());
                spdlog::error("[harness] {} seed {} failed: {}", p.name, seeds[i], e.what());
            }
        }
        rep.escalations = attempt;
        if (rep.total_errors() >= p.min_errors || attempt >= p.max_escalations || rep.partial()) break;
        spdlog::info("[harness] {}: {} errors < {}; raising noise_sigma {} -> {}", p.name, rep.total_errors(),
                     p.min_errors, p.stream.noise_sigma, p.stream.noise_sigma * p.noise_escalation);
        p.stream.noise_sigma *= p.noise_escalation;
    }
    rep.preset = p;
    rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

inline nlohmann::json report_to_json(const RunReport& r) {
    nlohmann::json j;
    j["format"] = "sci-report";
    j["version"] = 1;
    j["preset"] = r.preset.name;
    std::vector<std::uint64_t> seeds;
    for (const auto& s : r.runs) seeds.push_back(s.seed);
    j["seeds"] = seeds;
    j["partial"] = r.partial();
    j["failures"] = r.failures;
    j["noise_sigma"] = r.preset.stream.noise_sigma;
    j["noise_escalations"] = r.escalations;
    if (r.escalations > 0)
        j["note"] = "fewer than " + std::to_string(r.preset.min_errors) + " errors at the base noise level; noise_sigma raised " +
                    std::to_string(r.escalations) + " time(s) by x" + std::to_string(r.preset.noise_escalation);
    j["total_errors"] = r.total_errors();
    nlohmann::json per = nlohmann::json::array();
    for (std::size_t i = 0; i < r.runs.size(); ++i) {
        const auto& s = r.runs[i];
        nlohmann::json m = metrics_to_json(r.per_seed[i]);
        m["seed"] = s.seed;
        m["skipped"] = s.skipped;
        m["calibration_error"] = s.calib_error;
        const auto d = ctrl::monitor(s.trace, r.preset.controller.eta, std::max(1.0, s.curvature));
        m["descent_violation_fraction"] = d.violation_fraction;
        m["controller_events"] = {{"update", s.updates}, {"reject", s.rejects}, {"rollback", s.rollbacks},
                                  {"no-op", s.noops}, {"budget-violation", s.budget_violations}};
        per.push_back(std::move(m));
    }
    j["per_seed"] = per;
    auto stat = [&](auto f) {
        std::vector<std::optional<double>> v;
        for (const auto& m : r.per_seed) v.push_back(f(m));
        return seed_stat(v);
    };
    j["aggregate"] = {
        {"error_rate", stat([](const Metrics& m) { return std::optional<double>(m.error_rate); })},
        {"mean_steps", stat([](const Metrics& m) { return std::optional<double>(m.mean_steps); })},
        {"steps_correct", stat([](const Metrics& m) { return m.allocation.correct_mean; })},
        {"steps_wrong", stat([](const Metrics& m) { return m.allocation.wrong_mean; })},
        {"steps_ratio", stat([](const Metrics& m) { return m.allocation.ratio; })},
        {"auroc_delta_sp", stat([](const Metrics& m) { return m.auroc; })},
        {"auroc_delta_sp_excluding_abstained", stat([](const Metrics& m) { return m.auroc_excluding; })},
        {"abstention_rate", stat([](const Metrics& m) { return std::optional<double>(m.abstention_rate); })},
    };
    if (r.preset.ood_snr_db) {
        j["ood"] = {{"snr_db", *r.preset.ood_snr_db},
                    {"auroc_delta_sp", j["aggregate"]["auroc_delta_sp"]["mean"]},
                    {"mean_steps", j["aggregate"]["mean_steps"]["mean"]},
                    {"t_max", r.preset.policy.t_max}};
    }
    j["wall_seconds"] = r.wall_seconds;
    return j;
}

/// Writes report.json plus per-seed episodes, audit and Lyapunov trace files.
inline void write_run(const RunReport& r, const fs::path& dir) {
    fs::create_directories(dir);
    for (const auto& s : r.runs) {
        const std::string stem = loop::session_id(r.preset, s.seed);
        std::ofstream ep(dir / (stem + ".episodes.ndjson"));
        for (const auto& e : s.episodes) ep << loop::episode_to_json(e).dump() << '\n';
        std::ofstream au(dir / (stem + ".audit.ndjson"));
        for (const auto& line : s.audit) au << line << '\n';
        std::ofstream tr(dir / (stem + ".trace.csv"));
        ctrl::write_trace_csv(tr, s.trace);
    }
    std::ofstream(dir / "report.json") << report_to_json(r).dump(2) << '\n';
}

/// Recomputes the per-seed metrics of a run directory from its episode files.
inline nlohmann::json report_from_dir(const fs::path& dir) {
    std::ifstream in(dir / "report.json");
    if (!in) throw ConfigError("no report.json in " + dir.string());
    nlohmann::json stored;
    in >> stored;
    nlohmann::json out = nlohmann::json::array();
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().string().ends_with(".episodes.ndjson")) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        std::ifstream ef(f);
        std::vector<loop::EpisodeRecord> eps;
        std::string line;
        while (std::getline(ef, line))
            if (!line.empty()) eps.push_back(loop::episode_from_json(nlohmann::json::parse(line)));
        nlohmann::json m = metrics_to_json(compute_metrics(eps));
        m["file"] = f.filename().string();
        out.push_back(std::move(m));
    }
    return {{"stored", stored}, {"recomputed", out}};
}

}  // namespace sci::harness
