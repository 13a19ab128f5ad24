// sci: command-line front end for stream generation, preset runs, reports,
// the fixed-K sweep, the live service and single-step replay.

#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "sci/sci.hpp"

namespace {

using namespace sci;

template <class T>
std::vector<T> parse_list(const std::string& s) {
    std::vector<T> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        out.push_back(static_cast<T>(std::stoull(item)));
    }
    if (out.empty()) throw ConfigError("empty list '" + s + "'");
    return out;
}

void print_summary(const nlohmann::json& rep) {
    const auto& a = rep["aggregate"];
    auto num = [](const nlohmann::json& v) { return v.is_null() ? std::string("n/a") : fmt::format("{:.4f}", v.get<double>()); };
    std::cout << fmt::format("preset {}  seeds {}  errors {}  noise {:.3g}{}\n", rep["preset"].get<std::string>(),
                             rep["seeds"].dump(), rep["total_errors"].get<std::size_t>(),
                             rep["noise_sigma"].get<double>(), rep["partial"].get<bool>() ? "  PARTIAL" : "");
    std::cout << fmt::format("  error rate      {}\n", num(a["error_rate"]["mean"]));
    std::cout << fmt::format("  steps c/w       {} / {}  (ratio {})\n", num(a["steps_correct"]["mean"]),
                             num(a["steps_wrong"]["mean"]), num(a["steps_ratio"]["mean"]));
    std::cout << fmt::format("  AUROC dSP       {}  (excl. abstained {})\n", num(a["auroc_delta_sp"]["mean"]),
                             num(a["auroc_delta_sp_excluding_abstained"]["mean"]));
    std::cout << fmt::format("  mean steps      {}   abstention {}\n", num(a["mean_steps"]["mean"]),
                             num(a["abstention_rate"]["mean"]));
    std::cout << fmt::format("  wall            {:.1f} s\n", rep["wall_seconds"].get<double>());
}

int cmd_gen(const std::string& preset, std::size_t windows, std::uint64_t seed, const std::string& out, bool plain) {
    const Preset p = load_preset(preset);
    std::ofstream os(out);
    if (!os) throw ConfigError("cannot write " + out);
    auto header = sigsim::stream_header(p.name, seed, p.stream);
    header["first_index"] = p.init_windows;
    os << header.dump() << '\n';
    for (std::uint64_t i = p.init_windows; i < p.init_windows + windows; ++i)
        os << sigsim::window_to_json(preset_window(p, seed, i),
                                     plain ? sigsim::SampleEncoding::plain : sigsim::SampleEncoding::base64)
                  .dump()
           << '\n';
    spdlog::info("wrote {} windows to {}", windows, out);
    return 0;
}

int cmd_run(const std::string& preset, const std::string& seeds, const std::string& out) {
    const Preset p = load_preset(preset);
    const auto rep = harness::run_preset(p, seeds.empty() ? p.seeds : parse_list<std::uint64_t>(seeds));
    if (!out.empty()) harness::write_run(rep, out);
    print_summary(harness::report_to_json(rep));
    return rep.partial() ? 2 : 0;
}

int cmd_report(const std::string& dir) {
    const auto j = harness::report_from_dir(dir);
    print_summary(j["stored"]);
    for (const auto& m : j["recomputed"])
        std::cout << fmt::format("  {}: {} episodes, error {:.4f}\n", m["file"].get<std::string>(),
                                 m["episodes"].get<std::size_t>(), m["error_rate"].get<double>());
    return 0;
}

int cmd_sweep(const std::string& preset, const std::string& ks, const std::string& seeds, const std::string& out) {
    Preset p = load_preset(preset);
    p.fixed_k = parse_list<std::size_t>(ks);
    const auto rep = harness::run_preset(p, seeds.empty() ? p.seeds : parse_list<std::uint64_t>(seeds));
    if (!out.empty()) harness::write_run(rep, out);
    std::cout << fmt::format("{:>6} {:>10} {:>8}\n", "K", "accuracy", "cost");
    for (std::size_t j = 0; j < p.fixed_k.size(); ++j) {
        Vec acc;
        for (const auto& m : rep.per_seed) acc.push_back(m.fixed_k.at(j).accuracy);
        std::cout << fmt::format("{:>6} {:>10.4f} {:>8.1f}\n", p.fixed_k[j], math::mean(acc),
                                 static_cast<double>(p.fixed_k[j]));
    }
    Vec acc, steps;
    for (const auto& m : rep.per_seed) {
        acc.push_back(m.accuracy);
        steps.push_back(m.mean_steps);
    }
    std::cout << fmt::format("{:>6} {:>10.4f} {:>8.2f}\n", "SCI", math::mean(acc), math::mean(steps));
    return rep.partial() ? 2 : 0;
}

int cmd_replay(const std::string& preset, std::uint64_t seed, const std::string& stream, const std::string& audit) {
    const Preset p = load_preset(preset);
    std::ifstream in(stream);
    if (!in) throw StreamError("cannot open " + stream);
    const auto rs = sigsim::read_stream(in);
    loop::Session s(p, seed, loop::bootstrap(p, seed), loop::session_id(p, seed));
    std::ofstream out(audit);
    for (const auto& w : rs.windows) out << s.cycle(w).audit.dump() << '\n';
    spdlog::info("replayed {} windows into {}", rs.windows.size(), audit);
    return 0;
}

int cmd_serve(const std::string& listen, const std::string& audit_dir) {
    service::Server server(service::parse_endpoint(listen), audit_dir);
    std::cout << "listening on " << server.endpoint() << std::endl;
    server.run();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"closed-loop interpretability controller: streams, runs, reports and the live service"};
    app.require_subcommand(1);
    bool verbose = false, quiet = false;
    std::string preset_dir;
    app.add_flag("-v,--verbose", verbose, "debug logging");
    app.add_flag("-q,--quiet", quiet, "warnings and errors only");
    app.add_option("--preset-dir", preset_dir, "directory holding preset JSON files");

    std::string preset = "bearing", out, seeds, ks = "1,2,4,8,16", stream, audit, listen = "127.0.0.1:7070",
                audit_dir = "audit";
    std::size_t windows = 200;
    std::uint64_t seed = 42;
    bool plain = false;

    auto* gen = app.add_subcommand("gen", "write a recorded evaluation stream");
    gen->add_option("--preset", preset)->required();
    gen->add_option("--windows", windows, "number of evaluation windows");
    gen->add_option("--seed", seed);
    gen->add_option("--out", out)->required();
    gen->add_flag("--plain", plain, "plain sample arrays instead of base64");

    auto* run = app.add_subcommand("run", "run a preset over its seeds");
    run->add_option("--preset", preset)->required();
    run->add_option("--seeds", seeds, "comma-separated seeds (default: preset seeds)");
    run->add_option("--out", out, "output directory for report, episodes, audit and traces");

    auto* report = app.add_subcommand("report", "summarize a run directory");
    std::string dir;
    report->add_option("dir", dir)->required();

    auto* sweep = app.add_subcommand("sweep", "fixed-K ensemble sweep paired with the adaptive run");
    sweep->add_option("--preset", preset)->default_val("synthetic-class");
    sweep->add_option("--k", ks, "comma-separated K values");
    sweep->add_option("--seeds", seeds);
    sweep->add_option("--out", out);

    auto* serve = app.add_subcommand("serve", "run the session service");
    serve->add_option("--listen", listen, "host:port");
    serve->add_option("--audit-dir", audit_dir);

    auto* replay = app.add_subcommand("replay", "single-step a recorded stream through a fresh session");
    replay->add_option("--preset", preset)->required();
    replay->add_option("--seed", seed);
    replay->add_option("--stream", stream)->required();
    replay->add_option("--audit", audit)->required();

    CLI11_PARSE(app, argc, argv);
    spdlog::set_level(verbose ? spdlog::level::debug : quiet ? spdlog::level::warn : spdlog::level::info);
    if (!preset_dir.empty()) setenv("SCI_PRESET_DIR", preset_dir.c_str(), 1);

    try {
        if (*gen) return cmd_gen(preset, windows, seed, out, plain);
        if (*run) return cmd_run(preset, seeds, out);
        if (*report) return cmd_report(dir);
        if (*sweep) return cmd_sweep(preset, ks, seeds, out);
        if (*serve) return cmd_serve(listen, audit_dir);
        if (*replay) return cmd_replay(preset, seed, stream, audit);
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
    return 0;
}
