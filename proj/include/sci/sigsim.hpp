#pragma once

// Synthetic evaluation streams and the ingestion layer.
//
// Every generator is a pure function of (config, seed, window index): the
// same triple always yields a bit-identical window, regardless of call order
// or thread.

#include <cstring>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <utility>

#include <json.hpp>

#include "sci/base64.hpp"
#include "sci/common.hpp"

namespace sci::sigsim {

enum class Health { ok, degraded, failed };

inline std::string_view to_string(Health h) {
    switch (h) {
        case Health::ok: return "ok";
        case Health::degraded: return "degraded";
        case Health::failed: return "failed";
    }
    return "ok";
}

inline Health health_from_string(std::string_view s) {
    if (s == "ok") return Health::ok;
    if (s == "degraded") return Health::degraded;
    if (s == "failed") return Health::failed;
    throw StreamError("unknown health flag '" + std::string(s) + "'");
}

/// A flagged run of missing samples in one channel: [start, start + length).
struct Gap {
    std::size_t start = 0;
    std::size_t length = 0;
    bool operator==(const Gap&) const = default;
};

struct Window {
    std::uint64_t seq = 0;
    double t_start = 0.0;
    double sample_rate = 0.0;
    std::vector<Vec> channels;
    std::vector<Health> health;
    std::vector<std::vector<Gap>> gaps;  // per channel; empty when nothing is flagged
    int label = -1;                      // ground truth, consumed by the harness only

    std::size_t n_channels() const { return channels.size(); }
    std::size_t n_samples() const { return channels.empty() ? 0 : channels.front().size(); }
    bool operator==(const Window&) const = default;
};

enum class Domain { bearing, synthetic_class, ood_exam };

inline std::string_view to_string(Domain d) {
    switch (d) {
        case Domain::bearing: return "bearing";
        case Domain::synthetic_class: return "synthetic-class";
        case Domain::ood_exam: return "ood-exam";
    }
    return "bearing";
}

inline Domain domain_from_string(std::string_view s) {
    if (s == "bearing") return Domain::bearing;
    if (s == "synthetic-class") return Domain::synthetic_class;
    if (s == "ood-exam") return Domain::ood_exam;
    throw ConfigError("unknown preset domain '" + std::string(s) + "'");
}

struct StreamConfig {
    Domain domain = Domain::bearing;
    double sample_rate = 10240.0;
    std::size_t window_len = 2048;
    std::size_t n_channels = 2;
    double hop_fraction = 0.5;  // 50% overlap between consecutive windows
    double shaft_hz = 30.0;
    double fault_hz = 120.0;
    double shaft_amp = 1.0;
    double noise_sigma = 1.0;
    double fault_prob = 0.5;  // probability of the positive class
    // synthetic-class tones: class 0, class 1, and the shared tone that
    // replaces them as difficulty -> 1
    double class0_hz = 8.0;
    double class1_hz = 14.0;
    double shared_hz = 11.0;
    std::uint64_t seed = 42;

    void validate() const {
        if (!(shaft_hz > 0.0) || !(fault_hz > 0.0)) throw ConfigError("shaft_hz and fault_hz must be > 0");
        if (!(fault_prob >= 0.0 && fault_prob <= 1.0)) throw ConfigError("fault_prob must lie in [0,1]");
        if (window_len < 64) throw ConfigError("window_len must be >= 64");
        if (!(sample_rate > 0.0)) throw ConfigError("sample_rate must be > 0");
        if (n_channels == 0) throw ConfigError("n_channels must be >= 1");
        if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be >= 0");
        if (!(hop_fraction > 0.0 && hop_fraction <= 1.0)) throw ConfigError("hop_fraction must lie in (0,1]");
    }

    double hop_seconds() const {
        return std::floor(static_cast<double>(window_len) * hop_fraction) / sample_rate;
    }
};

/// Bearing preset: 2 accelerometers, 2048 samples at 10.24 kHz.
inline StreamConfig bearing_config(std::uint64_t seed = 42, double noise_sigma = 6.0) {
    StreamConfig c;
    c.domain = Domain::bearing;
    c.seed = seed;
    c.noise_sigma = noise_sigma;
    return c;
}

/// Ambiguity-graded two-class stream: 2 channels, 256 samples at 100 Hz.
inline StreamConfig class_config(std::uint64_t seed = 42, double noise_sigma = 1.0) {
    StreamConfig c;
    c.domain = Domain::synthetic_class;
    c.sample_rate = 100.0;
    c.window_len = 256;
    c.noise_sigma = noise_sigma;
    c.seed = seed;
    return c;
}

namespace detail {

inline Window blank_window(const StreamConfig& cfg, std::uint64_t index) {
    Window w;
    w.seq = index;
    w.sample_rate = cfg.sample_rate;
    w.t_start = static_cast<double>(index) * cfg.hop_seconds();
    w.channels.assign(cfg.n_channels, Vec(cfg.window_len, 0.0));
    w.health.assign(cfg.n_channels, Health::ok);
    w.gaps.assign(cfg.n_channels, {});
    return w;
}

// Per-channel gain of the shared vibration source.
inline double channel_gain(std::size_t c) { return c == 0 ? 1.0 : 0.8; }

}  // namespace detail

/// Label for window `index` of a stream (Bernoulli(fault_prob), pure in (seed, index)).
inline int draw_label(const StreamConfig& cfg, std::uint64_t index) {
    Rng rng(mix_seed(cfg.seed, index, 0x1abe1));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    return u(rng) < cfg.fault_prob ? 1 : 0;
}

/// Healthy windows: 30 Hz shaft sinusoid plus Gaussian noise. Fault windows
/// add a 120 Hz train of decaying-exponential impulses, tau = 1/(8 fault_hz),
/// peak amplitude 3x the shaft amplitude.
inline Window generate_bearing(const StreamConfig& cfg, int label, std::uint64_t index = 0) {
    cfg.validate();
    if (cfg.domain != Domain::bearing && cfg.domain != Domain::ood_exam)
        throw ConfigError("generate_bearing requires the bearing preset");
    if (label != 0 && label != 1) throw ConfigError("bearing label must be 0 (healthy) or 1 (fault)");

    Window w = detail::blank_window(cfg, index);
    w.label = label;
    Rng rng(mix_seed(cfg.seed, index, 0xbea1));
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, 1.0);

    const double fs = cfg.sample_rate;
    const double shaft_phase = 2.0 * kPi * u01(rng);
    const double period = 1.0 / cfg.fault_hz;
    const double tau = 1.0 / (8.0 * cfg.fault_hz);
    const double impulse_amp = 3.0 * cfg.shaft_amp;
    const double impulse_offset = period * u01(rng);

    Vec source(cfg.window_len);
    for (std::size_t i = 0; i < cfg.window_len; ++i) {
        const double t = static_cast<double>(i) / fs;
        double v = cfg.shaft_amp * std::sin(2.0 * kPi * cfg.shaft_hz * t + shaft_phase);
        if (label == 1) {
            // time since the most recent impulse, plus the tail of the one before
            double since = std::fmod(t - impulse_offset, period);
            if (since < 0.0) since += period;
            v += impulse_amp * std::exp(-since / tau);
            v += impulse_amp * std::exp(-(since + period) / tau);
        }
        source[i] = v;
    }
    for (std::size_t c = 0; c < cfg.n_channels; ++c) {
        const double g = detail::channel_gain(c);
        for (std::size_t i = 0; i < cfg.window_len; ++i)
            w.channels[c][i] = g * source[i] + cfg.noise_sigma * noise(rng);
    }
    return w;
}

/// Convenience: bearing window whose label is drawn from fault_prob.
inline Window bearing_window(const StreamConfig& cfg, std::uint64_t index) {
    return generate_bearing(cfg, draw_label(cfg, index), index);
}

/// Two-class stream with graded ambiguity. Each channel carries
/// (1 - d) * class tone + d * shared tone + noise, so the class-conditional
/// distributions coincide at d = 1.
inline Window generate_class_stream(const StreamConfig& cfg, double difficulty, std::uint64_t index = 0) {
    cfg.validate();
    if (!(difficulty >= 0.0 && difficulty <= 1.0)) throw ConfigError("difficulty must lie in [0,1]");
    Window w = detail::blank_window(cfg, index);
    const int label = draw_label(cfg, index);
    w.label = label;
    Rng rng(mix_seed(cfg.seed, index, 0xc1a55));
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, 1.0);
    const double f_class = label == 0 ? cfg.class0_hz : cfg.class1_hz;
    for (std::size_t c = 0; c < cfg.n_channels; ++c) {
        const double ph_class = 2.0 * kPi * u01(rng);
        const double ph_shared = 2.0 * kPi * u01(rng);
        for (std::size_t i = 0; i < cfg.window_len; ++i) {
            const double t = static_cast<double>(i) / cfg.sample_rate;
            w.channels[c][i] = (1.0 - difficulty) * cfg.shaft_amp * std::sin(2.0 * kPi * f_class * t + ph_class) +
                               difficulty * cfg.shaft_amp * std::sin(2.0 * kPi * cfg.shared_hz * t + ph_shared) +
                               cfg.noise_sigma * noise(rng);
        }
    }
    return w;
}

/// Adds Gaussian noise so that per-channel signal-to-noise equals snr_db.
/// A silent channel uses unit reference power, so the result is pure noise
/// with variance 10^(-snr_db/10).
inline Window obliterate(const Window& w, double snr_db, std::uint64_t seed) {
    Window out = w;
    Rng rng(mix_seed(seed, w.seq, 0x0b11));
    std::normal_distribution<double> noise(0.0, 1.0);
    for (auto& ch : out.channels) {
        double power = 0.0;
        for (double v : ch) power += v * v;
        power = ch.empty() ? 0.0 : power / static_cast<double>(ch.size());
        if (power <= 0.0) power = 1.0;
        const double sigma = std::sqrt(power / std::pow(10.0, snr_db / 10.0));
        for (double& v : ch) v += sigma * noise(rng);
    }
    return out;
}

/// Fraction of flagged samples above which a channel is no longer imputed.
inline constexpr double kImputeCutoff = 0.05;

/// Imputation half of ingestion. Flagged gaps covering at most 5% of a
/// channel are filled by linear interpolation; longer ones are held at the
/// last valid sample (zero-order hold) and the channel is marked degraded.
/// Unflagged samples are never modified. Idempotent.
inline Window repair(Window w) {
    for (std::size_t c = 0; c < w.n_channels(); ++c) {
        if (c >= w.gaps.size() || w.gaps[c].empty()) continue;
        auto& ch = w.channels[c];
        const std::size_t n = ch.size();
        std::vector<bool> missing(n, false);
        std::size_t flagged = 0;
        for (const Gap& g : w.gaps[c])
            for (std::size_t i = g.start; i < std::min(n, g.start + g.length); ++i)
                if (!missing[i]) {
                    missing[i] = true;
                    ++flagged;
                }
        if (flagged == n) {
            w.health[c] = Health::failed;
            std::fill(ch.begin(), ch.end(), 0.0);
            w.gaps[c].clear();
            continue;
        }
        const bool interpolate = static_cast<double>(flagged) <= kImputeCutoff * static_cast<double>(n);
        std::size_t i = 0;
        while (i < n) {
            if (!missing[i]) {
                ++i;
                continue;
            }
            std::size_t j = i;
            while (j < n && missing[j]) ++j;
            // [i, j) is a missing run
            const bool has_left = i > 0;
            const bool has_right = j < n;
            for (std::size_t k = i; k < j; ++k) {
                if (interpolate && has_left && has_right) {
                    const double frac = static_cast<double>(k - (i - 1)) / static_cast<double>(j - (i - 1));
                    ch[k] = ch[i - 1] + frac * (ch[j] - ch[i - 1]);
                } else {
                    ch[k] = has_left ? ch[i - 1] : ch[j];
                }
            }
            i = j;
        }
        if (!interpolate && w.health[c] == Health::ok) w.health[c] = Health::degraded;
        w.gaps[c].clear();
    }
    return w;
}

/// Stateful ingestion: validates the sequence contract (strictly increasing
/// seq, monotone t_start, shared sampling metadata) and repairs the window.
class Ingestor {
public:
    Window ingest(Window w) {
        if (w.channels.empty()) throw StreamError("window has no channels");
        const std::size_t n = w.n_samples();
        for (const auto& ch : w.channels)
            if (ch.size() != n) throw StreamError("channels disagree on sample count");
        if (!(w.sample_rate > 0.0)) throw StreamError("window sample_rate must be > 0");
        if (w.health.size() != w.n_channels()) w.health.resize(w.n_channels(), Health::ok);
        if (w.gaps.size() != w.n_channels()) w.gaps.resize(w.n_channels());
        if (last_seq_ && w.seq <= *last_seq_)
            throw StreamError("non-monotone window seq " + std::to_string(w.seq) + " after " +
                              std::to_string(*last_seq_));
        if (last_t_ && w.t_start < *last_t_) throw StreamError("non-monotone window timestamp");
        w = repair(std::move(w));
        if (std::all_of(w.health.begin(), w.health.end(), [](Health h) { return h == Health::failed; }))
            throw StreamError("window " + std::to_string(w.seq) + " rejected: all channels failed");
        last_seq_ = w.seq;
        last_t_ = w.t_start;
        return w;
    }

private:
    std::optional<std::uint64_t> last_seq_;
    std::optional<double> last_t_;
};

// ---------------------------------------------------------------------------
// Stream-to-disk format (newline-delimited JSON, see docs/formats.md).

inline constexpr int kStreamFormatVersion = 1;

enum class SampleEncoding { base64, plain };

inline nlohmann::json stream_header(std::string_view preset, std::uint64_t seed, const StreamConfig& cfg) {
    return {{"format", "sci-stream"},
            {"version", kStreamFormatVersion},
            {"preset", std::string(preset)},
            {"seed", seed},
            {"sample_rate", cfg.sample_rate},
            {"window_len", cfg.window_len},
            {"n_channels", cfg.n_channels}};
}

inline nlohmann::json window_to_json(const Window& w, SampleEncoding enc = SampleEncoding::base64) {
    nlohmann::json j;
    j["seq"] = w.seq;
    j["t_start"] = w.t_start;
    j["sample_rate"] = w.sample_rate;
    j["label"] = w.label;
    std::vector<std::string> health;
    for (Health h : w.health) health.emplace_back(to_string(h));
    j["health"] = health;
    if (enc == SampleEncoding::base64) {
        j["encoding"] = "f64le-base64";
        std::vector<std::string> chans;
        for (const auto& ch : w.channels) chans.push_back(base64::encode(ch.data(), ch.size() * sizeof(double)));
        j["samples"] = chans;
    } else {
        j["encoding"] = "plain";
        j["samples"] = w.channels;
    }
    nlohmann::json gaps = nlohmann::json::array();
    bool any = false;
    for (const auto& cg : w.gaps) {
        nlohmann::json arr = nlohmann::json::array();
        for (const Gap& g : cg) {
            arr.push_back({g.start, g.length});
            any = true;
        }
        gaps.push_back(arr);
    }
    if (any) j["gaps"] = gaps;
    return j;
}

inline Window window_from_json(const nlohmann::json& j) {
    Window w;
    w.seq = j.at("seq").get<std::uint64_t>();
    w.t_start = j.at("t_start").get<double>();
    w.sample_rate = j.at("sample_rate").get<double>();
    w.label = j.value("label", -1);
    for (const auto& h : j.at("health")) w.health.push_back(health_from_string(h.get<std::string>()));
    const std::string enc = j.value("encoding", "plain");
    if (enc == "f64le-base64") {
        for (const auto& s : j.at("samples")) {
            const auto bytes = base64::decode(s.get<std::string>());
            if (bytes.size() % sizeof(double) != 0) throw StreamError("sample payload not a multiple of 8 bytes");
            Vec ch(bytes.size() / sizeof(double));
            std::memcpy(ch.data(), bytes.data(), bytes.size());
            w.channels.push_back(std::move(ch));
        }
    } else if (enc == "plain") {
        w.channels = j.at("samples").get<std::vector<Vec>>();
    } else {
        throw StreamError("unknown sample encoding '" + enc + "'");
    }
    w.gaps.assign(w.channels.size(), {});
    if (j.contains("gaps")) {
        const auto& gj = j.at("gaps");
        for (std::size_t c = 0; c < gj.size() && c < w.gaps.size(); ++c)
            for (const auto& g : gj[c]) w.gaps[c].push_back({g.at(0).get<std::size_t>(), g.at(1).get<std::size_t>()});
    }
    return w;
}

struct RecordedStream {
    nlohmann::json header;
    std::vector<Window> windows;
};

inline void write_stream(std::ostream& os, const nlohmann::json& header, const std::vector<Window>& windows,
                         SampleEncoding enc = SampleEncoding::base64) {
    os << header.dump() << '\n';
    for (const auto& w : windows) os << window_to_json(w, enc).dump() << '\n';
}

inline RecordedStream read_stream(std::istream& is) {
    RecordedStream rs;
    std::string line;
    if (!std::getline(is, line)) throw StreamError("empty stream file");
    rs.header = nlohmann::json::parse(line);
    if (rs.header.value("format", "") != "sci-stream") throw StreamError("not an sci-stream file");
    if (rs.header.value("version", 0) != kStreamFormatVersion) throw StreamError("unsupported stream version");
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        rs.windows.push_back(window_from_json(nlohmann::json::parse(line)));
    }
    return rs;
}

}  // namespace sci::sigsim
