#pragma once

// The decomposition bank: maps a Window to named rhythmic (Welch band
// power), trend (robust LOESS) and cross-channel (magnitude-squared
// coherence) features, plus two frozen principal-direction composites.

#include <charconv>
#include <map>
#include <optional>
#include <string>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "sci/common.hpp"
#include "sci/fft.hpp"
#include "sci/sigsim.hpp"

namespace sci::decomp {

using sigsim::Window;

enum class Kind { rhythm, trend, cross, compact };

inline std::string_view to_string(Kind k) {
    switch (k) {
        case Kind::rhythm: return "rhythm";
        case Kind::trend: return "trend";
        case Kind::cross: return "cross";
        case Kind::compact: return "compact";
    }
    return "rhythm";
}

struct Band {
    double lo = 0.0;
    double hi = 0.0;
    bool operator==(const Band&) const = default;
};

struct FeatureMeta {
    std::optional<Band> band;
    std::optional<double> span;
    std::optional<std::pair<std::size_t, std::size_t>> pair;
    std::optional<std::size_t> channel;
    bool operator==(const FeatureMeta&) const = default;
};

struct Feature {
    std::string name;
    Kind kind = Kind::rhythm;
    Vec value;  // scalar features hold one entry; trend holds {endpoint, slope}
    std::string units;
    std::uint64_t window_seq = 0;
    FeatureMeta meta;
    bool operator==(const Feature&) const = default;
};

using FeatureBank = std::vector<Feature>;

inline std::string format_hz(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general);
    return std::string(buf, res.ptr);
}

inline std::string band_power_name(Band b, std::size_t ch) {
    return "bp_" + format_hz(b.lo) + "_" + format_hz(b.hi) + "_ch" + std::to_string(ch);
}

struct DecompConfig {
    std::vector<Band> bands;
    double trend_span = 0.15;
    std::vector<std::pair<std::size_t, std::size_t>> coherence_pairs;
    std::optional<Band> coherence_band;  // default: [1 Hz, Nyquist / 2]
    std::size_t welch_segments = 8;

    Band broad_band(double sample_rate) const {
        return coherence_band.value_or(Band{1.0, sample_rate / 4.0});
    }
};

inline DecompConfig bearing_decomp() {
    DecompConfig c;
    c.bands = {{10, 50}, {100, 140}, {220, 260}, {340, 380}, {500, 1000}, {1000, 2000}, {2000, 5120}};
    c.coherence_pairs = {{0, 1}};
    return c;
}

inline DecompConfig class_decomp() {
    DecompConfig c;
    c.bands = {{6, 10}, {9, 13}, {12, 16}, {20, 40}};
    c.coherence_pairs = {{0, 1}};
    return c;
}

// ---------------------------------------------------------------------------
// Welch machinery. Segments: 8, 50% overlap, Hann taper, each segment
// zero-padded to the next power of two. PSD is one-sided density, so
// sum(psd) * df equals the mean power of the tapered segments.

class WelchSpectra {
public:
    WelchSpectra(const Window& w, std::size_t n_segments = 8) : fs_(w.sample_rate) {
        const std::size_t n = w.n_samples();
        if (n_segments < 1) throw ConfigError("welch needs at least one segment");
        seg_len_ = std::max<std::size_t>(2, (2 * n) / (n_segments + 1));
        hop_ = std::max<std::size_t>(1, seg_len_ / 2);
        nfft_ = fft::next_pow2(seg_len_);
        n_segments_ = n_segments;
        while (n_segments_ > 1 && (n_segments_ - 1) * hop_ + seg_len_ > n) --n_segments_;
        taper_.resize(seg_len_);
        double s2 = 0.0;
        for (std::size_t i = 0; i < seg_len_; ++i) {
            taper_[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) / static_cast<double>(seg_len_));
            s2 += taper_[i] * taper_[i];
        }
        scale_ = 1.0 / (fs_ * s2);
        spectra_.resize(w.n_channels());
        Vec seg(seg_len_);
        for (std::size_t c = 0; c < w.n_channels(); ++c) {
            spectra_[c].reserve(n_segments_);
            for (std::size_t s = 0; s < n_segments_; ++s) {
                for (std::size_t i = 0; i < seg_len_; ++i) seg[i] = w.channels[c][s * hop_ + i] * taper_[i];
                spectra_[c].push_back(fft::rfft(seg, nfft_));
            }
        }
    }

    std::size_t n_bins() const { return nfft_ / 2 + 1; }
    double df() const { return fs_ / static_cast<double>(nfft_); }
    double freq(std::size_t k) const { return static_cast<double>(k) * df(); }
    double nyquist() const { return fs_ / 2.0; }

    double one_sided_factor(std::size_t k) const { return (k == 0 || k == nfft_ / 2) ? 1.0 : 2.0; }

    Vec psd(std::size_t ch) const {
        Vec p(n_bins(), 0.0);
        for (const auto& s : spectra_[ch])
            for (std::size_t k = 0; k < n_bins(); ++k) p[k] += std::norm(s[k]);
        for (std::size_t k = 0; k < n_bins(); ++k)
            p[k] *= scale_ * one_sided_factor(k) / static_cast<double>(spectra_[ch].size());
        return p;
    }

    std::vector<fft::Complex> csd(std::size_t a, std::size_t b) const {
        std::vector<fft::Complex> out(n_bins(), {0.0, 0.0});
        for (std::size_t s = 0; s < spectra_[a].size(); ++s)
            for (std::size_t k = 0; k < n_bins(); ++k) out[k] += spectra_[a][s][k] * std::conj(spectra_[b][s][k]);
        for (std::size_t k = 0; k < n_bins(); ++k)
            out[k] *= scale_ * one_sided_factor(k) / static_cast<double>(spectra_[a].size());
        return out;
    }

    /// Bin k belongs to [lo, hi) by its centre frequency; the Nyquist bin
    /// belongs to a band whose hi edge is the Nyquist frequency. Adjacent
    /// bands therefore partition the bins exactly.
    bool in_band(std::size_t k, Band b) const {
        const double f = freq(k);
        if (f >= b.lo && f < b.hi) return true;
        return k == n_bins() - 1 && b.hi >= nyquist() && f >= b.lo;
    }

    std::size_t segment_length() const { return seg_len_; }
    std::size_t segments() const { return n_segments_; }
    std::size_t nfft() const { return nfft_; }

private:
    double fs_;
    std::size_t seg_len_ = 0, hop_ = 0, nfft_ = 0, n_segments_ = 0;
    double scale_ = 1.0;
    Vec taper_;
    std::vector<std::vector<std::vector<fft::Complex>>> spectra_;  // [channel][segment][bin]
};

inline void validate_band(Band b, double sample_rate) {
    if (!(b.hi > b.lo) || b.lo < 0.0) throw ConfigError("band must satisfy hi > lo >= 0");
    if (b.hi > sample_rate / 2.0 + 1e-9)
        throw ConfigError("band [" + format_hz(b.lo) + ", " + format_hz(b.hi) + "] exceeds Nyquist");
}

inline double integrate_band(const WelchSpectra& sp, const Vec& psd, Band b) {
    double s = 0.0;
    for (std::size_t k = 0; k < psd.size(); ++k)
        if (sp.in_band(k, b)) s += psd[k];
    return s * sp.df();
}

/// Total Welch power of one channel (integral of the PSD over [0, Nyquist]).
inline double total_power(const Window& w, std::size_t ch, std::size_t segments = 8) {
    WelchSpectra sp(w, segments);
    const Vec p = sp.psd(ch);
    return std::accumulate(p.begin(), p.end(), 0.0) * sp.df();
}

namespace detail {

inline FeatureBank band_power_from(const WelchSpectra& sp, const Window& w, const std::vector<Band>& bands) {
    for (const Band& b : bands) validate_band(b, w.sample_rate);
    FeatureBank out;
    for (std::size_t c = 0; c < w.n_channels(); ++c) {
        const Vec p = sp.psd(c);
        for (const Band& b : bands) {
            Feature f;
            f.name = band_power_name(b, c);
            f.kind = Kind::rhythm;
            f.value = {std::max(0.0, integrate_band(sp, p, b))};
            f.units = "amplitude^2";
            f.window_seq = w.seq;
            f.meta.band = b;
            f.meta.channel = c;
            out.push_back(std::move(f));
        }
    }
    return out;
}

inline FeatureBank coherence_from(const WelchSpectra& sp, const Window& w,
                                  const std::vector<std::pair<std::size_t, std::size_t>>& pairs, Band band,
                                  bool broad) {
    validate_band(band, w.sample_rate);
    if (w.n_channels() < 2) throw ConfigError("coherence needs at least two channels");
    FeatureBank out;
    for (auto [a, b] : pairs) {
        if (a >= w.n_channels() || b >= w.n_channels()) throw ConfigError("coherence pair references a missing channel");
        double value = 1.0;
        if (a == b) {
            spdlog::warn("[decomp] coherence of channel {} with itself defined as 1.0", a);
        } else {
            const Vec pa = sp.psd(a);
            const Vec pb = sp.psd(b);
            const auto pab = sp.csd(a, b);
            double sum = 0.0;
            std::size_t count = 0;
            for (std::size_t k = 0; k < pa.size(); ++k) {
                if (!sp.in_band(k, band)) continue;
                const double denom = pa[k] * pb[k];
                double c = denom > 0.0 ? std::norm(pab[k]) / denom : 0.0;
                sum += std::clamp(c, 0.0, 1.0);
                ++count;
            }
            value = count ? sum / static_cast<double>(count) : 0.0;
        }
        Feature f;
        f.name = "coh_ch" + std::to_string(a) + "_ch" + std::to_string(b) +
                 (broad ? std::string("_broad") : "_" + format_hz(band.lo) + "_" + format_hz(band.hi));
        f.kind = Kind::cross;
        f.value = {value};
        f.units = "1";
        f.window_seq = w.seq;
        f.meta.band = band;
        f.meta.pair = std::make_pair(a, b);
        out.push_back(std::move(f));
    }
    return out;
}

}  // namespace detail

/// One feature per (channel, band): Welch PSD integrated over the band.
inline FeatureBank band_power(const Window& w, const std::vector<Band>& bands, std::size_t segments = 8) {
    WelchSpectra sp(w, segments);
    return detail::band_power_from(sp, w, bands);
}

/// Mean magnitude-squared coherence |Sxy|^2 / (Sxx Syy) over the band, per pair.
inline FeatureBank coherence(const Window& w, const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                             Band band, std::size_t segments = 8) {
    WelchSpectra sp(w, segments);
    return detail::coherence_from(sp, w, pairs, band, false);
}

// ---------------------------------------------------------------------------
// Robust LOESS.

namespace detail {

inline double tricube(double u) {
    u = std::abs(u);
    if (u >= 1.0) return 0.0;
    const double t = 1.0 - u * u * u;
    return t * t * t;
}

inline double bisquare(double u) {
    u = std::abs(u);
    if (u >= 1.0) return 0.0;
    const double t = 1.0 - u * u;
    return t * t;
}

// Weighted least-squares line evaluated at x0.
inline double local_linear(std::span<const double> x, std::span<const double> y, std::span<const double> wts,
                           std::size_t lo, std::size_t hi, double x0) {
    double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t j = lo; j < hi; ++j) {
        const double wj = wts[j];
        if (wj <= 0.0) continue;
        const double dx = x[j] - x0;
        sw += wj;
        sx += wj * dx;
        sy += wj * y[j];
        sxx += wj * dx * dx;
        sxy += wj * dx * y[j];
    }
    if (sw <= 0.0) return 0.0;
    const double denom = sw * sxx - sx * sx;
    if (std::abs(denom) <= 1e-12 * sw * sxx || sxx == 0.0) return sy / sw;
    return (sxx * sy - sx * sxy) / denom;
}

inline Vec robustness_weights(std::span<const double> y, std::span<const double> fit, bool& converged) {
    Vec res(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) res[i] = std::abs(y[i] - fit[i]);
    const double s = math::median(res);
    Vec w(y.size(), 1.0);
    converged = !(s > 0.0);
    if (converged) return w;
    for (std::size_t i = 0; i < y.size(); ++i) w[i] = bisquare(res[i] / (6.0 * s));
    return w;
}

}  // namespace detail

/// Ordinary-least-squares slope of y on x.
inline double ols_slope(std::span<const double> x, std::span<const double> y) {
    const double mx = math::mean(x), my = math::mean(y);
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    return sxx > 0 ? sxy / sxx : 0.0;
}

/// Robust LOESS on sorted x: local linear fits with tricube weights over the
/// span-fraction neighbourhood, then `robust_iters` bisquare reweightings.
/// Local fits are evaluated on a stride of at most 128 anchors and linearly
/// interpolated between them. Series shorter than 3/span points fall back to
/// a global robust linear fit.
inline Vec loess(std::span<const double> x, std::span<const double> y, double span, int robust_iters = 2) {
    if (!(span > 0.0 && span <= 1.0)) throw ConfigError("loess span must lie in (0,1]");
    const std::size_t n = x.size();
    if (n == 0) return {};
    if (n == 1) return {y[0]};
    Vec robust(n, 1.0);
    Vec fit(n, 0.0);
    const bool degenerate = static_cast<double>(n) < 3.0 / span;
    for (int iter = 0; iter <= robust_iters; ++iter) {
        if (degenerate) {
            // global robust line, evaluated at both ends and interpolated
            const double a0 = detail::local_linear(x, y, robust, 0, n, x[0]);
            const double a1 = detail::local_linear(x, y, robust, 0, n, x[n - 1]);
            for (std::size_t i = 0; i < n; ++i) {
                const double t = x[n - 1] > x[0] ? (x[i] - x[0]) / (x[n - 1] - x[0]) : 0.0;
                fit[i] = a0 + t * (a1 - a0);
            }
        } else {
            const std::size_t q = std::min(n, std::max<std::size_t>(3, static_cast<std::size_t>(std::ceil(span * n))));
            const std::size_t stride = std::max<std::size_t>(1, n / 128);
            std::vector<std::size_t> anchors;
            for (std::size_t i = 0; i < n; i += stride) anchors.push_back(i);
            if (anchors.back() != n - 1) anchors.push_back(n - 1);
            Vec wts(n, 0.0);
            std::size_t lo = 0;
            Vec anchor_fit(anchors.size());
            for (std::size_t a = 0; a < anchors.size(); ++a) {
                const std::size_t i = anchors[a];
                while (lo + q < n && x[i] - x[lo] > x[lo + q] - x[i]) ++lo;
                const std::size_t hi = lo + q;
                const double h = std::max(x[i] - x[lo], x[hi - 1] - x[i]) * (1.0 + 1e-9) + 1e-300;
                for (std::size_t j = lo; j < hi; ++j) wts[j] = detail::tricube((x[j] - x[i]) / h) * robust[j];
                anchor_fit[a] = detail::local_linear(x, y, wts, lo, hi, x[i]);
                for (std::size_t j = lo; j < hi; ++j) wts[j] = 0.0;
            }
            for (std::size_t a = 0; a + 1 < anchors.size(); ++a) {
                const std::size_t i0 = anchors[a], i1 = anchors[a + 1];
                for (std::size_t i = i0; i <= i1; ++i) {
                    const double t = (x[i] - x[i0]) / (x[i1] - x[i0]);
                    fit[i] = anchor_fit[a] + t * (anchor_fit[a + 1] - anchor_fit[a]);
                }
            }
            if (anchors.size() == 1) fit[0] = anchor_fit[0];
        }
        if (iter == robust_iters) break;
        bool converged = false;
        robust = detail::robustness_weights(y, fit, converged);
        if (converged) break;
    }
    return fit;
}

/// Trend feature per channel: {fitted endpoint, OLS slope of the fitted
/// trend in amplitude per second}.
inline FeatureBank trend(const Window& w, double span) {
    if (!(span > 0.0 && span <= 1.0)) throw ConfigError("trend span must lie in (0,1]");
    const std::size_t n = w.n_samples();
    Vec t(n);
    for (std::size_t i = 0; i < n; ++i) t[i] = static_cast<double>(i) / w.sample_rate;
    FeatureBank out;
    for (std::size_t c = 0; c < w.n_channels(); ++c) {
        const Vec fit = loess(t, w.channels[c], span);
        Feature f;
        f.name = "trend_ch" + std::to_string(c);
        f.kind = Kind::trend;
        f.value = {fit.empty() ? 0.0 : fit.back(), ols_slope(t, fit)};
        f.units = "amplitude, amplitude/s";
        f.window_seq = w.seq;
        f.meta.span = span;
        f.meta.channel = c;
        out.push_back(std::move(f));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Frozen feature space: input transforms, standardisation and the two
// principal directions (pc1, pc2), fit once on the Init split.

struct FeatureSpace {
    std::vector<std::string> names;    // base feature names in bank order
    std::vector<std::size_t> dims;     // values per base feature
    std::vector<bool> log_transform;   // per base feature
    Vec mean, scale;                   // per base dimension
    std::array<Vec, 2> components;     // principal directions over base dimensions
    std::array<double, 2> pc_scale{1.0, 1.0};

    std::size_t base_dim() const { return mean.size(); }
    std::size_t input_dim() const { return base_dim() + 2; }
    bool empty() const { return names.empty(); }

    static double transform(double v, bool log_t) { return log_t ? std::log(v + 1e-12) : v; }

    Vec standardize_base(const FeatureBank& bank) const {
        Vec z;
        z.reserve(base_dim());
        for (std::size_t f = 0; f < names.size(); ++f) {
            if (f >= bank.size() || bank[f].name != names[f])
                throw ConfigError("feature bank does not match the frozen feature space at '" + names[f] + "'");
            if (bank[f].value.size() != dims[f]) throw ConfigError("feature '" + names[f] + "' changed dimension");
            for (double v : bank[f].value) {
                const std::size_t d = z.size();
                z.push_back((transform(v, log_transform[f]) - mean[d]) / scale[d]);
            }
        }
        return z;
    }

    std::array<double, 2> project(const FeatureBank& bank) const {
        const Vec z = standardize_base(bank);
        return {math::dot(components[0], z), math::dot(components[1], z)};
    }
};

namespace detail {

inline Vec power_iteration(const std::vector<Vec>& cov, const Vec* deflate) {
    const std::size_t d = cov.size();
    Vec v(d);
    for (std::size_t i = 0; i < d; ++i) v[i] = 1.0 + 0.01 * static_cast<double>(i);
    auto orth = [&](Vec& x) {
        if (!deflate) return;
        const double p = math::dot(x, *deflate);
        for (std::size_t i = 0; i < d; ++i) x[i] -= p * (*deflate)[i];
    };
    orth(v);
    for (int it = 0; it < 1000; ++it) {
        Vec nv(d, 0.0);
        for (std::size_t i = 0; i < d; ++i) nv[i] = math::dot(cov[i], v);
        orth(nv);
        const double nn = math::norm2(nv);
        if (nn <= 0.0) break;
        for (auto& x : nv) x /= nn;
        double diff = 0.0;
        for (std::size_t i = 0; i < d; ++i) diff = std::max(diff, std::abs(nv[i] - v[i]));
        v = std::move(nv);
        if (diff < 1e-12) break;
    }
    const double nv = math::norm2(v);
    if (nv > 0)
        for (auto& x : v) x /= nv;
    // sign convention: largest-magnitude entry positive
    const auto it = std::max_element(v.begin(), v.end(), [](double a, double b) { return std::abs(a) < std::abs(b); });
    if (it != v.end() && *it < 0)
        for (auto& x : v) x = -x;
    return v;
}

}  // namespace detail

/// Fits the feature space on base banks (no pc features) from the Init split.
inline FeatureSpace fit_feature_space(const std::vector<FeatureBank>& banks) {
    if (banks.size() < 2) throw ConfigError("feature space needs at least two banks to fit");
    FeatureSpace fs;
    for (const auto& f : banks.front()) {
        fs.names.push_back(f.name);
        fs.dims.push_back(f.value.size());
        fs.log_transform.push_back(f.kind == Kind::rhythm);
    }
    std::vector<Vec> raw;  // [sample][dim]
    for (const auto& bank : banks) {
        Vec row;
        for (std::size_t f = 0; f < fs.names.size(); ++f) {
            if (bank.at(f).name != fs.names[f]) throw ConfigError("inconsistent feature banks in Init split");
            for (double v : bank[f].value) row.push_back(FeatureSpace::transform(v, fs.log_transform[f]));
        }
        raw.push_back(std::move(row));
    }
    const std::size_t d = raw.front().size();
    fs.mean.assign(d, 0.0);
    fs.scale.assign(d, 1.0);
    for (std::size_t j = 0; j < d; ++j) {
        Vec col(raw.size());
        for (std::size_t i = 0; i < raw.size(); ++i) col[i] = raw[i][j];
        fs.mean[j] = math::mean(col);
        const double s = math::stddev(col);
        fs.scale[j] = s > 1e-12 ? s : 1.0;
    }
    std::vector<Vec> z(raw.size(), Vec(d));
    for (std::size_t i = 0; i < raw.size(); ++i)
        for (std::size_t j = 0; j < d; ++j) z[i][j] = (raw[i][j] - fs.mean[j]) / fs.scale[j];
    std::vector<Vec> cov(d, Vec(d, 0.0));
    for (const auto& row : z)
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = 0; b < d; ++b) cov[a][b] += row[a] * row[b];
    for (auto& r : cov)
        for (auto& v : r) v /= static_cast<double>(z.size() - 1);
    fs.components[0] = detail::power_iteration(cov, nullptr);
    fs.components[1] = detail::power_iteration(cov, &fs.components[0]);
    for (int k = 0; k < 2; ++k) {
        Vec scores(z.size());
        for (std::size_t i = 0; i < z.size(); ++i) scores[i] = math::dot(fs.components[static_cast<std::size_t>(k)], z[i]);
        const double s = math::stddev(scores);
        fs.pc_scale[static_cast<std::size_t>(k)] = s > 1e-12 ? s : 1.0;
    }
    return fs;
}

// ---------------------------------------------------------------------------

/// Appends pc1/pc2 of the frozen space to a base bank.
inline void append_composites(FeatureBank& bank, const FeatureSpace& space, std::uint64_t seq) {
    const auto pcs = space.project(bank);
    for (int k = 0; k < 2; ++k) {
        Feature f;
        f.name = k == 0 ? "pc1" : "pc2";
        f.kind = Kind::compact;
        f.value = {pcs[static_cast<std::size_t>(k)]};
        f.units = "a.u.";
        f.window_seq = seq;
        bank.push_back(std::move(f));
    }
}

/// Base bank (rhythm, trend, cross) followed by pc1/pc2 when a frozen space
/// is supplied. Feature count = channels * bands + channels + pairs (+ 2).
inline FeatureBank decompose(const Window& w, const DecompConfig& cfg, const FeatureSpace* space = nullptr) {
    WelchSpectra sp(w, cfg.welch_segments);
    FeatureBank bank = detail::band_power_from(sp, w, cfg.bands);
    FeatureBank tr = trend(w, cfg.trend_span);
    bank.insert(bank.end(), tr.begin(), tr.end());
    if (!cfg.coherence_pairs.empty()) {
        FeatureBank coh = detail::coherence_from(sp, w, cfg.coherence_pairs, cfg.broad_band(w.sample_rate),
                                                 !cfg.coherence_band.has_value());
        bank.insert(bank.end(), coh.begin(), coh.end());
    }
    if (space && !space->empty()) append_composites(bank, *space, w.seq);
    return bank;
}

/// Standardised interpreter input for a full bank (base features + pcs).
inline Vec encode(const FeatureSpace& space, const FeatureBank& bank) {
    Vec x = space.standardize_base(bank);
    const std::size_t nb = space.names.size();
    if (bank.size() != nb + 2) throw ConfigError("bank lacks the pc1/pc2 composites");
    x.push_back(bank[nb].value.at(0) / space.pc_scale[0]);
    x.push_back(bank[nb + 1].value.at(0) / space.pc_scale[1]);
    return x;
}

/// Maps each input dimension back to its feature index in the bank.
inline std::vector<std::size_t> dim_to_feature(const FeatureSpace& space) {
    std::vector<std::size_t> m;
    for (std::size_t f = 0; f < space.dims.size(); ++f)
        for (std::size_t k = 0; k < space.dims[f]; ++k) m.push_back(f);
    m.push_back(space.names.size());
    m.push_back(space.names.size() + 1);
    return m;
}

// ---------------------------------------------------------------------------
// Feature-bank records share the newline-delimited stream format.

inline constexpr int kFeatureFormatVersion = 1;

inline nlohmann::json bank_to_json(const FeatureBank& bank) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& f : bank) {
        nlohmann::json j{{"name", f.name},
                         {"kind", std::string(to_string(f.kind))},
                         {"value", f.value},
                         {"units", f.units},
                         {"window_seq", f.window_seq}};
        if (f.meta.band) j["band"] = {f.meta.band->lo, f.meta.band->hi};
        if (f.meta.span) j["span"] = *f.meta.span;
        if (f.meta.pair) j["pair"] = {f.meta.pair->first, f.meta.pair->second};
        if (f.meta.channel) j["channel"] = *f.meta.channel;
        arr.push_back(std::move(j));
    }
    return {{"format", "sci-features"}, {"version", kFeatureFormatVersion}, {"features", arr}};
}

}  // namespace sci::decomp
