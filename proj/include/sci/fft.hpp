#pragma once

#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <vector>

#include <fftw3.h>

#include "sci/common.hpp"

namespace sci::fft {

using Complex = std::complex<double>;

inline std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

namespace detail {

// FFTW planning is not thread-safe; plans are cached per size and executed
// with the new-array interface.
struct PlanCache {
    std::mutex mu;
    std::map<std::size_t, fftw_plan> plans;
    ~PlanCache() {
        for (auto& [n, p] : plans) fftw_destroy_plan(p);
    }
    fftw_plan get(std::size_t n) {
        std::lock_guard lock(mu);
        auto it = plans.find(n);
        if (it != plans.end()) return it->second;
        double* in = fftw_alloc_real(n);
        fftw_complex* out = fftw_alloc_complex(n / 2 + 1);
        fftw_plan p = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE | FFTW_UNALIGNED);
        fftw_free(in);
        fftw_free(out);
        plans.emplace(n, p);
        return p;
    }
};

inline PlanCache& plan_cache() {
    static PlanCache cache;
    return cache;
}

}  // namespace detail

/// Real input zero-padded to nfft; returns the nfft/2 + 1 one-sided bins.
inline std::vector<Complex> rfft(std::span<const double> x, std::size_t nfft) {
    if (nfft < 2) throw ConfigError("fft size must be at least 2");
    std::vector<double> in(nfft, 0.0);
    std::copy_n(x.begin(), std::min(x.size(), nfft), in.begin());
    std::vector<Complex> out(nfft / 2 + 1);
    fftw_execute_dft_r2c(detail::plan_cache().get(nfft), in.data(), reinterpret_cast<fftw_complex*>(out.data()));
    return out;
}

}  // namespace sci::fft
