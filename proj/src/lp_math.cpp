/*
 * Copyright 2026 The lpvoc Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either
 * express or implied.
 * See the License for the specific language governing permissions
 * and limitations under the License.
 */

#include "lpvoc/lp_math.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>

namespace lpvoc {

namespace detail {

void rc_to_lpc_levels(std::span<const double> k, std::span<double> a, double* levels) {
    const int m = static_cast<int>(k.size());
    if (static_cast<int>(a.size()) != m)
        throw std::invalid_argument("rc_to_lpc_levels: output size mismatch");
    // Extended precision keeps the order-16 round trip with lpc_to_rc inside
    // the 1e-9 contract even near |k| = 0.99.
    std::vector<long double> cur(m, 0.0L), prev(m, 0.0L);
    for (int i = 1; i <= m; ++i) {
        const long double ki = k[i - 1];
        for (int j = 1; j < i; ++j) cur[j - 1] = prev[j - 1] - ki * prev[i - j - 1];
        cur[i - 1] = ki;
        if (levels && i < m) {
            double* dst = levels + i * (i - 1) / 2;
            for (int j = 0; j < i; ++j) dst[j] = static_cast<double>(cur[j]);
        }
        for (int j = 0; j < i; ++j) prev[j] = cur[j];
    }
    for (int j = 0; j < m; ++j) a[j] = static_cast<double>(prev[j]);
}

}  // namespace detail

LpcFilter rc_to_lpc(const ReflectionCoeffs& rc) {
    std::vector<double> a(rc.k.size(), 0.0);
    detail::rc_to_lpc_levels(rc.k, a, nullptr);
    return LpcFilter{std::move(a)};
}

ReflectionCoeffs lpc_to_rc(const LpcFilter& filt) {
    const int m = filt.order();
    std::vector<double> k(m, 0.0);
    std::vector<long double> cur(filt.a.begin(), filt.a.end());
    for (int i = m; i >= 1; --i) {
        const long double ki = cur[i - 1];
        if (fabsl(ki) >= 0.9999L)
            throw std::domain_error("lpc_to_rc: unstable filter (|k| >= 0.9999)");
        k[i - 1] = static_cast<double>(ki);
        const long double denom = 1.0L - ki * ki;
        std::vector<long double> prev(i - 1, 0.0L);
        // Invert a_j = prev_j - k*prev_{i-j} jointly for (j, i-j).
        for (int j = 1; j < i; ++j) prev[j - 1] = (cur[j - 1] + ki * cur[i - j - 1]) / denom;
        cur = std::move(prev);
    }
    return ReflectionCoeffs{std::move(k)};
}

LevinsonResult levinson_durbin(std::span<const double> autocorr) {
    if (autocorr.size() < 2)
        throw std::invalid_argument("levinson_durbin: need at least r0, r1");
    const int m = static_cast<int>(autocorr.size()) - 1;
    const double r0 = autocorr[0];
    if (!(r0 > 0.0)) throw std::domain_error("levinson_durbin: r0 must be positive");

    std::vector<double> a(m, 0.0), prev(m, 0.0), k(m, 0.0);
    double err = r0;
    for (int i = 1; i <= m; ++i) {
        double acc = autocorr[i];
        for (int j = 1; j < i; ++j) acc -= prev[j - 1] * autocorr[i - j];
        const double ki = acc / err;
        if (!(std::fabs(ki) < 1.0))
            throw std::domain_error("levinson_durbin: degenerate autocorrelation (|k| >= 1)");
        k[i - 1] = ki;
        for (int j = 1; j < i; ++j) a[j - 1] = prev[j - 1] - ki * prev[i - j - 1];
        a[i - 1] = ki;
        for (int j = 0; j < i; ++j) prev[j] = a[j];
        err *= 1.0 - ki * ki;
    }
    return LevinsonResult{LpcFilter{std::move(a)}, ReflectionCoeffs{std::move(k)}, err};
}

void condition_autocorr(std::span<double> r) {
    if (r.empty()) return;
    r[0] *= 1.0 + 1e-4;
    const double w = 2.0 * std::numbers::pi * 0.005;
    for (size_t j = 1; j < r.size(); ++j) {
        const double x = w * static_cast<double>(j);
        r[j] *= std::exp(-0.5 * x * x);
    }
}

LarVector rc_to_lar(const ReflectionCoeffs& rc) {
    LarVector g(rc.k.size());
    for (size_t i = 0; i < rc.k.size(); ++i) {
        const double ki = rc.k[i];
        if (!(std::fabs(ki) < 1.0)) throw std::domain_error("rc_to_lar: |k| >= 1");
        g[i] = std::log((1.0 - ki) / (1.0 + ki));
    }
    return g;
}

ReflectionCoeffs lar_to_rc(const LarVector& g) {
    std::vector<double> k(g.size());
    for (size_t i = 0; i < g.size(); ++i) {
        const double e = std::exp(g[i]);
        k[i] = (1.0 - e) / (1.0 + e);
    }
    return ReflectionCoeffs{std::move(k)};
}

double lar_distance(const ReflectionCoeffs& rc, const ReflectionCoeffs& rc_ref) {
    if (rc.order() != rc_ref.order())
        throw std::invalid_argument("lar_distance: order mismatch");
    const LarVector g = rc_to_lar(rc), gr = rc_to_lar(rc_ref);
    double d = 0.0;
    for (size_t i = 0; i < g.size(); ++i) {
        const double diff = g[i] - gr[i];
        d += diff * diff;
    }
    return d;
}

std::vector<double> lpc_log_response(const LpcFilter& filt, int n_fft) {
    if (n_fft < 2 * filt.order())
        throw std::invalid_argument("lpc_log_response: n_fft < 2M");
    const int bins = n_fft / 2 + 1;
    std::vector<double> resp(bins);
    for (int b = 0; b < bins; ++b) {
        const double w = 2.0 * std::numbers::pi * b / n_fft;
        std::complex<double> aw(1.0, 0.0);
        for (int i = 1; i <= filt.order(); ++i)
            aw -= filt.a[i - 1] * std::polar(1.0, -w * i);
        const double mag = std::abs(aw);
        if (mag == 0.0)
            throw std::domain_error("lpc_log_response: pole on sampled point");
        resp[b] = -20.0 * std::log10(mag);
    }
    return resp;
}

double log_spectral_distance(const LpcFilter& f1, const LpcFilter& f2, int n_fft) {
    const std::vector<double> r1 = lpc_log_response(f1, n_fft);
    const std::vector<double> r2 = lpc_log_response(f2, n_fft);
    double acc = 0.0;
    for (size_t b = 0; b < r1.size(); ++b) {
        const double d = r1[b] - r2[b];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(r1.size()));
}

bool is_stable(const ReflectionCoeffs& rc) {
    for (double ki : rc.k)
        if (!(std::fabs(ki) < 1.0)) return false;
    return true;
}

}  // namespace lpvoc
