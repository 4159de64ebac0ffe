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

#pragma once

#include <complex>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace lpvoc::detail {

// Iterative radix-2 complex FFT, X_k = sum_n x_n e^{-2*pi*i*k*n/N}.
// N must be a power of two. Analysis sizes here are small (<= 512), so a
// plain textbook implementation is all that is needed.
inline void fft_inplace(std::vector<std::complex<double>>& x) {
    const size_t n = x.size();
    if (n == 0 || (n & (n - 1)) != 0)
        throw std::invalid_argument("fft: size must be a power of two");
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(x[i], x[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
        const std::complex<double> wl = std::polar(1.0, ang);
        for (size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (size_t j = 0; j < len / 2; ++j) {
                const std::complex<double> u = x[i + j];
                const std::complex<double> v = x[i + j + len / 2] * w;
                x[i + j] = u + v;
                x[i + j + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

// Power spectrum |X_k|^2 for k = 0..N/2 of a real sequence zero-padded to
// n_fft points.
inline std::vector<double> real_power_spectrum(const std::vector<double>& x, int n_fft) {
    std::vector<std::complex<double>> buf(static_cast<size_t>(n_fft));
    for (size_t i = 0; i < x.size(); ++i) buf[i] = x[i];
    fft_inplace(buf);
    std::vector<double> p(static_cast<size_t>(n_fft / 2 + 1));
    for (size_t k = 0; k < p.size(); ++k) p[k] = std::norm(buf[k]);
    return p;
}

}  // namespace lpvoc::detail
