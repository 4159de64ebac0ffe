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

#include <span>
#include <vector>

namespace lpvoc {

/// Direct-form linear predictor of order M. The coefficients follow the
/// prediction convention: p_t = sum_i a[i-1] * s_{t-i}, i = 1..M, so the
/// analysis filter is A(z) = 1 - sum_i a_i z^-i and the synthesis filter
/// is 1/A(z).
struct LpcFilter {
    std::vector<double> a;

    LpcFilter() = default;
    explicit LpcFilter(std::vector<double> coeffs) : a(std::move(coeffs)) {}

    int order() const { return static_cast<int>(a.size()); }
};

/// Lattice (reflection-coefficient) parameterization of an LP filter.
/// The filter is stable iff every |k_i| < 1.
struct ReflectionCoeffs {
    std::vector<double> k;

    ReflectionCoeffs() = default;
    explicit ReflectionCoeffs(std::vector<double> coeffs) : k(std::move(coeffs)) {}

    int order() const { return static_cast<int>(k.size()); }
};

/// Log-area ratios, g_i = log((1 - k_i) / (1 + k_i)). Finite iff |k_i| < 1.
using LarVector = std::vector<double>;

/// Levinson step-up: convert reflection coefficients to direct-form
/// prediction coefficients. For each order i:
///   a_i^(i) = k_i
///   a_j^(i) = a_j^(i-1) - k_i * a_{i-j}^(i-1)   (j < i)
/// This is the classical recursion for the prediction convention above; it
/// maps every k with |k_i| < 1 to a stable filter. Defined for any finite k.
LpcFilter rc_to_lpc(const ReflectionCoeffs& rc);

/// Inverse of rc_to_lpc (step-down recursion). Throws std::domain_error when
/// a downdating step encounters |k_i| >= 0.9999 (near-singular 1 - k^2).
ReflectionCoeffs lpc_to_rc(const LpcFilter& filt);

struct LevinsonResult {
    LpcFilter lpc;
    ReflectionCoeffs rc;
    double residual_energy = 0.0;  // r0 * prod(1 - k_i^2)
};

/// Levinson-Durbin solve of the Toeplitz normal equations from
/// autocorrelation lags r[0..M]. Requires r[0] > 0 (std::domain_error
/// otherwise). Throws std::domain_error if a reflection coefficient reaches
/// magnitude >= 1, which signals a degenerate autocorrelation; see
/// condition_autocorr for the conditioning that prevents this on real data.
LevinsonResult levinson_durbin(std::span<const double> autocorr);

/// In-place conditioning of autocorrelation lags before Levinson-Durbin:
/// r0 is inflated by 1e-4 and lags j >= 1 are tapered by a Gaussian window
/// exp(-0.5 * (2*pi*0.005*j)^2) (lag units of samples at 16 kHz).
void condition_autocorr(std::span<double> r);

LarVector rc_to_lar(const ReflectionCoeffs& rc);       // throws if any |k| >= 1
ReflectionCoeffs lar_to_rc(const LarVector& g);

/// Sum over i of (g_i - g_ref_i)^2 in LAR space. Symmetric, zero iff equal.
double lar_distance(const ReflectionCoeffs& rc, const ReflectionCoeffs& rc_ref);

/// 20*log10 |1/A(e^{jw})| at n_fft/2 + 1 uniformly spaced w in [0, pi].
/// Throws std::domain_error if A vanishes on a sampled point.
std::vector<double> lpc_log_response(const LpcFilter& filt, int n_fft = 512);

/// Root-mean-square over bins of the dB difference of two filter responses.
double log_spectral_distance(const LpcFilter& f1, const LpcFilter& f2,
                             int n_fft = 512);

/// True iff max |k_i| < 1 (boundary excluded).
bool is_stable(const ReflectionCoeffs& rc);

namespace detail {
/// Step-up recursion with the intermediate orders captured for reverse-mode
/// use. `a` receives the final order-M coefficients; `levels`, when
/// non-null, receives a^(1)..a^(M-1) packed as M*(M-1)/2 doubles. The
/// recursion runs in extended precision; rc_to_lpc and the differentiation
/// layer both call this, so their forward values agree bit for bit.
void rc_to_lpc_levels(std::span<const double> k, std::span<double> a, double* levels);
}  // namespace detail

}  // namespace lpvoc
