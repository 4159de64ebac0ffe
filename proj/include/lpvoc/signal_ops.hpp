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

#include "lpvoc/lp_math.hpp"

namespace lpvoc {

// mu-law constants. Values are treated as signed within [-128, 128]; the
// quantizer maps onto the byte range [-128, 127].
inline constexpr double kMuLawMax = 128.0;
inline constexpr double kMuLawMu = 255.0;
inline constexpr int kMuLawClasses = 256;

/// Mono signal of linear samples (nominal range [-1, 1]).
struct Signal {
    std::vector<double> samples;
    int sample_rate_hz = 16000;
};

/// First-order emphasis coefficient, constrained to [0, 1) so the
/// de-emphasis pole stays inside the unit circle.
struct EmphasisCoeff {
    explicit EmphasisCoeff(double a);
    double alpha;
};

inline constexpr double kDefaultEmphasis = 0.85;

/// U(x) = sgn(x) * U_max * log(1 + mu*|x|) / log(1 + mu).
/// Throws std::domain_error if |x| > 1.
double mu_compand(double x);

/// Exact inverse of mu_compand. Throws std::domain_error if |u| > 128.
double mu_expand(double u);

/// dU/dx, even in x, defined at 0 by continuity (U is C^1 there).
double mu_compand_derivative(double x);

/// Nearest integer in [-128, 127]; ties round away from zero; 128 clamps
/// to 127.
int mu_quantize(double u);

/// y_t = x_t - alpha * x_{t-1}. `state` carries the previous input sample
/// across calls so chunked processing matches whole-signal processing
/// bit-exactly; initialize to 0 at utterance start.
Signal pre_emphasis(const Signal& sig, EmphasisCoeff c, double& state);

/// y_t = x_t + alpha * y_{t-1}; inverse of pre_emphasis. `state` carries the
/// previous output sample.
Signal de_emphasis(const Signal& sig, EmphasisCoeff c, double& state);

/// p_t = sum_{i=1..M} a_i * s_{t-i}. `history` is chronological, i.e.
/// history.back() is s_{t-1}. Throws std::invalid_argument on length
/// mismatch.
double lp_predict(std::span<const double> history, const LpcFilter& filt);

/// e_t = s_t - p_t with one filter per frame. Prediction history crosses
/// frame boundaries; the first M samples of the signal use zero-padded
/// history. Signal length must be filters.size() * frame_size.
Signal lp_residual(const Signal& sig, std::span<const LpcFilter> frame_filters,
                   int frame_size);

/// Inverse of lp_residual under identical framing and zero initial history.
Signal lp_synthesize(const Signal& excitation,
                     std::span<const LpcFilter> frame_filters, int frame_size);

}  // namespace lpvoc
