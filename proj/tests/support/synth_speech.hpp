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

// Deterministic speech-like test signals: strings of voiced (impulse-train
// excited) and unvoiced (noise excited) phones shaped by random all-pole
// resonators, with amplitude ramps and occasional silences. Good enough for
// the source-filter pipeline to have real LP structure to recover.

#pragma once

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "lpvoc/features.hpp"
#include "lpvoc/lp_math.hpp"
#include "lpvoc/signal_ops.hpp"

namespace synthspeech {

inline constexpr int kRate = 16000;

namespace detail {

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

// Prediction coefficients of a cascade of two-pole resonators.
inline std::vector<double> resonator_lpc(std::mt19937_64& rng, int n_res, double f_lo,
                                         double f_hi, double r_lo, double r_hi) {
    std::vector<double> poly = {1.0};
    for (int i = 0; i < n_res; ++i) {
        const double f = uniform(rng, f_lo, f_hi);
        const double r = uniform(rng, r_lo, r_hi);
        const double w = 2.0 * std::numbers::pi * f / kRate;
        const std::vector<double> sec = {1.0, -2.0 * r * std::cos(w), r * r};
        std::vector<double> next(poly.size() + 2, 0.0);
        for (size_t a = 0; a < poly.size(); ++a)
            for (size_t b = 0; b < 3; ++b) next[a + b] += poly[a] * sec[b];
        poly = std::move(next);
    }
    std::vector<double> a(poly.size() - 1);
    for (size_t i = 1; i < poly.size(); ++i) a[i - 1] = -poly[i];
    return a;
}

}  // namespace detail

inline lpvoc::Signal utterance(uint64_t seed, double seconds) {
    std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ull + 0x5eedull);
    const int total = static_cast<int>(seconds * kRate);
    lpvoc::Signal sig;
    sig.sample_rate_hz = kRate;
    sig.samples.reserve(total);

    std::vector<double> state(12, 0.0);
    while (static_cast<int>(sig.samples.size()) < total) {
        const int len = static_cast<int>(detail::uniform(rng, 0.080, 0.240) * kRate);
        const double kind = detail::uniform(rng, 0.0, 1.0);
        std::vector<double> a;
        double amp = 0.0;
        bool voiced = false;
        double f0 = 0.0;
        if (kind < 0.10) {
            a = {};  // pause
        } else if (kind < 0.70) {
            voiced = true;
            f0 = detail::uniform(rng, 80.0, 260.0);
            a = detail::resonator_lpc(rng, 4, 150.0, 3600.0, 0.90, 0.975);
            amp = detail::uniform(rng, 0.25, 0.6);
        } else {
            a = detail::resonator_lpc(rng, 2, 1500.0, 6500.0, 0.75, 0.92);
            amp = detail::uniform(rng, 0.04, 0.12);
        }
        const int ramp = std::min(len / 4, 320);
        double phase = detail::uniform(rng, 0.0, 1.0);
        std::fill(state.begin(), state.end(), 0.0);
        for (int n = 0; n < len && static_cast<int>(sig.samples.size()) < total; ++n) {
            double exc = 0.0;
            if (!a.empty()) {
                if (voiced) {
                    phase += f0 / kRate;
                    if (phase >= 1.0) {
                        phase -= 1.0;
                        exc = 1.0;
                    }
                    exc += 0.03 * detail::uniform(rng, -1.0, 1.0);
                } else {
                    exc = detail::uniform(rng, -1.0, 1.0);
                }
            }
            double env = 1.0;
            if (n < ramp) env = static_cast<double>(n) / ramp;
            if (len - n < ramp) env = std::min(env, static_cast<double>(len - n) / ramp);
            double s = exc * amp * env;
            for (size_t i = 0; i < a.size(); ++i) s += a[i] * state[i];
            for (size_t i = state.size() - 1; i > 0; --i) state[i] = state[i - 1];
            state[0] = s;
            sig.samples.push_back(s);
        }
    }

    // Normalize so the pre-emphasized version stays safely inside [-1, 1].
    double peak = 1e-9;
    for (double s : sig.samples) peak = std::max(peak, std::fabs(s));
    const double gain = 0.5 / peak;
    for (double& s : sig.samples) s *= gain;
    return sig;
}

// Pre-emphasized corpus of n utterances plus their feature frames.
struct Corpus {
    std::vector<lpvoc::Signal> signals;  // pre-emphasized
    std::vector<std::vector<lpvoc::FeatureFrame>> features;
};

inline Corpus make_corpus(uint64_t seed, int n_utterances, double seconds_each,
                          const lpvoc::AnalysisConfig& cfg = {}) {
    Corpus corpus;
    for (int i = 0; i < n_utterances; ++i) {
        lpvoc::Signal raw = utterance(seed + static_cast<uint64_t>(i), seconds_each);
        double state = 0.0;
        lpvoc::Signal pre =
            lpvoc::pre_emphasis(raw, lpvoc::EmphasisCoeff(cfg.pre_emphasis), state);
        corpus.features.push_back(lpvoc::analyze(pre, cfg));
        corpus.signals.push_back(std::move(pre));
    }
    return corpus;
}

}  // namespace synthspeech
