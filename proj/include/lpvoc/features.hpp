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

#include <array>
#include <string>
#include <vector>

#include "lpvoc/lp_math.hpp"
#include "lpvoc/signal_ops.hpp"

namespace lpvoc {

inline constexpr int kNumBands = 18;

/// Band anchor frequencies in Hz, spaced approximately on a Bark scale over
/// 0..8 kHz. Band b is a triangle spanning [anchor_{b-1}, anchor_{b+1}] and
/// stores the triangle-weighted average power between the neighboring
/// anchors. This table is frozen; analysis output depends on it bit for bit.
const std::array<double, kNumBands>& band_anchors_hz();

struct AnalysisConfig {
    int frame_size = 160;    // 10 ms at 16 kHz
    int window_size = 320;   // 20 ms
    int n_bands = kNumBands;
    int fft_size = 512;
    int lpc_order = 16;
    double pre_emphasis = kDefaultEmphasis;
    int sample_rate_hz = 16000;

    void validate() const;  // throws std::invalid_argument
};

struct FeatureFrame {
    std::vector<double> cepstrum;  // n_bands DCT-II coefficients of log band energies
    int frame_index = 0;
    bool active = false;
};

/// Mean log band energy of a frame, recovered from c0. Used by the activity
/// gate; a 10 dB power difference corresponds to ln(10) in these units.
double frame_mean_log_energy(const FeatureFrame& frame);

/// Sets `active` on every frame: a frame is active when its mean log band
/// energy is above the median over all frames minus ln(10) (10 dB) and above
/// an absolute silence floor. Deterministic; callable after reading features
/// from file (the flag is not stored).
void apply_activity_gate(std::vector<FeatureFrame>& frames);

/// Frame analysis of a (pre-emphasized) 16 kHz signal: per 10-ms hop, a
/// periodic-Hann-windowed power spectrum is reduced to n_bands triangular
/// band energies, floored, logged, and DCT-II transformed. Frame count is
/// floor((len - window_size)/frame_size) + 1; shorter signals yield no
/// frames.
std::vector<FeatureFrame> analyze(const Signal& sig, const AnalysisConfig& cfg);

/// The reverse path from features to autocorrelation: inverse DCT to log
/// band energies, exponentiation, piecewise-linear interpolation of band
/// energies onto FFT bins, then cosine-transform to lags r[0..M], followed
/// by condition_autocorr.
std::vector<double> cepstrum_to_autocorr(const FeatureFrame& frame,
                                         const AnalysisConfig& cfg);

struct GroundTruthLpc {
    LpcFilter lpc;
    ReflectionCoeffs rc;
};

/// cepstrum_to_autocorr followed by levinson_durbin. The conditioning keeps
/// the returned reflection coefficients strictly inside (-1, 1).
GroundTruthLpc ground_truth_lpc(const FeatureFrame& frame, const AnalysisConfig& cfg);

/// Feature file: one JSON header line {"version", "n_bands", "frame_size",
/// "sample_rate"} followed by raw frames of n_bands little-endian 32-bit
/// floats. Writing is atomic; reading re-applies the activity gate.
void write_feature_file(const std::string& path, const std::vector<FeatureFrame>& frames,
                        const AnalysisConfig& cfg);
std::vector<FeatureFrame> read_feature_file(const std::string& path);

}  // namespace lpvoc
