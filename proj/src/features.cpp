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

#include "lpvoc/features.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "fft.hpp"

namespace lpvoc {

const std::array<double, kNumBands>& band_anchors_hz() {
    static const std::array<double, kNumBands> anchors = {
        0,    200,  400,  600,  800,  1000, 1200, 1400, 1600,
        2000, 2400, 2800, 3200, 4000, 4800, 5600, 6800, 8000};
    return anchors;
}

namespace {

constexpr double kBandEnergyFloor = 1e-10;
// Absolute silence threshold of the activity gate in mean-log-band-energy
// units. Digital silence sits at log(kBandEnergyFloor) and must stay below.
const double kSilenceFloor = std::log(1e-9);
// Relative gate: ln(10) down from the median is a 10 dB power drop.
const double kGateDropFromMedian = std::log(10.0);

// Triangle weights of each band at each FFT bin. The triangles form a
// partition of unity between consecutive anchors, and weights of one band
// are normalized to sum to 1 so a band stores the weighted average power
// around its anchor. Reconstruction is then piecewise linear in frequency.
struct BandLayout {
    int bins;
    std::vector<double> weight;  // [band * bins + bin]
    std::vector<double> norm;    // per band

    BandLayout(int n_fft, int rate) : bins(n_fft / 2 + 1) {
        const auto& anchors = band_anchors_hz();
        weight.assign(static_cast<size_t>(kNumBands) * bins, 0.0);
        norm.assign(kNumBands, 0.0);
        for (int k = 0; k < bins; ++k) {
            const double f = static_cast<double>(k) * rate / n_fft;
            if (f <= anchors.front()) {
                weight[k] = 1.0;
            } else if (f >= anchors.back()) {
                weight[static_cast<size_t>(kNumBands - 1) * bins + k] = 1.0;
            } else {
                int b = 0;
                while (f >= anchors[b + 1]) ++b;
                const double lam = (f - anchors[b]) / (anchors[b + 1] - anchors[b]);
                weight[static_cast<size_t>(b) * bins + k] = 1.0 - lam;
                weight[static_cast<size_t>(b + 1) * bins + k] = lam;
            }
        }
        for (int b = 0; b < kNumBands; ++b)
            for (int k = 0; k < bins; ++k) norm[b] += weight[static_cast<size_t>(b) * bins + k];
    }

    std::vector<double> band_energies(const std::vector<double>& power) const {
        std::vector<double> e(kNumBands, 0.0);
        for (int b = 0; b < kNumBands; ++b) {
            double acc = 0.0;
            const double* w = &weight[static_cast<size_t>(b) * bins];
            for (int k = 0; k < bins; ++k) acc += w[k] * power[k];
            e[b] = acc / norm[b];
        }
        return e;
    }

    std::vector<double> interpolate(const std::vector<double>& band_energy) const {
        std::vector<double> p(bins, 0.0);
        for (int b = 0; b < kNumBands; ++b) {
            const double* w = &weight[static_cast<size_t>(b) * bins];
            for (int k = 0; k < bins; ++k) p[k] += w[k] * band_energy[b];
        }
        return p;
    }
};

const BandLayout& layout_for(const AnalysisConfig& cfg) {
    cfg.validate();
    static const BandLayout layout(512, 16000);
    return layout;
}

// Orthonormal DCT-II over n_bands points; dct_iii is its inverse.
std::vector<double> dct_ii(const std::vector<double>& x) {
    const int n = static_cast<int>(x.size());
    std::vector<double> c(n, 0.0);
    for (int k = 0; k < n; ++k) {
        double acc = 0.0;
        for (int b = 0; b < n; ++b)
            acc += x[b] * std::cos(std::numbers::pi * k * (2.0 * b + 1.0) / (2.0 * n));
        c[k] = acc * std::sqrt((k == 0 ? 1.0 : 2.0) / n);
    }
    return c;
}

std::vector<double> dct_iii(const std::vector<double>& c) {
    const int n = static_cast<int>(c.size());
    std::vector<double> x(n, 0.0);
    for (int b = 0; b < n; ++b) {
        double acc = 0.0;
        for (int k = 0; k < n; ++k)
            acc += c[k] * std::sqrt((k == 0 ? 1.0 : 2.0) / n) *
                   std::cos(std::numbers::pi * k * (2.0 * b + 1.0) / (2.0 * n));
        x[b] = acc;
    }
    return x;
}

std::vector<double> hann_window(int n) {
    std::vector<double> w(n);
    for (int i = 0; i < n; ++i)
        w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);  // periodic
    return w;
}

}  // namespace

void AnalysisConfig::validate() const {
    if (frame_size <= 0 || window_size < frame_size)
        throw std::invalid_argument("AnalysisConfig: window_size must be >= frame_size > 0");
    if (fft_size < window_size || (fft_size & (fft_size - 1)) != 0)
        throw std::invalid_argument("AnalysisConfig: fft_size must be a power of two >= window_size");
    if (lpc_order < 1 || lpc_order >= frame_size)
        throw std::invalid_argument("AnalysisConfig: lpc_order must be in [1, frame_size)");
    if (n_bands != kNumBands)
        throw std::invalid_argument("AnalysisConfig: only the published 18-band layout is supported");
    if (sample_rate_hz != 16000)
        throw std::invalid_argument("AnalysisConfig: 16 kHz only");
    if (fft_size != 512)
        throw std::invalid_argument("AnalysisConfig: fft_size 512 only (frozen band table)");
}

double frame_mean_log_energy(const FeatureFrame& frame) {
    // c0 of the orthonormal DCT-II is sum(log band energies) / sqrt(B).
    return frame.cepstrum.empty()
               ? kSilenceFloor
               : frame.cepstrum[0] / std::sqrt(static_cast<double>(frame.cepstrum.size()));
}

void apply_activity_gate(std::vector<FeatureFrame>& frames) {
    if (frames.empty()) return;
    std::vector<double> mlbe(frames.size());
    for (size_t i = 0; i < frames.size(); ++i) mlbe[i] = frame_mean_log_energy(frames[i]);
    std::vector<double> sorted = mlbe;
    std::sort(sorted.begin(), sorted.end());
    const double median = sorted[(sorted.size() - 1) / 2];
    const double threshold = std::max(median - kGateDropFromMedian, kSilenceFloor);
    for (size_t i = 0; i < frames.size(); ++i) frames[i].active = mlbe[i] > threshold;
}

std::vector<FeatureFrame> analyze(const Signal& sig, const AnalysisConfig& cfg) {
    const BandLayout& layout = layout_for(cfg);
    const int len = static_cast<int>(sig.samples.size());
    if (len < cfg.window_size) return {};
    const int n_frames = (len - cfg.window_size) / cfg.frame_size + 1;
    const std::vector<double> window = hann_window(cfg.window_size);

    std::vector<FeatureFrame> frames(n_frames);
    std::vector<double> buf(cfg.window_size);
    for (int fr = 0; fr < n_frames; ++fr) {
        const int off = fr * cfg.frame_size;
        for (int i = 0; i < cfg.window_size; ++i) buf[i] = window[i] * sig.samples[off + i];
        const std::vector<double> power = detail::real_power_spectrum(buf, cfg.fft_size);
        std::vector<double> bands = layout.band_energies(power);
        for (double& e : bands) e = std::log(std::max(e, kBandEnergyFloor));
        frames[fr].cepstrum = dct_ii(bands);
        frames[fr].frame_index = fr;
    }
    apply_activity_gate(frames);
    return frames;
}

std::vector<double> cepstrum_to_autocorr(const FeatureFrame& frame,
                                         const AnalysisConfig& cfg) {
    const BandLayout& layout = layout_for(cfg);
    std::vector<double> bands = dct_iii(frame.cepstrum);
    for (double& e : bands) e = std::exp(e);
    const std::vector<double> power = layout.interpolate(bands);

    // r_j as the inverse transform of the symmetric power spectrum; only the
    // first M+1 lags are needed, so a direct cosine sum beats an inverse FFT.
    const int n = cfg.fft_size;
    const int half = n / 2;
    std::vector<double> r(static_cast<size_t>(cfg.lpc_order) + 1, 0.0);
    for (int j = 0; j <= cfg.lpc_order; ++j) {
        double acc = power[0];
        for (int k = 1; k < half; ++k)
            acc += 2.0 * power[k] * std::cos(2.0 * std::numbers::pi * k * j / n);
        acc += power[half] * std::cos(std::numbers::pi * j);
        r[j] = acc / n;
    }
    condition_autocorr(r);
    return r;
}

GroundTruthLpc ground_truth_lpc(const FeatureFrame& frame, const AnalysisConfig& cfg) {
    const std::vector<double> r = cepstrum_to_autocorr(frame, cfg);
    LevinsonResult res = levinson_durbin(r);
    return GroundTruthLpc{std::move(res.lpc), std::move(res.rc)};
}

}  // namespace lpvoc
