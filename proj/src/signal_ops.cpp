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

#include "lpvoc/signal_ops.hpp"

#include <cmath>
#include <stdexcept>

namespace lpvoc {

namespace {
const double kLogOnePlusMu = std::log(1.0 + kMuLawMu);
}

EmphasisCoeff::EmphasisCoeff(double a) : alpha(a) {
    if (!(a >= 0.0 && a < 1.0))
        throw std::invalid_argument("emphasis coefficient must be in [0, 1)");
}

double mu_compand(double x) {
    if (!(std::fabs(x) <= 1.0))
        throw std::domain_error("mu_compand: |x| > 1");
    double mag = kMuLawMax * std::log(1.0 + kMuLawMu * std::fabs(x)) / kLogOnePlusMu;
    return std::copysign(mag, x);
}

double mu_expand(double u) {
    if (!(std::fabs(u) <= kMuLawMax))
        throw std::domain_error("mu_expand: |u| > 128");
    double mag = (std::exp(std::fabs(u) / kMuLawMax * kLogOnePlusMu) - 1.0) / kMuLawMu;
    return std::copysign(mag, u);
}

double mu_compand_derivative(double x) {
    // Even in x; the |x| kink cancels so U is differentiable at 0.
    return kMuLawMax * kMuLawMu / (kLogOnePlusMu * (1.0 + kMuLawMu * std::fabs(x)));
}

int mu_quantize(double u) {
    if (!(std::fabs(u) <= kMuLawMax))
        throw std::domain_error("mu_quantize: |u| > 128");
    double r = std::round(u);  // rounds halves away from zero
    if (r > 127.0) r = 127.0;
    return static_cast<int>(r);
}

Signal pre_emphasis(const Signal& sig, EmphasisCoeff c, double& state) {
    Signal out;
    out.sample_rate_hz = sig.sample_rate_hz;
    out.samples.resize(sig.samples.size());
    double prev = state;
    for (size_t t = 0; t < sig.samples.size(); ++t) {
        out.samples[t] = sig.samples[t] - c.alpha * prev;
        prev = sig.samples[t];
    }
    state = prev;
    return out;
}

Signal de_emphasis(const Signal& sig, EmphasisCoeff c, double& state) {
    Signal out;
    out.sample_rate_hz = sig.sample_rate_hz;
    out.samples.resize(sig.samples.size());
    double prev = state;
    for (size_t t = 0; t < sig.samples.size(); ++t) {
        prev = sig.samples[t] + c.alpha * prev;
        out.samples[t] = prev;
    }
    state = prev;
    return out;
}

double lp_predict(std::span<const double> history, const LpcFilter& filt) {
    if (static_cast<int>(history.size()) != filt.order())
        throw std::invalid_argument("lp_predict: history length != filter order");
    const int m = filt.order();
    double p = 0.0;
    for (int i = 1; i <= m; ++i) p += filt.a[i - 1] * history[m - i];
    return p;
}

namespace {

// Shared framing walk for analysis/synthesis filtering. `src_history` points
// at the sequence that provides s_{t-i} (the input signal for the residual,
// the reconstructed output for synthesis).
void check_framing(size_t len, size_t n_filters, int frame_size) {
    if (frame_size <= 0) throw std::invalid_argument("frame_size must be positive");
    if (len != n_filters * static_cast<size_t>(frame_size))
        throw std::invalid_argument("signal length != filter count * frame_size");
}

double predict_at(const std::vector<double>& hist_src, size_t t, const LpcFilter& f) {
    double p = 0.0;
    const int m = f.order();
    for (int i = 1; i <= m; ++i) {
        if (static_cast<size_t>(i) > t) break;  // zero-padded history
        p += f.a[i - 1] * hist_src[t - i];
    }
    return p;
}

}  // namespace

Signal lp_residual(const Signal& sig, std::span<const LpcFilter> frame_filters,
                   int frame_size) {
    check_framing(sig.samples.size(), frame_filters.size(), frame_size);
    Signal out;
    out.sample_rate_hz = sig.sample_rate_hz;
    out.samples.resize(sig.samples.size());
    for (size_t t = 0; t < sig.samples.size(); ++t) {
        const LpcFilter& f = frame_filters[t / frame_size];
        out.samples[t] = sig.samples[t] - predict_at(sig.samples, t, f);
    }
    return out;
}

Signal lp_synthesize(const Signal& excitation,
                     std::span<const LpcFilter> frame_filters, int frame_size) {
    check_framing(excitation.samples.size(), frame_filters.size(), frame_size);
    Signal out;
    out.sample_rate_hz = excitation.sample_rate_hz;
    out.samples.resize(excitation.samples.size());
    for (size_t t = 0; t < excitation.samples.size(); ++t) {
        const LpcFilter& f = frame_filters[t / frame_size];
        out.samples[t] = excitation.samples[t] + predict_at(out.samples, t, f);
    }
    return out;
}

}  // namespace lpvoc
