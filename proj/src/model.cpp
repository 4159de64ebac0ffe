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

#include "lpvoc/model.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <stdexcept>

#include "lpvoc/lp_math.hpp"

namespace lpvoc {

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVec = Eigen::RowVectorXd;

Eigen::Map<const Mat> cmap(const ad::Tensor& t) {
    return Eigen::Map<const Mat>(t.data.data(), t.rows(), t.cols());
}

}  // namespace

void ModelDims::validate() const {
    if (n_ceps < 1 || cond_dim < 1 || embed_dim < 1 || gru_a < 1 || gru_b < 1 || order < 1)
        throw std::invalid_argument("ModelDims: dimensions must be positive");
    if (cond_dim < order)
        throw std::invalid_argument("ModelDims: cond_dim must be >= order (k head)");
}

ModelParams ModelParams::init(const ModelDims& dims, uint64_t seed) {
    dims.validate();
    ModelParams p;
    p.dims = dims;
    std::mt19937_64 rng(seed);
    auto uniform = [&](double limit) {
        // 53-bit mantissa draw, deterministic across platforms
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        return (2.0 * u - 1.0) * limit;
    };
    auto weight = [&](const std::string& name, int in, int out) {
        ad::Tensor t = ad::Tensor::zeros({in, out});
        const double limit = std::sqrt(6.0 / (in + out));
        for (double& v : t.data) v = uniform(limit);
        p.tensors.emplace(name, std::move(t));
    };
    auto bias = [&](const std::string& name, int n) {
        p.tensors.emplace(name, ad::Tensor::zeros({n}));
    };

    const int F = dims.cond_dim, E = dims.embed_dim, A = dims.gru_a, B = dims.gru_b;
    weight("frame.w1", dims.n_ceps, F);
    bias("frame.b1", F);
    weight("frame.w2", F, F);
    bias("frame.b2", F);
    {
        ad::Tensor t = ad::Tensor::zeros({ad::kEmbedRows, E});
        for (double& v : t.data) v = uniform(0.1);
        p.tensors.emplace("embed.table", std::move(t));
    }
    weight("gru_a.wx_p", E, 3 * A);
    weight("gru_a.wx_s", E, 3 * A);
    weight("gru_a.wx_e", E, 3 * A);
    weight("gru_a.wx_f", F, 3 * A);
    bias("gru_a.bx", 3 * A);
    weight("gru_a.u_zr", A, 2 * A);
    weight("gru_a.u_c", A, A);
    weight("gru_b.wx_h", A, 3 * B);
    weight("gru_b.wx_f", F, 3 * B);
    bias("gru_b.bx", 3 * B);
    weight("gru_b.u_zr", B, 2 * B);
    weight("gru_b.u_c", B, B);
    weight("out.w", B, kMuLawClasses);
    bias("out.b", kMuLawClasses);
    return p;
}

std::vector<std::string> ModelParams::frame_net_names() {
    return {"frame.w1", "frame.b1", "frame.w2", "frame.b2"};
}

ad::Tensor& ModelParams::at(const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw std::out_of_range("ModelParams: no tensor " + name);
    return it->second;
}

const ad::Tensor& ModelParams::at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw std::out_of_range("ModelParams: no tensor " + name);
    return it->second;
}

ad::Tape::Id ParamLeaves::at(const std::string& name) const {
    auto it = id.find(name);
    if (it == id.end()) throw std::out_of_range("ParamLeaves: no tensor " + name);
    return it->second;
}

ParamLeaves bind_params(ad::Tape& tape, const ModelParams& params) {
    ParamLeaves leaves;
    for (const auto& [name, tensor] : params.tensors) leaves.id.emplace(name, tape.leaf(tensor));
    return leaves;
}

FrameOutputs frame_forward(ad::Tape& tape, const ParamLeaves& leaves,
                           ad::Tape::Id features, const ModelDims& dims) {
    const ad::Tape::Id h1 =
        tape.tanh(tape.affine(features, leaves.at("frame.w1"), leaves.at("frame.b1")));
    const ad::Tape::Id f =
        tape.tanh(tape.affine(h1, leaves.at("frame.w2"), leaves.at("frame.b2")));
    const ad::Tape::Id k = tape.scale(tape.slice_cols(f, 0, dims.order), kRcHeadScale);
    return FrameOutputs{f, k, tape.levinson(k)};
}

SequenceForward teacher_forced_pass(ad::Tape& tape, const ModelParams& params,
                                    const SequenceBatch& batch) {
    return teacher_forced_pass(tape, params.dims, bind_params(tape, params), batch);
}

SequenceForward teacher_forced_pass(ad::Tape& tape, const ModelDims& dims,
                                    const ParamLeaves& leaves, const SequenceBatch& batch) {
    const int S = batch.n_seq, F = batch.n_frames, fs = batch.frame_size;
    const int T = F * fs;
    if (batch.features.rows() != S * F || batch.features.cols() != dims.n_ceps)
        throw std::invalid_argument("teacher_forced_pass: bad feature shape");
    if (batch.samples.rows() != S || batch.samples.cols() != T)
        throw std::invalid_argument("teacher_forced_pass: bad sample shape");
    if (!batch.s_noise.empty() && static_cast<int>(batch.s_noise.size()) != S * T)
        throw std::invalid_argument("teacher_forced_pass: bad s_noise size");
    if (!batch.e_noise.empty() && static_cast<int>(batch.e_noise.size()) != S * T)
        throw std::invalid_argument("teacher_forced_pass: bad e_noise size");

    SequenceForward fwd;
    fwd.leaves = leaves;
    const ParamLeaves& L = fwd.leaves;

    fwd.frame = frame_forward(tape, L, tape.constant(batch.features), dims);

    const ad::Tape::Id sig = tape.constant(batch.samples);
    fwd.p = tape.predict(fwd.frame.a, sig, fs);
    fwd.e_mu = tape.mu_compand_clamped(tape.sub(sig, fwd.p));
    const ad::Tape::Id p_mu = tape.mu_compand_clamped(fwd.p);

    const ad::Tape::Id fp_a = tape.affine(fwd.frame.f, L.at("gru_a.wx_f"), L.at("gru_a.bx"));
    const ad::Tape::Id fp_b = tape.affine(fwd.frame.f, L.at("gru_b.wx_f"), L.at("gru_b.bx"));
    const ad::Tape::Id proj_p = tape.matmul(L.at("embed.table"), L.at("gru_a.wx_p"));
    const ad::Tape::Id proj_s = tape.matmul(L.at("embed.table"), L.at("gru_a.wx_s"));
    const ad::Tape::Id proj_e = tape.matmul(L.at("embed.table"), L.at("gru_a.wx_e"));

    // mu-law coordinates of the ground-truth signal inputs, host-side.
    std::vector<double> s_mu(static_cast<size_t>(S) * T);
    for (int s = 0; s < S; ++s)
        for (int t = 0; t < T; ++t)
            s_mu[static_cast<size_t>(s) * T + t] =
                mu_compand(std::clamp(batch.samples.at(s, t), -1.0, 1.0));

    ad::Tape::Id h_a = tape.constant(ad::Tensor::zeros({S, dims.gru_a}));
    ad::Tape::Id h_b = tape.constant(ad::Tensor::zeros({S, dims.gru_b}));
    fwd.probs.reserve(T);
    std::vector<double> s_coords(S), e_noise_t(S);
    std::vector<int32_t> fp_rows(S);
    for (int t = 0; t < T; ++t) {
        for (int s = 0; s < S; ++s) {
            const double noise =
                batch.s_noise.empty() ? 0.0 : batch.s_noise[static_cast<size_t>(s) * T + t];
            const double prev = t == 0 ? 0.0 : s_mu[static_cast<size_t>(s) * T + t - 1];
            s_coords[s] = std::clamp(prev + noise, -128.0, 128.0);
            e_noise_t[s] =
                batch.e_noise.empty() ? 0.0 : batch.e_noise[static_cast<size_t>(s) * T + t];
        }
        const ad::Tape::Id xa =
            tape.sample_input(proj_p, proj_s, proj_e, fp_a, p_mu, fwd.e_mu, t, fs, F,
                              s_coords, e_noise_t);
        h_a = tape.gru_core(xa, h_a, L.at("gru_a.u_zr"), L.at("gru_a.u_c"));
        const int fr = t / fs;
        for (int s = 0; s < S; ++s) fp_rows[s] = s * F + fr;
        const ad::Tape::Id xb = tape.add(tape.affine(h_a, L.at("gru_b.wx_h")),
                                         tape.gather_rows(fp_b, fp_rows));
        h_b = tape.gru_core(xb, h_b, L.at("gru_b.u_zr"), L.at("gru_b.u_c"));
        fwd.probs.push_back(tape.softmax(tape.affine(h_b, L.at("out.w"), L.at("out.b"))));
    }
    return fwd;
}

// ---------------------------------------------------------------------------
// plain inference

struct InferenceModel::Impl {
    Mat w1, w2;
    RowVec b1, b2;
    Mat proj_p, proj_s, proj_e;  // [257, 3A], embedding rows pre-multiplied
    Mat wx_f_a, u_zr_a, u_c_a;
    RowVec bx_a;
    Mat wx_h_b, wx_f_b, u_zr_b, u_c_b;
    RowVec bx_b;
    Mat out_w;
    RowVec out_b;
};

InferenceModel::InferenceModel(const ModelParams& params)
    : dims_(params.dims), impl_(new Impl) {
    auto mat = [&](const char* name) { return Mat(cmap(params.at(name))); };
    auto vec = [&](const char* name) {
        const ad::Tensor& t = params.at(name);
        return RowVec(Eigen::Map<const RowVec>(t.data.data(), t.size()));
    };
    impl_->w1 = mat("frame.w1");
    impl_->b1 = vec("frame.b1");
    impl_->w2 = mat("frame.w2");
    impl_->b2 = vec("frame.b2");
    const Mat table = mat("embed.table");
    // Same product as the training tape computes, so integer-coordinate
    // lookups agree exactly between the two paths.
    impl_->proj_p.noalias() = table * mat("gru_a.wx_p");
    impl_->proj_s.noalias() = table * mat("gru_a.wx_s");
    impl_->proj_e.noalias() = table * mat("gru_a.wx_e");
    impl_->wx_f_a = mat("gru_a.wx_f");
    impl_->bx_a = vec("gru_a.bx");
    impl_->u_zr_a = mat("gru_a.u_zr");
    impl_->u_c_a = mat("gru_a.u_c");
    impl_->wx_h_b = mat("gru_b.wx_h");
    impl_->wx_f_b = mat("gru_b.wx_f");
    impl_->bx_b = vec("gru_b.bx");
    impl_->u_zr_b = mat("gru_b.u_zr");
    impl_->u_c_b = mat("gru_b.u_c");
    impl_->out_w = mat("out.w");
    impl_->out_b = vec("out.b");
}

InferenceModel::~InferenceModel() { delete impl_; }

InferenceModel::Frame InferenceModel::frame_forward(std::span<const double> cepstrum) const {
    if (static_cast<int>(cepstrum.size()) != dims_.n_ceps)
        throw std::invalid_argument("frame_forward: bad cepstrum width");
    Frame out;
    RowVec x = Eigen::Map<const RowVec>(cepstrum.data(), cepstrum.size());
    RowVec h1 = (x * impl_->w1 + impl_->b1).array().tanh();
    RowVec f = (h1 * impl_->w2 + impl_->b2).array().tanh();
    out.f.assign(f.data(), f.data() + f.size());
    out.k.k.resize(dims_.order);
    for (int i = 0; i < dims_.order; ++i) out.k.k[i] = kRcHeadScale * f(i);
    out.a = rc_to_lpc(out.k);
    return out;
}

InferenceModel::State InferenceModel::initial_state() const {
    return State{std::vector<double>(dims_.gru_a, 0.0), std::vector<double>(dims_.gru_b, 0.0)};
}

namespace {

// Interpolated lookup mirroring the evaluation order of the training path.
void add_lerp(const Mat& table, double x, RowVec& acc, bool round_mode) {
    if (!(x >= -ad::kEmbedOffset && x <= ad::kEmbedOffset))
        throw std::domain_error("sample_forward: coordinate outside [-128, 128]");
    if (round_mode) {
        acc += table.row(ad::embed_round_index(x));
        return;
    }
    const double u = x + ad::kEmbedOffset;
    const int j = std::min(static_cast<int>(std::floor(u)), ad::kEmbedRows - 2);
    const double f = u - j;
    acc += (1.0 - f) * table.row(j) + f * table.row(j + 1);
}

void gru_step(const RowVec& xproj, std::vector<double>& h, const Mat& u_zr, const Mat& u_c) {
    const int H = static_cast<int>(h.size());
    Eigen::Map<RowVec> hm(h.data(), H);
    RowVec pre_zr = xproj.head(2 * H) + hm * u_zr;
    RowVec z(H), r(H);
    for (int j = 0; j < H; ++j) {
        z(j) = 1.0 / (1.0 + std::exp(-pre_zr(j)));
        r(j) = 1.0 / (1.0 + std::exp(-pre_zr(H + j)));
    }
    RowVec rh = r.array() * hm.array();
    RowVec pre_c = xproj.tail(H) + rh * u_c;
    for (int j = 0; j < H; ++j) {
        const double c = std::tanh(pre_c(j));
        h[j] = (1.0 - z(j)) * h[j] + z(j) * c;
    }
}

std::vector<double> softmax_row(RowVec logits) {
    const double m = logits.maxCoeff();
    double s = 0.0;
    for (int i = 0; i < logits.size(); ++i) {
        logits(i) = std::exp(logits(i) - m);
        s += logits(i);
    }
    std::vector<double> p(static_cast<size_t>(logits.size()));
    for (int i = 0; i < logits.size(); ++i) p[i] = logits(i) / s;
    return p;
}

}  // namespace

std::vector<double> InferenceModel::sample_forward(double p_mu, double s_mu, double e_mu,
                                                   std::span<const double> f, State& state,
                                                   EmbedMode mode) const {
    if (static_cast<int>(f.size()) != dims_.cond_dim)
        throw std::invalid_argument("sample_forward: bad conditioning width");
    const bool round_mode = mode == EmbedMode::kRound;
    const Eigen::Map<const RowVec> fv(f.data(), f.size());
    RowVec xa = RowVec::Zero(3 * dims_.gru_a);
    add_lerp(impl_->proj_p, p_mu, xa, round_mode);
    add_lerp(impl_->proj_s, s_mu, xa, round_mode);
    add_lerp(impl_->proj_e, e_mu, xa, round_mode);
    xa += fv * impl_->wx_f_a + impl_->bx_a;
    gru_step(xa, state.h_a, impl_->u_zr_a, impl_->u_c_a);
    const Eigen::Map<const RowVec> ha(state.h_a.data(), dims_.gru_a);
    RowVec xb = ha * impl_->wx_h_b + fv * impl_->wx_f_b + impl_->bx_b;
    gru_step(xb, state.h_b, impl_->u_zr_b, impl_->u_c_b);
    const Eigen::Map<const RowVec> hb(state.h_b.data(), dims_.gru_b);
    return softmax_row(hb * impl_->out_w + impl_->out_b);
}

Signal synthesize(const ModelParams& params, const std::vector<FeatureFrame>& frames,
                  double temperature, uint64_t seed) {
    const InferenceModel model(params);
    const InferenceModel::Impl& im = *model.impl_;
    const ModelDims& dims = params.dims;
    const int fs = 160;
    const int M = dims.order;
    const bool argmax = temperature <= 1e-9;

    std::mt19937_64 rng(seed);
    auto next_uniform = [&] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };

    Signal out;
    out.sample_rate_hz = 16000;
    out.samples.reserve(frames.size() * fs);

    InferenceModel::State state = model.initial_state();
    std::vector<double> hist(M, 0.0);  // hist[i] = s_{t-1-i}
    double s_prev = 0.0;
    double e_prev_mu = 0.0;

    for (const FeatureFrame& frame : frames) {
        const InferenceModel::Frame fr = model.frame_forward(frame.cepstrum);
        const Eigen::Map<const RowVec> fv(fr.f.data(), fr.f.size());
        const RowVec fp_a = fv * im.wx_f_a + im.bx_a;
        const RowVec fp_b = fv * im.wx_f_b + im.bx_b;
        for (int n = 0; n < fs; ++n) {
            double p = 0.0;
            for (int i = 0; i < M; ++i) p += fr.a.a[i] * hist[i];
            const double p_mu = mu_compand(std::clamp(p, -1.0, 1.0));
            const double s_mu = mu_compand(std::clamp(s_prev, -1.0, 1.0));

            RowVec xa = RowVec::Zero(3 * dims.gru_a);
            xa += im.proj_p.row(ad::embed_round_index(p_mu));
            xa += im.proj_s.row(ad::embed_round_index(s_mu));
            xa += im.proj_e.row(ad::embed_round_index(e_prev_mu));
            xa += fp_a;
            gru_step(xa, state.h_a, im.u_zr_a, im.u_c_a);
            const Eigen::Map<const RowVec> ha(state.h_a.data(), dims.gru_a);
            RowVec xb = ha * im.wx_h_b + fp_b;
            gru_step(xb, state.h_b, im.u_zr_b, im.u_c_b);
            const Eigen::Map<const RowVec> hb(state.h_b.data(), dims.gru_b);
            RowVec logits = hb * im.out_w + im.out_b;

            int cls = 0;
            if (argmax) {
                for (int i = 1; i < logits.size(); ++i)
                    if (logits(i) > logits(cls)) cls = i;
            } else {
                const std::vector<double> probs = softmax_row(logits / temperature);
                const double u = next_uniform();
                double cdf = 0.0;
                cls = kMuLawClasses - 1;
                for (int i = 0; i < kMuLawClasses; ++i) {
                    cdf += probs[i];
                    if (u < cdf) {
                        cls = i;
                        break;
                    }
                }
            }
            const double e_mu = static_cast<double>(cls - 128);
            const double s = std::clamp(p + mu_expand(e_mu), -1.0, 1.0);
            out.samples.push_back(s);

            for (int i = M - 1; i > 0; --i) hist[i] = hist[i - 1];
            if (M > 0) hist[0] = s;
            s_prev = s;
            e_prev_mu = e_mu;
        }
    }
    double state0 = 0.0;
    return de_emphasis(out, EmphasisCoeff(kDefaultEmphasis), state0);
}

}  // namespace lpvoc
