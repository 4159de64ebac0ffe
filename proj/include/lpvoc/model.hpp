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

#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "lpvoc/autodiff.hpp"
#include "lpvoc/features.hpp"
#include "lpvoc/signal_ops.hpp"

namespace lpvoc {

/// Reflection coefficients are tanh-bounded and additionally scaled by this
/// factor so |k| stays strictly below 1 in floating point (LAR and the
/// step-down recursion stay finite).
inline constexpr double kRcHeadScale = 0.999;

struct ModelDims {
    int n_ceps = 18;     // cepstral input width
    int cond_dim = 128;  // conditioning vector f
    int embed_dim = 64;  // embedding columns
    int gru_a = 192;
    int gru_b = 32;
    int order = 16;  // prediction order M; k = first M entries of f

    void validate() const;
};

/// All trainable tensors of the frame-rate and sample-rate networks plus the
/// shared embedding table, addressed by name, with a freeze set honored by
/// the optimizer.
struct ModelParams {
    ModelDims dims;
    std::map<std::string, ad::Tensor> tensors;
    std::set<std::string> frozen;

    static ModelParams init(const ModelDims& dims, uint64_t seed);
    /// Names of the frame-rate-network tensors (the freeze-epoch set).
    static std::vector<std::string> frame_net_names();

    ad::Tensor& at(const std::string& name);
    const ad::Tensor& at(const std::string& name) const;
};

/// Tape leaf ids of every parameter tensor, keyed like ModelParams::tensors.
struct ParamLeaves {
    std::map<std::string, ad::Tape::Id> id;
    ad::Tape::Id at(const std::string& name) const;
};

ParamLeaves bind_params(ad::Tape& tape, const ModelParams& params);

struct FrameOutputs {
    ad::Tape::Id f;  // [rows, cond_dim], tanh-bounded
    ad::Tape::Id k;  // [rows, order], first M entries of f scaled by 0.999
    ad::Tape::Id a;  // [rows, order], Levinson step-up of k
};

/// Frame-rate network: two affine+tanh layers; the first M elements of the
/// conditioning vector are the reflection coefficients.
FrameOutputs frame_forward(ad::Tape& tape, const ParamLeaves& leaves,
                           ad::Tape::Id features, const ModelDims& dims);

/// One shard of teacher-forced training sequences.
struct SequenceBatch {
    int n_seq = 0;
    int n_frames = 0;    // frames per sequence
    int frame_size = 0;  // samples per frame
    ad::Tensor features;  // [n_seq * n_frames, n_ceps]
    ad::Tensor samples;   // [n_seq, n_frames * frame_size], pre-emphasized
    // Optional integer mu-law noise added to the s_{t-1} / e_{t-1} network
    // inputs (training only), indexed [seq * T + t] by the consuming step t.
    std::vector<double> s_noise;
    std::vector<double> e_noise;
};

struct SequenceForward {
    FrameOutputs frame;
    ad::Tape::Id p = ad::Tape::kNone;     // [S, T] predictions
    ad::Tape::Id e_mu = ad::Tape::kNone;  // [S, T] real-valued mu-law excitation
    std::vector<ad::Tape::Id> probs;      // per step, [S, 256]
    ParamLeaves leaves;
};

/// Full differentiable teacher-forced pass: predictions from ground-truth
/// history, excitation e = s - p companded on-tape, interpolated embeddings,
/// GRU_A/GRU_B, softmax — all on one tape so a loss gradient reaches the
/// reflection coefficients.
SequenceForward teacher_forced_pass(ad::Tape& tape, const ModelParams& params,
                                    const SequenceBatch& batch);

/// Same pass over parameter leaves that are already on the tape (the
/// gradient-verification harness provides them).
SequenceForward teacher_forced_pass(ad::Tape& tape, const ModelDims& dims,
                                    const ParamLeaves& leaves, const SequenceBatch& batch);

enum class EmbedMode { kInterpolate, kRound };

/// Plain (no-tape) inference model with the embedding/weight products
/// precomputed. Also the vehicle for LSD evaluation.
class InferenceModel {
public:
    explicit InferenceModel(const ModelParams& params);
    ~InferenceModel();
    InferenceModel(const InferenceModel&) = delete;
    InferenceModel& operator=(const InferenceModel&) = delete;

    const ModelDims& dims() const { return dims_; }

    struct Frame {
        std::vector<double> f;
        ReflectionCoeffs k;
        LpcFilter a;
    };
    Frame frame_forward(std::span<const double> cepstrum) const;

    struct State {
        std::vector<double> h_a, h_b;
    };
    State initial_state() const;

    /// One sample-rate-network step: mu-law inputs -> 256-way distribution.
    /// kInterpolate matches the training path; kRound is the synthesis path.
    std::vector<double> sample_forward(double p_mu, double s_mu, double e_mu,
                                       std::span<const double> f, State& state,
                                       EmbedMode mode) const;

private:
    friend Signal synthesize(const ModelParams&, const std::vector<FeatureFrame>&,
                             double, uint64_t);
    struct Impl;
    ModelDims dims_;
    Impl* impl_;
};

/// Autoregressive synthesis from feature frames: sample the excitation from
/// the softmax (logits scaled by 1/temperature; temperature <= 1e-9 means
/// argmax), add the prediction, de-emphasize. Output length is
/// frames * frame_size at 16 kHz.
Signal synthesize(const ModelParams& params, const std::vector<FeatureFrame>& frames,
                  double temperature, uint64_t seed);

/// Checkpoint file: one JSON header line (dims, tensor manifest, freeze set)
/// followed by the tensors as little-endian 64-bit floats. Writes are
/// atomic (temp file + rename).
void save_checkpoint(const std::string& path, const ModelParams& params);
ModelParams load_checkpoint(const std::string& path);

}  // namespace lpvoc
