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

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <vector>

#include "lpvoc/features.hpp"
#include "lpvoc/losses.hpp"
#include "lpvoc/model.hpp"

namespace lpvoc {

struct TrainConfig {
    int sequence_ms = 150;
    int frame_ms = 10;
    int batch_size = 32;
    // Shards are the unit of the deterministic data-parallel reduction: a
    // batch is split into fixed shard_size groups whose gradients are summed
    // in shard order, so results do not depend on the thread count.
    int shard_size = 4;
    int threads = 1;
    int epochs = 20;
    double learning_rate = 1e-3;
    int lr_halve_every = 5;  // epochs between halvings
    double grad_clip = 10.0;  // global norm; 0 disables
    double noise_prob = 0.3;  // mu-law input noise (training only)
    uint64_t seed = 1;
    LossConfig loss;
    bool freeze_final_epoch = false;

    void validate() const;
    int frames_per_sequence() const { return sequence_ms / frame_ms; }
};

struct TrainSequence {
    ad::Tensor features;          // [n_frames, n_ceps]
    std::vector<double> samples;  // n_frames * frame_size, pre-emphasized
    ad::Tensor k_ref;             // [n_frames, order] ground-truth RCs
    std::vector<LpcFilter> a_ref;
    std::vector<uint8_t> active;
};

struct Dataset {
    AnalysisConfig analysis;
    int frames_per_sequence = 15;
    std::vector<TrainSequence> sequences;
    int skipped_utterances = 0;
};

/// Cuts non-overlapping sequences (15 frames / 2400 samples by default) from
/// utterances with aligned features, attaches ground-truth reflection
/// coefficients per frame, and applies a seeded shuffle. Utterances shorter
/// than one sequence are skipped and counted.
Dataset make_sequences(const std::vector<Signal>& utterances,
                       const std::vector<std::vector<FeatureFrame>>& features,
                       const AnalysisConfig& acfg, const TrainConfig& cfg);

struct AdamState {
    std::map<std::string, ad::Tensor> m, v;
    int64_t step = 0;
};

struct EpochStats {
    int epoch = 0;
    double mean_loss = 0.0;
    double mean_ice = 0.0;
    double mean_ce = 0.0;
    double mean_l1 = 0.0;
    double mean_lar = 0.0;
    double mean_grad_norm = 0.0;
    double mean_lsd = 0.0;  // LSD to ground-truth filters over active frames
    int clip_events = 0;
    int batches = 0;
};

double learning_rate_for_epoch(const TrainConfig& cfg, int epoch);

/// One pass over the dataset with adaptive-moment updates (decay 0.9/0.999,
/// epsilon 1e-8), per-batch gradient clipping at global norm, the freeze set
/// honored bit-exactly, and one NDJSON record per batch written to `log`:
///   {"epoch":..,"batch":..,"loss":..,"terms":{"ice":..,"l1":..,"lar":..},
///    "grad_norm":..,"clipped":..}
/// Throws std::runtime_error with a diagnostic dump if the loss goes
/// non-finite. Deterministic given (params, dataset, cfg, epoch); the thread
/// count does not change results.
EpochStats train_epoch(ModelParams& params, AdamState& opt, const Dataset& data,
                       const TrainConfig& cfg, int epoch, std::ostream* log);

/// Full run: cfg.epochs epochs, plus one extra epoch with the frame-rate
/// network frozen when freeze_final_epoch is set.
std::vector<EpochStats> train(ModelParams& params, const Dataset& data,
                              const TrainConfig& cfg, std::ostream* log);

/// Mean LSD in dB between predicted and ground-truth filters over active
/// frames.
double evaluate_lsd(const ModelParams& params, const Dataset& data);
double evaluate_lsd(const ModelParams& params, std::span<const FeatureFrame> frames,
                    const AnalysisConfig& acfg);

}  // namespace lpvoc
