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
#include <string>
#include <vector>

#include "lpvoc/autodiff.hpp"

namespace lpvoc {

enum class LossVariant { kL1, kLar, kLarCe, kL1PlusLar };

std::string to_string(LossVariant v);
LossVariant loss_variant_from_string(const std::string& name);

struct LossConfig {
    LossVariant variant = LossVariant::kL1PlusLar;
    double gamma = 1.0;       // weight of the extra mu-law L1 term
    double lar_weight = 1.0;  // weight of the LAR match term

    void validate() const;
};

/// log(1 + mu) / U_max, the per-unit compensation for mu-law bin width.
double mu_compensation_scale();

using ad::Tape;

/// Mean over rows of -log P(class); classes are rounded mu-law excitations
/// in [-128, 127]. Probabilities below 1e-12 are floored (the tape counts
/// the events).
Tape::Id ce_loss(Tape& tape, Tape::Id probs, const std::vector<int32_t>& classes);

/// Interpolated cross-entropy: the probability at a real-valued mu-law
/// target is linearly interpolated between the two neighboring classes, so
/// the gradient also flows into the target.
Tape::Id ice_loss(Tape& tape, Tape::Id probs, Tape::Id targets);

/// ice_loss plus mean(|target| * log(1+mu)/U_max), the mu-law scale
/// compensation.
Tape::Id compensated_loss(Tape& tape, Tape::Id probs, Tape::Id targets);

/// gamma * mean(|target| * log(1+mu)/U_max).
Tape::Id l1_reg(Tape& tape, Tape::Id mu_targets, double gamma);

/// lar_weight * mean over frames of the squared LAR distance to reference
/// reflection coefficients.
Tape::Id lar_reg(Tape& tape, Tape::Id k, ad::Tensor k_ref, double lar_weight);

struct LossTerms {
    Tape::Id total = Tape::kNone;
    Tape::Id ice = Tape::kNone;
    Tape::Id ce = Tape::kNone;
    Tape::Id compensation = Tape::kNone;  // the mu-law L1 term inside the compensated loss
    Tape::Id l1 = Tape::kNone;
    Tape::Id lar = Tape::kNone;
};

/// Variant assembly over one batch of probability rows:
///   kL1:        ice + compensation + l1(gamma)
///   kLar:       ice + compensation + lar
///   kLarCe:     ce(round(targets)) + lar   (rounding blocks the target path)
///   kL1PlusLar: ice + compensation + l1(gamma) + lar
/// k/k_ref are only consulted by the LAR variants.
LossTerms total_loss(Tape& tape, const LossConfig& cfg, Tape::Id probs,
                     Tape::Id targets, Tape::Id k, const ad::Tensor& k_ref);

/// Same assembly over a teacher-forced sequence batch where probabilities
/// come one tape value per time step and targets are the columns of e_mu.
LossTerms sequence_loss(Tape& tape, const LossConfig& cfg,
                        std::span<const Tape::Id> probs_per_step, Tape::Id e_mu,
                        Tape::Id k, const ad::Tensor& k_ref);

}  // namespace lpvoc
