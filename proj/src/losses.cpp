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

#include "lpvoc/losses.hpp"

#include <cmath>
#include <stdexcept>

#include "lpvoc/signal_ops.hpp"

namespace lpvoc {

std::string to_string(LossVariant v) {
    switch (v) {
        case LossVariant::kL1: return "L1";
        case LossVariant::kLar: return "LAR";
        case LossVariant::kLarCe: return "LAR_CE";
        case LossVariant::kL1PlusLar: return "L1_plus_LAR";
    }
    throw std::logic_error("unknown loss variant");
}

LossVariant loss_variant_from_string(const std::string& name) {
    if (name == "L1") return LossVariant::kL1;
    if (name == "LAR") return LossVariant::kLar;
    if (name == "LAR_CE") return LossVariant::kLarCe;
    if (name == "L1_plus_LAR") return LossVariant::kL1PlusLar;
    throw std::invalid_argument("unknown loss variant: " + name);
}

void LossConfig::validate() const {
    if (gamma < 0.0 || lar_weight < 0.0)
        throw std::invalid_argument("LossConfig: gamma and lar_weight must be >= 0");
}

double mu_compensation_scale() { return std::log(1.0 + kMuLawMu) / kMuLawMax; }

Tape::Id ce_loss(Tape& tape, Tape::Id probs, const std::vector<int32_t>& classes) {
    return tape.mean(tape.ce_terms(probs, classes));
}

Tape::Id ice_loss(Tape& tape, Tape::Id probs, Tape::Id targets) {
    return tape.mean(tape.ice_terms(probs, targets));
}

Tape::Id compensated_loss(Tape& tape, Tape::Id probs, Tape::Id targets) {
    return tape.add(ice_loss(tape, probs, targets),
                    tape.abs_mean(targets, mu_compensation_scale()));
}

Tape::Id l1_reg(Tape& tape, Tape::Id mu_targets, double gamma) {
    return tape.abs_mean(mu_targets, gamma * mu_compensation_scale());
}

Tape::Id lar_reg(Tape& tape, Tape::Id k, ad::Tensor k_ref, double lar_weight) {
    return tape.lar_mean(k, std::move(k_ref), lar_weight);
}

namespace {

std::vector<int32_t> rounded_classes(const ad::Tensor& targets) {
    std::vector<int32_t> cls(targets.data.size());
    for (size_t i = 0; i < targets.data.size(); ++i)
        cls[i] = mu_quantize(targets.data[i]);
    return cls;
}

// Shared variant assembly once the CE/ICE scalars exist.
LossTerms assemble(Tape& tape, const LossConfig& cfg, LossTerms terms,
                   Tape::Id k, const ad::Tensor& k_ref) {
    cfg.validate();
    switch (cfg.variant) {
        case LossVariant::kL1:
            terms.l1 = tape.scale(terms.compensation, cfg.gamma);
            terms.total = tape.add(tape.add(terms.ice, terms.compensation), terms.l1);
            break;
        case LossVariant::kLar:
            terms.lar = lar_reg(tape, k, k_ref, cfg.lar_weight);
            terms.total = tape.add(tape.add(terms.ice, terms.compensation), terms.lar);
            break;
        case LossVariant::kLarCe:
            terms.lar = lar_reg(tape, k, k_ref, cfg.lar_weight);
            terms.total = tape.add(terms.ce, terms.lar);
            break;
        case LossVariant::kL1PlusLar:
            terms.l1 = tape.scale(terms.compensation, cfg.gamma);
            terms.lar = lar_reg(tape, k, k_ref, cfg.lar_weight);
            terms.total = tape.add(
                tape.add(tape.add(terms.ice, terms.compensation), terms.l1), terms.lar);
            break;
    }
    return terms;
}

}  // namespace

LossTerms total_loss(Tape& tape, const LossConfig& cfg, Tape::Id probs,
                     Tape::Id targets, Tape::Id k, const ad::Tensor& k_ref) {
    LossTerms terms;
    terms.ice = ice_loss(tape, probs, targets);
    terms.compensation = tape.abs_mean(targets, mu_compensation_scale());
    if (cfg.variant == LossVariant::kLarCe)
        terms.ce = ce_loss(tape, probs, rounded_classes(tape.value(targets)));
    return assemble(tape, cfg, terms, k, k_ref);
}

LossTerms sequence_loss(Tape& tape, const LossConfig& cfg,
                        std::span<const Tape::Id> probs_per_step, Tape::Id e_mu,
                        Tape::Id k, const ad::Tensor& k_ref) {
    if (probs_per_step.empty()) throw std::invalid_argument("sequence_loss: no steps");
    // Snapshot: node storage may reallocate as the loop records new nodes.
    const ad::Tensor ev = tape.value(e_mu);
    const int s_rows = ev.rows();
    const int t_steps = static_cast<int>(probs_per_step.size());
    if (ev.cols() != t_steps) throw std::invalid_argument("sequence_loss: step count mismatch");
    const double inv_n = 1.0 / (static_cast<double>(s_rows) * t_steps);

    LossTerms terms;
    Tape::Id ice_acc = Tape::kNone;
    Tape::Id ce_acc = Tape::kNone;
    const bool want_ce = cfg.variant == LossVariant::kLarCe;
    for (int t = 0; t < t_steps; ++t) {
        const Tape::Id ice_t = tape.sum(tape.ice_terms(probs_per_step[t], e_mu, t));
        ice_acc = ice_acc == Tape::kNone ? ice_t : tape.add(ice_acc, ice_t);
        if (want_ce) {
            std::vector<int32_t> cls(s_rows);
            for (int s = 0; s < s_rows; ++s) cls[s] = mu_quantize(ev.at(s, t));
            const Tape::Id ce_t = tape.sum(tape.ce_terms(probs_per_step[t], std::move(cls)));
            ce_acc = ce_acc == Tape::kNone ? ce_t : tape.add(ce_acc, ce_t);
        }
    }
    terms.ice = tape.scale(ice_acc, inv_n);
    if (want_ce) terms.ce = tape.scale(ce_acc, inv_n);
    terms.compensation = tape.abs_mean(e_mu, mu_compensation_scale());
    return assemble(tape, cfg, terms, k, k_ref);
}

}  // namespace lpvoc
