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

#include "lpvoc/training.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

namespace lpvoc {

namespace {

uint64_t mix_seed(uint64_t a, uint64_t b) {
    uint64_t x = a + 0x9e3779b97f4a7c15ull * (b + 0x632be59bd9b4e019ull);
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ull;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebull;
    x ^= x >> 31;
    return x;
}

double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Integer mu-law noise: with probability `prob` draw uniformly from
// {-1, 0, +1}, else 0.
double draw_noise(std::mt19937_64& rng, double prob) {
    if (uniform01(rng) >= prob) return 0.0;
    const double u = uniform01(rng);
    if (u < 1.0 / 3.0) return -1.0;
    if (u < 2.0 / 3.0) return 0.0;
    return 1.0;
}

struct ShardResult {
    std::map<std::string, std::vector<double>> grads;
    double loss = 0.0, ice = 0.0, ce = 0.0, l1 = 0.0, lar = 0.0;
    double lsd_sum = 0.0;
    int lsd_frames = 0;
    int rows = 0;
};

}  // namespace

void TrainConfig::validate() const {
    if (frame_ms <= 0 || sequence_ms % frame_ms != 0)
        throw std::invalid_argument("TrainConfig: sequence_ms must be a multiple of frame_ms");
    if (batch_size < 1 || shard_size < 1 || threads < 1 || epochs < 0)
        throw std::invalid_argument("TrainConfig: bad sizes");
    if (learning_rate <= 0.0 || lr_halve_every < 1)
        throw std::invalid_argument("TrainConfig: bad learning rate schedule");
    if (noise_prob < 0.0 || noise_prob > 1.0)
        throw std::invalid_argument("TrainConfig: noise_prob in [0,1]");
    loss.validate();
}

Dataset make_sequences(const std::vector<Signal>& utterances,
                       const std::vector<std::vector<FeatureFrame>>& features,
                       const AnalysisConfig& acfg, const TrainConfig& cfg) {
    cfg.validate();
    acfg.validate();
    if (utterances.size() != features.size())
        throw std::invalid_argument("make_sequences: utterance/feature count mismatch");
    const int fps = cfg.frames_per_sequence();
    const int seq_samples = fps * acfg.frame_size;

    Dataset data;
    data.analysis = acfg;
    data.frames_per_sequence = fps;
    for (size_t u = 0; u < utterances.size(); ++u) {
        const std::vector<FeatureFrame>& fr = features[u];
        const int n_seq = static_cast<int>(fr.size()) / fps;
        if (n_seq == 0) {
            ++data.skipped_utterances;
            continue;
        }
        for (int j = 0; j < n_seq; ++j) {
            TrainSequence seq;
            seq.features = ad::Tensor::zeros({fps, acfg.n_bands});
            seq.k_ref = ad::Tensor::zeros({fps, acfg.lpc_order});
            seq.samples.assign(utterances[u].samples.begin() + static_cast<size_t>(j) * seq_samples,
                               utterances[u].samples.begin() +
                                   static_cast<size_t>(j + 1) * seq_samples);
            seq.a_ref.reserve(fps);
            seq.active.reserve(fps);
            for (int i = 0; i < fps; ++i) {
                const FeatureFrame& frame = fr[static_cast<size_t>(j) * fps + i];
                for (int b = 0; b < acfg.n_bands; ++b) seq.features.at(i, b) = frame.cepstrum[b];
                GroundTruthLpc gt = ground_truth_lpc(frame, acfg);
                for (int m = 0; m < acfg.lpc_order; ++m) seq.k_ref.at(i, m) = gt.rc.k[m];
                seq.a_ref.push_back(std::move(gt.lpc));
                seq.active.push_back(frame.active ? 1 : 0);
            }
            data.sequences.push_back(std::move(seq));
        }
    }
    std::mt19937_64 rng(mix_seed(cfg.seed, 0xda7a5e7ull));
    std::shuffle(data.sequences.begin(), data.sequences.end(), rng);
    return data;
}

double learning_rate_for_epoch(const TrainConfig& cfg, int epoch) {
    const int halvings = (std::max(epoch, 1) - 1) / cfg.lr_halve_every;
    return cfg.learning_rate * std::pow(0.5, halvings);
}

namespace {

ShardResult run_shard(const ModelParams& params, const Dataset& data, const TrainConfig& cfg,
                      int epoch, std::span<const int> seq_ids, double seed_weight) {
    const int fps = data.frames_per_sequence;
    const int fs = data.analysis.frame_size;
    const int T = fps * fs;
    const int S = static_cast<int>(seq_ids.size());
    const int M = params.dims.order;

    SequenceBatch batch;
    batch.n_seq = S;
    batch.n_frames = fps;
    batch.frame_size = fs;
    batch.features = ad::Tensor::zeros({S * fps, params.dims.n_ceps});
    batch.samples = ad::Tensor::zeros({S, T});
    ad::Tensor k_ref = ad::Tensor::zeros({S * fps, M});
    if (cfg.noise_prob > 0.0) {
        batch.s_noise.assign(static_cast<size_t>(S) * T, 0.0);
        batch.e_noise.assign(static_cast<size_t>(S) * T, 0.0);
    }
    for (int s = 0; s < S; ++s) {
        const TrainSequence& seq = data.sequences[static_cast<size_t>(seq_ids[s])];
        std::copy(seq.features.data.begin(), seq.features.data.end(),
                  batch.features.data.begin() + static_cast<size_t>(s) * fps * params.dims.n_ceps);
        std::copy(seq.samples.begin(), seq.samples.end(),
                  batch.samples.data.begin() + static_cast<size_t>(s) * T);
        std::copy(seq.k_ref.data.begin(), seq.k_ref.data.end(),
                  k_ref.data.begin() + static_cast<size_t>(s) * fps * M);
        if (cfg.noise_prob > 0.0) {
            // One stream per (seed, epoch, sequence id): deterministic under
            // any batching or thread count.
            std::mt19937_64 rng(
                mix_seed(mix_seed(cfg.seed, static_cast<uint64_t>(epoch)),
                         static_cast<uint64_t>(seq_ids[s])));
            for (int t = 0; t < T; ++t) {
                batch.s_noise[static_cast<size_t>(s) * T + t] = draw_noise(rng, cfg.noise_prob);
                batch.e_noise[static_cast<size_t>(s) * T + t] = draw_noise(rng, cfg.noise_prob);
            }
        }
    }

    ad::Tape tape;
    SequenceForward fwd = teacher_forced_pass(tape, params, batch);
    LossTerms terms = sequence_loss(tape, cfg.loss, fwd.probs, fwd.e_mu, fwd.frame.k, k_ref);

    ShardResult res;
    res.rows = S;
    auto term_value = [&](ad::Tape::Id id) {
        return id == ad::Tape::kNone ? 0.0 : tape.value(id).data[0];
    };
    res.loss = term_value(terms.total);
    res.ice = term_value(terms.ice);
    res.ce = term_value(terms.ce);
    res.l1 = term_value(terms.l1);
    res.lar = term_value(terms.lar);

    // Per-frame LSD against the cached ground-truth filters (active frames).
    const ad::Tensor& a_val = tape.value(fwd.frame.a);
    for (int s = 0; s < S; ++s) {
        const TrainSequence& seq = data.sequences[static_cast<size_t>(seq_ids[s])];
        for (int i = 0; i < fps; ++i) {
            if (!seq.active[i]) continue;
            LpcFilter pred;
            pred.a.assign(&a_val.data[static_cast<size_t>(s * fps + i) * M],
                          &a_val.data[static_cast<size_t>(s * fps + i) * M] + M);
            res.lsd_sum += log_spectral_distance(pred, seq.a_ref[i]);
            ++res.lsd_frames;
        }
    }

    tape.backward(terms.total, seed_weight);
    for (const auto& [name, id] : fwd.leaves.id) {
        auto g = tape.grad(id);
        if (g.empty())
            res.grads.emplace(name, std::vector<double>(params.at(name).data.size(), 0.0));
        else
            res.grads.emplace(name, std::vector<double>(g.begin(), g.end()));
    }
    return res;
}

}  // namespace

EpochStats train_epoch(ModelParams& params, AdamState& opt, const Dataset& data,
                       const TrainConfig& cfg, int epoch, std::ostream* log) {
    cfg.validate();
    if (data.sequences.empty()) throw std::invalid_argument("train_epoch: empty dataset");
    const int n = static_cast<int>(data.sequences.size());
    const int batch_size = std::min(cfg.batch_size, n);
    const int n_batches = n / batch_size;
    const double lr = learning_rate_for_epoch(cfg, epoch);

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(mix_seed(cfg.seed, 0xe90c4ull + static_cast<uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);

    EpochStats stats;
    stats.epoch = epoch;
    double lsd_sum = 0.0;
    int64_t lsd_frames = 0;

    for (int b = 0; b < n_batches; ++b) {
        const int* batch_ids = order.data() + static_cast<size_t>(b) * batch_size;
        const int n_shards = (batch_size + cfg.shard_size - 1) / cfg.shard_size;
        std::vector<ShardResult> results(n_shards);
        std::vector<std::exception_ptr> errors(n_shards);

        std::atomic<int> next{0};
        auto worker = [&] {
            for (int i = next.fetch_add(1); i < n_shards; i = next.fetch_add(1)) {
                try {
                    const int lo = i * cfg.shard_size;
                    const int hi = std::min(lo + cfg.shard_size, batch_size);
                    results[i] = run_shard(
                        params, data, cfg, epoch,
                        std::span<const int>(batch_ids + lo, static_cast<size_t>(hi - lo)),
                        static_cast<double>(hi - lo) / batch_size);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        };
        const int n_threads = std::min(cfg.threads, n_shards);
        if (n_threads <= 1) {
            worker();
        } else {
            std::vector<std::thread> pool;
            for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
            for (auto& th : pool) th.join();
        }
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);

        // Fixed-order reduction keeps results independent of thread timing.
        std::map<std::string, std::vector<double>> grads = std::move(results[0].grads);
        double loss = 0.0, ice = 0.0, ce = 0.0, l1 = 0.0, lar = 0.0;
        for (int i = 0; i < n_shards; ++i) {
            const ShardResult& r = results[i];
            const double w = static_cast<double>(r.rows) / batch_size;
            loss += w * r.loss;
            ice += w * r.ice;
            ce += w * r.ce;
            l1 += w * r.l1;
            lar += w * r.lar;
            lsd_sum += r.lsd_sum;
            lsd_frames += r.lsd_frames;
            if (i == 0) continue;
            for (auto& [name, g] : grads) {
                const std::vector<double>& src = r.grads.at(name);
                for (size_t j = 0; j < g.size(); ++j) g[j] += src[j];
            }
        }

        if (!std::isfinite(loss)) {
            std::ostringstream dump;
            dump << "non-finite loss at epoch " << epoch << " batch " << b
                 << " (ice=" << ice << " ce=" << ce << " l1=" << l1 << " lar=" << lar
                 << "; sequences:";
            for (int i = 0; i < batch_size; ++i) dump << ' ' << batch_ids[i];
            dump << ")";
            throw std::runtime_error(dump.str());
        }

        double norm_sq = 0.0;
        for (const auto& [name, g] : grads)
            for (double v : g) norm_sq += v * v;
        const double grad_norm = std::sqrt(norm_sq);
        const bool clipped = cfg.grad_clip > 0.0 && grad_norm > cfg.grad_clip;
        const double clip_scale = clipped ? cfg.grad_clip / grad_norm : 1.0;

        // Adaptive-moment update, decay 0.9/0.999, epsilon 1e-8.
        ++opt.step;
        const double bc1 = 1.0 - std::pow(0.9, static_cast<double>(opt.step));
        const double bc2 = 1.0 - std::pow(0.999, static_cast<double>(opt.step));
        for (auto& [name, tensor] : params.tensors) {
            if (params.frozen.count(name)) continue;
            std::vector<double>& g = grads.at(name);
            ad::Tensor& m = opt.m.try_emplace(name, ad::Tensor::zeros(tensor.shape)).first->second;
            ad::Tensor& v = opt.v.try_emplace(name, ad::Tensor::zeros(tensor.shape)).first->second;
            for (size_t j = 0; j < g.size(); ++j) {
                const double gj = g[j] * clip_scale;
                m.data[j] = 0.9 * m.data[j] + 0.1 * gj;
                v.data[j] = 0.999 * v.data[j] + 0.001 * gj * gj;
                tensor.data[j] -=
                    lr * (m.data[j] / bc1) / (std::sqrt(v.data[j] / bc2) + 1e-8);
            }
        }

        stats.mean_loss += loss;
        stats.mean_ice += ice;
        stats.mean_ce += ce;
        stats.mean_l1 += l1;
        stats.mean_lar += lar;
        stats.mean_grad_norm += grad_norm;
        stats.clip_events += clipped ? 1 : 0;
        ++stats.batches;

        if (log) {
            nlohmann::json rec = {{"epoch", epoch},
                                  {"batch", b},
                                  {"loss", loss},
                                  {"terms", {{"ice", ice}, {"l1", l1}, {"lar", lar}}},
                                  {"grad_norm", grad_norm},
                                  {"clipped", clipped}};
            (*log) << rec.dump() << "\n";
        }
    }

    if (stats.batches > 0) {
        stats.mean_loss /= stats.batches;
        stats.mean_ice /= stats.batches;
        stats.mean_ce /= stats.batches;
        stats.mean_l1 /= stats.batches;
        stats.mean_lar /= stats.batches;
        stats.mean_grad_norm /= stats.batches;
    }
    stats.mean_lsd = lsd_frames > 0 ? lsd_sum / static_cast<double>(lsd_frames) : 0.0;
    return stats;
}

std::vector<EpochStats> train(ModelParams& params, const Dataset& data,
                              const TrainConfig& cfg, std::ostream* log) {
    std::vector<EpochStats> history;
    AdamState opt;
    for (int e = 1; e <= cfg.epochs; ++e)
        history.push_back(train_epoch(params, opt, data, cfg, e, log));
    if (cfg.freeze_final_epoch) {
        for (const std::string& name : ModelParams::frame_net_names())
            params.frozen.insert(name);
        history.push_back(train_epoch(params, opt, data, cfg, cfg.epochs + 1, log));
    }
    return history;
}

double evaluate_lsd(const ModelParams& params, const Dataset& data) {
    const InferenceModel model(params);
    double acc = 0.0;
    int64_t count = 0;
    const int fps = data.frames_per_sequence;
    std::vector<double> ceps(static_cast<size_t>(params.dims.n_ceps));
    for (const TrainSequence& seq : data.sequences) {
        for (int i = 0; i < fps; ++i) {
            if (!seq.active[i]) continue;
            for (int b = 0; b < params.dims.n_ceps; ++b) ceps[b] = seq.features.at(i, b);
            const InferenceModel::Frame fr = model.frame_forward(ceps);
            acc += log_spectral_distance(fr.a, seq.a_ref[i]);
            ++count;
        }
    }
    return count > 0 ? acc / static_cast<double>(count) : 0.0;
}

double evaluate_lsd(const ModelParams& params, std::span<const FeatureFrame> frames,
                    const AnalysisConfig& acfg) {
    const InferenceModel model(params);
    double acc = 0.0;
    int64_t count = 0;
    for (const FeatureFrame& frame : frames) {
        if (!frame.active) continue;
        const GroundTruthLpc gt = ground_truth_lpc(frame, acfg);
        const InferenceModel::Frame fr = model.frame_forward(frame.cepstrum);
        acc += log_spectral_distance(fr.a, gt.lpc);
        ++count;
    }
    return count > 0 ? acc / static_cast<double>(count) : 0.0;
}

}  // namespace lpvoc
