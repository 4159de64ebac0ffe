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

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "io_util.hpp"
#include "lpvoc/features.hpp"
#include "lpvoc/io_error.hpp"
#include "lpvoc/model.hpp"
#include "lpvoc/training.hpp"
#include "lpvoc/verification.hpp"
#include "lpvoc/wav.hpp"

namespace {

using namespace lpvoc;

std::vector<std::string> sorted_wav_files(const std::string& dir) {
    std::vector<std::string> files;
    std::error_code ec;
    for (const auto& entry : std::filesystem::directory_iterator(dir, ec)) {
        if (entry.path().extension() == ".wav") files.push_back(entry.path().string());
    }
    if (ec) throw IoError("cannot list directory: " + dir);
    if (files.empty()) throw IoError("no .wav files in " + dir);
    std::sort(files.begin(), files.end());
    return files;
}

std::vector<FeatureFrame> features_of_wav(const std::string& path, double alpha,
                                          const AnalysisConfig& cfg) {
    const Signal raw = read_wav(path);
    double state = 0.0;
    return analyze(pre_emphasis(raw, EmphasisCoeff(alpha), state), cfg);
}

void load_train_config(const std::string& path, TrainConfig& cfg) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("bad config JSON in " + path + ": " + e.what());
    }
    cfg.sequence_ms = j.value("sequence_ms", cfg.sequence_ms);
    cfg.frame_ms = j.value("frame_ms", cfg.frame_ms);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.shard_size = j.value("shard_size", cfg.shard_size);
    cfg.threads = j.value("threads", cfg.threads);
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
    cfg.lr_halve_every = j.value("lr_halve_every", cfg.lr_halve_every);
    cfg.grad_clip = j.value("grad_clip", cfg.grad_clip);
    cfg.noise_prob = j.value("noise_prob", cfg.noise_prob);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.freeze_final_epoch = j.value("freeze_final_epoch", cfg.freeze_final_epoch);
    if (j.contains("loss")) {
        const auto& l = j.at("loss");
        if (l.contains("variant"))
            cfg.loss.variant = loss_variant_from_string(l.at("variant").get<std::string>());
        cfg.loss.gamma = l.value("gamma", cfg.loss.gamma);
        cfg.loss.lar_weight = l.value("lar_weight", cfg.loss.lar_weight);
    }
}

int cmd_features(const std::string& in_wav, const std::string& out_feat, double alpha) {
    AnalysisConfig cfg;
    cfg.pre_emphasis = alpha;
    const std::vector<FeatureFrame> frames = features_of_wav(in_wav, alpha, cfg);
    write_feature_file(out_feat, frames, cfg);
    std::cout << frames.size() << " frames -> " << out_feat << "\n";
    return 0;
}

int cmd_train(const std::string& corpus_dir, const std::string& out_ckpt,
              const TrainConfig& cfg, double alpha, const std::string& log_path) {
    AnalysisConfig acfg;
    acfg.pre_emphasis = alpha;
    std::vector<Signal> signals;
    std::vector<std::vector<FeatureFrame>> features;
    for (const std::string& path : sorted_wav_files(corpus_dir)) {
        const Signal raw = read_wav(path);
        double state = 0.0;
        Signal pre = pre_emphasis(raw, EmphasisCoeff(alpha), state);
        features.push_back(analyze(pre, acfg));
        signals.push_back(std::move(pre));
    }
    const Dataset data = make_sequences(signals, features, acfg, cfg);
    std::cerr << data.sequences.size() << " sequences (" << data.skipped_utterances
              << " utterances skipped)\n";

    std::ofstream log_file;
    std::ostream* log = &std::cout;
    if (!log_path.empty()) {
        log_file.open(log_path, std::ios::trunc);
        if (!log_file) throw IoError("cannot open log: " + log_path);
        log = &log_file;
    }

    ModelParams params = ModelParams::init(ModelDims{}, cfg.seed);
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<EpochStats> history = train(params, data, cfg, log);
    for (const EpochStats& st : history)
        std::cerr << "epoch " << st.epoch << ": loss " << st.mean_loss << ", lsd "
                  << st.mean_lsd << " dB, " << st.clip_events << " clips\n";
    const double sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cerr << "trained in " << sec << " s\n";
    save_checkpoint(out_ckpt, params);
    return 0;
}

int cmd_synth(const std::string& in_feat, const std::string& ckpt, const std::string& out_wav,
              double temperature, uint64_t seed) {
    const std::vector<FeatureFrame> frames = read_feature_file(in_feat);
    const ModelParams params = load_checkpoint(ckpt);
    const Signal out = synthesize(params, frames, temperature, seed);
    write_wav(out_wav, out);
    std::cout << out.samples.size() << " samples -> " << out_wav << "\n";
    return 0;
}

int cmd_lsd(const std::string& ckpt, const std::string& eval_dir, bool ground_truth,
            double alpha) {
    AnalysisConfig acfg;
    acfg.pre_emphasis = alpha;
    double acc = 0.0;
    int64_t frames_counted = 0;
    std::unique_ptr<InferenceModel> model;
    if (!ground_truth) model = std::make_unique<InferenceModel>(load_checkpoint(ckpt));
    for (const std::string& path : sorted_wav_files(eval_dir)) {
        const std::vector<FeatureFrame> frames = features_of_wav(path, alpha, acfg);
        for (const FeatureFrame& fr : frames) {
            if (!fr.active) continue;
            const GroundTruthLpc gt = ground_truth_lpc(fr, acfg);
            if (model) acc += log_spectral_distance(model->frame_forward(fr.cepstrum).a, gt.lpc);
            ++frames_counted;
        }
    }
    if (frames_counted == 0) throw IoError("no active frames in " + eval_dir);
    std::printf("%.2f dB\n", acc / static_cast<double>(frames_counted));
    return 0;
}

int cmd_response(const std::string& ckpt, bool ground_truth_only, const std::string& in_feat,
                 int frame_index, const std::string& out_csv) {
    const std::vector<FeatureFrame> frames = read_feature_file(in_feat);
    if (frame_index < 0 || frame_index >= static_cast<int>(frames.size()))
        throw IoError("frame index out of range (file has " + std::to_string(frames.size()) +
                      " frames)");
    const FeatureFrame& frame = frames[static_cast<size_t>(frame_index)];
    AnalysisConfig acfg;

    std::ostringstream csv;
    csv << "frequency_hz,response_db,source_label\n";
    auto emit = [&](const LpcFilter& filt, const char* label) {
        const std::vector<double> resp = lpc_log_response(filt, acfg.fft_size);
        for (size_t b = 0; b < resp.size(); ++b) {
            const double hz = static_cast<double>(b) * acfg.sample_rate_hz / acfg.fft_size;
            csv << hz << "," << resp[b] << "," << label << "\n";
        }
    };
    if (!ground_truth_only) {
        const ModelParams params = load_checkpoint(ckpt);
        const InferenceModel model(params);
        emit(model.frame_forward(frame.cepstrum).a, "predicted");
    }
    emit(ground_truth_lpc(frame, acfg).lpc, "ground_truth");

    detail::atomic_write(out_csv, [&](std::ostream& out) { out << csv.str(); });
    std::cout << out_csv << "\n";
    return 0;
}

int cmd_gradcheck(int points) {
    const GradSuiteResult result = run_gradient_suite(points, &std::cout);
    std::cout << (result.ok ? std::string("gradient suite PASS")
                            : "gradient suite FAIL (" + result.failure + ")")
              << ", max rel error " << result.max_rel_error << "\n";
    return result.ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"differentiable linear-prediction vocoder"};
    app.require_subcommand(1);

    std::string in_path, out_path, ckpt_path, dir_path, config_path, log_path;
    double alpha = kDefaultEmphasis;
    double temperature = 1.0;
    uint64_t seed = 1;
    bool ground_truth = false;
    int frame_index = 0;
    int gradcheck_points = 100;
    TrainConfig flag_cfg;

    auto* features_cmd =
        app.add_subcommand("features", "extract cepstral features from a WAV file");
    features_cmd->add_option("input", in_path, "input .wav (mono 16-bit 16 kHz)")->required();
    features_cmd->add_option("output", out_path, "output .feat")->required();
    features_cmd->add_option("--alpha", alpha, "pre-emphasis coefficient");

    auto* train_cmd = app.add_subcommand("train", "train a model on a directory of WAV files");
    train_cmd->add_option("corpus", dir_path, "directory of training .wav files")->required();
    train_cmd->add_option("output", ckpt_path, "output checkpoint")->required();
    train_cmd->add_option("--config", config_path, "JSON config (TrainConfig fields)");
    std::string variant_flag;
    train_cmd->add_option("--variant", variant_flag,
                          "loss variant: L1 | LAR | LAR_CE | L1_plus_LAR");
    auto* epochs_opt = train_cmd->add_option("--epochs", flag_cfg.epochs, "training epochs");
    auto* batch_opt =
        train_cmd->add_option("--batch-size", flag_cfg.batch_size, "sequences per update");
    auto* seed_opt = train_cmd->add_option("--seed", flag_cfg.seed, "RNG seed");
    auto* threads_opt = train_cmd->add_option("--threads", flag_cfg.threads, "worker threads");
    auto* lr_opt = train_cmd->add_option("--lr", flag_cfg.learning_rate, "initial learning rate");
    auto* freeze_opt = train_cmd->add_flag("--freeze-final-epoch", flag_cfg.freeze_final_epoch,
                                           "extra epoch with the frame-rate network frozen");
    train_cmd->add_option("--alpha", alpha, "pre-emphasis coefficient");
    train_cmd->add_option("--log", log_path, "NDJSON batch log file (default: stdout)");

    auto* synth_cmd = app.add_subcommand("synth", "synthesize speech from a feature file");
    synth_cmd->add_option("features", in_path, "input .feat")->required();
    synth_cmd->add_option("checkpoint", ckpt_path, "trained checkpoint")->required();
    synth_cmd->add_option("output", out_path, "output .wav")->required();
    synth_cmd->add_option("--temperature", temperature, "sampling temperature (0 = argmax)");
    synth_cmd->add_option("--seed", seed, "sampling RNG seed");

    auto* lsd_cmd =
        app.add_subcommand("lsd", "mean LSD to ground-truth filters over a directory");
    lsd_cmd->add_option("checkpoint", ckpt_path, "trained checkpoint")->required();
    lsd_cmd->add_option("eval_dir", dir_path, "directory of evaluation .wav files")->required();
    lsd_cmd->add_flag("--ground-truth", ground_truth,
                      "score the ground-truth filters against themselves");
    lsd_cmd->add_option("--alpha", alpha, "pre-emphasis coefficient");

    auto* response_cmd =
        app.add_subcommand("response", "export filter responses of one frame as CSV");
    response_cmd->add_option("features", in_path, "input .feat")->required();
    response_cmd->add_option("frame", frame_index, "frame index")->required();
    response_cmd->add_option("output", out_path, "output .csv")->required();
    response_cmd->add_option("--checkpoint", ckpt_path,
                             "trained checkpoint (adds predicted rows)");
    response_cmd->add_flag("--ground-truth", ground_truth, "ground-truth rows only");

    auto* gradcheck_cmd =
        app.add_subcommand("gradcheck", "run the gradient verification suite");
    gradcheck_cmd->add_option("--points", gradcheck_points, "random points per primitive");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
        app.exit(e);
        return 2;
    }

    try {
        if (*features_cmd) return cmd_features(in_path, out_path, alpha);
        if (*train_cmd) {
            TrainConfig cfg;
            cfg.threads = 2;
            if (!config_path.empty()) load_train_config(config_path, cfg);
            // flags override file values
            if (!variant_flag.empty())
                cfg.loss.variant = loss_variant_from_string(variant_flag);
            if (*epochs_opt) cfg.epochs = flag_cfg.epochs;
            if (*batch_opt) cfg.batch_size = flag_cfg.batch_size;
            if (*seed_opt) cfg.seed = flag_cfg.seed;
            if (*threads_opt) cfg.threads = flag_cfg.threads;
            if (*lr_opt) cfg.learning_rate = flag_cfg.learning_rate;
            if (*freeze_opt) cfg.freeze_final_epoch = true;
            return cmd_train(dir_path, ckpt_path, cfg, alpha, log_path);
        }
        if (*synth_cmd) return cmd_synth(in_path, ckpt_path, out_path, temperature, seed);
        if (*lsd_cmd) return cmd_lsd(ckpt_path, dir_path, ground_truth, alpha);
        if (*response_cmd) {
            if (ckpt_path.empty() && !ground_truth)
                throw IoError("response: pass --checkpoint or --ground-truth");
            return cmd_response(ckpt_path, ckpt_path.empty(), in_path, frame_index, out_path);
        }
        if (*gradcheck_cmd) return cmd_gradcheck(gradcheck_points);
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
