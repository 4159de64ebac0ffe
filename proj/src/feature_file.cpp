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

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "io_util.hpp"
#include "lpvoc/features.hpp"
#include "lpvoc/io_error.hpp"

namespace lpvoc {

void write_feature_file(const std::string& path, const std::vector<FeatureFrame>& frames,
                        const AnalysisConfig& cfg) {
    detail::atomic_write(path, [&](std::ostream& out) {
        nlohmann::json header = {{"version", 1},
                                 {"n_bands", cfg.n_bands},
                                 {"frame_size", cfg.frame_size},
                                 {"sample_rate", cfg.sample_rate_hz}};
        out << header.dump() << "\n";
        std::vector<float> row(static_cast<size_t>(cfg.n_bands));
        for (const FeatureFrame& fr : frames) {
            if (static_cast<int>(fr.cepstrum.size()) != cfg.n_bands)
                throw IoError("write_feature_file: frame width mismatch");
            for (int b = 0; b < cfg.n_bands; ++b) row[b] = static_cast<float>(fr.cepstrum[b]);
            out.write(reinterpret_cast<const char*>(row.data()),
                      static_cast<std::streamsize>(row.size() * sizeof(float)));
        }
    });
}

std::vector<FeatureFrame> read_feature_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    std::string header_line;
    if (!std::getline(in, header_line)) throw IoError("missing feature header: " + path);
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_line);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("bad feature header in " + path + ": " + e.what());
    }
    const int n_bands = header.at("n_bands").get<int>();
    if (n_bands != kNumBands) throw IoError("unsupported n_bands in " + path);

    std::vector<FeatureFrame> frames;
    std::vector<float> row(static_cast<size_t>(n_bands));
    int index = 0;
    while (in.read(reinterpret_cast<char*>(row.data()),
                   static_cast<std::streamsize>(row.size() * sizeof(float)))) {
        FeatureFrame fr;
        fr.frame_index = index++;
        fr.cepstrum.assign(row.begin(), row.end());
        frames.push_back(std::move(fr));
    }
    if (in.gcount() != 0) throw IoError("truncated feature frame in " + path);
    apply_activity_gate(frames);
    return frames;
}

}  // namespace lpvoc
