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

#include <fstream>

#include <json.hpp>

#include "io_util.hpp"
#include "lpvoc/io_error.hpp"
#include "lpvoc/model.hpp"

namespace lpvoc {

void save_checkpoint(const std::string& path, const ModelParams& params) {
    detail::atomic_write(path, [&](std::ostream& out) {
        nlohmann::json manifest = nlohmann::json::array();
        for (const auto& [name, tensor] : params.tensors)
            manifest.push_back({{"name", name}, {"shape", tensor.shape}});
        nlohmann::json header = {
            {"format", "lpvoc-checkpoint"},
            {"version", 1},
            {"dims",
             {{"n_ceps", params.dims.n_ceps},
              {"cond_dim", params.dims.cond_dim},
              {"embed_dim", params.dims.embed_dim},
              {"gru_a", params.dims.gru_a},
              {"gru_b", params.dims.gru_b},
              {"order", params.dims.order}}},
            {"frozen", params.frozen},
            {"tensors", manifest}};
        out << header.dump() << "\n";
        for (const auto& [name, tensor] : params.tensors)
            out.write(reinterpret_cast<const char*>(tensor.data.data()),
                      static_cast<std::streamsize>(tensor.data.size() * sizeof(double)));
    });
}

ModelParams load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    std::string header_line;
    if (!std::getline(in, header_line)) throw IoError("missing checkpoint header: " + path);
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_line);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("bad checkpoint header in " + path + ": " + e.what());
    }
    if (header.value("format", "") != "lpvoc-checkpoint")
        throw IoError("not a checkpoint file: " + path);

    ModelParams params;
    const auto& d = header.at("dims");
    params.dims.n_ceps = d.at("n_ceps").get<int>();
    params.dims.cond_dim = d.at("cond_dim").get<int>();
    params.dims.embed_dim = d.at("embed_dim").get<int>();
    params.dims.gru_a = d.at("gru_a").get<int>();
    params.dims.gru_b = d.at("gru_b").get<int>();
    params.dims.order = d.at("order").get<int>();
    params.dims.validate();
    for (const auto& name : header.at("frozen")) params.frozen.insert(name.get<std::string>());

    for (const auto& entry : header.at("tensors")) {
        const std::string name = entry.at("name").get<std::string>();
        const std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
        ad::Tensor t = ad::Tensor::zeros(shape);
        in.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * sizeof(double)));
        if (!in) throw IoError("truncated tensor " + name + " in " + path);
        params.tensors.emplace(name, std::move(t));
    }
    return params;
}

}  // namespace lpvoc
