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

#include "lpvoc/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "io_util.hpp"
#include "lpvoc/io_error.hpp"

namespace lpvoc {

namespace {

uint32_t rd_u32(const unsigned char* p) {
    return static_cast<uint32_t>(p[0]) | static_cast<uint32_t>(p[1]) << 8 |
           static_cast<uint32_t>(p[2]) << 16 | static_cast<uint32_t>(p[3]) << 24;
}

uint16_t rd_u16(const unsigned char* p) {
    return static_cast<uint16_t>(p[0] | p[1] << 8);
}

void wr_u32(std::ostream& out, uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

void wr_u16(std::ostream& out, uint16_t v) {
    const unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
    out.write(reinterpret_cast<const char*>(b), 2);
}

}  // namespace

Signal read_wav(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
        std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
        throw IoError("not a RIFF/WAVE file: " + path);

    bool have_fmt = false;
    uint16_t format = 0, channels = 0, bits = 0;
    uint32_t rate = 0;
    size_t data_off = 0, data_len = 0;
    size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const uint32_t chunk_len = rd_u32(bytes.data() + pos + 4);
        const unsigned char* body = bytes.data() + pos + 8;
        if (pos + 8 + chunk_len > bytes.size())
            throw IoError("truncated WAV chunk: " + path);
        if (std::memcmp(bytes.data() + pos, "fmt ", 4) == 0) {
            if (chunk_len < 16) throw IoError("malformed fmt chunk: " + path);
            format = rd_u16(body);
            channels = rd_u16(body + 2);
            rate = rd_u32(body + 4);
            bits = rd_u16(body + 14);
            have_fmt = true;
        } else if (std::memcmp(bytes.data() + pos, "data", 4) == 0) {
            data_off = pos + 8;
            data_len = chunk_len;
        }
        pos += 8 + chunk_len + (chunk_len & 1);  // chunks are word-aligned
    }
    if (!have_fmt || data_off == 0) throw IoError("missing fmt/data chunk: " + path);
    if (format != 1) throw IoError("not PCM: " + path);
    if (channels != 1) throw IoError("not mono: " + path);
    if (bits != 16) throw IoError("not 16-bit: " + path);
    if (rate != 16000) throw IoError("not 16 kHz: " + path);

    Signal sig;
    sig.sample_rate_hz = 16000;
    const size_t n = data_len / 2;
    sig.samples.resize(n);
    for (size_t i = 0; i < n; ++i) {
        const int16_t v = static_cast<int16_t>(rd_u16(bytes.data() + data_off + 2 * i));
        sig.samples[i] = static_cast<double>(v) / 32768.0;
    }
    return sig;
}

void write_wav(const std::string& path, const Signal& sig) {
    if (sig.sample_rate_hz != 16000) throw IoError("write_wav: 16 kHz only");
    detail::atomic_write(path, [&](std::ostream& out) {
        const uint32_t data_len = static_cast<uint32_t>(sig.samples.size() * 2);
        out.write("RIFF", 4);
        wr_u32(out, 36 + data_len);
        out.write("WAVE", 4);
        out.write("fmt ", 4);
        wr_u32(out, 16);
        wr_u16(out, 1);   // PCM
        wr_u16(out, 1);   // mono
        wr_u32(out, 16000);
        wr_u32(out, 16000 * 2);
        wr_u16(out, 2);   // block align
        wr_u16(out, 16);  // bits
        out.write("data", 4);
        wr_u32(out, data_len);
        for (double s : sig.samples) {
            const double v = std::clamp(s, -1.0, 1.0) * 32767.0;
            wr_u16(out, static_cast<uint16_t>(static_cast<int16_t>(std::lround(v))));
        }
    });
}

}  // namespace lpvoc
