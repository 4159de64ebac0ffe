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

#include <string>

#include "lpvoc/signal_ops.hpp"

namespace lpvoc {

/// Reads a RIFF WAV file. Only mono 16-bit PCM at 16 kHz is accepted;
/// anything else raises IoError with a message naming the offending
/// property. Samples map to [-1, 1) as int16/32768.
Signal read_wav(const std::string& path);

/// Writes mono 16-bit PCM; samples are clamped to [-1, 1] and rounded.
/// Atomic (temp + rename).
void write_wav(const std::string& path, const Signal& sig);

}  // namespace lpvoc
