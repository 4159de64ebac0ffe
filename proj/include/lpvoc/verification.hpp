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

#include <iosfwd>
#include <string>

namespace lpvoc {

struct GradSuiteResult {
    bool ok = true;
    double max_rel_error = 0.0;
    std::string failure;  // first failing check, empty when ok
};

/// Finite-difference verification of every differentiable primitive at
/// `points_per_primitive` random points (with guard bands around the known
/// non-smooth points) followed by the fully composed teacher-forced loss,
/// all four variants, on a 3-frame order-16 micro model. Everything must
/// stay under max relative error 1e-4. Progress lines go to `progress` when
/// non-null.
GradSuiteResult run_gradient_suite(int points_per_primitive, std::ostream* progress);

}  // namespace lpvoc
