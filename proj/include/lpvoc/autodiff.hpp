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

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace lpvoc::ad {

/// 64-byte-aligned storage for every buffer the SIMD kernels touch. A fixed
/// alignment phase keeps vector loop peeling, and therefore floating-point
/// summation order, identical from run to run; bit-reproducibility of
/// training depends on it.
template <typename T, std::size_t Alignment>
struct AlignedAllocator {
    using value_type = T;
    AlignedAllocator() noexcept = default;
    template <typename U>
    AlignedAllocator(const AlignedAllocator<U, Alignment>&) noexcept {}
    T* allocate(std::size_t n) {
        return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t(Alignment)));
    }
    void deallocate(T* p, std::size_t n) noexcept {
        ::operator delete(p, n * sizeof(T), std::align_val_t(Alignment));
    }
    template <typename U>
    bool operator==(const AlignedAllocator<U, Alignment>&) const noexcept {
        return true;
    }
};

using AlignedVec = std::vector<double, AlignedAllocator<double, 64>>;

/// Dense row-major tensor of 64-bit floats. Rank is 1 or 2 everywhere in
/// this codebase; scalars use shape {1}.
struct Tensor {
    std::vector<int> shape;
    AlignedVec data;

    Tensor() = default;
    Tensor(std::vector<int> s, AlignedVec d);

    static Tensor zeros(std::vector<int> shape);
    static Tensor scalar(double v);
    static Tensor row_vector(std::vector<double> d);
    static Tensor matrix(int rows, int cols, std::vector<double> d);

    int rows() const { return shape.empty() ? 0 : shape[0]; }
    int cols() const { return shape.size() < 2 ? 1 : shape[1]; }
    int64_t size() const { return static_cast<int64_t>(data.size()); }
    double& at(int r, int c) { return data[static_cast<size_t>(r) * cols() + c]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * cols() + c]; }
};

/// Embedding tables span signed mu-law coordinates -128..128, one row per
/// integer, so floor(x)+1 stays in range for every x in the domain.
inline constexpr int kEmbedRows = 257;
inline constexpr int kEmbedOffset = 128;

/// Reverse-mode tape. Each recorded primitive stores its forward value and a
/// backward rule; backward() walks the records in reverse, accumulating
/// vector-Jacobian products additively at fan-out. One Tape is single
/// threaded; distinct Tapes may run concurrently.
///
/// Unless constructed with retain_buffers, a node's value and gradient are
/// released as soon as its backward step has run; leaf values and gradients
/// always persist so parameter gradients can be read after backward().
class Tape {
public:
    using Id = int32_t;
    static constexpr Id kNone = -1;

    explicit Tape(bool retain_buffers = false);
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Id leaf(Tensor v);      // differentiable input/parameter
    Id constant(Tensor v);  // no gradient tracked

    const Tensor& value(Id id) const;
    /// Gradient of the last backward() root w.r.t. node `id`. Zero-filled if
    /// the node does not influence the root.
    std::span<const double> grad(Id id) const;

    // --- dense primitives -------------------------------------------------
    Id affine(Id x, Id w, Id b = kNone);  // y = x*W (+ b per row)
    Id matmul(Id a, Id b);
    Id tanh(Id x);
    Id sigmoid(Id x);
    Id add(Id a, Id b);
    Id sub(Id a, Id b);
    Id mul(Id a, Id b);  // elementwise
    Id scale(Id x, double c);
    Id concat_cols(std::span<const Id> parts);
    Id slice_cols(Id x, int col0, int col1);  // [col0, col1)
    Id gather_rows(Id x, std::vector<int32_t> rows);
    Id softmax(Id logits);  // row-wise
    Id sum(Id x);           // -> scalar
    Id mean(Id x);          // -> scalar
    Id clamp(Id x, double lo, double hi);  // pass-through gradient inside

    // --- domain primitives ------------------------------------------------
    /// Standard GRU cell, gates z and r, candidate from the reset-gated
    /// state:
    ///   [z|r] = sigmoid(x*Wx[:,0:2H] + b[0:2H] + h*U_zr)
    ///   c     = tanh   (x*Wx[:,2H:3H] + b[2H:3H] + (r.h)*U_c)
    ///   h'    = (1-z).h + z.c
    Id gru_cell(Id x, Id h, Id wx, Id b, Id u_zr, Id u_c);
    /// Same cell with the input projection x*Wx + b precomputed (xproj).
    Id gru_core(Id xproj, Id h, Id u_zr, Id u_c);

    /// Interpolated embedding lookup: f = x - floor(x),
    /// out = (1-f)*row(floor(x)) + f*row(floor(x)+1). Gradients flow to both
    /// rows and, through f, to x. x components must lie in [-128, 128].
    Id embed_interp(Id table, Id x);

    /// Levinson step-up applied row-wise: k [N,M] -> direct-form a [N,M].
    /// Forward agrees with lp_math rc_to_lpc; backward is the exact
    /// vector-Jacobian product of the recursion run in reverse.
    Id levinson(Id k);

    /// Per-frame linear prediction over a batch of sequences.
    /// a: [S*F, M] frame-major coefficients, sig: [S, T] ground-truth
    /// history with T = F*frame_size; out[s,t] = sum_i a[s*F + t/fs, i] *
    /// sig[s, t-i] (zero-padded below t=0). Differentiable w.r.t. both.
    Id predict(Id a, Id sig, int frame_size);

    /// U(clamp(x, -1, 1)) elementwise; gradient is U'(x) inside the clamp
    /// and 0 outside.
    Id mu_compand_clamped(Id x);

    /// Fused sample-rate-network input: sums interpolated lookups of three
    /// projected embedding tables plus the per-frame conditioning
    /// projection.
    ///   out[s] = lerp(proj_p, pmu[s,t]) + lerp(proj_s, s_coord[s])
    ///          + lerp(proj_e, clamp(emu[s,t-1] + e_noise[s])) + fproj[row]
    /// where row = s*frames_per_seq + t/frame_size. At t = 0 the excitation
    /// coordinate is 0.
    Id sample_input(Id proj_p, Id proj_s, Id proj_e, Id fproj, Id pmu, Id emu,
                    int t, int frame_size, int frames_per_seq,
                    std::vector<double> s_coords, std::vector<double> e_noise);

    /// Interpolated cross-entropy terms, one per row of probs:
    ///   u = clamp(target + 128, 0, 255); j = min(floor(u), 254); f = u - j
    ///   term = -log(max((1-f) P[j] + f P[j+1], 1e-12))
    /// Gradient flows into probs and, through f, into the target. `col`
    /// selects a column of a [S,T] target matrix; pass kNone when targets is
    /// a flat [N] vector aligned with probs rows.
    Id ice_terms(Id probs, Id targets, int col = kNone);

    /// Plain cross-entropy terms against fixed integer classes in
    /// [-128, 127]: term = -log(max(P[class+128], 1e-12)).
    Id ce_terms(Id probs, std::vector<int32_t> classes);

    /// scale * mean(|x|) as one scalar node.
    Id abs_mean(Id x, double scale);

    /// weight * mean over rows of sum_i (lar(k_i) - lar(ref_i))^2.
    Id lar_mean(Id k, Tensor ref, double weight);

    // --- execution ----------------------------------------------------
    void backward(Id root, double seed = 1.0);

    int64_t n_nodes() const;
    /// Times the interpolated probability hit the 1e-12 log floor.
    int64_t ice_floor_hits() const { return ice_floor_hits_; }

private:
    struct Node;
    Id push(Node&& n);
    Node& node(Id id);
    const Node& node(Id id) const;
    double* grad_buf(Id id);  // lazily zero-filled; nullptr for constants
    void run_backward(Node& n);
    void release(Node& n);

    std::vector<Node>* nodes_;
    bool retain_;
    int64_t ice_floor_hits_ = 0;
    bool ran_backward_ = false;
};

/// Inference-time embedding lookup: nearest-integer row (ties away from
/// zero). Not differentiable. x must lie in [-128, 128].
std::span<const double> embed_round(const Tensor& table, double x);

/// Row index used by embed_round.
int embed_round_index(double x);

struct GradCheckReport {
    double max_rel_error = 0.0;
    // (input index, flat component index) of every component over tolerance
    std::vector<std::pair<int, int64_t>> failing_indices;
    bool ok = true;
};

/// Central-difference check of a scalar function built from tape
/// primitives: rel error = |g_fd - g_bp| / max(|g_fd|, |g_bp|, 1e-8)
/// per component, with g_fd = (f(x+h) - f(x-h)) / 2h. When both magnitudes
/// sit at or below the 1e-8 floor they count as matching zeros (their
/// difference is below central-difference resolution at any step).
///
/// Components over tolerance are re-evaluated at 10h and 50h:
/// small-magnitude gradients drown in difference roundoff (eps*|f|/2h) at
/// the base step, and central differences of a smooth function converge at
/// the coarser ones, while genuinely wrong gradients keep failing. The
/// per-component error is the best of the ladder.
GradCheckReport grad_check(
    const std::function<Tape::Id(Tape&, const std::vector<Tape::Id>&)>& build,
    const std::vector<Tensor>& point, double h, double tolerance);

}  // namespace lpvoc::ad
