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

#include "lpvoc/autodiff.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>

#include "lpvoc/lp_math.hpp"
#include "lpvoc/signal_ops.hpp"

namespace lpvoc::ad {

namespace {

constexpr double kProbFloor = 1e-12;

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<Mat>;
using CMatMap = Eigen::Map<const Mat>;

CMatMap cmap(const Tensor& t) { return CMatMap(t.data.data(), t.rows(), t.cols()); }

MatMap gmap(std::vector<double>& g, const Tensor& shape_of) {
    return MatMap(g.data(), shape_of.rows(), shape_of.cols());
}

// Fractional lookup coordinate: base row and fraction for x in [-128, 128].
std::pair<int, double> lerp_coord(double x) {
    if (!(x >= -kEmbedOffset && x <= kEmbedOffset))
        throw std::domain_error("embedding coordinate outside [-128, 128]");
    const double u = x + kEmbedOffset;
    const int j = std::min(static_cast<int>(std::floor(u)), kEmbedRows - 2);
    return {j, u - j};
}

// Interpolation coordinate into 256 probability bins (classes -128..127):
// u = clamp(t + 128, 0, 255), base = min(floor(u), 254). Returns whether the
// clamp was inactive (gradient may flow into the target).
struct IceCoord {
    int j;
    double f;
    bool target_grad;
};
IceCoord ice_coord(double target) {
    double u = target + 128.0;
    const bool inside = u > 0.0 && u < 255.0;
    u = std::clamp(u, 0.0, 255.0);
    const int j = std::min(static_cast<int>(std::floor(u)), 254);
    return {j, u - j, inside};
}

}  // namespace

Tensor::Tensor(std::vector<int> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
    int64_t n = 1;
    for (int dim : shape) n *= dim;
    if (n != static_cast<int64_t>(data.size()))
        throw std::invalid_argument("Tensor: shape/data size mismatch");
}

Tensor Tensor::zeros(std::vector<int> shape) {
    int64_t n = 1;
    for (int dim : shape) n *= dim;
    return Tensor(std::move(shape), std::vector<double>(static_cast<size_t>(n), 0.0));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::row_vector(std::vector<double> d) {
    const int n = static_cast<int>(d.size());
    return Tensor({n}, std::move(d));
}

Tensor Tensor::matrix(int rows, int cols, std::vector<double> d) {
    return Tensor({rows, cols}, std::move(d));
}

enum class Op : uint8_t {
    kLeaf,
    kConst,
    kAffine,
    kTanh,
    kSigmoid,
    kAdd,
    kSub,
    kMul,
    kScale,
    kConcat,
    kSliceCols,
    kGatherRows,
    kSoftmax,
    kSum,
    kMean,
    kClamp,
    kGruCore,
    kEmbedInterp,
    kLevinson,
    kPredict,
    kCompandClamp,
    kSampleInput,
    kIce,
    kCe,
    kAbsMean,
    kLarMean,
};

struct Tape::Node {
    Op op = Op::kConst;
    std::array<Id, 6> parent{kNone, kNone, kNone, kNone, kNone, kNone};
    int n_parent = 0;
    int32_t i0 = 0, i1 = 0, i2 = 0;
    double d0 = 0.0, d1 = 0.0;
    Tensor val;
    std::vector<double> grad;
    std::vector<double> aux;
    std::vector<int32_t> iaux;
};

Tape::Tape(bool retain_buffers)
    : nodes_(new std::vector<Node>()), retain_(retain_buffers) {}

Tape::~Tape() { delete nodes_; }

Tape::Id Tape::push(Node&& n) {
    nodes_->push_back(std::move(n));
    return static_cast<Id>(nodes_->size() - 1);
}

Tape::Node& Tape::node(Id id) { return (*nodes_)[static_cast<size_t>(id)]; }
const Tape::Node& Tape::node(Id id) const { return (*nodes_)[static_cast<size_t>(id)]; }

int64_t Tape::n_nodes() const { return static_cast<int64_t>(nodes_->size()); }

Tape::Id Tape::leaf(Tensor v) {
    Node n;
    n.op = Op::kLeaf;
    n.val = std::move(v);
    return push(std::move(n));
}

Tape::Id Tape::constant(Tensor v) {
    Node n;
    n.op = Op::kConst;
    n.val = std::move(v);
    return push(std::move(n));
}

const Tensor& Tape::value(Id id) const {
    const Node& n = node(id);
    int64_t expect = 1;
    for (int d : n.val.shape) expect *= d;
    if (n.val.data.empty() && expect != 0)
        throw std::logic_error("Tape::value: buffer was released after backward");
    return n.val;
}

std::span<const double> Tape::grad(Id id) const {
    static const std::vector<double> kEmpty;
    const Node& n = node(id);
    if (n.grad.empty()) return {kEmpty.data(), 0};
    return {n.grad.data(), n.grad.size()};
}

double* Tape::grad_buf(Id id) {
    Node& n = node(id);
    if (n.op == Op::kConst) return nullptr;
    if (n.grad.empty()) n.grad.assign(n.val.data.size(), 0.0);
    return n.grad.data();
}

// ---------------------------------------------------------------------------
// forward builders

Tape::Id Tape::affine(Id x, Id w, Id b) {
    const Tensor& xv = node(x).val;
    const Tensor& wv = node(w).val;
    if (xv.cols() != wv.rows()) throw std::invalid_argument("affine: inner dim mismatch");
    Node n;
    n.op = Op::kAffine;
    n.parent = {x, w, b, kNone, kNone, kNone};
    n.n_parent = b == kNone ? 2 : 3;
    n.val = Tensor::zeros({xv.rows(), wv.cols()});
    MatMap out(n.val.data.data(), xv.rows(), wv.cols());
    out.noalias() = cmap(xv) * cmap(wv);
    if (b != kNone) {
        const Tensor& bv = node(b).val;
        if (bv.size() != wv.cols()) throw std::invalid_argument("affine: bias size mismatch");
        out.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bv.data.data(), bv.size());
    }
    return push(std::move(n));
}

Tape::Id Tape::matmul(Id a, Id b) { return affine(a, b, kNone); }

Tape::Id Tape::tanh(Id x) {
    Node n;
    n.op = Op::kTanh;
    n.parent[0] = x;
    n.n_parent = 1;
    n.val = node(x).val;
    for (double& v : n.val.data) v = std::tanh(v);
    return push(std::move(n));
}

Tape::Id Tape::sigmoid(Id x) {
    Node n;
    n.op = Op::kSigmoid;
    n.parent[0] = x;
    n.n_parent = 1;
    n.val = node(x).val;
    for (double& v : n.val.data) v = 1.0 / (1.0 + std::exp(-v));
    return push(std::move(n));
}

namespace {
void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape != b.shape) throw std::invalid_argument(std::string(what) + ": shape mismatch");
}
}  // namespace

Tape::Id Tape::add(Id a, Id b) {
    const Tensor& av = node(a).val;
    const Tensor& bv = node(b).val;
    check_same_shape(av, bv, "add");
    Node n;
    n.op = Op::kAdd;
    n.parent = {a, b, kNone, kNone, kNone, kNone};
    n.n_parent = 2;
    n.val = av;
    for (size_t i = 0; i < n.val.data.size(); ++i) n.val.data[i] += bv.data[i];
    return push(std::move(n));
}

Tape::Id Tape::sub(Id a, Id b) {
    const Tensor& av = node(a).val;
    const Tensor& bv = node(b).val;
    check_same_shape(av, bv, "sub");
    Node n;
    n.op = Op::kSub;
    n.parent = {a, b, kNone, kNone, kNone, kNone};
    n.n_parent = 2;
    n.val = av;
    for (size_t i = 0; i < n.val.data.size(); ++i) n.val.data[i] -= bv.data[i];
    return push(std::move(n));
}

Tape::Id Tape::mul(Id a, Id b) {
    const Tensor& av = node(a).val;
    const Tensor& bv = node(b).val;
    check_same_shape(av, bv, "mul");
    Node n;
    n.op = Op::kMul;
    n.parent = {a, b, kNone, kNone, kNone, kNone};
    n.n_parent = 2;
    n.val = av;
    for (size_t i = 0; i < n.val.data.size(); ++i) n.val.data[i] *= bv.data[i];
    return push(std::move(n));
}

Tape::Id Tape::scale(Id x, double c) {
    Node n;
    n.op = Op::kScale;
    n.parent[0] = x;
    n.n_parent = 1;
    n.d0 = c;
    n.val = node(x).val;
    for (double& v : n.val.data) v *= c;
    return push(std::move(n));
}

Tape::Id Tape::concat_cols(std::span<const Id> parts) {
    if (parts.empty() || parts.size() > 6)
        throw std::invalid_argument("concat_cols: 1..6 parts supported");
    const int rows = node(parts[0]).val.rows();
    int cols = 0;
    for (Id p : parts) {
        if (node(p).val.rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
        cols += node(p).val.cols();
    }
    Node n;
    n.op = Op::kConcat;
    n.n_parent = static_cast<int>(parts.size());
    for (size_t i = 0; i < parts.size(); ++i) n.parent[i] = parts[i];
    n.val = Tensor::zeros({rows, cols});
    int off = 0;
    for (Id p : parts) {
        const Tensor& pv = node(p).val;
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < pv.cols(); ++c) n.val.at(r, off + c) = pv.at(r, c);
        off += pv.cols();
    }
    return push(std::move(n));
}

Tape::Id Tape::slice_cols(Id x, int col0, int col1) {
    const Tensor& xv = node(x).val;
    if (col0 < 0 || col1 > xv.cols() || col0 >= col1)
        throw std::invalid_argument("slice_cols: bad range");
    Node n;
    n.op = Op::kSliceCols;
    n.parent[0] = x;
    n.n_parent = 1;
    n.i0 = col0;
    n.i1 = col1;
    n.val = Tensor::zeros({xv.rows(), col1 - col0});
    for (int r = 0; r < xv.rows(); ++r)
        for (int c = col0; c < col1; ++c) n.val.at(r, c - col0) = xv.at(r, c);
    return push(std::move(n));
}

Tape::Id Tape::gather_rows(Id x, std::vector<int32_t> rows) {
    const Tensor& xv = node(x).val;
    for (int32_t r : rows)
        if (r < 0 || r >= xv.rows()) throw std::invalid_argument("gather_rows: index out of range");
    Node n;
    n.op = Op::kGatherRows;
    n.parent[0] = x;
    n.n_parent = 1;
    n.val = Tensor::zeros({static_cast<int>(rows.size()), xv.cols()});
    for (size_t i = 0; i < rows.size(); ++i)
        for (int c = 0; c < xv.cols(); ++c) n.val.at(static_cast<int>(i), c) = xv.at(rows[i], c);
    n.iaux = std::move(rows);
    return push(std::move(n));
}

Tape::Id Tape::softmax(Id logits) {
    const Tensor& xv = node(logits).val;
    Node n;
    n.op = Op::kSoftmax;
    n.parent[0] = logits;
    n.n_parent = 1;
    n.val = xv;
    const int cols = xv.cols();
    for (int r = 0; r < xv.rows(); ++r) {
        double* row = &n.val.data[static_cast<size_t>(r) * cols];
        double m = row[0];
        for (int c = 1; c < cols; ++c) m = std::max(m, row[c]);
        double s = 0.0;
        for (int c = 0; c < cols; ++c) {
            row[c] = std::exp(row[c] - m);
            s += row[c];
        }
        for (int c = 0; c < cols; ++c) row[c] /= s;
    }
    return push(std::move(n));
}

Tape::Id Tape::sum(Id x) {
    Node n;
    n.op = Op::kSum;
    n.parent[0] = x;
    n.n_parent = 1;
    double acc = 0.0;
    for (double v : node(x).val.data) acc += v;
    n.val = Tensor::scalar(acc);
    return push(std::move(n));
}

Tape::Id Tape::mean(Id x) {
    Node n;
    n.op = Op::kMean;
    n.parent[0] = x;
    n.n_parent = 1;
    double acc = 0.0;
    for (double v : node(x).val.data) acc += v;
    n.val = Tensor::scalar(acc / static_cast<double>(node(x).val.data.size()));
    return push(std::move(n));
}

Tape::Id Tape::clamp(Id x, double lo, double hi) {
    Node n;
    n.op = Op::kClamp;
    n.parent[0] = x;
    n.n_parent = 1;
    n.d0 = lo;
    n.d1 = hi;
    n.val = node(x).val;
    for (double& v : n.val.data) v = std::clamp(v, lo, hi);
    return push(std::move(n));
}

Tape::Id Tape::gru_core(Id xproj, Id h, Id u_zr, Id u_c) {
    const Tensor& xv = node(xproj).val;
    const Tensor& hv = node(h).val;
    const int N = hv.rows(), H = hv.cols();
    if (xv.rows() != N || xv.cols() != 3 * H || node(u_zr).val.rows() != H ||
        node(u_zr).val.cols() != 2 * H || node(u_c).val.rows() != H ||
        node(u_c).val.cols() != H)
        throw std::invalid_argument("gru_core: shape mismatch");

    Node n;
    n.op = Op::kGruCore;
    n.parent = {xproj, h, u_zr, u_c, kNone, kNone};
    n.n_parent = 4;
    n.val = Tensor::zeros({N, H});
    n.aux.resize(static_cast<size_t>(3) * N * H);

    Mat pre_zr = cmap(xv).leftCols(2 * H);
    pre_zr.noalias() += cmap(hv) * cmap(node(u_zr).val);
    MatMap z(n.aux.data(), N, H);
    MatMap r(n.aux.data() + static_cast<size_t>(N) * H, N, H);
    MatMap c(n.aux.data() + static_cast<size_t>(2) * N * H, N, H);
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < H; ++j) {
            z(i, j) = 1.0 / (1.0 + std::exp(-pre_zr(i, j)));
            r(i, j) = 1.0 / (1.0 + std::exp(-pre_zr(i, H + j)));
        }
    Mat rh = r.array() * cmap(hv).array();
    Mat pre_c = cmap(xv).rightCols(H);
    pre_c.noalias() += rh * cmap(node(u_c).val);
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < H; ++j) c(i, j) = std::tanh(pre_c(i, j));
    MatMap out(n.val.data.data(), N, H);
    out.array() = (1.0 - z.array()) * cmap(hv).array() + z.array() * c.array();
    return push(std::move(n));
}

Tape::Id Tape::gru_cell(Id x, Id h, Id wx, Id b, Id u_zr, Id u_c) {
    return gru_core(affine(x, wx, b), h, u_zr, u_c);
}

Tape::Id Tape::embed_interp(Id table, Id x) {
    const Tensor& tv = node(table).val;
    const Tensor& xv = node(x).val;
    if (tv.rows() != kEmbedRows) throw std::invalid_argument("embed_interp: table must have 257 rows");
    const int N = static_cast<int>(xv.data.size());
    const int E = tv.cols();
    Node n;
    n.op = Op::kEmbedInterp;
    n.parent = {table, x, kNone, kNone, kNone, kNone};
    n.n_parent = 2;
    n.val = Tensor::zeros({N, E});
    for (int i = 0; i < N; ++i) {
        const auto [j, f] = lerp_coord(xv.data[i]);
        for (int e = 0; e < E; ++e)
            n.val.at(i, e) = (1.0 - f) * tv.at(j, e) + f * tv.at(j + 1, e);
    }
    return push(std::move(n));
}

Tape::Id Tape::levinson(Id k) {
    const Tensor& kv = node(k).val;
    const int N = kv.rows(), M = kv.cols();
    Node n;
    n.op = Op::kLevinson;
    n.parent[0] = k;
    n.n_parent = 1;
    n.val = Tensor::zeros({N, M});
    const int level_len = M * (M - 1) / 2;  // a^(1)..a^(M-1) per row
    n.aux.assign(static_cast<size_t>(N) * level_len, 0.0);
    for (int row = 0; row < N; ++row) {
        lpvoc::detail::rc_to_lpc_levels(
            std::span<const double>(&kv.data[static_cast<size_t>(row) * M], M),
            std::span<double>(&n.val.data[static_cast<size_t>(row) * M], M),
            level_len > 0 ? n.aux.data() + static_cast<size_t>(row) * level_len : nullptr);
    }
    return push(std::move(n));
}

Tape::Id Tape::predict(Id a, Id sig, int frame_size) {
    const Tensor& av = node(a).val;
    const Tensor& sv = node(sig).val;
    const int S = sv.rows(), T = sv.cols(), M = av.cols();
    if (frame_size <= 0 || T % frame_size != 0)
        throw std::invalid_argument("predict: T must be a multiple of frame_size");
    const int F = T / frame_size;
    if (av.rows() != S * F) throw std::invalid_argument("predict: coefficient rows != S*F");
    Node n;
    n.op = Op::kPredict;
    n.parent = {a, sig, kNone, kNone, kNone, kNone};
    n.n_parent = 2;
    n.i0 = frame_size;
    n.val = Tensor::zeros({S, T});
    for (int s = 0; s < S; ++s) {
        for (int t = 0; t < T; ++t) {
            const int fr = t / frame_size;
            const double* arow = &av.data[static_cast<size_t>(s * F + fr) * M];
            double p = 0.0;
            const int imax = std::min(M, t);
            for (int i = 1; i <= imax; ++i) p += arow[i - 1] * sv.at(s, t - i);
            n.val.at(s, t) = p;
        }
    }
    return push(std::move(n));
}

Tape::Id Tape::mu_compand_clamped(Id x) {
    Node n;
    n.op = Op::kCompandClamp;
    n.parent[0] = x;
    n.n_parent = 1;
    n.val = node(x).val;
    for (double& v : n.val.data) v = mu_compand(std::clamp(v, -1.0, 1.0));
    return push(std::move(n));
}

Tape::Id Tape::sample_input(Id proj_p, Id proj_s, Id proj_e, Id fproj, Id pmu, Id emu,
                            int t, int frame_size, int frames_per_seq,
                            std::vector<double> s_coords, std::vector<double> e_noise) {
    const Tensor& pp = node(proj_p).val;
    const Tensor& ps = node(proj_s).val;
    const Tensor& pe = node(proj_e).val;
    const Tensor& fp = node(fproj).val;
    const Tensor& pm = node(pmu).val;
    const Tensor& em = node(emu).val;
    const int S = pm.rows(), C = pp.cols();
    if (pp.rows() != kEmbedRows || ps.rows() != kEmbedRows || pe.rows() != kEmbedRows)
        throw std::invalid_argument("sample_input: projected tables must have 257 rows");
    if (ps.cols() != C || pe.cols() != C || fp.cols() != C)
        throw std::invalid_argument("sample_input: column mismatch");
    if (static_cast<int>(s_coords.size()) != S || static_cast<int>(e_noise.size()) != S ||
        em.rows() != S || fp.rows() != S * frames_per_seq)
        throw std::invalid_argument("sample_input: row mismatch");

    Node n;
    n.op = Op::kSampleInput;
    n.parent = {proj_p, proj_s, proj_e, fproj, pmu, emu};
    n.n_parent = 6;
    n.i0 = t;
    n.i1 = frame_size;
    n.i2 = frames_per_seq;
    n.aux.reserve(2 * static_cast<size_t>(S));
    n.aux.insert(n.aux.end(), s_coords.begin(), s_coords.end());
    n.aux.insert(n.aux.end(), e_noise.begin(), e_noise.end());
    n.val = Tensor::zeros({S, C});
    const int fr = t / frame_size;
    for (int s = 0; s < S; ++s) {
        double* out = &n.val.data[static_cast<size_t>(s) * C];
        const auto [jp, fpfrac] = lerp_coord(pm.at(s, t));
        const double xe = t == 0 ? 0.0
                                 : std::clamp(em.at(s, t - 1) + n.aux[S + s], -128.0, 128.0);
        const auto [je, fe] = lerp_coord(xe);
        const auto [js, fs] = lerp_coord(n.aux[s]);
        const double* fprow = &fp.data[static_cast<size_t>(s * frames_per_seq + fr) * C];
        for (int c = 0; c < C; ++c) {
            out[c] = (1.0 - fpfrac) * pp.at(jp, c) + fpfrac * pp.at(jp + 1, c) +
                     (1.0 - fs) * ps.at(js, c) + fs * ps.at(js + 1, c) +
                     (1.0 - fe) * pe.at(je, c) + fe * pe.at(je + 1, c) + fprow[c];
        }
    }
    return push(std::move(n));
}

Tape::Id Tape::ice_terms(Id probs, Id targets, int col) {
    const Tensor& pv = node(probs).val;
    const Tensor& tv = node(targets).val;
    if (pv.cols() != kMuLawClasses) throw std::invalid_argument("ice_terms: probs must have 256 columns");
    const int N = pv.rows();
    if (col == kNone) {
        if (static_cast<int>(tv.data.size()) != N)
            throw std::invalid_argument("ice_terms: target count mismatch");
    } else if (tv.rows() != N || col < 0 || col >= tv.cols()) {
        throw std::invalid_argument("ice_terms: bad target column");
    }
    Node n;
    n.op = Op::kIce;
    n.parent = {probs, targets, kNone, kNone, kNone, kNone};
    n.n_parent = 2;
    n.i0 = col;
    n.val = Tensor::zeros({N});
    for (int i = 0; i < N; ++i) {
        const double tgt = col == kNone ? tv.data[i] : tv.at(i, col);
        const IceCoord cc = ice_coord(tgt);
        const double p = (1.0 - cc.f) * pv.at(i, cc.j) + cc.f * pv.at(i, cc.j + 1);
        if (p < kProbFloor) ++ice_floor_hits_;
        n.val.data[i] = -std::log(std::max(p, kProbFloor));
    }
    return push(std::move(n));
}

Tape::Id Tape::ce_terms(Id probs, std::vector<int32_t> classes) {
    const Tensor& pv = node(probs).val;
    if (pv.cols() != kMuLawClasses) throw std::invalid_argument("ce_terms: probs must have 256 columns");
    const int N = pv.rows();
    if (static_cast<int>(classes.size()) != N)
        throw std::invalid_argument("ce_terms: class count mismatch");
    for (int32_t c : classes)
        if (c < -128 || c > 127) throw std::invalid_argument("ce_terms: class outside [-128, 127]");
    Node n;
    n.op = Op::kCe;
    n.parent[0] = probs;
    n.n_parent = 1;
    n.val = Tensor::zeros({N});
    for (int i = 0; i < N; ++i) {
        const double p = pv.at(i, classes[i] + 128);
        if (p < kProbFloor) ++ice_floor_hits_;
        n.val.data[i] = -std::log(std::max(p, kProbFloor));
    }
    n.iaux = std::move(classes);
    return push(std::move(n));
}

Tape::Id Tape::abs_mean(Id x, double scale) {
    Node n;
    n.op = Op::kAbsMean;
    n.parent[0] = x;
    n.n_parent = 1;
    n.d0 = scale;
    double acc = 0.0;
    for (double v : node(x).val.data) acc += std::fabs(v);
    n.val = Tensor::scalar(scale * acc / static_cast<double>(node(x).val.data.size()));
    return push(std::move(n));
}

Tape::Id Tape::lar_mean(Id k, Tensor ref, double weight) {
    const Tensor& kv = node(k).val;
    check_same_shape(kv, ref, "lar_mean");
    Node n;
    n.op = Op::kLarMean;
    n.parent[0] = k;
    n.n_parent = 1;
    n.d0 = weight;
    const int N = kv.rows();
    double acc = 0.0;
    for (size_t i = 0; i < kv.data.size(); ++i) {
        const double ki = kv.data[i], kr = ref.data[i];
        if (!(std::fabs(ki) < 1.0 && std::fabs(kr) < 1.0))
            throw std::domain_error("lar_mean: |k| >= 1");
        const double d = std::log((1.0 - ki) / (1.0 + ki)) - std::log((1.0 - kr) / (1.0 + kr));
        acc += d * d;
    }
    n.val = Tensor::scalar(weight * acc / static_cast<double>(N));
    n.aux = std::move(ref.data);
    return push(std::move(n));
}

// ---------------------------------------------------------------------------
// backward

void Tape::run_backward(Node& n) {
    const std::vector<double>& g = n.grad;
    switch (n.op) {
        case Op::kLeaf:
        case Op::kConst:
            break;
        case Op::kAffine: {
            const Tensor& xv = node(n.parent[0]).val;
            const Tensor& wv = node(n.parent[1]).val;
            CMatMap gy(g.data(), n.val.rows(), n.val.cols());
            if (double* gx = grad_buf(n.parent[0]))
                MatMap(gx, xv.rows(), xv.cols()).noalias() += gy * cmap(wv).transpose();
            if (double* gw = grad_buf(n.parent[1]))
                MatMap(gw, wv.rows(), wv.cols()).noalias() += cmap(xv).transpose() * gy;
            if (n.n_parent == 3)
                if (double* gb = grad_buf(n.parent[2]))
                    Eigen::Map<Eigen::RowVectorXd>(gb, wv.cols()) += gy.colwise().sum();
            break;
        }
        case Op::kTanh: {
            if (double* gx = grad_buf(n.parent[0]))
                for (size_t i = 0; i < g.size(); ++i)
                    gx[i] += (1.0 - n.val.data[i] * n.val.data[i]) * g[i];
            break;
        }
        case Op::kSigmoid: {
            if (double* gx = grad_buf(n.parent[0]))
                for (size_t i = 0; i < g.size(); ++i)
                    gx[i] += n.val.data[i] * (1.0 - n.val.data[i]) * g[i];
            break;
        }
        case Op::kAdd: {
            for (int p = 0; p < 2; ++p)
                if (double* gp = grad_buf(n.parent[p]))
                    for (size_t i = 0; i < g.size(); ++i) gp[i] += g[i];
            break;
        }
        case Op::kSub: {
            if (double* ga = grad_buf(n.parent[0]))
                for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            if (double* gb = grad_buf(n.parent[1]))
                for (size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
            break;
        }
        case Op::kMul: {
            const Tensor& av = node(n.parent[0]).val;
            const Tensor& bv = node(n.parent[1]).val;
            if (double* ga = grad_buf(n.parent[0]))
                for (size_t i = 0; i < g.size(); ++i) ga[i] += bv.data[i] * g[i];
            if (double* gb = grad_buf(n.parent[1]))
                for (size_t i = 0; i < g.size(); ++i) gb[i] += av.data[i] * g[i];
            break;
        }
        case Op::kScale: {
            if (double* gx = grad_buf(n.parent[0]))
                for (size_t i = 0; i < g.size(); ++i) gx[i] += n.d0 * g[i];
            break;
        }
        case Op::kConcat: {
            int off = 0;
            const int rows = n.val.rows(), cols = n.val.cols();
            for (int p = 0; p < n.n_parent; ++p) {
                const Tensor& pv = node(n.parent[p]).val;
                if (double* gp = grad_buf(n.parent[p])) {
                    for (int r = 0; r < rows; ++r)
                        for (int c = 0; c < pv.cols(); ++c)
                            gp[static_cast<size_t>(r) * pv.cols() + c] +=
                                g[static_cast<size_t>(r) * cols + off + c];
                }
                off += pv.cols();
            }
            break;
        }
        case Op::kSliceCols: {
            const Tensor& xv = node(n.parent[0]).val;
            if (double* gx = grad_buf(n.parent[0])) {
                const int w = n.i1 - n.i0;
                for (int r = 0; r < n.val.rows(); ++r)
                    for (int c = 0; c < w; ++c)
                        gx[static_cast<size_t>(r) * xv.cols() + n.i0 + c] +=
                            g[static_cast<size_t>(r) * w + c];
            }
            break;
        }
        case Op::kGatherRows: {
            const Tensor& xv = node(n.parent[0]).val;
            if (double* gx = grad_buf(n.parent[0])) {
                const int cols = xv.cols();
                for (size_t i = 0; i < n.iaux.size(); ++i)
                    for (int c = 0; c < cols; ++c)
                        gx[static_cast<size_t>(n.iaux[i]) * cols + c] += g[i * cols + c];
            }
            break;
        }
        case Op::kSoftmax: {
            if (double* gx = grad_buf(n.parent[0])) {
                const int cols = n.val.cols();
                for (int r = 0; r < n.val.rows(); ++r) {
                    const double* p = &n.val.data[static_cast<size_t>(r) * cols];
                    const double* gy = &g[static_cast<size_t>(r) * cols];
                    double dot = 0.0;
                    for (int c = 0; c < cols; ++c) dot += gy[c] * p[c];
                    double* gxr = gx + static_cast<size_t>(r) * cols;
                    for (int c = 0; c < cols; ++c) gxr[c] += p[c] * (gy[c] - dot);
                }
            }
            break;
        }
        case Op::kSum: {
            if (double* gx = grad_buf(n.parent[0])) {
                const size_t sz = node(n.parent[0]).val.data.size();
                for (size_t i = 0; i < sz; ++i) gx[i] += g[0];
            }
            break;
        }
        case Op::kMean: {
            if (double* gx = grad_buf(n.parent[0])) {
                const size_t sz = node(n.parent[0]).val.data.size();
                const double s = g[0] / static_cast<double>(sz);
                for (size_t i = 0; i < sz; ++i) gx[i] += s;
            }
            break;
        }
        case Op::kClamp: {
            const Tensor& xv = node(n.parent[0]).val;
            if (double* gx = grad_buf(n.parent[0]))
                for (size_t i = 0; i < g.size(); ++i)
                    if (xv.data[i] > n.d0 && xv.data[i] < n.d1) gx[i] += g[i];
            break;
        }
        case Op::kGruCore: {
            const Tensor& hv = node(n.parent[1]).val;
            const int N = n.val.rows(), H = n.val.cols();
            CMatMap h(hv.data.data(), N, H);
            CMatMap z(n.aux.data(), N, H);
            CMatMap r(n.aux.data() + static_cast<size_t>(N) * H, N, H);
            CMatMap c(n.aux.data() + static_cast<size_t>(2) * N * H, N, H);
            CMatMap gy(g.data(), N, H);
            const Tensor& uzr = node(n.parent[2]).val;
            const Tensor& uc = node(n.parent[3]).val;

            Mat dz = gy.array() * (c.array() - h.array());
            Mat dc = gy.array() * z.array();
            Mat dh = gy.array() * (1.0 - z.array());
            Mat dpc = dc.array() * (1.0 - c.array() * c.array());
            Mat drh = dpc * cmap(uc).transpose();
            Mat dr = drh.array() * h.array();
            dh.array() += drh.array() * r.array();
            Mat dpz = dz.array() * z.array() * (1.0 - z.array());
            Mat dpr = dr.array() * r.array() * (1.0 - r.array());

            if (double* gx = grad_buf(n.parent[0])) {
                MatMap gxm(gx, N, 3 * H);
                gxm.leftCols(H) += dpz;
                gxm.middleCols(H, H) += dpr;
                gxm.rightCols(H) += dpc;
            }
            if (double* guzr = grad_buf(n.parent[2])) {
                MatMap m(guzr, H, 2 * H);
                m.leftCols(H).noalias() += h.transpose() * dpz;
                m.rightCols(H).noalias() += h.transpose() * dpr;
            }
            if (double* guc = grad_buf(n.parent[3])) {
                Mat rh = r.array() * h.array();
                MatMap(guc, H, H).noalias() += rh.transpose() * dpc;
            }
            if (double* gh = grad_buf(n.parent[1])) {
                MatMap m(gh, N, H);
                m += dh;
                m.noalias() += dpz * cmap(uzr).leftCols(H).transpose();
                m.noalias() += dpr * cmap(uzr).rightCols(H).transpose();
            }
            break;
        }
        case Op::kEmbedInterp: {
            const Tensor& tv = node(n.parent[0]).val;
            const Tensor& xv = node(n.parent[1]).val;
            const int E = tv.cols();
            double* gt = grad_buf(n.parent[0]);
            double* gx = grad_buf(n.parent[1]);
            for (size_t i = 0; i < xv.data.size(); ++i) {
                const auto [j, f] = lerp_coord(xv.data[i]);
                const double* gr = &g[i * E];
                if (gt) {
                    double* g0 = gt + static_cast<size_t>(j) * E;
                    double* g1 = gt + static_cast<size_t>(j + 1) * E;
                    for (int e = 0; e < E; ++e) {
                        g0[e] += (1.0 - f) * gr[e];
                        g1[e] += f * gr[e];
                    }
                }
                if (gx) {
                    double acc = 0.0;
                    for (int e = 0; e < E; ++e)
                        acc += gr[e] * (tv.at(j + 1, e) - tv.at(j, e));
                    gx[i] += acc;
                }
            }
            break;
        }
        case Op::kLevinson: {
            const Tensor& kv = node(n.parent[0]).val;
            const int N = kv.rows(), M = kv.cols();
            double* gk = grad_buf(n.parent[0]);
            if (!gk) break;
            const int level_len = M * (M - 1) / 2;
            std::vector<double> gcur(M), gnext(M);
            for (int row = 0; row < N; ++row) {
                const double* levels = n.aux.data() + static_cast<size_t>(row) * level_len;
                for (int j = 0; j < M; ++j) gcur[j] = g[static_cast<size_t>(row) * M + j];
                for (int i = M; i >= 1; --i) {
                    const double ki = kv.at(row, i - 1);
                    const double* prev = levels + (i - 1) * (i - 2) / 2;  // a^(i-1), valid for i >= 2
                    double gki = gcur[i - 1];
                    std::fill(gnext.begin(), gnext.begin() + std::max(i - 1, 0), 0.0);
                    for (int j = 1; j < i; ++j) {
                        gnext[j - 1] += gcur[j - 1];
                        gnext[i - j - 1] -= ki * gcur[j - 1];
                        gki -= prev[i - j - 1] * gcur[j - 1];
                    }
                    gk[static_cast<size_t>(row) * M + (i - 1)] += gki;
                    std::swap(gcur, gnext);
                }
            }
            break;
        }
        case Op::kPredict: {
            const Tensor& av = node(n.parent[0]).val;
            const Tensor& sv = node(n.parent[1]).val;
            const int S = sv.rows(), T = sv.cols(), M = av.cols();
            const int fs = n.i0, F = T / fs;
            double* ga = grad_buf(n.parent[0]);
            double* gs = grad_buf(n.parent[1]);
            for (int s = 0; s < S; ++s)
                for (int t = 0; t < T; ++t) {
                    const double gy = g[static_cast<size_t>(s) * T + t];
                    if (gy == 0.0) continue;
                    const int fr = t / fs;
                    const int imax = std::min(M, t);
                    if (ga) {
                        double* gar = ga + static_cast<size_t>(s * F + fr) * M;
                        for (int i = 1; i <= imax; ++i) gar[i - 1] += gy * sv.at(s, t - i);
                    }
                    if (gs) {
                        const double* arow = &av.data[static_cast<size_t>(s * F + fr) * M];
                        for (int i = 1; i <= imax; ++i)
                            gs[static_cast<size_t>(s) * T + (t - i)] += gy * arow[i - 1];
                    }
                }
            break;
        }
        case Op::kCompandClamp: {
            const Tensor& xv = node(n.parent[0]).val;
            if (double* gx = grad_buf(n.parent[0]))
                for (size_t i = 0; i < g.size(); ++i) {
                    const double x = xv.data[i];
                    if (std::fabs(x) <= 1.0) gx[i] += mu_compand_derivative(x) * g[i];
                }
            break;
        }
        case Op::kSampleInput: {
            const Tensor& pp = node(n.parent[0]).val;
            const Tensor& pe = node(n.parent[2]).val;
            const Tensor& pm = node(n.parent[4]).val;
            const Tensor& em = node(n.parent[5]).val;
            const int S = n.val.rows(), C = n.val.cols();
            const int t = n.i0, fr = n.i0 / n.i1;
            double* gpp = grad_buf(n.parent[0]);
            double* gps = grad_buf(n.parent[1]);
            double* gpe = grad_buf(n.parent[2]);
            double* gfp = grad_buf(n.parent[3]);
            double* gpm = grad_buf(n.parent[4]);
            double* gem = grad_buf(n.parent[5]);
            for (int s = 0; s < S; ++s) {
                const double* gr = &g[static_cast<size_t>(s) * C];
                const auto [jp, fp] = lerp_coord(pm.at(s, t));
                const double e_raw = t == 0 ? 0.0 : em.at(s, t - 1) + n.aux[S + s];
                const bool e_inside = e_raw > -128.0 && e_raw < 128.0;
                const auto [je, fe] = lerp_coord(std::clamp(e_raw, -128.0, 128.0));
                const auto [js, fs] = lerp_coord(n.aux[s]);
                auto scatter = [&](double* gtab, int j, double f) {
                    if (!gtab) return;
                    double* g0 = gtab + static_cast<size_t>(j) * C;
                    double* g1 = gtab + static_cast<size_t>(j + 1) * C;
                    for (int c = 0; c < C; ++c) {
                        g0[c] += (1.0 - f) * gr[c];
                        g1[c] += f * gr[c];
                    }
                };
                scatter(gpp, jp, fp);
                scatter(gps, js, fs);
                scatter(gpe, je, fe);
                if (gpm) {
                    double acc = 0.0;
                    for (int c = 0; c < C; ++c) acc += gr[c] * (pp.at(jp + 1, c) - pp.at(jp, c));
                    gpm[static_cast<size_t>(s) * pm.cols() + t] += acc;
                }
                if (gem && t > 0 && e_inside) {
                    double acc = 0.0;
                    for (int c = 0; c < C; ++c) acc += gr[c] * (pe.at(je + 1, c) - pe.at(je, c));
                    gem[static_cast<size_t>(s) * em.cols() + (t - 1)] += acc;
                }
                if (gfp) {
                    double* dst = gfp + static_cast<size_t>(s * n.i2 + fr) * C;
                    for (int c = 0; c < C; ++c) dst[c] += gr[c];
                }
            }
            break;
        }
        case Op::kIce: {
            const Tensor& pv = node(n.parent[0]).val;
            const Tensor& tv = node(n.parent[1]).val;
            const int col = n.i0;
            double* gp = grad_buf(n.parent[0]);
            double* gt = grad_buf(n.parent[1]);
            for (int i = 0; i < n.val.rows(); ++i) {
                const double tgt = col == kNone ? tv.data[i] : tv.at(i, col);
                const IceCoord cc = ice_coord(tgt);
                const double p0 = pv.at(i, cc.j), p1 = pv.at(i, cc.j + 1);
                const double p = (1.0 - cc.f) * p0 + cc.f * p1;
                if (p < kProbFloor) continue;  // clamped log; locally constant
                const double gi = g[i];
                if (gp) {
                    gp[static_cast<size_t>(i) * kMuLawClasses + cc.j] -= (1.0 - cc.f) / p * gi;
                    gp[static_cast<size_t>(i) * kMuLawClasses + cc.j + 1] -= cc.f / p * gi;
                }
                if (gt && cc.target_grad) {
                    const double d = -(p1 - p0) / p * gi;
                    if (col == kNone)
                        gt[i] += d;
                    else
                        gt[static_cast<size_t>(i) * tv.cols() + col] += d;
                }
            }
            break;
        }
        case Op::kCe: {
            const Tensor& pv = node(n.parent[0]).val;
            if (double* gp = grad_buf(n.parent[0]))
                for (int i = 0; i < n.val.rows(); ++i) {
                    const int idx = n.iaux[i] + 128;
                    const double p = pv.at(i, idx);
                    if (p < kProbFloor) continue;
                    gp[static_cast<size_t>(i) * kMuLawClasses + idx] -= g[i] / p;
                }
            break;
        }
        case Op::kAbsMean: {
            const Tensor& xv = node(n.parent[0]).val;
            if (double* gx = grad_buf(n.parent[0])) {
                const double s = n.d0 * g[0] / static_cast<double>(xv.data.size());
                for (size_t i = 0; i < xv.data.size(); ++i) {
                    if (xv.data[i] > 0.0)
                        gx[i] += s;
                    else if (xv.data[i] < 0.0)
                        gx[i] -= s;
                }
            }
            break;
        }
        case Op::kLarMean: {
            const Tensor& kv = node(n.parent[0]).val;
            if (double* gk = grad_buf(n.parent[0])) {
                const double s = n.d0 * 2.0 * g[0] / static_cast<double>(kv.rows());
                for (size_t i = 0; i < kv.data.size(); ++i) {
                    const double ki = kv.data[i], kr = n.aux[i];
                    const double d =
                        std::log((1.0 - ki) / (1.0 + ki)) - std::log((1.0 - kr) / (1.0 + kr));
                    gk[i] += s * d * (-2.0 / (1.0 - ki * ki));
                }
            }
            break;
        }
    }
}

void Tape::release(Node& n) {
    std::vector<double>().swap(n.val.data);
    std::vector<double>().swap(n.grad);
    std::vector<double>().swap(n.aux);
    std::vector<int32_t>().swap(n.iaux);
}

void Tape::backward(Id root, double seed) {
    if (ran_backward_) throw std::logic_error("Tape::backward: tape already consumed");
    ran_backward_ = true;
    Node& rn = node(root);
    if (rn.val.size() != 1) throw std::invalid_argument("backward: root must be scalar");
    rn.grad.assign(1, seed);
    for (Id i = root; i >= 0; --i) {
        Node& n = (*nodes_)[static_cast<size_t>(i)];
        if (!n.grad.empty()) run_backward(n);
        if (!retain_ && n.op != Op::kLeaf && n.op != Op::kConst) release(n);
    }
}

std::span<const double> embed_round(const Tensor& table, double x) {
    if (table.rows() != kEmbedRows)
        throw std::invalid_argument("embed_round: table must have 257 rows");
    const int idx = embed_round_index(x);
    return {&table.data[static_cast<size_t>(idx) * table.cols()],
            static_cast<size_t>(table.cols())};
}

int embed_round_index(double x) {
    if (!(x >= -kEmbedOffset && x <= kEmbedOffset))
        throw std::domain_error("embed_round: coordinate outside [-128, 128]");
    return static_cast<int>(std::round(x)) + kEmbedOffset;  // ties away from zero
}

GradCheckReport grad_check(
    const std::function<Tape::Id(Tape&, const std::vector<Tape::Id>&)>& build,
    const std::vector<Tensor>& point, double h, double tolerance) {
    // Analytic gradients.
    std::vector<std::vector<double>> bp;
    {
        Tape tape;
        std::vector<Tape::Id> ids;
        ids.reserve(point.size());
        for (const Tensor& t : point) ids.push_back(tape.leaf(t));
        const Tape::Id root = build(tape, ids);
        if (tape.value(root).size() != 1)
            throw std::invalid_argument("grad_check: function must be scalar-valued");
        tape.backward(root);
        for (Tape::Id id : ids) {
            auto g = tape.grad(id);
            bp.emplace_back(g.begin(), g.end());
            if (bp.back().empty()) bp.back().assign(tape.value(id).data.size(), 0.0);
        }
    }

    auto eval = [&](const std::vector<Tensor>& at) {
        Tape tape;
        std::vector<Tape::Id> ids;
        ids.reserve(at.size());
        for (const Tensor& t : at) ids.push_back(tape.leaf(t));
        return tape.value(build(tape, ids)).data[0];
    };

    GradCheckReport report;
    std::vector<Tensor> work = point;
    auto fd_at = [&](size_t i, size_t c, double step) {
        const double orig = work[i].data[c];
        work[i].data[c] = orig + step;
        const double fp = eval(work);
        work[i].data[c] = orig - step;
        const double fm = eval(work);
        work[i].data[c] = orig;
        return (fp - fm) / (2.0 * step);
    };
    auto rel_error = [&](double g_fd, double g_bp) {
        // Two sub-floor magnitudes are matching zeros; their difference is
        // below central-difference resolution for any step.
        if (std::fabs(g_fd) <= 1e-8 && std::fabs(g_bp) <= 1e-8) return 0.0;
        return std::fabs(g_fd - g_bp) / std::max({std::fabs(g_fd), std::fabs(g_bp), 1e-8});
    };
    for (size_t i = 0; i < point.size(); ++i) {
        for (size_t c = 0; c < point[i].data.size(); ++c) {
            const double g_bp = bp[i][c];
            double rel = rel_error(fd_at(i, c, h), g_bp);
            for (double scale : {10.0, 50.0, 500.0}) {
                if (rel <= tolerance) break;
                const double coarse = fd_at(i, c, scale * h);
                rel = std::min(rel, rel_error(coarse, g_bp));
                if (rel > tolerance) {
                    // Richardson step: cancels the h^2 truncation term, which
                    // otherwise leaves no usable step size for components much
                    // smaller than the loss scale.
                    const double richardson =
                        (4.0 * coarse - fd_at(i, c, 2.0 * scale * h)) / 3.0;
                    rel = std::min(rel, rel_error(richardson, g_bp));
                }
            }
            if (rel > report.max_rel_error) report.max_rel_error = rel;
            if (rel > tolerance) {
                if (getenv("LPVOC_GRADCHECK_DEBUG"))
                    std::fprintf(stderr, "GCDBG in=%zu c=%zu bp=%.9e fd(h)=%.9e fd(10h)=%.9e fd(50h)=%.9e rel=%.3e\n",
                                 i, c, g_bp, fd_at(i, c, h), fd_at(i, c, 10*h), fd_at(i, c, 50*h), rel);
                report.failing_indices.emplace_back(static_cast<int>(i),
                                                    static_cast<int64_t>(c));
            }
        }
    }
    report.ok = report.failing_indices.empty();
    return report;
}

}  // namespace lpvoc::ad
