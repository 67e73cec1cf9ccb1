// SPDX-License-Identifier: Apache-2.0
//
// csifb: compressed CSI feedback simulation for correlated massive MIMO
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#ifndef CSIFB_QUANTIZATION_HPP
#define CSIFB_QUANTIZATION_HPP

#include <algorithm>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "bases.hpp" // binary stream helpers
#include "common.hpp"

namespace csifb
{

enum class CodebookKind : std::uint8_t
{
    Lbg = 0,
    Rvq = 1
};

// Finite set of complex code vectors, one per column. LBG codebooks carry
// the per-phase MQE trajectory recorded during training.
struct Codebook
{
    arma::cx_mat vectors; // dim x n_codewords
    arma::uword bits = 0;
    CodebookKind kind = CodebookKind::Lbg;
    std::uint64_t seed = 0;  // RVQ
    double epsilon = 0.0;    // LBG splitting constant
    std::vector<std::vector<double>> mqe_history; // one list per iterative phase

    arma::uword dim() const { return vectors.n_rows; }
    arma::uword n_codewords() const { return vectors.n_cols; }
};

struct QuantizedFeedback
{
    arma::uword index = 0;
    std::uint64_t codebook_id = 0;
};

namespace detail
{
    // Index of the nearest codeword for every column of `batch`, Euclidean
    // distance, ties to the lowest index. Distances are computed via
    // ||v||^2 + ||c||^2 - 2 Re<c, v> with one matrix product per call.
    inline arma::uvec nearest_codewords(const arma::cx_mat &codewords,
                                        const arma::cx_mat &batch,
                                        arma::vec *min_dist = nullptr)
    {
        const arma::vec c2 = arma::sum(arma::square(arma::abs(codewords)), 0).t();
        const arma::vec v2 = arma::sum(arma::square(arma::abs(batch)), 0).t();
        const arma::mat cross = arma::real(codewords.t() * batch); // N_C x n
        arma::uvec idx(batch.n_cols);
        if (min_dist)
            min_dist->set_size(batch.n_cols);
        for (arma::uword j = 0; j < batch.n_cols; ++j)
        {
            const arma::vec d2 = c2 - 2.0 * cross.col(j) + v2(j);
            idx(j) = d2.index_min(); // first occurrence wins ties
            if (min_dist)
                (*min_dist)(j) = std::sqrt(std::max(0.0, d2(idx(j))));
        }
        return idx;
    }
} // namespace detail

inline arma::uword quantize_index(const arma::cx_vec &v, const Codebook &cb)
{
    if (v.n_elem != cb.dim())
        throw std::invalid_argument("quantize: dimension mismatch");
    return detail::nearest_codewords(cb.vectors, arma::cx_mat(v))(0);
}

inline QuantizedFeedback quantize(const arma::cx_vec &v, const Codebook &cb,
                                  std::uint64_t codebook_id = 0)
{
    return {quantize_index(v, cb), codebook_id};
}

inline arma::cx_vec dequantize(const Codebook &cb, arma::uword index)
{
    if (index >= cb.n_codewords())
        throw std::invalid_argument("dequantize: index out of range");
    return cb.vectors.col(index);
}

// Mean quantization error: average Euclidean distance from each vector to
// its nearest codeword.
inline double mqe(const Codebook &cb, const arma::cx_mat &eval_set)
{
    if (eval_set.n_cols == 0)
        throw std::invalid_argument("mqe: empty eval set");
    if (eval_set.n_rows != cb.dim())
        throw std::invalid_argument("mqe: dimension mismatch");
    arma::vec dist;
    detail::nearest_codewords(cb.vectors, eval_set, &dist);
    return arma::mean(dist);
}

struct LbgOptions
{
    double epsilon = 0.01;            // splitting constant
    double rel_improvement_stop = 1e-4;
    arma::uword max_iterations_per_phase = 100;
};

// LBG codebook training. Starts from the training-set centroid, alternates
// a splitting phase that doubles the codebook via (1 +/- eps) c_n with an
// iterative phase of Voronoi partition + centroid updates, until the
// codebook holds 2^bits vectors. Empty cells take (1 + eps) times the most
// populous cell's centroid. An update that would raise the recorded MQE is
// rolled back and ends the phase, so each phase history is non-increasing.
inline Codebook train_lbg(const arma::cx_mat &training, arma::uword bits,
                          const LbgOptions &opt = {})
{
    if (training.n_cols == 0)
        throw std::invalid_argument("train_lbg: empty training set");
    if (bits < 1)
        throw std::invalid_argument("train_lbg: bits must be >= 1");
    if (opt.epsilon <= 0.0 || opt.epsilon >= 1.0)
        throw std::invalid_argument("train_lbg: epsilon must be in (0, 1)");

    const arma::uword target = arma::uword(1) << bits;
    const double t_inv = 1.0 / static_cast<double>(training.n_cols);

    Codebook cb;
    cb.bits = bits;
    cb.kind = CodebookKind::Lbg;
    cb.epsilon = opt.epsilon;
    cb.vectors = arma::sum(training, 1) * t_inv; // single centroid

    while (cb.n_codewords() < target)
    {
        // splitting phase: c_n -> (1 +/- eps) c_n. A codeword at the origin
        // would split into two identical children and stall, so that case
        // splits additively along the direction of its farthest cell member.
        const arma::uvec pre_assign = detail::nearest_codewords(cb.vectors, training);
        const arma::uword sz = cb.n_codewords();
        arma::cx_mat split(cb.dim(), 2 * sz);
        for (arma::uword i = 0; i < sz; ++i)
        {
            const arma::cx_vec c = cb.vectors.col(i);
            double r_max = 0.0;
            arma::uword far_idx = training.n_cols;
            for (arma::uword j = 0; j < training.n_cols; ++j)
            {
                if (pre_assign(j) != i)
                    continue;
                const double d = arma::norm(arma::cx_vec(training.col(j) - c));
                if (d > r_max)
                {
                    r_max = d;
                    far_idx = j;
                }
            }
            const double child_gap = 2.0 * opt.epsilon * arma::norm(c);
            if (child_gap <= 1e-12 * r_max && far_idx < training.n_cols)
            {
                const arma::cx_vec dir =
                    (training.col(far_idx) - c) / std::max(r_max, 1e-300);
                split.col(i) = c + opt.epsilon * r_max * dir;
                split.col(sz + i) = c - opt.epsilon * r_max * dir;
            }
            else
            {
                split.col(i) = (1.0 + opt.epsilon) * c;
                split.col(sz + i) = (1.0 - opt.epsilon) * c;
            }
        }
        cb.vectors = std::move(split);

        // iterative phase
        std::vector<double> history;
        double prev = std::numeric_limits<double>::infinity();
        for (arma::uword it = 0; it < opt.max_iterations_per_phase; ++it)
        {
            const arma::uvec assign = detail::nearest_codewords(cb.vectors, training);

            arma::cx_mat centroids(cb.dim(), cb.n_codewords(), arma::fill::zeros);
            arma::uvec counts(cb.n_codewords(), arma::fill::zeros);
            for (arma::uword j = 0; j < training.n_cols; ++j)
            {
                centroids.col(assign(j)) += training.col(j);
                ++counts(assign(j));
            }
            for (arma::uword i = 0; i < cb.n_codewords(); ++i)
                if (counts(i) > 0)
                    centroids.col(i) /= static_cast<double>(counts(i));

            // empty-cell repair: hand each dead codeword a split of the next
            // most populous cell's centroid, donors untouched
            const arma::uvec by_count = arma::sort_index(counts, "descend");
            arma::uword donor_pos = 0;
            for (arma::uword i = 0; i < cb.n_codewords(); ++i)
            {
                if (counts(i) > 0)
                    continue;
                while (donor_pos < by_count.n_elem && counts(by_count(donor_pos)) == 0)
                    ++donor_pos;
                const arma::uword donor = by_count(donor_pos % by_count.n_elem);
                centroids.col(i) = (1.0 + opt.epsilon) * centroids.col(donor);
                donor_pos = (donor_pos + 1) % by_count.n_elem;
            }

            arma::vec dist;
            detail::nearest_codewords(centroids, training, &dist);
            const double q = arma::mean(dist);
            if (q > prev * (1.0 + 1e-12))
                break; // roll back: keep the previous codebook
            cb.vectors = std::move(centroids);
            history.push_back(q);
            if (std::isfinite(prev) &&
                (prev <= 0.0 || (prev - q) / prev < opt.rel_improvement_stop))
            {
                prev = q;
                break;
            }
            prev = q;
        }
        cb.mqe_history.push_back(std::move(history));
    }
    return cb;
}

// Random vector quantization codebook: 2^bits i.i.d. circularly symmetric
// complex Gaussian codewords, scaled so the expected squared norm matches
// the calibration target (the mean squared norm of the vectors to be
// quantized). Regenerated per channel realization by the harness.
inline Codebook rvq_codebook(arma::uword dim, arma::uword bits,
                             double mean_square_norm, std::uint64_t seed)
{
    if (bits < 1)
        throw std::invalid_argument("rvq_codebook: bits must be >= 1");
    if (dim < 1 || mean_square_norm <= 0.0)
        throw std::invalid_argument("rvq_codebook: bad dimension or calibration");
    RandomStream rng(seed);
    Codebook cb;
    cb.bits = bits;
    cb.kind = CodebookKind::Rvq;
    cb.seed = seed;
    cb.vectors = rng.cgaussian_mat(dim, arma::uword(1) << bits) *
                 std::sqrt(mean_square_norm / static_cast<double>(dim));
    return cb;
}

// ---------- serialization ----------------------------------------------------

inline constexpr char kCodebookMagic[8] = {'C', 'S', 'F', 'B', 'C', 'B', 'K', '1'};

inline void save_codebook(std::ostream &os, const Codebook &cb)
{
    using namespace detail;
    write_u32(os, static_cast<std::uint32_t>(cb.dim()));
    write_u32(os, static_cast<std::uint32_t>(cb.bits));
    os.put(static_cast<char>(cb.kind));
    write_u64(os, cb.seed);
    write_f64(os, cb.epsilon);
    write_u32(os, static_cast<std::uint32_t>(cb.mqe_history.size()));
    for (const auto &phase : cb.mqe_history)
    {
        write_u32(os, static_cast<std::uint32_t>(phase.size()));
        for (double q : phase)
            write_f64(os, q);
    }
    // codeword payload, vector-major (each codeword contiguous)
    for (arma::uword i = 0; i < cb.n_codewords(); ++i)
        for (arma::uword d = 0; d < cb.dim(); ++d)
        {
            write_f64(os, cb.vectors(d, i).real());
            write_f64(os, cb.vectors(d, i).imag());
        }
}

inline Codebook load_codebook(std::istream &is)
{
    using namespace detail;
    Codebook cb;
    const arma::uword dim = read_u32(is);
    cb.bits = read_u32(is);
    cb.kind = static_cast<CodebookKind>(is.get());
    cb.seed = read_u64(is);
    cb.epsilon = read_f64(is);
    const std::uint32_t n_phases = read_u32(is);
    cb.mqe_history.resize(n_phases);
    for (auto &phase : cb.mqe_history)
    {
        const std::uint32_t len = read_u32(is);
        phase.resize(len);
        for (auto &q : phase)
            q = read_f64(is);
    }
    cb.vectors.set_size(dim, arma::uword(1) << cb.bits);
    for (arma::uword i = 0; i < cb.n_codewords(); ++i)
        for (arma::uword d = 0; d < dim; ++d)
        {
            const double re = read_f64(is);
            const double im = read_f64(is);
            cb.vectors(d, i) = {re, im};
        }
    if (!is)
        throw std::runtime_error("load_codebook: truncated stream");
    return cb;
}

inline void save_codebook_set(const std::string &path, const std::vector<Codebook> &cbs)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw std::runtime_error("save_codebook_set: cannot open " + path);
    os.write(kCodebookMagic, sizeof kCodebookMagic);
    detail::write_u32(os, static_cast<std::uint32_t>(cbs.size()));
    for (const auto &cb : cbs)
        save_codebook(os, cb);
    if (!os)
        throw std::runtime_error("save_codebook_set: write failed for " + path);
}

inline std::vector<Codebook> load_codebook_set(const std::string &path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw std::runtime_error("load_codebook_set: cannot open " + path);
    char magic[8];
    is.read(magic, sizeof magic);
    if (!is || std::memcmp(magic, kCodebookMagic, sizeof magic) != 0)
        throw std::runtime_error("load_codebook_set: bad magic in " + path);
    const std::uint32_t count = detail::read_u32(is);
    std::vector<Codebook> out;
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i)
        out.push_back(load_codebook(is));
    return out;
}

} // namespace csifb

#endif
