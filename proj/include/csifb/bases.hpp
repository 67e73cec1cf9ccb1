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

#ifndef CSIFB_BASES_HPP
#define CSIFB_BASES_HPP

#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>

#include "channel_model.hpp"
#include "common.hpp"

namespace csifb
{

enum class BasisKind : std::uint8_t
{
    Dct2d = 0,
    Klt = 1
};

inline const char *to_string(BasisKind k)
{
    return k == BasisKind::Dct2d ? "dct" : "klt";
}

// Orthonormal sparsifying basis. Columns are the transform atoms, already
// permuted so that dominant coefficients come first: zig-zag order for the
// 2D-DCT, descending eigenvalue order for the KLT. "First K coefficients"
// therefore means "K dominant coefficients" for either kind.
struct Basis
{
    arma::cx_mat matrix;  // N x N unitary
    BasisKind kind = BasisKind::Dct2d;
    arma::uword grid_rows = 0; // DCT2D coefficient grid, n_r
    arma::uword grid_cols = 0; // DCT2D coefficient grid, n_t
    arma::vec eigenvalues;     // KLT only, descending

    arma::uword dim() const { return matrix.n_rows; }
};

// ---------- DCT -------------------------------------------------------------

// Orthonormal DCT-II matrix with atoms as columns: entry (m, k) equals
// c_k cos(pi (2m+1) k / (2n)), c_0 = sqrt(1/n), c_k = sqrt(2/n) otherwise.
// Column 0 is the DC atom, so C^T x is the forward transform.
inline arma::mat dct_matrix(arma::uword n)
{
    if (n < 1)
        throw std::invalid_argument("dct_matrix: n must be >= 1");
    arma::mat c(n, n);
    const double c0 = std::sqrt(1.0 / static_cast<double>(n));
    const double ck = std::sqrt(2.0 / static_cast<double>(n));
    for (arma::uword k = 0; k < n; ++k)
    {
        const double amp = k == 0 ? c0 : ck;
        for (arma::uword m = 0; m < n; ++m)
            c(m, k) = amp * std::cos(arma::datum::pi * (2.0 * m + 1.0) * k /
                                     (2.0 * static_cast<double>(n)));
    }
    return c;
}

// JPEG-style zig-zag traversal of an n_rows x n_cols grid starting at (0,0).
// Returns the column-major linear index of each visited cell, consistent
// with vec(.) of the coefficient matrix.
inline arma::uvec zigzag_order(arma::uword n_rows, arma::uword n_cols)
{
    arma::uvec order(n_rows * n_cols);
    arma::uword r = 0, c = 0;
    bool up = true; // moving towards the top-right
    for (arma::uword i = 0; i < order.n_elem; ++i)
    {
        order(i) = c * n_rows + r;
        if (up)
        {
            if (c + 1 == n_cols)
            {
                ++r;
                up = false;
            }
            else if (r == 0)
            {
                ++c;
                up = false;
            }
            else
            {
                --r;
                ++c;
            }
        }
        else
        {
            if (r + 1 == n_rows)
            {
                ++c;
                up = true;
            }
            else if (c == 0)
            {
                ++r;
                up = true;
            }
            else
            {
                ++r;
                --c;
            }
        }
    }
    return order;
}

// 2D-DCT basis C_{n_t} (x) C_{n_r} with columns permuted into zig-zag order
// over the n_r x n_t coefficient grid.
inline Basis dct2d_basis(arma::uword n_r, arma::uword n_t)
{
    const arma::mat kron_real = arma::kron(dct_matrix(n_t), dct_matrix(n_r));
    const arma::uvec order = zigzag_order(n_r, n_t);
    Basis b;
    b.kind = BasisKind::Dct2d;
    b.grid_rows = n_r;
    b.grid_cols = n_t;
    b.matrix = arma::cx_mat(kron_real.cols(order), arma::mat(n_r * n_t, n_r * n_t, arma::fill::zeros));
    return b;
}

// ---------- KLT -------------------------------------------------------------

// Eigenbasis of the CSI covariance, columns sorted by descending eigenvalue.
// Each column's phase is fixed by making its largest-magnitude entry real
// and positive, so the output is deterministic up to eigenvalue ties.
inline Basis klt_basis(const arma::cx_mat &covariance)
{
    if (!is_hermitian(covariance, 1e-8))
        throw std::invalid_argument("klt_basis: covariance is not Hermitian");
    arma::vec eval;
    arma::cx_mat evec;
    if (!arma::eig_sym(eval, evec, hermitian_part(covariance)))
        throw std::runtime_error("klt_basis: eigendecomposition failed");

    Basis b;
    b.kind = BasisKind::Klt;
    b.eigenvalues.set_size(eval.n_elem);
    b.matrix.set_size(evec.n_rows, evec.n_cols);
    const arma::uword n = eval.n_elem;
    for (arma::uword i = 0; i < n; ++i)
    {
        b.eigenvalues(i) = eval(n - 1 - i); // descending
        arma::cx_vec col = evec.col(n - 1 - i);
        const arma::uword peak = arma::abs(col).index_max();
        const std::complex<double> ph = col(peak);
        if (std::abs(ph) > 0.0)
            col *= std::conj(ph) / std::abs(ph);
        b.matrix.col(i) = col;
    }
    return b;
}

inline Basis klt_basis(const CovarianceEstimate &c)
{
    return klt_basis(c.matrix);
}

// ---------- transforms -------------------------------------------------------

// Forward transform s = Psi* h (conjugate transpose; plain transpose for the
// real DCT basis).
inline arma::cx_vec sparsify(const Basis &basis, const arma::cx_vec &h)
{
    if (h.n_elem != basis.dim())
        throw std::invalid_argument("sparsify: dimension mismatch");
    return basis.matrix.t() * h;
}

// Inverse transform h = Psi s.
inline arma::cx_vec densify(const Basis &basis, const arma::cx_vec &s)
{
    if (s.n_elem != basis.dim())
        throw std::invalid_argument("densify: dimension mismatch");
    return basis.matrix * s;
}

// ---------- serialization ----------------------------------------------------

namespace detail
{
    inline void write_u32(std::ostream &os, std::uint32_t v)
    {
        os.write(reinterpret_cast<const char *>(&v), sizeof v);
    }
    inline void write_u64(std::ostream &os, std::uint64_t v)
    {
        os.write(reinterpret_cast<const char *>(&v), sizeof v);
    }
    inline void write_f64(std::ostream &os, double v)
    {
        os.write(reinterpret_cast<const char *>(&v), sizeof v);
    }
    inline std::uint32_t read_u32(std::istream &is)
    {
        std::uint32_t v = 0;
        is.read(reinterpret_cast<char *>(&v), sizeof v);
        return v;
    }
    inline std::uint64_t read_u64(std::istream &is)
    {
        std::uint64_t v = 0;
        is.read(reinterpret_cast<char *>(&v), sizeof v);
        return v;
    }
    inline double read_f64(std::istream &is)
    {
        double v = 0;
        is.read(reinterpret_cast<char *>(&v), sizeof v);
        return v;
    }
} // namespace detail

inline constexpr char kBasisMagic[8] = {'C', 'S', 'F', 'B', 'B', 'A', 'S', '1'};

inline void save_basis(std::ostream &os, const Basis &b)
{
    using namespace detail;
    write_u32(os, static_cast<std::uint32_t>(b.dim()));
    os.put(static_cast<char>(b.kind));
    write_u32(os, static_cast<std::uint32_t>(b.grid_rows));
    write_u32(os, static_cast<std::uint32_t>(b.grid_cols));
    write_u32(os, static_cast<std::uint32_t>(b.eigenvalues.n_elem));
    for (arma::uword i = 0; i < b.eigenvalues.n_elem; ++i)
        write_f64(os, b.eigenvalues(i));
    // matrix payload: row-major complex pairs
    for (arma::uword r = 0; r < b.matrix.n_rows; ++r)
        for (arma::uword c = 0; c < b.matrix.n_cols; ++c)
        {
            write_f64(os, b.matrix(r, c).real());
            write_f64(os, b.matrix(r, c).imag());
        }
}

inline Basis load_basis(std::istream &is)
{
    using namespace detail;
    Basis b;
    const arma::uword n = read_u32(is);
    b.kind = static_cast<BasisKind>(is.get());
    b.grid_rows = read_u32(is);
    b.grid_cols = read_u32(is);
    const arma::uword n_eig = read_u32(is);
    b.eigenvalues.set_size(n_eig);
    for (arma::uword i = 0; i < n_eig; ++i)
        b.eigenvalues(i) = read_f64(is);
    b.matrix.set_size(n, n);
    for (arma::uword r = 0; r < n; ++r)
        for (arma::uword c = 0; c < n; ++c)
        {
            const double re = read_f64(is);
            const double im = read_f64(is);
            b.matrix(r, c) = {re, im};
        }
    if (!is)
        throw std::runtime_error("load_basis: truncated stream");
    return b;
}

inline void save_basis_set(const std::string &path, const std::vector<Basis> &bases)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw std::runtime_error("save_basis_set: cannot open " + path);
    os.write(kBasisMagic, sizeof kBasisMagic);
    detail::write_u32(os, static_cast<std::uint32_t>(bases.size()));
    for (const auto &b : bases)
        save_basis(os, b);
    if (!os)
        throw std::runtime_error("save_basis_set: write failed for " + path);
}

inline std::vector<Basis> load_basis_set(const std::string &path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw std::runtime_error("load_basis_set: cannot open " + path);
    char magic[8];
    is.read(magic, sizeof magic);
    if (!is || std::memcmp(magic, kBasisMagic, sizeof magic) != 0)
        throw std::runtime_error("load_basis_set: bad magic in " + path);
    const std::uint32_t count = detail::read_u32(is);
    std::vector<Basis> out;
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i)
        out.push_back(load_basis(is));
    return out;
}

} // namespace csifb

#endif
