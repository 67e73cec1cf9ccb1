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

#ifndef CSIFB_COMPRESSION_HPP
#define CSIFB_COMPRESSION_HPP

#include <optional>

#include "bases.hpp"
#include "common.hpp"

namespace csifb
{

// Random measurement matrix Phi, M x N. By default the entries are real
// i.i.d. N(0,1) applied to the complex CSI vector; a circularly symmetric
// complex variant is available for sensitivity checks.
struct MeasurementMatrix
{
    arma::cx_mat matrix;
    std::uint64_t seed = 0;
    bool complex_entries = false;

    arma::uword m() const { return matrix.n_rows; }
    arma::uword n() const { return matrix.n_cols; }
};

inline MeasurementMatrix draw_measurement_matrix(arma::uword m, arma::uword n,
                                                 std::uint64_t seed,
                                                 bool complex_entries = false)
{
    if (m < 1 || m > n)
        throw std::invalid_argument("draw_measurement_matrix: need 1 <= m <= n");
    RandomStream rng(seed);
    MeasurementMatrix phi;
    phi.seed = seed;
    phi.complex_entries = complex_entries;
    if (complex_entries)
        phi.matrix = rng.cgaussian_mat(m, n);
    else
        phi.matrix = arma::cx_mat(rng.gaussian_mat(m, n),
                                  arma::mat(m, n, arma::fill::zeros));
    return phi;
}

enum class CompressionScheme : std::uint8_t
{
    RandomProjection = 0,
    Truncation = 1
};

// M-dimensional feedback vector plus the metadata the decoder needs to
// identify how it was produced. eta = M / N.
struct CompressedCsi
{
    arma::cx_vec vector;
    CompressionScheme scheme = CompressionScheme::Truncation;
    std::uint64_t phi_seed = 0;   // RandomProjection: regenerates Phi
    bool phi_complex = false;
    std::optional<BasisKind> basis_kind; // decoding basis, when fixed
    arma::uword original_dim = 0;

    arma::uword m() const { return vector.n_elem; }
    double eta() const { return static_cast<double>(m()) / static_cast<double>(original_dim); }
};

// Scenario 1: y = Phi h.
inline CompressedCsi compress_random_projection(const MeasurementMatrix &phi,
                                                const arma::cx_vec &h)
{
    if (h.n_elem != phi.n())
        throw std::invalid_argument("compress_random_projection: dimension mismatch");
    CompressedCsi out;
    out.vector = phi.matrix * h;
    out.scheme = CompressionScheme::RandomProjection;
    out.phi_seed = phi.seed;
    out.phi_complex = phi.complex_entries;
    out.original_dim = h.n_elem;
    return out;
}

// Scenario 2: y = first m entries of Psi* h. The basis is dominance-ordered,
// so this keeps the m dominant coefficients.
inline CompressedCsi compress_truncation(const Basis &basis, const arma::cx_vec &h,
                                         arma::uword m)
{
    if (h.n_elem != basis.dim())
        throw std::invalid_argument("compress_truncation: dimension mismatch");
    if (m < 1 || m > h.n_elem)
        throw std::invalid_argument("compress_truncation: need 1 <= m <= n");
    CompressedCsi out;
    out.vector = basis.matrix.cols(0, m - 1).t() * h;
    out.scheme = CompressionScheme::Truncation;
    out.basis_kind = basis.kind;
    out.original_dim = h.n_elem;
    return out;
}

} // namespace csifb

#endif
