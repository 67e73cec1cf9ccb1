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

#ifndef CSIFB_RECONSTRUCTION_HPP
#define CSIFB_RECONSTRUCTION_HPP

#include "compression.hpp"

namespace csifb
{

enum class ReconstructionAlgo : std::uint8_t
{
    Omp = 0,
    ModifiedOmp = 1,
    InverseTransform = 2
};

struct ReconstructionResult
{
    arma::cx_vec h_hat;
    arma::uvec support;           // selected coefficient indices, in pick order
    ReconstructionAlgo algorithm = ReconstructionAlgo::InverseTransform;
    arma::uword sparsity_param = 0;   // K (OMP) or K_p (modified OMP)
    bool rank_deficient = false;      // a least-squares step fell back to pinv
    bool underdetermined = false;     // modified OMP ran with k_p > M
    arma::uword ls_solve_count = 0;
    arma::vec residual_norms;         // OMP: ||r^k||_2 after each iteration
};

// Orthogonal matching pursuit over A = Phi Psi. Each iteration selects the
// column with the largest column-normalized correlation against the residual
// (ties resolved to the lowest index), re-solves least squares on the grown
// support and updates the residual. Selected indices are never revisited.
inline ReconstructionResult omp(const arma::cx_vec &y, const arma::cx_mat &phi,
                                const Basis &basis, arma::uword k)
{
    const arma::uword m = phi.n_rows;
    const arma::uword n = basis.dim();
    if (phi.n_cols != n)
        throw std::invalid_argument("omp: Phi/basis dimension mismatch");
    if (y.n_elem != m)
        throw std::invalid_argument("omp: measurement dimension mismatch");
    if (k < 1 || k > m)
        throw std::invalid_argument("omp: need 1 <= k <= M");

    const arma::cx_mat a = phi * basis.matrix;
    arma::vec col_norms(n);
    for (arma::uword j = 0; j < n; ++j)
        col_norms(j) = arma::norm(a.col(j));
    if (col_norms.min() <= 0.0)
        throw std::invalid_argument("omp: Phi Psi has a zero column");

    ReconstructionResult res;
    res.algorithm = ReconstructionAlgo::Omp;
    res.sparsity_param = k;
    res.residual_norms.set_size(k);

    arma::cx_vec r = y;
    arma::uvec support(k);
    std::vector<bool> picked(n, false);
    arma::cx_vec s_support;
    double prev_norm = arma::norm(r);

    for (arma::uword it = 0; it < k; ++it)
    {
        const arma::cx_vec corr = a.t() * r;
        double best = -1.0;
        arma::uword best_j = 0;
        for (arma::uword j = 0; j < n; ++j)
        {
            if (picked[j])
                continue;
            const double score = std::abs(corr(j)) / col_norms(j);
            if (score > best)
            {
                best = score;
                best_j = j;
            }
        }
        picked[best_j] = true;
        support(it) = best_j;

        const arma::cx_mat a_sub = a.cols(support.head(it + 1));
        const LsSolution ls = solve_ls(a_sub, y);
        res.rank_deficient = res.rank_deficient || ls.used_pinv;
        ++res.ls_solve_count;
        s_support = ls.x;
        r = y - a_sub * s_support;

        const double rn = arma::norm(r);
        if (rn > prev_norm * (1.0 + 1e-9) + 1e-12)
            throw std::runtime_error("omp: residual norm increased");
        res.residual_norms(it) = rn;
        prev_norm = rn;
    }

    arma::cx_vec s(n, arma::fill::zeros);
    for (arma::uword i = 0; i < k; ++i)
        s(support(i)) = s_support(i);
    res.h_hat = basis.matrix * s;
    res.support = support;
    return res;
}

// Modified OMP: the support is fixed to the k_p dominant columns of the
// ordered basis and a single pseudoinverse recovers their coefficients,
// s1_hat = (Phi Psi_1)^+ y. With k_p > M the system is underdetermined and
// the minimum-norm solution is returned, flagged in the result.
inline ReconstructionResult modified_omp(const arma::cx_vec &y, const arma::cx_mat &phi,
                                         const Basis &basis, arma::uword k_p,
                                         double pinv_rel_tol = 1e-12)
{
    const arma::uword m = phi.n_rows;
    const arma::uword n = basis.dim();
    if (phi.n_cols != n)
        throw std::invalid_argument("modified_omp: Phi/basis dimension mismatch");
    if (y.n_elem != m)
        throw std::invalid_argument("modified_omp: measurement dimension mismatch");
    if (k_p < 1 || k_p > n)
        throw std::invalid_argument("modified_omp: need 1 <= k_p <= N");

    const arma::cx_mat psi1 = basis.matrix.cols(0, k_p - 1);
    const PinvInfo pi = pinv_svd(phi * psi1, pinv_rel_tol);

    ReconstructionResult res;
    res.algorithm = ReconstructionAlgo::ModifiedOmp;
    res.sparsity_param = k_p;
    res.underdetermined = k_p > m;
    res.rank_deficient = pi.rank < std::min(m, k_p);
    res.ls_solve_count = 1;
    res.h_hat = psi1 * (pi.pinv * y);
    res.support = arma::regspace<arma::uvec>(0, k_p - 1);
    return res;
}

// Scenario 2 decoder: h_hat = Psi_3 y with Psi_3 the first M basis columns.
inline ReconstructionResult reconstruct_truncation(const CompressedCsi &y,
                                                   const Basis &basis)
{
    if (y.scheme != CompressionScheme::Truncation)
        throw std::invalid_argument("reconstruct_truncation: scheme mismatch");
    if (y.basis_kind && *y.basis_kind != basis.kind)
        throw std::invalid_argument("reconstruct_truncation: basis kind mismatch");
    if (y.original_dim != basis.dim() || y.m() > basis.dim() || y.m() < 1)
        throw std::invalid_argument("reconstruct_truncation: dimension mismatch");

    ReconstructionResult res;
    res.algorithm = ReconstructionAlgo::InverseTransform;
    res.sparsity_param = y.m();
    res.h_hat = basis.matrix.cols(0, y.m() - 1) * y.vector;
    res.support = arma::regspace<arma::uvec>(0, y.m() - 1);
    return res;
}

} // namespace csifb

#endif
