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

#ifndef CSIFB_COMMON_HPP
#define CSIFB_COMMON_HPP

#include <armadillo>
#include <complex>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <stdexcept>

namespace csifb
{

// ---------- seed derivation ----------------------------------------------

// splitmix64 step. Used to derive disjoint stream seeds from a base seed.
inline std::uint64_t splitmix64(std::uint64_t &state)
{
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Absorbs a list of words into a splitmix64 chain. A pure function of its
// inputs, so trial/grid seeds can be derived independently on any thread.
inline std::uint64_t mix_seed(std::initializer_list<std::uint64_t> words)
{
    std::uint64_t state = 0x2545f4914f6cdd1dULL;
    std::uint64_t out = 0x9e3779b97f4a7c15ULL;
    for (std::uint64_t w : words)
    {
        state ^= out + w + (state << 6) + (state >> 2);
        out = splitmix64(state);
    }
    return out;
}

// Purpose tags keep derived streams disjoint even for equal index tuples.
namespace seed_tag
{
    constexpr std::uint64_t aoa = 0xA0A0ULL;
    constexpr std::uint64_t covariance = 0xC0F0ULL;
    constexpr std::uint64_t training = 0x7124ULL;
    constexpr std::uint64_t phi = 0xF1F1ULL;
    constexpr std::uint64_t trial = 0x7214ULL;
    constexpr std::uint64_t rvq = 0x52F9ULL;
}

// ---------- seeded random stream ------------------------------------------

// Deterministic random stream. Every stochastic operation takes one of these
// (or a seed it is built from); nothing draws from global state.
class RandomStream
{
  public:
    explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

    double gaussian() { return normal_(engine_); }

    // Circularly symmetric complex Gaussian, zero mean, unit variance.
    std::complex<double> cgaussian()
    {
        constexpr double s = 0.70710678118654752440; // 1/sqrt(2)
        return {normal_(engine_) * s, normal_(engine_) * s};
    }

    double uniform(double a, double b)
    {
        return std::uniform_real_distribution<double>(a, b)(engine_);
    }

    arma::mat gaussian_mat(arma::uword n_rows, arma::uword n_cols)
    {
        arma::mat out(n_rows, n_cols);
        for (arma::uword c = 0; c < n_cols; ++c)
            for (arma::uword r = 0; r < n_rows; ++r)
                out(r, c) = gaussian();
        return out;
    }

    arma::cx_mat cgaussian_mat(arma::uword n_rows, arma::uword n_cols)
    {
        arma::cx_mat out(n_rows, n_cols);
        for (arma::uword c = 0; c < n_cols; ++c)
            for (arma::uword r = 0; r < n_rows; ++r)
                out(r, c) = cgaussian();
        return out;
    }

    arma::cx_vec cgaussian_vec(arma::uword n) { return cgaussian_mat(n, 1); }

  private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

// ---------- linear algebra helpers ----------------------------------------

// Moore-Penrose pseudoinverse via SVD. Singular values below
// rel_tol * sigma_max are treated as zero.
struct PinvInfo
{
    arma::cx_mat pinv;
    arma::uword rank = 0;
    double sigma_max = 0.0;
    bool rank_deficient = false;
};

inline PinvInfo pinv_svd(const arma::cx_mat &a, double rel_tol = 1e-12)
{
    PinvInfo info;
    arma::cx_mat u, v;
    arma::vec s;
    if (!arma::svd_econ(u, s, v, a))
        throw std::runtime_error("pinv_svd: SVD failed to converge");

    info.sigma_max = s.n_elem > 0 ? s(0) : 0.0;
    const double cut = rel_tol * info.sigma_max;
    arma::vec s_inv(s.n_elem, arma::fill::zeros);
    for (arma::uword i = 0; i < s.n_elem; ++i)
    {
        if (s(i) > cut && s(i) > 0.0)
        {
            s_inv(i) = 1.0 / s(i);
            ++info.rank;
        }
    }
    info.rank_deficient = info.rank < std::min(a.n_rows, a.n_cols);
    info.pinv = v * arma::diagmat(s_inv) * u.t();
    return info;
}

// Least squares min ||a x - b||_2 via QR; falls back to the minimum-norm
// pseudoinverse solution when the system is rank deficient.
struct LsSolution
{
    arma::cx_vec x;
    bool used_pinv = false;
};

inline LsSolution solve_ls(const arma::cx_mat &a, const arma::cx_vec &b,
                           double rel_tol = 1e-12)
{
    arma::cx_vec x;
    const bool ok = arma::solve(x, a, b, arma::solve_opts::no_approx);
    if (ok && x.is_finite())
        return {std::move(x), false};
    return {pinv_svd(a, rel_tol).pinv * b, true};
}

inline arma::cx_mat hermitian_part(const arma::cx_mat &a)
{
    return 0.5 * (a + a.t());
}

inline bool is_hermitian(const arma::cx_mat &a, double rtol = 1e-10)
{
    const double scale = std::max(1.0, arma::norm(a, "fro"));
    return arma::norm(arma::cx_mat(a - a.t()), "fro") <= rtol * scale;
}

} // namespace csifb

#endif
