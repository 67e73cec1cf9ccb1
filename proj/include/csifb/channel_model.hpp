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

#ifndef CSIFB_CHANNEL_MODEL_HPP
#define CSIFB_CHANNEL_MODEL_HPP

#include <cmath>
#include <optional>
#include <vector>

#include "common.hpp"

namespace csifb
{

// ---------- domain types ---------------------------------------------------

// One-ring scattering geometry for a planar array: transmit antenna
// elevation u, scattering ring radius r and transmitter-receiver distance s,
// all in meters.
struct UpaGeometry
{
    double elevation_u = 60.0;
    double ring_radius_r = 30.0;
    double distance_s = 100.0;
};

enum class ArrayGeometry
{
    Ula,
    Upa
};

// Physical parameters defining the transmit-side spatial correlation.
struct CorrelationSpec
{
    ArrayGeometry geometry = ArrayGeometry::Ula;
    arma::uword n_t = 1;          // total transmit antennas
    arma::uword n_v = 1;          // UPA vertical count   (n_t = n_v * n_h)
    arma::uword n_h = 1;          // UPA horizontal count
    double antenna_spacing_wavelengths = 0.5; // d / lambda
    double angular_spread = 0.2;  // Delta [rad], ULA case
    double aoa = 0.0;             // phi_k [rad], ULA case / default user AoA
    std::optional<UpaGeometry> upa_geometry;

    void validate() const
    {
        if (n_t < 1)
            throw std::invalid_argument("CorrelationSpec: n_t must be >= 1");
        if (antenna_spacing_wavelengths < 0.0)
            throw std::invalid_argument("CorrelationSpec: antenna spacing must be >= 0");
        if (geometry == ArrayGeometry::Ula)
        {
            if (angular_spread <= 0.0)
                throw std::invalid_argument("CorrelationSpec: angular spread must be > 0");
        }
        else
        {
            if (n_t != n_v * n_h)
                throw std::invalid_argument("CorrelationSpec: n_t must equal n_v * n_h");
            if (!upa_geometry)
                throw std::invalid_argument("CorrelationSpec: UPA geometry missing");
            const auto &g = *upa_geometry;
            if (g.elevation_u <= 0.0 || g.ring_radius_r <= 0.0 || g.distance_s <= 0.0)
                throw std::invalid_argument("CorrelationSpec: u, r, s must be > 0");
            if (g.distance_s <= g.ring_radius_r)
                throw std::invalid_argument("CorrelationSpec: s must exceed r");
        }
    }
};

// One channel realization for a single user.
struct ChannelSample
{
    arma::cx_mat matrix;     // H_k, n_r x n_t
    arma::cx_vec vectorized; // h_k = vec(H_k), column-major stacking
};

// All users of one drop, stacked row-block per user.
struct MultiUserChannel
{
    std::vector<ChannelSample> users;
    arma::cx_mat stacked; // (n_users * n_r) x n_t
};

struct CovarianceEstimate
{
    arma::cx_mat matrix;    // Hermitian PSD, N x N
    arma::uword sample_count = 0;
};

// ---------- correlation matrices -------------------------------------------

namespace detail
{
    // Trapezoidal rule with n panels over [a, b].
    template <typename F>
    std::complex<double> trapezoid(F &&f, double a, double b, arma::uword n)
    {
        const double h = (b - a) / static_cast<double>(n);
        std::complex<double> acc = 0.5 * (f(a) + f(b));
        for (arma::uword i = 1; i < n; ++i)
            acc += f(a + h * static_cast<double>(i));
        return acc * h;
    }

    // Trapezoid refined by Richardson extrapolation (Romberg). The base grid
    // holds at least 4096 points; refinement continues until successive
    // extrapolants agree to rel_tol or the table depth is exhausted.
    template <typename F>
    std::complex<double> romberg(F &&f, double a, double b,
                                 double rel_tol = 1e-13,
                                 arma::uword base_panels = 4096,
                                 arma::uword max_levels = 6)
    {
        std::vector<std::complex<double>> row;
        row.push_back(trapezoid(f, a, b, base_panels));
        arma::uword panels = base_panels;
        for (arma::uword level = 1; level < max_levels; ++level)
        {
            panels *= 2;
            const double h = (b - a) / static_cast<double>(panels);
            // reuse previous sum: add midpoints only
            std::complex<double> mids = 0.0;
            for (arma::uword i = 1; i < panels; i += 2)
                mids += f(a + h * static_cast<double>(i));
            std::vector<std::complex<double>> next(level + 1);
            next[0] = 0.5 * row[0] + mids * h;
            double factor = 4.0;
            for (arma::uword k = 1; k <= level; ++k)
            {
                next[k] = next[k - 1] + (next[k - 1] - row[k - 1]) / (factor - 1.0);
                factor *= 4.0;
            }
            const double err = std::abs(next[level] - row[level - 1]);
            const double scale = std::max(1.0, std::abs(next[level]));
            row = std::move(next);
            if (err <= rel_tol * scale)
                break;
        }
        return row.back();
    }
} // namespace detail

// One-ring transmit correlation for a uniform linear array. Entry (p, q) is
// the average of exp(-j 2 pi (d/lambda)(p-q) sin(alpha)) over
// alpha in [aoa - spread, aoa + spread]. Hermitian with exact unit diagonal.
inline arma::cx_mat ula_correlation(arma::uword n_t, double d_over_lambda,
                                    double angular_spread, double aoa)
{
    if (n_t < 1)
        throw std::invalid_argument("ula_correlation: n_t must be >= 1");
    if (angular_spread <= 0.0)
        throw std::invalid_argument("ula_correlation: angular spread must be > 0");

    const double a = aoa - angular_spread;
    const double b = aoa + angular_spread;
    const double norm = 1.0 / (2.0 * angular_spread);

    // One integral per antenna offset; the matrix is Toeplitz in (p - q).
    arma::cx_vec rho(n_t);
    rho(0) = 1.0;
    for (arma::uword k = 1; k < n_t; ++k)
    {
        const double c = 2.0 * arma::datum::pi * d_over_lambda * static_cast<double>(k);
        auto integrand = [c](double alpha) {
            return std::exp(std::complex<double>(0.0, -c * std::sin(alpha)));
        };
        const std::complex<double> val = detail::romberg(integrand, a, b) * norm;
        if (!std::isfinite(val.real()) || !std::isfinite(val.imag()))
            throw std::runtime_error("ula_correlation: numerical integration failure");
        rho(k) = val;
    }

    arma::cx_mat r(n_t, n_t);
    for (arma::uword p = 0; p < n_t; ++p)
        for (arma::uword q = 0; q < n_t; ++q)
            r(p, q) = p >= q ? rho(p - q) : std::conj(rho(q - p));
    return r;
}

inline arma::cx_mat ula_correlation(const CorrelationSpec &spec, double user_aoa)
{
    spec.validate();
    return ula_correlation(spec.n_t, spec.antenna_spacing_wavelengths,
                           spec.angular_spread, user_aoa);
}

// Vertical/horizontal angular spreads and the vertical AoA induced by the
// one-ring geometry. The horizontal AoA is per user and not derived here.
struct UpaAngles
{
    double delta_v = 0.0;
    double phi_v = 0.0;
    double delta_h = 0.0;
};

inline UpaAngles upa_geometry_angles(const UpaGeometry &g)
{
    if (g.elevation_u <= 0.0 || g.ring_radius_r < 0.0 || g.distance_s <= 0.0)
        throw std::invalid_argument("upa_geometry_angles: u, s must be > 0 and r >= 0");
    if (g.distance_s <= g.ring_radius_r)
        throw std::invalid_argument("upa_geometry_angles: s must exceed r");
    const double hi = std::atan((g.distance_s + g.ring_radius_r) / g.elevation_u);
    const double lo = std::atan((g.distance_s - g.ring_radius_r) / g.elevation_u);
    UpaAngles out;
    out.delta_v = 0.5 * (hi - lo);
    out.phi_v = 0.5 * (hi + lo);
    out.delta_h = std::atan(g.ring_radius_r / g.distance_s);
    return out;
}

// UPA transmit correlation R_V (x) R_H,k. Both factors come from the same
// one-ring integral, evaluated with the geometry-derived vertical angles and
// the per-user horizontal AoA.
inline arma::cx_mat upa_correlation(const CorrelationSpec &spec, double user_aoa_h)
{
    spec.validate();
    if (spec.geometry != ArrayGeometry::Upa)
        throw std::invalid_argument("upa_correlation: spec is not UPA");
    const UpaAngles ang = upa_geometry_angles(*spec.upa_geometry);
    const arma::cx_mat r_v = ula_correlation(spec.n_v, spec.antenna_spacing_wavelengths,
                                             ang.delta_v, ang.phi_v);
    const arma::cx_mat r_h = ula_correlation(spec.n_h, spec.antenna_spacing_wavelengths,
                                             ang.delta_h, user_aoa_h);
    return arma::kron(r_v, r_h);
}

// Transmit correlation for one user under either geometry.
inline arma::cx_mat correlation_for_user(const CorrelationSpec &spec, double user_aoa)
{
    return spec.geometry == ArrayGeometry::Ula ? ula_correlation(spec, user_aoa)
                                               : upa_correlation(spec, user_aoa);
}

// ---------- channel synthesis ----------------------------------------------

// Principal PSD square root via Hermitian eigendecomposition. Eigenvalues in
// [-tol, 0) are clamped to zero; anything below -tol rejects the input.
inline arma::cx_mat psd_sqrt(const arma::cx_mat &a, double rel_floor = 1e-10)
{
    if (!is_hermitian(a, 1e-8))
        throw std::invalid_argument("psd_sqrt: input is not Hermitian");
    arma::vec eval;
    arma::cx_mat evec;
    if (!arma::eig_sym(eval, evec, hermitian_part(a)))
        throw std::runtime_error("psd_sqrt: eigendecomposition failed");
    const double floor = -rel_floor * std::max(1.0, std::abs(arma::trace(a).real()));
    arma::vec root(eval.n_elem);
    for (arma::uword i = 0; i < eval.n_elem; ++i)
    {
        if (eval(i) < floor)
            throw std::domain_error("psd_sqrt: matrix is not PSD within tolerance");
        root(i) = std::sqrt(std::max(0.0, eval(i)));
    }
    return evec * arma::diagmat(root) * evec.t();
}

// Precomputed state for repeated Kronecker-model draws with fixed
// correlations: H = (1/sqrt(tr R_RX)) R_RX^{1/2} H_iid R_TX^{1/2}.
class ChannelDrawer
{
  public:
    ChannelDrawer(const arma::cx_mat &r_tx, const arma::cx_mat &r_rx)
        : r_tx_sqrt_(psd_sqrt(r_tx)), r_rx_sqrt_(psd_sqrt(r_rx)),
          scale_(1.0 / std::sqrt(arma::trace(r_rx).real()))
    {
        if (!std::isfinite(scale_))
            throw std::invalid_argument("ChannelDrawer: tr(R_RX) must be positive");
    }

    arma::uword n_t() const { return r_tx_sqrt_.n_rows; }
    arma::uword n_r() const { return r_rx_sqrt_.n_rows; }

    ChannelSample draw(RandomStream &rng) const
    {
        const arma::cx_mat h_iid = rng.cgaussian_mat(n_r(), n_t());
        ChannelSample out;
        out.matrix = scale_ * r_rx_sqrt_ * h_iid * r_tx_sqrt_;
        out.vectorized = arma::vectorise(out.matrix);
        return out;
    }

  private:
    arma::cx_mat r_tx_sqrt_;
    arma::cx_mat r_rx_sqrt_;
    double scale_;
};

inline ChannelSample draw_channel(const arma::cx_mat &r_tx, const arma::cx_mat &r_rx,
                                  RandomStream &rng)
{
    return ChannelDrawer(r_tx, r_rx).draw(rng);
}

inline MultiUserChannel stack_users(std::vector<ChannelSample> users)
{
    if (users.empty())
        throw std::invalid_argument("stack_users: no users");
    MultiUserChannel out;
    const arma::uword n_r = users.front().matrix.n_rows;
    const arma::uword n_t = users.front().matrix.n_cols;
    out.stacked.set_size(n_r * users.size(), n_t);
    for (arma::uword k = 0; k < users.size(); ++k)
        out.stacked.rows(k * n_r, (k + 1) * n_r - 1) = users[k].matrix;
    out.users = std::move(users);
    return out;
}

// ---------- covariance estimation ------------------------------------------

// Sample covariance (1/T) sum h h*, symmetrized after accumulation.
inline CovarianceEstimate estimate_covariance(const arma::cx_mat &samples_as_columns)
{
    if (samples_as_columns.n_cols == 0)
        throw std::invalid_argument("estimate_covariance: empty sample set");
    CovarianceEstimate est;
    est.sample_count = samples_as_columns.n_cols;
    est.matrix = hermitian_part(samples_as_columns * samples_as_columns.t() /
                                static_cast<double>(est.sample_count));
    return est;
}

inline CovarianceEstimate estimate_covariance(const std::vector<arma::cx_vec> &samples)
{
    if (samples.empty())
        throw std::invalid_argument("estimate_covariance: empty sample set");
    arma::cx_mat m(samples.front().n_elem, samples.size());
    for (arma::uword i = 0; i < samples.size(); ++i)
    {
        if (samples[i].n_elem != m.n_rows)
            throw std::invalid_argument("estimate_covariance: inconsistent lengths");
        m.col(i) = samples[i];
    }
    return estimate_covariance(m);
}

} // namespace csifb

#endif
