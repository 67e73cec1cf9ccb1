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

#include <catch2/catch_amalgamated.hpp>

#include <csifb/channel_model.hpp>

using namespace csifb;

namespace
{

// Independent oracle: plain high-resolution trapezoidal quadrature of the
// one-ring integral, entry by entry.
arma::cx_mat ula_correlation_oracle(arma::uword n, double d_over_lambda,
                                    double spread, double aoa, arma::uword panels)
{
    const double a = aoa - spread;
    const double b = aoa + spread;
    const double h = (b - a) / static_cast<double>(panels);
    arma::cx_mat r(n, n);
    for (arma::uword p = 0; p < n; ++p)
        for (arma::uword q = 0; q < n; ++q)
        {
            const double c = 2.0 * arma::datum::pi * d_over_lambda *
                             (static_cast<double>(p) - static_cast<double>(q));
            std::complex<double> acc =
                0.5 * (std::exp(std::complex<double>(0, -c * std::sin(a))) +
                       std::exp(std::complex<double>(0, -c * std::sin(b))));
            for (arma::uword i = 1; i < panels; ++i)
                acc += std::exp(std::complex<double>(0, -c * std::sin(a + h * i)));
            r(p, q) = acc * h / (2.0 * spread);
        }
    return r;
}

arma::vec sorted_eigs(const arma::cx_mat &m)
{
    arma::vec ev;
    arma::cx_mat junk;
    REQUIRE(arma::eig_sym(ev, junk, m));
    return ev;
}

} // namespace

TEST_CASE("ULA correlation - diagonal and trivial limits", "[channel_model]")
{
    const arma::cx_mat r = ula_correlation(4, 0.1, 0.2, 0.3);
    for (arma::uword p = 0; p < 4; ++p)
        REQUIRE(r(p, p) == std::complex<double>(1.0, 0.0));

    // d = 0: the integrand is identically 1
    const arma::cx_mat r0 = ula_correlation(4, 0.0, 0.2, 0.3);
    REQUIRE(arma::abs(arma::cx_mat(r0 - arma::ones<arma::cx_mat>(4, 4))).max() < 1e-12);

    // vanishing spread at broadside: exp(-j pi sin 0) = 1
    const arma::cx_mat rp = ula_correlation(2, 0.5, 1e-8, 0.0);
    REQUIRE(std::abs(rp(1, 0) - std::complex<double>(1.0, 0.0)) < 1e-8);
}

TEST_CASE("ULA correlation matches the high-resolution quadrature oracle", "[channel_model]")
{
    const arma::cx_mat prod = ula_correlation(4, 0.1, 0.2, 0.3);
    const arma::cx_mat oracle = ula_correlation_oracle(4, 0.1, 0.2, 0.3, 1000000);
    const double err = arma::norm(arma::cx_mat(prod - oracle), "fro") /
                       arma::norm(oracle, "fro");
    REQUIRE(err < 1e-8);
}

TEST_CASE("ULA correlation is Hermitian, unit diagonal, PSD", "[channel_model]")
{
    for (double d : {0.1, 0.5})
    {
        const arma::uword n = 64;
        const arma::cx_mat r = ula_correlation(n, d, 0.2, 0.7);
        REQUIRE(arma::norm(arma::cx_mat(r - r.t()), "fro") == 0.0);
        for (arma::uword p = 0; p < n; ++p)
            REQUIRE(r(p, p) == std::complex<double>(1.0, 0.0));
        const arma::vec ev = sorted_eigs(r);
        REQUIRE(ev.min() >= -1e-10 * static_cast<double>(n));
    }
}

TEST_CASE("ULA correlation magnitude decays with antenna separation", "[channel_model]")
{
    // ranges chosen inside the main lobe of the integral, where the decay
    // is monotone (|rho| ripples past its first zero)
    struct Case
    {
        double d;
        arma::uword n;
    };
    for (const Case c : {Case{0.1, 8}, Case{0.5, 5}})
    {
        const arma::cx_mat r = ula_correlation(c.n, c.d, 0.2, 0.0);
        for (arma::uword k = 0; k + 1 < c.n; ++k)
            REQUIRE(std::abs(r(k + 1, 0)) <= std::abs(r(k, 0)) + 1e-12);
    }
}

TEST_CASE("UPA geometry angles", "[channel_model]")
{
    const UpaAngles a = upa_geometry_angles({60.0, 30.0, 100.0});
    // direct evaluation of the arctan expressions
    REQUIRE(a.delta_h == Catch::Approx(0.2914567944778671).epsilon(1e-12));
    REQUIRE(a.delta_v == Catch::Approx(0.1381092482785662).epsilon(1e-12));
    REQUIRE(a.phi_v == Catch::Approx(1.0002793029457926).epsilon(1e-12));

    // zero scattering ring collapses the spreads
    const UpaAngles z = upa_geometry_angles({60.0, 0.0, 100.0});
    REQUIRE(z.delta_v == Catch::Approx(0.0).margin(1e-15));
    REQUIRE(z.delta_h == Catch::Approx(0.0).margin(1e-15));
    REQUIRE(z.phi_v == Catch::Approx(std::atan(100.0 / 60.0)).epsilon(1e-12));

    REQUIRE_THROWS_AS(upa_geometry_angles({60.0, 120.0, 100.0}), std::invalid_argument);
}

TEST_CASE("UPA correlation is the Kronecker product of its factors", "[channel_model]")
{
    CorrelationSpec spec;
    spec.geometry = ArrayGeometry::Upa;
    spec.n_v = 2;
    spec.n_h = 2;
    spec.n_t = 4;
    spec.antenna_spacing_wavelengths = 0.1;
    spec.upa_geometry = UpaGeometry{60.0, 30.0, 100.0};

    const arma::cx_mat r = upa_correlation(spec, 0.0);
    REQUIRE(r.n_rows == 4);

    const UpaAngles ang = upa_geometry_angles(*spec.upa_geometry);
    const arma::cx_mat r_v = ula_correlation(2, 0.1, ang.delta_v, ang.phi_v);
    const arma::cx_mat r_h = ula_correlation(2, 0.1, ang.delta_h, 0.0);
    // explicit entrywise expansion must match exactly
    for (arma::uword i = 0; i < 2; ++i)
        for (arma::uword j = 0; j < 2; ++j)
            for (arma::uword k = 0; k < 2; ++k)
                for (arma::uword l = 0; l < 2; ++l)
                    REQUIRE(r(i * 2 + k, j * 2 + l) == r_v(i, j) * r_h(k, l));

    // 1x1 array degenerates to [1]
    CorrelationSpec tiny = spec;
    tiny.n_v = tiny.n_h = tiny.n_t = 1;
    const arma::cx_mat one = upa_correlation(tiny, 0.4);
    REQUIRE(one.n_rows == 1);
    REQUIRE(std::abs(one(0, 0) - std::complex<double>(1.0, 0.0)) < 1e-14);
}

TEST_CASE("Kronecker with identity vertical factor is block diagonal", "[channel_model]")
{
    const arma::cx_mat r_h = ula_correlation(3, 0.1, 0.2, 0.5);
    const arma::cx_mat eye2(arma::eye<arma::mat>(2, 2), arma::zeros<arma::mat>(2, 2));
    const arma::cx_mat r = arma::kron(eye2, r_h);
    REQUIRE(arma::abs(arma::cx_mat(r.submat(0, 0, 2, 2) - r_h)).max() == 0.0);
    REQUIRE(arma::abs(arma::cx_mat(r.submat(3, 3, 5, 5) - r_h)).max() == 0.0);
    REQUIRE(arma::abs(arma::cx_mat(r.submat(0, 3, 2, 5))).max() == 0.0);
}

TEST_CASE("Channel draw reduces to a white channel for identity correlations", "[channel_model]")
{
    const arma::uword n_t = 8;
    const arma::cx_mat eye_t(arma::eye<arma::mat>(n_t, n_t), arma::zeros<arma::mat>(n_t, n_t));
    const arma::cx_mat eye_r(arma::eye<arma::mat>(1, 1), arma::zeros<arma::mat>(1, 1));
    ChannelDrawer drawer(eye_t, eye_r);
    RandomStream rng(123);
    double energy = 0.0;
    const arma::uword trials = 10000;
    for (arma::uword i = 0; i < trials; ++i)
        energy += std::pow(arma::norm(drawer.draw(rng).matrix, "fro"), 2);
    energy /= static_cast<double>(trials);
    REQUIRE(energy == Catch::Approx(static_cast<double>(n_t)).epsilon(0.05));
}

TEST_CASE("Rank-one transmit correlation colors every row constant", "[channel_model]")
{
    const arma::uword n_t = 6, n_r = 2;
    const arma::cx_mat r_tx = ula_correlation(n_t, 0.0, 0.2, 0.0); // all ones
    const arma::cx_mat eye_r(arma::eye<arma::mat>(n_r, n_r), arma::zeros<arma::mat>(n_r, n_r));
    ChannelDrawer drawer(r_tx, eye_r);
    RandomStream rng(5);
    const ChannelSample s = drawer.draw(rng);
    for (arma::uword i = 0; i < n_r; ++i)
        for (arma::uword j = 1; j < n_t; ++j)
            REQUIRE(std::abs(s.matrix(i, j) - s.matrix(i, 0)) < 1e-10);

    // vectorized form is the column-stacking of the matrix
    for (arma::uword j = 0; j < n_t; ++j)
        for (arma::uword i = 0; i < n_r; ++i)
            REQUIRE(s.vectorized(j * n_r + i) == s.matrix(i, j));
}

TEST_CASE("Sample covariance of vec(H) converges to R_TX^T for N_r = 1", "[channel_model]")
{
    const arma::uword n_t = 4;
    const arma::cx_mat r_tx = ula_correlation(n_t, 0.3, 0.2, 0.5);
    const arma::cx_mat eye_r(arma::eye<arma::mat>(1, 1), arma::zeros<arma::mat>(1, 1));
    ChannelDrawer drawer(r_tx, eye_r);
    RandomStream rng(77);
    const arma::uword trials = 100000;
    arma::cx_mat draws(n_t, trials);
    for (arma::uword i = 0; i < trials; ++i)
        draws.col(i) = drawer.draw(rng).vectorized;
    const CovarianceEstimate est = estimate_covariance(draws);
    const arma::cx_mat expected = arma::strans(r_tx);
    const double err = arma::norm(arma::cx_mat(est.matrix - expected), "fro") /
                       arma::norm(expected, "fro");
    REQUIRE(err < 0.05);
}

TEST_CASE("Covariance estimation basics", "[channel_model]")
{
    arma::cx_vec e1(3, arma::fill::zeros);
    e1(0) = 1.0;
    const CovarianceEstimate single = estimate_covariance(std::vector<arma::cx_vec>{e1});
    REQUIRE(single.sample_count == 1);
    REQUIRE(single.matrix(0, 0) == std::complex<double>(1.0, 0.0));
    REQUIRE(arma::abs(arma::cx_mat(single.matrix - e1 * e1.t())).max() == 0.0);

    // repeated identical samples: exactly h h* (power-of-two count)
    RandomStream rng(3);
    const arma::cx_vec h = rng.cgaussian_vec(5);
    arma::cx_mat reps(5, 4);
    for (arma::uword i = 0; i < 4; ++i)
        reps.col(i) = h;
    const CovarianceEstimate rep = estimate_covariance(reps);
    REQUIRE(arma::abs(arma::cx_mat(rep.matrix - h * h.t())).max() == 0.0);

    // odd counts still agree to rounding
    arma::cx_mat reps7(5, 7);
    for (arma::uword i = 0; i < 7; ++i)
        reps7.col(i) = h;
    REQUIRE(arma::abs(arma::cx_mat(estimate_covariance(reps7).matrix - h * h.t())).max() < 1e-14);

    // Hermitian PSD by construction
    RandomStream rng2(4);
    arma::cx_mat rnd(6, 50);
    for (arma::uword i = 0; i < 50; ++i)
        rnd.col(i) = rng2.cgaussian_vec(6);
    const CovarianceEstimate est = estimate_covariance(rnd);
    REQUIRE(is_hermitian(est.matrix, 1e-12));
    REQUIRE(sorted_eigs(est.matrix).min() >= -1e-10 * arma::trace(est.matrix).real());

    REQUIRE_THROWS_AS(estimate_covariance(std::vector<arma::cx_vec>{}), std::invalid_argument);
}

TEST_CASE("PSD square root clamps tiny negatives and rejects real ones", "[channel_model]")
{
    // rank-deficient PSD input: numerically exact square root
    const arma::cx_mat ones = ula_correlation(4, 0.0, 0.2, 0.0);
    const arma::cx_mat root = psd_sqrt(ones);
    REQUIRE(arma::norm(arma::cx_mat(root * root - ones), "fro") < 1e-10);

    arma::cx_mat indef(arma::eye<arma::mat>(3, 3), arma::zeros<arma::mat>(3, 3));
    indef(2, 2) = -0.5;
    REQUIRE_THROWS_AS(psd_sqrt(indef), std::domain_error);
}

TEST_CASE("CorrelationSpec validation", "[channel_model]")
{
    CorrelationSpec s;
    s.geometry = ArrayGeometry::Upa;
    s.n_v = 2;
    s.n_h = 3;
    s.n_t = 5; // wrong product
    s.upa_geometry = UpaGeometry{};
    REQUIRE_THROWS_AS(s.validate(), std::invalid_argument);
    s.n_t = 6;
    REQUIRE_NOTHROW(s.validate());
    s.upa_geometry.reset();
    REQUIRE_THROWS_AS(s.validate(), std::invalid_argument);

    CorrelationSpec u;
    u.geometry = ArrayGeometry::Ula;
    u.n_t = 4;
    u.angular_spread = 0.0;
    REQUIRE_THROWS_AS(u.validate(), std::invalid_argument);
}

TEST_CASE("Multi-user stacking preserves user order", "[channel_model]")
{
    RandomStream rng(9);
    std::vector<ChannelSample> users(3);
    for (auto &u : users)
    {
        u.matrix = rng.cgaussian_mat(2, 4);
        u.vectorized = arma::vectorise(u.matrix);
    }
    const MultiUserChannel mu = stack_users(users);
    REQUIRE(mu.stacked.n_rows == 6);
    for (arma::uword k = 0; k < 3; ++k)
        REQUIRE(arma::abs(arma::cx_mat(mu.stacked.rows(2 * k, 2 * k + 1) -
                                       users[k].matrix)).max() == 0.0);
}
