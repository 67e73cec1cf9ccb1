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

#ifndef CSIFB_PRECODING_HPP
#define CSIFB_PRECODING_HPP

#include <optional>
#include <string>

#include "common.hpp"

namespace csifb
{

enum class PowerNormalization
{
    PerColumn,  // each precoding column scaled to unit norm
    TotalPower  // tr(W W*) scaled to n_users
};

struct PrecoderConfig
{
    double snr_db = 10.0;
    arma::uword n_users = 1;
    PowerNormalization power = PowerNormalization::TotalPower;
    // Scales the regularizer with tr(HH*)/(n_users n_t) so the normalized
    // precoder is invariant to the overall scale of the channel estimate.
    bool scale_matched_regularizer = false;

    double snr_linear() const { return std::pow(10.0, snr_db / 10.0); }
};

// Axes of the experiment outputs.
struct MetricsRecord
{
    double normalized_mse = 0.0;
    double sum_rate_bps_hz = 0.0;
    double eta = 1.0;
    std::optional<arma::uword> bits;
    std::string scheme_label;
};

// ||h - h_hat||^2 / ||h||^2.
inline double normalized_mse(const arma::cx_vec &h, const arma::cx_vec &h_hat)
{
    if (h.n_elem != h_hat.n_elem)
        throw std::invalid_argument("normalized_mse: dimension mismatch");
    const double denom = std::pow(arma::norm(h), 2);
    if (denom <= 0.0)
        throw std::invalid_argument("normalized_mse: zero channel");
    return std::pow(arma::norm(arma::cx_vec(h - h_hat)), 2) / denom;
}

struct PrecoderResult
{
    arma::cx_mat w;      // normalized precoder, n_t x n_users
    arma::cx_mat w_raw;  // before power normalization
    bool pinv_fallback = false;
};

// Regularized channel inverse W = H_hat* (H_hat H_hat* + (N_u / rho) I)^{-1},
// scaled per the configured power constraint. Rows of h_hat_stacked are the
// per-user channel estimates (N_r = 1).
inline PrecoderResult mmse_precoder(const arma::cx_mat &h_hat_stacked,
                                    const PrecoderConfig &cfg)
{
    const arma::uword n_users = h_hat_stacked.n_rows;
    if (n_users < 1)
        throw std::invalid_argument("mmse_precoder: no users");
    if (cfg.n_users != n_users)
        throw std::invalid_argument("mmse_precoder: n_users mismatch");
    if (!std::isfinite(cfg.snr_db))
        throw std::invalid_argument("mmse_precoder: SNR must be finite");

    const double rho = cfg.snr_linear();
    double alpha = static_cast<double>(n_users) / rho;
    if (cfg.scale_matched_regularizer)
    {
        const double scale2 = std::pow(arma::norm(h_hat_stacked, "fro"), 2) /
                              static_cast<double>(n_users * h_hat_stacked.n_cols);
        alpha *= scale2;
    }

    const arma::cx_mat gram = h_hat_stacked * h_hat_stacked.t() +
                              alpha * arma::cx_mat(arma::eye<arma::mat>(n_users, n_users),
                                                   arma::zeros<arma::mat>(n_users, n_users));
    PrecoderResult res;
    arma::cx_mat gram_inv;
    if (arma::inv_sympd(gram_inv, gram))
    {
        res.w_raw = h_hat_stacked.t() * gram_inv;
    }
    else
    {
        res.w_raw = h_hat_stacked.t() * pinv_svd(gram).pinv;
        res.pinv_fallback = true;
    }

    res.w = res.w_raw;
    if (cfg.power == PowerNormalization::PerColumn)
    {
        for (arma::uword k = 0; k < n_users; ++k)
        {
            const double nrm = arma::norm(res.w.col(k));
            if (nrm > 0.0)
                res.w.col(k) /= nrm;
        }
    }
    else
    {
        const double total = std::pow(arma::norm(res.w, "fro"), 2);
        if (total > 0.0)
            res.w *= std::sqrt(static_cast<double>(n_users) / total);
    }
    return res;
}

// Sum over users of log2(1 + SINR_k) with per-stream power rho / N_u and
// unit noise power. h_true_stacked rows are the true channels; the precoder
// is whatever the transmitter computed from its (possibly degraded) CSI.
inline double sum_rate(const arma::cx_mat &h_true_stacked, const arma::cx_mat &w,
                       const PrecoderConfig &cfg)
{
    const arma::uword n_users = h_true_stacked.n_rows;
    if (w.n_cols != n_users || w.n_rows != h_true_stacked.n_cols)
        throw std::invalid_argument("sum_rate: dimension mismatch");

    const double per_stream = cfg.snr_linear() / static_cast<double>(n_users);
    const arma::cx_mat gains = h_true_stacked * w; // (k, j): user k hears stream j
    double rate = 0.0;
    for (arma::uword k = 0; k < n_users; ++k)
    {
        double interference = 0.0;
        for (arma::uword j = 0; j < n_users; ++j)
            if (j != k)
                interference += std::norm(gains(k, j));
        const double sinr = per_stream * std::norm(gains(k, k)) /
                            (1.0 + per_stream * interference);
        rate += std::log2(1.0 + sinr);
    }
    return rate;
}

} // namespace csifb

#endif
