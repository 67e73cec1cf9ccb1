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

#ifndef CSIFB_HARNESS_HPP
#define CSIFB_HARNESS_HPP

#include <atomic>
#include <cstdio>
#include <exception>
#include <map>
#include <mutex>
#include <optional>
#include <thread>

#include <json.hpp>

#include "channel_model.hpp"
#include "config.hpp"
#include "precoding.hpp"
#include "quantization.hpp"
#include "reconstruction.hpp"

namespace csifb
{

// ---------- experiment configuration ----------------------------------------

enum class SchemeAlgo
{
    PerfectCsi, // rate sweeps only; added automatically
    Truncation,
    ModifiedOmp,
    Omp
};

enum class QuantizerKind
{
    None,
    Lbg,
    Rvq
};

// OMP iteration-count policies selectable in configs.
inline constexpr long kOmpAutoHalf = -1; // K = max(1, M/2)
inline constexpr long kOmpAutoM = -2;    // K = M

struct SchemeSpec
{
    SchemeAlgo algo = SchemeAlgo::Truncation;
    BasisKind basis = BasisKind::Klt;
    long k = kOmpAutoHalf;   // OMP iterations (explicit, auto, or m)
    arma::uword k_p = 0;     // modified OMP dominant support size
    QuantizerKind quantizer = QuantizerKind::None;
    arma::uword bits = 0;    // 0 = take values from bits_grid

    std::string label() const
    {
        switch (algo)
        {
        case SchemeAlgo::PerfectCsi: return "perfect-csi";
        case SchemeAlgo::Truncation: return "truncation";
        case SchemeAlgo::ModifiedOmp: return "modified-omp";
        case SchemeAlgo::Omp: return "omp";
        }
        return "?";
    }
};

enum class SweepKind
{
    Mse,
    Rate
};

struct ExperimentConfig
{
    ArrayGeometry geometry = ArrayGeometry::Ula;
    arma::uword n_t = 64;
    arma::uword n_v = 8, n_h = 8;
    arma::uword n_r = 1;
    arma::uword n_users = 1;
    std::vector<double> d_grid = {0.1};
    double angular_spread = 0.2; // ULA [rad]
    std::optional<double> fixed_aoa;
    UpaGeometry upa{};
    std::vector<SchemeSpec> schemes;
    std::vector<arma::uword> m_grid;
    std::vector<double> snr_grid_db;
    std::vector<arma::uword> bits_grid;
    arma::uword trials = 500;
    std::uint64_t base_seed = 1;
    arma::uword covariance_samples = 1000;
    arma::uword training_size = 10000;
    bool phi_complex = false;
    PowerNormalization power_norm = PowerNormalization::TotalPower;
    unsigned threads = 0; // 0 = hardware concurrency
    std::string out_path;

    // Optional reuse of serialized artifacts (set by the CLI, not the config
    // file). Both require a single-d grid; KLT bases are per user, codebooks
    // are per user for the single LBG scheme.
    std::vector<Basis> preloaded_klt;
    std::vector<Codebook> preloaded_codebooks;

    arma::uword dim() const { return n_r * n_t; }

    CorrelationSpec correlation_spec(double d_over_lambda) const
    {
        CorrelationSpec s;
        s.geometry = geometry;
        s.n_t = n_t;
        s.n_v = n_v;
        s.n_h = n_h;
        s.antenna_spacing_wavelengths = d_over_lambda;
        s.angular_spread = angular_spread;
        if (geometry == ArrayGeometry::Upa)
            s.upa_geometry = upa;
        return s;
    }
};

// One output cell: every discriminator needed to re-run it in isolation,
// plus the trial statistics.
struct ResultRow
{
    std::string scheme;
    std::string basis;    // empty for perfect CSI
    std::string geometry; // "ula" | "upa"
    double d_over_lambda = 0.0;
    arma::uword n_t = 0, n_r = 0, n_users = 0;
    double eta = 0.0;
    arma::uword m = 0;
    long k_p = -1;      // K_p (modified OMP) or K (OMP); -1 = not applicable
    long bits = -1;     // -1 = unquantized
    double snr_db = std::numeric_limits<double>::quiet_NaN();
    std::string metric_name; // "normalized_mse" | "sum_rate_bps_hz" | "invalid"
    double mean = std::numeric_limits<double>::quiet_NaN();
    double stderr_ = std::numeric_limits<double>::quiet_NaN();
    arma::uword trials = 0;

    std::vector<double> per_trial; // kept in memory for tests; not in the CSV
};

struct SweepResult
{
    SweepKind kind = SweepKind::Mse;
    std::vector<ResultRow> rows;
};

// ---------- config schema ----------------------------------------------------

namespace detail
{
    inline SchemeSpec parse_scheme(const std::string &text, const FlatConfig &cfg)
    {
        std::istringstream is(text);
        std::vector<std::string> tok;
        std::string t;
        while (is >> t)
            tok.push_back(t);
        if (tok.size() < 2)
            throw cfg.error_at("scheme", "expected '<algo> <basis> [options]', got '" + text + "'");

        SchemeSpec s;
        if (tok[0] == "truncation")
            s.algo = SchemeAlgo::Truncation;
        else if (tok[0] == "modified-omp")
            s.algo = SchemeAlgo::ModifiedOmp;
        else if (tok[0] == "omp")
            s.algo = SchemeAlgo::Omp;
        else
            throw cfg.error_at("scheme", "unknown algorithm '" + tok[0] +
                               "' (expected truncation | modified-omp | omp)");

        if (tok[1] == "dct")
            s.basis = BasisKind::Dct2d;
        else if (tok[1] == "klt")
            s.basis = BasisKind::Klt;
        else
            throw cfg.error_at("scheme", "unknown basis '" + tok[1] + "' (expected dct | klt)");

        bool have_k = false, have_kp = false;
        for (std::size_t i = 2; i < tok.size(); ++i)
        {
            const auto eq = tok[i].find('=');
            const std::string key = tok[i].substr(0, eq);
            const std::string val = eq == std::string::npos ? "" : tok[i].substr(eq + 1);
            if (key == "k")
            {
                if (val == "auto")
                    s.k = kOmpAutoHalf;
                else if (val == "m")
                    s.k = kOmpAutoM;
                else
                    s.k = std::stol(val);
                have_k = true;
            }
            else if (key == "kp")
            {
                s.k_p = static_cast<arma::uword>(std::stoul(val));
                have_kp = true;
            }
            else if (key == "lbg" || key == "rvq")
            {
                if (s.quantizer != QuantizerKind::None)
                    throw cfg.error_at("scheme", "more than one quantizer in '" + text + "'");
                s.quantizer = key == "lbg" ? QuantizerKind::Lbg : QuantizerKind::Rvq;
                if (!val.empty())
                    s.bits = static_cast<arma::uword>(std::stoul(val));
            }
            else
            {
                throw cfg.error_at("scheme", "unknown option '" + tok[i] + "'");
            }
        }

        if (s.algo == SchemeAlgo::Omp && !have_k)
            throw cfg.error_at("scheme", "omp requires k=<int|auto|m>");
        if (s.algo == SchemeAlgo::ModifiedOmp && !have_kp)
            throw cfg.error_at("scheme", "modified-omp requires kp=<int>");
        if (s.algo == SchemeAlgo::Truncation && (have_k || have_kp))
            throw cfg.error_at("scheme", "truncation takes no k/kp");
        if (s.algo != SchemeAlgo::Omp && have_k)
            throw cfg.error_at("scheme", "k is only valid for omp");
        if (s.algo != SchemeAlgo::ModifiedOmp && have_kp)
            throw cfg.error_at("scheme", "kp is only valid for modified-omp");
        return s;
    }
} // namespace detail

inline ExperimentConfig load_experiment_config(const FlatConfig &cfg, SweepKind kind)
{
    ExperimentConfig out;

    const std::string geom = cfg.get_string("geometry");
    if (geom == "ula")
    {
        out.geometry = ArrayGeometry::Ula;
        out.n_t = cfg.get_u64("n_t");
        out.angular_spread = cfg.get_double("angular_spread", 0.2);
    }
    else if (geom == "upa")
    {
        out.geometry = ArrayGeometry::Upa;
        out.n_v = cfg.get_u64("n_v");
        out.n_h = cfg.get_u64("n_h");
        out.n_t = out.n_v * out.n_h;
        out.upa.elevation_u = cfg.get_double("upa_u", 60.0);
        out.upa.ring_radius_r = cfg.get_double("upa_r", 30.0);
        out.upa.distance_s = cfg.get_double("upa_s", 100.0);
    }
    else
    {
        throw cfg.error_at("geometry", "expected 'ula' or 'upa', got '" + geom + "'");
    }

    out.n_r = cfg.get_u64("n_r", 1);
    out.n_users = cfg.get_u64("n_users", 1);
    if (out.n_r < 1 || out.n_users < 1)
        throw cfg.error_at("n_users", "n_r and n_users must be >= 1");

    if (cfg.has("d_grid"))
        out.d_grid = cfg.get_double_list("d_grid");
    else
        out.d_grid = {cfg.get_double("d_over_lambda")};
    for (double d : out.d_grid)
        if (d <= 0.0)
            throw cfg.error_at(cfg.has("d_grid") ? "d_grid" : "d_over_lambda",
                               "antenna spacing must be > 0");

    if (cfg.has("aoa"))
        out.fixed_aoa = cfg.get_double("aoa");

    const arma::uword n = out.n_r * out.n_t;
    if (cfg.has("m_grid") && cfg.has("eta_grid"))
        throw cfg.error_at("m_grid", "give either m_grid or eta_grid, not both");
    if (cfg.has("m_grid"))
    {
        for (std::uint64_t m : cfg.get_u64_list("m_grid"))
            out.m_grid.push_back(static_cast<arma::uword>(m));
    }
    else
    {
        for (double eta : cfg.get_double_list("eta_grid"))
        {
            if (eta <= 0.0 || eta > 1.0)
                throw cfg.error_at("eta_grid", "eta must be in (0, 1]");
            out.m_grid.push_back(static_cast<arma::uword>(
                std::max<long long>(1, std::llround(eta * static_cast<double>(n)))));
        }
    }
    for (arma::uword m : out.m_grid)
        if (m < 1 || m > n)
            throw cfg.error_at(cfg.has("m_grid") ? "m_grid" : "eta_grid",
                               "resolved M=" + std::to_string(m) + " outside [1, " +
                                   std::to_string(n) + "]");

    for (const auto &entry : cfg.all("scheme"))
        out.schemes.push_back(detail::parse_scheme(entry.value, cfg));
    if (out.schemes.empty())
        throw ConfigError(cfg.path() + ": missing required key 'scheme'");
    for (const auto &s : out.schemes)
        if (s.k_p > n)
            throw cfg.error_at("scheme", "kp exceeds the CSI dimension " + std::to_string(n));

    if (cfg.has("bits_grid"))
        for (std::uint64_t b : cfg.get_u64_list("bits_grid"))
            out.bits_grid.push_back(static_cast<arma::uword>(b));
    for (const auto &s : out.schemes)
        if (s.quantizer != QuantizerKind::None && s.bits == 0 && out.bits_grid.empty())
            throw ConfigError(cfg.path() + ": a quantized scheme without fixed bits "
                                           "requires bits_grid");

    if (kind == SweepKind::Rate)
    {
        out.snr_grid_db = cfg.get_double_list("snr_grid_db");
        if (out.m_grid.size() != 1)
            throw cfg.error_at(cfg.has("m_grid") ? "m_grid" : "eta_grid",
                               "rate sweeps use a single compression point");
        if (out.n_r != 1)
            throw cfg.error_at("n_r", "rate sweeps require n_r = 1");
        const std::string pn = cfg.get_string("power_normalization", "total");
        if (pn == "total")
            out.power_norm = PowerNormalization::TotalPower;
        else if (pn == "per-column")
            out.power_norm = PowerNormalization::PerColumn;
        else
            throw cfg.error_at("power_normalization", "expected 'total' or 'per-column'");
    }
    else if (cfg.has("snr_grid_db") || cfg.has("power_normalization"))
    {
        throw cfg.error_at(cfg.has("snr_grid_db") ? "snr_grid_db" : "power_normalization",
                           "only valid for rate sweeps");
    }

    out.trials = cfg.get_u64("trials", 500);
    if (out.trials < 1)
        throw cfg.error_at("trials", "must be >= 1");
    out.base_seed = cfg.get_u64("base_seed", 1);
    out.covariance_samples = cfg.get_u64("covariance_samples", 1000);
    out.training_size = cfg.get_u64("training_size", 10000);
    if (out.covariance_samples < 1 || out.training_size < 1)
        throw cfg.error_at("covariance_samples", "sample counts must be >= 1");
    out.phi_complex = cfg.get_bool("phi_complex", false);
    out.threads = static_cast<unsigned>(cfg.get_u64("threads", 0));
    out.out_path = cfg.get_string("out", "");

    cfg.reject_unknown_keys();
    return out;
}

inline ExperimentConfig load_experiment_config(const std::string &path, SweepKind kind)
{
    return load_experiment_config(FlatConfig::parse_file(path), kind);
}

// ---------- setup -------------------------------------------------------------

namespace detail
{
    template <typename Fn>
    void parallel_for(arma::uword count, unsigned threads, Fn &&fn)
    {
        if (threads == 0)
            threads = std::max(1u, std::thread::hardware_concurrency());
        threads = static_cast<unsigned>(std::min<arma::uword>(threads, count));
        if (threads <= 1)
        {
            for (arma::uword i = 0; i < count; ++i)
                fn(i);
            return;
        }
        std::atomic<arma::uword> next{0};
        std::exception_ptr first_error;
        std::mutex error_mutex;
        std::vector<std::thread> pool;
        pool.reserve(threads);
        for (unsigned t = 0; t < threads; ++t)
        {
            pool.emplace_back([&] {
                for (arma::uword i = next.fetch_add(1); i < count; i = next.fetch_add(1))
                {
                    try
                    {
                        fn(i);
                    }
                    catch (...)
                    {
                        std::lock_guard<std::mutex> lk(error_mutex);
                        if (!first_error)
                            first_error = std::current_exception();
                    }
                }
            });
        }
        for (auto &th : pool)
            th.join();
        if (first_error)
            std::rethrow_exception(first_error);
    }

    struct UserLink
    {
        double aoa = 0.0;
        arma::cx_mat r_tx;
        std::optional<ChannelDrawer> drawer;
        CovarianceEstimate cov;
        Basis klt; // valid iff needs_klt
    };

    struct DSetup
    {
        double d_over_lambda = 0.0;
        std::vector<UserLink> users;
        Basis dct; // valid iff needs_dct
        bool has_dct = false, has_klt = false;
        std::map<arma::uword, MeasurementMatrix> phi_by_m;
        // (user, scheme index, m, bits) -> trained codebook
        std::map<std::array<arma::uword, 4>, Codebook> lbg;
        // (user, scheme index, m) -> calibration mean squared norm
        std::map<std::array<arma::uword, 3>, double> rvq_msn;

        const Basis &basis_of(BasisKind kind, arma::uword user) const
        {
            return kind == BasisKind::Dct2d ? dct : users[user].klt;
        }
    };

    inline bool uses_random_projection(const SchemeSpec &s)
    {
        return s.algo == SchemeAlgo::ModifiedOmp || s.algo == SchemeAlgo::Omp;
    }

    // Bits values a quantized scheme runs at.
    inline std::vector<arma::uword> bits_values(const ExperimentConfig &cfg,
                                                const SchemeSpec &s)
    {
        if (s.quantizer == QuantizerKind::None)
            return {};
        if (s.bits > 0)
            return {s.bits};
        return cfg.bits_grid;
    }

    inline DSetup build_d_setup(const ExperimentConfig &cfg, arma::uword d_idx)
    {
        DSetup setup;
        setup.d_over_lambda = cfg.d_grid[d_idx];
        const CorrelationSpec spec = cfg.correlation_spec(setup.d_over_lambda);
        spec.validate();

        bool needs_klt = false, needs_dct = false, needs_training = false;
        for (const auto &s : cfg.schemes)
        {
            needs_klt = needs_klt || s.basis == BasisKind::Klt;
            needs_dct = needs_dct || s.basis == BasisKind::Dct2d;
            needs_training = needs_training || s.quantizer != QuantizerKind::None;
        }
        setup.has_dct = needs_dct;
        setup.has_klt = needs_klt;
        if (needs_dct)
            setup.dct = dct2d_basis(cfg.n_r, cfg.n_t);

        const arma::cx_mat r_rx(arma::eye<arma::mat>(cfg.n_r, cfg.n_r),
                                arma::zeros<arma::mat>(cfg.n_r, cfg.n_r));

        setup.users.resize(cfg.n_users);
        std::vector<arma::cx_mat> training(cfg.n_users); // raw channel draws
        parallel_for(cfg.n_users, cfg.threads, [&](arma::uword u) {
            UserLink &link = setup.users[u];
            if (cfg.fixed_aoa)
            {
                link.aoa = *cfg.fixed_aoa;
            }
            else
            {
                RandomStream rng(mix_seed({cfg.base_seed, seed_tag::aoa, u}));
                link.aoa = rng.uniform(-arma::datum::pi, arma::datum::pi);
            }
            link.r_tx = correlation_for_user(spec, link.aoa);
            link.drawer.emplace(link.r_tx, r_rx);

            if (needs_klt)
            {
                if (!cfg.preloaded_klt.empty())
                {
                    if (cfg.preloaded_klt.size() != cfg.n_users || cfg.d_grid.size() != 1)
                        throw std::invalid_argument(
                            "preloaded bases: need one KLT basis per user and a single d");
                    if (cfg.preloaded_klt[u].dim() != cfg.dim() ||
                        cfg.preloaded_klt[u].kind != BasisKind::Klt)
                        throw std::invalid_argument("preloaded bases: wrong kind or dimension");
                    link.klt = cfg.preloaded_klt[u];
                }
                else
                {
                    RandomStream rng(mix_seed({cfg.base_seed, seed_tag::covariance, d_idx, u}));
                    arma::cx_mat draws(cfg.dim(), cfg.covariance_samples);
                    for (arma::uword t = 0; t < cfg.covariance_samples; ++t)
                        draws.col(t) = link.drawer->draw(rng).vectorized;
                    link.cov = estimate_covariance(draws);
                    link.klt = klt_basis(link.cov);
                }
            }

            if (needs_training)
            {
                RandomStream rng(mix_seed({cfg.base_seed, seed_tag::training, d_idx, u}));
                training[u].set_size(cfg.dim(), cfg.training_size);
                for (arma::uword t = 0; t < cfg.training_size; ++t)
                    training[u].col(t) = link.drawer->draw(rng).vectorized;
            }
        });

        bool any_projection = false;
        for (const auto &s : cfg.schemes)
            any_projection = any_projection || uses_random_projection(s);
        if (any_projection)
            for (arma::uword m : cfg.m_grid)
                if (!setup.phi_by_m.count(m))
                    setup.phi_by_m.emplace(
                        m, draw_measurement_matrix(m, cfg.dim(),
                                                   mix_seed({cfg.base_seed, seed_tag::phi, m}),
                                                   cfg.phi_complex));

        // preloaded codebooks replace training for the (single) LBG scheme
        if (!cfg.preloaded_codebooks.empty())
        {
            std::vector<arma::uword> lbg_schemes;
            for (arma::uword si = 0; si < cfg.schemes.size(); ++si)
                if (cfg.schemes[si].quantizer == QuantizerKind::Lbg)
                    lbg_schemes.push_back(si);
            if (lbg_schemes.size() != 1 || cfg.m_grid.size() != 1 ||
                cfg.d_grid.size() != 1 ||
                cfg.preloaded_codebooks.size() != cfg.n_users)
                throw std::invalid_argument(
                    "preloaded codebooks: need exactly one LBG scheme, a single "
                    "grid point, and one codebook per user");
            const SchemeSpec &s = cfg.schemes[lbg_schemes.front()];
            if (s.bits == 0)
                throw std::invalid_argument("preloaded codebooks: scheme needs fixed bits");
            for (arma::uword u = 0; u < cfg.n_users; ++u)
            {
                const Codebook &cb = cfg.preloaded_codebooks[u];
                if (cb.dim() != cfg.m_grid.front() || cb.bits != s.bits)
                    throw std::invalid_argument(
                        "preloaded codebooks: dimension or bits mismatch");
                setup.lbg[{u, lbg_schemes.front(), cfg.m_grid.front(), s.bits}] = cb;
            }
        }

        // quantizer material: one training population per (user, scheme, m)
        struct CodebookJob
        {
            arma::uword user, scheme_idx, m, bits;
        };
        std::vector<CodebookJob> jobs;
        for (arma::uword u = 0; u < cfg.n_users; ++u)
            for (arma::uword si = 0; si < cfg.schemes.size(); ++si)
            {
                const SchemeSpec &s = cfg.schemes[si];
                if (s.quantizer == QuantizerKind::None)
                    continue;
                for (arma::uword m : cfg.m_grid)
                {
                    if (s.quantizer == QuantizerKind::Rvq)
                        jobs.push_back({u, si, m, 0});
                    else
                        for (arma::uword b : bits_values(cfg, s))
                            if (!setup.lbg.count({u, si, m, b}))
                                jobs.push_back({u, si, m, b});
                }
            }

        std::mutex map_mutex;
        parallel_for(jobs.size(), cfg.threads, [&](arma::uword ji) {
            const CodebookJob &job = jobs[ji];
            const SchemeSpec &s = cfg.schemes[job.scheme_idx];
            arma::cx_mat population;
            if (uses_random_projection(s))
                population = setup.phi_by_m.at(job.m).matrix * training[job.user];
            else
                population = setup.basis_of(s.basis, job.user)
                                 .matrix.cols(0, job.m - 1)
                                 .t() *
                             training[job.user];

            if (s.quantizer == QuantizerKind::Rvq)
            {
                double msn = 0.0;
                for (arma::uword c = 0; c < population.n_cols; ++c)
                    msn += std::pow(arma::norm(population.col(c)), 2);
                msn /= static_cast<double>(population.n_cols);
                std::lock_guard<std::mutex> lk(map_mutex);
                setup.rvq_msn[{job.user, job.scheme_idx, job.m}] = msn;
            }
            else
            {
                Codebook cb = train_lbg(population, job.bits);
                std::lock_guard<std::mutex> lk(map_mutex);
                setup.lbg[{job.user, job.scheme_idx, job.m, job.bits}] = std::move(cb);
            }
        });

        return setup;
    }

    // Feedback pipeline for one user, one scheme, one grid point. Returns the
    // reconstructed CSI; invalid parameter combinations throw.
    inline arma::cx_vec run_feedback(const ExperimentConfig &cfg, const DSetup &setup,
                                     arma::uword user, arma::uword scheme_idx,
                                     const SchemeSpec &s, arma::uword m, arma::uword bits,
                                     const arma::cx_vec &h, std::uint64_t rvq_seed)
    {
        if (s.algo == SchemeAlgo::PerfectCsi)
            return h;

        const Basis &basis = setup.basis_of(s.basis, user);
        CompressedCsi y;
        if (uses_random_projection(s))
            y = compress_random_projection(setup.phi_by_m.at(m), h);
        else
            y = compress_truncation(basis, h, m);

        if (s.quantizer == QuantizerKind::Lbg)
        {
            const Codebook &cb = setup.lbg.at({user, scheme_idx, m, bits});
            y.vector = dequantize(cb, quantize_index(y.vector, cb));
        }
        else if (s.quantizer == QuantizerKind::Rvq)
        {
            const double msn = setup.rvq_msn.at({user, scheme_idx, m});
            const Codebook cb = rvq_codebook(y.vector.n_elem, bits, msn, rvq_seed);
            y.vector = dequantize(cb, quantize_index(y.vector, cb));
        }

        switch (s.algo)
        {
        case SchemeAlgo::Truncation:
            return reconstruct_truncation(y, basis).h_hat;
        case SchemeAlgo::ModifiedOmp:
            return modified_omp(y.vector, setup.phi_by_m.at(m).matrix, basis, s.k_p).h_hat;
        case SchemeAlgo::Omp:
        {
            const long k = s.k == kOmpAutoHalf
                               ? std::max<long>(1, static_cast<long>(m) / 2)
                               : (s.k == kOmpAutoM ? static_cast<long>(m) : s.k);
            return omp(y.vector, setup.phi_by_m.at(m).matrix, basis,
                       static_cast<arma::uword>(k)).h_hat;
        }
        default:
            throw std::logic_error("run_feedback: unreachable");
        }
    }

    // True when the scheme can run at this grid point; otherwise the row is
    // emitted as "invalid" rather than dropped.
    inline bool plan_is_valid(const SchemeSpec &s, arma::uword m, std::string *why = nullptr)
    {
        if (s.algo == SchemeAlgo::Omp)
        {
            const long k = s.k == kOmpAutoHalf ? std::max<long>(1, static_cast<long>(m) / 2)
                                               : (s.k == kOmpAutoM ? static_cast<long>(m) : s.k);
            if (k < 1 || k > static_cast<long>(m))
            {
                if (why)
                    *why = "omp needs 1 <= k <= M";
                return false;
            }
        }
        return true;
    }

    inline long resolved_k(const SchemeSpec &s, arma::uword m)
    {
        if (s.algo == SchemeAlgo::Omp)
            return s.k == kOmpAutoHalf ? std::max<long>(1, static_cast<long>(m) / 2)
                                       : (s.k == kOmpAutoM ? static_cast<long>(m) : s.k);
        if (s.algo == SchemeAlgo::ModifiedOmp)
            return static_cast<long>(s.k_p);
        return -1;
    }

    inline void fill_stats(ResultRow &row, const std::vector<double> &values)
    {
        row.per_trial = values;
        row.trials = values.size();
        if (values.empty())
            return;
        double mean = 0.0;
        for (double v : values)
            mean += v;
        mean /= static_cast<double>(values.size());
        row.mean = mean;
        if (values.size() >= 2)
        {
            double ss = 0.0;
            for (double v : values)
                ss += (v - mean) * (v - mean);
            const double var = ss / static_cast<double>(values.size() - 1);
            row.stderr_ = std::sqrt(var / static_cast<double>(values.size()));
        }
    }
} // namespace detail

// ---------- sweeps -------------------------------------------------------------

// Normalized-MSE sweep across the compression grid (and bits grid when
// quantized schemes are present). Per trial and user: draw channel,
// compress, optionally quantize, reconstruct, record ||h - h_hat||^2/||h||^2.
inline SweepResult run_mse_sweep(const ExperimentConfig &cfg)
{
    if (cfg.schemes.empty())
        throw std::invalid_argument("run_mse_sweep: no schemes");

    struct Plan
    {
        arma::uword d_idx, m_idx, slot, scheme_idx;
        arma::uword bits; // 0 = unquantized
        bool valid;
        std::string why;
    };

    const arma::uword n_slots = cfg.bits_grid.empty() ? 1 : cfg.bits_grid.size();
    std::vector<Plan> plans;
    for (arma::uword d_idx = 0; d_idx < cfg.d_grid.size(); ++d_idx)
        for (arma::uword m_idx = 0; m_idx < cfg.m_grid.size(); ++m_idx)
            for (arma::uword slot = 0; slot < n_slots; ++slot)
                for (arma::uword si = 0; si < cfg.schemes.size(); ++si)
                {
                    const SchemeSpec &s = cfg.schemes[si];
                    const bool follows_grid =
                        s.quantizer != QuantizerKind::None && s.bits == 0;
                    if (slot > 0 && !follows_grid)
                        continue; // fixed-bits and unquantized schemes run once
                    Plan p;
                    p.d_idx = d_idx;
                    p.m_idx = m_idx;
                    p.slot = slot;
                    p.scheme_idx = si;
                    p.bits = s.quantizer == QuantizerKind::None
                                 ? 0
                                 : (s.bits > 0 ? s.bits : cfg.bits_grid[slot]);
                    p.valid = detail::plan_is_valid(s, cfg.m_grid[m_idx], &p.why);
                    plans.push_back(p);
                }

    // warn once per conditioning-sensitive combination
    for (const auto &p : plans)
    {
        const SchemeSpec &s = cfg.schemes[p.scheme_idx];
        const arma::uword m = cfg.m_grid[p.m_idx];
        if (p.d_idx == 0 && p.slot == 0 && s.algo == SchemeAlgo::ModifiedOmp &&
            static_cast<double>(s.k_p) > 0.8 * static_cast<double>(m))
            std::fprintf(stderr,
                         "csifb: warning: K_p=%llu close to or above M=%llu; "
                         "modified OMP is ill-conditioned near K_p = M\n",
                         static_cast<unsigned long long>(s.k_p),
                         static_cast<unsigned long long>(m));
    }

    std::vector<detail::DSetup> setups(cfg.d_grid.size());
    for (arma::uword d_idx = 0; d_idx < cfg.d_grid.size(); ++d_idx)
        setups[d_idx] = detail::build_d_setup(cfg, d_idx);

    // execution cells share channel draws: one per (d, m)
    struct Cell
    {
        arma::uword d_idx, m_idx;
        std::vector<std::size_t> plan_indices;
    };
    std::map<std::pair<arma::uword, arma::uword>, std::vector<std::size_t>> by_cell;
    for (std::size_t pi = 0; pi < plans.size(); ++pi)
        if (plans[pi].valid)
            by_cell[{plans[pi].d_idx, plans[pi].m_idx}].push_back(pi);
    std::vector<Cell> cells;
    for (auto &[key, idx] : by_cell)
        cells.push_back({key.first, key.second, std::move(idx)});

    std::vector<std::vector<double>> samples(plans.size());
    for (auto &s : samples)
        s.reserve(cfg.trials * cfg.n_users);

    detail::parallel_for(cells.size(), cfg.threads, [&](arma::uword ci) {
        const Cell &cell = cells[ci];
        const detail::DSetup &setup = setups[cell.d_idx];
        const arma::uword m = cfg.m_grid[cell.m_idx];
        std::vector<std::vector<double>> local(cell.plan_indices.size());
        for (auto &l : local)
            l.reserve(cfg.trials * cfg.n_users);

        for (arma::uword trial = 0; trial < cfg.trials; ++trial)
            for (arma::uword u = 0; u < cfg.n_users; ++u)
            {
                RandomStream rng(
                    mix_seed({cfg.base_seed, seed_tag::trial, cell.d_idx, u, trial}));
                const arma::cx_vec h = setup.users[u].drawer->draw(rng).vectorized;
                for (std::size_t k = 0; k < cell.plan_indices.size(); ++k)
                {
                    const Plan &p = plans[cell.plan_indices[k]];
                    const SchemeSpec &s = cfg.schemes[p.scheme_idx];
                    const std::uint64_t rvq_seed = mix_seed(
                        {cfg.base_seed, seed_tag::rvq, cell.d_idx, u, trial, p.scheme_idx, p.slot});
                    const arma::cx_vec h_hat = detail::run_feedback(
                        cfg, setup, u, p.scheme_idx, s, m, p.bits, h, rvq_seed);
                    local[k].push_back(normalized_mse(h, h_hat));
                }
            }
        for (std::size_t k = 0; k < cell.plan_indices.size(); ++k)
            samples[cell.plan_indices[k]] = std::move(local[k]);
    });

    SweepResult result;
    result.kind = SweepKind::Mse;
    for (std::size_t pi = 0; pi < plans.size(); ++pi)
    {
        const Plan &p = plans[pi];
        const SchemeSpec &s = cfg.schemes[p.scheme_idx];
        const arma::uword m = cfg.m_grid[p.m_idx];
        ResultRow row;
        row.scheme = s.label();
        row.basis = to_string(s.basis);
        row.geometry = cfg.geometry == ArrayGeometry::Ula ? "ula" : "upa";
        row.d_over_lambda = cfg.d_grid[p.d_idx];
        row.n_t = cfg.n_t;
        row.n_r = cfg.n_r;
        row.n_users = cfg.n_users;
        row.m = m;
        row.eta = static_cast<double>(m) / static_cast<double>(cfg.dim());
        row.k_p = detail::resolved_k(s, m);
        row.bits = p.bits > 0 ? static_cast<long>(p.bits) : -1;
        if (!p.valid)
        {
            row.metric_name = "invalid";
            std::fprintf(stderr, "csifb: flagged invalid row (%s, M=%llu): %s\n",
                         row.scheme.c_str(), static_cast<unsigned long long>(m),
                         p.why.c_str());
        }
        else
        {
            row.metric_name = "normalized_mse";
            detail::fill_stats(row, samples[pi]);
        }
        result.rows.push_back(std::move(row));
    }
    return result;
}

// Multi-user sum-rate sweep across the SNR grid at a fixed compression
// point. A perfect-CSI baseline row is always included. Rates are evaluated
// on the true channel; reconstructed CSI only shapes the precoder.
inline SweepResult run_sum_rate_sweep(const ExperimentConfig &cfg)
{
    if (cfg.schemes.empty())
        throw std::invalid_argument("run_sum_rate_sweep: no schemes");
    if (cfg.m_grid.size() != 1)
        throw std::invalid_argument("run_sum_rate_sweep: need exactly one compression point");
    if (cfg.snr_grid_db.empty())
        throw std::invalid_argument("run_sum_rate_sweep: empty SNR grid");
    if (cfg.n_r != 1)
        throw std::invalid_argument("run_sum_rate_sweep: N_r must be 1");
    const arma::uword m = cfg.m_grid.front();

    std::vector<SchemeSpec> all_schemes;
    SchemeSpec perfect;
    perfect.algo = SchemeAlgo::PerfectCsi;
    perfect.quantizer = QuantizerKind::None;
    all_schemes.push_back(perfect);
    for (const auto &s : cfg.schemes)
        all_schemes.push_back(s);

    for (const auto &s : cfg.schemes)
        if (s.quantizer != QuantizerKind::None && s.bits == 0)
            throw std::invalid_argument(
                "run_sum_rate_sweep: quantized schemes need fixed bits");
    for (const auto &s : cfg.schemes)
    {
        std::string why;
        if (!detail::plan_is_valid(s, m, &why))
            throw std::invalid_argument("run_sum_rate_sweep: " + why);
        if (s.algo == SchemeAlgo::ModifiedOmp &&
            static_cast<double>(s.k_p) > 0.8 * static_cast<double>(m))
            std::fprintf(stderr,
                         "csifb: warning: K_p=%llu close to or above M=%llu; "
                         "modified OMP is ill-conditioned near K_p = M\n",
                         static_cast<unsigned long long>(s.k_p),
                         static_cast<unsigned long long>(m));
    }

    std::vector<detail::DSetup> setups(cfg.d_grid.size());
    for (arma::uword d_idx = 0; d_idx < cfg.d_grid.size(); ++d_idx)
        setups[d_idx] = detail::build_d_setup(cfg, d_idx);

    const arma::uword n_cells = cfg.d_grid.size() * cfg.snr_grid_db.size();
    std::vector<std::vector<std::vector<double>>> samples(
        n_cells, std::vector<std::vector<double>>(all_schemes.size()));

    detail::parallel_for(n_cells, cfg.threads, [&](arma::uword ci) {
        const arma::uword d_idx = ci / cfg.snr_grid_db.size();
        const arma::uword snr_idx = ci % cfg.snr_grid_db.size();
        const detail::DSetup &setup = setups[d_idx];

        PrecoderConfig pc;
        pc.snr_db = cfg.snr_grid_db[snr_idx];
        pc.n_users = cfg.n_users;
        pc.power = cfg.power_norm;

        for (auto &v : samples[ci])
            v.reserve(cfg.trials);

        arma::cx_mat h_true(cfg.n_users, cfg.n_t);
        arma::cx_mat h_hat(cfg.n_users, cfg.n_t);
        for (arma::uword trial = 0; trial < cfg.trials; ++trial)
        {
            std::vector<arma::cx_vec> h_vecs(cfg.n_users);
            for (arma::uword u = 0; u < cfg.n_users; ++u)
            {
                RandomStream rng(mix_seed({cfg.base_seed, seed_tag::trial, d_idx, u, trial}));
                h_vecs[u] = setup.users[u].drawer->draw(rng).vectorized;
                h_true.row(u) = arma::strans(h_vecs[u]);
            }
            for (arma::uword si = 0; si < all_schemes.size(); ++si)
            {
                const SchemeSpec &s = all_schemes[si];
                for (arma::uword u = 0; u < cfg.n_users; ++u)
                {
                    const std::uint64_t rvq_seed =
                        mix_seed({cfg.base_seed, seed_tag::rvq, d_idx, u, trial, si});
                    const arma::cx_vec rec = detail::run_feedback(
                        cfg, setup, u, si == 0 ? 0 : si - 1, s, m,
                        s.quantizer == QuantizerKind::None ? 0 : s.bits, h_vecs[u],
                        rvq_seed);
                    h_hat.row(u) = arma::strans(rec);
                }
                const PrecoderResult w = mmse_precoder(h_hat, pc);
                samples[ci][si].push_back(sum_rate(h_true, w.w, pc));
            }
        }
    });

    SweepResult result;
    result.kind = SweepKind::Rate;
    for (arma::uword d_idx = 0; d_idx < cfg.d_grid.size(); ++d_idx)
        for (arma::uword snr_idx = 0; snr_idx < cfg.snr_grid_db.size(); ++snr_idx)
        {
            const arma::uword ci = d_idx * cfg.snr_grid_db.size() + snr_idx;
            for (arma::uword si = 0; si < all_schemes.size(); ++si)
            {
                const SchemeSpec &s = all_schemes[si];
                ResultRow row;
                row.scheme = s.label();
                row.basis = s.algo == SchemeAlgo::PerfectCsi ? "" : to_string(s.basis);
                row.geometry = cfg.geometry == ArrayGeometry::Ula ? "ula" : "upa";
                row.d_over_lambda = cfg.d_grid[d_idx];
                row.n_t = cfg.n_t;
                row.n_r = cfg.n_r;
                row.n_users = cfg.n_users;
                row.m = s.algo == SchemeAlgo::PerfectCsi ? cfg.dim() : m;
                row.eta = static_cast<double>(row.m) / static_cast<double>(cfg.dim());
                row.k_p = detail::resolved_k(s, m);
                row.bits = s.quantizer == QuantizerKind::None ? -1
                                                              : static_cast<long>(s.bits);
                row.snr_db = cfg.snr_grid_db[snr_idx];
                row.metric_name = "sum_rate_bps_hz";
                detail::fill_stats(row, samples[ci][si]);
                result.rows.push_back(std::move(row));
            }
        }
    return result;
}

// ---------- output -------------------------------------------------------------

namespace detail
{
    inline std::string format_double(double v)
    {
        if (std::isnan(v))
            return "";
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.12g", v);
        return buf;
    }
} // namespace detail

inline std::string csv_string(const std::vector<ResultRow> &rows)
{
    std::ostringstream os;
    os << "scheme,basis,geometry,d_over_lambda,n_t,n_r,n_users,eta,m,k_p,bits,"
          "snr_db,metric_name,mean,stderr,trials\n";
    for (const auto &r : rows)
    {
        os << r.scheme << ',' << r.basis << ',' << r.geometry << ','
           << detail::format_double(r.d_over_lambda) << ',' << r.n_t << ',' << r.n_r
           << ',' << r.n_users << ',' << detail::format_double(r.eta) << ',' << r.m
           << ',';
        if (r.k_p >= 0)
            os << r.k_p;
        os << ',';
        if (r.bits >= 0)
            os << r.bits;
        os << ',' << detail::format_double(r.snr_db) << ',' << r.metric_name << ','
           << detail::format_double(r.mean) << ',' << detail::format_double(r.stderr_)
           << ',' << r.trials << '\n';
    }
    return os.str();
}

inline void write_csv(const std::string &path, const std::vector<ResultRow> &rows)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw std::runtime_error("write_csv: cannot open " + path);
    os << csv_string(rows);
    if (!os)
        throw std::runtime_error("write_csv: write failed for " + path);
}

// JSON sidecar with the fully resolved configuration, written next to the
// CSV so any row can be re-run in isolation.
inline nlohmann::json resolved_config_json(const ExperimentConfig &cfg, SweepKind kind)
{
    nlohmann::json j;
    j["sweep"] = kind == SweepKind::Mse ? "mse" : "rate";
    j["geometry"] = cfg.geometry == ArrayGeometry::Ula ? "ula" : "upa";
    j["n_t"] = cfg.n_t;
    if (cfg.geometry == ArrayGeometry::Upa)
    {
        j["n_v"] = cfg.n_v;
        j["n_h"] = cfg.n_h;
        j["upa_u"] = cfg.upa.elevation_u;
        j["upa_r"] = cfg.upa.ring_radius_r;
        j["upa_s"] = cfg.upa.distance_s;
    }
    else
    {
        j["angular_spread"] = cfg.angular_spread;
    }
    j["n_r"] = cfg.n_r;
    j["n_users"] = cfg.n_users;
    j["d_grid"] = cfg.d_grid;
    if (cfg.fixed_aoa)
        j["aoa"] = *cfg.fixed_aoa;
    j["m_grid"] = cfg.m_grid;
    if (!cfg.snr_grid_db.empty())
        j["snr_grid_db"] = cfg.snr_grid_db;
    if (!cfg.bits_grid.empty())
        j["bits_grid"] = cfg.bits_grid;
    j["trials"] = cfg.trials;
    j["base_seed"] = cfg.base_seed;
    j["covariance_samples"] = cfg.covariance_samples;
    j["training_size"] = cfg.training_size;
    j["phi_complex"] = cfg.phi_complex;
    if (kind == SweepKind::Rate)
        j["power_normalization"] =
            cfg.power_norm == PowerNormalization::TotalPower ? "total" : "per-column";
    nlohmann::json schemes = nlohmann::json::array();
    for (const auto &s : cfg.schemes)
    {
        nlohmann::json js;
        js["algo"] = s.label();
        js["basis"] = to_string(s.basis);
        if (s.algo == SchemeAlgo::Omp)
            js["k"] = s.k == kOmpAutoHalf ? "auto" : (s.k == kOmpAutoM ? "m" : std::to_string(s.k));
        if (s.algo == SchemeAlgo::ModifiedOmp)
            js["k_p"] = s.k_p;
        if (s.quantizer != QuantizerKind::None)
        {
            js["quantizer"] = s.quantizer == QuantizerKind::Lbg ? "lbg" : "rvq";
            if (s.bits > 0)
                js["bits"] = s.bits;
        }
        schemes.push_back(js);
    }
    j["schemes"] = schemes;
    return j;
}

inline void write_config_sidecar(const std::string &csv_path, const ExperimentConfig &cfg,
                                 SweepKind kind)
{
    const std::string path = csv_path + ".config.json";
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw std::runtime_error("write_config_sidecar: cannot open " + path);
    os << resolved_config_json(cfg, kind).dump(2) << '\n';
}

} // namespace csifb

#endif
