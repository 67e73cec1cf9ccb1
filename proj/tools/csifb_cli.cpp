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

#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include <csifb/csifb.hpp>

namespace
{

struct CommonArgs
{
    std::string config_path;
    std::string out_path;
    std::uint64_t seed = 0;
    std::uint64_t trials = 0;
    std::uint64_t threads = 0;
    bool seed_set = false, trials_set = false, threads_set = false;
};

void add_common(CLI::App *sub, CommonArgs &args)
{
    sub->add_option("--config", args.config_path, "experiment config file")->required();
    sub->add_option("--out", args.out_path, "output path (overrides config 'out')");
    sub->add_option("--seed", args.seed, "base seed (overrides config)")
        ->each([&](const std::string &) { args.seed_set = true; });
    sub->add_option("--trials", args.trials, "Monte Carlo trials (overrides config)")
        ->each([&](const std::string &) { args.trials_set = true; });
    sub->add_option("--threads", args.threads, "worker threads, 0 = all cores")
        ->each([&](const std::string &) { args.threads_set = true; });
}

csifb::ExperimentConfig load_with_overrides(const CommonArgs &args, csifb::SweepKind kind)
{
    csifb::ExperimentConfig cfg = csifb::load_experiment_config(args.config_path, kind);
    if (args.seed_set)
        cfg.base_seed = args.seed;
    if (args.trials_set)
        cfg.trials = static_cast<arma::uword>(args.trials);
    if (args.threads_set)
        cfg.threads = static_cast<unsigned>(args.threads);
    if (!args.out_path.empty())
        cfg.out_path = args.out_path;
    return cfg;
}

void require_out(const csifb::ExperimentConfig &cfg)
{
    if (cfg.out_path.empty())
        throw csifb::ConfigError("no output path: set 'out' in the config or pass --out");
}

int run_sweep(const CommonArgs &args, csifb::SweepKind kind, const std::string &basis_path,
              const std::string &codebook_path)
{
    csifb::ExperimentConfig cfg = load_with_overrides(args, kind);
    require_out(cfg);
    if (!basis_path.empty())
        cfg.preloaded_klt = csifb::load_basis_set(basis_path);
    if (!codebook_path.empty())
        cfg.preloaded_codebooks = csifb::load_codebook_set(codebook_path);

    const csifb::SweepResult result = kind == csifb::SweepKind::Mse
                                          ? csifb::run_mse_sweep(cfg)
                                          : csifb::run_sum_rate_sweep(cfg);
    csifb::write_csv(cfg.out_path, result.rows);
    csifb::write_config_sidecar(cfg.out_path, cfg, kind);
    std::printf("wrote %zu rows to %s\n", result.rows.size(), cfg.out_path.c_str());
    return 0;
}

int run_train_codebook(const CommonArgs &args, std::uint64_t bits_override)
{
    csifb::ExperimentConfig cfg = load_with_overrides(args, csifb::SweepKind::Mse);
    require_out(cfg);
    if (bits_override > 0)
        for (auto &s : cfg.schemes)
            if (s.quantizer == csifb::QuantizerKind::Lbg)
                s.bits = static_cast<arma::uword>(bits_override);

    std::vector<arma::uword> lbg_schemes;
    for (arma::uword si = 0; si < cfg.schemes.size(); ++si)
        if (cfg.schemes[si].quantizer == csifb::QuantizerKind::Lbg)
            lbg_schemes.push_back(si);
    if (lbg_schemes.size() != 1)
        throw csifb::ConfigError("train-codebook: config must contain exactly one LBG scheme");
    if (cfg.m_grid.size() != 1 || cfg.d_grid.size() != 1)
        throw csifb::ConfigError("train-codebook: need a single grid point and a single d");
    const csifb::SchemeSpec &s = cfg.schemes[lbg_schemes.front()];
    if (s.bits == 0)
        throw csifb::ConfigError("train-codebook: set bits on the scheme or pass --bits");

    const auto setup = csifb::detail::build_d_setup(cfg, 0);
    std::vector<csifb::Codebook> out;
    for (arma::uword u = 0; u < cfg.n_users; ++u)
        out.push_back(setup.lbg.at({u, lbg_schemes.front(), cfg.m_grid.front(), s.bits}));
    csifb::save_codebook_set(cfg.out_path, out);
    std::printf("wrote %zu codebooks (%llu-bit, dim %llu) to %s\n", out.size(),
                static_cast<unsigned long long>(s.bits),
                static_cast<unsigned long long>(cfg.m_grid.front()), cfg.out_path.c_str());
    return 0;
}

int run_gen_basis(const CommonArgs &args)
{
    csifb::ExperimentConfig cfg = load_with_overrides(args, csifb::SweepKind::Mse);
    require_out(cfg);
    if (cfg.d_grid.size() != 1)
        throw csifb::ConfigError("gen-basis: need a single d");

    bool any_klt = false;
    for (const auto &s : cfg.schemes)
        any_klt = any_klt || s.basis == csifb::BasisKind::Klt;

    const auto setup = csifb::detail::build_d_setup(cfg, 0);
    std::vector<csifb::Basis> out;
    if (any_klt)
        for (arma::uword u = 0; u < cfg.n_users; ++u)
            out.push_back(setup.users[u].klt);
    else
        out.push_back(setup.dct);
    csifb::save_basis_set(cfg.out_path, out);
    std::printf("wrote %zu bases to %s\n", out.size(), cfg.out_path.c_str());
    return 0;
}

} // namespace

int main(int argc, char **argv)
{
    CLI::App app{"compressed CSI feedback experiments for correlated massive MIMO"};
    app.require_subcommand(1);

    CommonArgs mse_args, rate_args, cb_args, basis_args;
    std::string mse_basis, rate_basis, rate_codebooks;
    std::uint64_t cb_bits = 0;

    CLI::App *mse = app.add_subcommand("mse-sweep", "normalized-MSE sweep over the eta grid");
    add_common(mse, mse_args);
    mse->add_option("--basis", mse_basis, "reuse serialized per-user KLT bases");

    CLI::App *rate = app.add_subcommand("rate-sweep", "multi-user sum-rate sweep over SNR");
    add_common(rate, rate_args);
    rate->add_option("--basis", rate_basis, "reuse serialized per-user KLT bases");
    rate->add_option("--codebooks", rate_codebooks, "reuse serialized per-user LBG codebooks");

    CLI::App *cb = app.add_subcommand("train-codebook", "train per-user LBG codebooks");
    add_common(cb, cb_args);
    cb->add_option("--bits", cb_bits, "codebook size override (2^bits vectors)");

    CLI::App *gen = app.add_subcommand("gen-basis", "build and serialize sparsifying bases");
    add_common(gen, basis_args);

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError &e)
    {
        return app.exit(e);
    }

    try
    {
        if (mse->parsed())
            return run_sweep(mse_args, csifb::SweepKind::Mse, mse_basis, "");
        if (rate->parsed())
            return run_sweep(rate_args, csifb::SweepKind::Rate, rate_basis, rate_codebooks);
        if (cb->parsed())
            return run_train_codebook(cb_args, cb_bits);
        if (gen->parsed())
            return run_gen_basis(basis_args);
    }
    catch (const csifb::ConfigError &e)
    {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    }
    catch (const std::exception &e)
    {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
