// SPDX-License-Identifier: Apache-2.0
//
// Shared builders for the test suite: small random channel and covariance
// sets with deterministic seeding.

#ifndef MCNOMA_TEST_HELPERS_HPP
#define MCNOMA_TEST_HELPERS_HPP

#include "mcnoma/linalg.hpp"
#include "mcnoma/sic.hpp"

#include <vector>

namespace testutil
{

// 1x1 complex matrix; brace-init of tiny arma matrices is ambiguous.
inline arma::cx_mat cx_scalar(double re)
{
    arma::cx_mat M(1, 1);
    M(0, 0) = re;
    return M;
}

// Real-valued row vector as a 1xN complex matrix.
inline arma::cx_mat cx_row(const std::vector<double> &v)
{
    arma::cx_mat M(1, v.size());
    for (std::size_t j = 0; j < v.size(); ++j)
        M(0, j) = v[j];
    return M;
}

inline arma::cx_mat random_cx(mcnoma::GaussianRng &rng, arma::uword rows, arma::uword cols)
{
    arma::cx_mat M(rows, cols);
    for (arma::uword i = 0; i < rows; ++i)
        for (arma::uword j = 0; j < cols; ++j)
            M(i, j) = rng.next_cx();
    return M;
}

// Random PSD matrix A A^H scaled to roughly unit trace per dimension.
inline arma::cx_mat random_psd(mcnoma::GaussianRng &rng, arma::uword dim, double scale = 1.0)
{
    arma::cx_mat A = random_cx(rng, dim, dim);
    arma::cx_mat P = A * A.t();
    return scale / (double)dim * P;
}

// Uplink channel set: n_T x (sum dims) per tone, user blocks in columns,
// identity noise scaled by sigma2.
inline mcnoma::ChannelSet make_mac_channels(arma::uword n_t,
                                            const std::vector<arma::uword> &dims,
                                            arma::uword n_tones, std::uint64_t seed,
                                            double sigma2 = 1.0)
{
    mcnoma::GaussianRng rng(seed);
    arma::uword total = 0;
    for (auto d : dims)
        total += d;

    mcnoma::ChannelSet cs;
    cs.side = mcnoma::LinkSide::uplink;
    cs.seed = seed;
    arma::uword off = 0;
    for (arma::uword u = 0; u < dims.size(); ++u)
    {
        cs.partition.push_back({u, off, dims[u]});
        off += dims[u];
    }
    for (arma::uword n = 0; n < n_tones; ++n)
        cs.tones.push_back(random_cx(rng, n_t, total));
    cs.noise.assign(1, sigma2 * arma::cx_mat(arma::eye<arma::mat>(n_t, n_t),
                                             arma::mat(n_t, n_t, arma::fill::zeros)));
    return cs;
}

// Downlink channel set: (sum dims) x n_T per tone, user blocks in rows.
inline mcnoma::ChannelSet make_bc_channels(arma::uword n_t,
                                           const std::vector<arma::uword> &dims,
                                           arma::uword n_tones, std::uint64_t seed,
                                           double sigma2 = 1.0)
{
    mcnoma::GaussianRng rng(seed);
    arma::uword total = 0;
    for (auto d : dims)
        total += d;

    mcnoma::ChannelSet cs;
    cs.side = mcnoma::LinkSide::downlink;
    cs.seed = seed;
    arma::uword off = 0;
    for (arma::uword u = 0; u < dims.size(); ++u)
    {
        cs.partition.push_back({u, off, dims[u]});
        off += dims[u];
    }
    for (arma::uword n = 0; n < n_tones; ++n)
        cs.tones.push_back(random_cx(rng, total, n_t));
    cs.noise.assign(1, sigma2 * arma::cx_mat(arma::eye<arma::mat>(total, total),
                                             arma::mat(total, total, arma::fill::zeros)));
    return cs;
}

// Random PSD covariances matching a channel set's signal dimensions.
inline mcnoma::CovarianceSet make_random_covs(const mcnoma::ChannelSet &cs, std::uint64_t seed,
                                              double scale = 1.0)
{
    mcnoma::GaussianRng rng(seed);
    std::vector<arma::uword> dims(cs.num_users());
    for (const auto &s : cs.partition)
        dims[s.user] = cs.side == mcnoma::LinkSide::uplink ? s.count : cs.tones[0].n_cols;

    auto covs = mcnoma::CovarianceSet::zeros(cs.side, dims, cs.num_tones());
    for (arma::uword u = 0; u < dims.size(); ++u)
        for (arma::uword n = 0; n < cs.num_tones(); ++n)
            covs.at(u, n) = random_psd(rng, dims[u], scale);
    return covs;
}

} // namespace testutil

#endif
