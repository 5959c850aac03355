// SPDX-License-Identifier: Apache-2.0
//
// mcnoma: optimal power and subcarrier allocation with time sharing for
// low-rank multi-user downlink channels
// Copyright (C) 2026 mcnoma contributors
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

#include "mcnoma/kernels.hpp"
#include "mcnoma/linalg.hpp"

#include <stdexcept>

namespace mcnoma
{
namespace kernels
{

// Received covariance contribution of user u on tone n. On the uplink the
// user's column block carries its own signal; on the downlink every transmit
// covariance reaches the full receive stack.
static arma::cx_mat user_contribution(const ChannelSet &ch, const CovarianceSet &covs,
                                      arma::uword u, arma::uword n)
{
    if (ch.side == LinkSide::uplink)
    {
        arma::cx_mat G = ch.block(u, n);
        return G * covs.at(u, n) * G.t();
    }
    const arma::cx_mat &H = ch.tones[n];
    return H * covs.at(u, n) * H.t();
}

// ---------- TAP DFT ----------

arma::cx_vec taps_to_tones(const arma::cx_vec &taps, arma::uword n_tones)
{
    const arma::uword L = taps.n_elem;
    arma::cx_vec out(n_tones);

#pragma omp parallel for schedule(static)
    for (arma::uword n = 0; n < n_tones; ++n)
    {
        arma::cx_double acc(0.0, 0.0);
        for (arma::uword l = 0; l < L; ++l)
        {
            double phase = -2.0 * arma::datum::pi * (double)(n * l) / (double)n_tones;
            acc += taps(l) * std::polar(1.0, phase);
        }
        out(n) = acc;
    }
    return out;
}

// ---------- CHAIN RULE RATES ----------

arma::mat chain_rates(const ChannelSet &ch, const CovarianceSet &covs, const DecodingOrder &order)
{
    const arma::uword U = ch.num_users();
    const arma::uword N = ch.num_tones();
    arma::mat bits(U, N, arma::fill::zeros);

#pragma omp parallel for schedule(static)
    for (arma::uword n = 0; n < N; ++n)
    {
        arma::cx_mat S = ch.noise_on(n);
        double prev = logdet_pd_bits(S);
        for (arma::uword k = U; k-- > 0;)
        {
            const arma::uword u = order.user_at[k];
            S += user_contribution(ch, covs, u, n);
            double cur = logdet_pd_bits(S);
            bits(u, n) = std::max(cur - prev, 0.0);
            prev = cur;
        }
    }
    return bits;
}

// ---------- SUBSET CAPACITY BOUNDS ----------

arma::mat subset_capacities(const ChannelSet &ch, const CovarianceSet &covs,
                            const std::vector<std::vector<arma::uword>> &subsets)
{
    const arma::uword N = ch.num_tones();
    arma::mat out(subsets.size(), N, arma::fill::zeros);

#pragma omp parallel for schedule(static)
    for (arma::uword n = 0; n < N; ++n)
    {
        const double base = logdet_pd_bits(ch.noise_on(n));
        for (std::size_t s = 0; s < subsets.size(); ++s)
        {
            arma::cx_mat S = ch.noise_on(n);
            for (arma::uword u : subsets[s])
                S += user_contribution(ch, covs, u, n);
            out(s, n) = std::max(logdet_pd_bits(S) - base, 0.0);
        }
    }
    return out;
}

// ---------- SERIAL REFERENCES ----------
//
// Same contracts, straight loops, and log-dets through the generic LU route
// instead of Cholesky so the parallel kernels are checked against an
// independent factorization.

namespace serial
{

static double logdet_lu_bits(const arma::cx_mat &X)
{
    arma::cx_double ld = arma::log_det(X);
    return ld.real() / std::log(2.0);
}

arma::cx_vec taps_to_tones(const arma::cx_vec &taps, arma::uword n_tones)
{
    arma::cx_vec out(n_tones);
    for (arma::uword n = 0; n < n_tones; ++n)
    {
        arma::cx_double acc(0.0, 0.0);
        for (arma::uword l = 0; l < taps.n_elem; ++l)
        {
            double phase = -2.0 * arma::datum::pi * (double)(n * l) / (double)n_tones;
            acc += taps(l) * std::polar(1.0, phase);
        }
        out(n) = acc;
    }
    return out;
}

arma::mat chain_rates(const ChannelSet &ch, const CovarianceSet &covs, const DecodingOrder &order)
{
    const arma::uword U = ch.num_users();
    const arma::uword N = ch.num_tones();
    arma::mat bits(U, N, arma::fill::zeros);

    for (arma::uword n = 0; n < N; ++n)
        for (arma::uword k = 0; k < U; ++k)
        {
            arma::cx_mat hi = ch.noise_on(n);
            arma::cx_mat lo = ch.noise_on(n);
            for (arma::uword j = k; j < U; ++j)
                hi += user_contribution(ch, covs, order.user_at[j], n);
            for (arma::uword j = k + 1; j < U; ++j)
                lo += user_contribution(ch, covs, order.user_at[j], n);
            bits(order.user_at[k], n) = std::max(logdet_lu_bits(hi) - logdet_lu_bits(lo), 0.0);
        }
    return bits;
}

arma::mat subset_capacities(const ChannelSet &ch, const CovarianceSet &covs,
                            const std::vector<std::vector<arma::uword>> &subsets)
{
    const arma::uword N = ch.num_tones();
    arma::mat out(subsets.size(), N, arma::fill::zeros);

    for (arma::uword n = 0; n < N; ++n)
        for (std::size_t s = 0; s < subsets.size(); ++s)
        {
            arma::cx_mat S = ch.noise_on(n);
            for (arma::uword u : subsets[s])
                S += user_contribution(ch, covs, u, n);
            out(s, n) = std::max(logdet_lu_bits(S) - logdet_lu_bits(ch.noise_on(n)), 0.0);
        }
    return out;
}

} // namespace serial

} // namespace kernels
} // namespace mcnoma
