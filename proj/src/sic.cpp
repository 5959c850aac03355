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

#include "mcnoma/sic.hpp"
#include "mcnoma/kernels.hpp"
#include "mcnoma/linalg.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace mcnoma
{

// ---------- DECODING ORDER ----------

DecodingOrder DecodingOrder::identity(arma::uword num_users)
{
    DecodingOrder d;
    d.user_at.resize(num_users);
    d.position_of.resize(num_users);
    std::iota(d.user_at.begin(), d.user_at.end(), 0);
    std::iota(d.position_of.begin(), d.position_of.end(), 0);
    return d;
}

DecodingOrder DecodingOrder::from_sequence(const std::vector<arma::uword> &first_to_last)
{
    DecodingOrder d;
    d.user_at = first_to_last;
    d.position_of.assign(first_to_last.size(), 0);
    std::vector<bool> seen(first_to_last.size(), false);
    for (arma::uword k = 0; k < first_to_last.size(); ++k)
    {
        arma::uword u = first_to_last[k];
        if (u >= first_to_last.size() || seen[u])
            throw std::invalid_argument("DecodingOrder: sequence is not a permutation");
        seen[u] = true;
        d.position_of[u] = k;
    }
    return d;
}

void DecodingOrder::validate() const
{
    if (user_at.size() != position_of.size())
        throw std::invalid_argument("DecodingOrder: inverse size mismatch");
    std::vector<bool> seen(user_at.size(), false);
    for (arma::uword k = 0; k < user_at.size(); ++k)
    {
        arma::uword u = user_at[k];
        if (u >= user_at.size() || seen[u])
            throw std::invalid_argument("DecodingOrder: not a permutation");
        seen[u] = true;
        if (position_of[u] != k)
            throw std::invalid_argument("DecodingOrder: inverse does not compose to identity");
    }
}

// ---------- COVARIANCE SET ----------

CovarianceSet CovarianceSet::zeros(LinkSide side, const std::vector<arma::uword> &dims,
                                   arma::uword n_tones)
{
    CovarianceSet c;
    c.side = side;
    c.n_tones = n_tones;
    c.dims = dims;
    c.mats.reserve(dims.size() * n_tones);
    for (arma::uword u = 0; u < dims.size(); ++u)
        for (arma::uword n = 0; n < n_tones; ++n)
            c.mats.emplace_back(dims[u], dims[u], arma::fill::zeros);
    return c;
}

double CovarianceSet::total_trace() const
{
    double acc = 0.0;
    for (const auto &M : mats)
        acc += arma::trace(M).real();
    return acc;
}

double CovarianceSet::weighted_trace(const arma::vec &w) const
{
    if (w.n_elem != num_users())
        throw std::invalid_argument("CovarianceSet: weight length mismatch");
    double acc = 0.0;
    for (arma::uword u = 0; u < num_users(); ++u)
        for (arma::uword n = 0; n < n_tones; ++n)
            acc += w(u) * arma::trace(at(u, n)).real();
    return acc;
}

void CovarianceSet::validate() const
{
    if (dims.size() * n_tones != mats.size())
        throw std::invalid_argument("CovarianceSet: matrix count mismatch");
    for (arma::uword u = 0; u < num_users(); ++u)
        for (arma::uword n = 0; n < n_tones; ++n)
        {
            const arma::cx_mat &M = at(u, n);
            if (M.n_rows != dims[u] || M.n_cols != dims[u])
                throw std::invalid_argument("CovarianceSet: wrong matrix dimension for user " +
                                            std::to_string(u));
            double scale = std::max(1.0, arma::abs(M).max());
            if (arma::abs(M - M.t()).max() > 1e-10 * scale)
                throw std::invalid_argument("CovarianceSet: matrix not Hermitian (user " +
                                            std::to_string(u) + ", tone " + std::to_string(n) +
                                            ")");
            arma::vec ev = arma::eig_sym(arma::cx_mat(0.5 * (M + M.t())));
            if (ev.min() < -1e-9 * scale)
                throw std::invalid_argument("CovarianceSet: matrix not PSD (user " +
                                            std::to_string(u) + ", tone " + std::to_string(n) +
                                            ")");
        }
}

void CovarianceSet::clip()
{
    for (auto &M : mats)
        M = hermitian_clip(M);
}

// ---------- RATE ALLOCATION ----------

arma::vec RateAllocation::user_mbps(double bandwidth_hz) const
{
    double hz_per_tone = bandwidth_hz / (double)bits.n_cols;
    return user_totals() * hz_per_tone / 1e6;
}

// ---------- PUBLIC OPERATIONS ----------

static void check_shapes(const ChannelSet &ch, const CovarianceSet &covs)
{
    ch.validate();
    if (covs.num_users() != ch.num_users() || covs.n_tones != ch.num_tones())
        throw std::invalid_argument("sic: covariance set does not match channel set");
    for (const auto &s : ch.partition)
    {
        arma::uword want = (ch.side == LinkSide::uplink) ? s.count : ch.tones[0].n_cols;
        if (covs.dims[s.user] != want)
            throw std::invalid_argument("sic: covariance dimension mismatch for user " +
                                        std::to_string(s.user));
    }
}

RateAllocation sic_rates(const ChannelSet &channels, const CovarianceSet &covs,
                         const DecodingOrder &order)
{
    check_shapes(channels, covs);
    order.validate();
    if (order.num_users() != channels.num_users())
        throw std::invalid_argument("sic_rates: order size mismatch");

    RateAllocation r;
    r.bits = kernels::chain_rates(channels, covs, order);
    return r;
}

double subset_capacity(const ChannelSet &channels, const CovarianceSet &covs,
                       const std::vector<arma::uword> &subset, arma::uword n)
{
    check_shapes(channels, covs);
    if (subset.empty())
        throw std::invalid_argument("subset_capacity: empty subset");
    if (n >= channels.num_tones())
        throw std::invalid_argument("subset_capacity: tone index out of range");
    for (arma::uword u : subset)
        if (u >= channels.num_users())
            throw std::invalid_argument("subset_capacity: user index out of range");

    const double base = logdet_pd_bits(channels.noise_on(n));
    arma::cx_mat S = channels.noise_on(n);
    for (arma::uword u : subset)
    {
        if (channels.side == LinkSide::uplink)
        {
            arma::cx_mat G = channels.block(u, n);
            S += G * covs.at(u, n) * G.t();
        }
        else
            S += channels.tones[n] * covs.at(u, n) * channels.tones[n].t();
    }
    return std::max(logdet_pd_bits(S) - base, 0.0);
}

std::pair<DecodingOrder, bool> channel_gain_order(const ChannelSet &channels)
{
    channels.validate();
    const arma::uword U = channels.num_users();

    arma::vec gain(U, arma::fill::zeros);
    for (arma::uword u = 0; u < U; ++u)
        for (arma::uword n = 0; n < channels.num_tones(); ++n)
            gain(u) += std::pow(arma::norm(channels.block(u, n), "fro"), 2);

    std::vector<arma::uword> seq(U);
    std::iota(seq.begin(), seq.end(), 0);
    std::stable_sort(seq.begin(), seq.end(),
                     [&](arma::uword a, arma::uword b) { return gain(a) < gain(b); });

    bool tie = false;
    for (arma::uword k = 0; k + 1 < U; ++k)
        if (gain(seq[k]) == gain(seq[k + 1]))
            tie = true;

    return {DecodingOrder::from_sequence(seq), tie};
}

} // namespace mcnoma
