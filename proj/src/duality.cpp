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

#include "mcnoma/duality.hpp"
#include "mcnoma/linalg.hpp"

#include <stdexcept>

namespace mcnoma
{

// ---------- PERMUTATION MAPS ----------

// Left-multiplying block reverser: input block u (natural position) lands at
// the reversed block position. The right-multiplying counterpart is its
// transpose.
static arma::mat block_reverser(const std::vector<arma::uword> &dims)
{
    arma::uword total = 0;
    for (auto d : dims)
        total += d;

    arma::mat P(total, total, arma::fill::zeros);
    arma::uword col = 0;
    for (std::size_t u = 0; u < dims.size(); ++u)
    {
        arma::uword row = 0;
        for (std::size_t v = u + 1; v < dims.size(); ++v)
            row += dims[v];
        for (arma::uword i = 0; i < dims[u]; ++i)
            P(row + i, col + i) = 1.0;
        col += dims[u];
    }
    return P;
}

DualityMaps permutation_matrices(const std::vector<arma::uword> &tx_dims,
                                 const std::vector<arma::uword> &rx_dims)
{
    if (tx_dims.empty() || rx_dims.empty())
        throw std::invalid_argument("permutation_matrices: empty dimension list");
    for (auto d : tx_dims)
        if (d < 1)
            throw std::invalid_argument("permutation_matrices: tx dims must be positive");
    for (auto d : rx_dims)
        if (d < 1)
            throw std::invalid_argument("permutation_matrices: rx dims must be positive");

    DualityMaps maps;
    maps.tx_dims = tx_dims;
    maps.rx_dims = rx_dims;
    maps.tx_permutation = block_reverser(tx_dims);
    maps.rx_permutation = block_reverser(rx_dims).t();
    return maps;
}

// ---------- CHANNEL TRANSFORM ----------

ChannelSet bc_to_mac_channel(const ChannelSet &bc, const DualityMaps &maps)
{
    bc.validate();
    if (bc.side != LinkSide::downlink)
        throw std::invalid_argument("bc_to_mac_channel: input must be a downlink set");

    const arma::uword n_t = bc.tones[0].n_cols;
    const arma::uword n_r = bc.tones[0].n_rows;
    if (maps.tx_permutation.n_rows != n_t || maps.rx_permutation.n_rows != n_r)
        throw std::invalid_argument("bc_to_mac_channel: permutation shape mismatch");
    if (maps.rx_dims.size() != bc.num_users())
        throw std::invalid_argument("bc_to_mac_channel: user count mismatch");
    for (arma::uword u = 0; u < bc.num_users(); ++u)
        if (maps.rx_dims[u] != bc.span_of(u).count)
            throw std::invalid_argument("bc_to_mac_channel: rx block dims mismatch");

    ChannelSet mac;
    mac.side = LinkSide::uplink;
    mac.seed = bc.seed;
    mac.scenario_hash = bc.scenario_hash;

    for (const auto &H : bc.tones)
        mac.tones.push_back(maps.tx_permutation * H.t() * maps.rx_permutation);

    // User u's columns land at the reversed block offset.
    for (arma::uword u = 0; u < bc.num_users(); ++u)
    {
        arma::uword off = 0;
        for (arma::uword v = u + 1; v < bc.num_users(); ++v)
            off += maps.rx_dims[v];
        mac.partition.push_back({u, off, maps.rx_dims[u]});
    }

    for (const auto &R : bc.noise)
    {
        double level = arma::mean(arma::real(R.diag()));
        mac.noise.push_back(level * arma::cx_mat(arma::eye<arma::mat>(n_t, n_t),
                                                 arma::mat(n_t, n_t, arma::fill::zeros)));
    }

    mac.validate();
    return mac;
}

// ---------- COVARIANCE TRANSFORM ----------

// The downlink noise must be white and uniform for the closed-form rotation
// below; returns its level.
static double uniform_noise_level(const ChannelSet &bc)
{
    double level = -1.0;
    for (const auto &R : bc.noise)
    {
        arma::vec d = arma::real(R.diag());
        double lo = d.min(), hi = d.max();
        if (hi - lo > 1e-9 * hi)
            throw std::invalid_argument("duality: receive noise must be uniform across antennas");
        arma::cx_mat off = R;
        off.diag().zeros();
        if (arma::abs(off).max() > 1e-9 * hi)
            throw std::invalid_argument("duality: receive noise must be white");
        if (level < 0.0)
            level = hi;
        else if (std::abs(level - hi) > 1e-9 * hi)
            throw std::invalid_argument("duality: receive noise must match across tones");
    }
    return level;
}

CovarianceSet mac_to_bc_covariances(const ChannelSet &bc, const CovarianceSet &mac_covs,
                                    const DecodingOrder &order)
{
    bc.validate();
    order.validate();
    if (bc.side != LinkSide::downlink)
        throw std::invalid_argument("mac_to_bc_covariances: channel set must be downlink");

    const arma::uword U = bc.num_users();
    const arma::uword N = bc.num_tones();
    const arma::uword n_t = bc.tones[0].n_cols;
    if (mac_covs.num_users() != U || mac_covs.n_tones != N)
        throw std::invalid_argument("mac_to_bc_covariances: covariance set mismatch");
    if (order.num_users() != U)
        throw std::invalid_argument("mac_to_bc_covariances: order size mismatch");
    for (arma::uword u = 0; u < U; ++u)
        if (mac_covs.dims[u] != bc.span_of(u).count)
            throw std::invalid_argument("mac_to_bc_covariances: uplink covariance dims must "
                                        "match user antenna counts");

    const double sigma2 = uniform_noise_level(bc);
    const double inv_sig = 1.0 / std::sqrt(sigma2);

    auto bc_covs = CovarianceSet::zeros(LinkSide::downlink,
                                        std::vector<arma::uword>(U, n_t), N);

    for (arma::uword n = 0; n < N; ++n)
    {
        // Whitened user blocks on this tone and their uplink images.
        std::vector<arma::cx_mat> Hw(U);
        for (arma::uword u = 0; u < U; ++u)
            Hw[u] = inv_sig * bc.block(u, n);

        // Uplink interference-plus-noise seen by each decode position:
        // everything decoded later is still present. Build suffix sums.
        std::vector<arma::cx_mat> B(U);
        arma::cx_mat acc(n_t, n_t, arma::fill::eye);
        for (arma::uword k = U; k-- > 0;)
        {
            B[k] = acc;
            const arma::uword u = order.user_at[k];
            acc += Hw[u].t() * mac_covs.at(u, n) * Hw[u];
        }

        // Walk decode positions first to last; downlink interference grows
        // with the covariances already transformed.
        arma::cx_mat bc_acc(n_t, n_t, arma::fill::zeros);
        for (arma::uword k = 0; k < U; ++k)
        {
            const arma::uword u = order.user_at[k];
            const arma::uword d = bc.span_of(u).count;

            arma::cx_mat A =
                arma::cx_mat(arma::eye<arma::mat>(d, d), arma::mat(d, d, arma::fill::zeros)) +
                Hw[u] * bc_acc * Hw[u].t();

            arma::cx_mat Bis = invsqrt_pd(B[k]);
            arma::cx_mat Ais = invsqrt_pd(A);
            arma::cx_mat Asq = sqrt_psd(A);

            // Rotation aligning the flipped effective channel's input and
            // output spaces; rank deficiency is handled by the economical
            // SVD (unused directions simply carry no power).
            arma::cx_mat F, G;
            arma::vec sv;
            if (!arma::svd_econ(F, sv, G, arma::cx_mat(Bis * Hw[u].t() * Ais)))
                throw std::runtime_error("mac_to_bc_covariances: SVD failed");

            arma::cx_mat rot = Bis * F * G.t() * Asq;
            bc_covs.at(u, n) = rot * mac_covs.at(u, n) * rot.t();
            bc_acc += bc_covs.at(u, n);
        }
    }

    bc_covs.clip();
    return bc_covs;
}

// ---------- DOWNLINK RATES ----------

RateAllocation bc_dpc_rates(const ChannelSet &bc, const CovarianceSet &bc_covs,
                            const DecodingOrder &mac_order)
{
    bc.validate();
    mac_order.validate();
    if (bc.side != LinkSide::downlink)
        throw std::invalid_argument("bc_dpc_rates: channel set must be downlink");

    const arma::uword U = bc.num_users();
    const arma::uword N = bc.num_tones();
    if (bc_covs.num_users() != U || bc_covs.n_tones != N)
        throw std::invalid_argument("bc_dpc_rates: covariance set mismatch");

    RateAllocation r;
    r.bits.zeros(U, N);

#pragma omp parallel for schedule(static)
    for (arma::uword n = 0; n < N; ++n)
    {
        for (arma::uword u = 0; u < U; ++u)
        {
            const UserSpan &s = bc.span_of(u);
            arma::cx_mat H = bc.block(u, n);
            arma::cx_mat Rn = bc.noise_on(n).submat(s.offset, s.offset, s.offset + s.count - 1,
                                                    s.offset + s.count - 1);

            // Interference: users at earlier uplink decode positions.
            arma::cx_mat inter(bc.tones[0].n_cols, bc.tones[0].n_cols, arma::fill::zeros);
            for (arma::uword k = 0; k < mac_order.position_of[u]; ++k)
                inter += bc_covs.at(mac_order.user_at[k], n);

            arma::cx_mat S_int = Rn + H * inter * H.t();
            arma::cx_mat S_all = S_int + H * bc_covs.at(u, n) * H.t();
            r.bits(u, n) = std::max(logdet_pd_bits(S_all) - logdet_pd_bits(S_int), 0.0);
        }
    }
    return r;
}

} // namespace mcnoma
