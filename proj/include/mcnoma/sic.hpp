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

#ifndef MCNOMA_SIC_HPP
#define MCNOMA_SIC_HPP

#include "mcnoma/channel.hpp"

#include <armadillo>
#include <vector>

namespace mcnoma
{

// ---------- DECODING ORDER ----------

// A decode schedule over users. user_at[k] is the user decoded at position k
// (position 0 first); position_of is its inverse. A user decoded early is
// received in the presence of every later-decoded signal; a user decoded
// last sees no multi-user interference at all.
struct DecodingOrder
{
    std::vector<arma::uword> user_at;
    std::vector<arma::uword> position_of;

    static DecodingOrder identity(arma::uword num_users);

    // Build from the decode sequence (first-decoded user first). Throws
    // std::invalid_argument unless the sequence is a permutation of 0..U-1.
    static DecodingOrder from_sequence(const std::vector<arma::uword> &first_to_last);

    arma::uword num_users() const { return user_at.size(); }
    bool operator==(const DecodingOrder &o) const { return user_at == o.user_at; }

    void validate() const;
};

// ---------- COVARIANCES AND RATES ----------

// Per (user, subcarrier) Hermitian PSD signal covariances. The matrix
// dimension is the user's signal dimension: the per-user antenna count on the
// uplink side, the full transmit dimension n_T on the downlink side.
struct CovarianceSet
{
    LinkSide side = LinkSide::uplink;
    arma::uword n_tones = 0;
    std::vector<arma::uword> dims; // per user
    std::vector<arma::cx_mat> mats; // index u * n_tones + n

    static CovarianceSet zeros(LinkSide side, const std::vector<arma::uword> &dims,
                               arma::uword n_tones);

    arma::uword num_users() const { return dims.size(); }

    arma::cx_mat &at(arma::uword u, arma::uword n) { return mats[u * n_tones + n]; }
    const arma::cx_mat &at(arma::uword u, arma::uword n) const { return mats[u * n_tones + n]; }

    double total_trace() const;

    // Sum over users of w(u) * sum over tones of trace. Real parts; the
    // imaginary parts of a valid set's diagonals are zero.
    double weighted_trace(const arma::vec &w) const;

    // Hermitian within 1e-10 and eigenvalues >= -1e-9 (both relative to the
    // matrix scale); throws std::invalid_argument otherwise.
    void validate() const;

    // Project every matrix onto the PSD cone (symmetrize + clip negative
    // eigenvalues). Call after arithmetic that may break PSD by roundoff.
    void clip();
};

struct RateAllocation
{
    arma::mat bits; // U x N, bits per subcarrier use

    arma::vec user_totals() const { return arma::sum(bits, 1); }
    double sum_bits() const { return arma::accu(bits); }

    // Per-user throughput in Mbps for a band of the given width split evenly
    // over the allocation's subcarriers.
    arma::vec user_mbps(double bandwidth_hz) const;
};

// ---------- RATE COMPUTATIONS ----------

// Chain rule rates for one decode schedule: the user at position k gets
//   b = log2 |S_k| - log2 |S_{k+1}|,  S_k = R_nn + sum_{j >= k} X_j,
// where X_j is the received covariance contribution of the user decoded at
// position j. Later-decoded users are therefore interference to earlier
// ones, and the totals telescope to the full log-det for any schedule.
//
// Contributions by side: uplink, X_u = G_u Q_u G_u^H with G_u the user's
// column block; downlink, X_u = H R_u H^H with H the full tone matrix, since
// every transmit covariance reaches all receive rows.
RateAllocation sic_rates(const ChannelSet &channels, const CovarianceSet &covs,
                         const DecodingOrder &order);

// log2 |R_nn + sum_{u in subset} X_u| - log2 |R_nn| for one subcarrier.
double subset_capacity(const ChannelSet &channels, const CovarianceSet &covs,
                       const std::vector<arma::uword> &subset, arma::uword n);

// Users sorted by ascending aggregate channel power sum_n ||H_u,n||_F^2, so
// the weakest user is decoded first. Exact ties keep user-index order; the
// flag reports whether any tie occurred.
std::pair<DecodingOrder, bool> channel_gain_order(const ChannelSet &channels);

} // namespace mcnoma

#endif
