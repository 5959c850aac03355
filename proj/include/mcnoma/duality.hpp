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
//
// Downlink designs are found by solving the equivalent uplink problem and
// mapping the result back. The uplink image of a downlink channel is its
// conjugate transpose wrapped in block-reversing permutations, and uplink
// covariances map to downlink ones through a per-user rotation that keeps
// every user's rate and the total transmit power unchanged.
//
// Order convention, fixed project-wide: the downlink user whose interference
// is fully pre-cancelled (encoded last) is the uplink user decoded first.
// Equivalently, downlink encoding order is uplink decoding order reversed.

#ifndef MCNOMA_DUALITY_HPP
#define MCNOMA_DUALITY_HPP

#include "mcnoma/sic.hpp"

#include <vector>

namespace mcnoma
{

// Block-reversing permutation pair for one link. tx_permutation acts on the
// transmit dimension from the left, rx_permutation on the receive dimension
// from the right.
struct DualityMaps
{
    arma::mat tx_permutation;
    arma::mat rx_permutation;
    std::vector<arma::uword> tx_dims;
    std::vector<arma::uword> rx_dims;
};

// Anti-diagonal block layout: user u's block lands at the reversed block
// position. Single-user dims give identities.
DualityMaps permutation_matrices(const std::vector<arma::uword> &tx_dims,
                                 const std::vector<arma::uword> &rx_dims);

// Uplink image of a downlink channel set: per tone P_T * H^H * P_R, with the
// user column blocks in reversed order. The uplink noise level is the mean
// of the downlink noise diagonal (they coincide for the uniform noise this
// project generates).
ChannelSet bc_to_mac_channel(const ChannelSet &bc, const DualityMaps &maps);

// Map uplink covariances (dims = user antennas) to downlink transmit
// covariances (dims = n_T) such that, under `order` on the uplink and the
// reversed encoding order on the downlink, every user's rate and the summed
// trace are preserved. Requires uniform white noise across receive antennas.
CovarianceSet mac_to_bc_covariances(const ChannelSet &bc, const CovarianceSet &mac_covs,
                                    const DecodingOrder &order);

// Per-user downlink rates for transmit covariances produced by
// mac_to_bc_covariances, evaluated against the same uplink decode order.
// The user at uplink decode position k faces interference from positions
// < k only (their signals are not pre-cancelled for this user).
RateAllocation bc_dpc_rates(const ChannelSet &bc, const CovarianceSet &bc_covs,
                            const DecodingOrder &mac_order);

} // namespace mcnoma

#endif
