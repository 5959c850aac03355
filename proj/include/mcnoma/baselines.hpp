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
// Reference schemes the optimal allocator is measured against:
//
//  - OMA: disjoint subcarrier assignment, each user waterfilling its own
//    tones (interference-free by construction), plus a shared-band variant
//    with linear receivers that treats crosstalk as noise.
//  - NOMA: the whole band shared, one rank-one beam per user aimed along
//    its band-average dominant direction, successive decoding in a single
//    band-level channel-gain order.
//  - MC-NOMA: as NOMA but re-aimed and re-ordered per subcarrier.
//
// NOMA and MC-NOMA carry powers on scalar effective gains (the rank-one
// beams), so their power problems reduce to waterfilling: exact
// water levels in rate mode, sequential margin waterfilling against
// accumulated interference in energy mode. Reported rates are the true
// log-det successive-decoding rates of the resulting covariances, which
// never fall below the scalar model's promises.

#ifndef MCNOMA_BASELINES_HPP
#define MCNOMA_BASELINES_HPP

#include "mcnoma/allocator.hpp"
#include "mcnoma/sic.hpp"

#include <utility>
#include <vector>

namespace mcnoma
{

// Which user owns each subcarrier under OMA. `shared_band` marks tones
// carrying several users at once (NOMA-style schemes).
struct ResourcePartition
{
    static constexpr arma::uword shared_band = arma::uword(-1);
    std::vector<arma::uword> assignment; // one entry per subcarrier

    // Every entry must name a valid user or shared_band.
    void validate(arma::uword n_users) const;
};

// Waterfilling over parallel scalar channels: maximizes sum log2(1 + g p)
// subject to sum p = budget, p >= 0. Gains must be strictly positive.
// The returned active set shares one water level to machine precision.
arma::vec waterfill(const arma::vec& gains, double budget);

// Weighted variant: maximizes sum w log2(1 + g p). Zero-weight entries
// get no power.
arma::vec waterfill(const arma::vec& gains, const arma::vec& weights,
                    double budget);

// Disjoint-subcarrier OMA. Subcarriers are assigned greedily by index:
// each goes to the strongest user among those furthest below their
// proportional share, so the partition is deterministic and exact. The
// total power splits evenly across users; each user waterfills its own
// tones' eigenmodes. Requires N >= U.
std::pair<ResourcePartition, RateAllocation> oma_allocate(const ChannelSet& channels,
                                                          double total_power);

// Shared-band OMA with linear receivers: every user spreads power over
// the whole band, treating the other users' transmissions as noise.
// Per-user budgets are total_power / U; powers settle by round-robin
// iterative waterfilling (a fixed 25 sweeps, deterministic).
RateAllocation oma_linear_allocate(const ChannelSet& channels, double total_power);

// Full-band NOMA, rate mode: fixed band-level decoding order and one
// beam per user; the budget waterfills across tones on each tone's best
// effective gain.
AllocationSolution noma_allocate(const ChannelSet& channels, double total_power,
                                 const arma::vec& weights);

// Full-band NOMA, energy mode: minimum weighted power meeting the rate
// floors with the decoding order fixed by band channel gains. Sequential
// margin waterfilling, cleanly decoded user first.
AllocationSolution noma_allocate(const ChannelSet& channels, const arma::vec& weights,
                                 const arma::vec& min_rates);

// Per-subcarrier NOMA, rate mode: per-tone beams and per-tone decoding
// orders (by per-tone channel magnitude).
AllocationSolution mc_noma_allocate(const ChannelSet& channels, double total_power,
                                    const arma::vec& weights);

// Per-subcarrier NOMA, energy mode: floors met by round-robin margin
// waterfilling against the per-tone interference structure.
AllocationSolution mc_noma_allocate(const ChannelSet& channels, const arma::vec& weights,
                                    const arma::vec& min_rates);

} // namespace mcnoma

#endif
