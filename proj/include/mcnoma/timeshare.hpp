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
// Time sharing across decoding orders. When rate-floor multipliers tie,
// no single successive-decoding order gives every tied user its floor;
// switching between the tied orders for fractions of the symbol period
// does. This module clusters users by multiplier, enumerates the decoding
// orders that permute users within a cluster, evaluates each order's rate
// vector at the solver's covariances, and solves for the time fractions
// whose weighted rate average hits the target.

#ifndef MCNOMA_TIMESHARE_HPP
#define MCNOMA_TIMESHARE_HPP

#include "mcnoma/sic.hpp"

#include <vector>

namespace mcnoma
{

// One decoding order held for a fraction of the symbol period, with the
// per-user band rate totals achieved while it is active.
struct TimeShareBlock
{
    double fraction = 0.0;
    DecodingOrder order;
    arma::vec rates;
};

struct TimeShareSchedule
{
    std::vector<TimeShareBlock> blocks;
    arma::vec target;

    // Fraction-weighted per-user rates, sum_k rho_k * rates_k.
    arma::vec average() const;

    // Checks the schedule contract: fractions nonnegative and summing to
    // one within 1e-9, and the average matching the target within 1e-6
    // relative. Throws std::invalid_argument on violation.
    void validate() const;
};

// A decoding order together with its per-user rate totals.
struct RateVertex
{
    DecodingOrder order;
    arma::vec rates;
};

// Groups users whose multipliers sit within tie_tol (relative) of each
// other; clusters come back ordered by descending multiplier, so the
// decode-first users are in the last cluster.
std::vector<std::vector<arma::uword>> cluster_users(const arma::vec& duals,
                                                    double tie_tol = 1e-5);

// Rate vectors of every decoding order that permutes users within their
// clusters (the cluster-to-cluster order is fixed: smaller multipliers
// decode earlier). Orders whose rate vectors coincide within 1e-9 are
// reported once. The product of cluster factorials is capped at 10080;
// beyond that the ties should be re-examined with a tighter tolerance,
// and an std::invalid_argument says so.
std::vector<RateVertex>
enumerate_vertices(const std::vector<std::vector<arma::uword>>& clusters,
                   const ChannelSet& channels, const CovarianceSet& covariances);

// Time fractions over the vertices whose average hits `target`:
// nonnegative least squares on the simplex, then pruning of blocks below
// 1e-9 (at most U+1 blocks survive). Throws infeasible_error naming the
// worst-violated user when the target lies outside the convex hull of
// the vertex rates.
TimeShareSchedule convex_hull_fractions(const std::vector<RateVertex>& vertices,
                                        const arma::vec& target);

// Fraction-weighted per-user rates of a schedule.
arma::vec average_rates(const TimeShareSchedule& schedule);

} // namespace mcnoma

#endif
