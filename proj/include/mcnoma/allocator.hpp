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
// Weighted-energy minimization and sum-rate maximization over the uplink
// covariance cone. Per tone, every nonempty user subset contributes a
// log-det capacity constraint; per-tone rate variables tie the tones
// together through band-level rate floors. The solver is a log-barrier
// interior-point method: the per-tone structure keeps the Newton systems
// block diagonal apart from a handful of rank-one couplings (one per rate
// floor, plus one for the power budget in the rate-maximization mode),
// which are absorbed with the matrix inversion lemma.
//
// The multipliers on the rate floors come out of the barrier for free and
// drive everything downstream: sorting users by ascending multiplier gives
// the decoding order, and multiplier ties mark the user groups that need
// time sharing to hit their floors exactly.

#ifndef MCNOMA_ALLOCATOR_HPP
#define MCNOMA_ALLOCATOR_HPP

#include "mcnoma/duality.hpp"
#include "mcnoma/sic.hpp"

#include <utility>
#include <vector>

namespace mcnoma
{

// ---------- problem statement ----------

// Inputs for the energy-minimization design on an uplink channel set.
//
// min_rates are per-user totals across the band in bits per (vector)
// symbol: a user's rate in bits/s is min_rate * bandwidth_hz / num_tones.
// noise, when non-empty, overrides the channel set's receiver noise on
// every tone (one Hermitian PD matrix, receiver dimension squared).
struct AllocationProblem
{
    ChannelSet channels;
    arma::vec weights;
    arma::vec min_rates;
    arma::cx_mat noise;

    void validate() const;
};

// Result of a solve. `covariances` live on the same side as the channels
// that were optimized; `rates` are the successive-decoding rates of those
// covariances at `order`. With distinct multipliers the per-user rate
// totals meet the floors; when `tie_groups` has a cluster of two or more
// users, the single-order rates split the cluster's sum unevenly and a
// time-sharing schedule over within-cluster order swaps is needed to give
// every clustered user its floor (see timeshare.hpp).
struct AllocationSolution
{
    CovarianceSet covariances;
    RateAllocation rates;
    DecodingOrder order;
    arma::vec duals;                 // rate-floor multipliers, >= 0
    double energy = 0.0;             // sum_u w_u sum_n trace(Q_un)
    double kkt_residual = 0.0;       // normalized stationarity residual
    std::vector<std::vector<arma::uword>> tie_groups;
};

// ---------- operations ----------

// Groups indices whose values sit within tol * max(values, 1e-12) of each
// other (pairwise, so each group's spread stays below the tolerance).
// Groups come back ordered by descending value. Shared by the dual-tie
// detection here and by the time-sharing clustering.
std::vector<std::vector<arma::uword>> cluster_by_gap(const arma::vec& values,
                                                     double tol);

// Minimizes sum_u w_u * sum_n trace(Q_un) subject to every user's band
// rate total reaching its floor. All weights must be strictly positive: a
// zero-weight user's covariance is free and the minimizer is not unique.
// Throws infeasible_error when a user with a positive floor has an
// identically zero channel, and solver_error (with residual diagnostics in
// the message) if the iteration budget runs out before certification.
AllocationSolution minimize_energy(const AllocationProblem& problem);

// Maximizes sum_u w_u b_u over the same capacity structure with total
// transmit power capped at budget (watts across the whole band). Weights
// may contain zeros but not be all zero. The reported energy is the spent
// power, which equals the budget up to the solver gap.
AllocationSolution maximize_sum_rate(const ChannelSet& channels, double budget,
                                     const arma::vec& weights);

// Decoding order implied by the floor multipliers: smallest dual decoded
// first. The flag is true when any two users' duals fall inside
// tie_tol * max(duals), meaning no single order serves both floors.
std::pair<DecodingOrder, bool>
extract_decoding_order(const AllocationSolution& solution,
                       double tie_tol = 1e-5);

// Downlink entry point: maps the downlink channels to their uplink image,
// runs minimize_energy there, and rotates the covariances back. The
// returned solution is downlink-sided (covariances are transmit-side
// matrices, rates are the dirty-paper rates) with the uplink decoding
// order and duals attached. Rates match the uplink solution exactly; the
// energy is recomputed from the downlink covariances, which agrees with
// the uplink energy under uniform weights (the map preserves the total
// trace, not each user's share of it).
AllocationSolution solve_bc_design(const AllocationProblem& problem);

} // namespace mcnoma

#endif
