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
// Subcarriers are independent in every hot loop of this project, so the
// heavy computations are organized as per-tone kernels parallelized with
// OpenMP. Each kernel keeps a plain serial twin in kernels::serial, written
// as straight loops (and where possible via a different factorization
// route), used by the tests as a reference and by the benchmark tool for
// speedup measurements.

#ifndef MCNOMA_KERNELS_HPP
#define MCNOMA_KERNELS_HPP

#include "mcnoma/sic.hpp"

#include <armadillo>
#include <vector>

namespace mcnoma
{
namespace kernels
{

// DFT of an L-tap impulse response onto n_tones uniformly spaced tones:
// out(n) = sum_l taps(l) exp(-2 pi i n l / n_tones).
arma::cx_vec taps_to_tones(const arma::cx_vec &taps, arma::uword n_tones);

// Chain rule rates for all users and tones; see sic_rates for the contract.
arma::mat chain_rates(const ChannelSet &channels, const CovarianceSet &covs,
                      const DecodingOrder &order);

// Capacity log-det ratios for a batch of user subsets on every tone;
// out(s, n) is the bound for subsets[s] on tone n.
arma::mat subset_capacities(const ChannelSet &channels, const CovarianceSet &covs,
                            const std::vector<std::vector<arma::uword>> &subsets);

namespace serial
{

arma::cx_vec taps_to_tones(const arma::cx_vec &taps, arma::uword n_tones);

arma::mat chain_rates(const ChannelSet &channels, const CovarianceSet &covs,
                      const DecodingOrder &order);

arma::mat subset_capacities(const ChannelSet &channels, const CovarianceSet &covs,
                            const std::vector<std::vector<arma::uword>> &subsets);

} // namespace serial

} // namespace kernels
} // namespace mcnoma

#endif
