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

#include "mcnoma/timeshare.hpp"

#include "mcnoma/allocator.hpp"
#include "mcnoma/common.hpp"
#include "mcnoma/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

namespace mcnoma
{

arma::vec TimeShareSchedule::average() const
{
    if (blocks.empty())
        return arma::vec();
    arma::vec avg(blocks[0].rates.n_elem, arma::fill::zeros);
    for (const auto& b : blocks)
        avg += b.fraction * b.rates;
    return avg;
}

void TimeShareSchedule::validate() const
{
    if (blocks.empty())
        throw std::invalid_argument("time-share schedule has no blocks");
    double sum = 0.0;
    for (const auto& b : blocks)
    {
        if (b.fraction < 0.0)
            throw std::invalid_argument("time-share fraction is negative");
        if (b.rates.n_elem != blocks[0].rates.n_elem)
            throw std::invalid_argument("time-share blocks disagree on user count");
        sum += b.fraction;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("time-share fractions do not sum to one");
    if (target.n_elem != blocks[0].rates.n_elem)
        throw std::invalid_argument("time-share target has the wrong user count");

    const arma::vec avg = average();
    for (arma::uword u = 0; u < target.n_elem; ++u)
        if (std::abs(avg[u] - target[u]) > 1e-6 * std::max(1.0, std::abs(target[u])))
            throw std::invalid_argument("time-share average misses the target");
}

arma::vec average_rates(const TimeShareSchedule& schedule)
{
    return schedule.average();
}

std::vector<std::vector<arma::uword>> cluster_users(const arma::vec& duals,
                                                    double tie_tol)
{
    return cluster_by_gap(duals, tie_tol);
}

std::vector<RateVertex>
enumerate_vertices(const std::vector<std::vector<arma::uword>>& clusters,
                   const ChannelSet& channels, const CovarianceSet& covariances)
{
    unsigned long long combos = 1;
    for (const auto& c : clusters)
        for (arma::uword k = 2; k <= c.size(); ++k)
            combos *= k;
    if (combos > 10080)
    {
        std::ostringstream msg;
        msg << "time sharing would enumerate " << combos
            << " decoding orders (cap 10080); tighten the tie tolerance so "
               "the multiplier clusters shrink";
        throw std::invalid_argument(msg.str());
    }

    // Within-cluster permutations run through a per-cluster odometer in
    // lexicographic order, starting from ascending user indices.
    std::vector<std::vector<arma::uword>> perm(clusters.begin(), clusters.end());
    for (auto& c : perm)
        std::sort(c.begin(), c.end());

    std::vector<RateVertex> out;
    for (;;)
    {
        // Clusters are ordered by descending multiplier; decoding runs
        // from the cheapest floor up, so walk them back to front.
        std::vector<arma::uword> seq;
        for (auto c = perm.rbegin(); c != perm.rend(); ++c)
            seq.insert(seq.end(), c->begin(), c->end());

        RateVertex v;
        v.order = DecodingOrder::from_sequence(seq);
        v.rates = sic_rates(channels, covariances, v.order).user_totals();

        const double tol = 1e-9 * std::max(1.0, arma::abs(v.rates).max());
        const bool dup =
            std::any_of(out.begin(), out.end(), [&](const RateVertex& k) {
                return arma::abs(k.rates - v.rates).max() <= tol;
            });
        if (!dup)
            out.push_back(std::move(v));

        std::size_t c = perm.size();
        while (c-- > 0)
            if (std::next_permutation(perm[c].begin(), perm[c].end()))
                break;
        if (c == (std::size_t)-1)
            break; // every odometer wheel wrapped
    }
    return out;
}

TimeShareSchedule convex_hull_fractions(const std::vector<RateVertex>& vertices,
                                        const arma::vec& target)
{
    if (vertices.empty())
        throw std::invalid_argument("no rate vertices to share time over");
    const arma::uword n_users = target.n_elem;
    for (const auto& v : vertices)
        if (v.rates.n_elem != n_users)
            throw std::invalid_argument("vertex rate vector has the wrong user count");

    arma::mat A(n_users, vertices.size());
    for (arma::uword k = 0; k < vertices.size(); ++k)
        A.col(k) = vertices[k].rates;

    // The simplex constraint rides along as a heavily weighted extra row;
    // the fractions are renormalized exactly afterwards.
    const double scale =
        std::max({1.0, arma::abs(A).max(), arma::abs(target).max()});
    const double big = 1e4 * scale;
    arma::mat Aug = arma::join_cols(A, arma::rowvec(vertices.size(), arma::fill::value(big)));
    arma::vec yug = arma::join_cols(target, arma::vec{big});

    arma::vec rho = nnls(Aug, yug);
    const double total = arma::accu(rho);
    if (total <= 0.0)
        throw infeasible_error("time-share fractions vanished; target is not "
                               "reachable from the given vertices");
    rho /= total;

    // Carathéodory: while more blocks than users + 1 carry weight, walk
    // along a null direction of the augmented vertex matrix until one
    // fraction hits zero. The average is unchanged at every step.
    std::vector<arma::uword> support;
    for (arma::uword k = 0; k < rho.n_elem; ++k)
        if (rho[k] > 1e-9)
            support.push_back(k);
    while (support.size() > n_users + 1)
    {
        arma::mat B(n_users + 1, support.size());
        for (arma::uword i = 0; i < support.size(); ++i)
            B.col(i) = arma::join_cols(A.col(support[i]), arma::vec{1.0});
        arma::mat nullsp = arma::null(B);
        if (nullsp.n_cols == 0)
            break; // numerically independent; keep the extra block
        arma::vec dir = nullsp.col(0);
        if (dir.max() <= 0.0)
            dir = -dir;
        double alpha = arma::datum::inf;
        arma::uword kill = 0;
        for (arma::uword i = 0; i < support.size(); ++i)
            if (dir[i] > 1e-14 && rho[support[i]] / dir[i] < alpha)
            {
                alpha = rho[support[i]] / dir[i];
                kill = i;
            }
        for (arma::uword i = 0; i < support.size(); ++i)
            rho[support[i]] -= alpha * dir[i];
        rho[support[kill]] = 0.0;
        support.erase(support.begin() + (std::ptrdiff_t)kill);
    }

    double kept = 0.0;
    for (auto k : support)
        kept += rho[k];
    TimeShareSchedule sched;
    sched.target = target;
    for (auto k : support)
        sched.blocks.push_back({rho[k] / kept, vertices[k].order, vertices[k].rates});

    // Hull membership check: the best nonnegative average must actually
    // reach the target.
    const arma::vec avg = sched.average();
    arma::uword worst = 0;
    double worst_abs = 0.0, worst_rel = 0.0;
    for (arma::uword u = 0; u < n_users; ++u)
    {
        const double gap = std::abs(avg[u] - target[u]);
        worst_rel = std::max(worst_rel, gap / std::max(1.0, std::abs(target[u])));
        if (gap > worst_abs)
        {
            worst_abs = gap;
            worst = u;
        }
    }
    if (worst_rel > 1e-6)
    {
        std::ostringstream msg;
        msg << "target rates lie outside the achievable time-sharing hull: "
               "user "
            << worst << " asks " << target[worst] << " but the closest average is "
            << avg[worst];
        throw infeasible_error(msg.str());
    }
    return sched;
}

} // namespace mcnoma
