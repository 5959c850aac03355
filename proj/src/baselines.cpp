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

#include "mcnoma/baselines.hpp"

#include "mcnoma/common.hpp"
#include "mcnoma/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

namespace mcnoma
{

namespace
{

// Noise-whitened per-user channel blocks, so unit noise everywhere below.
std::vector<std::vector<arma::cx_mat>> whiten(const ChannelSet& cs)
{
    const arma::uword U = cs.num_users();
    const arma::uword N = cs.num_tones();
    std::vector<std::vector<arma::cx_mat>> G(U, std::vector<arma::cx_mat>(N));
    for (arma::uword n = 0; n < N; ++n)
    {
        const arma::cx_mat W = invsqrt_pd(cs.noise_on(n));
        for (arma::uword u = 0; u < U; ++u)
            G[u][n] = W * cs.block(u, n);
    }
    return G;
}

void require_uplink(const ChannelSet& cs)
{
    cs.validate();
    if (cs.side != LinkSide::uplink)
        throw std::invalid_argument(
            "baseline schemes run on the uplink channel form");
}

// One rank-one beam per (user, tone): the unit signaling direction and
// the effective scalar gain it buys. NOMA aims one band-level beam per
// user; MC-NOMA re-aims on every tone.
struct Beams
{
    std::vector<std::vector<arma::cx_vec>> dir; // [u][n], unit length
    arma::mat gain;                             // effective |G v|^2, U x N
};

Beams per_tone_beams(const std::vector<std::vector<arma::cx_mat>>& G)
{
    const arma::uword U = G.size();
    const arma::uword N = G[0].size();
    Beams b;
    b.dir.assign(U, std::vector<arma::cx_vec>(N));
    b.gain.zeros(U, N);
    for (arma::uword u = 0; u < U; ++u)
        for (arma::uword n = 0; n < N; ++n)
        {
            arma::cx_mat Uv, V;
            arma::vec s;
            arma::svd(Uv, s, V, G[u][n]);
            b.dir[u][n] = V.col(0);
            b.gain(u, n) = s[0] * s[0];
        }
    return b;
}

Beams band_beams(const std::vector<std::vector<arma::cx_mat>>& G)
{
    const arma::uword U = G.size();
    const arma::uword N = G[0].size();
    Beams b;
    b.dir.assign(U, std::vector<arma::cx_vec>(N));
    b.gain.zeros(U, N);
    for (arma::uword u = 0; u < U; ++u)
    {
        arma::cx_mat stacked(0, G[u][0].n_cols);
        for (arma::uword n = 0; n < N; ++n)
            stacked = arma::join_cols(stacked, G[u][n]);
        arma::cx_mat Uv, V;
        arma::vec s;
        arma::svd(Uv, s, V, stacked);
        const arma::cx_vec v = V.col(0);
        for (arma::uword n = 0; n < N; ++n)
        {
            b.dir[u][n] = v;
            b.gain(u, n) = std::pow(arma::norm(G[u][n] * v, 2), 2.0);
        }
    }
    return b;
}

// Cheapest power buying `bits` over tones with per-watt SNRs c (zeros are
// dead tones). Empty active set cannot happen for bits > 0 unless every
// gain is zero, which the caller treats as infeasible.
arma::vec margin_waterfill(const arma::vec& c, double bits)
{
    const arma::uword n = c.n_elem;
    arma::vec p(n, arma::fill::zeros);
    if (bits <= 0.0)
        return p;

    arma::uvec idx = arma::sort_index(c, "descend");
    double log_sum = 0.0, mu = 0.0;
    arma::uword active = 0;
    for (arma::uword k = 0; k < n && c[idx[k]] > 0.0; ++k)
    {
        log_sum += std::log(c[idx[k]]);
        const double trial =
            std::exp((bits * std::log(2.0) - log_sum) / (double)(k + 1));
        if (trial * c[idx[k]] <= 1.0)
            break;
        mu = trial;
        active = k + 1;
    }
    for (arma::uword i = 0; i < active; ++i)
        p[idx[i]] = mu - 1.0 / c[idx[i]];
    return p;
}

// Rank-one covariances from per-(user,tone) powers and beams.
CovarianceSet rank_one_covs(const ChannelSet& cs, const Beams& beams,
                            const arma::mat& power)
{
    const arma::uword U = cs.num_users();
    const arma::uword N = cs.num_tones();
    std::vector<arma::uword> dims(U);
    for (arma::uword u = 0; u < U; ++u)
        dims[u] = cs.span_of(u).count;
    auto covs = CovarianceSet::zeros(LinkSide::uplink, dims, N);
    for (arma::uword u = 0; u < U; ++u)
        for (arma::uword n = 0; n < N; ++n)
            if (power(u, n) > 0.0)
                covs.at(u, n) =
                    power(u, n) * beams.dir[u][n] * beams.dir[u][n].t();
    return covs;
}

AllocationSolution wrap_solution(const ChannelSet& cs, const Beams& beams,
                                 const arma::mat& power, const DecodingOrder& order,
                                 const arma::vec& weights)
{
    AllocationSolution sol;
    sol.covariances = rank_one_covs(cs, beams, power);
    sol.order = order;
    sol.duals.zeros(cs.num_users());
    sol.rates = sic_rates(cs, sol.covariances, order);
    sol.energy = sol.covariances.weighted_trace(weights);
    sol.kkt_residual = 0.0; // heuristic schemes carry no certificate
    return sol;
}

void check_rate_inputs(const ChannelSet& cs, double budget, const arma::vec& weights)
{
    require_uplink(cs);
    if (!(budget > 0.0) || !std::isfinite(budget))
        throw std::invalid_argument("power budget must be positive and finite");
    if (weights.n_elem != cs.num_users())
        throw std::invalid_argument("one weight per user required");
    if (weights.min() < 0.0 || !weights.is_finite() || arma::accu(weights) <= 0.0)
        throw std::invalid_argument("weights must be nonnegative with a positive sum");
}

void check_energy_inputs(const ChannelSet& cs, const arma::vec& weights,
                         const arma::vec& floors)
{
    require_uplink(cs);
    if (weights.n_elem != cs.num_users() || floors.n_elem != cs.num_users())
        throw std::invalid_argument("one weight and one rate floor per user required");
    if (weights.min() <= 0.0 || !weights.is_finite())
        throw std::invalid_argument("weights must be strictly positive");
    if (floors.min() < 0.0 || !floors.is_finite())
        throw std::invalid_argument("rate floors must be nonnegative");
}

// Budget waterfilling on each tone's best effective gain; everyone else
// stays silent on that tone.
AllocationSolution best_gain_rate_mode(const ChannelSet& cs, const Beams& beams,
                                       double budget, const arma::vec& weights)
{
    const arma::uword U = cs.num_users();
    const arma::uword N = cs.num_tones();

    arma::uvec owner(N);
    arma::vec c(N), w(N);
    for (arma::uword n = 0; n < N; ++n)
    {
        arma::uword best = 0;
        double score = -1.0;
        for (arma::uword u = 0; u < U; ++u)
            if (weights[u] * beams.gain(u, n) > score)
            {
                score = weights[u] * beams.gain(u, n);
                best = u;
            }
        owner[n] = best;
        c[n] = beams.gain(best, n);
        w[n] = weights[best];
    }

    // dead tones (no user has gain there) never carry power
    const arma::uvec live = arma::find(c > 0.0);
    arma::mat power(U, N, arma::fill::zeros);
    arma::vec p;
    if (!live.is_empty())
    {
        p = waterfill(c(live), w(live), budget);
        for (arma::uword i = 0; i < live.n_elem; ++i)
            power(owner[live[i]], live[i]) = p[i];
    }

    auto sol = wrap_solution(cs, beams, power, channel_gain_order(cs).first, weights);
    sol.energy = arma::accu(p); // spent power, as capped by the budget
    return sol;
}

// Per-tone decode positions: weakest effective gain decoded first, like
// the band-level gain order but at tone granularity.
arma::umat tone_positions(const arma::mat& gain)
{
    const arma::uword U = gain.n_rows, N = gain.n_cols;
    arma::umat pos(U, N);
    for (arma::uword n = 0; n < N; ++n)
    {
        arma::uvec seq = arma::stable_sort_index(gain.col(n), "ascend");
        for (arma::uword k = 0; k < U; ++k)
            pos(seq[k], n) = k;
    }
    return pos;
}

void require_floor_reachable(const arma::mat& gain, const arma::vec& floors)
{
    for (arma::uword u = 0; u < gain.n_rows; ++u)
        if (floors[u] > 0.0 && gain.row(u).max() <= 0.0)
        {
            std::ostringstream msg;
            msg << "user " << u
                << " has a zero channel but a rate floor of " << floors[u]
                << " bits";
            throw infeasible_error(msg.str());
        }
}

// Scalar-model band rates at the current powers and per-tone positions.
arma::vec model_totals(const arma::mat& gain, const arma::umat& pos,
                       const arma::mat& power)
{
    const arma::uword U = gain.n_rows, N = gain.n_cols;
    arma::vec totals(U, arma::fill::zeros);
    for (arma::uword n = 0; n < N; ++n)
        for (arma::uword u = 0; u < U; ++u)
        {
            if (power(u, n) <= 0.0)
                continue;
            double interf = 0.0;
            for (arma::uword v = 0; v < U; ++v)
                if (pos(v, n) > pos(u, n))
                    interf += gain(v, n) * power(v, n);
            totals[u] += std::log2(1.0 + gain(u, n) * power(u, n) / (1.0 + interf));
        }
    return totals;
}

// Round-robin margin waterfilling against the interference implied by
// per-tone decode positions. With a single band-level order the first
// pass is already exact (users are processed clean-first); mixed per-tone
// orders need the interference to settle, hence the sweep loop.
arma::mat settle_floors(const arma::mat& gain, const arma::umat& pos,
                        const arma::vec& floors)
{
    const arma::uword U = gain.n_rows, N = gain.n_cols;
    require_floor_reachable(gain, floors);

    // process users by descending band gain: clean slots tend to be
    // theirs, so their powers stabilize first
    arma::vec band = arma::sum(gain, 1);
    arma::uvec sweep_order = arma::stable_sort_index(band, "descend");

    arma::mat power(U, N, arma::fill::zeros);
    for (int sweep = 0; sweep < 120; ++sweep)
    {
        double moved = 0.0;
        for (arma::uword k = 0; k < U; ++k)
        {
            const arma::uword u = sweep_order[k];
            arma::vec c(N, arma::fill::zeros);
            for (arma::uword n = 0; n < N; ++n)
            {
                double interf = 0.0;
                for (arma::uword v = 0; v < U; ++v)
                    if (pos(v, n) > pos(u, n))
                        interf += gain(v, n) * power(v, n);
                c[n] = gain(u, n) / (1.0 + interf);
            }
            const arma::vec fresh = margin_waterfill(c, floors[u]);
            moved = std::max(moved, arma::abs(fresh - power.row(u).t()).max());
            power.row(u) = fresh.t();
        }
        if (moved <= 1e-12)
            break;
    }

    const arma::vec totals = model_totals(gain, pos, power);
    for (arma::uword u = 0; u < U; ++u)
        if (totals[u] < floors[u] - 1e-9 * std::max(1.0, floors[u]))
            throw solver_error("per-subcarrier power iteration did not settle "
                               "on the requested rate floors");
    return power;
}

} // namespace

void ResourcePartition::validate(arma::uword n_users) const
{
    for (auto a : assignment)
        if (a != shared_band && a >= n_users)
            throw std::invalid_argument("subcarrier assigned to an unknown user");
}

arma::vec waterfill(const arma::vec& gains, double budget)
{
    return waterfill(gains, arma::vec(gains.n_elem, arma::fill::ones), budget);
}

arma::vec waterfill(const arma::vec& gains, const arma::vec& weights, double budget)
{
    if (gains.n_elem == 0)
        return {};
    if (gains.min() <= 0.0 || !gains.is_finite())
        throw std::invalid_argument("waterfill needs strictly positive gains");
    if (weights.n_elem != gains.n_elem || weights.min() < 0.0)
        throw std::invalid_argument("waterfill weights must be nonnegative, one per gain");
    if (budget < 0.0 || !std::isfinite(budget))
        throw std::invalid_argument("waterfill budget must be nonnegative");

    arma::vec p(gains.n_elem, arma::fill::zeros);
    if (budget == 0.0 || weights.max() <= 0.0)
        return p;

    // Active set by descending w*g: tone k carries power iff its
    // threshold 1/(w g) lies under the water level.
    const arma::vec wg = weights % gains;
    const arma::uvec idx = arma::sort_index(wg, "descend");
    double inv_sum = 0.0, w_sum = 0.0, mu = 0.0;
    arma::uword active = 0;
    for (arma::uword k = 0; k < gains.n_elem && wg[idx[k]] > 0.0; ++k)
    {
        inv_sum += 1.0 / gains[idx[k]];
        w_sum += weights[idx[k]];
        const double trial = (budget + inv_sum) / w_sum;
        if (trial * wg[idx[k]] <= 1.0)
            break;
        mu = trial;
        active = k + 1;
    }
    for (arma::uword i = 0; i < active; ++i)
        p[idx[i]] = weights[idx[i]] * mu - 1.0 / gains[idx[i]];
    return p;
}

std::pair<ResourcePartition, RateAllocation> oma_allocate(const ChannelSet& channels,
                                                          double total_power)
{
    require_uplink(channels);
    const arma::uword U = channels.num_users();
    const arma::uword N = channels.num_tones();
    if (N < U)
        throw std::invalid_argument(
            "disjoint assignment needs at least one subcarrier per user");
    if (!(total_power > 0.0) || !std::isfinite(total_power))
        throw std::invalid_argument("power budget must be positive and finite");

    const auto G = whiten(channels);

    // Greedy by subcarrier index: among the users furthest below their
    // proportional share of tones, the strongest on this tone wins.
    const double share = (double)N / (double)U;
    std::vector<double> count(U, 0.0);
    ResourcePartition part;
    part.assignment.assign(N, 0);
    for (arma::uword n = 0; n < N; ++n)
    {
        double worst = -arma::datum::inf;
        for (arma::uword u = 0; u < U; ++u)
            worst = std::max(worst, share - count[u]);
        arma::uword pick = 0;
        double best_gain = -1.0;
        for (arma::uword u = 0; u < U; ++u)
        {
            if (share - count[u] < worst - 1e-12)
                continue;
            const double g = arma::norm(G[u][n], "fro");
            if (g > best_gain)
            {
                best_gain = g;
                pick = u;
            }
        }
        part.assignment[n] = pick;
        count[pick] += 1.0;
    }

    // Each user pools its tones' eigenmodes and waterfills its share of
    // the power across them.
    RateAllocation rates;
    rates.bits.zeros(U, N);
    for (arma::uword u = 0; u < U; ++u)
    {
        std::vector<arma::uword> mine;
        for (arma::uword n = 0; n < N; ++n)
            if (part.assignment[n] == u)
                mine.push_back(n);
        if (mine.empty())
            continue;

        std::vector<double> mode_gain;
        std::vector<arma::uword> mode_tone;
        for (auto n : mine)
        {
            arma::vec ev = arma::eig_sym(arma::cx_mat(G[u][n].t() * G[u][n]));
            for (double g : ev)
                if (g > 1e-15)
                {
                    mode_gain.push_back(g);
                    mode_tone.push_back(n);
                }
        }
        if (mode_gain.empty())
            continue;
        const arma::vec p = waterfill(arma::vec(mode_gain), total_power / (double)U);
        for (arma::uword i = 0; i < p.n_elem; ++i)
            rates.bits(u, mode_tone[i]) += std::log2(1.0 + mode_gain[i] * p[i]);
    }
    return {std::move(part), std::move(rates)};
}

RateAllocation oma_linear_allocate(const ChannelSet& channels, double total_power)
{
    require_uplink(channels);
    if (!(total_power > 0.0) || !std::isfinite(total_power))
        throw std::invalid_argument("power budget must be positive and finite");
    const arma::uword U = channels.num_users();
    const arma::uword N = channels.num_tones();
    const auto G = whiten(channels);
    const arma::uword n_rx = G[0][0].n_rows;

    std::vector<arma::uword> dims(U);
    for (arma::uword u = 0; u < U; ++u)
        dims[u] = channels.span_of(u).count;
    auto covs = CovarianceSet::zeros(LinkSide::uplink, dims, N);

    // Iterative waterfilling with crosstalk treated as noise. The sweep
    // count is fixed so results are deterministic; the fixed point is a
    // Nash equilibrium, not a sum-rate optimum.
    for (int sweep = 0; sweep < 25; ++sweep)
        for (arma::uword u = 0; u < U; ++u)
        {
            std::vector<double> mode_gain;
            std::vector<arma::uword> mode_tone;
            std::vector<arma::cx_vec> mode_dir;
            for (arma::uword n = 0; n < N; ++n)
            {
                arma::cx_mat R(n_rx, n_rx, arma::fill::eye);
                for (arma::uword v = 0; v < U; ++v)
                    if (v != u)
                        R += G[v][n] * covs.at(v, n) * G[v][n].t();
                const arma::cx_mat W = invsqrt_pd(R) * G[u][n];
                arma::vec ev;
                arma::cx_mat vecs;
                arma::eig_sym(ev, vecs, arma::cx_mat(W.t() * W));
                for (arma::uword i = 0; i < ev.n_elem; ++i)
                    if (ev[i] > 1e-15)
                    {
                        mode_gain.push_back(ev[i]);
                        mode_tone.push_back(n);
                        mode_dir.push_back(vecs.col(i));
                    }
            }
            for (arma::uword n = 0; n < N; ++n)
                covs.at(u, n).zeros();
            if (mode_gain.empty())
                continue;
            const arma::vec p = waterfill(arma::vec(mode_gain), total_power / (double)U);
            for (arma::uword i = 0; i < p.n_elem; ++i)
                if (p[i] > 0.0)
                    covs.at(u, mode_tone[i]) +=
                        p[i] * mode_dir[i] * mode_dir[i].t();
        }

    RateAllocation rates;
    rates.bits.zeros(U, N);
    for (arma::uword n = 0; n < N; ++n)
    {
        arma::cx_mat total(n_rx, n_rx, arma::fill::eye);
        for (arma::uword v = 0; v < U; ++v)
            total += G[v][n] * covs.at(v, n) * G[v][n].t();
        for (arma::uword u = 0; u < U; ++u)
        {
            const arma::cx_mat own = G[u][n] * covs.at(u, n) * G[u][n].t();
            rates.bits(u, n) =
                logdet_pd_bits(total) - logdet_pd_bits(arma::cx_mat(total - own));
        }
    }
    return rates;
}

AllocationSolution noma_allocate(const ChannelSet& channels, double total_power,
                                 const arma::vec& weights)
{
    check_rate_inputs(channels, total_power, weights);
    return best_gain_rate_mode(channels, band_beams(whiten(channels)), total_power,
                               weights);
}

AllocationSolution mc_noma_allocate(const ChannelSet& channels, double total_power,
                                    const arma::vec& weights)
{
    check_rate_inputs(channels, total_power, weights);
    return best_gain_rate_mode(channels, per_tone_beams(whiten(channels)),
                               total_power, weights);
}

AllocationSolution noma_allocate(const ChannelSet& channels, const arma::vec& weights,
                                 const arma::vec& min_rates)
{
    check_energy_inputs(channels, weights, min_rates);
    const auto beams = band_beams(whiten(channels));
    const auto order = channel_gain_order(channels).first;

    // A single band-level order: every tone shares the same positions.
    arma::umat pos(channels.num_users(), channels.num_tones());
    for (arma::uword u = 0; u < channels.num_users(); ++u)
        pos.row(u).fill(order.position_of[u]);

    const arma::mat power = settle_floors(beams.gain, pos, min_rates);
    return wrap_solution(channels, beams, power, order, weights);
}

AllocationSolution mc_noma_allocate(const ChannelSet& channels, const arma::vec& weights,
                                    const arma::vec& min_rates)
{
    check_energy_inputs(channels, weights, min_rates);
    const auto beams = per_tone_beams(whiten(channels));
    const auto pos = tone_positions(beams.gain);
    const arma::mat power = settle_floors(beams.gain, pos, min_rates);

    // Rank-one covariances per tone; the reported rates honor the
    // per-tone decode positions, not the band-level order stored in the
    // solution.
    AllocationSolution sol;
    sol.covariances = rank_one_covs(channels, beams, power);
    sol.order = channel_gain_order(channels).first;
    sol.duals.zeros(channels.num_users());
    sol.kkt_residual = 0.0;

    const arma::uword U = channels.num_users();
    const arma::uword N = channels.num_tones();
    const auto G = whiten(channels);
    const arma::uword n_rx = G[0][0].n_rows;
    sol.rates.bits.zeros(U, N);
    for (arma::uword n = 0; n < N; ++n)
    {
        // peel users off in decode order: position k sees everyone
        // decoded after it
        arma::uvec seq = arma::stable_sort_index(pos.col(n), "ascend");
        arma::cx_mat M(n_rx, n_rx, arma::fill::eye);
        for (arma::uword u = 0; u < U; ++u)
            M += G[u][n] * sol.covariances.at(u, n) * G[u][n].t();
        for (arma::uword k = 0; k < U; ++k)
        {
            const arma::uword u = seq[k];
            const arma::cx_mat own = G[u][n] * sol.covariances.at(u, n) * G[u][n].t();
            const arma::cx_mat rest = M - own;
            sol.rates.bits(u, n) =
                logdet_pd_bits(M) - logdet_pd_bits(rest);
            M = rest;
        }
    }
    sol.energy = sol.covariances.weighted_trace(weights);
    return sol;
}

} // namespace mcnoma
