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
// Log-barrier solver over Hermitian covariance coordinates.
//
// Variables, per tone: one Hermitian matrix per user (d_u^2 real
// coordinates) plus one rate scalar per user. Constraints, per tone: one
// log-det capacity inequality per nonempty user subset, capping the sum of
// the subset's rate scalars. Across tones: one floor per user on its rate
// total, and in the rate-maximization mode one cap on the total trace.
// Everything except the floors and the trace cap is tone-local, so the
// Newton systems factor into per-tone blocks plus at most U+1 rank-one
// couplings handled by the matrix inversion lemma.
//
// Channels are whitened by the receiver noise and rescaled to unit mean
// gain before optimization; covariances, duals and the reported energy are
// mapped back to physical units on exit.

#include "mcnoma/allocator.hpp"
#include "mcnoma/common.hpp"
#include "mcnoma/kernels.hpp"
#include "mcnoma/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace mcnoma
{

namespace
{

constexpr double LN2 = 0.693147180559945309417232121458;

// ---------- Hermitian coordinates ----------

// One real coordinate of a d x d Hermitian matrix: a diagonal entry, or
// the real or imaginary part of a strict upper-triangle entry. The basis
// matrix of an off-diagonal coordinate carries both mirrored entries, so
// coordinates stay real and the matrix stays Hermitian.
struct HermCoord
{
    arma::uword a = 0;
    arma::uword b = 0;
    int kind = 0; // 0 diagonal, 1 off-diagonal real part, 2 imaginary part
};

std::vector<HermCoord> herm_coords(arma::uword d)
{
    std::vector<HermCoord> out;
    out.reserve(d * d);
    for (arma::uword i = 0; i < d; ++i)
        out.push_back({i, i, 0});
    for (arma::uword i = 0; i < d; ++i)
        for (arma::uword j = i + 1; j < d; ++j)
        {
            out.push_back({i, j, 1});
            out.push_back({i, j, 2});
        }
    return out;
}

void coord_accum(arma::cx_mat& Q, const HermCoord& c, double v)
{
    using cd = arma::cx_double;
    switch (c.kind)
    {
    case 0:
        Q(c.a, c.a) += cd(v, 0.0);
        break;
    case 1:
        Q(c.a, c.b) += cd(v, 0.0);
        Q(c.b, c.a) += cd(v, 0.0);
        break;
    default:
        Q(c.a, c.b) += cd(0.0, v);
        Q(c.b, c.a) += cd(0.0, -v);
        break;
    }
}

// tr(G * E_c) for Hermitian G; real by construction.
double coord_inner(const HermCoord& c, const arma::cx_mat& G)
{
    switch (c.kind)
    {
    case 0:
        return G(c.a, c.a).real();
    case 1:
        return 2.0 * G(c.b, c.a).real();
    default:
        return 2.0 * G(c.a, c.b).imag();
    }
}

// Rank-one pieces of a basis matrix: E_c = sum over pieces of
// coeff * e_row * e_col^H. Two pieces for off-diagonal coordinates.
struct RankPiece
{
    arma::cx_double coeff;
    arma::uword r, c;
};

int coord_pieces(const HermCoord& c, RankPiece out[2])
{
    using cd = arma::cx_double;
    switch (c.kind)
    {
    case 0:
        out[0] = {cd(1.0, 0.0), c.a, c.a};
        return 1;
    case 1:
        out[0] = {cd(1.0, 0.0), c.a, c.b};
        out[1] = {cd(1.0, 0.0), c.b, c.a};
        return 2;
    default:
        out[0] = {cd(0.0, 1.0), c.a, c.b};
        out[1] = {cd(0.0, -1.0), c.b, c.a};
        return 2;
    }
}

// Re tr(E_k X E_l Y). X and Y need not be square: E_k pairs with X's rows
// and Y's columns. Used with X = Xuv, Y = Xvu = Xuv^H for the capacity
// curvature and X = Y = Q^-1 for the cone barrier curvature.
double coord_pair(const HermCoord& k, const arma::cx_mat& X,
                  const HermCoord& l, const arma::cx_mat& Y)
{
    RankPiece pk[2], pl[2];
    const int nk = coord_pieces(k, pk);
    const int nl = coord_pieces(l, pl);
    arma::cx_double acc(0.0, 0.0);
    for (int i = 0; i < nk; ++i)
        for (int j = 0; j < nl; ++j)
            acc += pk[i].coeff * pl[j].coeff * X(pk[i].c, pl[j].r) *
                   Y(pl[j].c, pk[i].r);
    return acc.real();
}

double logdet_chol_nat(const arma::cx_mat& R)
{
    double acc = 0.0;
    for (arma::uword i = 0; i < R.n_rows; ++i)
        acc += std::log(R(i, i).real());
    return 2.0 * acc;
}

constexpr long double LN2_LD = 0.693147180559945309417232121458176568L;

// Natural-log determinant of a small Hermitian PD matrix in extended
// precision (plain left-looking Cholesky on the lower triangle). The
// capacity slacks are differences between a log-det and a rate sum of the
// same magnitude, so double rounding would put a floor on how closely the
// central path can approach a binding constraint; at 64-bit mantissas the
// slacks stay trustworthy down to the 1e-12 range the solver needs.
bool logdet_hpd_ld(const arma::cx_mat& M, long double& out)
{
    const arma::uword n = M.n_rows;
    std::vector<std::complex<long double>> L(n * n);
    for (arma::uword j = 0; j < n; ++j)
        for (arma::uword i = j; i < n; ++i)
            L[i + j * n] = std::complex<long double>(M(i, j).real(),
                                                     M(i, j).imag());
    long double acc = 0.0L;
    for (arma::uword j = 0; j < n; ++j)
    {
        long double d = L[j + j * n].real();
        for (arma::uword k = 0; k < j; ++k)
            d -= std::norm(L[j + k * n]);
        if (!(d > 0.0L))
            return false;
        const long double r = std::sqrt(d);
        acc += std::log(r);
        L[j + j * n] = r;
        for (arma::uword i = j + 1; i < n; ++i)
        {
            std::complex<long double> v = L[i + j * n];
            for (arma::uword k = 0; k < j; ++k)
                v -= L[i + k * n] * std::conj(L[j + k * n]);
            L[i + j * n] = v / r;
        }
    }
    out = 2.0L * acc;
    return true;
}

// ---------- barrier engine ----------

struct PointEval
{
    bool feasible = false;
    double phi = 0.0;
    double obj = 0.0; // internal objective, without the t factor
    std::vector<arma::cx_mat> Q;    // [n * U + u]
    std::vector<arma::cx_mat> Qinv; // same layout, only on full eval
    std::vector<arma::cx_mat> W;    // G Q G^H per user and tone
    arma::mat b;                    // U x N rate scalars
    arma::mat s_sub;                // n_subsets x N slacks, bits
    arma::vec s_fl;                 // U floor slacks, bits
    double s_bud = 0.0;
};

struct Engine
{
    // problem, in internal units (whitened, gain-normalized channels)
    arma::uword n_users = 0;
    arma::uword n_tones = 0;
    arma::uword n_t = 0;
    std::vector<arma::uword> dims;
    std::vector<std::vector<arma::cx_mat>> G; // [u][n], n_t x d_u
    arma::vec w;                              // weights scaled to max 1
    arma::vec floors;                         // bits per user across band
    bool rate_mode = false;
    double budget = 0.0; // internal watts, rate mode only

    // layout
    std::vector<std::vector<HermCoord>> coords; // per user
    std::vector<arma::uword> q_off;             // user offset inside a block
    arma::uword p_q = 0;                        // covariance coords per tone
    arma::uword p = 0;                          // block size, p_q + n_users
    std::vector<std::vector<arma::uword>> subsets;

    // iterate
    arma::vec x;
    double t = 1.0;
    int newton_used = 0;

    void build_layout();
    arma::uword n_coord(arma::uword u) const { return dims[u] * dims[u]; }

    void unpack(const arma::vec& v, arma::uword n, arma::uword u,
                arma::cx_mat& Q) const;
    PointEval eval(const arma::vec& v, bool full) const;

    bool newton_step(PointEval& cur, double stop_dec2, double& dec2);
    void center(double tol_dec2, int iter_cap);
    void run();

    std::string residual_note(const PointEval& ev) const;
    double kkt_residual(const PointEval& ev) const;
    double floor_undershoot(const PointEval& ev) const;
};

void Engine::build_layout()
{
    coords.clear();
    q_off.clear();
    p_q = 0;
    for (arma::uword u = 0; u < n_users; ++u)
    {
        coords.push_back(herm_coords(dims[u]));
        q_off.push_back(p_q);
        p_q += n_coord(u);
    }
    p = p_q + n_users;

    subsets.clear();
    const std::uint32_t full = (1u << n_users) - 1u;
    for (std::uint32_t mask = 1; mask <= full; ++mask)
    {
        std::vector<arma::uword> members;
        for (arma::uword u = 0; u < n_users; ++u)
            if (mask & (1u << u))
                members.push_back(u);
        subsets.push_back(std::move(members));
    }
}

void Engine::unpack(const arma::vec& v, arma::uword n, arma::uword u,
                    arma::cx_mat& Q) const
{
    Q.zeros(dims[u], dims[u]);
    const arma::uword base = n * p + q_off[u];
    const auto& cs = coords[u];
    for (arma::uword k = 0; k < cs.size(); ++k)
        coord_accum(Q, cs[k], v[base + k]);
}

PointEval Engine::eval(const arma::vec& v, bool full) const
{
    PointEval ev;
    ev.b.set_size(n_users, n_tones);
    ev.s_sub.set_size(subsets.size(), n_tones);
    ev.s_fl.set_size(n_users);
    ev.Q.assign(n_users * n_tones, arma::cx_mat());
    ev.W.assign(n_users * n_tones, arma::cx_mat());
    if (full)
        ev.Qinv.assign(n_users * n_tones, arma::cx_mat());

    double barrier = 0.0;
    double obj = 0.0;

    for (arma::uword n = 0; n < n_tones; ++n)
    {
        for (arma::uword u = 0; u < n_users; ++u)
        {
            arma::cx_mat& Q = ev.Q[n * n_users + u];
            unpack(v, n, u, Q);
            arma::cx_mat R;
            if (!arma::chol(R, Q))
                return ev; // left the cone
            barrier -= logdet_chol_nat(R);
            if (full)
                ev.Qinv[n * n_users + u] =
                    arma::inv_sympd(arma::cx_mat(0.5 * (Q + Q.t())));
            ev.W[n * n_users + u] = G[u][n] * Q * G[u][n].t();
            ev.b(u, n) = v[n * p + p_q + u];
            if (!rate_mode)
                obj += w[u] * arma::trace(Q).real();
        }
        for (arma::uword c = 0; c < subsets.size(); ++c)
        {
            arma::cx_mat M(n_t, n_t, arma::fill::eye);
            long double bsum = 0.0L;
            for (arma::uword u : subsets[c])
            {
                M += ev.W[n * n_users + u];
                bsum += (long double)ev.b(u, n);
            }
            long double ld = 0.0L;
            if (!logdet_hpd_ld(M, ld)) // reads the lower triangle only
                return ev;
            const double s = (double)(ld / LN2_LD - bsum);
            if (s <= 0.0)
                return ev;
            ev.s_sub(c, n) = s;
            barrier -= std::log(s);
        }
    }
    for (arma::uword u = 0; u < n_users; ++u)
    {
        long double acc = 0.0L;
        for (arma::uword n = 0; n < n_tones; ++n)
            acc += (long double)ev.b(u, n);
        const double s = (double)(acc - (long double)floors[u]);
        if (s <= 0.0)
            return ev;
        ev.s_fl[u] = s;
        barrier -= std::log(s);
    }
    if (rate_mode)
    {
        double spent = 0.0;
        for (const auto& Q : ev.Q)
            spent += arma::trace(Q).real();
        ev.s_bud = budget - spent;
        if (ev.s_bud <= 0.0)
            return ev;
        barrier -= std::log(ev.s_bud);
        for (arma::uword n = 0; n < n_tones; ++n)
            for (arma::uword u = 0; u < n_users; ++u)
                obj -= w[u] * ev.b(u, n);
    }

    ev.obj = obj;
    ev.phi = t * obj + barrier;
    ev.feasible = true;
    return ev;
}

bool Engine::newton_step(PointEval& cur, double stop_dec2, double& dec2)
{
    const arma::uword K = n_users + (rate_mode ? 1 : 0);
    arma::vec g(n_tones * p, arma::fill::zeros);
    arma::cube D(p, p, n_tones, arma::fill::zeros);

    // per-tone local coupling matrix for the floors and the budget cap
    arma::mat Vn(p, K, arma::fill::zeros);
    for (arma::uword u = 0; u < n_users; ++u)
        Vn(p_q + u, u) = 1.0;
    if (rate_mode)
        for (arma::uword u = 0; u < n_users; ++u)
            for (arma::uword i = 0; i < dims[u]; ++i)
                Vn(q_off[u] + i, n_users) = -1.0; // trace uses diagonal coords

#pragma omp parallel for schedule(static)
    for (arma::uword n = 0; n < n_tones; ++n)
    {
        arma::vec gn(p, arma::fill::zeros);
        arma::mat Dn(p, p, arma::fill::zeros);

        for (arma::uword u = 0; u < n_users; ++u)
        {
            const auto& cs = coords[u];
            const arma::uword off = q_off[u];
            if (!rate_mode)
            {
                for (arma::uword i = 0; i < dims[u]; ++i)
                    gn[off + i] += t * w[u]; // d(trace)/dq on diagonal coords
            }
            else
            {
                gn[p_q + u] -= t * w[u];
                for (arma::uword i = 0; i < dims[u]; ++i)
                    gn[off + i] += 1.0 / cur.s_bud;
            }
            const arma::cx_mat& Qi = cur.Qinv[n * n_users + u];
            for (arma::uword k = 0; k < cs.size(); ++k)
            {
                gn[off + k] -= coord_inner(cs[k], Qi);
                for (arma::uword l = k; l < cs.size(); ++l)
                {
                    const double h = coord_pair(cs[k], Qi, cs[l], Qi);
                    Dn(off + k, off + l) += h;
                    if (l != k)
                        Dn(off + l, off + k) += h;
                }
            }
            gn[p_q + u] -= 1.0 / cur.s_fl[u];
        }

        std::vector<arma::cx_mat> X(n_users * n_users);
        for (arma::uword c = 0; c < subsets.size(); ++c)
        {
            const auto& members = subsets[c];
            arma::cx_mat M(n_t, n_t, arma::fill::eye);
            for (arma::uword u : members)
                M += cur.W[n * n_users + u];
            const arma::cx_mat Mi = arma::inv_sympd(arma::cx_mat(0.5 * (M + M.t())));
            for (arma::uword u : members)
            {
                const arma::cx_mat Tu = G[u][n].t() * Mi;
                for (arma::uword v : members)
                    X[u * n_users + v] = Tu * G[v][n];
            }
            const double s = cur.s_sub(c, n);

            arma::vec grad_s(p, arma::fill::zeros);
            for (arma::uword u : members)
            {
                const auto& cs = coords[u];
                const arma::cx_mat& Xuu = X[u * n_users + u];
                for (arma::uword k = 0; k < cs.size(); ++k)
                    grad_s[q_off[u] + k] = coord_inner(cs[k], Xuu) / LN2;
                grad_s[p_q + u] = -1.0;
            }
            gn += (-1.0 / s) * grad_s;
            Dn += (1.0 / (s * s)) * (grad_s * grad_s.t());

            for (arma::uword u : members)
                for (arma::uword v : members)
                {
                    const auto& cu = coords[u];
                    const auto& cv = coords[v];
                    const arma::cx_mat& Xuv = X[u * n_users + v];
                    const arma::cx_mat& Xvu = X[v * n_users + u];
                    for (arma::uword k = 0; k < cu.size(); ++k)
                        for (arma::uword l = 0; l < cv.size(); ++l)
                            Dn(q_off[u] + k, q_off[v] + l) +=
                                coord_pair(cu[k], Xuv, cv[l], Xvu) / (s * LN2);
                }
        }

        g.subvec(n * p, n * p + p - 1) = gn;
        D.slice(n) = Dn;
    }

    // Factor the tone blocks and form the direction. Coordinate scales
    // differ wildly once the barrier weight is large, so each block is
    // Jacobi-scaled to a unit diagonal first. Near the numerical floor the
    // factored solve can lose enough digits that the computed direction
    // stops pointing downhill; a ridge on the scaled blocks trades step
    // quality for conditioning, so it escalates until the directional
    // derivative has the right sign.
    arma::vec dx(n_tones * p);
    double descent = 0.0;
    bool have_dir = false;
    std::vector<arma::mat> chols(n_tones);
    std::vector<arma::vec> scales(n_tones);
    for (const double base_ridge : {0.0, 1e-12, 1e-9, 1e-6, 1e-3, 1e-1})
    {
        bool factored = true;
        for (arma::uword n = 0; n < n_tones && factored; ++n)
        {
            arma::vec s = arma::sqrt(arma::clamp(D.slice(n).diag(), 1e-300,
                                                 arma::datum::inf));
            scales[n] = s;
            arma::mat Dn = D.slice(n) / (s * s.t());
            Dn.diag() += base_ridge;
            double ridge = std::max(base_ridge, 1e-14);
            for (int attempt = 0;; ++attempt)
            {
                if (arma::chol(chols[n], Dn))
                    break;
                if (attempt >= 8)
                {
                    factored = false;
                    break;
                }
                Dn.diag() += ridge;
                ridge *= 100.0;
            }
        }
        if (!factored)
            continue;

        auto block_solve = [&](const arma::mat& rhs_block,
                               arma::uword n) -> arma::mat {
            const arma::mat r = rhs_block.each_col() / scales[n];
            const arma::mat y = arma::solve(arma::trimatl(chols[n].t()), r);
            const arma::mat z = arma::solve(arma::trimatu(chols[n]), y);
            return z.each_col() / scales[n];
        };

        // Woodbury pieces: rhs0 = D^-1 g, Y = D^-1 V, cap = W^-1 + V^T D^-1 V
        arma::vec rhs0(n_tones * p);
        arma::mat cap(K, K, arma::fill::zeros);
        arma::vec vg(K, arma::fill::zeros);
        std::vector<arma::mat> Y(n_tones);
        for (arma::uword n = 0; n < n_tones; ++n)
        {
            const arma::vec gn = g.subvec(n * p, n * p + p - 1);
            rhs0.subvec(n * p, n * p + p - 1) = block_solve(gn, n);
            Y[n] = block_solve(Vn, n);
            cap += Vn.t() * Y[n];
            vg += Vn.t() * rhs0.subvec(n * p, n * p + p - 1);
        }
        for (arma::uword u = 0; u < n_users; ++u)
            cap(u, u) += cur.s_fl[u] * cur.s_fl[u];
        if (rate_mode)
            cap(n_users, n_users) += cur.s_bud * cur.s_bud;

        arma::vec z;
        if (!arma::solve(z, cap, vg, arma::solve_opts::likely_sympd))
            continue;

        for (arma::uword n = 0; n < n_tones; ++n)
            dx.subvec(n * p, n * p + p - 1) =
                -(rhs0.subvec(n * p, n * p + p - 1) - Y[n] * z);

        descent = -arma::dot(g, dx);
        if (descent > 0.0)
        {
            have_dir = true;
            break;
        }
    }
    if (!have_dir)
    {
        dec2 = 0.0;
        return false; // no downhill direction at this precision
    }

    dec2 = descent;
    if (dec2 <= stop_dec2)
        return true; // already centered, skip the line search

    // Backtracking line search, rejecting steps that leave the domain. In
    // the quadratic region the Armijo test is skipped: phi differences there
    // sit below the evaluation noise of t * objective, while a feasible full
    // Newton step is guaranteed to descend.
    const bool quadratic = dec2 <= 1e-4;
    const double dirder = arma::dot(g, dx);
    double alpha = 1.0;
    while (alpha >= 1e-14)
    {
        PointEval trial = eval(x + alpha * dx, true);
        if (trial.feasible &&
            (quadratic || trial.phi <= cur.phi + 0.25 * alpha * dirder))
        {
            x += alpha * dx;
            cur = std::move(trial);
            return true;
        }
        alpha *= 0.5;
    }
    return false;
}

void Engine::center(double tol_dec2, int iter_cap)
{
    const bool trace = std::getenv("MCNOMA_TRACE") != nullptr;
    PointEval cur = eval(x, true);
    if (!cur.feasible)
        throw solver_error("interior point lost strict feasibility");

    // Near the numerical floor the iterates wobble instead of settling, so
    // the decrement is sampled before each step and the best point seen is
    // what a roundoff-floor exit hands back.
    double prev_dec2 = arma::datum::inf;
    double best_dec2 = arma::datum::inf;
    double last_dec2 = arma::datum::inf;
    arma::vec x_best;
    int stalls = 0;
    for (int it = 0; it < iter_cap; ++it)
    {
        if (newton_used >= 500)
        {
            PointEval ev = eval(x, true);
            throw solver_error("allocation solver hit its iteration cap; " +
                               residual_note(ev));
        }
        ++newton_used;
        double dec2 = 0.0;
        const double phi_before = cur.phi;
        const arma::vec x_pre = x;
        if (!newton_step(cur, tol_dec2, dec2))
        {
            if (trace)
                std::fprintf(stderr, "  center: step FAILED it=%d dec2=%.3e\n",
                             it, dec2);
            break; // stalled; outer loop and the final check decide
        }
        if (trace)
            std::fprintf(stderr, "  center: it=%d dec2=%.3e dphi=%.3e\n", it,
                         dec2, phi_before - cur.phi);
        if (dec2 <= tol_dec2)
            return; // x was not moved: newton_step stops short of the search
        last_dec2 = dec2;
        if (dec2 < best_dec2)
        {
            best_dec2 = dec2;
            x_best = x_pre;
        }
        if (dec2 > 1e-4 &&
            phi_before - cur.phi <= 1e-13 * (1.0 + std::abs(phi_before)))
        {
            if (trace)
                std::fprintf(stderr, "  center: no-progress exit it=%d\n", it);
            return; // no measurable progress outside the quadratic region
        }
        if (dec2 <= 1e-4)
        {
            stalls = dec2 > 0.5 * prev_dec2 ? stalls + 1 : 0;
            if (stalls >= 2)
            {
                if (trace)
                    std::fprintf(stderr, "  center: plateau exit it=%d\n", it);
                break; // roundoff floor inside the quadratic region
            }
        }
        prev_dec2 = dec2;
    }
    if (best_dec2 < last_dec2 && !x_best.is_empty())
        x = x_best;
}

std::string Engine::residual_note(const PointEval& ev) const
{
    std::ostringstream os;
    os << "kkt residual " << kkt_residual(ev) << ", barrier weight " << t
       << ", complementarity " << 1.0 / t;
    return os.str();
}

// Rate totals of the polymatroid vertex at the current point: duals sorted
// ascending pick the decode order, suffix log-dets give the chain rates.
// Internal whitened quantities give the same bits as the physical ones.
double Engine::floor_undershoot(const PointEval& ev) const
{
    std::vector<arma::uword> seq(n_users);
    std::iota(seq.begin(), seq.end(), arma::uword(0));
    std::stable_sort(seq.begin(), seq.end(), [&](arma::uword a, arma::uword b) {
        return ev.s_fl[a] > ev.s_fl[b]; // theta = 1/(t s): bigger slack first
    });

    arma::vec totals(n_users, arma::fill::zeros);
    for (arma::uword n = 0; n < n_tones; ++n)
    {
        double prev = 0.0; // log2 det of the suffix starting at position k+1
        arma::cx_mat M(n_t, n_t, arma::fill::eye);
        for (arma::uword k = n_users; k-- > 0;)
        {
            M += ev.W[n * n_users + seq[k]];
            const arma::cx_mat Mh = 0.5 * (M + M.t());
            arma::cx_mat R;
            if (!arma::chol(R, Mh))
                return arma::datum::inf;
            const double cur = logdet_chol_nat(R) / LN2;
            totals[seq[k]] += cur - prev;
            prev = cur;
        }
    }
    double worst = 0.0;
    for (arma::uword u = 0; u < n_users; ++u)
        worst = std::max(worst, floors[u] - totals[u]);
    return worst;
}

void Engine::run()
{
    PointEval ev0 = eval(x, false);
    if (!ev0.feasible)
        throw solver_error("initial point is not strictly feasible");

    const double m_count =
        (double)(subsets.size() * n_tones + n_users + p_q * n_tones + 1);
    t = std::max(1e-6, m_count / std::max(1.0, std::abs(ev0.obj)));

    // Each stage that centers cleanly leaves a certified iterate behind.
    // A stage pushed past the precision of the Newton system can only
    // damage it, and near-degenerate instances (tied channels, floors on a
    // shared face) hit that wall well before the target barrier weight.
    // Keep the last certified iterate and fall back to it if a later stage
    // stalls short of certification.
    const bool trace = std::getenv("MCNOMA_TRACE") != nullptr;
    arma::vec x_cert;
    double t_cert = 0.0;
    bool certified = false;
    for (int outer = 0; outer < 64; ++outer)
    {
        if (trace)
            std::fprintf(stderr, "outer %d t=%.3e\n", outer, t);
        center(1e-15, 80);
        PointEval ev = eval(x, true);
        const double kkt = kkt_residual(ev);
        if (trace)
            std::fprintf(stderr, "outer %d done: obj=%.9e kkt=%.3e used=%d\n",
                         outer, ev.obj, kkt, newton_used);
        if (kkt <= 5e-7)
        {
            x_cert = x;
            t_cert = t;
            certified = true;
        }
        const double scale = std::max(1.0, std::abs(ev.obj));
        if (1.0 / t <= 1e-7 * scale)
            break;
        t *= 25.0;
    }
    if (certified && kkt_residual(eval(x, true)) > 5e-7)
    {
        x = x_cert;
        t = t_cert;
        if (trace)
            std::fprintf(stderr, "rolled back to t=%.3e\n", t);
    }

    // The returned rates are read off the vertex for the extracted order,
    // which sits a few constraint slacks away from the rate variables. Keep
    // tightening until the vertex clears the floors too, within two guards.
    // Tied duals plateau (no single order serves every floor; time sharing
    // closes the gap), so a stall ends the loop rather than failing. And
    // once binding slacks approach the resolution of the iterate itself,
    // the multiplier error grows linearly with t, so stop while the
    // forecast for the next round still clears the certification budget.
    if (!rate_mode && floors.max() > 0.0)
    {
        double prev = arma::datum::inf;
        for (int extra = 0; extra < 24; ++extra)
        {
            PointEval ev = eval(x, true);
            const double under = floor_undershoot(ev);
            if (under <= 5e-8 || under > 0.5 * prev || t >= 1e11 ||
                newton_used >= 480)
                break;
            const double room = 2.5e-7 / std::max(kkt_residual(ev), 1e-12);
            if (room <= 1.0)
                break;
            prev = under;
            const arma::vec x_save = x;
            const double t_save = t;
            t *= std::min(25.0, room);
            center(1e-15, 80);
            if (kkt_residual(eval(x, true)) > 5e-7)
            {
                x = x_save;
                t = t_save;
                break;
            }
        }
    }
    // Final polish so the multipliers settle, kept only when it helps: at
    // the numerical floor a formally downhill step can still spoil the
    // certificate.
    const arma::vec x_polish = x;
    const double kkt_before = kkt_residual(eval(x, true));
    center(1e-17, 40);
    if (kkt_residual(eval(x, true)) > kkt_before)
        x = x_polish;
}

double Engine::kkt_residual(const PointEval& ev) const
{
    double worst = 0.0;
    const double eta = rate_mode ? 1.0 / (t * ev.s_bud) : 0.0;
    for (arma::uword n = 0; n < n_tones; ++n)
    {
        std::vector<arma::cx_mat> S(n_users);
        arma::vec lam_sum(n_users, arma::fill::zeros);
        for (arma::uword u = 0; u < n_users; ++u)
        {
            S[u] = (rate_mode ? eta : w[u]) *
                   arma::cx_mat(dims[u], dims[u], arma::fill::eye);
            S[u] -= ev.Qinv[n * n_users + u] / t;
        }
        for (arma::uword c = 0; c < subsets.size(); ++c)
        {
            const double lam = 1.0 / (t * ev.s_sub(c, n));
            arma::cx_mat M(n_t, n_t, arma::fill::eye);
            for (arma::uword u : subsets[c])
                M += ev.W[n * n_users + u];
            const arma::cx_mat Mi =
                arma::inv_sympd(arma::cx_mat(0.5 * (M + M.t())));
            for (arma::uword u : subsets[c])
            {
                S[u] -= (lam / LN2) * (G[u][n].t() * Mi * G[u][n]);
                lam_sum[u] += lam;
            }
        }
        for (arma::uword u = 0; u < n_users; ++u)
        {
            const double ref = rate_mode ? eta : w[u];
            const double r_q = arma::norm(S[u], "fro") /
                               std::max(1e-12, ref * std::sqrt((double)dims[u]));
            worst = std::max(worst, r_q);
            const double theta = 1.0 / (t * ev.s_fl[u]);
            const double r_b = rate_mode
                                   ? std::abs(w[u] + theta - lam_sum[u]) /
                                         std::max(1.0, w[u])
                                   : std::abs(theta - lam_sum[u]) /
                                         std::max(1.0, theta);
            worst = std::max(worst, r_b);
        }
    }
    return worst;
}

// ---------- problem setup ----------

struct Prepared
{
    Engine eng;
    std::vector<arma::uword> active;   // engine user -> original user
    arma::uword total_users = 0;
    std::vector<arma::uword> all_dims; // original indexing
    double kappa2 = 1.0;               // gain normalization factor
    double wmax = 1.0;
    ChannelSet channels; // noise-resolved copy used for reporting rates
};

// Whitens by the per-tone noise, drops zero-channel users (rejecting them
// when they carry a positive floor), and rescales gains to unit mean.
Prepared prepare(const ChannelSet& channels_in, const arma::cx_mat& noise_override,
                 const arma::vec& weights, const arma::vec& floors, bool rate_mode)
{
    Prepared prep;
    prep.channels = channels_in;
    if (!noise_override.is_empty())
    {
        if (noise_override.n_rows != channels_in.tones[0].n_rows ||
            !noise_override.is_square())
            throw std::invalid_argument(
                "noise override must be square with the receiver dimension");
        prep.channels.noise.assign(1, noise_override);
    }
    prep.channels.validate();

    const arma::uword U = prep.channels.num_users();
    const arma::uword N = prep.channels.num_tones();
    prep.total_users = U;
    for (arma::uword u = 0; u < U; ++u)
        prep.all_dims.push_back(prep.channels.span_of(u).count);

    // receive whitening per tone
    std::vector<arma::cx_mat> white(N);
    for (arma::uword n = 0; n < N; ++n)
        white[n] = invsqrt_pd(prep.channels.noise_on(n));

    std::vector<double> user_norm(U, 0.0);
    std::vector<std::vector<arma::cx_mat>> Gw(U);
    for (arma::uword u = 0; u < U; ++u)
    {
        Gw[u].resize(N);
        for (arma::uword n = 0; n < N; ++n)
        {
            Gw[u][n] = white[n] * prep.channels.block(u, n);
            user_norm[u] += arma::norm(Gw[u][n], "fro") *
                            arma::norm(Gw[u][n], "fro");
        }
    }

    for (arma::uword u = 0; u < U; ++u)
    {
        if (user_norm[u] > 0.0)
        {
            prep.active.push_back(u);
            continue;
        }
        if (floors[u] > 0.0)
        {
            std::ostringstream os;
            os << "user " << u << " has a zero channel but a rate floor of "
               << floors[u] << " bits";
            throw infeasible_error(os.str());
        }
    }
    if (prep.active.empty())
        return prep;
    if (prep.active.size() > 8)
        throw std::invalid_argument(
            "subset enumeration is capped at 8 users per solve");

    double gain_acc = 0.0;
    arma::uword gain_cnt = 0;
    for (arma::uword u : prep.active)
        for (arma::uword n = 0; n < N; ++n)
        {
            const double f = arma::norm(Gw[u][n], "fro");
            gain_acc += f * f / (double)(Gw[u][n].n_rows * Gw[u][n].n_cols);
            ++gain_cnt;
        }
    prep.kappa2 = gain_acc / (double)gain_cnt;
    if (!(prep.kappa2 > 0.0) || !std::isfinite(prep.kappa2))
        prep.kappa2 = 1.0;
    const double kappa = std::sqrt(prep.kappa2);

    Engine& e = prep.eng;
    e.n_users = prep.active.size();
    e.n_tones = N;
    e.n_t = prep.channels.tones[0].n_rows;
    e.rate_mode = rate_mode;
    e.w.set_size(e.n_users);
    e.floors.set_size(e.n_users);
    prep.wmax = weights.max();
    for (arma::uword i = 0; i < e.n_users; ++i)
    {
        const arma::uword u = prep.active[i];
        e.dims.push_back(prep.all_dims[u]);
        e.w[i] = weights[u] / prep.wmax;
        e.floors[i] = floors[u];
        std::vector<arma::cx_mat> gu(N);
        for (arma::uword n = 0; n < N; ++n)
            gu[n] = Gw[u][n] / kappa;
        e.G.push_back(std::move(gu));
    }
    e.build_layout();
    return prep;
}

// Strictly feasible start: scaled identity covariances, per-tone rate
// scalars set well inside each tone's capacity, the scale grown until the
// band floors clear with margin.
void init_point(Engine& e)
{
    const arma::uword U = e.n_users;
    const arma::uword N = e.n_tones;
    double alpha = e.rate_mode
                       ? e.budget / (2.0 * (double)N *
                                     std::max<arma::uword>(1, std::accumulate(
                                                                  e.dims.begin(),
                                                                  e.dims.end(),
                                                                  arma::uword(0))))
                       : 1.0;

    for (int attempt = 0; attempt < 120; ++attempt)
    {
        arma::vec x(N * e.p, arma::fill::zeros);
        arma::mat b(U, N, arma::fill::zeros);
        // log2 det(I + alpha * B B^H) through singular values; immune to the
        // conditioning of the formed Gram matrix at any alpha
        arma::mat caps(e.subsets.size(), N);
        const double sqrt_alpha = std::sqrt(alpha);
        for (arma::uword n = 0; n < N; ++n)
        {
            for (arma::uword u = 0; u < U; ++u)
                for (arma::uword i = 0; i < e.dims[u]; ++i)
                    x[n * e.p + e.q_off[u] + i] = alpha;

            arma::vec cap_min(U);
            cap_min.fill(arma::datum::inf);
            for (arma::uword c = 0; c < e.subsets.size(); ++c)
            {
                const auto& members = e.subsets[c];
                arma::uword cols = 0;
                for (arma::uword u : members)
                    cols += e.dims[u];
                arma::cx_mat B(e.n_t, cols);
                cols = 0;
                for (arma::uword u : members)
                {
                    B.cols(cols, cols + e.dims[u] - 1) = sqrt_alpha * e.G[u][n];
                    cols += e.dims[u];
                }
                const arma::vec sv = arma::svd(B);
                double cap = 0.0;
                for (const double s : sv)
                    cap += std::log1p(s * s) / LN2;
                caps(c, n) = cap;
                const double per = cap / (double)members.size();
                for (arma::uword u : members)
                    cap_min[u] = std::min(cap_min[u], per);
            }
            for (arma::uword u = 0; u < U; ++u)
                b(u, n) = 0.45 * cap_min[u];
        }
        // tones with no usable gain get a small negative rate so their
        // capacity slack stays strict without dragging the band total down
        for (arma::uword u = 0; u < U; ++u)
        {
            double pos = 0.0;
            arma::uword zeros = 0;
            for (arma::uword n = 0; n < N; ++n)
            {
                if (b(u, n) > 0.0)
                    pos += b(u, n);
                else
                    ++zeros;
            }
            if (zeros > 0)
            {
                const double dip =
                    std::min(0.1, pos / (4.0 * (double)zeros + 4.0));
                for (arma::uword n = 0; n < N; ++n)
                    if (b(u, n) <= 0.0)
                        b(u, n) = -dip;
            }
        }

        // The equal-share rates above center well but grow only with the
        // per-member split of the full-set capacity, which is far too slow
        // for a lopsided floor vector. Lift each short user toward its
        // floor across its usable tones, then check every capacity
        // constraint explicitly; a failed check means this alpha cannot
        // host the floors and the scale grows.
        for (arma::uword u = 0; u < U; ++u)
        {
            if (std::getenv("MCNOMA_NOLIFT"))
                break;
            if (e.floors[u] <= 0.0)
                continue;
            const double margin = std::max(0.25, 0.02 * e.floors[u]);
            const double want = e.floors[u] + margin + 0.25;
            const double have = arma::sum(b.row(u));
            if (have >= want)
                continue;
            arma::uvec usable = arma::find(b.row(u) > 0.0);
            if (usable.is_empty())
                continue; // nothing carries rate; the floor check below fails
            const double lift = (want - have) / (double)usable.n_elem;
            for (arma::uword k = 0; k < usable.n_elem; ++k)
                b(u, usable[k]) += lift;
        }

        bool ok = true;
        for (arma::uword n = 0; n < N && ok; ++n)
            for (arma::uword c = 0; c < e.subsets.size() && ok; ++c)
            {
                double used = 0.0;
                for (arma::uword u : e.subsets[c])
                    used += b(u, n);
                // dead tones have zero capacity and carry the negative dip,
                // so a relative cushion keeps the check scale-free
                if (used > 0.98 * caps(c, n))
                    ok = false;
            }
        for (arma::uword u = 0; u < U && ok; ++u)
        {
            // Zero floors only need a strictly positive slack; real floors
            // get headroom so the first centering steps are not cornered.
            const double margin =
                e.floors[u] > 0.0 ? std::max(0.25, 0.02 * e.floors[u]) : 0.0;
            if (arma::sum(b.row(u)) <= e.floors[u] + margin)
                ok = false;
        }
        if (e.rate_mode)
        {
            double spent = 0.0;
            for (arma::uword u = 0; u < U; ++u)
                spent += alpha * (double)e.dims[u] * (double)N;
            if (spent >= e.budget)
                ok = false; // cannot happen with the alpha above, kept as a guard
        }
        if (ok)
        {
            for (arma::uword n = 0; n < N; ++n)
                for (arma::uword u = 0; u < U; ++u)
                    x[n * e.p + e.p_q + u] = b(u, n);
            e.x = std::move(x);
            return;
        }
        if (e.rate_mode)
            throw infeasible_error(
                "power budget too small to open the rate floors");
        alpha *= 4.0;
    }
    throw infeasible_error("could not find a strictly feasible starting point");
}

AllocationSolution finish(const Prepared& prep, const arma::vec& weights)
{
    const Engine& e = prep.eng;
    const arma::uword U = prep.total_users;
    const arma::uword N = prep.channels.num_tones();

    AllocationSolution sol;
    sol.covariances = CovarianceSet::zeros(LinkSide::uplink, prep.all_dims, N);
    sol.duals.zeros(U);

    const PointEval ev = e.eval(e.x, true);
    for (arma::uword i = 0; i < e.n_users; ++i)
    {
        const arma::uword u = prep.active[i];
        for (arma::uword n = 0; n < N; ++n)
            sol.covariances.at(u, n) = ev.Q[n * e.n_users + i] / prep.kappa2;
        const double theta_int = 1.0 / (e.t * ev.s_fl[i]);
        sol.duals[u] = e.rate_mode ? prep.wmax * theta_int
                                   : prep.wmax / prep.kappa2 * theta_int;
    }
    sol.covariances.clip();
    sol.kkt_residual = e.kkt_residual(ev);

    sol.tie_groups = cluster_by_gap(sol.duals, 1e-5);
    sol.order = extract_decoding_order(sol, 1e-5).first;
    sol.rates.bits = kernels::chain_rates(prep.channels, sol.covariances, sol.order);
    // Energy minimization reports its objective; rate maximization reports
    // the spent power, which is what the budget caps.
    sol.energy = e.rate_mode ? sol.covariances.total_trace()
                             : sol.covariances.weighted_trace(weights);
    return sol;
}

AllocationSolution trivial_solution(const ChannelSet& channels)
{
    AllocationSolution sol;
    const arma::uword U = channels.num_users();
    std::vector<arma::uword> dims;
    for (arma::uword u = 0; u < U; ++u)
        dims.push_back(channels.span_of(u).count);
    sol.covariances =
        CovarianceSet::zeros(LinkSide::uplink, dims, channels.num_tones());
    sol.duals.zeros(U);
    sol.order = DecodingOrder::identity(U);
    sol.rates.bits.zeros(U, channels.num_tones());
    sol.energy = 0.0;
    sol.kkt_residual = 0.0;
    sol.tie_groups = cluster_by_gap(sol.duals, 1e-5);
    return sol;
}

} // namespace

// ---------- public surface ----------

void AllocationProblem::validate() const
{
    channels.validate();
    if (channels.side != LinkSide::uplink)
        throw std::invalid_argument(
            "energy minimization runs on the uplink side; map downlink "
            "problems through solve_bc_design");
    const arma::uword U = channels.num_users();
    if (weights.n_elem != U || min_rates.n_elem != U)
        throw std::invalid_argument(
            "weights and min_rates must have one entry per user");
    if (weights.min() < 0.0 || !weights.is_finite())
        throw std::invalid_argument("weights must be finite and non-negative");
    if (min_rates.min() < 0.0 || !min_rates.is_finite())
        throw std::invalid_argument("rate floors must be finite and non-negative");
}

std::vector<std::vector<arma::uword>> cluster_by_gap(const arma::vec& values,
                                                     double tol)
{
    std::vector<arma::uword> idx(values.n_elem);
    std::iota(idx.begin(), idx.end(), arma::uword(0));
    std::stable_sort(idx.begin(), idx.end(), [&](arma::uword a, arma::uword b) {
        return values[a] > values[b];
    });
    const double span = tol * std::max(values.n_elem ? values.max() : 0.0, 1e-12);

    std::vector<std::vector<arma::uword>> groups;
    for (arma::uword i : idx)
    {
        if (groups.empty() ||
            values[groups.back().front()] - values[i] > span)
            groups.emplace_back();
        groups.back().push_back(i);
    }
    return groups;
}

AllocationSolution minimize_energy(const AllocationProblem& problem)
{
    problem.validate();
    if (problem.weights.min() <= 0.0)
        throw std::invalid_argument(
            "every weight must be positive: a zero-weight user's power is "
            "free and the minimizer is not unique");

    if (problem.min_rates.max() <= 0.0)
        return trivial_solution(problem.channels);

    Prepared prep = prepare(problem.channels, problem.noise, problem.weights,
                            problem.min_rates, false);
    if (prep.active.empty())
        return trivial_solution(prep.channels);
    init_point(prep.eng);
    prep.eng.run();
    return finish(prep, problem.weights);
}

AllocationSolution maximize_sum_rate(const ChannelSet& channels, double budget,
                                     const arma::vec& weights)
{
    channels.validate();
    if (channels.side != LinkSide::uplink)
        throw std::invalid_argument("rate maximization runs on the uplink side");
    if (!(budget > 0.0) || !std::isfinite(budget))
        throw std::invalid_argument("power budget must be positive");
    if (weights.n_elem != channels.num_users())
        throw std::invalid_argument("weights must have one entry per user");
    if (weights.min() < 0.0 || weights.max() <= 0.0 || !weights.is_finite())
        throw std::invalid_argument(
            "weights must be non-negative with at least one positive entry");

    arma::vec floors(channels.num_users(), arma::fill::zeros);
    Prepared prep = prepare(channels, arma::cx_mat(), weights, floors, true);
    if (prep.active.empty())
        return trivial_solution(prep.channels);
    prep.eng.budget = prep.kappa2 * budget;
    init_point(prep.eng);
    prep.eng.run();
    return finish(prep, weights);
}

std::pair<DecodingOrder, bool>
extract_decoding_order(const AllocationSolution& solution, double tie_tol)
{
    const arma::vec& th = solution.duals;
    std::vector<arma::uword> seq(th.n_elem);
    std::iota(seq.begin(), seq.end(), arma::uword(0));
    std::stable_sort(seq.begin(), seq.end(), [&](arma::uword a, arma::uword b) {
        return th[a] < th[b];
    });

    bool tied = false;
    const double span = tie_tol * std::max(th.n_elem ? th.max() : 0.0, 1e-12);
    for (arma::uword i = 0; i + 1 < seq.size(); ++i)
        if (th[seq[i + 1]] - th[seq[i]] <= span)
            tied = true;

    return {DecodingOrder::from_sequence(seq), tied};
}

AllocationSolution solve_bc_design(const AllocationProblem& problem)
{
    problem.channels.validate();
    if (problem.channels.side != LinkSide::downlink)
        throw std::invalid_argument("solve_bc_design expects downlink channels");
    if (!problem.noise.is_empty())
        throw std::invalid_argument(
            "noise overrides are only supported on the uplink form");

    const arma::uword U = problem.channels.num_users();
    std::vector<arma::uword> rx_dims(U);
    for (arma::uword u = 0; u < U; ++u)
        rx_dims[u] = problem.channels.span_of(u).count;
    const DualityMaps maps =
        permutation_matrices({problem.channels.tones[0].n_cols}, rx_dims);

    AllocationProblem mac = problem;
    mac.channels = bc_to_mac_channel(problem.channels, maps);
    AllocationSolution up = minimize_energy(mac);

    AllocationSolution sol = up;
    sol.covariances =
        mac_to_bc_covariances(problem.channels, up.covariances, up.order);
    sol.rates = bc_dpc_rates(problem.channels, sol.covariances, up.order);
    sol.energy = sol.covariances.weighted_trace(problem.weights);
    return sol;
}

} // namespace mcnoma
