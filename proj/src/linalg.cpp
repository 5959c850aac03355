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

#include "mcnoma/linalg.hpp"
#include "mcnoma/common.hpp"

#include <cmath>
#include <stdexcept>

namespace mcnoma
{

// ---------- HERMITIAN HELPERS ----------

double logdet_pd_bits(const arma::cx_mat &X)
{
    arma::cx_mat L;
    if (!arma::chol(L, X, "lower"))
        throw std::runtime_error("logdet_pd_bits: matrix is not positive definite");

    double acc = 0.0;
    for (arma::uword i = 0; i < L.n_rows; ++i)
        acc += std::log2(L(i, i).real());
    return 2.0 * acc;
}

arma::cx_mat hermitian_clip(const arma::cx_mat &X, double floor_val)
{
    arma::cx_mat H = 0.5 * (X + X.t());
    arma::vec eigval;
    arma::cx_mat eigvec;
    if (!arma::eig_sym(eigval, eigvec, H))
        throw std::runtime_error("hermitian_clip: eigendecomposition failed");

    eigval.transform([floor_val](double v) { return v < floor_val ? floor_val : v; });
    return eigvec * arma::diagmat(eigval) * eigvec.t();
}

arma::cx_mat sqrt_psd(const arma::cx_mat &X, double eps)
{
    arma::cx_mat H = 0.5 * (X + X.t());
    arma::vec eigval;
    arma::cx_mat eigvec;
    if (!arma::eig_sym(eigval, eigvec, H))
        throw std::runtime_error("sqrt_psd: eigendecomposition failed");

    double lo = eps * std::max(eigval.max(), 0.0);
    arma::vec root(eigval.n_elem);
    for (arma::uword i = 0; i < eigval.n_elem; ++i)
        root(i) = std::sqrt(std::max(eigval(i), lo));
    return eigvec * arma::diagmat(root) * eigvec.t();
}

arma::cx_mat invsqrt_pd(const arma::cx_mat &X, double eps)
{
    arma::cx_mat H = 0.5 * (X + X.t());
    arma::vec eigval;
    arma::cx_mat eigvec;
    if (!arma::eig_sym(eigval, eigvec, H))
        throw std::runtime_error("invsqrt_pd: eigendecomposition failed");

    double peak = eigval.max();
    if (peak <= 0.0)
        throw std::runtime_error("invsqrt_pd: matrix has no positive eigenvalues");

    double lo = eps * peak;
    arma::vec root(eigval.n_elem);
    for (arma::uword i = 0; i < eigval.n_elem; ++i)
        root(i) = 1.0 / std::sqrt(std::max(eigval(i), lo));
    return eigvec * arma::diagmat(root) * eigvec.t();
}

// ---------- NONNEGATIVE LEAST SQUARES ----------

arma::vec nnls(const arma::mat &A, const arma::vec &y, double tol, arma::uword max_iter)
{
    const arma::uword n = A.n_cols;
    if (A.n_rows != y.n_elem)
        throw std::invalid_argument("nnls: row count of A must match length of y");
    if (max_iter == 0)
        max_iter = 3 * n + 30;

    arma::vec x(n, arma::fill::zeros);
    std::vector<bool> passive(n, false);
    arma::vec w = A.t() * (y - A * x);

    for (arma::uword outer = 0; outer < max_iter; ++outer)
    {
        // Most violated dual coordinate among the zero set.
        double best = tol;
        arma::sword enter = -1;
        for (arma::uword j = 0; j < n; ++j)
            if (!passive[j] && w(j) > best)
            {
                best = w(j);
                enter = (arma::sword)j;
            }
        if (enter < 0)
            break;
        passive[(arma::uword)enter] = true;

        // Inner loop: solve the unconstrained problem on the passive set and
        // walk back along the segment if any passive variable went negative.
        for (arma::uword inner = 0; inner < max_iter; ++inner)
        {
            arma::uvec pset;
            for (arma::uword j = 0; j < n; ++j)
                if (passive[j])
                    pset.insert_rows(pset.n_elem, arma::uvec{j});

            arma::vec z_p = arma::solve(A.cols(pset), y);
            arma::vec z(n, arma::fill::zeros);
            z.elem(pset) = z_p;

            if (z_p.min() > tol)
            {
                x = z;
                break;
            }

            double alpha = arma::datum::inf;
            for (arma::uword j = 0; j < n; ++j)
                if (passive[j] && z(j) <= tol)
                    alpha = std::min(alpha, x(j) / (x(j) - z(j)));

            x += alpha * (z - x);
            for (arma::uword j = 0; j < n; ++j)
                if (passive[j] && x(j) <= tol)
                {
                    x(j) = 0.0;
                    passive[j] = false;
                }
        }
        w = A.t() * (y - A * x);
    }
    return x;
}

// ---------- DETERMINISTIC GAUSSIAN DRAWS ----------

double GaussianRng::next()
{
    if (have_cached)
    {
        have_cached = false;
        return cached;
    }

    // Box-Muller on two uniforms; u1 is kept away from zero so the log is
    // finite.
    double u1, u2;
    do
    {
        u1 = std::ldexp((double)(eng() >> 11), -53);
    } while (u1 <= 0.0);
    u2 = std::ldexp((double)(eng() >> 11), -53);

    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * arma::datum::pi * u2;
    cached = r * std::sin(a);
    have_cached = true;
    return r * std::cos(a);
}

arma::cx_double GaussianRng::next_cx()
{
    double re = next();
    double im = next();
    return arma::cx_double(re * M_SQRT1_2, im * M_SQRT1_2);
}

double GaussianRng::uniform(double lo, double hi)
{
    double u = std::ldexp((double)(eng() >> 11), -53);
    return lo + u * (hi - lo);
}

} // namespace mcnoma
