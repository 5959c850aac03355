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

#ifndef MCNOMA_LINALG_HPP
#define MCNOMA_LINALG_HPP

#include <armadillo>
#include <cstdint>

namespace mcnoma
{

// log2 det(X) of a Hermitian positive definite matrix via Cholesky.
// Throws std::runtime_error if the factorization fails.
double logdet_pd_bits(const arma::cx_mat &X);

// Force X onto the PSD cone: symmetrize, then clip eigenvalues below
// "floor_val" (default 0) up to the floor.
arma::cx_mat hermitian_clip(const arma::cx_mat &X, double floor_val = 0.0);

// X^(1/2) and X^(-1/2) for Hermitian PSD X via eigendecomposition.
// Eigenvalues below eps * max_eig are floored before the inverse root so that
// rank-deficient noise shapes do not blow up.
arma::cx_mat sqrt_psd(const arma::cx_mat &X, double eps = 1e-12);
arma::cx_mat invsqrt_pd(const arma::cx_mat &X, double eps = 1e-12);

// Nonnegative least squares, min_x || A x - y ||_2 s.t. x >= 0, by the active
// set method of Lawson and Hanson. Small dense problems only.
arma::vec nnls(const arma::mat &A, const arma::vec &y, double tol = 1e-12,
               arma::uword max_iter = 0);

// Deterministic standard normal generator. std::normal_distribution is
// implementation defined, so channel realizations produced with it would not
// be reproducible across standard libraries; this uses the Box-Muller
// transform over the (fully specified) mt19937_64 stream instead.
class GaussianRng
{
  public:
    explicit GaussianRng(std::uint64_t seed) : eng(seed) {}

    double next();

    // Circularly symmetric complex normal, CN(0, 1).
    arma::cx_double next_cx();

    // Uniform on [lo, hi).
    double uniform(double lo, double hi);

  private:
    std::mt19937_64 eng;
    double cached = 0.0;
    bool have_cached = false;
};

} // namespace mcnoma

#endif
