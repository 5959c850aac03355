// SPDX-License-Identifier: Apache-2.0
//
// Uplink/downlink transform tests. The covariance map is validated against
// its contract: per-user rates and the summed trace survive the transform.

#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "mcnoma/duality.hpp"

#include <algorithm>

using namespace mcnoma;

TEST_CASE("single-user permutation maps are identities")
{
    auto maps = permutation_matrices({3}, {2});
    CHECK(arma::approx_equal(maps.tx_permutation, arma::eye(3, 3), "absdiff", 0.0));
    CHECK(arma::approx_equal(maps.rx_permutation, arma::eye(2, 2), "absdiff", 0.0));
}

TEST_CASE("two scalar blocks swap")
{
    auto maps = permutation_matrices({1, 1}, {1, 1});
    arma::mat swap = {{0.0, 1.0}, {1.0, 0.0}};
    CHECK(arma::approx_equal(maps.tx_permutation, swap, "absdiff", 0.0));
    CHECK(arma::approx_equal(maps.rx_permutation, swap, "absdiff", 0.0));
}

TEST_CASE("transmit blocks of size 2,1 reverse into the documented layout")
{
    auto maps = permutation_matrices({2, 1}, {1, 1, 1});
    arma::mat want = {{0.0, 0.0, 1.0}, {1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}};
    CHECK(arma::approx_equal(maps.tx_permutation, want, "absdiff", 0.0));
}

TEST_CASE("permutation maps are orthogonal 0/1 matrices")
{
    for (auto dims : std::vector<std::vector<arma::uword>>{{1, 2, 3}, {2, 2}, {4}, {1, 1, 1, 1}})
    {
        auto maps = permutation_matrices(dims, dims);
        const arma::mat &P = maps.tx_permutation;
        CHECK(arma::approx_equal(P * P.t(), arma::eye(P.n_rows, P.n_rows), "absdiff", 0.0));
        CHECK(arma::approx_equal(maps.rx_permutation * maps.rx_permutation.t(),
                                 arma::eye(P.n_rows, P.n_rows), "absdiff", 0.0));
        for (auto v : P)
            CHECK((v == 0.0 || v == 1.0));
    }
}

TEST_CASE("a scalar real channel is its own uplink image")
{
    ChannelSet bc;
    bc.side = LinkSide::downlink;
    bc.tones.assign(1, testutil::cx_scalar(0.7));
    bc.partition = {{0, 0, 1}};
    bc.noise.assign(1, testutil::cx_scalar(1.0));

    auto maps = permutation_matrices({1}, {1});
    ChannelSet mac = bc_to_mac_channel(bc, maps);
    CHECK(mac.side == LinkSide::uplink);
    CHECK(mac.tones[0](0, 0).real() == 0.7);
    CHECK(mac.tones[0](0, 0).imag() == 0.0);
}

TEST_CASE("the 2x2 hand example transforms as documented")
{
    ChannelSet bc;
    bc.side = LinkSide::downlink;
    arma::cx_mat H(arma::mat{{1.0, 2.0}, {3.0, 4.0}}, arma::mat(2, 2, arma::fill::zeros));
    bc.tones.assign(1, H);
    bc.partition = {{0, 0, 1}, {1, 1, 1}};
    bc.noise.assign(1, arma::cx_mat(arma::eye<arma::mat>(2, 2), arma::mat(2, 2, arma::fill::zeros)));

    auto maps = permutation_matrices({1, 1}, {1, 1});
    ChannelSet mac = bc_to_mac_channel(bc, maps);

    arma::mat want = {{4.0, 2.0}, {3.0, 1.0}};
    CHECK(arma::approx_equal(arma::real(mac.tones[0]), want, "absdiff", 1e-15));
    CHECK(arma::abs(arma::imag(mac.tones[0])).max() == 0.0);

    // User blocks come back in reversed column order.
    CHECK(mac.span_of(1).offset == 0);
    CHECK(mac.span_of(0).offset == 1);
}

TEST_CASE("transforming twice with swapped maps recovers the channel")
{
    std::vector<arma::uword> rx_dims = {2, 1};
    ChannelSet bc = testutil::make_bc_channels(3, rx_dims, 4, 17);

    auto maps = permutation_matrices({3}, rx_dims);
    ChannelSet mac = bc_to_mac_channel(bc, maps);

    std::vector<arma::uword> rx_rev(rx_dims.rbegin(), rx_dims.rend());
    auto maps2 = permutation_matrices(rx_rev, {3});

    for (arma::uword n = 0; n < bc.num_tones(); ++n)
    {
        arma::cx_mat back = maps2.tx_permutation * mac.tones[n].t() * maps2.rx_permutation;
        CHECK(arma::abs(back - bc.tones[n]).max() < 1e-15);
    }
}

TEST_CASE("shape mismatches are rejected")
{
    ChannelSet bc = testutil::make_bc_channels(2, {1, 1}, 2, 3);
    auto wrong = permutation_matrices({3}, {1, 1});
    CHECK_THROWS_AS(bc_to_mac_channel(bc, wrong), std::invalid_argument);

    ChannelSet mac = testutil::make_mac_channels(2, {1, 1}, 2, 3);
    auto maps = permutation_matrices({2}, {1, 1});
    CHECK_THROWS_AS(bc_to_mac_channel(mac, maps), std::invalid_argument);
}

TEST_CASE("single-user covariance transform preserves rate and trace")
{
    ChannelSet bc = testutil::make_bc_channels(3, {2}, 3, 23);
    auto maps = permutation_matrices({3}, {2});
    ChannelSet mac = bc_to_mac_channel(bc, maps);

    auto mac_covs = testutil::make_random_covs(mac, 24, 2.0);
    auto order = DecodingOrder::identity(1);

    RateAllocation up = sic_rates(mac, mac_covs, order);
    auto bc_covs = mac_to_bc_covariances(bc, mac_covs, order);
    RateAllocation down = bc_dpc_rates(bc, bc_covs, order);

    CHECK(arma::abs(up.bits - down.bits).max() < 1e-6 * std::max(1.0, up.bits.max()));
    CHECK(bc_covs.total_trace() ==
          Catch::Approx(mac_covs.total_trace()).epsilon(1e-8));
}

TEST_CASE("scalar two-user transform reproduces the closed-form powers")
{
    // Unit gains into one transmit antenna, unit noise, uplink powers (1, 2)
    // with user 1 decoded first: both users achieve exactly 1 bit, and the
    // downlink image spends the same total power 3.
    ChannelSet bc;
    bc.side = LinkSide::downlink;
    arma::cx_mat h(2, 1);
    h(0, 0) = 1.0;
    h(1, 0) = 1.0;
    bc.tones.assign(1, h);
    bc.partition = {{0, 0, 1}, {1, 1, 1}};
    bc.noise.assign(1, arma::cx_mat(arma::eye<arma::mat>(2, 2), arma::mat(2, 2, arma::fill::zeros)));

    auto mac_covs = CovarianceSet::zeros(LinkSide::uplink, {1, 1}, 1);
    mac_covs.at(0, 0)(0, 0) = 1.0;
    mac_covs.at(1, 0)(0, 0) = 2.0;

    auto order = DecodingOrder::from_sequence({1, 0}); // user 2 decoded first
    auto bc_covs = mac_to_bc_covariances(bc, mac_covs, order);

    CHECK(bc_covs.at(0, 0)(0, 0).real() == Catch::Approx(2.0).margin(1e-9));
    CHECK(bc_covs.at(1, 0)(0, 0).real() == Catch::Approx(1.0).margin(1e-9));
    CHECK(bc_covs.total_trace() == Catch::Approx(3.0).margin(1e-9));

    RateAllocation down = bc_dpc_rates(bc, bc_covs, order);
    CHECK(down.bits(0, 0) == Catch::Approx(1.0).margin(1e-9));
    CHECK(down.bits(1, 0) == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("zero uplink covariances map to zero downlink covariances")
{
    ChannelSet bc = testutil::make_bc_channels(2, {1, 1, 1}, 2, 31);
    auto mac_covs = CovarianceSet::zeros(LinkSide::uplink, {1, 1, 1}, 2);
    auto bc_covs = mac_to_bc_covariances(bc, mac_covs, DecodingOrder::from_sequence({2, 0, 1}));

    for (const auto &M : bc_covs.mats)
        CHECK(arma::abs(M).max() == 0.0);
}

TEST_CASE("random instances preserve rates and total power across the transform")
{
    GaussianRng pick(99);
    for (std::uint64_t seed = 0; seed < 20; ++seed)
    {
        arma::uword U = 1 + (arma::uword)(pick.uniform(0.0, 2.999));
        arma::uword n_t = 1 + (arma::uword)(pick.uniform(0.0, 3.999));
        std::vector<arma::uword> dims;
        for (arma::uword u = 0; u < U; ++u)
        {
            // Power conservation needs every uplink signal space to fit inside
            // the downlink array (d_u <= n_T); taller blocks lose trace to the
            // effective channel's null space and are covered separately below.
            arma::uword cap = std::min<arma::uword>(2, n_t);
            dims.push_back(1 + (arma::uword)(pick.uniform(0.0, (double)cap - 1e-3)));
        }

        double sigma2 = (seed % 2 == 0) ? 1.0 : 0.5;
        ChannelSet bc = testutil::make_bc_channels(n_t, dims, 3, 500 + seed, sigma2);
        auto maps = permutation_matrices({n_t}, dims);
        ChannelSet mac = bc_to_mac_channel(bc, maps);

        auto mac_covs = testutil::make_random_covs(mac, 600 + seed, 1.5);

        std::vector<arma::uword> seq(U);
        std::iota(seq.begin(), seq.end(), 0);
        for (arma::uword k = U; k > 1; --k)
            std::swap(seq[k - 1], seq[(arma::uword)pick.uniform(0.0, (double)k - 1e-9)]);
        auto order = DecodingOrder::from_sequence(seq);

        RateAllocation up = sic_rates(mac, mac_covs, order);
        auto bc_covs = mac_to_bc_covariances(bc, mac_covs, order);
        RateAllocation down = bc_dpc_rates(bc, bc_covs, order);

        double scale = std::max(1.0, arma::abs(up.bits).max());
        CHECK(arma::abs(up.bits - down.bits).max() / scale < 1e-6);
        CHECK(std::abs(bc_covs.total_trace() - mac_covs.total_trace()) <
              1e-8 * std::max(1.0, mac_covs.total_trace()));
    }
}

TEST_CASE("oversized uplink blocks keep rates but may shed unusable power")
{
    // A two-dimensional uplink signal aimed at a single downlink antenna has a
    // null direction; power placed there carries no rate and has no downlink
    // image. Rates must still match, and the mapped power can only shrink.
    for (std::uint64_t seed = 0; seed < 6; ++seed)
    {
        ChannelSet bc = testutil::make_bc_channels(1, {2, 2}, 2, 700 + seed);
        auto maps = permutation_matrices({1}, {2, 2});
        ChannelSet mac = bc_to_mac_channel(bc, maps);
        auto mac_covs = testutil::make_random_covs(mac, 800 + seed, 1.5);
        auto order = DecodingOrder::from_sequence({1, 0});

        RateAllocation up = sic_rates(mac, mac_covs, order);
        auto bc_covs = mac_to_bc_covariances(bc, mac_covs, order);
        RateAllocation down = bc_dpc_rates(bc, bc_covs, order);

        double scale = std::max(1.0, arma::abs(up.bits).max());
        CHECK(arma::abs(up.bits - down.bits).max() / scale < 1e-6);
        CHECK(bc_covs.total_trace() <= mac_covs.total_trace() + 1e-9);
    }
}

TEST_CASE("colored receive noise is rejected by the covariance transform")
{
    ChannelSet bc = testutil::make_bc_channels(2, {1, 1}, 1, 41);
    bc.noise[0](0, 0) = 2.0; // uneven diagonal
    auto covs = CovarianceSet::zeros(LinkSide::uplink, {1, 1}, 1);
    CHECK_THROWS_AS(mac_to_bc_covariances(bc, covs, DecodingOrder::identity(2)),
                    std::invalid_argument);
}
