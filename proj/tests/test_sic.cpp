// SPDX-License-Identifier: Apache-2.0
//
// Rate computation tests: hand-computed chain rule values, telescoping and
// monotonicity properties, subset capacity bounds, gain-based ordering.

#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "mcnoma/sic.hpp"

using namespace mcnoma;

// Two scalar users into one receive antenna, unit gains, unit noise, unit
// powers. Decoding user 2 first leaves it facing user 1's signal:
//   b_2 = log2(3/2), b_1 = log2(2), sum = log2(3).
static constexpr double LOG2_1P5 = 0.5849625007211562;
static constexpr double LOG2_3 = 1.584962500721156;

static ChannelSet scalar_two_user_mac()
{
    ChannelSet cs;
    cs.side = LinkSide::uplink;
    cs.tones.assign(1, testutil::cx_row({1.0, 1.0}));
    cs.partition = {{0, 0, 1}, {1, 1, 1}};
    cs.noise.assign(1, testutil::cx_scalar(1.0));
    return cs;
}

TEST_CASE("two scalar users reproduce the hand-computed chain rates")
{
    ChannelSet cs = scalar_two_user_mac();
    auto covs = CovarianceSet::zeros(LinkSide::uplink, {1, 1}, 1);
    covs.at(0, 0)(0, 0) = 1.0;
    covs.at(1, 0)(0, 0) = 1.0;

    auto order = DecodingOrder::from_sequence({1, 0}); // user 2 decoded first
    RateAllocation r = sic_rates(cs, covs, order);

    CHECK(r.bits(1, 0) == Catch::Approx(LOG2_1P5).margin(1e-12));
    CHECK(r.bits(0, 0) == Catch::Approx(1.0).margin(1e-12));
    CHECK(r.sum_bits() == Catch::Approx(LOG2_3).margin(1e-12));

    // Flipping the order flips who absorbs the interference.
    RateAllocation r2 = sic_rates(cs, covs, DecodingOrder::from_sequence({0, 1}));
    CHECK(r2.bits(0, 0) == Catch::Approx(LOG2_1P5).margin(1e-12));
    CHECK(r2.bits(1, 0) == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("all-zero covariances give zero rates")
{
    ChannelSet cs = testutil::make_mac_channels(2, {1, 2, 1}, 4, 11);
    auto covs = CovarianceSet::zeros(LinkSide::uplink, {1, 2, 1}, 4);
    RateAllocation r = sic_rates(cs, covs, DecodingOrder::identity(3));
    CHECK(arma::abs(r.bits).max() == 0.0);
}

TEST_CASE("a single user's rate is order-free log-det")
{
    ChannelSet cs = testutil::make_mac_channels(3, {2}, 3, 21);
    auto covs = testutil::make_random_covs(cs, 22);

    RateAllocation r = sic_rates(cs, covs, DecodingOrder::identity(1));
    for (arma::uword n = 0; n < 3; ++n)
    {
        arma::cx_mat G = cs.block(0, n);
        arma::cx_mat S = cs.noise_on(n) + G * covs.at(0, n) * G.t();
        double want = logdet_pd_bits(S) - logdet_pd_bits(cs.noise_on(n));
        CHECK(r.bits(0, n) == Catch::Approx(want).margin(1e-10));
        CHECK(r.bits(0, n) == Catch::Approx(subset_capacity(cs, covs, {0}, n)).margin(1e-10));
    }
}

TEST_CASE("every decode schedule telescopes to the same sum")
{
    ChannelSet cs = testutil::make_mac_channels(2, {1, 1, 1}, 5, 31);
    auto covs = testutil::make_random_covs(cs, 32);

    std::vector<std::vector<arma::uword>> schedules = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                                                       {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
    arma::vec sums(schedules.size());
    for (std::size_t i = 0; i < schedules.size(); ++i)
        sums(i) = sic_rates(cs, covs, DecodingOrder::from_sequence(schedules[i])).sum_bits();

    double full = 0.0;
    for (arma::uword n = 0; n < 5; ++n)
        full += subset_capacity(cs, covs, {0, 1, 2}, n);

    for (std::size_t i = 0; i < schedules.size(); ++i)
        CHECK(sums(i) == Catch::Approx(full).epsilon(1e-8));
}

TEST_CASE("subset capacity matches the scalar example")
{
    ChannelSet cs = scalar_two_user_mac();
    auto covs = CovarianceSet::zeros(LinkSide::uplink, {1, 1}, 1);
    covs.at(0, 0)(0, 0) = 1.0;
    covs.at(1, 0)(0, 0) = 1.0;

    CHECK(subset_capacity(cs, covs, {0, 1}, 0) == Catch::Approx(LOG2_3).margin(1e-12));
    CHECK(subset_capacity(cs, covs, {0}, 0) == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("singleton subset with zero covariance has zero capacity")
{
    ChannelSet cs = testutil::make_mac_channels(2, {1, 1}, 2, 41);
    auto covs = testutil::make_random_covs(cs, 42);
    covs.at(1, 0).zeros();
    covs.at(1, 1).zeros();
    CHECK(subset_capacity(cs, covs, {1}, 0) == 0.0);
    CHECK(subset_capacity(cs, covs, {1}, 1) == 0.0);
}

TEST_CASE("growing a covariance never shrinks the sum rate")
{
    ChannelSet cs = testutil::make_mac_channels(2, {1, 1, 1}, 4, 51);
    auto covs = testutil::make_random_covs(cs, 52);
    auto order = DecodingOrder::from_sequence({2, 0, 1});

    double before = sic_rates(cs, covs, order).sum_bits();
    GaussianRng rng(53);
    covs.at(1, 2) += testutil::random_psd(rng, 1, 0.7);
    double after = sic_rates(cs, covs, order).sum_bits();
    CHECK(after >= before - 1e-12);
}

TEST_CASE("rates are nonnegative for random instances")
{
    for (std::uint64_t seed = 0; seed < 8; ++seed)
    {
        ChannelSet cs = testutil::make_mac_channels(3, {1, 2, 1}, 6, 60 + seed);
        auto covs = testutil::make_random_covs(cs, 70 + seed);
        RateAllocation r = sic_rates(cs, covs, DecodingOrder::from_sequence({1, 2, 0}));
        CHECK(r.bits.min() >= 0.0);
    }
}

TEST_CASE("downlink-side rate computation uses full-stack contributions")
{
    // One user, 1 rx antenna, 2 tx antennas: rate must equal the log-det with
    // the n_T x n_T transmit covariance mapped through the full channel row.
    ChannelSet cs = testutil::make_bc_channels(2, {1}, 2, 81);
    auto covs = testutil::make_random_covs(cs, 82);
    REQUIRE(covs.at(0, 0).n_rows == 2);

    RateAllocation r = sic_rates(cs, covs, DecodingOrder::identity(1));
    for (arma::uword n = 0; n < 2; ++n)
    {
        arma::cx_mat S = cs.noise_on(n) + cs.tones[n] * covs.at(0, n) * cs.tones[n].t();
        double want = logdet_pd_bits(S) - logdet_pd_bits(cs.noise_on(n));
        CHECK(r.bits(0, n) == Catch::Approx(want).margin(1e-10));
    }
}

TEST_CASE("gain order sorts users weakest first")
{
    // Three scalar users with aggregate gains 4, 1, 9.
    ChannelSet cs;
    cs.side = LinkSide::uplink;
    cs.tones.assign(1, testutil::cx_row({2.0, 1.0, 3.0}));
    cs.partition = {{0, 0, 1}, {1, 1, 1}, {2, 2, 1}};
    cs.noise.assign(1, testutil::cx_scalar(1.0));

    auto [order, tie] = channel_gain_order(cs);
    CHECK(order.user_at == std::vector<arma::uword>{1, 0, 2});
    CHECK_FALSE(tie);
}

TEST_CASE("gain order of one user is the identity")
{
    ChannelSet cs = testutil::make_mac_channels(2, {2}, 3, 91);
    auto [order, tie] = channel_gain_order(cs);
    CHECK(order.user_at == std::vector<arma::uword>{0});
    CHECK_FALSE(tie);
}

TEST_CASE("equal gains keep user index order and raise the tie flag")
{
    ChannelSet cs;
    cs.side = LinkSide::uplink;
    cs.tones.assign(1, testutil::cx_row({1.0, 1.0, 1.0}));
    cs.partition = {{0, 0, 1}, {1, 1, 1}, {2, 2, 1}};
    cs.noise.assign(1, testutil::cx_scalar(1.0));

    auto [order, tie] = channel_gain_order(cs);
    CHECK(order.user_at == std::vector<arma::uword>{0, 1, 2});
    CHECK(tie);
}

TEST_CASE("decoding order rejects non-permutations")
{
    CHECK_THROWS_AS(DecodingOrder::from_sequence({0, 0, 1}), std::invalid_argument);
    CHECK_THROWS_AS(DecodingOrder::from_sequence({0, 3, 1}), std::invalid_argument);

    DecodingOrder d = DecodingOrder::identity(3);
    d.position_of[2] = 0;
    CHECK_THROWS_AS(d.validate(), std::invalid_argument);
}

TEST_CASE("covariance sets reject broken inputs and clip roundoff")
{
    auto covs = CovarianceSet::zeros(LinkSide::uplink, {2, 2}, 1);
    covs.at(0, 0) = arma::cx_mat(arma::mat{{1.0, 0.3}, {0.3, 1.0}}, arma::mat(2, 2, arma::fill::zeros));
    covs.at(1, 0) = covs.at(0, 0);
    CHECK_NOTHROW(covs.validate());

    // Non-Hermitian beyond tolerance.
    covs.at(0, 0)(0, 1) = arma::cx_double(0.3, 1e-3);
    covs.at(0, 0)(1, 0) = arma::cx_double(0.3, 1e-3); // same sign: M != M^H
    CHECK_THROWS_AS(covs.validate(), std::invalid_argument);

    // Indefinite matrix.
    covs.at(0, 0) = arma::cx_mat(arma::mat{{1.0, 2.0}, {2.0, 1.0}}, arma::mat(2, 2, arma::fill::zeros));
    CHECK_THROWS_AS(covs.validate(), std::invalid_argument);
    covs.clip();
    CHECK_NOTHROW(covs.validate());

    // Shape mismatch against a channel set.
    ChannelSet cs = testutil::make_mac_channels(2, {1, 1}, 1, 99);
    CHECK_THROWS_AS(sic_rates(cs, covs, DecodingOrder::identity(2)), std::invalid_argument);
}
