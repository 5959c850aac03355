// SPDX-License-Identifier: Apache-2.0
//
// Time-sharing tests: multiplier clustering, within-cluster order
// enumeration, hull fractions against hand arithmetic, and the end-to-end
// closure of tied-floor instances.

#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "mcnoma/allocator.hpp"
#include "mcnoma/common.hpp"
#include "mcnoma/timeshare.hpp"

#include <string>
#include <vector>

using namespace mcnoma;

namespace
{

ChannelSet equal_scalar_uplink(arma::uword n_users)
{
    ChannelSet cs;
    cs.side = LinkSide::uplink;
    cs.seed = 0;
    for (arma::uword u = 0; u < n_users; ++u)
        cs.partition.push_back({u, u, 1});
    arma::cx_mat H(1, n_users);
    H.ones();
    cs.tones.push_back(H);
    cs.noise.assign(1, testutil::cx_scalar(1.0));
    return cs;
}

std::vector<RateVertex> paper_style_vertices()
{
    return {{DecodingOrder::from_sequence({0, 1, 2}), arma::vec{123.0, 170.0, 62.0}},
            {DecodingOrder::from_sequence({0, 2, 1}), arma::vec{123.0, 196.0, 31.0}}};
}

} // namespace

TEST_CASE("cluster_users groups matching multipliers")
{
    auto two = cluster_users(arma::vec{0.5, 0.5, 0.1});
    REQUIRE(two.size() == 2);
    CHECK(two[0].size() == 2); // the tied pair, largest multiplier first
    CHECK(two[1] == std::vector<arma::uword>{2});

    auto singletons = cluster_users(arma::vec{0.3, 0.9, 0.6});
    REQUIRE(singletons.size() == 3);
    CHECK(singletons[0] == std::vector<arma::uword>{1});
    CHECK(singletons[1] == std::vector<arma::uword>{2});
    CHECK(singletons[2] == std::vector<arma::uword>{0});

    CHECK(cluster_users(arma::vec{0.4, 0.4, 0.4}).size() == 1);
}

TEST_CASE("two-block fraction arithmetic matches the hand example")
{
    auto sched = convex_hull_fractions(paper_style_vertices(),
                                       arma::vec{123.0, 172.34, 59.21});
    REQUIRE(sched.blocks.size() == 2);
    sched.validate();

    double rho_first = 0.0;
    for (const auto& b : sched.blocks)
        if (b.rates[1] == 170.0)
            rho_first = b.fraction;
    CHECK(rho_first == Catch::Approx(0.91).margin(1e-3));

    const arma::vec avg = average_rates(sched);
    CHECK(avg[0] == Catch::Approx(123.0).margin(1e-9));
    CHECK(avg[1] == Catch::Approx(172.34).margin(0.01));
    CHECK(avg[2] == Catch::Approx(59.21).margin(0.01));
}

TEST_CASE("a vertex target takes the whole period")
{
    auto sched = convex_hull_fractions(paper_style_vertices(),
                                       arma::vec{123.0, 196.0, 31.0});
    REQUIRE(sched.blocks.size() == 1);
    CHECK(sched.blocks[0].fraction == Catch::Approx(1.0).margin(1e-9));
    CHECK(sched.blocks[0].rates[1] == 196.0);
    sched.validate();
}

TEST_CASE("a midpoint target splits the period evenly")
{
    std::vector<RateVertex> verts{
        {DecodingOrder::from_sequence({0, 1}), arma::vec{2.0, 0.5}},
        {DecodingOrder::from_sequence({1, 0}), arma::vec{0.5, 2.0}}};
    auto sched = convex_hull_fractions(verts, arma::vec{1.25, 1.25});
    REQUIRE(sched.blocks.size() == 2);
    CHECK(sched.blocks[0].fraction == Catch::Approx(0.5).margin(1e-9));
    CHECK(sched.blocks[1].fraction == Catch::Approx(0.5).margin(1e-9));
}

TEST_CASE("targets outside the hull are certified infeasible")
{
    CHECK_THROWS_AS(convex_hull_fractions(paper_style_vertices(),
                                          arma::vec{123.0, 210.0, 40.0}),
                    infeasible_error);
    try
    {
        convex_hull_fractions(paper_style_vertices(), arma::vec{123.0, 210.0, 40.0});
    }
    catch (const infeasible_error& e)
    {
        CHECK(std::string(e.what()).find("user 1") != std::string::npos);
    }
}

TEST_CASE("schedule validation rejects broken invariants")
{
    TimeShareSchedule s;
    s.target = {1.0};
    CHECK_THROWS_AS(s.validate(), std::invalid_argument); // no blocks

    s.blocks = {{0.6, DecodingOrder::identity(1), arma::vec{1.0}},
                {0.3, DecodingOrder::identity(1), arma::vec{1.0}}};
    CHECK_THROWS_AS(s.validate(), std::invalid_argument); // fractions sum to 0.9

    s.blocks[1].fraction = 0.4;
    s.target = {2.0};
    CHECK_THROWS_AS(s.validate(), std::invalid_argument); // average misses target

    s.target = {1.0};
    s.validate();
}

TEST_CASE("tied floors close through time sharing")
{
    auto cs = equal_scalar_uplink(2);
    AllocationProblem p;
    p.channels = cs;
    p.weights = arma::vec(2, arma::fill::ones);
    p.min_rates = {1.0, 1.0};
    auto sol = minimize_energy(p);

    auto clusters = cluster_users(sol.duals);
    REQUIRE(clusters.size() == 1);
    REQUIRE(clusters[0].size() == 2);

    auto verts = enumerate_vertices(clusters, cs, sol.covariances);
    REQUIRE(verts.size() == 2);
    CHECK(arma::accu(verts[0].rates) ==
          Catch::Approx(arma::accu(verts[1].rates)).epsilon(1e-8));

    // Neither vertex meets both floors; the half-and-half mix does.
    auto sched = convex_hull_fractions(verts, p.min_rates);
    sched.validate();
    REQUIRE(sched.blocks.size() == 2);
    CHECK(sched.blocks[0].fraction == Catch::Approx(0.5).margin(1e-4));
    const arma::vec avg = average_rates(sched);
    CHECK(avg[0] == Catch::Approx(1.0).margin(1e-6));
    CHECK(avg[1] == Catch::Approx(1.0).margin(1e-6));
}

TEST_CASE("a full three-user cluster keeps its sum across vertices")
{
    auto cs = equal_scalar_uplink(3);
    AllocationProblem p;
    p.channels = cs;
    p.weights = arma::vec(3, arma::fill::ones);
    p.min_rates = {1.0, 1.0, 1.0};
    auto sol = minimize_energy(p);

    auto clusters = cluster_users(sol.duals);
    REQUIRE(clusters.size() == 1);
    auto verts = enumerate_vertices(clusters, cs, sol.covariances);
    REQUIRE(verts.size() == 6);

    const double sum0 = arma::accu(verts[0].rates);
    for (const auto& v : verts)
        CHECK(arma::accu(v.rates) == Catch::Approx(sum0).epsilon(1e-8));

    auto sched = convex_hull_fractions(verts, p.min_rates);
    sched.validate();
    CHECK(sched.blocks.size() <= 4); // at most users + 1 carry weight

    // each average sits inside the chosen vertices' spread
    const arma::vec avg = average_rates(sched);
    for (arma::uword u = 0; u < 3; ++u)
    {
        double lo = arma::datum::inf, hi = -arma::datum::inf;
        for (const auto& b : sched.blocks)
        {
            lo = std::min(lo, b.rates[u]);
            hi = std::max(hi, b.rates[u]);
        }
        CHECK(avg[u] >= lo - 1e-9);
        CHECK(avg[u] <= hi + 1e-9);
    }
}

TEST_CASE("singleton clusters reproduce the solver vertex")
{
    auto cs = testutil::make_mac_channels(2, {1, 1}, 2, 11);
    AllocationProblem p;
    p.channels = cs;
    p.weights = arma::vec(2, arma::fill::ones);
    p.min_rates = {1.5, 1.0};
    auto sol = minimize_energy(p);
    REQUIRE_FALSE(extract_decoding_order(sol).second);

    auto verts = enumerate_vertices(cluster_users(sol.duals), cs, sol.covariances);
    REQUIRE(verts.size() == 1);
    CHECK(verts[0].order == sol.order);
    CHECK(arma::abs(verts[0].rates - sol.rates.user_totals()).max() < 1e-12);
}

TEST_CASE("the enumeration cap points at the tie tolerance")
{
    std::vector<std::vector<arma::uword>> clusters{{0, 1, 2, 3, 4, 5, 6, 7}};
    ChannelSet cs;
    CovarianceSet covs;
    try
    {
        enumerate_vertices(clusters, cs, covs);
        FAIL("expected the enumeration cap to trip");
    }
    catch (const std::invalid_argument& e)
    {
        CHECK(std::string(e.what()).find("10080") != std::string::npos);
    }
}
