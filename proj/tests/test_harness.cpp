// SPDX-License-Identifier: Apache-2.0
//
// Harness tests: result-file round trips, byte-level determinism, seed
// policy, axis calibration, and the per-kind row semantics on small
// generated scenarios.

#include <catch2/catch_amalgamated.hpp>

#include "mcnoma/harness.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace mcnoma;
namespace fs = std::filesystem;

namespace
{

ScenarioConfig tiny_scenario()
{
    ScenarioConfig sc;
    sc.num_users = 2;
    sc.bs_antennas = 2;
    sc.num_subcarriers = 4;
    sc.seed = 7;
    return sc;
}

std::string slurp(const fs::path &p)
{
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

fs::path fresh_dir(const std::string &name)
{
    const fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

const ResultRow &find_row(const ResultTable &t, Method m, double value)
{
    for (const auto &r : t.rows)
        if (r.method == m && r.value == value)
            return r;
    FAIL("row not found");
    return t.rows.front();
}

} // namespace

TEST_CASE("result tables survive the CSV round trip")
{
    ResultTable table;
    table.spec.kind = SweepKind::user_sweep;
    table.spec.values = {2.0, 3.0};
    table.spec.methods = {Method::proposed, Method::oma};
    table.spec.base = tiny_scenario();
    table.spec.num_seeds = 1;

    ResultRow good;
    good.value = 2.0;
    good.method = Method::proposed;
    good.seed = 42;
    good.sum_bits_hz = 12.345678901234567;
    good.sum_mbps = good.sum_bits_hz * 100.0;
    good.user_bits_hz = arma::vec{7.1, 5.2456789};
    good.energy_w = 99.25;
    good.kkt = 3.2e-9;
    good.order = {1, 0};
    good.block_fractions = {0.91, 0.09};
    table.rows.push_back(good);

    ResultRow bad;
    bad.value = 3.0;
    bad.method = Method::oma;
    bad.seed = 43;
    bad.ok = false;
    bad.error = "solver said \"no\", twice,\nwith a newline";
    table.rows.push_back(bad);

    const fs::path dir = fresh_dir("mcnoma_csv_roundtrip");
    emit_results(table, dir.string(), "run");
    const ResultTable back = parse_results_csv((dir / "run.csv").string());

    REQUIRE(back.rows.size() == 2);
    CHECK(back.spec.kind == SweepKind::user_sweep);
    for (std::size_t i = 0; i < 2; ++i)
    {
        const auto &a = table.rows[i];
        const auto &b = back.rows[i];
        CHECK(a.value == b.value);
        CHECK(a.method == b.method);
        CHECK(a.seed == b.seed);
        CHECK(a.ok == b.ok);
        CHECK(a.error == b.error);
        CHECK(a.sum_bits_hz == b.sum_bits_hz);
        CHECK(a.sum_mbps == b.sum_mbps);
        CHECK(a.energy_w == b.energy_w);
        CHECK(a.kkt == b.kkt);
        CHECK(a.order == b.order);
        REQUIRE(a.user_bits_hz.n_elem == b.user_bits_hz.n_elem);
        for (arma::uword u = 0; u < a.user_bits_hz.n_elem; ++u)
            CHECK(a.user_bits_hz[u] == b.user_bits_hz[u]);
        CHECK(a.block_fractions == b.block_fractions);
    }
}

TEST_CASE("experiment specs reject malformed requests")
{
    ExperimentSpec spec;
    spec.base = tiny_scenario();
    spec.values = {10.0};
    spec.methods = {Method::proposed};

    SECTION("empty methods")
    {
        spec.methods.clear();
        CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    }
    SECTION("duplicate methods")
    {
        spec.methods = {Method::oma, Method::oma};
        CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    }
    SECTION("empty or unsorted values")
    {
        spec.values.clear();
        CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
        spec.values = {20.0, 10.0};
        CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    }
    SECTION("zero seeds")
    {
        spec.num_seeds = 0;
        CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    }
    SECTION("fractional antenna counts")
    {
        spec.kind = SweepKind::nt_sweep;
        spec.values = {2.5};
        CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    }
    SECTION("oversized user counts")
    {
        spec.kind = SweepKind::user_sweep;
        spec.values = {9.0};
        CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    }
    SECTION("demo splits outside the open interval")
    {
        spec.kind = SweepKind::timeshare_demo;
        spec.values = {1.0};
        CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    }
    SECTION("demo with extra methods")
    {
        spec.kind = SweepKind::timeshare_demo;
        spec.values = {0.5};
        spec.methods = {Method::proposed, Method::oma};
        CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    }
    SECTION("the baseline spec is accepted")
    {
        spec.validate();
    }
}

TEST_CASE("snr sweeps fix the drop and scale only the power")
{
    ExperimentSpec spec;
    spec.kind = SweepKind::snr_sweep;
    spec.base = tiny_scenario();
    spec.values = {10.0, 20.0};
    spec.methods = {Method::proposed, Method::oma};
    spec.num_seeds = 2;

    const ResultTable table = run_experiment(spec);
    REQUIRE(table.rows.size() == 8);

    // canonical order: value-major, then method, then seed
    std::size_t i = 0;
    for (double v : spec.values)
        for (Method m : spec.methods)
            for (arma::uword rep = 0; rep < spec.num_seeds; ++rep, ++i)
            {
                CHECK(table.rows[i].value == v);
                CHECK(table.rows[i].method == m);
                CHECK(table.rows[i].seed == spec.base.seed + rep);
                CHECK(table.rows[i].ok);
            }

    // the drop is shared along the axis, so a one-point spec reproduces
    // the corresponding rows exactly
    ExperimentSpec high = spec;
    high.values = {20.0};
    const ResultTable only = run_experiment(high);
    CHECK(find_row(only, Method::proposed, 20.0).sum_bits_hz ==
          find_row(table, Method::proposed, 20.0).sum_bits_hz);

    // more SNR, more rate; and the optimum tops the baseline
    CHECK(find_row(table, Method::proposed, 20.0).sum_bits_hz >
          find_row(table, Method::proposed, 10.0).sum_bits_hz);
    CHECK(find_row(table, Method::proposed, 20.0).sum_bits_hz >=
          find_row(table, Method::oma, 20.0).sum_bits_hz * (1.0 - 1e-4));

    for (const auto &r : table.rows)
    {
        CHECK(r.sum_mbps == r.sum_bits_hz * spec.base.bandwidth_hz / 1e6);
        if (r.method == Method::proposed)
            CHECK(r.kkt < 1e-6);
    }
}

TEST_CASE("the receive-SNR axis is calibrated against the reference user")
{
    ScenarioConfig sc = tiny_scenario();
    sc.normalize();
    const ChannelSet bc = generate_channels(sc);
    const double noise = sc.subcarrier_noise_w();
    const double p = power_for_receive_snr(bc, 17.0, noise);

    const double per_tone_snr =
        (p / (double)bc.num_tones()) * mean_reference_gain(bc) / noise;
    CHECK(10.0 * std::log10(per_tone_snr) == Catch::Approx(17.0).margin(1e-10));
}

TEST_CASE("sweep output files are byte identical across runs")
{
    ExperimentSpec spec;
    spec.kind = SweepKind::snr_sweep;
    spec.base = tiny_scenario();
    spec.values = {15.0, 25.0};
    spec.methods = {Method::proposed, Method::noma};
    spec.num_seeds = 2;

    const fs::path a = fresh_dir("mcnoma_det_a");
    const fs::path b = fresh_dir("mcnoma_det_b");
    emit_results(run_experiment(spec), a.string(), "sweep");
    emit_results(run_experiment(spec), b.string(), "sweep");

    for (const char *name : {"sweep.csv", "sweep.jsonl", "sweep_proposed.dat",
                             "sweep_noma.dat"})
    {
        INFO(name);
        CHECK(slurp(a / name) == slurp(b / name));
    }
}

TEST_CASE("distance rows minimize against the sharing scheme's floors")
{
    ExperimentSpec spec;
    spec.kind = SweepKind::distance_sweep;
    spec.base = tiny_scenario();
    spec.values = {500.0};
    spec.methods = {Method::proposed, Method::oma, Method::noma, Method::mc_noma};
    spec.num_seeds = 1;

    const ResultTable table = run_experiment(spec);
    for (const auto &r : table.rows)
    {
        INFO(to_string(r.method) << ": " << r.error);
        CHECK(r.ok);
    }

    const double budget = spec.base.tx_power_w();
    const auto &oma = find_row(table, Method::oma, 500.0);
    const auto &opt = find_row(table, Method::proposed, 500.0);
    CHECK(oma.energy_w == budget);
    CHECK(opt.kkt < 1e-6);

    // the floors are reachable with the full budget, so the optimum needs
    // at most that, and the heuristics need at least the optimum
    CHECK(opt.energy_w <= budget * (1.0 + 1e-6));
    CHECK(opt.energy_w <=
          find_row(table, Method::noma, 500.0).energy_w * (1.0 + 1e-6));
    CHECK(opt.energy_w <=
          find_row(table, Method::mc_noma, 500.0).energy_w * (1.0 + 1e-6));

    // everyone meets the floors the sharing scheme defined
    for (const auto &r : table.rows)
        for (arma::uword u = 0; u < 2; ++u)
            CHECK(r.user_bits_hz[u] >= oma.user_bits_hz[u] - 1e-6);
}

TEST_CASE("the schedule demo produces a two-block time share")
{
    ExperimentSpec spec;
    spec.kind = SweepKind::timeshare_demo;
    spec.base = tiny_scenario();
    spec.values = {0.6};
    spec.methods = {Method::proposed};
    spec.num_seeds = 1;

    const ResultTable table = run_experiment(spec);
    REQUIRE(table.rows.size() == 1);
    const auto &row = table.rows[0];
    INFO(row.error);
    REQUIRE(row.ok);

    REQUIRE(table.demo_blocks.size() == row.block_fractions.size());
    REQUIRE(table.demo_blocks.size() >= 2);
    double total = 0.0;
    for (const auto &blk : table.demo_blocks)
    {
        CHECK(blk.fraction > 0.0);
        CHECK(blk.fraction < 1.0);
        CHECK(blk.bits.n_rows == 2);
        CHECK(blk.bits.n_cols == 4);
        total += blk.fraction;
    }
    CHECK(total == Catch::Approx(1.0).margin(1e-9));

    // the averaged schedule hands user 0 sixty percent of the pair rate
    const double pair = row.user_bits_hz[0] + row.user_bits_hz[1];
    CHECK(row.user_bits_hz[0] == Catch::Approx(0.6 * pair).epsilon(1e-6));

    const fs::path dir = fresh_dir("mcnoma_demo_out");
    emit_results(table, dir.string(), "demo");
    CHECK(fs::exists(dir / "demo_block0.dat"));
    CHECK(fs::exists(dir / "demo_block1.dat"));
}

TEST_CASE("JSON configs load, reject unknown keys, and round trip the spec")
{
    const fs::path dir = fresh_dir("mcnoma_json_cfg");

    {
        std::ofstream out(dir / "scenario.json");
        out << R"({
  "num_users": 2,
  "bs_antennas": 4,
  "num_subcarriers": 8,
  "distances_m": [120.0, 340.0],
  "tx_power_dbm": 44.0,
  "seed": 99,
  "antenna": {"electric_downtilt_deg": 9.0}
})";
    }
    const ScenarioConfig sc = load_scenario((dir / "scenario.json").string());
    CHECK(sc.num_users == 2);
    CHECK(sc.bs_antennas == 4);
    CHECK(sc.num_subcarriers == 8);
    CHECK(sc.distances_m == std::vector<double>{120.0, 340.0});
    CHECK(sc.tx_power_dbm == 44.0);
    CHECK(sc.seed == 99);
    CHECK(sc.antenna.electric_downtilt_deg == 9.0);

    {
        std::ofstream out(dir / "typo.json");
        out << R"({"num_userz": 2})";
    }
    CHECK_THROWS_AS(load_scenario((dir / "typo.json").string()),
                    std::invalid_argument);

    {
        std::ofstream out(dir / "exp.json");
        out << R"({
  "kind": "nt_sweep",
  "values": [2, 4, 8],
  "methods": ["proposed", "oma"],
  "num_seeds": 3,
  "scenario": {"num_users": 3, "seed": 5}
})";
    }
    const ExperimentSpec spec = load_experiment((dir / "exp.json").string());
    CHECK(spec.kind == SweepKind::nt_sweep);
    CHECK(spec.values == std::vector<double>{2.0, 4.0, 8.0});
    REQUIRE(spec.methods.size() == 2);
    CHECK(spec.methods[0] == Method::proposed);
    CHECK(spec.methods[1] == Method::oma);
    CHECK(spec.num_seeds == 3);
    CHECK(spec.base.num_users == 3);
    CHECK(spec.base.seed == 5);

    CHECK_THROWS_AS(load_scenario((dir / "missing.json").string()),
                    std::runtime_error);
}

TEST_CASE("failures are recorded per row and the sweep completes")
{
    // mismatched antenna counts pass spec validation but break the demo's
    // channel tie inside the row; the sweep must finish with the failure
    // on record rather than throw
    ExperimentSpec spec;
    spec.kind = SweepKind::timeshare_demo;
    spec.base = tiny_scenario();
    spec.base.user_antennas = {1, 2};
    spec.values = {0.5};
    spec.methods = {Method::proposed};
    spec.num_seeds = 1;

    const ResultTable table = run_experiment(spec);
    REQUIRE(table.rows.size() == 1);
    CHECK_FALSE(table.rows[0].ok);
    CHECK(table.rows[0].error.find("antenna") != std::string::npos);
    CHECK(table.rows[0].sum_bits_hz == 0.0);
}
