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
// Experiment driver: seeded sweeps over scenario axes, method dispatch,
// and deterministic result serialization.
//
// Every sweep runs on the uplink image of the generated downlink channels
// (rates and total power carry over by duality at uniform weights), one
// row per (sweep value, method, seed). Failures are captured per row so a
// sweep always completes. Serialization uses shortest round-trip float
// formatting, so identical specs produce byte-identical files.
//
// Seeding: the channel seed for a row is base.seed + value index +
// replicate index, except for the receive-SNR axis where the value index
// is dropped (the drop is one physical scenario; only the transmit power
// scales along the axis).

#ifndef MCNOMA_HARNESS_HPP
#define MCNOMA_HARNESS_HPP

#include "mcnoma/channel.hpp"
#include "mcnoma/sic.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mcnoma
{

enum class SweepKind
{
    snr_sweep,        // receive SNR in dB at the reference user
    nt_sweep,         // transmit antenna count
    user_sweep,       // co-located user count
    subcarrier_sweep, // subcarrier count at fixed band and power
    distance_sweep,   // common user distance; floors from the linear
                      // sharing scheme, methods minimize energy
    timeshare_demo    // tied-user schedule; value = rate split handed to
                      // the first of the two tied users
};

enum class Method
{
    proposed, // interior-point optimum
    oma,      // shared-band linear receiver (iterative waterfilling)
    noma,     // band-level beams, single decode order
    mc_noma   // per-tone beams and decode orders
};

std::string to_string(SweepKind kind);
std::string to_string(Method method);
SweepKind sweep_kind_from(const std::string &name);
Method method_from(const std::string &name);

struct ExperimentSpec
{
    SweepKind kind = SweepKind::snr_sweep;
    ScenarioConfig base;
    std::vector<double> values;
    std::vector<Method> methods;
    arma::uword num_seeds = 1;

    // Nonempty sorted values in the axis domain, nonempty unique methods
    // (the timeshare demo admits only `proposed`), at least one seed.
    void validate() const;
};

struct ResultRow
{
    double value = 0.0;
    Method method = Method::proposed;
    std::uint64_t seed = 0;
    bool ok = true;
    std::string error;

    double sum_bits_hz = 0.0; // band-average spectral efficiency
    double sum_mbps = 0.0;    // same quantity scaled by the bandwidth
    arma::vec user_bits_hz;   // per-user spectral efficiency
    double energy_w = 0.0;    // spent (rate modes) or minimized power
    double kkt = 0.0;         // certificate where the method carries one
    std::vector<arma::uword> order;      // decode sequence, first to last
    std::vector<double> block_fractions; // nonempty only for the demo
};

// Per-tone spectral-efficiency trace of one time-share block, kept for
// the demo's plot files.
struct TimeShareDump
{
    double fraction = 0.0;
    DecodingOrder order;
    arma::mat bits; // users x tones
};

struct ResultTable
{
    ExperimentSpec spec;
    std::vector<ResultRow> rows;
    std::vector<TimeShareDump> demo_blocks;
};

// Mean squared channel entry of the reference user (user 0), averaged
// over tones and normalized per antenna pair; the gain figure the SNR
// axis is defined against.
double mean_reference_gain(const ChannelSet &downlink);

// Total transmit power that realizes `snr_db` of per-subcarrier receive
// SNR at the reference user under an even power split across tones.
double power_for_receive_snr(const ChannelSet &downlink, double snr_db,
                             double noise_w_per_tone);

// Channel seed used for one row; see the header comment for the rule.
std::uint64_t seed_for(const ExperimentSpec &spec, arma::uword value_index,
                       arma::uword replicate);

// Run a sweep. Rows come back in canonical order (value-major, then
// method, then seed) regardless of execution details; per-row failures
// are recorded, not thrown.
ResultTable run_experiment(const ExperimentSpec &spec);

// Write <stem>.csv, <stem>.jsonl, one <stem>_<method>.dat plot file per
// method, and <stem>_block<k>.dat traces when the table carries a
// schedule. I/O failures throw std::runtime_error naming the path.
void emit_results(const ResultTable &table, const std::string &out_dir,
                  const std::string &stem);

// Read back a results CSV produced by emit_results. The returned table
// carries the rows and the sweep kind; scenario fields are not embedded
// in the CSV and stay at their defaults.
ResultTable parse_results_csv(const std::string &path);

// JSON config files. Scenario files map one-to-one onto ScenarioConfig
// fields; experiment files add kind/values/methods/num_seeds around a
// nested scenario. Unknown keys are rejected.
ScenarioConfig load_scenario(const std::string &path);
ExperimentSpec load_experiment(const std::string &path);

} // namespace mcnoma

#endif
