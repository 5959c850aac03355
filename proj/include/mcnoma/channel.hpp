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

#ifndef MCNOMA_CHANNEL_HPP
#define MCNOMA_CHANNEL_HPP

#include <armadillo>
#include <cstdint>
#include <string>
#include <vector>

namespace mcnoma
{

// ---------- CONFIGURATION TYPES ----------

// Directional element constants. The element model is the standard parabolic
// one: 65 degree half power beamwidth in both cuts, 30 dB side lobe and
// front-to-back floors.
constexpr double PATTERN_BEAMWIDTH_DEG = 65.0;
constexpr double PATTERN_FLOOR_DB = 30.0;

// Sector antenna at the transmit site: a uniform planar array of directional
// elements with electric downtilt. The vertical column acts as one phase
// center; the horizontal axis provides the transmit ports.
struct AntennaConfig
{
    arma::uword vertical_elements = 4;   // elements per column
    arma::uword horizontal_elements = 2; // element columns on the panel
    int polarization_indicator = 4;      // stored for config fidelity; a single
                                         // polarization is realized
    double electric_downtilt_deg = 12.0;
    double element_spacing = 0.5; // in wavelengths
    double boresight_gain_dbi = 13.0;

    void validate() const;
};

// One simulated drop: geometry, carrier, band and noise, terminal population.
// Distances are horizontal (ground projection) in meters.
struct ScenarioConfig
{
    arma::uword num_users = 3;
    arma::uword bs_antennas = 2;            // transmit ports n_T
    std::vector<arma::uword> user_antennas; // n_R per user; empty = all 1
    double bs_height_m = 30.0;
    double ue_height_m = 6.0;
    std::vector<double> distances_m; // per user; empty = all 500 m
    double bandwidth_hz = 100e6;
    double carrier_hz = 3.5e9;
    arma::uword num_subcarriers = 64;
    double tx_power_dbm = 50.0;
    double noise_psd_dbm_hz = -174.0;
    double bs_gain_dbi = 13.0;
    double ue_gain_dbi = 0.0;
    AntennaConfig antenna;
    std::uint64_t seed = 1;

    // Drop statistics, not part of the published parameter set. Users land
    // uniformly in a sector of this width; fading is Rician over an
    // exponential delay profile.
    double azimuth_spread_deg = 120.0;
    double rician_k_db = 10.0;
    arma::uword num_taps = 8;
    double tap_decay_db = 3.0;

    void validate() const;

    // Fill user_antennas / distances_m defaults when empty, check sizes
    // otherwise, and mirror bs_gain_dbi into the antenna config.
    void normalize();

    // Stable content hash over every field that influences generated
    // channels. Stored in channel files so a solver run can detect a
    // scenario/channel mismatch.
    std::uint64_t content_hash() const;

    double subcarrier_noise_w() const; // noise power per subcarrier, watts
    double tx_power_w() const;
};

// ---------- CHANNEL CONTAINER ----------

// Which side of the link the per-user partition lives on. Downlink matrices
// are (sum n_R) x n_T with user blocks stacked in rows; the uplink image of
// the same link is n_T x (sum n_R) with user blocks in columns.
enum class LinkSide : std::uint8_t
{
    downlink = 0,
    uplink = 1
};

struct UserSpan
{
    arma::uword user = 0;   // user index
    arma::uword offset = 0; // first row (or column) of this user's block
    arma::uword count = 0;  // number of rows (or columns)
};

struct ChannelSet
{
    LinkSide side = LinkSide::downlink;
    std::vector<arma::cx_mat> tones; // one matrix per subcarrier
    std::vector<UserSpan> partition; // per-user block layout
    std::vector<arma::cx_mat> noise; // receive noise covariance; size 1 (same
                                     // on all tones) or num_tones
    std::uint64_t seed = 0;
    std::uint64_t scenario_hash = 0;

    arma::uword num_tones() const { return tones.size(); }
    arma::uword num_users() const { return partition.size(); }

    // Block of user u on tone n: rows for downlink, columns for uplink.
    arma::cx_mat block(arma::uword u, arma::uword n) const;

    const UserSpan &span_of(arma::uword u) const; // lookup by user index

    const arma::cx_mat &noise_on(arma::uword n) const;

    // Consistency of dimensions, partition coverage and noise shape.
    // Throws std::invalid_argument on the first violation.
    void validate() const;
};

// ---------- ANTENNA AND PROPAGATION MODELS ----------

// Directional element gain in dBi. Zenith is measured from the vertical axis
// (90 deg = horizon), azimuth from boresight. Inputs outside
// [0,180] x [-180,180] throw std::invalid_argument.
double element_pattern(double zenith_deg, double azimuth_deg, const AntennaConfig &ant);

// Rural macro path loss in dB over a 3D distance. Single slope log-distance
// model,
//     PL = 20 log10(4 pi f / c) + 23 log10(d) - 5 log10(h_bs h_ue / 180),
// i.e. free space intercept at 1 m, exponent 2.3, and a height correction
// that vanishes at the 30 m / 6 m reference geometry.
double rma_pathloss(double distance_3d_m, double bs_height_m, double ue_height_m,
                    double carrier_hz);

// ---------- GENERATION AND FILE I/O ----------

// Draw one deterministic channel realization for the scenario. Same scenario
// (seed included) gives bit-identical output on every run and platform.
ChannelSet generate_channels(const ScenarioConfig &sc);

void save_channels(const ChannelSet &cs, const std::string &path);
ChannelSet load_channels(const std::string &path);

} // namespace mcnoma

#endif
