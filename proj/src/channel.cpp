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

#include "mcnoma/channel.hpp"
#include "mcnoma/common.hpp"
#include "mcnoma/kernels.hpp"
#include "mcnoma/linalg.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace mcnoma
{

// ---------- VALIDATION ----------

void AntennaConfig::validate() const
{
    if (vertical_elements < 1)
        throw std::invalid_argument("AntennaConfig: vertical_elements must be >= 1");
    if (horizontal_elements < 1)
        throw std::invalid_argument("AntennaConfig: horizontal_elements must be >= 1");
    if (!(element_spacing > 0.0))
        throw std::invalid_argument("AntennaConfig: element_spacing must be > 0");
    if (!std::isfinite(boresight_gain_dbi))
        throw std::invalid_argument("AntennaConfig: boresight_gain must be finite");
    if (!std::isfinite(electric_downtilt_deg))
        throw std::invalid_argument("AntennaConfig: electric_downtilt must be finite");
}

void ScenarioConfig::validate() const
{
    if (num_users < 1)
        throw std::invalid_argument("ScenarioConfig: num_users must be >= 1");
    if (bs_antennas < 1)
        throw std::invalid_argument("ScenarioConfig: bs_antennas must be >= 1");
    if (num_subcarriers < 1)
        throw std::invalid_argument("ScenarioConfig: num_subcarriers must be >= 1");
    if (!user_antennas.empty() && user_antennas.size() != num_users)
        throw std::invalid_argument("ScenarioConfig: user_antennas length must equal num_users");
    for (auto a : user_antennas)
        if (a < 1)
            throw std::invalid_argument("ScenarioConfig: every user needs >= 1 antenna");
    if (!distances_m.empty() && distances_m.size() != num_users)
        throw std::invalid_argument("ScenarioConfig: distances length must equal num_users");
    for (auto d : distances_m)
        if (!(d > 0.0))
            throw std::invalid_argument("ScenarioConfig: distances must be > 0");
    if (!(bandwidth_hz > 0.0))
        throw std::invalid_argument("ScenarioConfig: bandwidth must be > 0");
    if (!(carrier_hz > 0.0))
        throw std::invalid_argument("ScenarioConfig: carrier_freq must be > 0");
    if (!(bs_height_m > 0.0) || !(ue_height_m > 0.0))
        throw std::invalid_argument("ScenarioConfig: heights must be > 0");
    if (num_taps < 1)
        throw std::invalid_argument("ScenarioConfig: num_taps must be >= 1");
    if (!(azimuth_spread_deg >= 0.0) || azimuth_spread_deg > 360.0)
        throw std::invalid_argument("ScenarioConfig: azimuth_spread must be in [0, 360]");
    antenna.validate();
}

void ScenarioConfig::normalize()
{
    if (user_antennas.empty())
        user_antennas.assign(num_users, 1);
    if (distances_m.empty())
        distances_m.assign(num_users, 500.0);
    antenna.boresight_gain_dbi = bs_gain_dbi;
    validate();
}

double ScenarioConfig::subcarrier_noise_w() const
{
    return dbm_to_watt(noise_psd_dbm_hz) * bandwidth_hz / (double)num_subcarriers;
}

double ScenarioConfig::tx_power_w() const
{
    return dbm_to_watt(tx_power_dbm);
}

// FNV-1a over a canonical little-endian byte stream of the fields that shape
// the generated channels. transmit_power is deliberately excluded: power is
// an allocator input and must not invalidate stored channel files.
namespace
{

struct Fnv1a
{
    std::uint64_t h = 1469598103934665603ULL;

    void bytes(const void *p, std::size_t n)
    {
        auto *b = (const unsigned char *)p;
        for (std::size_t i = 0; i < n; ++i)
        {
            h ^= b[i];
            h *= 1099511628211ULL;
        }
    }
    void f64(double v)
    {
        std::uint64_t u;
        std::memcpy(&u, &v, 8);
        bytes(&u, 8);
    }
    void u64(std::uint64_t v) { bytes(&v, 8); }
};

} // namespace

std::uint64_t ScenarioConfig::content_hash() const
{
    Fnv1a fnv;
    fnv.u64(num_users);
    fnv.u64(bs_antennas);
    for (auto a : user_antennas)
        fnv.u64(a);
    fnv.f64(bs_height_m);
    fnv.f64(ue_height_m);
    for (auto d : distances_m)
        fnv.f64(d);
    fnv.f64(bandwidth_hz);
    fnv.f64(carrier_hz);
    fnv.u64(num_subcarriers);
    fnv.f64(noise_psd_dbm_hz);
    fnv.f64(bs_gain_dbi);
    fnv.f64(ue_gain_dbi);
    fnv.u64(antenna.vertical_elements);
    fnv.u64(antenna.horizontal_elements);
    fnv.u64((std::uint64_t)antenna.polarization_indicator);
    fnv.f64(antenna.electric_downtilt_deg);
    fnv.f64(antenna.element_spacing);
    fnv.f64(antenna.boresight_gain_dbi);
    fnv.u64(seed);
    fnv.f64(azimuth_spread_deg);
    fnv.f64(rician_k_db);
    fnv.u64(num_taps);
    fnv.f64(tap_decay_db);
    return fnv.h;
}

// ---------- CHANNEL CONTAINER ----------

arma::cx_mat ChannelSet::block(arma::uword u, arma::uword n) const
{
    const UserSpan &s = span_of(u);
    const arma::cx_mat &H = tones.at(n);
    if (side == LinkSide::downlink)
        return H.rows(s.offset, s.offset + s.count - 1);
    return H.cols(s.offset, s.offset + s.count - 1);
}

const UserSpan &ChannelSet::span_of(arma::uword u) const
{
    for (const auto &s : partition)
        if (s.user == u)
            return s;
    throw std::invalid_argument("ChannelSet: no partition entry for user " + std::to_string(u));
}

const arma::cx_mat &ChannelSet::noise_on(arma::uword n) const
{
    return noise.size() == 1 ? noise[0] : noise.at(n);
}

void ChannelSet::validate() const
{
    if (tones.empty())
        throw std::invalid_argument("ChannelSet: no tones");

    const arma::uword rows = tones[0].n_rows, cols = tones[0].n_cols;
    for (const auto &H : tones)
        if (H.n_rows != rows || H.n_cols != cols)
            throw std::invalid_argument("ChannelSet: tone matrices differ in shape");

    if (partition.empty())
        throw std::invalid_argument("ChannelSet: empty partition");

    const arma::uword dim = (side == LinkSide::downlink) ? rows : cols;
    std::vector<int> covered(dim, 0);
    std::vector<int> seen_user;
    for (const auto &s : partition)
    {
        if (s.count < 1 || s.offset + s.count > dim)
            throw std::invalid_argument("ChannelSet: partition span out of range for user " +
                                        std::to_string(s.user));
        for (arma::uword i = s.offset; i < s.offset + s.count; ++i)
            if (covered[i]++)
                throw std::invalid_argument("ChannelSet: overlapping partition spans");
        for (int u : seen_user)
            if ((arma::uword)u == s.user)
                throw std::invalid_argument("ChannelSet: duplicate user in partition");
        seen_user.push_back((int)s.user);
    }
    for (arma::uword i = 0; i < dim; ++i)
        if (!covered[i])
            throw std::invalid_argument("ChannelSet: partition does not cover dimension " +
                                        std::to_string(i));

    if (noise.size() != 1 && noise.size() != tones.size())
        throw std::invalid_argument("ChannelSet: noise must have 1 or num_tones entries");
    for (const auto &R : noise)
    {
        if (R.n_rows != rows || R.n_cols != rows)
            throw std::invalid_argument("ChannelSet: noise covariance shape mismatch");
        double scale = std::max(arma::abs(R).max(), 1e-300);
        if (arma::abs(R - R.t()).max() > 1e-10 * scale)
            throw std::invalid_argument("ChannelSet: noise covariance not Hermitian");
        for (arma::uword i = 0; i < rows; ++i)
            if (!(R(i, i).real() > 0.0))
                throw std::invalid_argument("ChannelSet: noise diagonal must be positive");
        arma::vec ev = arma::eig_sym(R);
        if (ev.min() < -1e-9 * scale)
            throw std::invalid_argument("ChannelSet: noise covariance not PSD");
    }
}

// ---------- ANTENNA AND PROPAGATION MODELS ----------

double element_pattern(double zenith_deg, double azimuth_deg, const AntennaConfig &ant)
{
    if (!(zenith_deg >= 0.0 && zenith_deg <= 180.0))
        throw std::invalid_argument("element_pattern: zenith must be in [0, 180]");
    if (!(azimuth_deg >= -180.0 && azimuth_deg <= 180.0))
        throw std::invalid_argument("element_pattern: azimuth must be in [-180, 180]");

    const double tilt = ant.electric_downtilt_deg;
    double dv = (zenith_deg - 90.0 - tilt) / PATTERN_BEAMWIDTH_DEG;
    double dh = azimuth_deg / PATTERN_BEAMWIDTH_DEG;
    double a_v = -std::min(12.0 * dv * dv, PATTERN_FLOOR_DB);
    double a_h = -std::min(12.0 * dh * dh, PATTERN_FLOOR_DB);
    return ant.boresight_gain_dbi - std::min(-(a_v + a_h), PATTERN_FLOOR_DB);
}

double rma_pathloss(double distance_3d_m, double bs_height_m, double ue_height_m,
                    double carrier_hz)
{
    if (!(distance_3d_m > 0.0))
        throw std::invalid_argument("rma_pathloss: distance must be > 0");
    if (!(bs_height_m > 0.0) || !(ue_height_m > 0.0))
        throw std::invalid_argument("rma_pathloss: heights must be > 0");
    if (!(carrier_hz > 0.0))
        throw std::invalid_argument("rma_pathloss: carrier must be > 0");

    double intercept = 20.0 * std::log10(4.0 * arma::datum::pi * carrier_hz / SPEED_OF_LIGHT);
    double slope = 23.0 * std::log10(distance_3d_m);
    double height = -5.0 * std::log10(bs_height_m * ue_height_m / 180.0);
    return intercept + slope + height;
}

// ---------- GENERATION ----------

ChannelSet generate_channels(const ScenarioConfig &scenario)
{
    ScenarioConfig sc = scenario;
    sc.normalize();

    const arma::uword U = sc.num_users;
    const arma::uword nT = sc.bs_antennas;
    const arma::uword N = sc.num_subcarriers;
    const arma::uword L = std::min<arma::uword>(sc.num_taps, N);

    arma::uword n_rx = 0;
    for (auto a : sc.user_antennas)
        n_rx += a;

    // Rician split and normalized tap powers (exponential decay, unit sum).
    const double k_lin = db_to_lin(sc.rician_k_db);
    const double los_amp = std::sqrt(k_lin / (k_lin + 1.0));
    const double nlos_amp = std::sqrt(1.0 / (k_lin + 1.0));
    arma::vec tap_pow(L);
    for (arma::uword l = 0; l < L; ++l)
        tap_pow(l) = db_to_lin(-sc.tap_decay_db * (double)l);
    tap_pow /= arma::accu(tap_pow);

    GaussianRng rng(sc.seed);

    // Draw order is part of the file format contract: first one azimuth per
    // user, then taps in (user, rx antenna, port, tap) order. Changing it
    // changes every stored channel, so bump the file version if you do.
    std::vector<double> azimuth(U);
    for (arma::uword u = 0; u < U; ++u)
        azimuth[u] = rng.uniform(-0.5 * sc.azimuth_spread_deg, 0.5 * sc.azimuth_spread_deg);

    ChannelSet cs;
    cs.side = LinkSide::downlink;
    cs.seed = sc.seed;
    cs.scenario_hash = sc.content_hash();
    cs.tones.assign(N, arma::cx_mat(n_rx, nT, arma::fill::zeros));
    cs.noise.assign(1, sc.subcarrier_noise_w() *
                           arma::cx_mat(arma::eye<arma::mat>(n_rx, n_rx), arma::mat(n_rx, n_rx)));

    const double deg2rad = arma::datum::pi / 180.0;
    const double two_pi = 2.0 * arma::datum::pi;
    const double tilt_zen_rad = (90.0 + sc.antenna.electric_downtilt_deg) * deg2rad;

    arma::uword row = 0;
    for (arma::uword u = 0; u < U; ++u)
    {
        const double dh = sc.distances_m[u];
        const double dz = sc.bs_height_m - sc.ue_height_m;
        const double d3 = std::hypot(dh, dz);
        const double zen_deg = 90.0 + std::atan2(dz, dh) / deg2rad;
        const double zen_rad = zen_deg * deg2rad;
        const double az_rad = azimuth[u] * deg2rad;

        double gain_db = element_pattern(zen_deg, azimuth[u], sc.antenna) + sc.ue_gain_dbi -
                         rma_pathloss(d3, sc.bs_height_m, sc.ue_height_m, sc.carrier_hz);
        const double amp = std::pow(10.0, gain_db / 20.0);

        // Vertical column beamforming gain toward the user, relative to a
        // single element. Peaks at sqrt(vertical_elements) when the user sits
        // on the downtilt direction.
        arma::cx_double af(0.0, 0.0);
        const double dpsi =
            two_pi * sc.antenna.element_spacing * (std::cos(zen_rad) - std::cos(tilt_zen_rad));
        for (arma::uword a = 0; a < sc.antenna.vertical_elements; ++a)
            af += std::polar(1.0, dpsi * (double)a);
        af /= std::sqrt((double)sc.antenna.vertical_elements);

        // Horizontal port steering across the n_T phase centers.
        arma::cx_vec steer(nT);
        const double kd = two_pi * sc.antenna.element_spacing * std::sin(zen_rad) * std::sin(az_rad);
        for (arma::uword p = 0; p < nT; ++p)
            steer(p) = std::polar(1.0, -kd * (double)p);

        cs.partition.push_back({u, row, sc.user_antennas[u]});

        for (arma::uword r = 0; r < sc.user_antennas[u]; ++r, ++row)
        {
            for (arma::uword p = 0; p < nT; ++p)
            {
                arma::cx_vec taps(L);
                for (arma::uword l = 0; l < L; ++l)
                    taps(l) = std::sqrt(tap_pow(l)) * rng.next_cx();

                arma::cx_vec freq = kernels::taps_to_tones(taps, N);
                const arma::cx_double los = los_amp * af * steer(p);
                for (arma::uword n = 0; n < N; ++n)
                    cs.tones[n](row, p) = amp * (los + nlos_amp * freq(n));
            }
        }
    }

    cs.validate();
    return cs;
}

// ---------- FILE I/O ----------

namespace
{

constexpr char MAGIC[4] = {'M', 'C', 'N', 'C'};
constexpr std::uint8_t FILE_VERSION = 1;

struct Writer
{
    std::ofstream out;

    explicit Writer(const std::string &path) : out(path, std::ios::binary)
    {
        if (!out)
            throw std::runtime_error("save_channels: cannot open '" + path + "' for writing");
    }
    void u8(std::uint8_t v) { out.put((char)v); }
    void u32(std::uint32_t v)
    {
        for (int i = 0; i < 4; ++i)
            out.put((char)((v >> (8 * i)) & 0xff));
    }
    void u64(std::uint64_t v)
    {
        for (int i = 0; i < 8; ++i)
            out.put((char)((v >> (8 * i)) & 0xff));
    }
    void f64(double v)
    {
        std::uint64_t u;
        std::memcpy(&u, &v, 8);
        u64(u);
    }
    void cx(const arma::cx_mat &M)
    {
        // Row-major element stream.
        for (arma::uword i = 0; i < M.n_rows; ++i)
            for (arma::uword j = 0; j < M.n_cols; ++j)
            {
                f64(M(i, j).real());
                f64(M(i, j).imag());
            }
    }
};

struct Reader
{
    std::ifstream in;
    std::size_t pos = 0;

    explicit Reader(const std::string &path) : in(path, std::ios::binary)
    {
        if (!in)
            throw std::runtime_error("load_channels: cannot open '" + path + "'");
    }
    void raw(void *dst, std::size_t n)
    {
        in.read((char *)dst, (std::streamsize)n);
        if ((std::size_t)in.gcount() != n)
            throw parse_error("load_channels: file truncated", pos);
        pos += n;
    }
    std::uint8_t u8()
    {
        std::uint8_t v;
        raw(&v, 1);
        return v;
    }
    std::uint32_t u32()
    {
        unsigned char b[4];
        raw(b, 4);
        return (std::uint32_t)b[0] | ((std::uint32_t)b[1] << 8) | ((std::uint32_t)b[2] << 16) |
               ((std::uint32_t)b[3] << 24);
    }
    std::uint64_t u64()
    {
        unsigned char b[8];
        raw(b, 8);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i)
            v = (v << 8) | b[i];
        return v;
    }
    double f64()
    {
        std::uint64_t u = u64();
        double v;
        std::memcpy(&v, &u, 8);
        return v;
    }
    arma::cx_mat cx(arma::uword rows, arma::uword cols)
    {
        arma::cx_mat M(rows, cols);
        for (arma::uword i = 0; i < rows; ++i)
            for (arma::uword j = 0; j < cols; ++j)
            {
                double re = f64();
                double im = f64();
                M(i, j) = arma::cx_double(re, im);
            }
        return M;
    }
};

} // namespace

void save_channels(const ChannelSet &cs, const std::string &path)
{
    cs.validate();
    Writer w(path);
    w.out.write(MAGIC, 4);
    w.u8(FILE_VERSION);
    w.u8((std::uint8_t)cs.side);
    w.u32((std::uint32_t)cs.partition.size());
    w.u32((std::uint32_t)cs.tones[0].n_rows);
    w.u32((std::uint32_t)cs.tones[0].n_cols);
    w.u32((std::uint32_t)cs.tones.size());
    w.u32((std::uint32_t)cs.noise.size());
    w.u64(cs.seed);
    w.u64(cs.scenario_hash);
    for (const auto &s : cs.partition)
    {
        w.u32((std::uint32_t)s.user);
        w.u32((std::uint32_t)s.offset);
        w.u32((std::uint32_t)s.count);
    }
    for (const auto &R : cs.noise)
        w.cx(R);
    for (const auto &H : cs.tones)
        w.cx(H);
    if (!w.out)
        throw std::runtime_error("save_channels: write to '" + path + "' failed");
}

ChannelSet load_channels(const std::string &path)
{
    Reader r(path);

    char magic[4];
    r.raw(magic, 4);
    if (std::memcmp(magic, MAGIC, 4) != 0)
        throw parse_error("load_channels: bad magic", 0);

    std::uint8_t version = r.u8();
    if (version != FILE_VERSION)
        throw parse_error("load_channels: unsupported version " + std::to_string(version), 4);

    std::uint8_t side = r.u8();
    if (side > 1)
        throw parse_error("load_channels: bad link side tag", 5);

    ChannelSet cs;
    cs.side = (LinkSide)side;
    std::uint32_t users = r.u32();
    std::uint32_t rows = r.u32();
    std::uint32_t cols = r.u32();
    std::uint32_t tones = r.u32();
    std::uint32_t nnoise = r.u32();
    cs.seed = r.u64();
    cs.scenario_hash = r.u64();

    // Sanity bounds so a corrupt header cannot request absurd allocations.
    if (users == 0 || users > 65536 || rows == 0 || cols == 0 || tones == 0 ||
        (std::uint64_t)rows * cols > (1ULL << 32) || tones > (1U << 24))
        throw parse_error("load_channels: implausible header dimensions", 6);
    if (nnoise != 1 && nnoise != tones)
        throw parse_error("load_channels: noise count must be 1 or num_tones", 22);

    for (std::uint32_t u = 0; u < users; ++u)
    {
        UserSpan s;
        s.user = r.u32();
        s.offset = r.u32();
        s.count = r.u32();
        cs.partition.push_back(s);
    }
    for (std::uint32_t i = 0; i < nnoise; ++i)
        cs.noise.push_back(r.cx(rows, rows));
    for (std::uint32_t n = 0; n < tones; ++n)
        cs.tones.push_back(r.cx(rows, cols));

    // There must be no trailing garbage.
    char extra;
    r.in.read(&extra, 1);
    if (r.in.gcount() == 1)
        throw parse_error("load_channels: trailing bytes after payload", r.pos);

    cs.validate();
    return cs;
}

} // namespace mcnoma
