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

#include "mcnoma/harness.hpp"

#include "mcnoma/allocator.hpp"
#include "mcnoma/baselines.hpp"
#include "mcnoma/duality.hpp"
#include "mcnoma/timeshare.hpp"

#include "json.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mcnoma
{

namespace
{

using nlohmann::json;

constexpr const char *RESULTS_SCHEMA = "# mcnoma-results v1";
constexpr const char *CSV_HEADER =
    "kind,value,method,seed,ok,error,sum_bits_hz,sum_mbps,energy_w,kkt,"
    "order,user_bits_hz,block_fractions";

// ---------- formatting ----------

std::string fmt(double v)
{
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string fmt(std::uint64_t v)
{
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string &s, const std::string &path)
{
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw std::runtime_error("malformed number '" + s + "' in " + path);
    return v;
}

std::uint64_t parse_u64(const std::string &s, const std::string &path)
{
    std::uint64_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw std::runtime_error("malformed count '" + s + "' in " + path);
    return v;
}

std::string quote_csv(const std::string &s)
{
    std::string out = "\"";
    for (char c : s)
    {
        if (c == '"')
            out += "\"\"";
        else
            out += c;
    }
    out += '"';
    return out;
}

std::string quote_json(const std::string &s)
{
    std::string out = "\"";
    for (char c : s)
    {
        switch (c)
        {
        case '"': out += "\\\""; break;
        case '\\': out += "\\\\"; break;
        case '\n': out += "\\n"; break;
        case '\r': out += "\\r"; break;
        case '\t': out += "\\t"; break;
        default:
            if (static_cast<unsigned char>(c) < 0x20)
            {
                char buf[8];
                std::snprintf(buf, sizeof(buf), "\\u%04x", c);
                out += buf;
            }
            else
                out += c;
        }
    }
    out += '"';
    return out;
}

template <typename T, typename F>
std::string join(const T &xs, const char *sep, F piece)
{
    std::string out;
    bool first = true;
    for (const auto &x : xs)
    {
        if (!first)
            out += sep;
        out += piece(x);
        first = false;
    }
    return out;
}

std::vector<std::string> split(const std::string &s, char sep)
{
    std::vector<std::string> out;
    std::string cur;
    for (char c : s)
    {
        if (c == sep)
        {
            out.push_back(cur);
            cur.clear();
        }
        else
            cur += c;
    }
    out.push_back(cur);
    if (out.size() == 1 && out[0].empty())
        out.clear();
    return out;
}

// One CSV record; only the error field is ever quoted.
std::vector<std::string> split_csv(const std::string &line)
{
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i)
    {
        const char c = line[i];
        if (quoted)
        {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"')
            {
                cur += '"';
                ++i;
            }
            else if (c == '"')
                quoted = false;
            else
                cur += c;
        }
        else if (c == '"')
            quoted = true;
        else if (c == ',')
        {
            fields.push_back(cur);
            cur.clear();
        }
        else
            cur += c;
    }
    fields.push_back(cur);
    return fields;
}

// ---------- per-row scenario and channel assembly ----------

ScenarioConfig scenario_for(const ExperimentSpec &spec, double value,
                            std::uint64_t seed)
{
    ScenarioConfig sc = spec.base;
    sc.normalize();
    sc.seed = seed;
    switch (spec.kind)
    {
    case SweepKind::snr_sweep:
    case SweepKind::timeshare_demo:
        break; // scenario fixed; the value acts on power or floors
    case SweepKind::nt_sweep:
        sc.bs_antennas = static_cast<arma::uword>(value);
        sc.user_antennas.assign(sc.num_users, 1);
        break;
    case SweepKind::user_sweep:
    {
        const double d = sc.distances_m.empty() ? 500.0 : sc.distances_m[0];
        sc.num_users = static_cast<arma::uword>(value);
        sc.user_antennas.assign(sc.num_users, 1);
        sc.distances_m.assign(sc.num_users, d); // co-located population
        break;
    }
    case SweepKind::subcarrier_sweep:
        sc.num_subcarriers = static_cast<arma::uword>(value);
        break;
    case SweepKind::distance_sweep:
        sc.distances_m.assign(sc.num_users, value);
        break;
    }
    sc.normalize();
    sc.validate();
    return sc;
}

ChannelSet mac_image(const ChannelSet &bc)
{
    std::vector<arma::uword> rx(bc.num_users());
    for (arma::uword u = 0; u < bc.num_users(); ++u)
        rx[u] = bc.span_of(u).count;
    const auto maps = permutation_matrices({bc.tones[0].n_cols}, rx);
    return bc_to_mac_channel(bc, maps);
}

void fill_rates(ResultRow &row, const RateAllocation &rates, arma::uword n_tones,
                double bandwidth_hz)
{
    const double sum = rates.sum_bits();
    row.sum_bits_hz = sum / (double)n_tones;
    row.sum_mbps = row.sum_bits_hz * bandwidth_hz / 1e6;
    row.user_bits_hz = rates.user_totals() / (double)n_tones;
}

void fill_rates(ResultRow &row, const arma::vec &user_totals, arma::uword n_tones,
                double bandwidth_hz)
{
    row.sum_bits_hz = arma::accu(user_totals) / (double)n_tones;
    row.sum_mbps = row.sum_bits_hz * bandwidth_hz / 1e6;
    row.user_bits_hz = user_totals / (double)n_tones;
}

void run_rate_row(ResultRow &row, const ExperimentSpec &spec, const ScenarioConfig &sc,
                  const ChannelSet &bc)
{
    const ChannelSet mac = mac_image(bc);
    const arma::uword N = sc.num_subcarriers;
    const arma::vec w(sc.num_users, arma::fill::ones);
    const double power = spec.kind == SweepKind::snr_sweep
                             ? power_for_receive_snr(bc, row.value,
                                                     sc.subcarrier_noise_w())
                             : sc.tx_power_w();

    switch (row.method)
    {
    case Method::proposed:
    {
        auto sol = maximize_sum_rate(mac, power, w);
        fill_rates(row, sol.rates, N, sc.bandwidth_hz);
        row.energy_w = sol.energy;
        row.kkt = sol.kkt_residual;
        row.order = sol.order.user_at;
        break;
    }
    case Method::oma:
    {
        auto rates = oma_linear_allocate(mac, power);
        fill_rates(row, rates, N, sc.bandwidth_hz);
        row.energy_w = power;
        break;
    }
    case Method::noma:
    {
        auto sol = noma_allocate(mac, power, w);
        fill_rates(row, sol.rates, N, sc.bandwidth_hz);
        row.energy_w = sol.energy;
        row.order = sol.order.user_at;
        break;
    }
    case Method::mc_noma:
    {
        auto sol = mc_noma_allocate(mac, power, w);
        fill_rates(row, sol.rates, N, sc.bandwidth_hz);
        row.energy_w = sol.energy;
        row.order = sol.order.user_at;
        break;
    }
    }
}

// When rate-floor multipliers tie, the single extracted order leaves some
// tied user short of its floor and only a schedule over the tied orders
// closes the gap. The schedule targets are the requested floors rescaled,
// per multiplier cluster, to the total the returned covariances actually
// carry: the solve overshoots the floors by its resolution, so the
// rescaled targets dominate the originals while keeping each cluster's
// split ratio, and they sit exactly on the vertex hull by construction.
// The tie tolerance follows the certificate, since duals blur together at
// the accuracy the solver reached.
std::vector<std::vector<arma::uword>> resolution_clusters(const AllocationSolution &sol)
{
    const double tie_tol = std::clamp(1e3 * sol.kkt_residual, 1e-5, 1e-3);
    return cluster_users(sol.duals, tie_tol);
}

bool has_tie(const std::vector<std::vector<arma::uword>> &clusters)
{
    for (const auto &group : clusters)
        if (group.size() > 1)
            return true;
    return false;
}

TimeShareSchedule floor_schedule(const ChannelSet &mac, const AllocationSolution &sol,
                                 const std::vector<std::vector<arma::uword>> &clusters,
                                 const arma::vec &floors)
{
    const auto vertices = enumerate_vertices(clusters, mac, sol.covariances);

    arma::vec targets = floors;
    for (const auto &cluster : clusters)
    {
        double have = 0.0;
        double want = 0.0;
        for (arma::uword u : cluster)
        {
            have += vertices.front().rates[u];
            want += floors[u];
        }
        if (want > 0.0)
            for (arma::uword u : cluster)
                targets[u] *= have / want;
    }
    return convex_hull_fractions(vertices, targets);
}

// Distance rows minimize the power that sustains the rates the linear
// sharing scheme reaches with the full budget at that distance.
void run_distance_row(ResultRow &row, const ScenarioConfig &sc, const ChannelSet &bc)
{
    const ChannelSet mac = mac_image(bc);
    const arma::uword N = sc.num_subcarriers;
    const arma::vec w(sc.num_users, arma::fill::ones);
    const double power = sc.tx_power_w();
    const arma::vec floors = oma_linear_allocate(mac, power).user_totals();

    switch (row.method)
    {
    case Method::oma:
        fill_rates(row, floors, N, sc.bandwidth_hz);
        row.energy_w = power; // the floors are defined by spending it
        break;
    case Method::proposed:
    {
        AllocationProblem prob;
        prob.channels = mac;
        prob.weights = w;
        prob.min_rates = floors;
        auto sol = minimize_energy(prob);
        const auto clusters = resolution_clusters(sol);
        if (has_tie(clusters))
        {
            const auto schedule = floor_schedule(mac, sol, clusters, floors);
            fill_rates(row, schedule.average(), N, sc.bandwidth_hz);
            for (const auto &block : schedule.blocks)
                row.block_fractions.push_back(block.fraction);
        }
        else
        {
            fill_rates(row, sol.rates, N, sc.bandwidth_hz);
        }
        row.energy_w = sol.energy;
        row.kkt = sol.kkt_residual;
        row.order = sol.order.user_at;
        break;
    }
    case Method::noma:
    {
        auto sol = noma_allocate(mac, w, floors);
        fill_rates(row, sol.rates, N, sc.bandwidth_hz);
        row.energy_w = sol.energy;
        row.order = sol.order.user_at;
        break;
    }
    case Method::mc_noma:
    {
        auto sol = mc_noma_allocate(mac, w, floors);
        fill_rates(row, sol.rates, N, sc.bandwidth_hz);
        row.energy_w = sol.energy;
        row.order = sol.order.user_at;
        break;
    }
    }
}

// The demo pins the second user to the first user's physical channel, so
// the energy optimum is order-ambiguous between them and a genuine
// schedule is needed to hit an asymmetric split of their combined rate.
void run_demo_row(ResultRow &row, const ScenarioConfig &sc, ChannelSet bc,
                  std::vector<TimeShareDump> &dumps)
{
    const auto &s0 = bc.span_of(0);
    const auto &s1 = bc.span_of(1);
    if (s0.count != s1.count)
        throw std::invalid_argument(
            "the schedule demo needs matching antenna counts on users 0 and 1");
    for (auto &tone : bc.tones)
        tone.rows(s1.offset, s1.offset + s1.count - 1) =
            tone.rows(s0.offset, s0.offset + s0.count - 1);

    const ChannelSet mac = mac_image(bc);
    const arma::uword N = sc.num_subcarriers;
    const arma::vec w(sc.num_users, arma::fill::ones);
    const double power = sc.tx_power_w();

    auto top = maximize_sum_rate(mac, power, w);
    arma::vec floors = top.rates.user_totals();
    const double pair = floors[0] + floors[1];
    floors[0] = row.value * pair;
    floors[1] = (1.0 - row.value) * pair;

    AllocationProblem prob;
    prob.channels = mac;
    prob.weights = w;
    prob.min_rates = floors;
    auto sol = minimize_energy(prob);

    const auto schedule = floor_schedule(mac, sol, resolution_clusters(sol), floors);

    fill_rates(row, schedule.average(), N, sc.bandwidth_hz);
    row.energy_w = sol.energy;
    row.kkt = sol.kkt_residual;
    row.order = sol.order.user_at;
    for (const auto &block : schedule.blocks)
    {
        row.block_fractions.push_back(block.fraction);
        dumps.push_back({block.fraction, block.order,
                         sic_rates(mac, sol.covariances, block.order).bits});
    }
}

// ---------- scenario / spec JSON ----------

[[noreturn]] void unknown_key(const std::string &where, const std::string &key)
{
    throw std::invalid_argument("unknown " + where + " key: " + key);
}

AntennaConfig antenna_from(const json &j)
{
    AntennaConfig ant;
    for (const auto &[key, val] : j.items())
    {
        if (key == "vertical_elements")
            ant.vertical_elements = val.get<arma::uword>();
        else if (key == "horizontal_elements")
            ant.horizontal_elements = val.get<arma::uword>();
        else if (key == "polarization_indicator")
            ant.polarization_indicator = val.get<int>();
        else if (key == "electric_downtilt_deg")
            ant.electric_downtilt_deg = val.get<double>();
        else if (key == "element_spacing")
            ant.element_spacing = val.get<double>();
        else if (key == "boresight_gain_dbi")
            ant.boresight_gain_dbi = val.get<double>();
        else
            unknown_key("antenna", key);
    }
    return ant;
}

ScenarioConfig scenario_from(const json &j)
{
    ScenarioConfig sc;
    for (const auto &[key, val] : j.items())
    {
        if (key == "num_users")
            sc.num_users = val.get<arma::uword>();
        else if (key == "bs_antennas")
            sc.bs_antennas = val.get<arma::uword>();
        else if (key == "user_antennas")
            sc.user_antennas = val.get<std::vector<arma::uword>>();
        else if (key == "bs_height_m")
            sc.bs_height_m = val.get<double>();
        else if (key == "ue_height_m")
            sc.ue_height_m = val.get<double>();
        else if (key == "distances_m")
            sc.distances_m = val.get<std::vector<double>>();
        else if (key == "bandwidth_hz")
            sc.bandwidth_hz = val.get<double>();
        else if (key == "carrier_hz")
            sc.carrier_hz = val.get<double>();
        else if (key == "num_subcarriers")
            sc.num_subcarriers = val.get<arma::uword>();
        else if (key == "tx_power_dbm")
            sc.tx_power_dbm = val.get<double>();
        else if (key == "noise_psd_dbm_hz")
            sc.noise_psd_dbm_hz = val.get<double>();
        else if (key == "bs_gain_dbi")
            sc.bs_gain_dbi = val.get<double>();
        else if (key == "ue_gain_dbi")
            sc.ue_gain_dbi = val.get<double>();
        else if (key == "antenna")
            sc.antenna = antenna_from(val);
        else if (key == "seed")
            sc.seed = val.get<std::uint64_t>();
        else if (key == "azimuth_spread_deg")
            sc.azimuth_spread_deg = val.get<double>();
        else if (key == "rician_k_db")
            sc.rician_k_db = val.get<double>();
        else if (key == "num_taps")
            sc.num_taps = val.get<arma::uword>();
        else if (key == "tap_decay_db")
            sc.tap_decay_db = val.get<double>();
        else
            unknown_key("scenario", key);
    }
    return sc;
}

json slurp_json(const std::string &path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    try
    {
        return json::parse(buf.str());
    }
    catch (const json::exception &e)
    {
        throw std::invalid_argument(path + ": " + e.what());
    }
}

// ---------- emission helpers ----------

std::string row_csv(SweepKind kind, const ResultRow &r)
{
    std::string line = to_string(kind);
    line += ',' + fmt(r.value);
    line += ',' + to_string(r.method);
    line += ',' + fmt(r.seed);
    line += r.ok ? ",1" : ",0";
    line += ',' + quote_csv(r.error);
    line += ',' + fmt(r.sum_bits_hz);
    line += ',' + fmt(r.sum_mbps);
    line += ',' + fmt(r.energy_w);
    line += ',' + fmt(r.kkt);
    line += ',' + join(r.order, ">", [](arma::uword u) { return fmt((std::uint64_t)u); });
    line += ',' + join(r.user_bits_hz, ";", [](double v) { return fmt(v); });
    line += ',' + join(r.block_fractions, ";", [](double v) { return fmt(v); });
    return line;
}

std::string row_jsonl(SweepKind kind, const ResultRow &r)
{
    std::string line = "{\"kind\":\"" + to_string(kind) + "\"";
    line += ",\"value\":" + fmt(r.value);
    line += ",\"method\":\"" + to_string(r.method) + "\"";
    line += ",\"seed\":" + fmt(r.seed);
    line += std::string(",\"ok\":") + (r.ok ? "true" : "false");
    line += ",\"error\":" + quote_json(r.error);
    line += ",\"sum_bits_hz\":" + fmt(r.sum_bits_hz);
    line += ",\"sum_mbps\":" + fmt(r.sum_mbps);
    line += ",\"energy_w\":" + fmt(r.energy_w);
    line += ",\"kkt\":" + fmt(r.kkt);
    line += ",\"order\":[" +
            join(r.order, ",", [](arma::uword u) { return fmt((std::uint64_t)u); }) + "]";
    line += ",\"user_bits_hz\":[" +
            join(r.user_bits_hz, ",", [](double v) { return fmt(v); }) + "]";
    line += ",\"block_fractions\":[" +
            join(r.block_fractions, ",", [](double v) { return fmt(v); }) + "]}";
    return line;
}

std::ofstream open_out(const std::filesystem::path &p)
{
    std::ofstream out(p, std::ios::binary); // '\n' endings on every platform
    if (!out)
        throw std::runtime_error("cannot write " + p.string());
    return out;
}

void write_plot_files(const ResultTable &table, const std::filesystem::path &dir,
                      const std::string &stem)
{
    const bool energy_axis = table.spec.kind == SweepKind::distance_sweep;

    // distance ratios are against the linear sharing scheme's budget
    std::vector<double> oma_mean(table.spec.values.size(), 0.0);
    if (energy_axis)
        for (std::size_t vi = 0; vi < table.spec.values.size(); ++vi)
        {
            double sum = 0.0;
            int n = 0;
            for (const auto &r : table.rows)
                if (r.ok && r.method == Method::oma &&
                    r.value == table.spec.values[vi])
                {
                    sum += r.energy_w;
                    ++n;
                }
            oma_mean[vi] = n > 0 ? sum / n : 0.0;
        }

    for (Method m : table.spec.methods)
    {
        auto out = open_out(dir / (stem + "_" + to_string(m) + ".dat"));
        if (energy_axis)
            out << "# value mean_energy_dbm ratio_to_oma n_ok\n";
        else
            out << "# value mean_sum_bits_hz stddev n_ok\n";
        for (std::size_t vi = 0; vi < table.spec.values.size(); ++vi)
        {
            const double v = table.spec.values[vi];
            std::vector<double> xs;
            for (const auto &r : table.rows)
                if (r.ok && r.method == m && r.value == v)
                    xs.push_back(energy_axis ? r.energy_w : r.sum_bits_hz);
            double mean = 0.0;
            for (double x : xs)
                mean += x;
            mean = xs.empty() ? 0.0 : mean / (double)xs.size();

            out << fmt(v) << ' ';
            if (energy_axis)
            {
                const double dbm = mean > 0.0 ? 10.0 * std::log10(mean * 1e3)
                                              : -arma::datum::inf;
                const double ratio = oma_mean[vi] > 0.0 ? mean / oma_mean[vi] : 0.0;
                out << fmt(dbm) << ' ' << fmt(ratio);
            }
            else
            {
                double var = 0.0;
                for (double x : xs)
                    var += (x - mean) * (x - mean);
                var = xs.size() > 1 ? var / (double)(xs.size() - 1) : 0.0;
                out << fmt(mean) << ' ' << fmt(std::sqrt(var));
            }
            out << ' ' << fmt((std::uint64_t)xs.size()) << '\n';
        }
        if (!out)
            throw std::runtime_error("write failed under " + dir.string());
    }
}

} // namespace

// ---------- public surface ----------

std::string to_string(SweepKind kind)
{
    switch (kind)
    {
    case SweepKind::snr_sweep: return "snr_sweep";
    case SweepKind::nt_sweep: return "nt_sweep";
    case SweepKind::user_sweep: return "user_sweep";
    case SweepKind::subcarrier_sweep: return "subcarrier_sweep";
    case SweepKind::distance_sweep: return "distance_sweep";
    case SweepKind::timeshare_demo: return "timeshare_demo";
    }
    return "?";
}

std::string to_string(Method method)
{
    switch (method)
    {
    case Method::proposed: return "proposed";
    case Method::oma: return "oma";
    case Method::noma: return "noma";
    case Method::mc_noma: return "mc_noma";
    }
    return "?";
}

SweepKind sweep_kind_from(const std::string &name)
{
    for (SweepKind k : {SweepKind::snr_sweep, SweepKind::nt_sweep, SweepKind::user_sweep,
                        SweepKind::subcarrier_sweep, SweepKind::distance_sweep,
                        SweepKind::timeshare_demo})
        if (to_string(k) == name)
            return k;
    throw std::invalid_argument("unknown sweep kind: " + name);
}

Method method_from(const std::string &name)
{
    for (Method m : {Method::proposed, Method::oma, Method::noma, Method::mc_noma})
        if (to_string(m) == name)
            return m;
    throw std::invalid_argument("unknown method: " + name);
}

void ExperimentSpec::validate() const
{
    if (values.empty())
        throw std::invalid_argument("sweep needs at least one value");
    if (!std::is_sorted(values.begin(), values.end()))
        throw std::invalid_argument("sweep values must be sorted ascending");
    if (methods.empty())
        throw std::invalid_argument("sweep needs at least one method");
    for (std::size_t i = 0; i < methods.size(); ++i)
        for (std::size_t j = i + 1; j < methods.size(); ++j)
            if (methods[i] == methods[j])
                throw std::invalid_argument("duplicate method in sweep");
    if (num_seeds < 1)
        throw std::invalid_argument("sweep needs at least one seed");

    for (double v : values)
    {
        if (!std::isfinite(v))
            throw std::invalid_argument("sweep values must be finite");
        switch (kind)
        {
        case SweepKind::snr_sweep:
            break;
        case SweepKind::nt_sweep:
        case SweepKind::subcarrier_sweep:
            if (v < 1.0 || v != std::floor(v))
                throw std::invalid_argument("axis values must be positive integers");
            break;
        case SweepKind::user_sweep:
            if (v < 1.0 || v > 8.0 || v != std::floor(v))
                throw std::invalid_argument("user counts must be integers in [1, 8]");
            break;
        case SweepKind::distance_sweep:
            if (v <= 0.0)
                throw std::invalid_argument("distances must be positive");
            break;
        case SweepKind::timeshare_demo:
            if (v <= 0.0 || v >= 1.0)
                throw std::invalid_argument("rate splits must lie strictly in (0, 1)");
            break;
        }
    }
    if (kind == SweepKind::timeshare_demo &&
        (methods.size() != 1 || methods[0] != Method::proposed))
        throw std::invalid_argument("the schedule demo runs the proposed method only");

    ScenarioConfig sc = base;
    sc.normalize();
    sc.validate();
    if (kind == SweepKind::timeshare_demo && sc.num_users < 2)
        throw std::invalid_argument("the schedule demo needs at least two users");
}

double mean_reference_gain(const ChannelSet &downlink)
{
    downlink.validate();
    if (downlink.side != LinkSide::downlink)
        throw std::invalid_argument("reference gain is defined on the downlink set");
    const arma::uword N = downlink.num_tones();
    double acc = 0.0;
    for (arma::uword n = 0; n < N; ++n)
    {
        const arma::cx_mat H = downlink.block(0, n);
        acc += std::pow(arma::norm(H, "fro"), 2.0) / (double)(H.n_rows * H.n_cols);
    }
    return acc / (double)N;
}

double power_for_receive_snr(const ChannelSet &downlink, double snr_db,
                             double noise_w_per_tone)
{
    const double gain = mean_reference_gain(downlink);
    if (gain <= 0.0)
        throw std::invalid_argument("reference user has a zero channel");
    if (!(noise_w_per_tone > 0.0))
        throw std::invalid_argument("noise power must be positive");
    const double snr = std::pow(10.0, snr_db / 10.0);
    return snr * noise_w_per_tone * (double)downlink.num_tones() / gain;
}

std::uint64_t seed_for(const ExperimentSpec &spec, arma::uword value_index,
                       arma::uword replicate)
{
    const std::uint64_t axis =
        spec.kind == SweepKind::snr_sweep ? 0 : (std::uint64_t)value_index;
    return spec.base.seed + axis + (std::uint64_t)replicate;
}

ResultTable run_experiment(const ExperimentSpec &spec)
{
    spec.validate();
    ResultTable table;
    table.spec = spec;

    for (std::size_t vi = 0; vi < spec.values.size(); ++vi)
        for (Method m : spec.methods)
            for (arma::uword rep = 0; rep < spec.num_seeds; ++rep)
            {
                ResultRow row;
                row.value = spec.values[vi];
                row.method = m;
                row.seed = seed_for(spec, vi, rep);
                try
                {
                    const ScenarioConfig sc = scenario_for(spec, row.value, row.seed);
                    const ChannelSet bc = generate_channels(sc);
                    switch (spec.kind)
                    {
                    case SweepKind::distance_sweep:
                        run_distance_row(row, sc, bc);
                        break;
                    case SweepKind::timeshare_demo:
                        run_demo_row(row, sc, bc, table.demo_blocks);
                        break;
                    default:
                        run_rate_row(row, spec, sc, bc);
                    }
                }
                catch (const std::exception &e)
                {
                    row.ok = false;
                    row.error = e.what();
                    row.sum_bits_hz = row.sum_mbps = row.energy_w = row.kkt = 0.0;
                    row.user_bits_hz.reset();
                    row.order.clear();
                    row.block_fractions.clear();
                }
                table.rows.push_back(std::move(row));
            }
    return table;
}

void emit_results(const ResultTable &table, const std::string &out_dir,
                  const std::string &stem)
{
    if (table.rows.empty())
        throw std::invalid_argument("refusing to emit an empty result table");

    const std::filesystem::path dir(out_dir);
    std::filesystem::create_directories(dir);

    {
        auto csv = open_out(dir / (stem + ".csv"));
        csv << RESULTS_SCHEMA << '\n' << CSV_HEADER << '\n';
        for (const auto &r : table.rows)
            csv << row_csv(table.spec.kind, r) << '\n';
        if (!csv)
            throw std::runtime_error("write failed: " + (dir / (stem + ".csv")).string());
    }
    {
        auto jl = open_out(dir / (stem + ".jsonl"));
        for (const auto &r : table.rows)
            jl << row_jsonl(table.spec.kind, r) << '\n';
        if (!jl)
            throw std::runtime_error("write failed: " +
                                     (dir / (stem + ".jsonl")).string());
    }

    write_plot_files(table, dir, stem);

    for (std::size_t k = 0; k < table.demo_blocks.size(); ++k)
    {
        const auto &blk = table.demo_blocks[k];
        auto out = open_out(dir / (stem + "_block" + std::to_string(k) + ".dat"));
        out << "# fraction " << fmt(blk.fraction) << " order "
            << join(blk.order.user_at, ">",
                    [](arma::uword u) { return fmt((std::uint64_t)u); })
            << "\n# tone, then one spectral-efficiency column per user\n";
        for (arma::uword n = 0; n < blk.bits.n_cols; ++n)
        {
            out << fmt((std::uint64_t)n);
            for (arma::uword u = 0; u < blk.bits.n_rows; ++u)
                out << ' ' << fmt(blk.bits(u, n));
            out << '\n';
        }
        if (!out)
            throw std::runtime_error("write failed under " + dir.string());
    }
}

ResultTable parse_results_csv(const std::string &path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open results file: " + path);

    std::string line;
    if (!std::getline(in, line) || line != RESULTS_SCHEMA)
        throw std::runtime_error("unsupported results schema in " + path);
    if (!std::getline(in, line) || line != CSV_HEADER)
        throw std::runtime_error("unexpected results header in " + path);

    ResultTable table;
    bool kind_set = false;
    while (std::getline(in, line))
    {
        if (line.empty())
            continue;
        // a quoted field may span lines; a record is complete once its
        // quote count is even
        while (std::count(line.begin(), line.end(), '"') % 2 != 0)
        {
            std::string more;
            if (!std::getline(in, more))
                throw std::runtime_error("unterminated quote in " + path);
            line += '\n';
            line += more;
        }
        const auto f = split_csv(line);
        if (f.size() != 13)
            throw std::runtime_error("malformed results row in " + path);

        if (!kind_set)
        {
            table.spec.kind = sweep_kind_from(f[0]);
            kind_set = true;
        }
        ResultRow r;
        r.value = parse_double(f[1], path);
        r.method = method_from(f[2]);
        r.seed = parse_u64(f[3], path);
        r.ok = f[4] == "1";
        r.error = f[5];
        r.sum_bits_hz = parse_double(f[6], path);
        r.sum_mbps = parse_double(f[7], path);
        r.energy_w = parse_double(f[8], path);
        r.kkt = parse_double(f[9], path);
        for (const auto &tok : split(f[10], '>'))
            r.order.push_back(parse_u64(tok, path));
        const auto users = split(f[11], ';');
        r.user_bits_hz.set_size(users.size());
        for (std::size_t i = 0; i < users.size(); ++i)
            r.user_bits_hz[i] = parse_double(users[i], path);
        for (const auto &tok : split(f[12], ';'))
            r.block_fractions.push_back(parse_double(tok, path));
        table.rows.push_back(std::move(r));
    }
    return table;
}

ScenarioConfig load_scenario(const std::string &path)
{
    try
    {
        return scenario_from(slurp_json(path));
    }
    catch (const json::exception &e)
    {
        throw std::invalid_argument(path + ": " + e.what());
    }
}

ExperimentSpec load_experiment(const std::string &path)
{
    const json j = slurp_json(path);
    ExperimentSpec spec;
    try
    {
        for (const auto &[key, val] : j.items())
        {
            if (key == "kind")
                spec.kind = sweep_kind_from(val.get<std::string>());
            else if (key == "values")
                spec.values = val.get<std::vector<double>>();
            else if (key == "methods")
            {
                spec.methods.clear();
                for (const auto &name : val)
                    spec.methods.push_back(method_from(name.get<std::string>()));
            }
            else if (key == "num_seeds")
                spec.num_seeds = val.get<arma::uword>();
            else if (key == "scenario")
                spec.base = scenario_from(val);
            else
                unknown_key("experiment", key);
        }
    }
    catch (const json::exception &e)
    {
        throw std::invalid_argument(path + ": " + e.what());
    }
    spec.validate();
    return spec;
}

} // namespace mcnoma
