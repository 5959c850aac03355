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

#ifndef MCNOMA_COMMON_HPP
#define MCNOMA_COMMON_HPP

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace mcnoma
{

// Thrown when an input file cannot be decoded. Carries the byte offset at
// which decoding failed so the caller can report exactly where a file is
// corrupt or truncated.
class parse_error : public std::runtime_error
{
  public:
    parse_error(const std::string &what, std::size_t byte_offset)
        : std::runtime_error(what + " (at byte " + std::to_string(byte_offset) + ")"),
          offset(byte_offset)
    {
    }
    std::size_t offset;
};

// Thrown when a well-formed problem has no feasible point, e.g. a positive
// rate floor on a user whose channel is identically zero.
class infeasible_error : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

// Thrown when an iterative solver exhausts its iteration budget. The message
// includes the residuals at the point of failure.
class solver_error : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

constexpr double SPEED_OF_LIGHT = 299792458.0; // m/s

inline double db_to_lin(double x_db)
{
    return std::pow(10.0, 0.1 * x_db);
}

inline double lin_to_db(double x)
{
    return 10.0 * std::log10(x);
}

inline double dbm_to_watt(double x_dbm)
{
    return std::pow(10.0, 0.1 * (x_dbm - 30.0));
}

inline double watt_to_dbm(double x_w)
{
    return 10.0 * std::log10(x_w) + 30.0;
}

} // namespace mcnoma

#endif
