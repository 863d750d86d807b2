/*
 * Copyright 2026 The fuselab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef FUSELAB_PHILOX_HPP
#define FUSELAB_PHILOX_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace fuselab {

/// Philox4x32-10 block function (Salmon et al., Random123). Stateless: the
/// output depends only on (counter, key), so any voxel can be drawn in any
/// order on any thread.
class Philox4x32
{
public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter generate(Counter ctr, Key key)
  {
    for(int round = 0; round < 10; ++round)
      {
      if(round > 0)
        {
        key[0] += kWeyl0;
        key[1] += kWeyl1;
        }
      const std::uint64_t p0 = std::uint64_t(kMul0) * ctr[0];
      const std::uint64_t p1 = std::uint64_t(kMul1) * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const auto lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const auto lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
      }
    return ctr;
  }

private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85;
};

/// Random values addressed by (index, lane) within a stream of a seed.
class CounterRng
{
public:
  CounterRng(std::uint64_t seed, std::uint32_t stream)
    : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
      stream_(stream)
  {
  }

  Philox4x32::Counter block(std::uint64_t index, std::uint32_t lane = 0) const
  {
    return Philox4x32::generate({static_cast<std::uint32_t>(index),
                                 static_cast<std::uint32_t>(index >> 32), lane, stream_},
                                key_);
  }

  /// Uniform in the open interval (0, 1) with 53 random bits.
  double uniform(std::uint64_t index, std::uint32_t lane = 0) const
  {
    const auto b = block(index, lane);
    return to_unit(b[0], b[1]);
  }

  /// Standard normal by Box-Muller over one block.
  double normal(std::uint64_t index, std::uint32_t lane = 0) const
  {
    const auto b = block(index, lane);
    const double u1 = to_unit(b[0], b[1]);
    const double u2 = to_unit(b[2], b[3]);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Integer in [0, bound) by multiply-shift on 53 uniform bits.
  std::uint64_t below(std::uint64_t bound, std::uint64_t index, std::uint32_t lane = 0) const
  {
    const auto u = static_cast<std::uint64_t>(uniform(index, lane) * static_cast<double>(bound));
    return u < bound ? u : bound - 1;
  }

private:
  static double to_unit(std::uint32_t hi, std::uint32_t lo)
  {
    const std::uint64_t bits = (std::uint64_t(hi >> 5) << 26) | (lo >> 6);
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
  }

  Philox4x32::Key key_;
  std::uint32_t stream_;
};

} // namespace fuselab

#endif
