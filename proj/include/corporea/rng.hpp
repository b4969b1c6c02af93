// Copyright 2026 The Corporea Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CORPOREA__RNG_HPP_
#define CORPOREA__RNG_HPP_

#include <cstdint>
#include <random>

namespace corporea
{

using Rng = std::mt19937_64;

/// Sub-stream identifiers. A run seed fans out to one generator per stage.
enum class Stream : std::uint64_t {
  acquire = 1,
  rhi = 2,
  selfdetect = 3,
  reconstruct = 4,
  distractor = 5,
};

/// SplitMix64 finalizer applied to (seed, stream). Counter-based, so each
/// stage is reproducible on its own regardless of what ran before it.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept
{
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline Rng make_rng(std::uint64_t seed, Stream stream)
{
  return Rng(derive_seed(seed, static_cast<std::uint64_t>(stream)));
}

}  // namespace corporea

#endif  // CORPOREA__RNG_HPP_
