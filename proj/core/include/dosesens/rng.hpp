#pragma once

#include <cstdint>
#include <random>

namespace dosesens {

using Engine = std::mt19937_64;

// Independent generator for (seed, stream). Every replicate, stratum or
// split derives its own engine from the run seed so results do not depend on
// evaluation order or thread count.
Engine substream(std::uint64_t seed, std::uint64_t stream, std::uint64_t tag = 0);

// 64-bit seed derived from (seed, stream); used to hand a child seed to a
// routine that itself derives substreams.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t tag = 0);

// Stream tags keep substreams of different purposes apart.
namespace stream_tag {
inline constexpr std::uint64_t kMonteCarlo = 0x4d43;
inline constexpr std::uint64_t kStratum = 0x5354;
inline constexpr std::uint64_t kSimulation = 0x5349;
inline constexpr std::uint64_t kSplit = 0x5350;
inline constexpr std::uint64_t kPermutation = 0x5045;
inline constexpr std::uint64_t kSearch = 0x5345;
}  // namespace stream_tag

}  // namespace dosesens
