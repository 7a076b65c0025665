#pragma once

#include <algorithm>
#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "boxal/certainty.hpp"
#include "boxal/error.hpp"
#include "boxal/random.hpp"

namespace boxal {

enum class Strategy { min_certainty, random };

inline std::string_view to_string(Strategy s) {
  return s == Strategy::min_certainty ? "min_certainty" : "random";
}

inline Strategy parse_strategy(std::string_view text) {
  if (text == "min_certainty") return Strategy::min_certainty;
  if (text == "random") return Strategy::random;
  throw ValidationError("unknown sampling strategy '" + std::string(text) +
                        "' (expected min_certainty or random)");
}

struct SamplerConfig {
  std::size_t batch_size = 100;
  Strategy strategy = Strategy::min_certainty;
  std::uint64_t seed = 0;
};

/// Seed of the random stream used at `iteration`. Iterations never share or shift streams.
constexpr std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t iteration) noexcept {
  return seed ^ (iteration * kStreamStride);
}

inline void require_batch(std::size_t batch_size, std::size_t available) {
  if (batch_size == 0) throw ContractError("batch size must be at least 1");
  if (batch_size > available) {
    throw ContractError("batch size " + std::to_string(batch_size) + " exceeds pool size " +
                        std::to_string(available));
  }
}

/// The first `batch_size` ids of an ascending ranking.
inline std::vector<std::string> sample_min_certainty(std::span<const RankedImage> ranking,
                                                     std::size_t batch_size) {
  require_batch(batch_size, ranking.size());
  std::vector<std::string> out;
  out.reserve(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i) out.push_back(ranking[i].image_id);
  return out;
}

/// Uniform sample without replacement, returned in lexicographic order. The pool is
/// sorted first, so the result depends only on the pool's contents, the seed and the
/// iteration.
inline std::vector<std::string> sample_random(std::span<const std::string> pool_ids,
                                              std::size_t batch_size, std::uint64_t seed,
                                              std::uint64_t iteration) {
  require_batch(batch_size, pool_ids.size());
  std::vector<std::string> ids(pool_ids.begin(), pool_ids.end());
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
    throw ContractError("pool contains duplicate ids");
  }
  Rng rng(substream_seed(seed, iteration));
  // Partial Fisher-Yates: positions [0, batch_size) hold the sample.
  for (std::size_t i = 0; i < batch_size; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(ids.size() - i));
    std::swap(ids[i], ids[j]);
  }
  ids.resize(batch_size);
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace boxal
