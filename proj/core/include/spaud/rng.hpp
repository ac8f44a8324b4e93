#pragma once

#include <cstdint>
#include <functional>
#include <random>

namespace spaud {

/// splitmix64 finalizer; decorrelates nearby seeds.
std::uint64_t mix64(std::uint64_t x);

/// Derive an independent stream seed from (seed, stream index).
/// Used so trial i of an experiment gets its own generator and results
/// do not depend on how trials are scheduled across threads.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  return std::mt19937_64(derive_seed(seed, stream));
}

/// Run body(0..count-1) on up to `threads` workers. Each index is processed
/// exactly once; the caller must write results into per-index slots so the
/// aggregate is independent of scheduling. First exception is rethrown.
void parallel_for(std::size_t count, int threads,
                  const std::function<void(std::size_t)>& body);

/// Worker count used when a config asks for 0 ("auto").
int default_thread_count();

}  // namespace spaud
