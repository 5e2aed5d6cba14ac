#pragma once

#include <optional>

namespace ddgen {

/// Reads DDGEN_THREADS. Returns nullopt when unset; throws ArgumentError when
/// set to anything other than a positive integer.
std::optional<int> threads_from_environment();

/// Applies DDGEN_THREADS (if set) as the OpenMP thread cap. Returns the cap in effect.
int configure_threads();

}  // namespace ddgen
