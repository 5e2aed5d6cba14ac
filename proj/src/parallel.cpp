#include "ddgen/parallel.hpp"

#include <omp.h>

#include <charconv>
#include <cstdlib>
#include <string>
#include <string_view>

#include "ddgen/error.hpp"

namespace ddgen {

std::optional<int> threads_from_environment() {
    const char* raw = std::getenv("DDGEN_THREADS");
    if (raw == nullptr) {
        return std::nullopt;
    }
    const std::string_view text(raw);
    int value = 0;
    const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || end != text.data() + text.size() || value < 1) {
        throw ArgumentError("DDGEN_THREADS must be a positive integer, got '" + std::string(text) + "'");
    }
    return value;
}

int configure_threads() {
    if (const auto cap = threads_from_environment()) {
        omp_set_num_threads(*cap);
    }
    return omp_get_max_threads();
}

}  // namespace ddgen
