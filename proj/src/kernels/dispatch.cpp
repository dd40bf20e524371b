// SPDX-License-Identifier: Apache-2.0
#include "mias/kernels.hpp"

#include <cstdlib>
#include <string>

namespace mias::simd {

std::string_view to_string(Isa isa) {
    switch (isa) {
        case Isa::Scalar: return "scalar";
        case Isa::Avx2: return "avx2";
        case Isa::Avx512: return "avx512";
        case Isa::Neon: return "neon";
    }
    return "unknown";
}

namespace {

bool cpu_supports(Isa isa) {
    switch (isa) {
        case Isa::Scalar:
            return true;
#if defined(__x86_64__) || defined(_M_X64)
        case Isa::Avx2:
            return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
        case Isa::Avx512:
            return __builtin_cpu_supports("avx512f") && __builtin_cpu_supports("avx512bw") &&
                   __builtin_cpu_supports("avx512vl") && __builtin_cpu_supports("avx512vnni");
#endif
        case Isa::Neon:
#if defined(__aarch64__)
            return true;
#else
            return false;
#endif
        default:
            return false;
    }
}

const KernelTable* compiled_table(Isa isa) {
    switch (isa) {
        case Isa::Scalar: return detail::scalar_table();
        case Isa::Avx2: return detail::avx2_table();
        case Isa::Avx512: return detail::avx512_table();
        case Isa::Neon: return detail::neon_table();
    }
    return nullptr;
}

const KernelTable& select() {
    if (const char* forced = std::getenv("MIAS_SIMD")) {
        const std::string want(forced);
        for (Isa isa : supported_isas()) {
            if (to_string(isa) == want) {
                return *table_for(isa);
            }
        }
    }
    // Widest supported first.
    for (Isa isa : {Isa::Avx512, Isa::Avx2, Isa::Neon}) {
        if (const KernelTable* t = table_for(isa)) {
            return *t;
        }
    }
    return *detail::scalar_table();
}

} // namespace

const KernelTable* table_for(Isa isa) {
    const KernelTable* t = compiled_table(isa);
    return (t != nullptr && cpu_supports(isa)) ? t : nullptr;
}

std::vector<Isa> supported_isas() {
    std::vector<Isa> out;
    for (Isa isa : {Isa::Scalar, Isa::Avx2, Isa::Avx512, Isa::Neon}) {
        if (table_for(isa) != nullptr) {
            out.push_back(isa);
        }
    }
    return out;
}

const KernelTable& active() {
    static const KernelTable& table = select();
    return table;
}

} // namespace mias::simd
