#pragma once

// Instrumented scalar for counting basic floating-point operations. Used by
// tests and the bench command to verify that one scalar Hamilton product
// costs exactly 16 multiplications plus 12 additions/subtractions.

#include <cstdint>

namespace quatnn {

struct CountedDouble {
    double v{};

    static inline thread_local std::uint64_t mul_count = 0;
    static inline thread_local std::uint64_t add_count = 0;

    static void reset() {
        mul_count = 0;
        add_count = 0;
    }

    CountedDouble() = default;
    CountedDouble(double x) : v(x) {}

    friend CountedDouble operator*(CountedDouble x, CountedDouble y) {
        ++mul_count;
        return {x.v * y.v};
    }
    friend CountedDouble operator+(CountedDouble x, CountedDouble y) {
        ++add_count;
        return {x.v + y.v};
    }
    friend CountedDouble operator-(CountedDouble x, CountedDouble y) {
        ++add_count;
        return {x.v - y.v};
    }
    CountedDouble operator-() const { return {-v}; }
};

}  // namespace quatnn
