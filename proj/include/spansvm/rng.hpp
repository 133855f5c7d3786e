#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace spansvm {

/// Seedable portable random stream: mt19937_64 raw output with a fixed
/// 53-bit uniform mapping and Box-Muller gaussians on top of it. The draw
/// order is part of the generator contract so that synthetic datasets are
/// reproducible across runs for a given seed.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    /// Uniform in [0, 1), 53-bit resolution.
    double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    /// Uniform in (0, 1]; never zero, safe under log().
    double uniform01_open_low() { return (static_cast<double>(eng_() >> 11) + 1.0) * 0x1.0p-53; }

    /// Standard normal via Box-Muller; one spare value is cached, so the
    /// stream consumes two uniforms per pair of gaussians.
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform01_open_low();
        double u2 = uniform01();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    /// Integer in [0, n); n > 0.
    std::uint64_t below(std::uint64_t n) { return eng_() % n; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 eng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace spansvm
