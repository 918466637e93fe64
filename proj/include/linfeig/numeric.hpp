#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <span>
#include <string_view>
#include <thread>
#include <vector>

namespace linfeig {

/// Fixed-order pairwise summation. The result depends only on the input order,
/// never on thread count.
inline double pairwise_sum(std::span<const double> v)
{
    constexpr std::size_t block = 16;
    if (v.size() <= block) {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
    const std::size_t half = v.size() / 2;
    return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

/// Thread count from LINFEIG_THREADS (default 1).
inline unsigned thread_count()
{
    static const unsigned n = [] {
        const char* env = std::getenv("LINFEIG_THREADS");
        if (!env) return 1u;
        const long v = std::strtol(env, nullptr, 10);
        if (v <= 0) return 1u;
        return static_cast<unsigned>(std::min<long>(v, 256));
    }();
    return n;
}

/// Runs fn(i) for i in [0, n). Work items must write disjoint outputs; results are
/// then independent of scheduling.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn, std::size_t min_parallel = 4096)
{
    const unsigned threads = thread_count();
    if (threads <= 1 || n < min_parallel) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    const std::size_t chunk = (n + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
        const std::size_t lo = t * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (std::size_t i = lo; i < hi; ++i) fn(i);
        });
    }
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL)
{
    std::uint64_t h = seed;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Radical inverse in base `base` (Halton coordinate).
inline double radical_inverse(std::uint64_t index, unsigned base)
{
    double inv = 1.0 / base, f = inv, r = 0.0;
    while (index > 0) {
        r += f * static_cast<double>(index % base);
        index /= base;
        f *= inv;
    }
    return r;
}

/// First `count` primes, used as Halton bases.
inline std::vector<unsigned> first_primes(std::size_t count)
{
    std::vector<unsigned> primes;
    for (unsigned c = 2; primes.size() < count; ++c) {
        bool prime = true;
        for (unsigned p : primes) {
            if (p * p > c) break;
            if (c % p == 0) { prime = false; break; }
        }
        if (prime) primes.push_back(c);
    }
    return primes;
}

/// Deterministic quasi-random unit vectors in R^dim from a Halton sequence
/// (Box-Muller on coordinate pairs, then normalised).
class HaltonSphere {
public:
    explicit HaltonSphere(std::size_t dim) : dim_(dim), bases_(first_primes(2 * ((dim + 1) / 2) + 1)) {}

    /// Writes direction number `index` (index >= 1) into out[0..dim).
    void direction(std::uint64_t index, std::span<double> out) const
    {
        constexpr double two_pi = 6.283185307179586;
        double norm2 = 0.0;
        for (std::size_t d = 0; d < dim_; d += 2) {
            double u1 = radical_inverse(index, bases_[d]);
            double u2 = radical_inverse(index, bases_[d + 1]);
            u1 = std::max(u1, 1e-300);
            const double r = std::sqrt(-2.0 * std::log(u1));
            out[d] = r * std::cos(two_pi * u2);
            if (d + 1 < dim_) out[d + 1] = r * std::sin(two_pi * u2);
        }
        for (std::size_t d = 0; d < dim_; ++d) norm2 += out[d] * out[d];
        const double norm = std::sqrt(norm2);
        if (norm == 0.0) {
            std::fill(out.begin(), out.end(), 0.0);
            out[0] = 1.0;
            return;
        }
        for (std::size_t d = 0; d < dim_; ++d) out[d] /= norm;
    }

    /// Extra scalar coordinate in [0,1) for the same index (radial fraction etc).
    double scalar(std::uint64_t index) const { return radical_inverse(index, bases_.back()); }

    std::size_t dim() const { return dim_; }

private:
    std::size_t dim_;
    std::vector<unsigned> bases_;
};

inline double positive_part(double x) { return x > 0.0 ? x : 0.0; }

} // namespace linfeig
