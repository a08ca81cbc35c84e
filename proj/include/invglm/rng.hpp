#ifndef INVGLM_RNG_HPP
#define INVGLM_RNG_HPP

#include <cstdint>
#include <initializer_list>
#include <random>

namespace invglm {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Stream seed derived from a root seed and a path of keys
// (e.g. {replicate, environment, purpose}). Independent of evaluation order.
inline std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> keys) {
    std::uint64_t h = splitmix64(root);
    for (auto k : keys) h = splitmix64(h ^ splitmix64(k + 0x632BE59BD9B4E019ULL));
    return h;
}

inline Rng make_rng(std::uint64_t root, std::initializer_list<std::uint64_t> keys) {
    return Rng(derive_seed(root, keys));
}

// Purpose tags for derived streams.
enum StreamTag : std::uint64_t {
    kTagInlier = 1,
    kTagOutlier = 2,
    kTagScheme = 3,
    kTagInits = 4,
    kTagCocoStarts = 5,
};

}  // namespace invglm

#endif
