#include "ael/canonical.hpp"
#include "ael/rng.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>

#include <boost/random/beta_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>

namespace ael {

double canonical_number(double value) {
    if (!std::isfinite(value) || value == 0.0) {
        return value == 0.0 ? 0.0 : value;
    }
    char buffer[32];
    std::snprintf(buffer, sizeof(buffer), "%.12g", value);
    return std::strtod(buffer, nullptr);
}

namespace {

Json canonicalize(const Json& doc) {
    if (doc.is_number_float()) {
        return canonical_number(doc.get<double>());
    }
    if (doc.is_array()) {
        Json out = Json::array();
        for (const auto& item : doc) {
            out.push_back(canonicalize(item));
        }
        return out;
    }
    if (doc.is_object()) {
        Json out = Json::object();
        for (const auto& [key, item] : doc.items()) {
            out[key] = canonicalize(item);
        }
        return out;
    }
    return doc;
}

}  // namespace

std::string canonical_dump(const Json& doc) { return canonicalize(doc).dump(); }

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        hash ^= c;
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

std::string state_hash(const Json& doc) {
    char buffer[17];
    std::snprintf(buffer, sizeof(buffer), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(canonical_dump(doc))));
    return buffer;
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) {
    // splitmix64 finalizer over the seed mixed with the label hash
    std::uint64_t z = seed ^ fnv1a64(label);
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double sample_beta(double alpha, double beta, Rng& rng) {
    boost::random::beta_distribution<double> dist(alpha, beta);
    return dist(rng);
}

double sample_normal(double mean, double stddev, Rng& rng) {
    boost::random::normal_distribution<double> dist(mean, stddev);
    return dist(rng);
}

double sample_uniform(Rng& rng) {
    boost::random::uniform_01<double> dist;
    return dist(rng);
}

}  // namespace ael
