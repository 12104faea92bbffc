#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "helpers.hpp"
#include "navsim/base64.hpp"

using namespace navsim;

namespace {

// Reference xoshiro256** written from the published algorithm.
struct RefXoshiro {
    std::uint64_t s[4];
    static std::uint64_t sm(std::uint64_t& x) {
        std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    explicit RefXoshiro(std::uint64_t seed) {
        for (auto& w : s) w = sm(seed);
    }
    std::uint64_t next() {
        const std::uint64_t r = rotl(s[1] * 5, 7) * 9, t = s[1] << 17;
        s[2] ^= s[0], s[3] ^= s[1], s[1] ^= s[2], s[0] ^= s[3], s[2] ^= t, s[3] = rotl(s[3], 45);
        return r;
    }
};

}  // namespace

TEST(Prng, SplitmixKnownValues) {
    std::uint64_t st = 0;
    EXPECT_EQ(splitmix64(st), 0xe220a8397b1dcdafULL);
    EXPECT_EQ(splitmix64(st), 0x6e789e6aa1b965f4ULL);
}

TEST(Prng, MatchesReferenceStream) {
    for (std::uint64_t seed : {0ULL, 1ULL, 42ULL, 0xdeadbeefULL}) {
        Xoshiro256 a(seed);
        RefXoshiro b(seed);
        for (int i = 0; i < 1000; ++i) ASSERT_EQ(a(), b.next());
    }
}

TEST(Prng, UniformAndBelowRanges) {
    Xoshiro256 rng(7);
    std::set<std::uint64_t> seen;
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        const auto k = rng.below(7);
        ASSERT_LT(k, 7u);
        seen.insert(k);
    }
    EXPECT_EQ(seen.size(), 7u);
}

TEST(Hashing, Fnv1aKnownValues) {
    EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ULL);
    EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(Hashing, EmbeddingUnitNormAndDeterministic) {
    for (const char* tok : {"free", "obstacle", "landmark:chair", "x"}) {
        auto v = hash_embedding(tok, 3, 30);
        double n = 0;
        for (double x : v) n += x * x;
        EXPECT_NEAR(std::sqrt(n), 1.0, 1e-12);
        EXPECT_EQ(v, hash_embedding(tok, 3, 30));
        EXPECT_NE(v, hash_embedding(tok, 4, 30));
    }
    EXPECT_NE(hash_embedding("free", 0, 8), hash_embedding("obstacle", 0, 8));
}

TEST(Angles, NormalizeAndSigned) {
    Xoshiro256 rng(1);
    for (int i = 0; i < 1000; ++i) {
        const double a = rng.uniform(-50.0, 50.0);
        const double n = normalize_angle(a);
        ASSERT_GE(n, 0.0);
        ASSERT_LT(n, kTwoPi);
        ASSERT_NEAR(std::remainder(n - a, kTwoPi), 0.0, 1e-9);
        const double s = signed_angle(a);
        ASSERT_GT(s, -kPi);
        ASSERT_LE(s, kPi);
        ASSERT_NEAR(std::remainder(s - a, kTwoPi), 0.0, 1e-9);
    }
    EXPECT_DOUBLE_EQ(signed_angle(kPi), kPi);
    EXPECT_DOUBLE_EQ(signed_angle(-kPi), kPi);
}

TEST(MatrixOps, MatmulAgainstLoops) {
    Xoshiro256 rng(5);
    Matrix a(3, 4), b(4, 2);
    for (auto& v : a.data) v = rng.uniform(-1, 1);
    for (auto& v : b.data) v = rng.uniform(-1, 1);
    const Matrix c = matmul(a, b);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 2; ++j) {
            double s = 0;
            for (std::size_t k = 0; k < 4; ++k) s += a(i, k) * b(k, j);
            EXPECT_NEAR(c(i, j), s, 1e-15);
        }
    EXPECT_THROW(matmul(b, b), ShapeError);
}

TEST(Base64, KnownVectorsAndRoundTrip) {
    const std::string man = "Man";
    EXPECT_EQ(base64::encode(std::span(reinterpret_cast<const std::uint8_t*>(man.data()), man.size())), "TWFu");
    const std::string ma = "Ma";
    EXPECT_EQ(base64::encode(std::span(reinterpret_cast<const std::uint8_t*>(ma.data()), ma.size())), "TWE=");
    auto bytes = base64::decode("TWE=");
    EXPECT_EQ(std::string(bytes.begin(), bytes.end()), "Ma");
    std::vector<double> v{0.0, -0.0, 1.5, 1e-300, -3.141592653589793, std::numeric_limits<double>::infinity()};
    const auto back = base64::decode_doubles(base64::encode_doubles(v));
    ASSERT_EQ(back.size(), v.size());
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(std::bit_cast<std::uint64_t>(back[i]), std::bit_cast<std::uint64_t>(v[i]));
    EXPECT_ANY_THROW(base64::decode("@@@@"));
}
