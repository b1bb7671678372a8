#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include <zlib.h>

#include "oracles.hpp"
#include "shir/envelope.hpp"

using namespace shir;

namespace {

LocalSummary small(std::size_t p, const std::string& id) {
    LocalSummary s;
    s.site_id = id;
    s.n = 10;
    s.H = Matrix::Zero(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
    s.g = Vector::Zero(static_cast<Eigen::Index>(p));
    return s;
}

void reseal(std::vector<std::uint8_t>& b) {
    const auto c = static_cast<std::uint32_t>(crc32(0L, b.data(), static_cast<uInt>(b.size() - 4)));
    for (int i = 0; i < 4; ++i) b[b.size() - 4 + i] = static_cast<std::uint8_t>(c >> (8 * i));
}

EnvelopeErrorKind kind_of(std::span<const std::uint8_t> b) {
    try {
        decode_summary(b);
    } catch (const EnvelopeError& e) {
        return e.kind();
    }
    FAIL("decode accepted the bytes");
    return EnvelopeErrorKind::malformed;
}

}  // namespace

TEST_CASE("envelope size follows the layout") {
    const auto bytes = encode_summary(small(2, "site-7"));
    CHECK(bytes.size() == 4 + 2 + 2 + 6 + 1 + 8 + 4 + 8 + 16 + 24 + 4);
    CHECK(bytes.size() == envelope_size(2, 6));
    CHECK(envelope_size(0, 0) == kEnvelopeMinSize);
    // independent of n
    auto s = small(3, "x");
    s.n = 1;
    const auto a = encode_summary(s);
    s.n = 1000000000;
    CHECK(encode_summary(s).size() == a.size());
}

TEST_CASE("field layout is little-endian") {
    auto s = small(2, "ab");
    s.n = 0x0102030405060708ULL;
    s.family = LossFamily::squared_error;
    s.g << 1.0, -2.0;
    const auto b = encode_summary(s);
    CHECK(std::string(b.begin(), b.begin() + 4) == "SHIR");
    CHECK(b[4] == 1);
    CHECK(b[5] == 0);
    CHECK(b[6] == 2);
    CHECK(b[8] == 'a');
    CHECK(b[10] == 0);
    CHECK(b[11] == 0x08);
    CHECK(b[18] == 0x01);
    CHECK(b[19] == 2);
}

TEST_CASE("round trip is bit exact and deterministic") {
    std::mt19937_64 rng(50);
    for (int k = 0; k < 200; ++k) {
        const auto s = oracle::random_wire_summary(rng);
        const auto b = encode_summary(s);
        CHECK(b.size() == envelope_size(s.p(), s.site_id.size()));
        CHECK(oracle::bit_equal(decode_summary(b), s));
        CHECK(encode_summary(s) == b);
    }
}

TEST_CASE("every single-byte change fails the checksum") {
    std::mt19937_64 rng(51);
    const auto s = oracle::random_wire_summary(rng);
    const auto b = encode_summary(s);
    for (std::size_t i = 0; i < b.size(); ++i) {
        auto m = b;
        m[i] ^= static_cast<std::uint8_t>(1 + rng() % 255);
        CHECK(kind_of(m) == EnvelopeErrorKind::checksum_mismatch);
    }
}

TEST_CASE("distinct error kinds") {
    const auto good = encode_summary(small(3, "k"));
    SUBCASE("truncation") {
        CHECK(kind_of(std::span(good).first(10)) == EnvelopeErrorKind::truncated);
        auto cut = std::vector<std::uint8_t>(good.begin(), good.end() - 16);
        reseal(cut);
        CHECK(kind_of(cut) == EnvelopeErrorKind::truncated);
        // a cut without resealing is caught by the checksum
        CHECK(kind_of(std::span(good).first(good.size() - 8)) == EnvelopeErrorKind::checksum_mismatch);
    }
    SUBCASE("magic") {
        auto m = good;
        m[0] = 'X';
        reseal(m);
        CHECK(kind_of(m) == EnvelopeErrorKind::bad_magic);
    }
    SUBCASE("version") {
        auto m = good;
        m[4] = 9;
        reseal(m);
        CHECK(kind_of(m) == EnvelopeErrorKind::unsupported_version);
    }
    SUBCASE("trailing bytes and bad family") {
        auto m = good;
        m.insert(m.end() - 4, 0);
        reseal(m);
        CHECK(kind_of(m) == EnvelopeErrorKind::malformed);
        auto f = good;
        f[4 + 2 + 2 + 1] = 7;
        reseal(f);
        CHECK(kind_of(f) == EnvelopeErrorKind::malformed);
    }
    SUBCASE("asymmetric content survives only as symmetric") {
        auto s = small(2, "k");
        s.H << 1, 0.5, 0.5, 1;
        const auto back = decode_summary(encode_summary(s));
        CHECK(back.H(1, 0) == back.H(0, 1));
    }
    SUBCASE("invalid summary inside a sound envelope") {
        auto m = encode_summary(small(2, "k"));
        // first diagonal entry of H -> -1
        const std::size_t h0 = 4 + 2 + 2 + 1 + 1 + 8 + 4 + 8 + 16;
        const double neg = -1.0;
        std::uint64_t bits;
        std::memcpy(&bits, &neg, 8);
        for (int i = 0; i < 8; ++i) m[h0 + i] = static_cast<std::uint8_t>(bits >> (8 * i));
        reseal(m);
        CHECK_THROWS_AS(decode_summary(m), DataError);
    }
    CHECK(to_string(EnvelopeErrorKind::checksum_mismatch) == "checksum mismatch");
}

TEST_CASE("oversized dimensions are refused before encoding") {
    LocalSummary s;
    s.site_id = "big";
    s.n = 1;
    s.g = Vector::Zero(92682);  // p(p+1)/2 exceeds 32 bits
    try {
        encode_summary(s);
        FAIL("expected too_large");
    } catch (const EnvelopeError& e) {
        CHECK(e.kind() == EnvelopeErrorKind::too_large);
    }
}

TEST_CASE("files and sidecars") {
    const auto dir = std::filesystem::temp_directory_path() / "shir_envelope_test";
    std::filesystem::create_directories(dir);
    std::mt19937_64 rng(52);
    auto s = oracle::random_wire_summary(rng);
    s.site_id = "north";
    write_envelope(dir / "north.shir", s);
    CHECK(oracle::bit_equal(read_envelope(dir / "north.shir"), s));
    std::ifstream side(dir / "north.shir.txt");
    std::string text((std::istreambuf_iterator<char>(side)), std::istreambuf_iterator<char>());
    CHECK(text.find("site_id=north") != std::string::npos);
    CHECK(text.find("p=" + std::to_string(s.p())) != std::string::npos);
    CHECK_THROWS_AS(read_envelope(dir / "missing.shir"), DataError);
    std::filesystem::remove_all(dir);
}
