#include "shir/envelope.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include <zlib.h>

namespace shir {

static_assert(std::numeric_limits<double>::is_iec559);

std::string_view to_string(EnvelopeErrorKind k) noexcept {
    switch (k) {
        case EnvelopeErrorKind::truncated: return "truncated";
        case EnvelopeErrorKind::bad_magic: return "bad magic";
        case EnvelopeErrorKind::unsupported_version: return "unsupported version";
        case EnvelopeErrorKind::checksum_mismatch: return "checksum mismatch";
        case EnvelopeErrorKind::malformed: return "malformed";
        case EnvelopeErrorKind::too_large: return "too large";
    }
    return "unknown";
}

std::size_t envelope_size(std::size_t p, std::size_t site_id_bytes) noexcept {
    return kEnvelopeMinSize + site_id_bytes + 8 * p + 8 * (p * (p + 1) / 2);
}

namespace {

constexpr std::uint8_t kMagic[4] = {'S', 'H', 'I', 'R'};

class Writer {
public:
    explicit Writer(std::size_t reserve) { buf_.reserve(reserve); }
    template <class T>
    void uint(T v) {
        for (std::size_t i = 0; i < sizeof(T); ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        buf_.insert(buf_.end(), b, b + n);
    }
    std::vector<std::uint8_t>& data() { return buf_; }

private:
    std::vector<std::uint8_t> buf_;
};

class Reader {
public:
    Reader(std::span<const std::uint8_t> b) : b_(b) {}
    void need(std::size_t n) const {
        if (pos_ + n > b_.size())
            throw EnvelopeError(EnvelopeErrorKind::truncated,
                                "envelope truncated at byte " + std::to_string(b_.size()));
    }
    template <class T>
    T uint() {
        need(sizeof(T));
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(b_[pos_ + i]) << (8 * i));
        pos_ += sizeof(T);
        return v;
    }
    double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }
    std::span<const std::uint8_t> take(std::size_t n) {
        need(n);
        auto s = b_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    std::size_t pos() const { return pos_; }

private:
    std::span<const std::uint8_t> b_;
    std::size_t pos_ = 0;
};

std::uint32_t crc(std::span<const std::uint8_t> b) {
    uLong c = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in chunks.
    std::size_t off = 0;
    while (off < b.size()) {
        const std::size_t chunk = std::min<std::size_t>(b.size() - off, 1u << 30);
        c = crc32(c, b.data() + off, static_cast<uInt>(chunk));
        off += chunk;
    }
    return static_cast<std::uint32_t>(c);
}

}  // namespace

std::vector<std::uint8_t> encode_summary(const LocalSummary& s) {
    const std::uint64_t p = s.p();
    if (p > std::numeric_limits<std::uint32_t>::max() ||
        p * (p + 1) / 2 > std::numeric_limits<std::uint32_t>::max())
        throw EnvelopeError(EnvelopeErrorKind::too_large,
                            "p = " + std::to_string(p) + " does not fit the envelope size fields");
    if (s.site_id.size() > std::numeric_limits<std::uint16_t>::max())
        throw EnvelopeError(EnvelopeErrorKind::too_large, "site id longer than 65535 bytes");
    validate(s);

    Writer w(envelope_size(p, s.site_id.size()));
    w.bytes(kMagic, 4);
    w.uint<std::uint16_t>(s.schema_version);
    w.uint<std::uint16_t>(static_cast<std::uint16_t>(s.site_id.size()));
    w.bytes(s.site_id.data(), s.site_id.size());
    w.uint<std::uint8_t>(static_cast<std::uint8_t>(s.family));
    w.uint<std::uint64_t>(s.n);
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(p));
    w.f64(s.lambda_m);
    for (Eigen::Index j = 0; j < s.g.size(); ++j) w.f64(s.g[j]);
    const auto P = static_cast<Eigen::Index>(p);
    for (Eigen::Index j = 0; j < P; ++j)
        for (Eigen::Index k = j; k < P; ++k) w.f64(s.H(j, k));
    w.uint<std::uint32_t>(crc(w.data()));
    return std::move(w.data());
}

LocalSummary decode_summary(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kEnvelopeMinSize)
        throw EnvelopeError(EnvelopeErrorKind::truncated,
                            "envelope truncated: " + std::to_string(bytes.size()) +
                                " bytes, minimum " + std::to_string(kEnvelopeMinSize));
    const auto body = bytes.first(bytes.size() - 4);
    Reader tail(bytes.last(4));
    const auto stored = tail.uint<std::uint32_t>();
    if (crc(body) != stored)
        throw EnvelopeError(EnvelopeErrorKind::checksum_mismatch,
                            "envelope checksum mismatch (corrupted or truncated payload)");

    Reader r(body);
    const auto magic = r.take(4);
    if (std::memcmp(magic.data(), kMagic, 4) != 0)
        throw EnvelopeError(EnvelopeErrorKind::bad_magic, "not a summary envelope (bad magic)");
    LocalSummary s;
    s.schema_version = r.uint<std::uint16_t>();
    if (s.schema_version != kSummarySchemaVersion)
        throw EnvelopeError(EnvelopeErrorKind::unsupported_version,
                            "unsupported envelope version " + std::to_string(s.schema_version));
    const auto id_len = r.uint<std::uint16_t>();
    const auto id = r.take(id_len);
    s.site_id.assign(reinterpret_cast<const char*>(id.data()), id.size());
    const auto family = r.uint<std::uint8_t>();
    if (family > 1)
        throw EnvelopeError(EnvelopeErrorKind::malformed,
                            "unknown family tag " + std::to_string(family));
    s.family = static_cast<LossFamily>(family);
    s.n = r.uint<std::uint64_t>();
    const std::uint64_t p = r.uint<std::uint32_t>();
    s.lambda_m = r.f64();
    const std::size_t expected = envelope_size(p, id_len);
    if (bytes.size() < expected)
        throw EnvelopeError(EnvelopeErrorKind::truncated,
                            "envelope truncated: " + std::to_string(bytes.size()) + " of " +
                                std::to_string(expected) + " bytes");
    if (bytes.size() > expected)
        throw EnvelopeError(EnvelopeErrorKind::malformed,
                            "envelope has " + std::to_string(bytes.size() - expected) +
                                " trailing bytes");
    const auto P = static_cast<Eigen::Index>(p);
    s.g.resize(P);
    for (Eigen::Index j = 0; j < P; ++j) s.g[j] = r.f64();
    s.H.resize(P, P);
    for (Eigen::Index j = 0; j < P; ++j)
        for (Eigen::Index k = j; k < P; ++k) s.H(j, k) = s.H(k, j) = r.f64();
    validate(s);
    return s;
}

std::string sidecar_text(const LocalSummary& s, std::span<const std::uint8_t> bytes) {
    std::ostringstream out;
    out << "format=shir-summary-envelope\n"
        << "version=" << s.schema_version << "\n"
        << "site_id=" << s.site_id << "\n"
        << "family=" << to_string(s.family) << "\n"
        << "n=" << s.n << "\n"
        << "p=" << s.p() << "\n"
        << std::setprecision(17) << "lambda_m=" << s.lambda_m << "\n"
        << "bytes=" << bytes.size() << "\n"
        << "crc32=" << std::hex << std::setw(8) << std::setfill('0') << crc(bytes.first(bytes.size() - 4))
        << "\n";
    return out.str();
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_envelope(const std::filesystem::path& path, const LocalSummary& s) {
    const auto bytes = encode_summary(s);
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write '" + path.string() + "'");
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw DataError("write failed for '" + path.string() + "'");
    }
    std::ofstream side(path.string() + ".txt", std::ios::trunc);
    side << sidecar_text(s, bytes);
}

LocalSummary read_envelope(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    try {
        return decode_summary(bytes);
    } catch (const EnvelopeError& e) {
        throw EnvelopeError(e.kind(), "'" + path.string() + "': " + e.what());
    }
}

}  // namespace shir
