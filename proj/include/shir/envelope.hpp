#pragma once

// Binary wire format for LocalSummary. All fields little-endian:
//
//   "SHIR" | u16 version | u16 id length | id bytes (UTF-8) | u8 family
//   | u64 n | u32 p | f64 lambda_m | p x f64 g
//   | p(p+1)/2 x f64 upper triangle of H, row-major | u32 CRC-32
//
// The CRC covers every byte before it.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "shir/errors.hpp"
#include "shir/summary.hpp"

namespace shir {

enum class EnvelopeErrorKind {
    truncated,
    bad_magic,
    unsupported_version,
    checksum_mismatch,
    malformed,
    too_large,
};

class EnvelopeError : public DataError {
public:
    EnvelopeError(EnvelopeErrorKind kind, const std::string& what) : DataError(what), kind_(kind) {}
    EnvelopeErrorKind kind() const noexcept { return kind_; }

private:
    EnvelopeErrorKind kind_;
};

std::string_view to_string(EnvelopeErrorKind k) noexcept;

/// Encoded size in bytes. Does not depend on n.
std::size_t envelope_size(std::size_t p, std::size_t site_id_bytes) noexcept;

/// Smallest byte count any envelope can have (p = 0, empty id).
inline constexpr std::size_t kEnvelopeMinSize = 4 + 2 + 2 + 1 + 8 + 4 + 8 + 4;

std::vector<std::uint8_t> encode_summary(const LocalSummary& s);

/// Checks the CRC before interpreting any field, then magic, version and
/// layout, and finally runs validate() on the result.
LocalSummary decode_summary(std::span<const std::uint8_t> bytes);

/// key=value description of an envelope for human inspection.
std::string sidecar_text(const LocalSummary& s, std::span<const std::uint8_t> bytes);

/// Writes `path` and a sidecar next to it (same name plus ".txt").
void write_envelope(const std::filesystem::path& path, const LocalSummary& s);
LocalSummary read_envelope(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

}  // namespace shir
