#pragma once

// Moving envelopes from sites to the aggregator: files, or a one-frame TCP
// exchange (u32 little-endian length, then the envelope bytes, then close).

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "shir/aggregator.hpp"
#include "shir/errors.hpp"

namespace shir {

/// A site could not be reached or returned an unusable payload.
class TransportError : public Error {
public:
    TransportError(std::string source, const std::string& what)
        : Error(source + ": " + what), source_(std::move(source)) {}
    const std::string& source() const noexcept { return source_; }

private:
    std::string source_;
};

struct RunManifest {
    std::vector<std::string> sites;  // file paths or host:port
    GammaSchedule schedule = GammaSchedule::bic;
    std::vector<double> lambda_grid;    // empty means the default grid
    std::vector<double> lambda_g_grid;  // empty means the default grid
    std::uint64_t seed = 0;
    std::string out_dir = ".";
};

/// Text format, one key=value per line; `site` may repeat, grids are
/// comma-separated. Lines starting with '#' are ignored.
RunManifest parse_manifest(const std::string& text);
RunManifest read_manifest(const std::filesystem::path& path);
std::string format_manifest(const RunManifest& m);

struct Endpoint {
    std::string host;
    std::uint16_t port = 0;
};

/// "host:port" with a numeric port, or nullopt.
std::optional<Endpoint> parse_endpoint(const std::string& s);

struct FetchOptions {
    int attempts = 3;
    int retry_delay_ms = 200;
    int timeout_ms = 10000;
};

/// One connection, one frame.
std::vector<std::uint8_t> fetch_frame(const Endpoint& ep, const FetchOptions& opts = {});

/// Listens on host:port (port 0 picks a free one) and answers each
/// connection with the same envelope frame.
class EnvelopeServer {
public:
    EnvelopeServer(std::vector<std::uint8_t> envelope, const std::string& host = "127.0.0.1",
                   std::uint16_t port = 0);
    ~EnvelopeServer();
    EnvelopeServer(const EnvelopeServer&) = delete;
    EnvelopeServer& operator=(const EnvelopeServer&) = delete;

    std::uint16_t port() const noexcept { return port_; }
    /// Serves until `connections` have been answered (0 = until stop()).
    void serve(std::size_t connections = 0);
    void stop() noexcept;

private:
    std::vector<std::uint8_t> frame_;
    int fd_ = -1;
    std::uint16_t port_ = 0;
    std::atomic<bool> stopping_{false};
};

/// Fetches every site concurrently (with retries), decodes, and checks that
/// ids are unique and that p and family agree. Any failing site aborts the
/// whole collection with an error naming it. Output follows manifest order.
std::vector<LocalSummary> collect(const RunManifest& manifest, const FetchOptions& opts = {});

LocalSummary fetch_summary(const std::string& source, const FetchOptions& opts = {});

}  // namespace shir
