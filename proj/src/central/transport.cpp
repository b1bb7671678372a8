#include "shir/transport.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <chrono>
#include <cstring>
#include <fstream>
#include <future>
#include <set>
#include <sstream>
#include <thread>

#include "shir/envelope.hpp"
#include "shir/tuning.hpp"

namespace shir {

namespace {

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<double> parse_list(const std::string& v) {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        std::size_t used = 0;
        double x = 0.0;
        try {
            x = std::stod(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != item.size()) throw DataError("bad number '" + item + "' in list");
        out.push_back(x);
    }
    return out;
}

std::string join(const std::vector<double>& v) {
    std::ostringstream out;
    out.precision(17);
    for (std::size_t i = 0; i < v.size(); ++i) out << (i ? "," : "") << v[i];
    return out.str();
}

std::string sys_error(const char* what) { return std::string(what) + ": " + std::strerror(errno); }

bool write_all(int fd, const std::uint8_t* p, std::size_t n) {
    while (n > 0) {
        const ssize_t k = ::send(fd, p, n, MSG_NOSIGNAL);
        if (k < 0) {
            if (errno == EINTR) continue;
            return false;
        }
        p += k;
        n -= static_cast<std::size_t>(k);
    }
    return true;
}

// Returns bytes read; stops early on EOF or timeout.
std::size_t read_all(int fd, std::uint8_t* p, std::size_t n, int timeout_ms) {
    std::size_t got = 0;
    while (got < n) {
        pollfd pfd{fd, POLLIN, 0};
        const int r = ::poll(&pfd, 1, timeout_ms);
        if (r < 0 && errno == EINTR) continue;
        if (r <= 0) break;
        const ssize_t k = ::recv(fd, p + got, n - got, 0);
        if (k < 0 && errno == EINTR) continue;
        if (k <= 0) break;
        got += static_cast<std::size_t>(k);
    }
    return got;
}

struct Fd {
    int fd = -1;
    ~Fd() {
        if (fd >= 0) ::close(fd);
    }
};

}  // namespace

RunManifest parse_manifest(const std::string& text) {
    RunManifest m;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw DataError("manifest line " + std::to_string(lineno) + ": expected key=value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key == "site") {
            m.sites.push_back(value);
        } else if (key == "schedule") {
            const auto s = parse_schedule(value);
            if (!s) throw DataError("manifest: unknown schedule '" + value + "'");
            m.schedule = *s;
        } else if (key == "lambda_grid") {
            m.lambda_grid = parse_list(value);
        } else if (key == "lambda_g_grid") {
            m.lambda_g_grid = parse_list(value);
        } else if (key == "seed") {
            const auto r = std::from_chars(value.data(), value.data() + value.size(), m.seed);
            if (r.ec != std::errc() || r.ptr != value.data() + value.size())
                throw DataError("manifest: bad seed '" + value + "'");
        } else if (key == "out_dir") {
            m.out_dir = value;
        } else {
            throw DataError("manifest line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        }
    }
    return m;
}

RunManifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open manifest '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_manifest(ss.str());
}

std::string format_manifest(const RunManifest& m) {
    std::ostringstream out;
    for (const auto& s : m.sites) out << "site=" << s << "\n";
    out << "schedule=" << to_string(m.schedule) << "\n";
    if (!m.lambda_grid.empty()) out << "lambda_grid=" << join(m.lambda_grid) << "\n";
    if (!m.lambda_g_grid.empty()) out << "lambda_g_grid=" << join(m.lambda_g_grid) << "\n";
    out << "seed=" << m.seed << "\n";
    out << "out_dir=" << m.out_dir << "\n";
    return out.str();
}

std::optional<Endpoint> parse_endpoint(const std::string& s) {
    const auto colon = s.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == s.size()) return std::nullopt;
    unsigned port = 0;
    const char* b = s.data() + colon + 1;
    const char* e = s.data() + s.size();
    const auto r = std::from_chars(b, e, port);
    if (r.ec != std::errc() || r.ptr != e || port == 0 || port > 65535) return std::nullopt;
    return Endpoint{s.substr(0, colon), static_cast<std::uint16_t>(port)};
}

std::vector<std::uint8_t> fetch_frame(const Endpoint& ep, const FetchOptions& opts) {
    const std::string name = ep.host + ":" + std::to_string(ep.port);
    std::string last = "no attempt made";
    for (int attempt = 0; attempt < std::max(1, opts.attempts); ++attempt) {
        if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(opts.retry_delay_ms));
        addrinfo hints{};
        hints.ai_family = AF_UNSPEC;
        hints.ai_socktype = SOCK_STREAM;
        addrinfo* res = nullptr;
        const int rc = ::getaddrinfo(ep.host.c_str(), std::to_string(ep.port).c_str(), &hints, &res);
        if (rc != 0) {
            last = std::string("cannot resolve host: ") + ::gai_strerror(rc);
            continue;
        }
        Fd sock;
        bool connected = false;
        for (addrinfo* a = res; a && !connected; a = a->ai_next) {
            sock.fd = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
            if (sock.fd < 0) continue;
            if (::connect(sock.fd, a->ai_addr, a->ai_addrlen) == 0) {
                connected = true;
            } else {
                last = sys_error("connect");
                ::close(sock.fd);
                sock.fd = -1;
            }
        }
        ::freeaddrinfo(res);
        if (!connected) continue;

        std::uint8_t head[4];
        if (read_all(sock.fd, head, 4, opts.timeout_ms) != 4) {
            last = "connection closed before the frame header";
            continue;
        }
        const std::uint32_t len = static_cast<std::uint32_t>(head[0]) | (static_cast<std::uint32_t>(head[1]) << 8) |
                                  (static_cast<std::uint32_t>(head[2]) << 16) |
                                  (static_cast<std::uint32_t>(head[3]) << 24);
        std::vector<std::uint8_t> body(len);
        const std::size_t got = read_all(sock.fd, body.data(), len, opts.timeout_ms);
        if (got != len)
            // A short frame is a defect of the payload, not of reachability.
            throw EnvelopeError(EnvelopeErrorKind::truncated,
                                name + ": frame truncated, " + std::to_string(got) + " of " +
                                    std::to_string(len) + " bytes");
        return body;
    }
    throw TransportError(name, "unreachable after " + std::to_string(std::max(1, opts.attempts)) +
                                   " attempts (" + last + ")");
}

EnvelopeServer::EnvelopeServer(std::vector<std::uint8_t> envelope, const std::string& host,
                               std::uint16_t port) {
    if (envelope.size() > std::numeric_limits<std::uint32_t>::max())
        throw EnvelopeError(EnvelopeErrorKind::too_large, "envelope exceeds the frame size limit");
    const auto len = static_cast<std::uint32_t>(envelope.size());
    frame_.resize(4 + envelope.size());
    for (int i = 0; i < 4; ++i) frame_[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(len >> (8 * i));
    std::copy(envelope.begin(), envelope.end(), frame_.begin() + 4);

    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) throw TransportError(host, sys_error("socket"));
    const int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
        ::close(fd_);
        throw TransportError(host, "listen address must be a dotted IPv4 address");
    }
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(fd_, 16) != 0) {
        const auto msg = sys_error("bind");
        ::close(fd_);
        throw TransportError(host + ":" + std::to_string(port), msg);
    }
    socklen_t sl = sizeof addr;
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &sl);
    port_ = ntohs(addr.sin_port);
}

EnvelopeServer::~EnvelopeServer() {
    if (fd_ >= 0) ::close(fd_);
}

void EnvelopeServer::stop() noexcept { stopping_ = true; }

void EnvelopeServer::serve(std::size_t connections) {
    std::size_t served = 0;
    while (!stopping_ && (connections == 0 || served < connections)) {
        pollfd pfd{fd_, POLLIN, 0};
        const int r = ::poll(&pfd, 1, 100);
        if (r <= 0) continue;
        Fd client{::accept(fd_, nullptr, nullptr)};
        if (client.fd < 0) continue;
        write_all(client.fd, frame_.data(), frame_.size());
        ::shutdown(client.fd, SHUT_WR);
        ++served;
    }
}

LocalSummary fetch_summary(const std::string& source, const FetchOptions& opts) {
    std::error_code ec;
    if (std::filesystem::exists(source, ec)) return read_envelope(source);
    if (const auto ep = parse_endpoint(source)) {
        const auto bytes = fetch_frame(*ep, opts);
        try {
            return decode_summary(bytes);
        } catch (const EnvelopeError& e) {
            throw EnvelopeError(e.kind(), source + ": " + e.what());
        }
    }
    throw TransportError(source, "no such file and not a host:port endpoint");
}

std::vector<LocalSummary> collect(const RunManifest& manifest, const FetchOptions& opts) {
    if (manifest.sites.empty()) throw DataError("manifest lists no sites");
    std::vector<std::future<LocalSummary>> pending;
    pending.reserve(manifest.sites.size());
    for (const auto& src : manifest.sites)
        pending.push_back(std::async(std::launch::async, [&src, &opts] { return fetch_summary(src, opts); }));

    std::vector<LocalSummary> out;
    out.reserve(pending.size());
    std::exception_ptr first_error;
    for (auto& f : pending) {
        try {
            out.push_back(f.get());
        } catch (...) {
            if (!first_error) first_error = std::current_exception();
        }
    }
    if (first_error) std::rethrow_exception(first_error);

    std::set<std::string> seen;
    for (std::size_t i = 0; i < out.size(); ++i)
        if (!seen.insert(out[i].site_id).second)
            throw DataError("duplicate site id '" + out[i].site_id + "' (source " +
                            manifest.sites[i] + ")");
    check_compatible(out);
    return out;
}

}  // namespace shir
