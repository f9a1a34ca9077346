#pragma once

#include <chrono>
#include <cstdint>
#include <span>
#include <string>
#include <utility>

#include "mez/status.hpp"

namespace mez::net {

/// "host:port"; host may be empty or "*" for any address.
struct Address {
    std::string host;
    std::uint16_t port = 0;

    static Result<Address> parse(std::string_view text);
    std::string str() const;
};

/// Owning socket descriptor.
class Socket {
public:
    Socket() = default;
    explicit Socket(int fd) : fd_(fd) {}
    Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
    Socket& operator=(Socket&& o) noexcept;
    ~Socket();

    int fd() const { return fd_; }
    bool valid() const { return fd_ >= 0; }
    /// Unblocks readers and writers on other threads; the descriptor stays owned.
    void shutdown();
    void close();

private:
    int fd_ = -1;
};

struct Listener {
    Socket sock;
    std::uint16_t port = 0;
};

Result<Listener> listen_tcp(const Address& addr, int backlog = 64);
/// Errc::broker_unavailable when nothing accepts within the timeout.
Result<Socket> connect_tcp(const Address& addr, std::chrono::milliseconds timeout);
/// Blocks until a connection arrives or the listener is shut down.
Result<Socket> accept_tcp(const Socket& listener);

/// Waits for readability. false on timeout.
Result<bool> wait_readable(int fd, std::chrono::milliseconds timeout);

Status send_all(int fd, std::span<const std::uint8_t> data);
/// Gathers several buffers into one send.
Status send_parts(int fd, std::span<const std::span<const std::uint8_t>> parts);
/// Errc::broker_unavailable on EOF or reset.
Status recv_exact(int fd, std::span<std::uint8_t> out);

}  // namespace mez::net
