#include "mez/socket.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/uio.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <vector>

#include "mez/text.hpp"

namespace mez::net {

namespace {

Error sys_error(Errc code, const std::string& what)
{
    return make_error(code, what + ": " + std::strerror(errno));
}

Result<sockaddr_in> resolve(const Address& a)
{
    sockaddr_in sa{};
    sa.sin_family = AF_INET;
    sa.sin_port = htons(a.port);
    if (a.host.empty() || a.host == "*" || a.host == "0.0.0.0") {
        sa.sin_addr.s_addr = htonl(INADDR_ANY);
        return sa;
    }
    if (inet_pton(AF_INET, a.host.c_str(), &sa.sin_addr) == 1)
        return sa;
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (getaddrinfo(a.host.c_str(), nullptr, &hints, &res) != 0 || !res)
        return make_error(Errc::invalid_argument, "cannot resolve " + a.host);
    sa.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
    freeaddrinfo(res);
    return sa;
}

void tune(int fd)
{
    int one = 1;
    setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    // Whole frames fit in the socket buffers, so a send rarely waits on the peer.
    int buf = 4 << 20;
    setsockopt(fd, SOL_SOCKET, SO_SNDBUF, &buf, sizeof buf);
    setsockopt(fd, SOL_SOCKET, SO_RCVBUF, &buf, sizeof buf);
}

}  // namespace

Result<Address> Address::parse(std::string_view text_in)
{
    const std::size_t colon = text_in.rfind(':');
    if (colon == std::string_view::npos)
        return make_error(Errc::invalid_argument, "address must be host:port: " + std::string(text_in));
    const auto port = text::to_int(text_in.substr(colon + 1));
    if (!port || *port < 0 || *port > 65535)
        return make_error(Errc::invalid_argument, "bad port in " + std::string(text_in));
    return Address{std::string(text_in.substr(0, colon)), static_cast<std::uint16_t>(*port)};
}

std::string Address::str() const
{
    return (host.empty() ? std::string("0.0.0.0") : host) + ":" + std::to_string(port);
}

Socket& Socket::operator=(Socket&& o) noexcept
{
    if (this != &o) {
        close();
        fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
}

Socket::~Socket() { close(); }

void Socket::shutdown()
{
    if (fd_ >= 0)
        ::shutdown(fd_, SHUT_RDWR);
}

void Socket::close()
{
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

Result<Listener> listen_tcp(const Address& addr, int backlog)
{
    auto sa = resolve(addr);
    if (!sa)
        return sa.error();
    Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
    if (!s.valid())
        return sys_error(Errc::io_error, "socket");
    int one = 1;
    setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(s.fd(), reinterpret_cast<sockaddr*>(&*sa), sizeof(sockaddr_in)) != 0)
        return sys_error(Errc::io_error, "bind " + addr.str());
    if (::listen(s.fd(), backlog) != 0)
        return sys_error(Errc::io_error, "listen");
    sockaddr_in bound{};
    socklen_t len = sizeof bound;
    getsockname(s.fd(), reinterpret_cast<sockaddr*>(&bound), &len);
    return Listener{std::move(s), ntohs(bound.sin_port)};
}

Result<Socket> connect_tcp(const Address& addr, std::chrono::milliseconds timeout)
{
    Address target = addr;
    if (target.host.empty() || target.host == "*" || target.host == "0.0.0.0")
        target.host = "127.0.0.1";
    auto sa = resolve(target);
    if (!sa)
        return sa.error();
    Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC | SOCK_NONBLOCK, 0));
    if (!s.valid())
        return sys_error(Errc::io_error, "socket");
    if (::connect(s.fd(), reinterpret_cast<sockaddr*>(&*sa), sizeof(sockaddr_in)) != 0) {
        if (errno != EINPROGRESS)
            return sys_error(Errc::broker_unavailable, "connect " + target.str());
        pollfd p{s.fd(), POLLOUT, 0};
        const int rc = ::poll(&p, 1, static_cast<int>(timeout.count()));
        if (rc <= 0)
            return make_error(Errc::broker_unavailable, "connect " + target.str() + " timed out");
        int err = 0;
        socklen_t len = sizeof err;
        getsockopt(s.fd(), SOL_SOCKET, SO_ERROR, &err, &len);
        if (err != 0) {
            errno = err;
            return sys_error(Errc::broker_unavailable, "connect " + target.str());
        }
    }
    const int flags = fcntl(s.fd(), F_GETFL, 0);
    fcntl(s.fd(), F_SETFL, flags & ~O_NONBLOCK);
    tune(s.fd());
    return s;
}

Result<Socket> accept_tcp(const Socket& listener)
{
    for (;;) {
        const int fd = ::accept4(listener.fd(), nullptr, nullptr, SOCK_CLOEXEC);
        if (fd >= 0) {
            tune(fd);
            return Socket(fd);
        }
        if (errno == EINTR || errno == ECONNABORTED)
            continue;
        return sys_error(Errc::io_error, "accept");
    }
}

Result<bool> wait_readable(int fd, std::chrono::milliseconds timeout)
{
    pollfd p{fd, POLLIN, 0};
    for (;;) {
        const int rc = ::poll(&p, 1, static_cast<int>(timeout.count()));
        if (rc > 0)
            return true;
        if (rc == 0)
            return false;
        if (errno != EINTR)
            return sys_error(Errc::io_error, "poll");
    }
}

Status send_all(int fd, std::span<const std::uint8_t> data)
{
    const std::span<const std::uint8_t> parts[] = {data};
    return send_parts(fd, parts);
}

Status send_parts(int fd, std::span<const std::span<const std::uint8_t>> parts)
{
    std::vector<iovec> iov;
    iov.reserve(parts.size());
    for (const auto& p : parts)
        if (!p.empty())
            iov.push_back({const_cast<std::uint8_t*>(p.data()), p.size()});
    std::size_t first = 0;
    while (first < iov.size()) {
        msghdr msg{};
        msg.msg_iov = &iov[first];
        msg.msg_iovlen = iov.size() - first;
        const ssize_t n = ::sendmsg(fd, &msg, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR)
                continue;
            return sys_error(Errc::broker_unavailable, "send");
        }
        std::size_t left = static_cast<std::size_t>(n);
        while (first < iov.size() && left >= iov[first].iov_len) {
            left -= iov[first].iov_len;
            ++first;
        }
        if (first < iov.size()) {
            iov[first].iov_base = static_cast<std::uint8_t*>(iov[first].iov_base) + left;
            iov[first].iov_len -= left;
        }
    }
    return {};
}

Status recv_exact(int fd, std::span<std::uint8_t> out)
{
    std::size_t got = 0;
    while (got < out.size()) {
        const ssize_t n = ::recv(fd, out.data() + got, out.size() - got, 0);
        if (n == 0)
            return make_error(Errc::broker_unavailable, "connection closed");
        if (n < 0) {
            if (errno == EINTR)
                continue;
            return sys_error(Errc::broker_unavailable, "recv");
        }
        got += static_cast<std::size_t>(n);
    }
    return {};
}

}  // namespace mez::net
