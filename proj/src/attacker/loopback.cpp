#include "rwdecoy/attacker/loopback.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <bit>
#include <cerrno>
#include <cstring>

namespace rwdecoy::attacker {

namespace {

void put_u32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

bool read_exact(int fd, std::uint8_t* buf, std::size_t n) {
  while (n > 0) {
    const ssize_t got = ::recv(fd, buf, n, 0);
    if (got <= 0) {
      if (got < 0 && errno == EINTR) continue;
      return false;
    }
    buf += got;
    n -= static_cast<std::size_t>(got);
  }
  return true;
}

void write_all(int fd, std::span<const std::uint8_t> data) {
  std::size_t off = 0;
  while (off < data.size()) {
    const ssize_t put = ::send(fd, data.data() + off, data.size() - off, MSG_NOSIGNAL);
    if (put < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::io, std::string("send: ") + std::strerror(errno));
    }
    off += static_cast<std::size_t>(put);
  }
}

constexpr std::uint32_t kMaxFrame = 1 + 255 + 16 + 32 + 8;

}  // namespace

Bytes encode_frame(const Registration& reg) {
  if (reg.sample_id.size() > 255) throw Error(ErrorCode::format, "sample id longer than 255 bytes");
  Bytes body;
  body.push_back(static_cast<std::uint8_t>(reg.sample_id.size()));
  body.insert(body.end(), reg.sample_id.begin(), reg.sample_id.end());
  body.insert(body.end(), reg.victim_id.begin(), reg.victim_id.end());
  body.insert(body.end(), reg.key.begin(), reg.key.end());
  const auto t = std::bit_cast<std::uint64_t>(reg.sim_timestamp);
  for (int i = 0; i < 8; ++i) body.push_back(static_cast<std::uint8_t>(t >> (8 * i)));
  Bytes frame;
  put_u32(frame, static_cast<std::uint32_t>(body.size()));
  frame.insert(frame.end(), body.begin(), body.end());
  return frame;
}

std::optional<Registration> decode_frame_body(std::span<const std::uint8_t> body) {
  if (body.empty()) return std::nullopt;
  const std::size_t n = body[0];
  if (body.size() != 1 + n + 16 + 32 + 8) return std::nullopt;
  std::string sample(body.begin() + 1, body.begin() + 1 + static_cast<std::ptrdiff_t>(n));
  const auto vid = body.subspan(1 + n, 16);
  const auto key = body.subspan(1 + n + 16, 32);
  std::uint64_t t = 0;
  for (int i = 0; i < 8; ++i) t |= static_cast<std::uint64_t>(body[1 + n + 48 + i]) << (8 * i);
  return make_registration(std::move(sample), vid, key, std::bit_cast<double>(t));
}

LoopbackServer::LoopbackServer(RegistrationChannel& sink) : sink_(sink) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw Error(ErrorCode::io, std::string("socket: ") + std::strerror(errno));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = 0;
  socklen_t len = sizeof addr;
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(listen_fd_, 64) != 0 ||
      ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len) != 0) {
    const std::string why = std::strerror(errno);
    ::close(listen_fd_);
    throw Error(ErrorCode::io, "loopback listen: " + why);
  }
  port_ = ntohs(addr.sin_port);
  ::fcntl(listen_fd_, F_SETFL, ::fcntl(listen_fd_, F_GETFL) | O_NONBLOCK);
  acceptor_ = std::thread([this] {
    // Connections already queued when stop() is called are still served.
    for (;;) {
      const bool last_pass = stopping_;
      for (;;) {
        const int fd = ::accept(listen_fd_, nullptr, nullptr);
        if (fd < 0) break;
        ::fcntl(fd, F_SETFL, ::fcntl(fd, F_GETFL) & ~O_NONBLOCK);
        workers_.emplace_back([this, fd] { serve(fd); });
      }
      if (last_pass) break;
      pollfd pfd{listen_fd_, POLLIN, 0};
      ::poll(&pfd, 1, 50);
    }
  });
}

LoopbackServer::~LoopbackServer() { stop(); }

void LoopbackServer::serve(int fd) {
  std::vector<Registration> batch;
  Bytes body;
  for (;;) {
    std::uint8_t len_bytes[4];
    if (!read_exact(fd, len_bytes, 4)) break;
    const std::uint32_t len = static_cast<std::uint32_t>(len_bytes[0]) | (static_cast<std::uint32_t>(len_bytes[1]) << 8) |
                              (static_cast<std::uint32_t>(len_bytes[2]) << 16) |
                              (static_cast<std::uint32_t>(len_bytes[3]) << 24);
    if (len == 0 || len > kMaxFrame) {
      ++rejected_;
      break;  // framing is lost; drop the connection
    }
    body.resize(len);
    if (!read_exact(fd, body.data(), len)) break;
    if (auto reg = decode_frame_body(body)) {
      batch.push_back(std::move(*reg));
      if (batch.size() >= 256) sink_.push(std::exchange(batch, {}));
    } else {
      ++rejected_;
    }
  }
  sink_.push(std::move(batch));
  ::close(fd);
}

void LoopbackServer::stop() {
  if (stopping_.exchange(true)) return;
  if (acceptor_.joinable()) acceptor_.join();
  ::close(listen_fd_);
  for (auto& w : workers_)
    if (w.joinable()) w.join();
}

LoopbackClient::LoopbackClient(std::uint16_t port) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw Error(ErrorCode::io, std::string("socket: ") + std::strerror(errno));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(port);
  if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    const std::string why = std::strerror(errno);
    ::close(fd_);
    throw Error(ErrorCode::io, "connect: " + why);
  }
}

LoopbackClient::~LoopbackClient() {
  if (fd_ >= 0) ::close(fd_);
}

void LoopbackClient::send(const Registration& reg) { write_all(fd_, encode_frame(reg)); }

void LoopbackClient::send_raw(std::span<const std::uint8_t> bytes) { write_all(fd_, bytes); }

}  // namespace rwdecoy::attacker
