#pragma once

#include <atomic>
#include <cstdint>
#include <thread>
#include <vector>

#include "rwdecoy/attacker/channel.hpp"

namespace rwdecoy::attacker {

// Wire format: u32 little-endian length, then u8 sample-id length, sample
// id, 16-byte victim id, 32-byte key, f64 little-endian timestamp.
Bytes encode_frame(const Registration& reg);
// Decodes one frame body (without the length prefix).
std::optional<Registration> decode_frame_body(std::span<const std::uint8_t> body);

// TCP listener on 127.0.0.1 forwarding decoded registrations to a channel.
class LoopbackServer {
 public:
  explicit LoopbackServer(RegistrationChannel& sink);
  ~LoopbackServer();
  LoopbackServer(const LoopbackServer&) = delete;
  LoopbackServer& operator=(const LoopbackServer&) = delete;

  std::uint16_t port() const { return port_; }
  std::uint64_t rejected() const { return rejected_.load(); }
  // Stops accepting and waits for open connections to drain.
  void stop();

 private:
  void serve(int fd);

  RegistrationChannel& sink_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::atomic<std::uint64_t> rejected_{0};
  std::thread acceptor_;
  std::vector<std::thread> workers_;
};

class LoopbackClient {
 public:
  explicit LoopbackClient(std::uint16_t port);
  ~LoopbackClient();
  LoopbackClient(const LoopbackClient&) = delete;
  LoopbackClient& operator=(const LoopbackClient&) = delete;

  void send(const Registration& reg);
  void send_raw(std::span<const std::uint8_t> bytes);

 private:
  int fd_ = -1;
};

}  // namespace rwdecoy::attacker
