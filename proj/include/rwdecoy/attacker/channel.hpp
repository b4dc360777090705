#pragma once

#include <condition_variable>
#include <deque>
#include <mutex>
#include <thread>
#include <vector>

#include "rwdecoy/attacker/db.hpp"

namespace rwdecoy::attacker {

// Many producers, one consumer. Producers hand over whole batches to keep
// lock traffic proportional to batches rather than registrations.
class RegistrationChannel {
 public:
  void push(std::vector<Registration> batch);
  // Blocks until a batch is available; false once closed and drained.
  bool pop(std::vector<Registration>& out);
  void close();

 private:
  std::mutex mutex_;
  std::condition_variable ready_;
  std::deque<std::vector<Registration>> queue_;
  bool closed_ = false;
};

// C&C backend: drains the channel into the database on its own thread.
class AttackerServer {
 public:
  explicit AttackerServer(AttackerDb db);
  ~AttackerServer();
  AttackerServer(const AttackerServer&) = delete;
  AttackerServer& operator=(const AttackerServer&) = delete;

  RegistrationChannel& channel() { return channel_; }
  void submit(std::vector<Registration> batch) { channel_.push(std::move(batch)); }
  // Closes the channel, waits for the consumer and returns the database.
  AttackerDb finish();

 private:
  RegistrationChannel channel_;
  AttackerDb db_;
  std::thread consumer_;
};

}  // namespace rwdecoy::attacker
